//! Dataset construction for a trial: load or synthesize, binarize, assign
//! groups (inversion or mixing), subsample, attach normalization, and
//! optionally swap the class and group roles.

use rand::Rng;

use super::{DataSource, ExperimentError, TrialConfig};
use crate::data::{
    assign_groups, compute_normalization, ingest, ingest_idx, invert_image, mix_images, read_dataset, read_raw,
    stratified_subsample, synth_split, AugmentKind, BiasConfig, BinaryLabelMap, Class, Dataset, Example, Group,
    GroupConvention, ImageFormat, Layout, MixConfig, RawDataset, Split,
};
use crate::rng::{derive_seed, substream, substream_id, SubstreamId};

#[derive(Debug, Clone)]
pub struct BuiltData {
    pub train: Dataset,
    pub test: Dataset,
    pub warnings: Vec<String>,
    pub substreams: Vec<SubstreamId>,
}

struct Seeds {
    root: u64,
    used: Vec<SubstreamId>,
}

impl Seeds {
    fn new(root: u64) -> Self {
        Seeds { root, used: Vec::new() }
    }

    /// Seed for a named step, recording the substream it feeds.
    fn take(&mut self, step: &str, stream_label: &str) -> u64 {
        let seed = derive_seed(step, self.root, &[]);
        self.used.push(substream_id(stream_label, seed));
        seed
    }
}

fn split_seed_label(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

fn load_raw(source: &DataSource) -> Result<Option<(RawDataset, RawDataset, Option<AugmentKind>)>, ExperimentError> {
    Ok(match source {
        DataSource::Idx { train_images, train_labels, test_images, test_labels } => Some((
            ingest_idx(train_images, train_labels, Split::Train)?,
            ingest_idx(test_images, test_labels, Split::Test)?,
            Some(AugmentKind::FashionMnist),
        )),
        DataSource::Cifar10 { train, test } => Some((
            ingest(train, ImageFormat::Cifar10, Split::Train)?,
            ingest(test, ImageFormat::Cifar10, Split::Test)?,
            Some(AugmentKind::Cifar),
        )),
        DataSource::Cifar100 { train, test } => Some((
            ingest(train, ImageFormat::Cifar100, Split::Train)?,
            ingest(test, ImageFormat::Cifar100, Split::Test)?,
            Some(AugmentKind::Cifar),
        )),
        DataSource::RawCache { train, test, augment } => Some((read_raw(train)?, read_raw(test)?, *augment)),
        DataSource::Synthetic { .. } | DataSource::Prepared { .. } => None,
    })
}

fn inverted_split(
    raw: &RawDataset,
    map: &BinaryLabelMap,
    bias: &BiasConfig,
    seed: u64,
) -> Result<Vec<Example>, ExperimentError> {
    let classes: Vec<Class> = raw.labels.iter().map(|&l| map.class_of(l)).collect();
    let groups = assign_groups(&classes, bias, seed)?;
    Ok((0..raw.len())
        .map(|i| {
            let img = raw.image(i);
            let features = match groups[i] {
                Group::B => invert_image(img).into_iter().map(f64::from).collect(),
                Group::A => img.iter().map(|&v| f64::from(v)).collect(),
            };
            Example { features, class: classes[i], group: groups[i] }
        })
        .collect())
}

fn mixed_split(
    raw: &RawDataset,
    mix: &MixConfig,
    bias: &BiasConfig,
    seed: u64,
) -> Result<Vec<Example>, ExperimentError> {
    let pool = |id: u16| -> Vec<usize> { (0..raw.len()).filter(|&i| raw.labels[i] == id).collect() };
    let group_pools = [pool(mix.group_class_ids[0]), pool(mix.group_class_ids[1])];
    for (g, p) in Group::ALL.iter().zip(&group_pools) {
        if p.is_empty() {
            return Err(ExperimentError::config(
                "group_class_ids",
                format!("no {:?} images of class {} for group {}", raw.split, mix.group_class_ids[g.index()], g.name()),
            ));
        }
    }
    let class_images: Vec<(usize, Class)> = (0..raw.len())
        .filter_map(|i| match raw.labels[i] {
            l if l == mix.task_class_ids[0] => Some((i, Class::Positive)),
            l if l == mix.task_class_ids[1] => Some((i, Class::Negative)),
            _ => None,
        })
        .collect();
    let classes: Vec<Class> = class_images.iter().map(|(_, c)| *c).collect();
    let groups = assign_groups(&classes, bias, seed)?;
    let mut pick = substream("mix/pick", seed);
    class_images
        .iter()
        .zip(groups)
        .map(|(&(i, class), group)| {
            let pool = &group_pools[group.index()];
            let partner = pool[pick.random_range(0..pool.len())];
            let features = mix_images(raw.image(i), raw.image(partner), mix.eta)?;
            Ok(Example { features, class, group })
        })
        .collect()
}

pub fn build_datasets(cfg: &TrialConfig) -> Result<BuiltData, ExperimentError> {
    cfg.validate()?;
    let mut seeds = Seeds::new(cfg.seed);
    let mut warnings = Vec::new();
    let biases = [(Split::Train, cfg.bias), (Split::Test, cfg.test_bias())];

    let (mut train, mut test) = if let Some((raw_train, raw_test, augment)) = load_raw(&cfg.source)? {
        if raw_train.shape != raw_test.shape {
            return Err(crate::data::DataError::Shape("train and test images differ in shape".into()).into());
        }
        // Statistics of the original, untransformed training images.
        let stats = compute_normalization(&raw_train)?;
        let layout = Layout::Image { shape: raw_train.shape, augment };
        let mut splits = Vec::with_capacity(2);
        let map = match cfg.bias.convention {
            GroupConvention::Inversion => {
                Some(BinaryLabelMap::random(raw_train.class_count, seeds.take("binarize", "binarize"))?)
            }
            GroupConvention::Mixing => None,
        };
        for ((split, bias), raw) in biases.iter().zip([&raw_train, &raw_test]) {
            let seed = seeds.take(&format!("groups/{}", split_seed_label(*split)), "assign_groups");
            let examples = match (&map, &cfg.mix) {
                (Some(map), _) => inverted_split(raw, map, bias, seed)?,
                (None, Some(mix)) => {
                    seeds.used.push(substream_id("mix/pick", seed));
                    mixed_split(raw, mix, bias, seed)?
                }
                (None, None) => unreachable!("validated: mixing on images needs a mix block"),
            };
            splits.push(Dataset { split: *split, layout, examples, normalization: Some(stats.clone()) });
        }
        let test = splits.pop().expect("two splits");
        (splits.pop().expect("two splits"), test)
    } else {
        match &cfg.source {
            DataSource::Synthetic { synth } => {
                let mut out = Vec::with_capacity(2);
                for (split, bias) in biases {
                    let label = split_seed_label(split);
                    let seed = seeds.take(&format!("synth/{label}"), &format!("synth/{label}"));
                    let size = if split == Split::Train { synth.train_size } else { synth.test_size };
                    out.push(synth_split(synth, &bias, size, split, seed)?);
                }
                let test = out.pop().expect("two splits");
                (out.pop().expect("two splits"), test)
            }
            DataSource::Prepared { train, test } => {
                warnings.push("prepared datasets are used as stored; bias settings are not re-applied".into());
                (read_dataset(train)?, read_dataset(test)?)
            }
            _ => unreachable!("image sources handled above"),
        }
    };

    if cfg.train_fraction < 1.0 {
        let seed = seeds.take("subsample", "stratified_subsample");
        let sub = stratified_subsample(&train.examples, cfg.train_fraction, seed)?;
        warnings.extend(sub.warnings);
        train.examples = sub.examples;
    }
    if cfg.role_swap {
        train.swap_roles();
        test.swap_roles();
    }
    Ok(BuiltData { train, test, warnings, substreams: seeds.used })
}
