use rand::seq::SliceRandom;
use rand::Rng;

use super::{BiasConfig, Class, DataError, Example, Group, GroupConvention, NormalizationStats, RawDataset, STD_FLOOR};
use crate::rng::substream;

/// Mapping from original class id to binary class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryLabelMap(pub Vec<Class>);

impl BinaryLabelMap {
    /// Random half/half split of `class_count` classes.
    pub fn random(class_count: u32, seed: u64) -> Result<Self, DataError> {
        if class_count == 0 || !class_count.is_multiple_of(2) {
            return Err(DataError::config(
                "class_count",
                format!("must be even and positive to split classes in half, got {class_count}"),
            ));
        }
        let mut ids: Vec<u32> = (0..class_count).collect();
        ids.shuffle(&mut substream("binarize", seed));
        let mut map = vec![Class::Negative; class_count as usize];
        for &id in &ids[..class_count as usize / 2] {
            map[id as usize] = Class::Positive;
        }
        Ok(BinaryLabelMap(map))
    }

    pub fn class_of(&self, original: u16) -> Class {
        self.0[original as usize]
    }

    pub fn positives(&self) -> usize {
        self.0.iter().filter(|c| **c == Class::Positive).count()
    }
}

pub fn binarize_labels(raw: &RawDataset, seed: u64) -> Result<BinaryLabelMap, DataError> {
    BinaryLabelMap::random(raw.class_count, seed)
}

/// Group for one example given a uniform draw `u` in `[0, 1)`.
pub fn draw_group(class: Class, bias: &BiasConfig, u: f64) -> Group {
    let eps = bias.epsilon;
    match (bias.convention, class) {
        // Inverted images form group b.
        (GroupConvention::Inversion, Class::Positive) => {
            if u < 0.5 - eps {
                Group::B
            } else {
                Group::A
            }
        }
        (GroupConvention::Inversion, Class::Negative) => {
            if u < 0.5 + eps {
                Group::B
            } else {
                Group::A
            }
        }
        (GroupConvention::Mixing, Class::Positive) => {
            if u < 0.5 + eps {
                Group::A
            } else {
                Group::B
            }
        }
        (GroupConvention::Mixing, Class::Negative) => {
            if u < 0.5 + eps {
                Group::B
            } else {
                Group::A
            }
        }
    }
}

/// Draws one group per class label, independently, from the substream
/// `("assign_groups", seed)`.
pub fn assign_groups(classes: &[Class], bias: &BiasConfig, seed: u64) -> Result<Vec<Group>, DataError> {
    bias.validate()?;
    let mut rng = substream("assign_groups", seed);
    Ok(classes.iter().map(|&c| draw_group(c, bias, rng.random::<f64>())).collect())
}

pub fn invert_image(img: &[u8]) -> Vec<u8> {
    img.iter().map(|v| 255 - v).collect()
}

/// `eta * group + (1 - eta) * class`, evaluated as
/// `class + eta * (group - class)` so both endpoints are exact.
pub fn mix_images(class_img: &[u8], group_img: &[u8], eta: f64) -> Result<Vec<f64>, DataError> {
    if class_img.len() != group_img.len() {
        return Err(DataError::Shape(format!(
            "class image has {} values, group image has {}",
            class_img.len(),
            group_img.len()
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(DataError::config("eta", format!("must lie in [0, 1], got {eta}")));
    }
    Ok(class_img.iter().zip(group_img).map(|(&c, &g)| f64::from(c) + eta * (f64::from(g) - f64::from(c))).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subsample {
    pub examples: Vec<Example>,
    /// One message per nonempty cell that rounded down to zero examples.
    pub warnings: Vec<String>,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Keeps `round(p * n)` examples of every (class, group) cell, drawn
/// uniformly without replacement. Kept examples retain their input order.
pub fn stratified_subsample(examples: &[Example], p: f64, seed: u64) -> Result<Subsample, DataError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(DataError::config("train_fraction", format!("must lie in (0, 1], got {p}")));
    }
    let mut cells: [[Vec<usize>; 2]; 2] = Default::default();
    for (i, e) in examples.iter().enumerate() {
        cells[e.class.index()][e.group.index()].push(i);
    }
    let mut rng = substream("stratified_subsample", seed);
    let mut keep = Vec::new();
    let mut warnings = Vec::new();
    for class in Class::ALL {
        for group in Group::ALL {
            let cell = &mut cells[class.index()][group.index()];
            let k = round_half_up(p * cell.len() as f64).min(cell.len());
            if k == 0 && !cell.is_empty() {
                warnings.push(format!(
                    "cell (class {}, group {}) with {} examples is empty after subsampling at p = {p}",
                    i8::from(class),
                    group.name(),
                    cell.len()
                ));
            }
            let (chosen, _) = cell.partial_shuffle(&mut rng, k);
            keep.extend_from_slice(chosen);
        }
    }
    keep.sort_unstable();
    Ok(Subsample { examples: keep.into_iter().map(|i| examples[i].clone()).collect(), warnings })
}

/// Per-channel mean and population standard deviation over every pixel of
/// the split, floored at [`STD_FLOOR`].
pub fn compute_normalization(raw: &RawDataset) -> Result<NormalizationStats, DataError> {
    if raw.is_empty() {
        return Err(DataError::Empty("normalization needs a nonempty train split".into()));
    }
    let plane = raw.shape.height * raw.shape.width;
    let channels = raw.shape.channels;
    let mut sum = vec![0u128; channels];
    let mut sum_sq = vec![0u128; channels];
    for i in 0..raw.len() {
        for (j, &v) in raw.image(i).iter().enumerate() {
            let c = j / plane;
            sum[c] += u128::from(v);
            sum_sq[c] += u128::from(v) * u128::from(v);
        }
    }
    let n = (raw.len() * plane) as u128;
    let mut mean = Vec::with_capacity(channels);
    let mut std = Vec::with_capacity(channels);
    for c in 0..channels {
        // n^2 * var = n * sum_sq - sum^2, exact in integers.
        let scaled_var = n * sum_sq[c] - sum[c] * sum[c];
        mean.push(sum[c] as f64 / n as f64);
        let var = scaled_var as f64 / (n as f64 * n as f64);
        std.push(var.sqrt().max(STD_FLOOR));
    }
    Ok(NormalizationStats { mean, std })
}
