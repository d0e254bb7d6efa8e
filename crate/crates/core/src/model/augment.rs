//! Training-time image augmentation on channel-major tensors.

use rand::Rng;

use crate::data::{AugmentKind, ImageShape};

const CIFAR_PADDING: usize = 4;

pub fn flip_horizontal(img: &[f64], shape: &ImageShape) -> Vec<f64> {
    let mut out = img.to_vec();
    for row in out.chunks_exact_mut(shape.width) {
        row.reverse();
    }
    out
}

/// Random crop back to the input's native size (after zero padding for
/// CIFAR) followed by a horizontal flip with probability 1/2. The output
/// always has the input's shape.
pub fn augment<R: Rng>(img: &[f64], shape: &ImageShape, kind: AugmentKind, rng: &mut R) -> Vec<f64> {
    let pad = match kind {
        AugmentKind::Cifar => CIFAR_PADDING,
        AugmentKind::FashionMnist => 0,
    };
    let (h, w) = (shape.height, shape.width);
    let dy = rng.random_range(0..=2 * pad);
    let dx = rng.random_range(0..=2 * pad);
    let flip = rng.random::<bool>();
    let mut out = vec![0.0; img.len()];
    for c in 0..shape.channels {
        let plane = &img[c * h * w..(c + 1) * h * w];
        let dst = &mut out[c * h * w..(c + 1) * h * w];
        for y in 0..h {
            // Row y of the crop is row y + dy - pad of the source.
            let sy = y + dy;
            if sy < pad || sy - pad >= h {
                continue;
            }
            for x in 0..w {
                let sx = x + dx;
                if sx < pad || sx - pad >= w {
                    continue;
                }
                let tx = if flip { w - 1 - x } else { x };
                dst[y * w + tx] = plane[(sy - pad) * w + (sx - pad)];
            }
        }
    }
    out
}
