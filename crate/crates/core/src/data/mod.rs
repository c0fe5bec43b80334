//! Vowel formant and MNIST loaders, normalization, and splits.

mod mnist;
mod vowels;

pub use mnist::{avg_pool_2x2, load_mnist_idx, pool_images, MnistSet, IMAGE_MAGIC, LABEL_MAGIC};
pub use vowels::{
    formant_matrix, load_vowels_csv, minmax_normalize, synth_vowels, vowel_classes, NormalizationStats, VowelRecord,
    FULL_DATASET_LEN, N_FORMANTS, SYNTH_DRIFT, SYNTH_MEANS, SYNTH_SPEAKER_SD, SYNTH_TOKEN_SD, VOWEL_LABELS,
};

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::Targets;
use crate::error::{check_len, PatError, Result};
use crate::train::Dataset;

/// Overrides the default `data` directory.
pub const DATA_DIR_ENV: &str = "PAT_DATA_DIR";

pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV).map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

pub fn vowel_csv_path(dir: &Path) -> PathBuf {
    dir.join("vowels.csv")
}

pub fn mnist_paths(dir: &Path) -> (PathBuf, PathBuf) {
    let m = dir.join("mnist");
    (m.join("subset-images-idx3-ubyte"), m.join("subset-labels-idx1-ubyte"))
}

/// Per-class shuffled split. Each class with at least two examples puts
/// `round(test_fraction·n)` of them (clamped to `1..n−1`) in the test set.
pub fn stratified_split(x: &Array2<f64>, labels: &[usize], test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    check_len("split labels", x.nrows(), labels.len())?;
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(PatError::Config(format!("test fraction {test_fraction} not in [0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for c in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n = idx.len();
        let k = if n < 2 {
            0
        } else {
            ((test_fraction * n as f64).round() as usize).clamp(usize::from(test_fraction > 0.0), n - 1)
        };
        test_idx.extend_from_slice(&idx[..k]);
        train_idx.extend_from_slice(&idx[k..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let make = |idx: &[usize]| Dataset::new(x.select(ndarray::Axis(0), idx), Targets::Classes(idx.iter().map(|&i| labels[i]).collect()));
    Ok((make(&train_idx)?, make(&test_idx)?))
}

/// Normalized vowel features and labels: the CSV in `dir` if present,
/// otherwise `synth_vowels(seed, 37)`.
pub fn vowel_features(dir: &Path, seed: u64) -> Result<(Array2<f64>, Vec<usize>, bool)> {
    let path = vowel_csv_path(dir);
    let (records, real) = if path.exists() {
        (load_vowels_csv(&path)?, true)
    } else {
        log::info!("{} not found, using synthetic vowels", path.display());
        (synth_vowels(seed, 37), false)
    };
    let (x, _) = minmax_normalize(&records)?;
    Ok((x, vowel_classes(&records)?, real))
}

/// 196-pixel MNIST features from the IDX subset in `dir`.
pub fn mnist_pooled(dir: &Path, limit: Option<usize>) -> Result<(Array2<f64>, Vec<usize>)> {
    let (img, lab) = mnist_paths(dir);
    let set = load_mnist_idx(&img, &lab, limit)?;
    Ok((pool_images(&set.images)?, set.labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_stratified() {
        let labels: Vec<usize> = (0..70).map(|i| i % 7).collect();
        let x = Array2::from_shape_fn((70, 2), |(i, j)| (i * 2 + j) as f64);
        let (tr, te) = stratified_split(&x, &labels, 0.2, 1).unwrap();
        assert_eq!(tr.len() + te.len(), 70);
        for c in 0..7 {
            assert_eq!(te.classes().unwrap().iter().filter(|&&k| k == c).count(), 2);
            assert!(tr.classes().unwrap().contains(&c));
        }
        let (tr2, _) = stratified_split(&x, &labels, 0.2, 1).unwrap();
        assert_eq!(tr, tr2);
    }
}
