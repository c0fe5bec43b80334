use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PatError, Result};

pub const N_FORMANTS: usize = 12;

/// Vowel labels in class-index order.
pub const VOWEL_LABELS: [&str; 7] = ["ae", "ah", "aw", "er", "ih", "iy", "uw"];

/// Records in the full converted dataset (7 vowels × 37 speakers).
pub const FULL_DATASET_LEN: usize = 259;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VowelRecord {
    pub speaker: String,
    pub vowel: String,
    /// Hz.
    pub formants: [f64; N_FORMANTS],
}

impl VowelRecord {
    pub fn class(&self) -> Option<usize> {
        VOWEL_LABELS.iter().position(|v| *v == self.vowel)
    }
}

/// Reads `speaker,vowel,f1,...,f12`.
pub fn load_vowels_csv(path: &Path) -> Result<Vec<VowelRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| PatError::io(path, e))?;
    parse_vowels(&text, path)
}

pub(crate) fn parse_vowels(text: &str, path: &Path) -> Result<Vec<VowelRecord>> {
    let parse_err = |line: usize, message: String| PatError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        log::warn!("{} is empty", path.display());
        return Ok(Vec::new());
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let expected: Vec<String> = ["speaker".to_string(), "vowel".to_string()]
        .into_iter()
        .chain((1..=N_FORMANTS).map(|i| format!("f{i}")))
        .collect();
    if cols != expected {
        return Err(parse_err(1, format!("expected header {}", expected.join(","))));
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != N_FORMANTS + 2 {
            return Err(parse_err(lineno, format!("expected {} columns, found {}", N_FORMANTS + 2, fields.len())));
        }
        let vowel = fields[1].to_string();
        if !VOWEL_LABELS.contains(&vowel.as_str()) {
            return Err(parse_err(lineno, format!("unknown vowel '{vowel}'")));
        }
        let mut formants = [0.0; N_FORMANTS];
        for (k, f) in fields[2..].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| parse_err(lineno, format!("f{} is not a number: '{f}'", k + 1)))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(parse_err(lineno, format!("f{} must be positive and finite, got {v}", k + 1)));
            }
            formants[k] = v;
        }
        out.push(VowelRecord {
            speaker: fields[0].to_string(),
            vowel,
            formants,
        });
    }
    log::info!("loaded {} vowel records from {}", out.len(), path.display());
    if out.len() != FULL_DATASET_LEN {
        log::warn!("expected {FULL_DATASET_LEN} records in the full dataset, found {}", out.len());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationStats {
    /// Per-column extrema of `x`.
    pub fn fit(x: &Array2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(PatError::InsufficientData { needed: 2, got: 0 });
        }
        let mut min = Vec::with_capacity(x.ncols());
        let mut max = Vec::with_capacity(x.ncols());
        for (dim, col) in x.columns().into_iter().enumerate() {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                return Err(PatError::DegenerateDimension { dim });
            }
            min.push(lo);
            max.push(hi);
        }
        Ok(NormalizationStats { min, max })
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        crate::error::check_len("normalization stats", self.min.len(), x.ncols())?;
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            col.mapv_inplace(|v| (v - lo) / (hi - lo));
        }
        Ok(out)
    }

    pub fn denormalize(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        crate::error::check_len("normalization stats", self.min.len(), x.ncols())?;
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (lo, hi) = (self.min[j], self.max[j]);
            col.mapv_inplace(|v| v * (hi - lo) + lo);
        }
        Ok(out)
    }
}

pub fn formant_matrix(records: &[VowelRecord]) -> Array2<f64> {
    let mut x = Array2::zeros((records.len(), N_FORMANTS));
    for (mut row, r) in x.rows_mut().into_iter().zip(records) {
        row.assign(&ndarray::ArrayView1::from(&r.formants[..]));
    }
    x
}

/// Min-max scales each formant to [0, 1] over `records`.
pub fn minmax_normalize(records: &[VowelRecord]) -> Result<(Array2<f64>, NormalizationStats)> {
    let x = formant_matrix(records);
    let stats = NormalizationStats::fit(&x)?;
    Ok((stats.apply(&x)?, stats))
}

/// Class indices of `records`; unknown labels are an error.
pub fn vowel_classes(records: &[VowelRecord]) -> Result<Vec<usize>> {
    records
        .iter()
        .map(|r| r.class().ok_or_else(|| PatError::Config(format!("unknown vowel '{}'", r.vowel))))
        .collect()
}

/// Mean (F1, F2, F3) in Hz per vowel, loosely following adult female averages.
pub const SYNTH_MEANS: [[f64; 3]; 7] = [
    [678.0, 2331.0, 2972.0],
    [936.0, 1551.0, 2815.0],
    [781.0, 1136.0, 2824.0],
    [500.0, 1666.0, 1936.0],
    [483.0, 2365.0, 3053.0],
    [437.0, 2761.0, 3372.0],
    [459.0, 1105.0, 2735.0],
];

/// Formant drift per time slice, as a fraction of the mean.
pub const SYNTH_DRIFT: [f64; 7] = [0.02, -0.01, 0.015, 0.01, -0.02, 0.005, -0.015];

/// Relative spread of the per-speaker vocal tract scale.
pub const SYNTH_SPEAKER_SD: f64 = 0.03;
/// Relative spread of each formant measurement.
pub const SYNTH_TOKEN_SD: f64 = 0.03;

/// Synthetic stand-in for the vowel dataset.
///
/// Each record is F1..F3 sampled at four time slices. Slice `k` of vowel `v`
/// has mean `SYNTH_MEANS[v]·(1 + SYNTH_DRIFT[v]·(k − 1.5))`; a speaker
/// scale `s ~ N(1, SYNTH_SPEAKER_SD²)` multiplies the whole record and each
/// entry gets independent relative noise `N(0, SYNTH_TOKEN_SD²)`.
/// Speaker `k` utters every vowel once, so `n_per_class` speakers are made.
pub fn synth_vowels(seed: u64, n_per_class: usize) -> Vec<VowelRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speaker = Normal::new(1.0, SYNTH_SPEAKER_SD).expect("valid sd");
    let token = Normal::new(0.0, SYNTH_TOKEN_SD).expect("valid sd");
    let mut out = Vec::with_capacity(7 * n_per_class);
    for s in 0..n_per_class {
        let scale: f64 = speaker.sample(&mut rng);
        for (v, label) in VOWEL_LABELS.iter().enumerate() {
            let mut formants = [0.0; N_FORMANTS];
            for k in 0..4 {
                let drift = 1.0 + SYNTH_DRIFT[v] * (k as f64 - 1.5);
                for f in 0..3 {
                    let noise: f64 = token.sample(&mut rng);
                    formants[3 * k + f] = (SYNTH_MEANS[v][f] * drift * scale * (1.0 + noise)).max(1.0);
                }
            }
            out.push(VowelRecord {
                speaker: format!("s{s:03}"),
                vowel: label.to_string(),
                formants,
            });
        }
    }
    out
}
