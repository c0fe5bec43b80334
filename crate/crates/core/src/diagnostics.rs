//! Gradient-angle and forward-gap measurements between `f_p` and `f_m`.

use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::arch::{Mode, PnnModel, System, Targets};
use crate::autodiff::GradientSet;
use crate::error::{check_len, PatError, Result};
use crate::physics::PowerLawPair;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Angle in degrees between two flat vectors; `None` if either is zero.
pub fn angle_between(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    check_len("gradient angle", a.len(), b.len())?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Ok(None);
    }
    // 2·atan2(|â − b̂|, |â + b̂|) stays accurate near 0° and 180°
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(Some((2.0 * diff.sqrt().atan2(sum.sqrt())).to_degrees()))
}

/// Angle between the flattened concatenations of two gradient sets.
pub fn gradient_angle(g1: &GradientSet, g2: &GradientSet) -> Result<Option<f64>> {
    check_len("gradient slots", g1.len(), g2.len())?;
    for (a, b) in g1.0.iter().zip(&g2.0) {
        check_len("gradient slot", a.len(), b.len())?;
    }
    angle_between(&g1.flatten(), &g2.flatten())
}

/// `‖g1‖ / ‖g2‖`; `None` if `g2` is zero.
pub fn magnitude_ratio(g1: &GradientSet, g2: &GradientSet) -> Option<f64> {
    let d = g2.norm();
    (d > 0.0).then(|| g1.norm() / d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotComparison {
    pub slot: String,
    pub angle_deg: Option<f64>,
    pub magnitude_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientComparison {
    pub angle_deg: Option<f64>,
    pub magnitude_ratio: Option<f64>,
    pub per_slot: Vec<SlotComparison>,
}

impl GradientComparison {
    pub fn new(g: &GradientSet, reference: &GradientSet, slots: &[String]) -> Result<Self> {
        let per_slot = slots
            .iter()
            .zip(g.0.iter().zip(&reference.0))
            .map(|(name, (a, b))| {
                Ok(SlotComparison {
                    slot: name.clone(),
                    angle_deg: angle_between(a, b)?,
                    magnitude_ratio: {
                        let d = norm(b);
                        (d > 0.0).then(|| norm(a) / d)
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GradientComparison {
            angle_deg: gradient_angle(g, reference)?,
            magnitude_ratio: magnitude_ratio(g, reference),
            per_slot,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmComparison {
    pub pat_vs_ideal: GradientComparison,
    pub insilico_vs_ideal: GradientComparison,
}

/// Gradients of all three algorithms on one batch with the model's current
/// parameters, compared against ideal backpropagation.
pub fn compare_algorithms_at_point(model: &PnnModel, x: ArrayView2<f64>, targets: &Targets) -> Result<AlgorithmComparison> {
    if model.physical_layers().iter().any(|p| p.f_m.is_none()) {
        return Err(PatError::Usage("gradient comparison needs a digital model on every physical layer".into()));
    }
    let ideal = model.gradients(x, targets, Mode::IDEAL)?.grads;
    let pat = model.gradients(x, targets, Mode::PAT)?.grads;
    let insilico = model.gradients(x, targets, Mode::IN_SILICO)?.grads;
    Ok(AlgorithmComparison {
        pat_vs_ideal: GradientComparison::new(&pat, &ideal, model.slot_names())?,
        insilico_vs_ideal: GradientComparison::new(&insilico, &ideal, model.slot_names())?,
    })
}

/// Relative input gap per physical layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGapProfile {
    /// `per_sample[k][l] = ‖x̃ − x‖ / ‖x‖` at the input of physical layer `l`.
    pub per_sample: Vec<Vec<f64>>,
    /// The same gap measured on the network output.
    pub output_gap: Vec<f64>,
}

impl LayerGapProfile {
    pub fn n_layers(&self) -> usize {
        self.per_sample.first().map_or(0, Vec::len)
    }

    /// Median gap of each layer over the samples.
    pub fn median(&self) -> Vec<f64> {
        (0..self.n_layers())
            .map(|l| median(self.per_sample.iter().map(|s| s[l]).collect()))
            .collect()
    }

    pub fn median_output_gap(&self) -> f64 {
        median(self.output_gap.clone())
    }

    /// `layer,median_gap` rows, with the output as the last row.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("layer,median_gap\n");
        for (l, g) in self.median().iter().enumerate() {
            s.push_str(&format!("{},{g}\n", l + 1));
        }
        s.push_str(&format!("output,{}\n", self.median_output_gap()));
        s
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn relative_gap(approx: ndarray::ArrayView1<f64>, truth: ndarray::ArrayView1<f64>) -> f64 {
    let d: f64 = approx.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let n = truth.dot(&truth).sqrt();
    if n == 0.0 {
        if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        d / n
    }
}

/// Runs the network once with `f_p` and once with `f_m` everywhere and
/// measures how far the intermediate signals drift apart.
pub fn layer_gap_profile(model: &PnnModel, x: ArrayView2<f64>) -> Result<LayerGapProfile> {
    if model.physical_layers().iter().any(|p| p.f_m.is_none()) {
        return Err(PatError::Usage("gap profile needs a digital model on every physical layer".into()));
    }
    let truth = model.forward(x, Mode::IDEAL)?;
    let sim = model.forward(
        x,
        Mode {
            forward: System::Model,
            backward: System::Model,
        },
    )?;
    let per_sample = (0..x.nrows())
        .map(|k| {
            truth
                .physical_inputs
                .iter()
                .zip(&sim.physical_inputs)
                .map(|(t, s)| relative_gap(s.row(k), t.row(k)))
                .collect()
        })
        .collect();
    let output_gap = (0..x.nrows())
        .map(|k| relative_gap(sim.output.row(k), truth.output.row(k)))
        .collect();
    Ok(LayerGapProfile { per_sample, output_gap })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundingRow {
    pub n: usize,
    pub relative_gap: f64,
}

/// Relative gap after `1..=n_max` compositions of the power-law pair at `x = 1`.
pub fn compounding_gap(pair: &PowerLawPair, n_max: usize) -> Result<Vec<CompoundingRow>> {
    if n_max == 0 {
        return Err(PatError::Domain("n_max must be at least 1".into()));
    }
    (1..=n_max)
        .map(|n| {
            Ok(CompoundingRow {
                n,
                relative_gap: pair.relative_gap(1.0, n)?,
            })
        })
        .collect()
}

pub fn write_compounding_csv(rows: &[CompoundingRow], path: &Path) -> Result<()> {
    let mut s = String::from("n,relative_gap\n");
    for r in rows {
        s.push_str(&format!("{},{}\n", r.n, r.relative_gap));
    }
    std::fs::write(path, s).map_err(|e| PatError::io(path, e))
}
