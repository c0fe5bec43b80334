//! Operation counts for digitally simulating physical systems, and the
//! resulting time and energy advantage of running the physics instead.

mod preset;
mod units;

pub use preset::{preset, preset_names, HardwareCost, PhysicalSpec, SsaConfig, SsaReport, SystemSpec, PRESETS};
pub use units::{parse_quantity, Quantity};

use serde::{Deserialize, Serialize};

use crate::error::{PatError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    /// Joules per floating point operation.
    pub energy_per_op: f64,
    pub ops_per_second: f64,
}

impl HardwareProfile {
    pub fn new(name: &str, energy_per_op: f64, ops_per_second: f64) -> Result<Self> {
        if !(energy_per_op > 0.0 && ops_per_second > 0.0) {
            return Err(PatError::Config(format!("hardware {name}: energy and rate must be positive")));
        }
        Ok(HardwareProfile {
            name: name.into(),
            energy_per_op,
            ops_per_second,
        })
    }

    pub fn titan_rtx() -> Self {
        HardwareProfile::new("titan-rtx", 9.8e-12, 32e12).unwrap()
    }

    pub fn dgx_superpod() -> Self {
        HardwareProfile::new("dgx-superpod", 39e-12, 2.8e15).unwrap()
    }

    /// Titan RTX and DGX SuperPOD.
    pub fn reference() -> Vec<Self> {
        vec![Self::titan_rtx(), Self::dgx_superpod()]
    }

    pub fn sim_time(&self, ops: f64) -> f64 {
        ops / self.ops_per_second
    }

    pub fn sim_energy(&self, ops: f64) -> f64 {
        ops * self.energy_per_op
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(PatError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(PatError::Config(format!("{name} must be non-negative, got {v}")))
    }
}

/// A dynamical system described by its simulated time, bandwidth, mode count
/// and coupling range per nonlinear order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralSystemSpec {
    pub duration: f64,
    pub bandwidth: f64,
    pub modes: f64,
    /// `coupling[i]` is the coupling range of the order `i + 1` term.
    pub coupling: Vec<f64>,
}

impl GeneralSystemSpec {
    pub fn validate(&self) -> Result<()> {
        positive("duration", self.duration)?;
        positive("bandwidth", self.bandwidth)?;
        positive("modes", self.modes)?;
        if self.coupling.is_empty() {
            return Err(PatError::Config("at least one coupling order is required".into()));
        }
        for (i, &m) in self.coupling.iter().enumerate() {
            positive(&format!("coupling range of order {}", i + 1), m)?;
        }
        Ok(())
    }

    /// Largest `M_i^i`.
    pub fn q_max(&self) -> f64 {
        self.coupling
            .iter()
            .enumerate()
            .map(|(i, &m)| m.powi(i as i32 + 1))
            .fold(0.0, f64::max)
    }
}

/// `ΔT Δf N Q_max`.
pub fn general_complexity(spec: &GeneralSystemSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.duration * spec.bandwidth * spec.modes * spec.q_max())
}

/// Single-mode pulse propagation simulated by the split-step Fourier method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStepSpec {
    pub length: f64,
    pub step: f64,
    /// Spectral range Δω in Hz.
    pub spectral_range: f64,
    pub time_window: f64,
}

impl SplitStepSpec {
    pub fn n_z(&self) -> f64 {
        self.length / self.step
    }

    pub fn n_omega(&self) -> f64 {
        self.time_window * self.spectral_range
    }

    pub fn validate(&self) -> Result<()> {
        positive("length", self.length)?;
        positive("step", self.step)?;
        positive("spectral range", self.spectral_range)?;
        positive("time window", self.time_window)?;
        if self.n_z() < 1.0 || self.n_omega() < 1.0 {
            return Err(PatError::Config(format!(
                "split-step grid too small: N_z = {}, N_ω = {}",
                self.n_z(),
                self.n_omega()
            )));
        }
        Ok(())
    }
}

/// `N_z N_ω log₂ N_ω`.
pub fn splitstep_ops(spec: &SplitStepSpec) -> Result<f64> {
    spec.validate()?;
    let w = spec.n_omega();
    Ok(spec.n_z() * w * w.log2())
}

/// `[N_x log₂ N_x]² N_ω log₂ N_ω L / L_step`.
pub fn multimode_ops(n_x: f64, n_omega: f64, length: f64, step: f64) -> Result<f64> {
    positive("N_x", n_x)?;
    positive("N_ω", n_omega)?;
    positive("length", length)?;
    positive("step", step)?;
    let s = n_x * n_x.log2();
    Ok(s * s * n_omega * n_omega.log2() * length / step)
}

/// `ΔT Δf [N M + N]`.
pub fn oscillator_ops(duration: f64, bandwidth: f64, n: f64, m: f64) -> Result<f64> {
    positive("duration", duration)?;
    positive("bandwidth", bandwidth)?;
    positive("N", n)?;
    non_negative("M", m)?;
    Ok(duration * bandwidth * (n * m + n))
}

/// `ΔT Δf [N_T N_d M₁ + N_T N_d C_nl]`.
pub fn transistor_ops(duration: f64, bandwidth: f64, n_t: f64, n_d: f64, m1: f64, c_nl: f64) -> Result<f64> {
    positive("duration", duration)?;
    positive("bandwidth", bandwidth)?;
    positive("N_T", n_t)?;
    positive("N_d", n_d)?;
    non_negative("M1", m1)?;
    non_negative("C_nl", c_nl)?;
    Ok(duration * bandwidth * (n_t * n_d * m1 + n_t * n_d * c_nl))
}

/// Simulation cost over physical cost, in time and in energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pac {
    pub time: f64,
    pub energy: f64,
}

pub fn pac(ops: f64, hw: &HardwareProfile, physical_time: f64, physical_energy: f64) -> Result<Pac> {
    positive("operation count", ops)?;
    positive("physical time", physical_time)?;
    positive("physical energy", physical_energy)?;
    Ok(Pac {
        time: hw.sim_time(ops) / physical_time,
        energy: hw.sim_energy(ops) / physical_energy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetItem {
    pub label: String,
    pub count: f64,
    /// Joules per unit.
    pub unit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyBudget {
    pub items: Vec<BudgetItem>,
    pub total: f64,
}

pub fn energy_budget(items: Vec<BudgetItem>) -> Result<EnergyBudget> {
    for it in &items {
        non_negative(&format!("{} count", it.label), it.count)?;
        non_negative(&format!("{} energy", it.label), it.unit)?;
    }
    let total = items.iter().map(|it| it.count * it.unit).sum();
    Ok(EnergyBudget { items, total })
}

/// Best-case speedup of a physical co-processor whose useful work is
/// `total_ops`, when read-in, read-out and digital pre-processing stay digital.
///
/// ```
/// use pat_core::ssa::operational_bottleneck;
/// // single-layer 196×10 perceptron on pooled MNIST
/// let r = operational_bottleneck(1960.0, 196.0, 10.0, 196.0).unwrap();
/// assert!((r - 4.876).abs() < 1e-3);
/// // CIFAR-10 at ~10⁹ operations per image
/// let r = operational_bottleneck(1e9, 32.0 * 32.0 * 3.0, 0.0, 0.0).unwrap();
/// assert!(r > 1e5 && r < 1e6);
/// ```
pub fn operational_bottleneck(total_ops: f64, read_in: f64, read_out: f64, digital: f64) -> Result<f64> {
    positive("total operations", total_ops)?;
    let overhead = non_negative("read-in", read_in)? + non_negative("read-out", read_out)? + non_negative("digital", digital)?;
    positive("overhead", overhead)?;
    Ok(total_ops / overhead)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(label: &str, count: f64, unit: f64) -> BudgetItem {
        BudgetItem {
            label: label.into(),
            count,
            unit,
        }
    }

    #[test]
    fn general_q_max() {
        let s = GeneralSystemSpec {
            duration: 1.0,
            bandwidth: 1.0,
            modes: 1.0,
            coupling: vec![1.0],
        };
        assert_eq!(general_complexity(&s).unwrap(), 1.0);
        let s = GeneralSystemSpec {
            coupling: vec![100.0, 0.0 + 1.0, 10.0],
            ..s
        };
        assert_eq!(s.q_max(), 1000.0);
        let lin = GeneralSystemSpec {
            duration: 2e-9,
            bandwidth: 5e9,
            modes: 7.0,
            coupling: vec![3.0],
        };
        assert_eq!(general_complexity(&lin).unwrap(), 2e-9 * 5e9 * 7.0 * 3.0);
    }

    #[test]
    fn splitstep_formula() {
        let s = SplitStepSpec {
            length: 5e-3,
            step: 1e-6,
            spectral_range: 800e12,
            time_window: 25e-12,
        };
        let expected = 5000.0 * 20000.0 * 20000f64.log2();
        assert!((splitstep_ops(&s).unwrap() / expected - 1.0).abs() < 1e-9);
        let two = SplitStepSpec {
            length: 3.0,
            step: 1.0,
            spectral_range: 2.0,
            time_window: 1.0,
        };
        assert_eq!(splitstep_ops(&two).unwrap(), 6.0);
        let double = SplitStepSpec { length: 1e-2, ..s.clone() };
        assert!((splitstep_ops(&double).unwrap() / splitstep_ops(&s).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_cases() {
        assert_eq!(multimode_ops(2.0, 2.0, 1.0, 1.0).unwrap(), 8.0);
        assert_eq!(oscillator_ops(1.0, 3.0, 5.0, 0.0).unwrap(), 15.0);
        assert_eq!(transistor_ops(1.0, 2.0, 3.0, 4.0, 1.0, 0.0).unwrap(), 24.0);
        assert_eq!(
            transistor_ops(1.0, 2.0, 6.0, 4.0, 5.0, 3.0).unwrap(),
            2.0 * transistor_ops(1.0, 2.0, 3.0, 4.0, 5.0, 3.0).unwrap()
        );
        assert!(oscillator_ops(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn pac_and_budget() {
        let hw = HardwareProfile::titan_rtx();
        let p = pac(1e6, &hw, hw.sim_time(1e6), hw.sim_energy(1e6)).unwrap();
        assert_eq!((p.time, p.energy), (1.0, 1.0));
        assert_eq!(energy_budget(vec![]).unwrap().total, 0.0);
        let b = energy_budget(vec![item("a", 2.0, 3.0), item("b", 1.0, 0.5)]).unwrap();
        assert_eq!(b.total, 6.5);
        assert!(energy_budget(vec![item("a", -1.0, 1.0)]).is_err());
        assert!(HardwareProfile::new("x", 0.0, 1.0).is_err());
    }
}
