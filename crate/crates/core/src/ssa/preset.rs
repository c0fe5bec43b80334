use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::units::Quantity;
use super::{
    energy_budget, general_complexity, multimode_ops, oscillator_ops, pac, splitstep_ops, transistor_ops, BudgetItem,
    EnergyBudget, GeneralSystemSpec, HardwareProfile, Pac, SplitStepSpec,
};
use crate::error::{PatError, Result};
use crate::train::hex;

/// Built-in system descriptions, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("shg-present", include_str!("../../presets/shg-present.json")),
    ("shg-near-future", include_str!("../../presets/shg-near-future.json")),
    ("multimode-linear", include_str!("../../presets/multimode-linear.json")),
    ("fiber", include_str!("../../presets/fiber.json")),
    ("oscillator-small", include_str!("../../presets/oscillator-small.json")),
    ("oscillator-large", include_str!("../../presets/oscillator-large.json")),
    ("transistor-small", include_str!("../../presets/transistor-small.json")),
    ("transistor-large", include_str!("../../presets/transistor-large.json")),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

pub fn preset(name: &str) -> Result<SsaConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| PatError::Config(format!("unknown preset {name:?}; known: {}", preset_names().join(", "))))?;
    Ok(serde_json::from_str(text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    General {
        duration: Quantity,
        bandwidth: Quantity,
        modes: f64,
        coupling: Vec<f64>,
    },
    SplitStep {
        length: Quantity,
        step: Quantity,
        spectral_range: Quantity,
        time_window: Quantity,
    },
    /// Nonlinear multimode propagation on an `N_x × N_x` spatial grid.
    Multimode {
        n_x: f64,
        n_omega: f64,
        length: Quantity,
        step: Quantity,
    },
    /// A transmission matrix applied to one frame: `M·M'` operations.
    MultimodeLinear { modes_in: f64, modes_out: f64 },
    Oscillator {
        duration: Quantity,
        bandwidth: Quantity,
        n: f64,
        m: f64,
    },
    Transistor {
        duration: Quantity,
        bandwidth: Quantity,
        n_t: f64,
        n_d: f64,
        m1: f64,
        c_nl: f64,
    },
}

impl SystemSpec {
    pub fn ops(&self) -> Result<f64> {
        match self {
            SystemSpec::General {
                duration,
                bandwidth,
                modes,
                coupling,
            } => general_complexity(&GeneralSystemSpec {
                duration: duration.positive("duration", "s")?,
                bandwidth: bandwidth.positive("bandwidth", "Hz")?,
                modes: *modes,
                coupling: coupling.clone(),
            }),
            SystemSpec::SplitStep {
                length,
                step,
                spectral_range,
                time_window,
            } => splitstep_ops(&SplitStepSpec {
                length: length.positive("length", "m")?,
                step: step.positive("step", "m")?,
                spectral_range: spectral_range.positive("spectral range", "Hz")?,
                time_window: time_window.positive("time window", "s")?,
            }),
            SystemSpec::Multimode { n_x, n_omega, length, step } => multimode_ops(
                *n_x,
                *n_omega,
                length.positive("length", "m")?,
                step.positive("step", "m")?,
            ),
            SystemSpec::MultimodeLinear { modes_in, modes_out } => {
                if !(*modes_in > 0.0 && *modes_out > 0.0) {
                    return Err(PatError::Config("mode counts must be positive".into()));
                }
                Ok(modes_in * modes_out)
            }
            SystemSpec::Oscillator { duration, bandwidth, n, m } => oscillator_ops(
                duration.positive("duration", "s")?,
                bandwidth.positive("bandwidth", "Hz")?,
                *n,
                *m,
            ),
            SystemSpec::Transistor {
                duration,
                bandwidth,
                n_t,
                n_d,
                m1,
                c_nl,
            } => transistor_ops(
                duration.positive("duration", "s")?,
                bandwidth.positive("bandwidth", "Hz")?,
                *n_t,
                *n_d,
                *m1,
                *c_nl,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetEntry {
    pub label: String,
    pub count: f64,
    pub unit: Quantity,
}

/// Time and energy the physical system needs for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalSpec {
    pub time: Quantity,
    pub budget: Vec<BudgetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsaConfig {
    pub name: String,
    pub version: u32,
    pub system: SystemSpec,
    pub physical: PhysicalSpec,
    /// Operation count quoted alongside the source estimate, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quoted_ops: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareCost {
    pub hardware: HardwareProfile,
    pub sim_time: f64,
    pub sim_energy: f64,
    pub pac: Pac,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsaReport {
    pub config: SsaConfig,
    pub config_hash: String,
    pub ops: f64,
    pub quoted_ops: Option<f64>,
    /// `ops / quoted_ops`.
    pub quoted_ratio: Option<f64>,
    pub physical_time: f64,
    pub budget: EnergyBudget,
    pub hardware: Vec<HardwareCost>,
}

impl SsaConfig {
    pub fn report(&self, hardware: &[HardwareProfile]) -> Result<SsaReport> {
        let ops = self.system.ops()?;
        let physical_time = self.physical.time.positive("physical time", "s")?;
        let items = self
            .physical
            .budget
            .iter()
            .map(|e| {
                Ok(BudgetItem {
                    label: e.label.clone(),
                    count: e.count,
                    unit: e.unit.si("J")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let budget = energy_budget(items)?;
        let hardware = hardware
            .iter()
            .map(|hw| {
                Ok(HardwareCost {
                    hardware: hw.clone(),
                    sim_time: hw.sim_time(ops),
                    sim_energy: hw.sim_energy(ops),
                    pac: pac(ops, hw, physical_time, budget.total)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut h = Sha256::new();
        h.update(serde_json::to_string(self)?.as_bytes());
        Ok(SsaReport {
            config: self.clone(),
            config_hash: hex(&h.finalize()),
            ops,
            quoted_ops: self.quoted_ops,
            quoted_ratio: self.quoted_ops.map(|q| ops / q),
            physical_time,
            budget,
            hardware,
        })
    }
}

impl SsaReport {
    /// True when the formula and the quoted figure differ by more than 2×.
    pub fn quoted_mismatch(&self) -> bool {
        self.quoted_ratio.is_some_and(|r| !(0.5..=2.0).contains(&r))
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} (v{})", self.config.name, self.config.version);
        let _ = writeln!(s, "operations        {:.4e}", self.ops);
        if let (Some(q), Some(r)) = (self.quoted_ops, self.quoted_ratio) {
            let flag = if self.quoted_mismatch() { "  MISMATCH" } else { "" };
            let _ = writeln!(s, "quoted            {q:.4e}  (formula/quoted = {r:.2}){flag}");
        }
        let _ = writeln!(s, "physical time     {:.4e} s", self.physical_time);
        for it in &self.budget.items {
            let _ = writeln!(s, "  {:<30} {:>10} × {:.4e} J", it.label, it.count, it.unit);
        }
        let _ = writeln!(s, "physical energy   {:.4e} J", self.budget.total);
        let _ = writeln!(s, "{:<14} {:>12} {:>12} {:>12} {:>12}", "hardware", "sim time s", "sim energy J", "PAC_t", "PAC_e");
        for c in &self.hardware {
            let _ = writeln!(
                s,
                "{:<14} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e}",
                c.hardware.name, c.sim_time, c.sim_energy, c.pac.time, c.pac.energy
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses_and_reports() {
        for name in preset_names() {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.name, name);
            let r = cfg.report(&HardwareProfile::reference()).unwrap();
            assert!(r.ops > 0.0 && r.budget.total > 0.0, "{name}");
            assert!(r.table().contains(name));
        }
        assert!(preset("nope").is_err());
    }

    #[test]
    fn unknown_keys_and_zero_time_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(PRESETS[4].1).unwrap();
        v["extra"] = 1.into();
        assert!(serde_json::from_value::<SsaConfig>(v.clone()).is_err());
        v.as_object_mut().unwrap().remove("extra");
        v["system"]["duration"] = "0 ns".into();
        let cfg: SsaConfig = serde_json::from_value(v).unwrap();
        assert!(cfg.report(&HardwareProfile::reference()).is_err());
    }

    #[test]
    fn golden_numbers() {
        let hw = HardwareProfile::reference();
        let r = |n: &str| preset(n).unwrap().report(&hw).unwrap();
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        assert!(rel(r("shg-present").budget.total, 50.39e-9) < 1e-12);
        assert!(rel(r("shg-near-future").budget.total, 537.2e-12) < 1e-12);
        assert!(rel(r("oscillator-small").ops, 2.02e5) < 1e-12);
        assert!(rel(r("oscillator-large").ops, 2.02e8) < 1e-12);
        assert!(rel(r("transistor-small").ops, 2.2e7) < 1e-12);
        assert!(rel(r("fiber").ops, 6.4e18) < 0.15);
        let shg = r("shg-present");
        assert!(rel(shg.ops, 1.43e9) < 0.01);
        assert!(shg.quoted_mismatch());
        assert!(!r("oscillator-small").quoted_mismatch());
    }

    #[test]
    fn report_is_deterministic() {
        let cfg = preset("fiber").unwrap();
        let a = serde_json::to_string(&cfg.report(&HardwareProfile::reference()).unwrap()).unwrap();
        let b = serde_json::to_string(&cfg.report(&HardwareProfile::reference()).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
