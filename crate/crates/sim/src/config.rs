//! Experiment description, built-in profiles and JSON loading.

use std::path::Path;

use mimo_core::channel::{CorrelationModel, NominalAngle, DEFAULT_QUADRATURE_ORDER};
use mimo_core::detect::CombinerKind;
use mimo_core::geometry::NetworkConfig;
use mimo_core::pa::PaScheme;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, SimError};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Validate,
    Sweep,
    Power,
    PaCompare,
}

/// Pilot and data power policy of one arm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerScheme {
    Uniform,
    /// Optimized pilot powers, data power from the remaining energy.
    PilotOpt,
    Sumse,
    Maxmin,
    PilotSumse,
    PilotMaxmin,
}

impl PowerScheme {
    pub fn label(&self) -> &'static str {
        match self {
            PowerScheme::Uniform => "uniform",
            PowerScheme::PilotOpt => "pilot",
            PowerScheme::Sumse => "sumse",
            PowerScheme::Maxmin => "maxmin",
            PowerScheme::PilotSumse => "pilot+sumse",
            PowerScheme::PilotMaxmin => "pilot+maxmin",
        }
    }

    pub fn optimizes_pilots(&self) -> bool {
        matches!(self, PowerScheme::PilotOpt | PowerScheme::PilotSumse | PowerScheme::PilotMaxmin)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TauP,
    Antennas,
    PowerDbm,
    Gamma,
    AsdDeg,
}

impl SweepAxis {
    pub fn label(&self) -> &'static str {
        match self {
            SweepAxis::TauP => "tau_p",
            SweepAxis::Antennas => "antennas",
            SweepAxis::PowerDbm => "power_dbm",
            SweepAxis::Gamma => "gamma",
            SweepAxis::AsdDeg => "asd_deg",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub network: NetworkConfig,
    pub correlation: CorrelationModel,
    /// Per-user transmit power `P`, dBm. The energy budget is `P·(τ_p+τ_u)`.
    pub power_dbm: f64,
    /// Subset threshold of the scalable PA and of P-MMSE arms.
    pub gamma: f64,
    pub combiners: Vec<CombinerKind>,
    pub pa_schemes: Vec<PaScheme>,
    pub power_schemes: Vec<PowerScheme>,
    pub sweep: Sweep,
    pub drops: usize,
    pub blocks: usize,
    /// Blocks per random stream; fixes the stream layout, so results do not
    /// depend on the thread count.
    pub chunk_blocks: usize,
    /// Also evaluate the deterministic SINR of M-MMSE arms.
    pub deterministic: bool,
    pub group_estimation_error: bool,
    /// Grid points of the per-user SE CDF (0 keeps every sample).
    pub cdf_points: usize,
    pub seed: u64,
}

/// One point of a sweep with every swept quantity resolved.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSpec {
    pub value: f64,
    pub network: NetworkConfig,
    pub correlation: CorrelationModel,
    pub power_dbm: f64,
    pub gamma: f64,
}

impl ExperimentSpec {
    /// Built-in defaults of a subcommand under a profile.
    pub fn profile(profile: Profile, cmd: Command) -> Self {
        let (k, m, tau, asd, drops, blocks) = match profile {
            Profile::Desk => (8, 64, 8, 20.0, 20, 200),
            Profile::Paper => (10, 100, 10, 10.0, 100, 1000),
        };
        let (rows, cols, power_dbm) = match (profile, cmd) {
            (Profile::Paper, Command::PaCompare) => (4, 4, 24.8),
            _ => (2, 2, 20.0),
        };
        let gamma = 0.013;
        let mut network = NetworkConfig::with_dims(rows, cols, k, m, tau);
        network.rng_seed = 0;
        let (pa_schemes, combiners, power_schemes, sweep, deterministic) = match cmd {
            Command::Sweep => (
                vec![PaScheme::Multicell, PaScheme::ExtendedOrthogonality, PaScheme::ProposedSinglecell, PaScheme::Zhu],
                vec![CombinerKind::Mmmse],
                vec![PowerScheme::Uniform],
                Sweep { axis: SweepAxis::TauP, values: vec![k as f64, (3 * k / 2) as f64, (2 * k) as f64] },
                false,
            ),
            Command::Power => (
                vec![PaScheme::Multicell],
                vec![CombinerKind::Mmmse],
                vec![
                    PowerScheme::Uniform,
                    PowerScheme::PilotOpt,
                    PowerScheme::Sumse,
                    PowerScheme::Maxmin,
                    PowerScheme::PilotSumse,
                    PowerScheme::PilotMaxmin,
                ],
                Sweep { axis: SweepAxis::PowerDbm, values: vec![power_dbm] },
                true,
            ),
            Command::PaCompare if rows * cols > 4 => (
                vec![PaScheme::Multicell, PaScheme::Scalable, PaScheme::ExtendedOrthogonality],
                vec![CombinerKind::Mmmse, CombinerKind::Pmmse { gamma }],
                vec![PowerScheme::Uniform],
                Sweep { axis: SweepAxis::TauP, values: vec![tau as f64] },
                false,
            ),
            Command::PaCompare | Command::Validate => (
                vec![PaScheme::Multicell, PaScheme::ExtendedOrthogonality, PaScheme::Zhu],
                vec![CombinerKind::Mmmse, CombinerKind::Smmse, CombinerKind::Mf],
                vec![PowerScheme::Uniform],
                Sweep { axis: SweepAxis::TauP, values: vec![tau as f64] },
                false,
            ),
        };
        ExperimentSpec {
            schema_version: SCHEMA_VERSION,
            network,
            correlation: CorrelationModel::GaussianScattering {
                asd_deg: asd,
                quadrature_order: DEFAULT_QUADRATURE_ORDER,
                angles: NominalAngle::Geometric,
            },
            power_dbm,
            gamma,
            combiners,
            pa_schemes,
            power_schemes,
            sweep,
            drops,
            blocks,
            chunk_blocks: 25,
            deterministic,
            group_estimation_error: true,
            cdf_points: 101,
            seed: 1,
        }
    }

    /// Profile defaults overridden by a partial JSON document. `cells` and
    /// `tau_u` are derived from the grid and from `tau_c − tau_d − tau_p`.
    pub fn from_json(profile: Profile, cmd: Command, json: &str) -> Result<Self> {
        let over: Value = serde_json::from_str(json)?;
        let Value::Object(map) = &over else {
            return Err(SimError::Config("the configuration must be a JSON object".into()));
        };
        match map.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(SimError::Config(format!("schema_version {v} is not supported (expected {SCHEMA_VERSION})"))),
            None => return Err(SimError::Config("missing integer field schema_version".into())),
        }
        let mut base = serde_json::to_value(Self::profile(profile, cmd))?;
        merge(&mut base, over);
        let mut spec: ExperimentSpec = serde_json::from_value(base)?;
        spec.normalize();
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(profile: Profile, cmd: Command, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(profile, cmd, &text)
    }

    pub fn normalize(&mut self) {
        let n = &mut self.network;
        n.cells = n.grid_rows * n.grid_cols;
        n.tau_u = n.tau_c.saturating_sub(n.tau_d + n.tau_p);
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(SimError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return cfg(format!("schema_version {} is not supported", self.schema_version));
        }
        if self.drops == 0 || self.blocks == 0 || self.chunk_blocks == 0 {
            return cfg("drops, blocks and chunk_blocks must be positive".into());
        }
        if self.combiners.is_empty() || self.pa_schemes.is_empty() || self.power_schemes.is_empty() {
            return cfg("at least one combiner, PA scheme and power scheme is required".into());
        }
        if self.sweep.values.is_empty() {
            return cfg("the sweep needs at least one value".into());
        }
        if !self.power_dbm.is_finite() || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return cfg(format!("power {} dBm or gamma {} out of range", self.power_dbm, self.gamma));
        }
        for c in &self.combiners {
            c.validate().map_err(|e| SimError::Config(e.to_string()))?;
        }
        for &v in &self.sweep.values {
            let point = self.point(v)?;
            point.network.validate().map_err(|e| SimError::Config(format!("sweep value {v}: {e}")))?;
            point.correlation.validate().map_err(|e| SimError::Config(format!("sweep value {v}: {e}")))?;
        }
        Ok(())
    }

    /// Resolves sweep value `v`.
    pub fn point(&self, v: f64) -> Result<PointSpec> {
        let bad = |what: &str| SimError::Config(format!("sweep value {v} is not a valid {what}"));
        let finite_pos = v.is_finite() && v > 0.0;
        let integer = finite_pos && v.fract() == 0.0;
        let mut p = PointSpec {
            value: v,
            network: self.network.clone(),
            correlation: self.correlation,
            power_dbm: self.power_dbm,
            gamma: self.gamma,
        };
        match self.sweep.axis {
            SweepAxis::TauP => {
                if !integer {
                    return Err(bad("pilot length"));
                }
                p.network.tau_p = v as usize;
                p.network.tau_u = p.network.tau_c.saturating_sub(p.network.tau_d + p.network.tau_p);
            }
            SweepAxis::Antennas => {
                if !integer {
                    return Err(bad("antenna count"));
                }
                p.network.antennas = v as usize;
            }
            SweepAxis::PowerDbm => {
                if !v.is_finite() {
                    return Err(bad("power"));
                }
                p.power_dbm = v;
            }
            SweepAxis::Gamma => {
                if !(finite_pos && v <= 1.0) {
                    return Err(bad("threshold"));
                }
                p.gamma = v;
            }
            SweepAxis::AsdDeg => {
                if !finite_pos {
                    return Err(bad("angular spread"));
                }
                match &mut p.correlation {
                    CorrelationModel::GaussianScattering { asd_deg, .. } => *asd_deg = v,
                    _ => return Err(SimError::Config("the ASD axis needs the Gaussian scattering model".into())),
                }
            }
        }
        Ok(p)
    }
}

/// Recursive object merge; anything else (and the correlation model, whose
/// variants are distinct keys) is replaced.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if k != "correlation" => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_validate() {
        for p in [Profile::Desk, Profile::Paper] {
            for c in [Command::Validate, Command::Sweep, Command::Power, Command::PaCompare] {
                ExperimentSpec::profile(p, c).validate().unwrap();
            }
        }
    }

    #[test]
    fn partial_override() {
        let s = ExperimentSpec::from_json(
            Profile::Desk,
            Command::Sweep,
            r#"{"schema_version": 1, "network": {"antennas": 32, "tau_p": 4}, "drops": 2,
                "correlation": "uncorrelated"}"#,
        )
        .unwrap();
        assert_eq!(s.network.antennas, 32);
        assert_eq!(s.network.tau_u, 200 - 100 - 4);
        assert_eq!(s.drops, 2);
        assert_eq!(s.correlation, CorrelationModel::Uncorrelated);
        assert_eq!(s.blocks, 200);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        let cases = [
            r#"{"network": {}}"#,
            r#"{"schema_version": 7}"#,
            r#"{"schema_version": 1, "drops": 0}"#,
            r#"{"schema_version": 1, "typo_field": 3}"#,
            r#"{"schema_version": 1, "sweep": {"axis": "tau_p", "values": [2.5]}}"#,
            r#"{"schema_version": 1, "sweep": {"axis": "tau_p", "values": [64]}}"#,
            r#"[1, 2]"#,
        ];
        for c in cases {
            let e = ExperimentSpec::from_json(Profile::Desk, Command::Sweep, c).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{c}: {e}");
        }
    }
}
