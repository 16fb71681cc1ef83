//! Run configuration: a single JSON document with every default resolved,
//! validated before anything runs, and hashed for provenance.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Result, ZenoError};
use crate::grid::Grid;
use crate::measurement::WindowProfile;
use crate::propagator::{Boundary, StepControl};
use crate::protocols::{
    DurationScan, EnsembleSpec, Mode, PulseEngine, PulseWidthScan, Simulation, SnapshotSpec, StrengthScan,
    TransportScan, ZenoScan,
};
use crate::units::PhysicalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: String,
    pub formats: Vec<Format>,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: "zeno-out".into(),
            formats: vec![Format::Csv, Format::Json, Format::Svg],
        }
    }
}

/// Protocol parameters, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProtocolConfig {
    Zeno(ZenoScan),
    PulseWidth(PulseWidthScan),
    Strength(StrengthScan),
    Duration(DurationScan),
    Transport(TransportScan),
    Snapshot(SnapshotSpec),
}

impl ProtocolConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolConfig::Zeno(_) => "zeno",
            ProtocolConfig::PulseWidth(_) => "pulse-width",
            ProtocolConfig::Strength(_) => "strength",
            ProtocolConfig::Duration(_) => "duration",
            ProtocolConfig::Transport(_) => "transport",
            ProtocolConfig::Snapshot(_) => "snapshot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub physical: PhysicalParams,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default)]
    pub step: StepControl,
    #[serde(default)]
    pub window: WindowProfile,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub engine: PulseEngine,
    #[serde(default)]
    pub ensemble: EnsembleSpec,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_boundary() -> Boundary {
    Simulation::default().boundary
}

fn config_error(path: impl Into<String>, reason: impl Into<String>) -> ZenoError {
    ZenoError::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Accepts `"protocol": "zeno"` as shorthand for `{"kind": "zeno"}`, and lets
/// `physical.temperature` and `ensemble.v_th` stand in for each other.
fn normalize(mut doc: Value) -> Result<Value> {
    let root = doc
        .as_object_mut()
        .ok_or_else(|| config_error("$", "the configuration must be a JSON object"))?;
    if let Some(Value::String(kind)) = root.get("protocol") {
        let kind = kind.clone();
        root.insert("protocol".into(), serde_json::json!({ "kind": kind }));
    }
    let temperature = root.get("physical").and_then(|p| p.get("temperature")).cloned();
    let v_th = root.get("ensemble").and_then(|e| e.get("v_th")).cloned();
    match (temperature, v_th) {
        (Some(t), Some(v)) if t != v => {
            return Err(config_error(
                "ensemble.v_th",
                format!("disagrees with physical.temperature ({v} vs {t}); set one of them"),
            ));
        }
        (Some(t), None) => {
            if let Some(e) = root
                .entry("ensemble")
                .or_insert_with(|| serde_json::json!({}))
                .as_object_mut()
            {
                e.insert("v_th".into(), t);
            }
        }
        (None, Some(v)) => {
            if let Some(p) = root
                .entry("physical")
                .or_insert_with(|| serde_json::json!({}))
                .as_object_mut()
            {
                p.insert("temperature".into(), v);
            }
        }
        _ => {}
    }
    Ok(doc)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc: Value = serde_json::from_str(text).map_err(|e| config_error("$", e.to_string()))?;
    let doc = normalize(doc)?;
    let cfg: RunConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        let path = if path == "." { "$".to_string() } else { path };
        config_error(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn minimal(protocol: ProtocolConfig) -> Self {
        let sim = Simulation::default();
        Self {
            physical: sim.physical,
            grid: sim.grid,
            boundary: sim.boundary,
            step: sim.step,
            window: sim.window,
            mode: sim.mode,
            engine: sim.engine,
            ensemble: EnsembleSpec::default(),
            protocol,
            output: OutputSpec::default(),
        }
    }

    pub fn simulation(&self) -> Simulation {
        Simulation {
            physical: self.physical,
            grid: self.grid,
            boundary: self.boundary,
            step: self.step,
            window: self.window,
            mode: self.mode,
            engine: self.engine,
        }
    }

    pub fn seed(&self) -> u64 {
        self.ensemble.rng_seed
    }

    /// Checks every component; errors carry the offending field path.
    pub fn validate(&self) -> Result<()> {
        let scoped = |prefix: &str, r: Result<()>| {
            r.map_err(|e| match e {
                ZenoError::InvalidParameter { name, reason } => config_error(format!("{prefix}.{name}"), reason),
                other => config_error(prefix, other.to_string()),
            })
        };
        scoped("physical", self.physical.validate())?;
        scoped("grid", self.grid.validate())?;
        scoped("step", self.step.validate())?;
        scoped("window", self.simulation().window(0.0).validate())?;
        scoped("ensemble", self.ensemble.validate())?;
        if self.physical.temperature != self.ensemble.v_th {
            return Err(config_error("ensemble.v_th", "disagrees with physical.temperature"));
        }
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(config_error(format!("protocol.{name}"), "must not be empty"))
            } else {
                Ok(())
            }
        };
        match &self.protocol {
            ProtocolConfig::Zeno(p) => nonempty("n_list", p.n_list.len()),
            ProtocolConfig::PulseWidth(p) => nonempty("tau_list", p.tau_list.len()),
            ProtocolConfig::Strength(p) => {
                nonempty("i_list", p.i_list.len())?;
                nonempty("n_list", p.n_list.len())
            }
            ProtocolConfig::Duration(p) => {
                nonempty("t_list", p.t_list.len())?;
                nonempty("tau_list", p.tau_list.len())
            }
            ProtocolConfig::Transport(p) => nonempty("n_list", p.n_list.len()),
            ProtocolConfig::Snapshot(_) => Ok(()),
        }?;
        if self.output.formats.is_empty() {
            return Err(config_error("output.formats", "must not be empty"));
        }
        Ok(())
    }

    /// The fully resolved document, pretty-printed.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact resolved document without the `output`
    /// section, hex encoded. Where results are written does not change them.
    pub fn hash(&self) -> String {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        if let Some(root) = doc.as_object_mut() {
            root.remove("output");
        }
        let compact = doc.to_string();
        Sha256::digest(compact.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
