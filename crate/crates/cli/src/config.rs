//! The run configuration document and dotted-key overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use radalt_core::dataset::DatasetConfig;
use radalt_core::dsp::SegmentConfig;
use radalt_eval::{LandingConfig, Mitigation, SweepConfig};
use radalt_tcn::{ModelConfig, TrainConfig};

/// Bad flags, unknown keys or invalid values. Maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandingRun {
    pub start_m: f64,
    pub end_m: f64,
    pub n_steps: usize,
    pub mitigations: Vec<Mitigation>,
    pub scene: LandingConfig,
}

impl Default for LandingRun {
    fn default() -> Self {
        Self {
            start_m: 900.0,
            end_m: 300.0,
            n_steps: 60,
            mitigations: vec![Mitigation::None, Mitigation::Lms],
            scene: LandingConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seed for model initialization; `--seed` also overwrites every section seed.
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub landing: LandingRun,
    pub segment: SegmentConfig,
}

impl RunConfig {
    /// Reads an optional JSON file on top of the defaults, then applies
    /// `key.path=value` overrides. Unknown keys are rejected at every step.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut doc = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            let user: Value = serde_json::from_str(&text)
                .map_err(|e| usage(format!("config {} is not valid JSON: {e}", path.display())))?;
            merge(&mut doc, user, "")?;
        }
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        serde_json::from_value(doc).map_err(|e| usage(format!("invalid configuration: {e}")))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.dataset.master_seed = seed;
        self.train.seed = seed;
        self.sweep.seed = seed;
        self.landing.scene.seed = seed;
    }

    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(dir.join(EFFECTIVE_CONFIG), bytes)?;
        Ok(())
    }
}

pub const EFFECTIVE_CONFIG: &str = "effective_config.json";

/// Object keys in `src` must already exist in `dst`; `null` slots accept anything.
fn merge(dst: &mut Value, src: Value, path: &str) -> anyhow::Result<()> {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match d.get_mut(&k) {
                    Some(slot) if slot.is_null() => *slot = v,
                    Some(slot) => merge(slot, v, &p)?,
                    None => return Err(usage(format!("unknown configuration key '{p}'"))),
                }
            }
            Ok(())
        }
        (d, s) => {
            *d = s;
            Ok(())
        }
    }
}

fn apply_override(doc: &mut Value, spec: &str) -> anyhow::Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| usage(format!("override '{spec}' must look like key.path=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = &mut *doc;
    for part in key.split('.') {
        slot = match slot {
            Value::Object(m) => m
                .get_mut(part)
                .ok_or_else(|| usage(format!("unknown configuration key '{key}'")))?,
            _ => return Err(usage(format!("'{key}' does not name a configuration field"))),
        };
    }
    if slot.is_object() && !value.is_object() {
        return Err(usage(format!("'{key}' is a section; override one of its fields instead")));
    }
    *slot = value;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_unknown_keys() {
        let c = RunConfig::load(None, &["dataset.n_train=64".into(), "model.variant=\"literal\"".into()]).unwrap();
        assert_eq!(c.dataset.n_train, 64);
        assert_eq!(c.model.variant, radalt_tcn::Variant::Literal);
        let c = RunConfig::load(None, &["model.variant=literal".into()]).unwrap();
        assert_eq!(c.model.variant, radalt_tcn::Variant::Literal);

        for bad in ["dataset.n_trian=3", "nope=1", "dataset=3", "dataset.n_train", "dataset.n_train=\"x\""] {
            let err = RunConfig::load(None, &[bad.into()]).unwrap_err();
            assert!(err.downcast_ref::<UsageError>().is_some(), "{bad}: {err}");
        }
    }

    #[test]
    fn file_merge_rejects_unknown_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"train": {"epochs": 3}, "sweep": {"n_trials": 2}}"#).unwrap();
        let c = RunConfig::load(Some(&p), &["train.epochs=4".into()]).unwrap();
        assert_eq!((c.train.epochs, c.sweep.n_trials), (4, 2));

        std::fs::write(&p, r#"{"train": {"epoch": 3}}"#).unwrap();
        assert!(RunConfig::load(Some(&p), &[]).is_err());

        c.write(dir.path()).unwrap();
        let back = RunConfig::load(Some(&dir.path().join(EFFECTIVE_CONFIG)), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn seed_reaches_every_section() {
        let mut c = RunConfig::default();
        c.set_seed(77);
        assert_eq!(
            [c.seed, c.dataset.master_seed, c.train.seed, c.sweep.seed, c.landing.scene.seed],
            [77; 5]
        );
    }
}
