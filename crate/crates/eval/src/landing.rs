//! Chirp-by-chirp altitude tracking along a synthetic descent.

use serde::{Deserialize, Serialize};

use radalt_core::dsp::{AltimeterProcessor, ProcessorConfig};
use radalt_core::interference::{InterferenceSpec, SirReference};
use radalt_core::lms::{BlockLms, LmsConfig};
use radalt_core::rng::{derive_named, derive_seed};
use radalt_core::scene::{compose_received, ClutterConfig, FadingConfig, InterfererConfig, SceneConfig};
use radalt_core::waveform::{generate_chirp, RadarParams};
use radalt_tcn::{denoise, Model};

use crate::error::{EvalError, Result};
use crate::sweep::{max_unambiguous_range, Mitigation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandingConfig {
    pub snr_db: Option<f64>,
    pub descent_rate_mps: f64,
    pub clutter: Option<ClutterConfig>,
    pub fading: Option<FadingConfig>,
    /// Interferer template; its seed is re-derived for every chirp.
    pub interference: Option<InterfererConfig>,
    pub seed: u64,
    pub radar: RadarParams,
    pub processor: ProcessorConfig,
    /// Set `persist_weights` to carry LMS weights from chirp to chirp.
    pub lms: LmsConfig,
}

impl Default for LandingConfig {
    fn default() -> Self {
        Self {
            snr_db: Some(20.0),
            descent_rate_mps: 5.0,
            clutter: Some(ClutterConfig::default()),
            fading: Some(FadingConfig::default()),
            interference: None,
            seed: 0,
            radar: RadarParams::default(),
            processor: ProcessorConfig::default(),
            lms: LmsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandingStep {
    pub step: usize,
    pub altitude_m: f64,
    /// Altitude of the whole-sample delay actually simulated.
    pub truth_m: f64,
    pub estimate_m: Option<f64>,
    /// Signed error; a miss is charged the maximum unambiguous range.
    pub error_m: f64,
}

/// `n` evenly spaced altitudes from `start` to `end` inclusive.
pub fn linear_descent(start_m: f64, end_m: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start_m],
        _ => (0..n).map(|i| start_m + (end_m - start_m) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn reseeded(spec: &InterferenceSpec, seed: u64) -> InterferenceSpec {
    let mut s = spec.clone();
    match &mut s {
        InterferenceSpec::Tones(t) => t.seed = seed,
        InterferenceSpec::Qpsk(q) => q.seed = seed,
        InterferenceSpec::Ofdm(o) => o.seed = seed,
    }
    s
}

/// Synthesizes and processes one chirp per schedule entry.
pub fn landing_scenario(
    schedule: &[f64],
    arm: Mitigation,
    cfg: &LandingConfig,
    model: Option<&Model<f32>>,
) -> Result<Vec<LandingStep>> {
    if schedule.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(EvalError::InvalidArgument("altitude schedule must be positive and finite".into()));
    }
    if arm == Mitigation::Tcn && model.is_none() {
        return Err(EvalError::Config("tcn mitigation requires a trained model checkpoint".into()));
    }
    let chirp = generate_chirp(&cfg.radar)?;
    let processor = AltimeterProcessor::new(cfg.radar.clone(), cfg.processor.clone())?;
    let mut lms = BlockLms::new(cfg.lms)?;

    let mut steps = Vec::with_capacity(schedule.len());
    for (i, &alt) in schedule.iter().enumerate() {
        let seed = derive_seed(cfg.seed, i as u64);
        let interference = cfg
            .interference
            .iter()
            .map(|ic| InterfererConfig { spec: reseeded(&ic.spec, derive_named(seed, "interferer")), overlap: ic.overlap })
            .collect();
        let scene = SceneConfig {
            altitude_m: alt,
            descent_rate_mps: cfg.descent_rate_mps,
            snr_db: cfg.snr_db,
            clutter: cfg.clutter.clone(),
            fading: cfg.fading.clone(),
            interference,
            sir_reference: SirReference::FullRecord,
        };
        let ex = compose_received(&chirp, &cfg.radar, &scene, seed)?;
        let out = match arm {
            Mitigation::None => ex.dirty.clone(),
            Mitigation::Lms => lms.filter(&ex.dirty, &chirp)?,
            Mitigation::Tcn => denoise(model.unwrap(), &ex.dirty)?,
        };
        let report = processor.process(&out)?;
        let truth = ex.meta.effective_altitude_m;
        steps.push(LandingStep {
            step: i,
            altitude_m: alt,
            truth_m: truth,
            estimate_m: report.altitude_m,
            error_m: report.altitude_m.map_or_else(|| max_unambiguous_range(&report), |a| a - truth),
        });
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{median, spearman};

    #[test]
    fn descent_schedule() {
        let s = linear_descent(900.0, 300.0, 61);
        assert_eq!(s.len(), 61);
        assert_eq!((s[0], s[60]), (900.0, 300.0));
        assert!((s[30] - 600.0).abs() < 1e-9);
        assert!(linear_descent(1.0, 2.0, 0).is_empty());
    }

    #[test]
    fn constant_altitude_clean_scene() {
        let cfg = LandingConfig { clutter: None, fading: None, snr_db: Some(30.0), descent_rate_mps: 0.0, ..Default::default() };
        let steps = landing_scenario(&[640.0; 20], Mitigation::None, &cfg, None).unwrap();
        assert_eq!(steps.len(), 20);
        let errs: Vec<f64> = steps.iter().map(|s| s.error_m.abs()).collect();
        assert!(median(&errs) < 5.0, "{errs:?}");
    }

    #[test]
    fn descent_errors_do_not_track_altitude() {
        let cfg = LandingConfig::default();
        let sched = linear_descent(900.0, 300.0, 60);
        let steps = landing_scenario(&sched, Mitigation::None, &cfg, None).unwrap();
        assert_eq!(steps.len(), 60);
        let errs: Vec<f64> = steps.iter().map(|s| s.error_m).collect();
        let rho = spearman(&sched, &errs).unwrap();
        assert!(rho.abs() < 0.3, "{rho}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = LandingConfig::default();
        assert!(landing_scenario(&[500.0, -1.0], Mitigation::None, &cfg, None).is_err());
        assert!(matches!(landing_scenario(&[500.0], Mitigation::Tcn, &cfg, None), Err(EvalError::Config(_))));
    }
}
