//! Paired SINR x overlap sweeps across mitigation arms.
//!
//! Every trial synthesizes one received chirp; all arms process that same
//! signal. Noise sits at a fixed SNR and the interferer power is set so that
//! `SINR = P_clean / (P_noise + P_interference)` hits the grid value.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use radalt_core::dataset::{qpsk_in_band, Span};
use radalt_core::dsp::{pslr, AltimeterProcessor, ChirpReport, ProcessorConfig};
use radalt_core::interference::{InterferenceSpec, OfdmSpec, OverlapSpec, SirReference, ToneSpec};
use radalt_core::lms::{block_lms, LmsConfig};
use radalt_core::rng::{derive_named, derive_seed, rng_from_seed};
use radalt_core::scene::{
    compose_received, ClutterConfig, Example, FadingConfig, InterfererConfig, SceneConfig,
};
use radalt_core::waveform::{generate_chirp, RadarParams};
use radalt_core::ComplexSignal;
use radalt_tcn::{denoise, Model};

use crate::error::{EvalError, Result};
use crate::metrics::{detection_probability, median, rms};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mitigation {
    None,
    Lms,
    Tcn,
}

impl Mitigation {
    pub fn name(&self) -> &'static str {
        match self {
            Mitigation::None => "none",
            Mitigation::Lms => "lms",
            Mitigation::Tcn => "tcn",
        }
    }
}

impl std::str::FromStr for Mitigation {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Mitigation::None),
            "lms" => Ok(Mitigation::Lms),
            "tcn" => Ok(Mitigation::Tcn),
            other => Err(EvalError::Config(format!("unknown mitigation '{other}' (none, lms, tcn)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceClass {
    #[default]
    Qpsk,
    Tones,
    Ofdm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub sinr_grid: Vec<f64>,
    pub overlap_grid: Vec<f64>,
    pub n_trials: usize,
    pub mitigations: Vec<Mitigation>,
    pub interference: InterferenceClass,
    /// Fixed thermal SNR; interference fills the rest of the SINR budget.
    pub snr_db: f64,
    pub altitude_m: Span,
    pub descent_rate_mps: Span,
    pub qpsk_bw_fraction: Span,
    pub max_tones: usize,
    pub ofdm_channel_bw_hz: f64,
    pub fading: Option<FadingConfig>,
    pub clutter: Option<ClutterConfig>,
    pub detection_threshold_m: f64,
    pub seed: u64,
    pub radar: RadarParams,
    pub processor: ProcessorConfig,
    pub lms: LmsConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sinr_grid: vec![-15.0, -10.0, -5.0, 0.0],
            overlap_grid: vec![0.25, 0.5, 0.75, 1.0],
            n_trials: 25,
            mitigations: vec![Mitigation::None, Mitigation::Lms, Mitigation::Tcn],
            interference: InterferenceClass::Qpsk,
            snr_db: 20.0,
            altitude_m: Span::new(100.0, 1500.0),
            descent_rate_mps: Span::new(0.0, 8.0),
            qpsk_bw_fraction: Span::new(0.05, 0.5),
            max_tones: 8,
            ofdm_channel_bw_hz: 5e6,
            fading: Some(FadingConfig::default()),
            clutter: Some(ClutterConfig::default()),
            detection_threshold_m: 5.0,
            seed: 0,
            radar: RadarParams::default(),
            processor: ProcessorConfig::default(),
            lms: LmsConfig::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EvalError::Config(m));
        if self.sinr_grid.is_empty() || self.overlap_grid.is_empty() {
            return bad("sinr_grid and overlap_grid must be non-empty".into());
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.mitigations.is_empty() {
            return bad("at least one mitigation arm is required".into());
        }
        for &s in &self.sinr_grid {
            if !(s < self.snr_db) {
                return bad(format!("SINR {s} dB must lie below the fixed SNR {} dB", self.snr_db));
            }
        }
        for &o in &self.overlap_grid {
            if !(0.0..=1.0).contains(&o) {
                return bad(format!("overlap {o} outside [0, 1]"));
            }
        }
        if self.altitude_m.min <= 0.0 || self.altitude_m.max < self.altitude_m.min {
            return bad("altitude range must be positive and ordered".into());
        }
        self.radar.validate()?;
        self.processor.cfar.validate()?;
        self.lms.validate()?;
        Ok(())
    }
}

/// `SIR = 1 / (1/SINR - 1/SNR)` in dB.
pub fn sir_for_sinr(sinr_db: f64, snr_db: f64) -> Result<f64> {
    let inv = 10f64.powf(-sinr_db / 10.0) - 10f64.powf(-snr_db / 10.0);
    if inv <= 0.0 {
        return Err(EvalError::Config(format!("SINR {sinr_db} dB not reachable at SNR {snr_db} dB")));
    }
    Ok(-10.0 * inv.log10())
}

/// Per-trial seed shared by every mitigation arm.
pub fn trial_seed(cfg: &SweepConfig, sinr_idx: usize, overlap_idx: usize, trial: usize) -> u64 {
    let cell = derive_seed(derive_named(cfg.seed, "cell"), (sinr_idx * cfg.overlap_grid.len() + overlap_idx) as u64);
    derive_seed(cell, trial as u64)
}

/// Scene for one trial at the given grid point.
pub fn trial_scene(cfg: &SweepConfig, sinr_db: f64, overlap: f64, seed: u64) -> Result<SceneConfig> {
    let mut rng = rng_from_seed(derive_named(seed, "trial"));
    let sir = sir_for_sinr(sinr_db, cfg.snr_db)?;
    let b = cfg.radar.bandwidth_hz;
    let len = cfg.radar.samples_per_chirp();
    let spec = match cfg.interference {
        InterferenceClass::Qpsk => {
            let bw = cfg.qpsk_bw_fraction.sample(&mut rng) * b;
            InterferenceSpec::Qpsk(qpsk_in_band(bw, b, len, &mut rng, sir, derive_named(seed, "qpsk")))
        }
        InterferenceClass::Tones => {
            let n = rng.random_range(1..=cfg.max_tones.max(1));
            InterferenceSpec::Tones(ToneSpec {
                n_tones: n,
                sir_db: sir,
                band_hz: b,
                frequencies_hz: None,
                seed: derive_named(seed, "tones"),
            })
        }
        InterferenceClass::Ofdm => InterferenceSpec::Ofdm(OfdmSpec {
            subcarrier_spacing_hz: 15e3,
            channel_bw_hz: cfg.ofdm_channel_bw_hz,
            sample_rate_hz: cfg.radar.fs_hz,
            n_symbols: None,
            cp_fraction: 0.07,
            sir_db: sir,
            seed: derive_named(seed, "ofdm"),
        }),
    };
    Ok(SceneConfig {
        altitude_m: cfg.altitude_m.sample(&mut rng),
        descent_rate_mps: cfg.descent_rate_mps.sample(&mut rng),
        snr_db: Some(cfg.snr_db),
        clutter: cfg.clutter.clone(),
        fading: cfg.fading.clone(),
        interference: vec![InterfererConfig { spec, overlap: OverlapSpec { fraction: overlap } }],
        sir_reference: SirReference::FullRecord,
    })
}

/// Applies one mitigation to the received signal.
pub struct Mitigator<'a> {
    reference: ComplexSignal,
    lms: LmsConfig,
    model: Option<&'a Model<f32>>,
}

impl<'a> Mitigator<'a> {
    pub fn new(radar: &RadarParams, lms: LmsConfig, model: Option<&'a Model<f32>>) -> Result<Self> {
        Ok(Self { reference: generate_chirp(radar)?, lms, model })
    }

    pub fn apply(&self, arm: Mitigation, rx: &ComplexSignal) -> Result<ComplexSignal> {
        match arm {
            Mitigation::None => Ok(rx.clone()),
            Mitigation::Lms => Ok(block_lms(rx, &self.reference, &self.lms)?.0),
            Mitigation::Tcn => {
                let m = self.model.ok_or_else(|| EvalError::Config("tcn mitigation requires a trained model checkpoint".into()))?;
                Ok(denoise(m, rx)?)
            }
        }
    }
}

/// Outcome of one arm on one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub mitigation: Mitigation,
    pub sinr_db: f64,
    pub overlap: f64,
    pub trial: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub sir_db: f64,
    pub truth_m: f64,
    pub estimate_m: Option<f64>,
    /// Signed error, or the clamp value on a miss.
    pub error_m: f64,
    pub recon_rmse: f64,
    pub pslr_db: Option<f64>,
    /// SHA-256 of the received samples fed to the arm.
    pub input_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mitigation: Mitigation,
    pub sinr_db: f64,
    pub overlap: f64,
    pub rmse_m: f64,
    pub pd: f64,
    /// Median over trials of the RMSE between the arm output and the clean signal.
    pub recon_rmse: f64,
    pub pslr_db: f64,
    pub miss_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
    pub trials: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn cell(&self, arm: Mitigation, sinr_db: f64, overlap: f64) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.mitigation == arm && c.sinr_db == sinr_db && c.overlap == overlap)
    }
}

pub fn digest(sig: &ComplexSignal) -> String {
    let mut h = Sha256::new();
    for s in sig.samples() {
        h.update(s.re.to_le_bytes());
        h.update(s.im.to_le_bytes());
    }
    radalt_core::dataset::hex(&h.finalize())
}

/// Largest range the profile can represent; the error charged for a miss.
pub fn max_unambiguous_range(report: &ChirpReport) -> f64 {
    report.down_profile.magnitudes.len() as f64 * report.down_profile.bin_spacing_m
}

fn mean_pslr(report: &ChirpReport) -> Option<f64> {
    let v: Vec<f64> = [&report.up_profile, &report.down_profile]
        .iter()
        .filter_map(|p| pslr(p).ok())
        .filter(|v| v.is_finite())
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Processes one arm output against the ground truth.
pub fn score(
    processor: &AltimeterProcessor,
    output: &ComplexSignal,
    example: &Example,
) -> Result<(Option<f64>, f64, f64, Option<f64>)> {
    let report = processor.process(output)?;
    let truth = example.meta.effective_altitude_m;
    let error = match report.altitude_m {
        Some(a) => a - truth,
        None => max_unambiguous_range(&report),
    };
    let recon = output.rmse(&example.clean)?;
    Ok((report.altitude_m, error, recon, mean_pslr(&report)))
}

fn run_trial(
    cfg: &SweepConfig,
    chirp: &ComplexSignal,
    processor: &AltimeterProcessor,
    mitigator: &Mitigator,
    (si, oi, trial): (usize, usize, usize),
) -> Result<Vec<TrialRecord>> {
    let (sinr, overlap) = (cfg.sinr_grid[si], cfg.overlap_grid[oi]);
    let seed = trial_seed(cfg, si, oi, trial);
    let scene = trial_scene(cfg, sinr, overlap, seed)?;
    let ex = compose_received(chirp, &cfg.radar, &scene, seed)?;
    let input_digest = digest(&ex.dirty);
    let sir_db = scene.interference[0].spec.sir_db();
    cfg.mitigations
        .iter()
        .map(|&arm| {
            let out = mitigator.apply(arm, &ex.dirty)?;
            let (estimate_m, error_m, recon_rmse, pslr_db) = score(processor, &out, &ex)?;
            Ok(TrialRecord {
                mitigation: arm,
                sinr_db: sinr,
                overlap,
                trial,
                seed,
                snr_db: cfg.snr_db,
                sir_db,
                truth_m: ex.meta.effective_altitude_m,
                estimate_m,
                error_m,
                recon_rmse,
                pslr_db,
                input_digest: input_digest.clone(),
            })
        })
        .collect()
}

/// Runs the full grid. Trials run in parallel; results are assembled in grid order.
pub fn run_sweep(cfg: &SweepConfig, model: Option<&Model<f32>>, lms: Option<&LmsConfig>) -> Result<SweepResult> {
    cfg.validate()?;
    if cfg.mitigations.contains(&Mitigation::Tcn) && model.is_none() {
        return Err(EvalError::Config("tcn mitigation requested but no model checkpoint was provided".into()));
    }
    let lms_cfg = lms.copied().unwrap_or(cfg.lms);
    let chirp = generate_chirp(&cfg.radar)?;
    let processor = AltimeterProcessor::new(cfg.radar.clone(), cfg.processor.clone())?;
    let mitigator = Mitigator::new(&cfg.radar, lms_cfg, model)?;

    let jobs: Vec<(usize, usize, usize)> = (0..cfg.sinr_grid.len())
        .flat_map(|s| (0..cfg.overlap_grid.len()).flat_map(move |o| (0..cfg.n_trials).map(move |t| (s, o, t))))
        .collect();
    let per_trial: Vec<Vec<TrialRecord>> = jobs
        .par_iter()
        .map(|&j| run_trial(cfg, &chirp, &processor, &mitigator, j))
        .collect::<Result<_>>()?;
    let trials: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();

    let mut cells = Vec::new();
    for &arm in &cfg.mitigations {
        for &sinr in &cfg.sinr_grid {
            for &overlap in &cfg.overlap_grid {
                let rows: Vec<&TrialRecord> = trials
                    .iter()
                    .filter(|r| r.mitigation == arm && r.sinr_db == sinr && r.overlap == overlap)
                    .collect();
                cells.push(summarize(arm, sinr, overlap, &rows, cfg.detection_threshold_m)?);
            }
        }
    }
    Ok(SweepResult { config: cfg.clone(), cells, trials })
}

fn summarize(arm: Mitigation, sinr: f64, overlap: f64, rows: &[&TrialRecord], threshold: f64) -> Result<CellResult> {
    let errors: Vec<f64> = rows.iter().map(|r| r.error_m).collect();
    let detections: Vec<Option<f64>> = rows.iter().map(|r| r.estimate_m.map(|_| r.error_m)).collect();
    let misses = rows.iter().filter(|r| r.estimate_m.is_none()).count();
    Ok(CellResult {
        mitigation: arm,
        sinr_db: sinr,
        overlap,
        rmse_m: rms(&errors)?,
        pd: detection_probability(&detections, threshold)?,
        recon_rmse: median(&rows.iter().map(|r| r.recon_rmse).collect::<Vec<_>>()),
        pslr_db: median(&rows.iter().filter_map(|r| r.pslr_db).collect::<Vec<_>>()),
        miss_rate: misses as f64 / rows.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            sinr_grid: vec![-10.0, 5.0],
            overlap_grid: vec![0.25, 1.0],
            n_trials: 3,
            mitigations: vec![Mitigation::None, Mitigation::Lms],
            ..Default::default()
        }
    }

    #[test]
    fn sir_composition() {
        let sir = sir_for_sinr(-10.0, 20.0).unwrap();
        let sinr = 1.0 / (10f64.powf(-sir / 10.0) + 10f64.powf(-2.0));
        assert!((10.0 * sinr.log10() + 10.0).abs() < 1e-12);
        assert!(sir_for_sinr(20.0, 20.0).is_err());
    }

    #[test]
    fn grid_shape_and_pairing() {
        let cfg = small();
        let r = run_sweep(&cfg, None, None).unwrap();
        assert_eq!(r.cells.len(), 2 * 2 * 2);
        assert_eq!(r.trials.len(), 2 * 2 * 3 * 2);
        for pair in r.trials.chunks(2) {
            assert_eq!(pair[0].input_digest, pair[1].input_digest);
            assert_eq!(pair[0].seed, pair[1].seed);
            assert_eq!(pair[0].truth_m, pair[1].truth_m);
        }
        for c in &r.cells {
            assert!(c.rmse_m >= 0.0 && (0.0..=1.0).contains(&c.pd) && (0.0..=1.0).contains(&c.miss_rate));
        }
    }

    #[test]
    fn tcn_without_model_is_a_config_error() {
        let cfg = SweepConfig { mitigations: vec![Mitigation::Tcn], ..small() };
        assert!(matches!(run_sweep(&cfg, None, None), Err(EvalError::Config(_))));
    }

    #[test]
    fn realized_sinr_matches_grid() {
        let cfg = small();
        let chirp = generate_chirp(&cfg.radar).unwrap();
        let seed = trial_seed(&cfg, 0, 1, 0);
        let scene = trial_scene(&cfg, -10.0, 1.0, seed).unwrap();
        let rec = radalt_core::scene::compose_scene(&chirp, &cfg.radar, &scene, seed).unwrap();
        let p_c = rec.example.clean.power();
        let p_ni = rec.noise.power() + rec.interference.power();
        let sinr = 10.0 * (p_c / p_ni).log10();
        // the noise is random; its realized power wanders a little around the target
        assert!((sinr + 10.0).abs() < 0.05, "{sinr}");
    }

    #[test]
    fn invalid_configs() {
        assert!(SweepConfig { sinr_grid: vec![], ..small() }.validate().is_err());
        assert!(SweepConfig { n_trials: 0, ..small() }.validate().is_err());
        assert!(SweepConfig { overlap_grid: vec![1.5], ..small() }.validate().is_err());
        assert!(SweepConfig { sinr_grid: vec![25.0], ..small() }.validate().is_err());
        assert!("tcn".parse::<Mitigation>().is_ok());
        assert!("foo".parse::<Mitigation>().is_err());
    }
}
