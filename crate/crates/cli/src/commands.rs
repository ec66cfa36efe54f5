//! Subcommand implementations. Each writes `effective_config.json` into its
//! output directory before doing any work.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use radalt_core::dataset::{generate_dataset, load_dataset};
use radalt_core::dsp::segment_frames;
use radalt_core::waveform::generate_chirp;
use radalt_core::{Complex64, ComplexSignal};
use radalt_eval::{emit_report, landing_scenario, linear_descent, run_sweep, Mitigation};
use radalt_tcn::checkpoint::Checkpoint;
use radalt_tcn::{denoise, load_checkpoint, load_weights, save_checkpoint, training_pair, Model, Pair, Trainer, Variant};

use crate::config::{usage, RunConfig};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const HISTORY_FILE: &str = "history.json";
pub const LANDING_FILE: &str = "landing.csv";

pub struct GenerateArgs {
    pub n: Option<usize>,
    pub val: Option<usize>,
    pub len: Option<usize>,
}

pub fn generate(mut cfg: RunConfig, out: &Path, a: &GenerateArgs) -> anyhow::Result<()> {
    if let Some(n) = a.n {
        cfg.dataset.n_train = n;
    }
    if let Some(v) = a.val {
        cfg.dataset.n_val = v;
    }
    if let Some(l) = a.len {
        cfg.dataset.len = l;
    }
    cfg.dataset.validate().map_err(|e| usage(e.to_string()))?;
    cfg.write(out)?;
    let m = generate_dataset(&cfg.dataset, out)?;
    println!("train {} examples sha256 {}", m.train.count, m.train.sha256);
    println!("val   {} examples sha256 {}", m.val.count, m.val.sha256);
    Ok(())
}

pub struct TrainArgs {
    pub data: Option<PathBuf>,
    pub variant: Option<Variant>,
    pub epochs: Option<usize>,
    pub resume: Option<PathBuf>,
}

fn pairs(examples: impl Iterator<Item = (ComplexSignal, ComplexSignal)>) -> anyhow::Result<Vec<Pair>> {
    examples
        .map(|(dirty, clean)| {
            let (x, y) = training_pair(&dirty, &clean)?;
            Ok(Pair { x, y })
        })
        .collect()
}

pub fn train(mut cfg: RunConfig, out: &Path, a: &TrainArgs) -> anyhow::Result<()> {
    if let Some(v) = a.variant {
        cfg.model = radalt_tcn::ModelConfig { variant: v, ..cfg.model.clone() };
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    let resumed = match &a.resume {
        Some(p) => {
            let ck = load_checkpoint(p, None).with_context(|| format!("loading {}", p.display()))?;
            cfg.model = ck.model.config().clone();
            Some(ck)
        }
        None => None,
    };

    let (train, val) = match &a.data {
        Some(dir) => {
            let ds = load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
            cfg.dataset = ds.manifest.config.clone();
            let t = pairs(ds.train.into_iter().map(|e| (e.dirty, e.clean)))?;
            let v = pairs(ds.val.into_iter().map(|e| (e.dirty, e.clean)))?;
            (t, v)
        }
        None => {
            let d = &cfg.dataset;
            d.validate().map_err(|e| usage(e.to_string()))?;
            let t = pairs(d.synthesize(0..d.n_train)?.into_iter().map(|e| (e.dirty, e.clean)))?;
            let v = pairs(d.synthesize(d.n_train..d.n_train + d.n_val)?.into_iter().map(|e| (e.dirty, e.clean)))?;
            (t, v)
        }
    };
    if cfg.dataset.len != cfg.model.input_len {
        bail!(usage(format!(
            "dataset length {} does not match model input_len {}",
            cfg.dataset.len, cfg.model.input_len
        )));
    }
    cfg.train.validate(train.len()).map_err(|e| usage(e.to_string()))?;
    cfg.write(out)?;

    let mut trainer = match resumed {
        Some(ck) => ck.into_trainer(cfg.train.clone())?,
        None => Trainer::new(Model::build(cfg.model.clone(), cfg.seed)?, cfg.train.clone()),
    };
    let best_path = out.join(BEST_CHECKPOINT);
    let last_path = out.join(LAST_CHECKPOINT);
    trainer.fit(&train, &val, |t, rec| {
        println!("epoch {:4}  train {:.6e}  val {:.6e}", rec.epoch, rec.train_loss, rec.val_loss);
        save_checkpoint(&Checkpoint::from_trainer(t), &last_path)?;
        if t.history.best_epoch == Some(rec.epoch) {
            let mut best = Checkpoint::weights_only(t.best_model()?);
            best.epochs_completed = t.epochs_completed();
            best.history = Some(t.history.clone());
            save_checkpoint(&best, &best_path)?;
        }
        Ok(())
    })?;
    if !best_path.exists() {
        save_checkpoint(&Checkpoint::weights_only(trainer.best_model()?), &best_path)?;
    }
    let mut h = serde_json::to_vec_pretty(&trainer.history)?;
    h.push(b'\n');
    fs::write(out.join(HISTORY_FILE), h)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Scenario {
    Sweep,
    Landing,
}

pub struct EvaluateArgs {
    pub mitigations: Option<Vec<Mitigation>>,
    pub checkpoint: Option<PathBuf>,
    pub scenario: Scenario,
}

pub fn evaluate(mut cfg: RunConfig, out: &Path, a: &EvaluateArgs) -> anyhow::Result<()> {
    if let Some(m) = &a.mitigations {
        match a.scenario {
            Scenario::Sweep => cfg.sweep.mitigations = m.clone(),
            Scenario::Landing => cfg.landing.mitigations = m.clone(),
        }
    }
    let arms = match a.scenario {
        Scenario::Sweep => &cfg.sweep.mitigations,
        Scenario::Landing => &cfg.landing.mitigations,
    };
    let model = match &a.checkpoint {
        Some(p) => {
            let m = load_weights(p, None).with_context(|| format!("loading {}", p.display()))?;
            cfg.model = m.config().clone();
            Some(m)
        }
        None if arms.contains(&Mitigation::Tcn) => {
            bail!(usage("the tcn mitigation needs --checkpoint pointing at a trained model"))
        }
        None => None,
    };
    if a.scenario == Scenario::Sweep {
        cfg.sweep.validate().map_err(|e| usage(e.to_string()))?;
    }
    cfg.write(out)?;

    match a.scenario {
        Scenario::Sweep => {
            let result = run_sweep(&cfg.sweep, model.as_ref(), None)?;
            for f in emit_report(&result, out)? {
                println!("wrote {}", f.display());
            }
        }
        Scenario::Landing => {
            let l = &cfg.landing;
            let sched = linear_descent(l.start_m, l.end_m, l.n_steps);
            let mut csv = String::from("mitigation,step,altitude_m,truth_m,estimate_m,error_m\n");
            for &arm in &l.mitigations {
                for s in landing_scenario(&sched, arm, &l.scene, model.as_ref())? {
                    let est = s.estimate_m.map_or(String::new(), |v| v.to_string());
                    writeln!(csv, "{},{},{},{},{},{}", arm.name(), s.step, s.altitude_m, s.truth_m, est, s.error_m)?;
                }
            }
            fs::write(out.join(LANDING_FILE), csv)?;
            println!("wrote {}", out.join(LANDING_FILE).display());
        }
    }
    Ok(())
}

pub struct DenoiseArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub checkpoint: PathBuf,
    pub segment: bool,
}

/// Interleaved little-endian complex float32: `i0 q0 i1 q1 ...`.
pub fn read_cf32(bytes: &[u8], fs: f64) -> anyhow::Result<ComplexSignal> {
    if bytes.len() % 8 != 0 {
        bail!(usage(format!("raw IQ input has {} bytes, not a whole number of cf32 samples", bytes.len())));
    }
    let samples = bytes
        .chunks_exact(8)
        .map(|c| {
            let i = f32::from_le_bytes(c[..4].try_into().unwrap());
            let q = f32::from_le_bytes(c[4..].try_into().unwrap());
            Complex64::new(i as f64, q as f64)
        })
        .collect();
    Ok(ComplexSignal::new(samples, fs)?)
}

pub fn write_cf32(sig: &ComplexSignal) -> Vec<u8> {
    let mut out = Vec::with_capacity(sig.len() * 8);
    for v in sig.samples() {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    out
}

pub fn denoise_cmd(mut cfg: RunConfig, out: &Path, a: &DenoiseArgs) -> anyhow::Result<()> {
    let model = load_weights(&a.checkpoint, None).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    cfg.model = model.config().clone();
    cfg.write(out)?;
    let frame = model.geometry().input_len;
    let radar = &cfg.dataset.radar;
    let rx = read_cf32(&fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?, radar.fs_hz)?;

    let starts: Vec<usize> = if a.segment {
        let reference = generate_chirp(radar)?;
        if reference.len() != frame {
            bail!(usage(format!(
                "radar chirp has {} samples but the model expects frames of {frame}",
                reference.len()
            )));
        }
        let s = segment_frames(&rx, &reference, &cfg.segment)?;
        println!("segmentation found {} frame(s)", s.len());
        s
    } else {
        if rx.is_empty() || rx.len() % frame != 0 {
            bail!(usage(format!(
                "input holds {} samples; expected a non-zero multiple of the frame length {frame}",
                rx.len()
            )));
        }
        (0..rx.len()).step_by(frame).collect()
    };

    let mut cleaned = rx.samples().to_vec();
    for &s in starts.iter().filter(|&&s| s + frame <= rx.len()) {
        let y = denoise(&model, &rx.slice(s, frame)?)?;
        cleaned[s..s + frame].copy_from_slice(y.samples());
    }
    let y = ComplexSignal::new(cleaned, rx.fs())?;
    fs::write(&a.output, write_cf32(&y)).with_context(|| format!("writing {}", a.output.display()))?;
    Ok(())
}
