//! Acceptance run: one `[PASS]`/`[FAIL]` line per criterion, non-zero exit
//! if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use radalt_core::dataset::DatasetConfig;
use radalt_core::dsp::{cfar_crossings, AltimeterProcessor, CfarConfig, Detection, ProcessorConfig};
use radalt_core::lms::{block_lms, LmsConfig};
use radalt_core::rng::{derive_seed, rng_from_seed};
use radalt_core::scene::{compose_received, SceneConfig};
use radalt_core::waveform::generate_chirp;
use radalt_core::{Complex64, ComplexSignal, RadarParams};
use radalt_eval::report::cells_csv;
use radalt_eval::{run_sweep, Mitigation, SweepConfig, SweepResult};
use radalt_tcn::config::GROUPS;
use radalt_tcn::gradcheck::gradient_check;
use radalt_tcn::train::{evaluate_loss, Trainer};
use radalt_tcn::{training_pair, Geometry, Model, ModelConfig, Pair, TrainConfig, Variant};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, budget: Duration, res: Check) -> Check {
    let res = res.map(|d| format!("{d}; {elapsed:.1?}"));
    match res {
        Ok(d) if elapsed > budget => Err(format!("{d} exceeds the {budget:?} budget")),
        other => other.map_err(|e| if e.contains("budget") { e } else { format!("{e}; {elapsed:.1?}") }),
    }
}

fn run(id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let res = within(start.elapsed(), budget, res);
    let (tag, detail) = match &res {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("[{tag}] {id:>2}. {name}: {detail}");
    res.is_ok()
}

fn geometry_audit() -> Check {
    let lit = Geometry::new(&ModelConfig::with_variant(Variant::Literal)).map_err(|e| e.to_string())?;
    let pm: Model<f32> = Model::build(ModelConfig::default(), 0).map_err(|e| e.to_string())?;
    let g = pm.geometry();
    let enc = lit.encoder_lengths();
    let dec = lit.decoder_lengths();
    let ok = enc == [7500, 7502, 7502, 7498]
        && dec == [117, 349, 1744, 8719, 7500]
        && g.decoder_lengths() == dec
        && pm.n_params() == 981_442
        && g.n_params == pm.n_params()
        && (900_000..=1_100_000).contains(&pm.n_params());
    ensure(ok, format!("literal encoder {enc:?}, decoder {dec:?}, parameter_matched {} params", pm.n_params()))
}

fn gradient_fidelity() -> Check {
    let mut worst = (0.0f64, "");
    let mut covered = [false; GROUPS.len()];
    for variant in [Variant::ParameterMatched, Variant::Literal] {
        for seed in 0..4 {
            for (gi, c) in gradient_check(variant, seed, 1e-5).map_err(|e| e.to_string())?.into_iter().enumerate() {
                if c.max_rel_err > worst.0 {
                    worst = (c.max_rel_err, c.group);
                }
                covered[gi] |= c.max_abs_grad > 0.0;
            }
        }
    }
    let missing: Vec<&str> = GROUPS.iter().zip(covered).filter(|(_, c)| !c).map(|(g, _)| *g).collect();
    ensure(
        worst.0 < 1e-4 && missing.is_empty(),
        format!("max relative error {:.2e} ({}), groups without gradient {missing:?}", worst.0, worst.1),
    )
}

fn pairs(cfg: &DatasetConfig, range: std::ops::Range<usize>) -> Vec<Pair> {
    cfg.synthesize(range)
        .unwrap()
        .iter()
        .map(|ex| {
            let (x, y) = training_pair(&ex.dirty, &ex.clean).unwrap();
            Pair { x, y }
        })
        .collect()
}

fn overfit() -> Check {
    let data = pairs(&DatasetConfig { master_seed: 41, ..Default::default() }, 0..8);
    let model: Model<f32> = Model::build(ModelConfig::default(), 1).map_err(|e| e.to_string())?;
    let before = evaluate_loss(&model, &data).map_err(|e| e.to_string())?;
    let mut t = Trainer::new(model, TrainConfig { batch_size: 8, epochs: 500, seed: 3, ..Default::default() });
    t.fit(&data, &data, |_, _| Ok(())).map_err(|e| e.to_string())?;
    let after = evaluate_loss(&t.model, &data).map_err(|e| e.to_string())?;
    ensure(after < 1e-3, format!("MSE {before:.3e} -> {after:.3e} after 500 steps"))
}

const TRAIN_EXAMPLES: usize = 2000;
const VAL_EXAMPLES: usize = 200;
const TRAIN_EPOCHS: usize = 70;

fn train_model() -> Result<Model<f32>, String> {
    let ds = DatasetConfig { n_train: TRAIN_EXAMPLES, n_val: VAL_EXAMPLES, master_seed: 1001, ..Default::default() };
    let train = pairs(&ds, 0..TRAIN_EXAMPLES);
    let val = pairs(&ds, TRAIN_EXAMPLES..TRAIN_EXAMPLES + VAL_EXAMPLES);
    let model: Model<f32> = Model::build(ModelConfig::default(), 1001).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { batch_size: 32, epochs: TRAIN_EPOCHS, seed: 1001, ..Default::default() };
    let mut t = Trainer::new(model, cfg);
    let start = Instant::now();
    t.fit(&train, &val, |_, r| {
        eprintln!("    epoch {:>3}  train {:.4e}  val {:.4e}  ({:.0?})", r.epoch, r.train_loss, r.val_loss, start.elapsed());
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    t.best_model().map_err(|e| e.to_string())
}

fn sweep_config() -> SweepConfig {
    SweepConfig { n_trials: 25, seed: 2002, ..Default::default() }
}

fn print_cells(r: &SweepResult) {
    eprintln!("    {:<5} {:>6} {:>8} {:>12} {:>6} {:>10} {:>6}", "arm", "sinr", "overlap", "rmse_m", "pd", "recon", "miss");
    for c in &r.cells {
        eprintln!(
            "    {:<5} {:>6.1} {:>8.2} {:>12.2} {:>6.2} {:>10.4} {:>6.2}",
            c.mitigation.name(),
            c.sinr_db,
            c.overlap,
            c.rmse_m,
            c.pd,
            c.recon_rmse,
            c.miss_rate
        );
    }
}

fn desk_reproduction(sweep: &Result<SweepResult, String>) -> Check {
    let r = sweep.as_ref().map_err(|e| e.clone())?;
    let cfg = &r.config;
    let (mut recon_ok, mut rmse_wins, mut total) = (0, 0, 0);
    let mut lms_ok = true;
    let mut lms_cells = Vec::new();
    for &s in &cfg.sinr_grid {
        for &o in &cfg.overlap_grid {
            let none = r.cell(Mitigation::None, s, o).unwrap();
            let tcn = r.cell(Mitigation::Tcn, s, o).unwrap();
            total += 1;
            recon_ok += usize::from(tcn.recon_rmse < none.recon_rmse);
            rmse_wins += usize::from(tcn.rmse_m < none.rmse_m);
            if o == 1.0 && s <= -10.0 {
                let lms = r.cell(Mitigation::Lms, s, o).unwrap();
                lms_ok &= tcn.rmse_m < lms.rmse_m;
                lms_cells.push(format!("{s} dB: tcn {:.1} m vs lms {:.1} m", tcn.rmse_m, lms.rmse_m));
            }
        }
    }
    let a = recon_ok == total;
    let b = rmse_wins as f64 >= 0.8 * total as f64;
    let detail = format!(
        "(a) recon RMSE tcn<none in {recon_ok}/{total} cells [{}]; (b) altitude RMSE tcn<none in {rmse_wins}/{total} cells [{}]; (c) {} [{}]",
        if a { "ok" } else { "fail" },
        if b { "ok" } else { "fail" },
        lms_cells.join(", "),
        if lms_ok { "ok" } else { "fail" },
    );
    ensure(a && b && lms_ok, detail)
}

fn processor() -> AltimeterProcessor {
    AltimeterProcessor::new(RadarParams::default(), ProcessorConfig::default()).unwrap()
}

fn strongest(d: &[Detection]) -> Option<f64> {
    d.iter().max_by(|a, b| a.power.total_cmp(&b.power)).map(|d| d.range_m)
}

/// Returns per-trial (up error, down error, averaged error); a miss is an error.
fn chain_errors(scene: &SceneConfig, trials: u64, seed: u64) -> Result<Vec<(f64, f64, f64)>, String> {
    let p = RadarParams::default();
    let chirp = generate_chirp(&p).map_err(|e| e.to_string())?;
    let proc = processor();
    (0..trials)
        .map(|t| {
            let ex = compose_received(&chirp, &p, scene, derive_seed(seed, t)).map_err(|e| e.to_string())?;
            let r = proc.process(&ex.dirty).map_err(|e| e.to_string())?;
            let truth = ex.meta.effective_altitude_m;
            let miss = || format!("trial {t}: no detection");
            Ok((
                strongest(&r.up_detections).ok_or_else(miss)? - truth,
                strongest(&r.down_detections).ok_or_else(miss)? - truth,
                r.altitude_m.ok_or_else(miss)? - truth,
            ))
        })
        .collect()
}

fn clean_chain() -> Check {
    let scene = SceneConfig { snr_db: Some(30.0), ..SceneConfig::clear(500.0) };
    let mut abs: Vec<f64> = chain_errors(&scene, 100, 5)?.iter().map(|e| e.2.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let (med, max) = (0.5 * (abs[49] + abs[50]), abs[99]);
    ensure(med < 5.0 && max < 20.0, format!("median |error| {med:.3} m, max {max:.3} m over 100 trials"))
}

fn cfar_calibration() -> Check {
    let cfg = CfarConfig::default();
    let mut rng = rng_from_seed(606);
    let (mut cells, mut alarms) = (0usize, 0usize);
    while cells < 2_000_000 {
        let noise: Vec<f64> = (0..8192).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        alarms += cfar_crossings(&noise, &cfg).map_err(|e| e.to_string())?.iter().filter(|&&h| h).count();
        cells += noise.len();
    }
    let pfa = alarms as f64 / cells as f64;
    ensure(
        (cfg.pfa / 3.0..=3.0 * cfg.pfa).contains(&pfa),
        format!("measured Pfa {pfa:.3e} ({alarms} alarms in {cells} cells), target {:.0e}", cfg.pfa),
    )
}

fn doppler_cancellation() -> Check {
    let scene = SceneConfig { snr_db: Some(30.0), descent_rate_mps: 5.0, ..SceneConfig::clear(500.0) };
    let e = chain_errors(&scene, 200, 77)?;
    let n = e.len() as f64;
    let up = e.iter().map(|x| x.0).sum::<f64>() / n;
    let down = e.iter().map(|x| x.1).sum::<f64>() / n;
    let avg = e.iter().map(|x| x.2).sum::<f64>() / n;
    ensure(avg.abs() < 0.3, format!("bias up {up:+.3} m, down {down:+.3} m, averaged {avg:+.4} m over 200 trials"))
}

fn lms_oracle(x: &[Complex64], d: &[Complex64], cfg: &LmsConfig) -> Vec<Complex64> {
    let taps = cfg.filter_len;
    let mut w = vec![Complex64::new(0.0, 0.0); taps];
    let mut pending = w.clone();
    let mut y = Vec::with_capacity(x.len());
    for n in 0..x.len() {
        let tap = |k: usize| if n >= k { x[n - k] } else { Complex64::new(0.0, 0.0) };
        let yn: Complex64 = (0..taps).map(|k| w[k] * tap(k)).sum();
        let e = d[n] - yn;
        for k in 0..taps {
            pending[k] += cfg.mu / cfg.block_size as f64 * e * tap(k).conj();
        }
        y.push(yn);
        if (n + 1) % cfg.block_size == 0 || n + 1 == x.len() {
            w = pending.clone();
        }
    }
    y
}

fn lms_equivalence() -> Check {
    let cfg = LmsConfig::default();
    let mut rng = rng_from_seed(808);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let mut draw = || -> Vec<Complex64> {
            (0..7500).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
        };
        let (x, d) = (draw(), draw());
        let sx = ComplexSignal::new(x.clone(), 7.5e6).unwrap();
        let sd = ComplexSignal::new(d.clone(), 7.5e6).unwrap();
        let (y, _) = block_lms(&sx, &sd, &cfg).map_err(|e| e.to_string())?;
        let o = lms_oracle(&x, &d, &cfg);
        worst = y.samples().iter().zip(&o).map(|(a, b)| (a - b).norm()).fold(worst, f64::max);
    }
    ensure(worst < 1e-9, format!("max |block - oracle| {worst:.2e} over 5 x 7500 samples"))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism(model: Option<&Model<f32>>) -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let args = ["radalt", "generate", "--n", "16", "--val", "4", "--seed", "7", "--out", out.to_str().unwrap()];
        let code = radalt_cli::main_with_args(args);
        if code != 0 {
            return Err(format!("generate exited with {code}"));
        }
        outputs.push(dir_bytes(&out));
    }
    let gen_same = outputs[0] == outputs[1];

    let mitigations = if model.is_some() {
        vec![Mitigation::None, Mitigation::Lms, Mitigation::Tcn]
    } else {
        vec![Mitigation::None, Mitigation::Lms]
    };
    let cfg = SweepConfig { n_trials: 3, seed: 9, mitigations, ..Default::default() };
    let a = run_sweep(&cfg, model, None).map_err(|e| e.to_string())?;
    let b = run_sweep(&cfg, model, None).map_err(|e| e.to_string())?;
    let bytes = |r: &SweepResult| -> Result<Vec<u8>, String> {
        let mut v = serde_json::to_vec(&r.trials).map_err(|e| e.to_string())?;
        v.extend(cells_csv(&r.cells).map_err(|e| e.to_string())?);
        Ok(v)
    };
    let sweep_same = bytes(&a)? == bytes(&b)?;
    ensure(
        gen_same && sweep_same,
        format!(
            "generate {} across {} files, run_sweep {} ({} arms)",
            if gen_same { "identical" } else { "differs" },
            outputs[0].len(),
            if sweep_same { "identical" } else { "differs" },
            cfg.mitigations.len()
        ),
    )
}

fn pd_curve(sweep: &Result<SweepResult, String>) -> Check {
    let r = sweep.as_ref().map_err(|e| e.clone())?;
    let mut ok = true;
    let mut parts = Vec::new();
    for &s in r.config.sinr_grid.iter().filter(|&&s| s <= -10.0) {
        let n25 = r.cell(Mitigation::None, s, 0.25).unwrap().pd;
        let n100 = r.cell(Mitigation::None, s, 1.0).unwrap().pd;
        let t100 = r.cell(Mitigation::Tcn, s, 1.0).unwrap().pd;
        ok &= n25 >= n100 && t100 - n100 >= 0.2;
        parts.push(format!("{s} dB: none Pd {n25:.2}@25% / {n100:.2}@100%, tcn {t100:.2}@100%"));
    }
    ensure(ok, parts.join("; "))
}

fn main() {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= run(1, "geometry audit", secs(1), geometry_audit);
    ok &= run(2, "gradient fidelity", secs(60), gradient_fidelity);
    ok &= run(3, "overfit capacity", secs(300), overfit);

    let start = Instant::now();
    eprintln!("    training on {TRAIN_EXAMPLES} examples for {TRAIN_EPOCHS} epochs");
    let model = catch_unwind(train_model).unwrap_or_else(|_| Err("training panicked".into()));
    let sweep = model
        .as_ref()
        .map_err(|e| e.clone())
        .and_then(|m| run_sweep(&sweep_config(), Some(m), None).map_err(|e| e.to_string()));
    if let Ok(r) = &sweep {
        print_cells(r);
    }
    let elapsed = start.elapsed();
    let res = within(elapsed, secs(3600), desk_reproduction(&sweep));
    let line = match &res {
        Ok(d) => format!("[PASS]  4. desk-scale sweep ordering: {d}"),
        Err(d) => format!("[FAIL]  4. desk-scale sweep ordering: {d}"),
    };
    println!("{line}");
    ok &= res.is_ok();

    ok &= run(5, "clean-chain accuracy", secs(10), clean_chain);
    ok &= run(6, "CFAR calibration", secs(30), cfar_calibration);
    ok &= run(7, "Doppler cancellation", secs(60), doppler_cancellation);
    ok &= run(8, "LMS oracle equivalence", secs(60), lms_equivalence);
    ok &= run(9, "determinism", secs(300), || determinism(model.as_ref().ok()));
    ok &= run(10, "detection-probability curve", secs(1), || pd_curve(&sweep));

    if !ok {
        std::process::exit(1);
    }
}
