//! Labeled dataset synthesis and the on-disk dataset format.
//!
//! A dataset directory holds `manifest.json` plus one blob per split
//! (`train.bin`, `val.bin`). Each blob is a sequence of examples, each stored
//! as little-endian `f32` values laid out as
//! `[clean I x len, clean Q x len, dirty I x len, dirty Q x len]`.
//! The manifest records the generating configuration, per-example metadata and
//! a SHA-256 of every blob.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::interference::{
    InterferenceSpec, OfdmSpec, OverlapSpec, QpskBurstSpec, SirReference, ToneSpec,
};
use crate::rng::{derive_named, derive_seed, rng_from_seed, SimRng};
use crate::scene::{compose_received, ClutterConfig, Example, ExampleMeta, FadingConfig, InterfererConfig, SceneConfig};
use crate::signal::ComplexSignal;
use crate::waveform::{generate_chirp, RadarParams};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLEAN_LABEL: &str = "faded ground return plus clutter; no noise, no interference";

/// Closed interval sampled uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        if self.max <= self.min {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(invalid(format!("{name}: invalid range [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }
}

/// How random scenes are drawn for a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetRecipe {
    pub altitude_m: Span,
    pub descent_rate_mps: Span,
    pub snr_db: Span,
    pub fading: Option<FadingConfig>,
    pub clutter: Option<ClutterConfig>,
    pub sir_reference: SirReference,
    /// Probability that an example carries tone interference.
    pub p_tones: f64,
    pub max_tones: usize,
    pub tone_sir_db: Span,
    pub p_qpsk: f64,
    pub qpsk_sir_db: Span,
    /// QPSK symbol rate as a fraction of the sweep bandwidth.
    pub qpsk_bw_fraction: Span,
    pub qpsk_overlap: Span,
    pub p_ofdm: f64,
    pub ofdm_sir_db: Span,
    pub ofdm_channel_bw_hz: Vec<f64>,
    pub ofdm_overlap: Span,
}

impl Default for DatasetRecipe {
    fn default() -> Self {
        Self {
            altitude_m: Span::new(100.0, 1500.0),
            descent_rate_mps: Span::new(0.0, 8.0),
            snr_db: Span::new(-25.0, 30.0),
            fading: Some(FadingConfig::default()),
            clutter: Some(ClutterConfig::default()),
            sir_reference: SirReference::FullRecord,
            p_tones: 0.5,
            max_tones: 8,
            tone_sir_db: Span::new(-20.0, 20.0),
            p_qpsk: 0.5,
            qpsk_sir_db: Span::new(-20.0, 0.0),
            qpsk_bw_fraction: Span::new(0.05, 0.5),
            qpsk_overlap: Span::new(0.1, 1.0),
            p_ofdm: 0.0,
            ofdm_sir_db: Span::new(-20.0, 0.0),
            ofdm_channel_bw_hz: vec![5e6, 10e6],
            ofdm_overlap: Span::new(0.1, 1.0),
        }
    }
}

impl DatasetRecipe {
    pub fn validate(&self) -> Result<()> {
        for (name, s) in [
            ("altitude_m", &self.altitude_m),
            ("descent_rate_mps", &self.descent_rate_mps),
            ("snr_db", &self.snr_db),
            ("tone_sir_db", &self.tone_sir_db),
            ("qpsk_sir_db", &self.qpsk_sir_db),
            ("qpsk_bw_fraction", &self.qpsk_bw_fraction),
            ("qpsk_overlap", &self.qpsk_overlap),
            ("ofdm_sir_db", &self.ofdm_sir_db),
            ("ofdm_overlap", &self.ofdm_overlap),
        ] {
            s.validate(name)?;
        }
        if self.snr_db.min < -25.0 || self.snr_db.max > 30.0 {
            return Err(invalid(format!(
                "snr_db range [{}, {}] outside [-25, 30] dB",
                self.snr_db.min, self.snr_db.max
            )));
        }
        if self.altitude_m.min <= 0.0 {
            return Err(invalid("altitude range must be positive"));
        }
        for (name, p) in [("p_tones", self.p_tones), ("p_qpsk", self.p_qpsk), ("p_ofdm", self.p_ofdm)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} must be a probability, got {p}")));
            }
        }
        if self.p_tones > 0.0 && self.max_tones == 0 {
            return Err(invalid("max_tones must be positive when tones are enabled"));
        }
        if self.p_ofdm > 0.0 && self.ofdm_channel_bw_hz.is_empty() {
            return Err(invalid("ofdm_channel_bw_hz must list at least one bandwidth"));
        }
        for s in [&self.qpsk_overlap, &self.ofdm_overlap] {
            if s.min < 0.0 || s.max > 1.0 {
                return Err(invalid("overlap ranges must lie in [0, 1]"));
            }
        }
        if self.qpsk_bw_fraction.min <= 0.0 || self.qpsk_bw_fraction.max > 1.0 {
            return Err(invalid("qpsk_bw_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Draws the scene for the example with seed `seed`.
    pub fn sample_scene(&self, params: &RadarParams, len: usize, seed: u64) -> SceneConfig {
        let mut rng = rng_from_seed(derive_named(seed, "scene"));
        let b = params.bandwidth_hz;
        let mut interference = Vec::new();
        if rng.random::<f64>() < self.p_tones {
            interference.push(InterfererConfig {
                spec: InterferenceSpec::Tones(ToneSpec {
                    n_tones: rng.random_range(1..=self.max_tones),
                    sir_db: self.tone_sir_db.sample(&mut rng),
                    band_hz: b,
                    frequencies_hz: None,
                    seed: derive_named(seed, "tones"),
                }),
                overlap: OverlapSpec::full(),
            });
        }
        if rng.random::<f64>() < self.p_qpsk {
            let bw = self.qpsk_bw_fraction.sample(&mut rng) * b;
            let sir = self.qpsk_sir_db.sample(&mut rng);
            interference.push(InterfererConfig {
                spec: InterferenceSpec::Qpsk(qpsk_in_band(bw, b, len, &mut rng, sir, derive_named(seed, "qpsk"))),
                overlap: OverlapSpec { fraction: self.qpsk_overlap.sample(&mut rng) },
            });
        }
        if rng.random::<f64>() < self.p_ofdm {
            let k = rng.random_range(0..self.ofdm_channel_bw_hz.len());
            interference.push(InterfererConfig {
                spec: InterferenceSpec::Ofdm(OfdmSpec {
                    subcarrier_spacing_hz: 15e3,
                    channel_bw_hz: self.ofdm_channel_bw_hz[k],
                    sample_rate_hz: params.fs_hz,
                    n_symbols: None,
                    cp_fraction: 0.07,
                    sir_db: self.ofdm_sir_db.sample(&mut rng),
                    seed: derive_named(seed, "ofdm"),
                }),
                overlap: OverlapSpec { fraction: self.ofdm_overlap.sample(&mut rng) },
            });
        }
        SceneConfig {
            altitude_m: self.altitude_m.sample(&mut rng),
            descent_rate_mps: self.descent_rate_mps.sample(&mut rng),
            snr_db: Some(self.snr_db.sample(&mut rng)),
            clutter: self.clutter.clone(),
            fading: self.fading.clone(),
            interference,
            sir_reference: self.sir_reference,
        }
    }
}

/// Full-length QPSK stream whose occupied band (including roll-off) lies
/// inside the sweep band, centred at a random frequency.
pub fn qpsk_in_band(bw: f64, band: f64, len: usize, rng: &mut SimRng, sir_db: f64, seed: u64) -> QpskBurstSpec {
    let rolloff = 0.35;
    let half_occupied = 0.5 * bw * (1.0 + rolloff);
    let limit = (band / 2.0 - half_occupied).max(0.0);
    let center = if limit > 0.0 { rng.random_range(-limit..=limit) } else { 0.0 };
    QpskBurstSpec {
        bandwidth_hz: bw,
        center_hz: center,
        duration: len,
        start_offset: 0,
        sir_db,
        rolloff,
        span_symbols: 8,
        seed,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_val: usize,
    /// Samples per example; must equal the radar's samples per chirp.
    pub len: usize,
    pub master_seed: u64,
    pub radar: RadarParams,
    pub recipe: DatasetRecipe,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_train: 10_000,
            n_val: 1_000,
            len: 7500,
            master_seed: 0,
            radar: RadarParams::default(),
            recipe: DatasetRecipe::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        self.recipe.validate()?;
        if self.len != self.radar.samples_per_chirp() {
            return Err(invalid(format!(
                "example length {} differs from samples per chirp {}",
                self.len,
                self.radar.samples_per_chirp()
            )));
        }
        if self.n_train == 0 {
            return Err(invalid("n_train must be positive"));
        }
        Ok(())
    }

    /// Seed of the example at global index `index` (train first, then val).
    pub fn example_seed(&self, index: usize) -> u64 {
        derive_seed(self.master_seed, index as u64)
    }

    /// Synthesizes the examples with global indices in `range`, in order.
    pub fn synthesize(&self, range: std::ops::Range<usize>) -> Result<Vec<Example>> {
        self.validate()?;
        let chirp = generate_chirp(&self.radar)?;
        range
            .into_par_iter()
            .map(|i| {
                let seed = self.example_seed(i);
                let scene = self.recipe.sample_scene(&self.radar, self.len, seed);
                compose_received(&chirp, &self.radar, &scene, seed)
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub file: String,
    pub count: usize,
    pub sha256: String,
    pub meta: Vec<ExampleMeta>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub len: usize,
    pub layout: String,
    pub clean_label: String,
    pub config: DatasetConfig,
    pub train: SplitInfo,
    pub val: SplitInfo,
}

/// One stored example as read back from a blob.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredExample {
    pub clean: ComplexSignal,
    pub dirty: ComplexSignal,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub train: Vec<StoredExample>,
    pub val: Vec<StoredExample>,
}

pub fn encode_example(ex: &Example, out: &mut Vec<u8>) {
    for sig in [&ex.clean, &ex.dirty] {
        for part in [0, 1] {
            for s in sig.samples() {
                let v = if part == 0 { s.re } else { s.im } as f32;
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

fn decode_example(bytes: &[u8], len: usize, fs: f64) -> Result<StoredExample> {
    let vals: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let clean = ComplexSignal::from_iq(&vals[..len], &vals[len..2 * len], fs)?;
    let dirty = ComplexSignal::from_iq(&vals[2 * len..3 * len], &vals[3 * len..4 * len], fs)?;
    Ok(StoredExample { clean, dirty })
}

const CHUNK: usize = 256;

fn write_split(
    cfg: &DatasetConfig,
    dir: &Path,
    name: &str,
    range: std::ops::Range<usize>,
) -> Result<SplitInfo> {
    let file = format!("{name}.bin");
    let mut w = BufWriter::new(File::create(dir.join(&file))?);
    let mut hasher = Sha256::new();
    let mut meta = Vec::with_capacity(range.len());
    let mut buf = Vec::new();
    let mut start = range.start;
    while start < range.end {
        let end = (start + CHUNK).min(range.end);
        for ex in cfg.synthesize(start..end)? {
            buf.clear();
            encode_example(&ex, &mut buf);
            hasher.update(&buf);
            w.write_all(&buf)?;
            meta.push(ex.meta);
        }
        start = end;
    }
    w.flush()?;
    Ok(SplitInfo {
        file,
        count: range.len(),
        sha256: hex(&hasher.finalize()),
        meta,
    })
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `cfg.n_train + cfg.n_val` examples and the manifest into `dir`.
/// Output bytes depend only on `cfg`.
pub fn generate_dataset(cfg: &DatasetConfig, dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(dir)?;
    let train = write_split(cfg, dir, "train", 0..cfg.n_train)?;
    let val = write_split(cfg, dir, "val", cfg.n_train..cfg.n_train + cfg.n_val)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        len: cfg.len,
        layout: "f32le per example: clean_i[len] clean_q[len] dirty_i[len] dirty_q[len]".into(),
        clean_label: CLEAN_LABEL.into(),
        config: cfg.clone(),
        train,
        val,
    };
    let mut f = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let m: Manifest = serde_json::from_reader(std::io::BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset format version {} (expected {FORMAT_VERSION})",
            m.format_version
        )));
    }
    Ok(m)
}

fn read_split(dir: &Path, info: &SplitInfo, len: usize, fs: f64) -> Result<Vec<StoredExample>> {
    let mut bytes = Vec::new();
    File::open(dir.join(&info.file))?.read_to_end(&mut bytes)?;
    let per = 16 * len;
    if bytes.len() != per * info.count {
        return Err(Error::Format(format!(
            "{}: expected {} bytes for {} examples, found {}",
            info.file,
            per * info.count,
            info.count,
            bytes.len()
        )));
    }
    let digest = hex(&Sha256::digest(&bytes));
    if digest != info.sha256 {
        return Err(Error::Format(format!(
            "{}: checksum mismatch (partial or corrupted write)",
            info.file
        )));
    }
    bytes.chunks_exact(per).map(|c| decode_example(c, len, fs)).collect()
}

/// Loads and verifies both splits.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let fs = manifest.config.radar.fs_hz;
    let train = read_split(dir, &manifest.train, manifest.len, fs)?;
    let val = read_split(dir, &manifest.val, manifest.len, fs)?;
    Ok(Dataset { manifest, train, val })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DatasetConfig {
        DatasetConfig {
            n_train: 6,
            n_val: 2,
            master_seed: 7,
            recipe: DatasetRecipe { p_ofdm: 0.5, ..DatasetRecipe::default() },
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn round_trip_and_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let m = generate_dataset(&cfg, dir.path()).unwrap();
        assert_eq!(m.train.count, 6);
        assert_eq!(m.val.meta.len(), 2);
        let ds = load_dataset(dir.path()).unwrap();
        let direct = cfg.synthesize(0..8).unwrap();
        for (stored, ex) in ds.train.iter().chain(&ds.val).zip(&direct) {
            let err = stored.dirty.try_sub(&ex.dirty).unwrap().power() / ex.dirty.power();
            assert!(err < 1e-12);
        }
        assert_eq!(ds.train.len(), 6);

        let path = dir.path().join("train.bin");
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[100] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Format(_))));
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_dataset(&small(), a.path()).unwrap();
        generate_dataset(&small(), b.path()).unwrap();
        for f in ["manifest.json", "train.bin", "val.bin"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        }
    }

    #[test]
    fn example_depends_only_on_its_index() {
        let cfg = small();
        let a = cfg.synthesize(0..8).unwrap();
        let b = cfg.synthesize(3..5).unwrap();
        assert_eq!(a[3], b[0]);
        assert_eq!(a[4], b[1]);
        let bigger = DatasetConfig { n_train: 20, ..cfg };
        assert_eq!(bigger.synthesize(5..6).unwrap()[0], a[5]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small();
        cfg.recipe.snr_db = Span::new(-40.0, 0.0);
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.len = 7000;
        assert!(cfg.validate().is_err());
    }
}
