//! Seeded Monte-Carlo sweeps over schemes, training length G and SNR.
//!
//! Every (trial, G, SNR) cell draws its channel, pilots, noise and payload
//! bits from the seed tree rooted at the master seed, and all schemes in a
//! cell share those draws. Cells run in parallel; records are sorted before
//! output so files do not depend on scheduling.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{generate_channel, ChannelRealization};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::estimators::{dgmp_estimate, oracle_estimate, omp_per_subcarrier_baseline, reconstruct_channel, somp_baseline, EstimateResult};
use crate::eval::{ber_16qam, nmse, spectral_efficiency};
use crate::measurement::{assemble_measurement, MeasurementSet};
use crate::pilots::generate_pilots;
use crate::seeds::{rng_from_seed, TrialSeeds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Dgmp,
    Somp,
    Omp,
    Oracle,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Dgmp, Scheme::Somp, Scheme::Omp, Scheme::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Dgmp => "dgmp",
            Scheme::Somp => "somp",
            Scheme::Omp => "omp",
            Scheme::Oracle => "oracle",
        }
    }

    /// Runs this scheme's estimator; baselines get one atom per user. Only
    /// the oracle reads `chan`.
    pub fn estimate(self, meas: &MeasurementSet, chan: Option<&ChannelRealization>, cfg: &SystemConfig) -> Result<EstimateResult> {
        match self {
            Scheme::Dgmp => dgmp_estimate(meas, cfg),
            Scheme::Somp => somp_baseline(meas, cfg, cfg.n_users),
            Scheme::Omp => omp_per_subcarrier_baseline(meas, cfg, cfg.n_users),
            Scheme::Oracle => {
                let chan = chan.ok_or_else(|| Error::InvalidArgument("the oracle needs the true channel".into()))?;
                oracle_estimate(meas, chan, cfg)
            }
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scheme '{s}' (expected dgmp, somp, omp or oracle)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub scheme: Scheme,
    pub n_symbols: usize,
    pub snr_db: f64,
    pub trial: u64,
    pub nmse: f64,
    pub se_bpcu: f64,
    pub ber: f64,
    /// Trial-level seed from the seed tree.
    pub seed: u64,
    pub regularized_subcarriers: usize,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub scheme: Option<String>,
    pub n_symbols: usize,
    pub snr_db: String,
    pub trial: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub schemes: Vec<Scheme>,
    pub g_values: Vec<usize>,
    pub snr_values: Vec<f64>,
    pub n_trials: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() || self.g_values.is_empty() || self.snr_values.is_empty() || self.n_trials == 0 {
            return Err(Error::InvalidArgument("sweep needs at least one scheme, G value, SNR value and trial".into()));
        }
        if self.g_values.contains(&0) {
            return Err(Error::InvalidArgument("G values must be positive".into()));
        }
        if self.snr_values.iter().any(|s| s.is_nan()) {
            return Err(Error::InvalidArgument("SNR values must not be NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
}

/// Everything drawn for one (trial, G, SNR) cell.
pub struct TrialSetup {
    pub cfg: SystemConfig,
    pub seeds: TrialSeeds,
    pub channel: ChannelRealization,
    pub measurement: MeasurementSet,
}

/// Draws channel, pilots and noise for one cell.
pub fn setup_trial(base: &SystemConfig, n_symbols: usize, snr_db: f64, trial: u64) -> Result<TrialSetup> {
    let cfg = base.with_symbols(n_symbols).with_snr_db(snr_db);
    cfg.validate()?;
    let seeds = TrialSeeds::new(base.rng_seed, trial);
    let channel = generate_channel(&cfg, &mut rng_from_seed(seeds.channel()), cfg.on_grid)?;
    let pilots = generate_pilots(&cfg, &mut rng_from_seed(seeds.pilots(n_symbols)));
    let measurement = assemble_measurement(&pilots, &channel, &cfg, &mut rng_from_seed(seeds.noise(n_symbols, snr_db)))?;
    Ok(TrialSetup { cfg, seeds, channel, measurement })
}

/// Metrics of one scheme in an already drawn cell.
pub fn evaluate_scheme(setup: &TrialSetup, scheme: Scheme) -> Result<TrialRecord> {
    let start = Instant::now();
    let cfg = &setup.cfg;
    let est = scheme.estimate(&setup.measurement, Some(&setup.channel), cfg)?;
    let h_hat = reconstruct_channel(&est, cfg)?;
    let err = nmse(setup.channel.freq_channels(), &h_hat)?;
    let se = spectral_efficiency(&setup.channel, &est, cfg, cfg.snr_db)?;
    let mut bit_rng = rng_from_seed(setup.seeds.bits(cfg.n_symbols, cfg.snr_db));
    let ber = ber_16qam(&setup.channel, &est, cfg, cfg.snr_db, cfg.ber_bits_per_trial, &mut bit_rng)?;
    Ok(TrialRecord {
        scheme,
        n_symbols: cfg.n_symbols,
        snr_db: cfg.snr_db,
        trial: setup.seeds.index,
        nmse: err,
        se_bpcu: se.bpcu,
        ber,
        seed: setup.seeds.trial,
        regularized_subcarriers: se.regularized_subcarriers,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

fn failure(scheme: Option<Scheme>, g: usize, snr: f64, trial: u64, err: &Error) -> TrialFailure {
    TrialFailure {
        scheme: scheme.map(|s| s.to_string()),
        n_symbols: g,
        snr_db: snr.to_string(),
        trial,
        message: err.to_string(),
    }
}

/// Full factorial sweep on a pool of `jobs` threads (0 picks the rayon default).
pub fn run_sweep(cfg: &SystemConfig, spec: &SweepSpec, jobs: usize) -> Result<SweepOutput> {
    cfg.validate()?;
    spec.validate()?;
    let mut cells = Vec::new();
    for trial in 0..spec.n_trials as u64 {
        for &g in &spec.g_values {
            for &snr in &spec.snr_values {
                cells.push((trial, g, snr));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results: Vec<(Vec<TrialRecord>, Vec<TrialFailure>)> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(trial, g, snr)| {
                let mut records = Vec::new();
                let mut failures = Vec::new();
                match setup_trial(cfg, g, snr, trial) {
                    Ok(setup) => {
                        for &scheme in &spec.schemes {
                            match evaluate_scheme(&setup, scheme) {
                                Ok(r) => records.push(r),
                                Err(e) => failures.push(failure(Some(scheme), g, snr, trial, &e)),
                            }
                        }
                    }
                    Err(e) => failures.push(failure(None, g, snr, trial, &e)),
                }
                (records, failures)
            })
            .collect()
    });
    let mut out = SweepOutput::default();
    for (r, f) in results {
        out.records.extend(r);
        out.failures.extend(f);
    }
    out.records.sort_by(record_order);
    out.failures.sort_by(|a, b| (a.trial, a.n_symbols, &a.snr_db, &a.scheme).cmp(&(b.trial, b.n_symbols, &b.snr_db, &b.scheme)));
    Ok(out)
}

fn record_order(a: &TrialRecord, b: &TrialRecord) -> std::cmp::Ordering {
    a.scheme
        .cmp(&b.scheme)
        .then(a.n_symbols.cmp(&b.n_symbols))
        .then(a.snr_db.total_cmp(&b.snr_db))
        .then(a.trial.cmp(&b.trial))
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub scheme: Scheme,
    pub n_symbols: usize,
    pub snr_db: f64,
    pub n_trials: usize,
    pub nmse: (f64, f64),
    pub se_bpcu: (f64, f64),
    pub ber: (f64, f64),
}

pub fn aggregate(records: &[TrialRecord]) -> Vec<CellSummary> {
    let mut sorted: Vec<&TrialRecord> = records.iter().collect();
    sorted.sort_by(|a, b| record_order(a, b));
    sorted
        .chunk_by(|a, b| a.scheme == b.scheme && a.n_symbols == b.n_symbols && a.snr_db.total_cmp(&b.snr_db).is_eq())
        .map(|rs| {
            let col = |f: fn(&TrialRecord) -> f64| mean_stderr(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            CellSummary {
                scheme: rs[0].scheme,
                n_symbols: rs[0].n_symbols,
                snr_db: rs[0].snr_db,
                n_trials: rs.len(),
                nmse: col(|r| r.nmse),
                se_bpcu: col(|r| r.se_bpcu),
                ber: col(|r| r.ber),
            }
        })
        .collect()
}

pub fn write_records_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scheme", "G", "snr_db", "trial", "nmse", "se_bpcu", "ber", "seed"])?;
    for r in records {
        w.write_record([
            r.scheme.to_string(),
            r.n_symbols.to_string(),
            r.snr_db.to_string(),
            r.trial.to_string(),
            r.nmse.to_string(),
            r.se_bpcu.to_string(),
            r.ber.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, cells: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scheme", "G", "snr_db", "n_trials", "nmse_mean", "nmse_stderr", "nmse_db", "se_bpcu_mean", "se_bpcu_stderr", "ber_mean", "ber_stderr",
    ])?;
    for c in cells {
        w.write_record([
            c.scheme.to_string(),
            c.n_symbols.to_string(),
            c.snr_db.to_string(),
            c.n_trials.to_string(),
            c.nmse.0.to_string(),
            c.nmse.1.to_string(),
            (10.0 * c.nmse.0.log10()).to_string(),
            c.se_bpcu.0.to_string(),
            c.se_bpcu.1.to_string(),
            c.ber.0.to_string(),
            c.ber.1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: SystemConfig,
    pub config_hash: String,
    pub master_seed: u64,
    pub schemes: Vec<Scheme>,
    pub g_values: Vec<usize>,
    pub snr_values: Vec<String>,
    pub n_trials: usize,
    pub jobs: usize,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
    pub failures: Vec<TrialFailure>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Paths written by [`write_sweep_outputs`].
pub struct SweepFiles {
    pub trials_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub manifest: PathBuf,
}

/// Runs a sweep and writes `trials.csv`, `summary.csv` and `manifest.json` into `out_dir`.
pub fn write_sweep_outputs(cfg: &SystemConfig, spec: &SweepSpec, jobs: usize, out_dir: &Path) -> Result<(SweepOutput, SweepFiles)> {
    let started = unix_now();
    let clock = Instant::now();
    let output = run_sweep(cfg, spec, jobs)?;
    std::fs::create_dir_all(out_dir)?;
    let files = SweepFiles {
        trials_csv: out_dir.join("trials.csv"),
        summary_csv: out_dir.join("summary.csv"),
        manifest: out_dir.join("manifest.json"),
    };
    write_records_csv(&files.trials_csv, &output.records)?;
    write_summary_csv(&files.summary_csv, &aggregate(&output.records))?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        master_seed: cfg.rng_seed,
        schemes: spec.schemes.clone(),
        g_values: spec.g_values.clone(),
        snr_values: spec.snr_values.iter().map(|s| s.to_string()).collect(),
        n_trials: spec.n_trials,
        jobs,
        started_unix_s: started,
        finished_unix_s: unix_now(),
        wall_time_s: clock.elapsed().as_secs_f64(),
        outputs: vec![files.trials_csv.clone(), files.summary_csv.clone()],
        failures: output.failures.clone(),
    };
    std::fs::write(&files.manifest, serde_json::to_string_pretty(&manifest)?)?;
    Ok((output, files))
}
