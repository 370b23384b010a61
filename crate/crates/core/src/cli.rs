//! `dgmp` command line: estimate, sweep, replay and validate-config.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::channel::ChannelRealization;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::estimators::reconstruct_channel;
use crate::eval::{nmse, to_db};
use crate::measurement::{export_measurement, import_measurement, SeedRecord};
use crate::sweep::{evaluate_scheme, setup_trial, write_sweep_outputs, Scheme, SweepSpec};

#[derive(Debug, Parser)]
#[command(name = "dgmp", version, about = "Wideband mmWave multi-user channel estimation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// TOML config file.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Bundled preset: `full` or `desk` (default `desk`).
    #[arg(long)]
    pub preset: Option<String>,
    /// Master seed, overriding the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<SystemConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => SystemConfig::load(path)?,
            (None, Some(name)) => SystemConfig::preset(name)?,
            (None, None) => SystemConfig::desk(),
        };
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trial end to end and print NMSE, SE and BER per scheme.
    Estimate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated schemes.
        #[arg(long, default_value = "dgmp,somp,omp,oracle")]
        schemes: String,
        /// Training length G (default from config).
        #[arg(long)]
        g: Option<usize>,
        /// SNR in dB (default from config; `inf` for noiseless).
        #[arg(long, allow_hyphen_values = true)]
        snr_db: Option<f64>,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Directory for the measurement container, channel and estimate JSON.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo sweep over schemes, G and SNR.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value = "dgmp,somp,omp,oracle")]
        schemes: String,
        /// Comma-separated training lengths (default from config).
        #[arg(long)]
        g_values: Option<String>,
        #[arg(long, default_value = "0,10,20", allow_hyphen_values = true)]
        snr_values: String,
        #[arg(long, value_name = "DIR", default_value = "results")]
        out: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Re-run an estimator on an exported measurement set.
    Replay {
        /// Measurement sidecar JSON written by `estimate --out`.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        #[arg(long, default_value = "dgmp")]
        scheme: String,
        /// Channel JSON, required for the oracle and for NMSE.
        #[arg(long, value_name = "PATH")]
        channel: Option<PathBuf>,
        /// Where to write the estimate JSON (stdout if omitted).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config, then print the derived values.
    ValidateConfig {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<T>().map_err(|_| Error::InvalidArgument(format!("bad {what} '{s}'"))))
        .collect()
}

fn parse_schemes(text: &str) -> Result<Vec<Scheme>> {
    let schemes: Vec<Scheme> = text.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if schemes.is_empty() {
        return Err(Error::InvalidArgument("no schemes given".into()));
    }
    Ok(schemes)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Estimate { config, schemes, g, snr_db, trial, out } => {
            let cfg = config.load()?;
            cmd_estimate(&cfg, &parse_schemes(&schemes)?, g.unwrap_or(cfg.n_symbols), snr_db.unwrap_or(cfg.snr_db), trial, out.as_deref())
        }
        Command::Sweep { config, trials, schemes, g_values, snr_values, out, jobs } => {
            let cfg = config.load()?;
            let spec = SweepSpec {
                schemes: parse_schemes(&schemes)?,
                g_values: match g_values {
                    Some(text) => parse_list(&text, "G value")?,
                    None => vec![cfg.n_symbols],
                },
                snr_values: parse_list(&snr_values, "SNR value")?,
                n_trials: trials,
            };
            let (output, files) = write_sweep_outputs(&cfg, &spec, jobs, &out)?;
            for f in &output.failures {
                eprintln!("trial {} G={} snr={} {}: {}", f.trial, f.n_symbols, f.snr_db, f.scheme.as_deref().unwrap_or("setup"), f.message);
            }
            println!(
                "{} records, {} failures -> {}, {}, {}",
                output.records.len(),
                output.failures.len(),
                files.trials_csv.display(),
                files.summary_csv.display(),
                files.manifest.display()
            );
            Ok(())
        }
        Command::Replay { input, scheme, channel, out } => cmd_replay(&input, scheme.parse()?, channel.as_deref(), out.as_deref()),
        Command::ValidateConfig { config } => {
            let cfg = config.load()?;
            println!(
                "ok: N_bs={} N_rf_bs={} N_ue={} K={} P={} L_CP={} G={} J={} config_hash={}",
                cfg.n_ant_bs,
                cfg.n_rf_bs,
                cfg.n_ant_ue,
                cfg.n_users,
                cfg.n_subcarriers,
                cfg.cp_len,
                cfg.n_symbols,
                cfg.refine_factor,
                cfg.config_hash()
            );
            Ok(())
        }
    }
}

fn cmd_estimate(base: &SystemConfig, schemes: &[Scheme], g: usize, snr_db: f64, trial: u64, out: Option<&Path>) -> Result<()> {
    let setup = setup_trial(base, g, snr_db, trial)?;
    if let Some(dir) = out {
        let seeds = SeedRecord {
            master: Some(base.rng_seed),
            trial: Some(setup.seeds.trial),
            channel: Some(setup.seeds.channel()),
            pilots: Some(setup.seeds.pilots(g)),
            noise: Some(setup.seeds.noise(g, snr_db)),
        };
        export_measurement(&setup.measurement, dir, "measurement", &seeds)?;
        std::fs::write(dir.join("channel.json"), setup.channel.to_json(&setup.cfg)?)?;
    }
    for &scheme in schemes {
        let record = evaluate_scheme(&setup, scheme)?;
        println!(
            "scheme={} G={} snr_db={} trial={} nmse_db={:.3} se_bpcu={:.4} ber={:.5}",
            scheme,
            g,
            snr_db,
            trial,
            to_db(record.nmse),
            record.se_bpcu,
            record.ber
        );
        if let Some(dir) = out {
            let est = scheme.estimate(&setup.measurement, Some(&setup.channel), &setup.cfg)?;
            std::fs::write(dir.join(format!("estimate_{scheme}.json")), est.to_json()?)?;
        }
    }
    Ok(())
}

fn cmd_replay(input: &Path, scheme: Scheme, channel: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let (meas, _) = import_measurement(input)?;
    let cfg = meas.config.clone();
    let chan = channel
        .map(|path| -> Result<ChannelRealization> { ChannelRealization::from_json(&std::fs::read_to_string(path)?, &cfg) })
        .transpose()?;
    let est = scheme.estimate(&meas, chan.as_ref(), &cfg)?;
    let text = est.to_json()?;
    match out {
        Some(path) => std::fs::write(path, &text)?,
        None => println!("{text}"),
    }
    if let Some(c) = &chan {
        eprintln!("nmse_db={:.3}", to_db(nmse(c.freq_channels(), &reconstruct_channel(&est, &cfg)?)?));
    }
    Ok(())
}
