//! System configuration and its flat key-value file format.
//!
//! Config files are TOML restricted to top-level scalar keys, with units in
//! the key names (`tau_max_ns`, `sample_rate_ghz`, ...). `cp_len` and
//! `ber_bits_per_trial` may be omitted; they are then derived.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const FULL_PRESET: &str = include_str!("../configs/full.toml");
const DESK_PRESET: &str = include_str!("../configs/desk.toml");

/// Hard cap on inner refinement iterations per user.
pub const MAX_INNER_ITERATIONS: usize = 50;

/// Every physical and algorithmic parameter of one simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_ant_bs: usize,
    pub n_rf_bs: usize,
    pub n_ant_ue: usize,
    pub n_rf_ue: usize,
    pub n_users: usize,
    /// DFT size P.
    pub n_subcarriers: usize,
    /// Cyclic prefix length in samples.
    pub cp_len: usize,
    /// Training overhead G (OFDM pilot symbols per estimate).
    pub n_symbols: usize,
    pub carrier_freq_ghz: f64,
    pub sample_rate_ghz: f64,
    pub tau_max_ns: f64,
    /// Antenna spacing d/λ.
    pub antenna_spacing_wavelengths: f64,
    pub k_factor_db: f64,
    /// Paths per user, LOS included.
    pub n_paths: usize,
    /// Angle refinement factor J.
    pub refine_factor: usize,
    /// Inner-loop stopping threshold ε.
    pub epsilon: f64,
    pub snr_db: f64,
    pub rng_seed: u64,
    /// Draw path angles from the canonical DFT grids.
    pub on_grid: bool,
    /// Bits simulated per trial for BER; a multiple of 4·K·P.
    pub ber_bits_per_trial: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_ant_bs: usize,
    n_rf_bs: usize,
    n_ant_ue: usize,
    n_rf_ue: usize,
    n_users: usize,
    n_subcarriers: usize,
    cp_len: Option<usize>,
    n_symbols: usize,
    carrier_freq_ghz: f64,
    sample_rate_ghz: f64,
    tau_max_ns: f64,
    antenna_spacing_wavelengths: f64,
    k_factor_db: f64,
    n_paths: usize,
    refine_factor: usize,
    epsilon: f64,
    snr_db: f64,
    rng_seed: u64,
    #[serde(default)]
    on_grid: bool,
    ber_bits_per_trial: Option<usize>,
}

impl RawConfig {
    fn resolve(self) -> SystemConfig {
        let min_cp = min_cp_len(self.tau_max_ns, self.sample_rate_ghz);
        let ber_default = 4 * self.n_users * self.n_subcarriers * 64;
        SystemConfig {
            n_ant_bs: self.n_ant_bs,
            n_rf_bs: self.n_rf_bs,
            n_ant_ue: self.n_ant_ue,
            n_rf_ue: self.n_rf_ue,
            n_users: self.n_users,
            n_subcarriers: self.n_subcarriers,
            cp_len: self.cp_len.unwrap_or(min_cp),
            n_symbols: self.n_symbols,
            carrier_freq_ghz: self.carrier_freq_ghz,
            sample_rate_ghz: self.sample_rate_ghz,
            tau_max_ns: self.tau_max_ns,
            antenna_spacing_wavelengths: self.antenna_spacing_wavelengths,
            k_factor_db: self.k_factor_db,
            n_paths: self.n_paths,
            refine_factor: self.refine_factor,
            epsilon: self.epsilon,
            snr_db: self.snr_db,
            rng_seed: self.rng_seed,
            on_grid: self.on_grid,
            ber_bits_per_trial: self.ber_bits_per_trial.unwrap_or(ber_default),
        }
    }
}

/// Smallest cyclic prefix covering the maximum delay spread, ⌈τ_max·f_s⌉.
fn min_cp_len(tau_max_ns: f64, sample_rate_ghz: f64) -> usize {
    let samples = tau_max_ns * sample_rate_ghz;
    // ns·GHz products like 100·0.25 are exact, but guard against 25.000000001.
    (samples - 1e-9).ceil().max(0.0) as usize
}

impl SystemConfig {
    /// Full-scale setup: f_c = 30 GHz, f_s = 0.25 GHz, 128×32 antennas, K = 4.
    pub fn full() -> Self {
        Self::from_toml_str(FULL_PRESET, "<full preset>").expect("bundled full preset is valid")
    }

    /// Small preset (N_bs = 32, N_ue = 8, K = 2, P = 8, G = 8) for quick runs.
    pub fn desk() -> Self {
        Self::from_toml_str(DESK_PRESET, "<desk preset>").expect("bundled desk preset is valid")
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::InvalidArgument(format!(
                "unknown preset '{other}' (expected 'full' or 'desk')"
            ))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// Parses and validates a config; parse errors carry line and column.
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        let cfg = raw.resolve();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_ant_bs", self.n_ant_bs),
            ("n_rf_bs", self.n_rf_bs),
            ("n_ant_ue", self.n_ant_ue),
            ("n_rf_ue", self.n_rf_ue),
            ("n_users", self.n_users),
            ("n_subcarriers", self.n_subcarriers),
            ("cp_len", self.cp_len),
            ("n_symbols", self.n_symbols),
            ("n_paths", self.n_paths),
            ("refine_factor", self.refine_factor),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.n_rf_bs > self.n_ant_bs {
            return Err(Error::Config(format!(
                "n_rf_bs ({}) exceeds n_ant_bs ({})",
                self.n_rf_bs, self.n_ant_bs
            )));
        }
        if self.n_rf_ue > self.n_ant_ue {
            return Err(Error::Config(format!(
                "n_rf_ue ({}) exceeds n_ant_ue ({})",
                self.n_rf_ue, self.n_ant_ue
            )));
        }
        for (name, value) in [
            ("carrier_freq_ghz", self.carrier_freq_ghz),
            ("sample_rate_ghz", self.sample_rate_ghz),
            ("antenna_spacing_wavelengths", self.antenna_spacing_wavelengths),
            ("epsilon", self.epsilon),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite")));
            }
        }
        if !(self.tau_max_ns.is_finite() && self.tau_max_ns >= 0.0) {
            return Err(Error::Config("tau_max_ns must be non-negative".into()));
        }
        if !self.k_factor_db.is_finite() {
            return Err(Error::Config("k_factor_db must be finite".into()));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Config("snr_db must not be NaN".into()));
        }
        let min_cp = self.min_cp_len();
        if self.cp_len < min_cp {
            return Err(Error::Config(format!(
                "cp_len ({}) must cover the delay spread: L_CP >= ceil(tau_max * f_s) = {min_cp}",
                self.cp_len
            )));
        }
        if self.n_subcarriers <= self.cp_len {
            return Err(Error::Config(format!(
                "P > L_CP violated: n_subcarriers = {}, cp_len = {}",
                self.n_subcarriers, self.cp_len
            )));
        }
        let block = 4 * self.n_users * self.n_subcarriers;
        if self.ber_bits_per_trial == 0 || self.ber_bits_per_trial % block != 0 {
            return Err(Error::Config(format!(
                "ber_bits_per_trial ({}) must be a positive multiple of 4*K*P = {block}",
                self.ber_bits_per_trial
            )));
        }
        Ok(())
    }

    pub fn min_cp_len(&self) -> usize {
        min_cp_len(self.tau_max_ns, self.sample_rate_ghz)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_ghz * 1e9
    }

    pub fn tau_max_s(&self) -> f64 {
        self.tau_max_ns * 1e-9
    }

    pub fn k_factor_linear(&self) -> f64 {
        10f64.powf(self.k_factor_db / 10.0)
    }

    /// Rows of each aggregated measurement matrix, G·N_rf^BS.
    pub fn measurements_per_subcarrier(&self) -> usize {
        self.n_symbols * self.n_rf_bs
    }

    /// Angle-domain coefficients per user, N_bs·N_ue.
    pub fn columns_per_user(&self) -> usize {
        self.n_ant_bs * self.n_ant_ue
    }

    pub fn total_columns(&self) -> usize {
        self.n_users * self.columns_per_user()
    }

    pub fn with_symbols(&self, n_symbols: usize) -> Self {
        Self { n_symbols, ..self.clone() }
    }

    pub fn with_snr_db(&self, snr_db: f64) -> Self {
        Self { snr_db, ..self.clone() }
    }

    /// SHA-256 over the canonical JSON rendering, hex encoded.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_preset_matches_reported_setup() {
        let cfg = SystemConfig::full();
        assert_eq!(cfg.cp_len, 25);
        assert_eq!(cfg.n_subcarriers, 32);
        assert_eq!((cfg.n_ant_bs, cfg.n_rf_bs), (128, 4));
        assert_eq!((cfg.n_ant_ue, cfg.n_rf_ue), (32, 1));
        assert_eq!((cfg.n_users, cfg.n_paths), (4, 4));
        assert_eq!(cfg.refine_factor, 10);
        assert_eq!(cfg.epsilon, 1e-3);
        assert_eq!(cfg.k_factor_db, 20.0);
        assert_eq!(cfg.carrier_freq_ghz, 30.0);
        assert_eq!(cfg.sample_rate_ghz, 0.25);
        assert_eq!(cfg.tau_max_ns, 100.0);
        assert_eq!(cfg.antenna_spacing_wavelengths, 0.5);
    }

    #[test]
    fn desk_preset_validates() {
        let cfg = SystemConfig::desk();
        assert_eq!((cfg.n_ant_bs, cfg.n_ant_ue, cfg.n_users), (32, 8, 2));
        assert_eq!((cfg.n_subcarriers, cfg.n_symbols), (8, 8));
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_p_not_above_cp() {
        let text = FULL_PRESET.replace("n_subcarriers = 32", "n_subcarriers = 10");
        let err = SystemConfig::from_toml_str(&text, "t").unwrap_err();
        assert!(err.to_string().contains("P > L_CP"), "{err}");
    }

    #[test]
    fn rejects_short_cyclic_prefix() {
        let text = format!("{FULL_PRESET}\ncp_len = 24\n");
        let err = SystemConfig::from_toml_str(&text, "t").unwrap_err();
        assert!(err.to_string().contains("cp_len"), "{err}");
    }

    #[test]
    fn parse_errors_report_location() {
        let text = FULL_PRESET.replace("n_users = 4", "n_users = four");
        let err = SystemConfig::from_toml_str(&text, "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bad.toml") && msg.contains("line"), "{msg}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{DESK_PRESET}\nn_widgets = 3\n");
        assert!(SystemConfig::from_toml_str(&text, "t").is_err());
    }

    #[test]
    fn rf_chains_bounded_by_antennas() {
        let mut cfg = SystemConfig::desk();
        cfg.n_rf_bs = 64;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SystemConfig::desk();
        let back = SystemConfig::from_toml_str(&cfg.to_toml_string(), "t").unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.config_hash(), back.config_hash());
    }
}
