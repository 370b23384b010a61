#![allow(dead_code)]

use dgmp::channel::ChannelRealization;
use dgmp::estimators::{reconstruct_channel, EstimateResult};
use dgmp::eval::nmse;
use dgmp::sweep::mean_stderr;
use dgmp::SystemConfig;

/// Valid config with the given dimensions; other fields come from the desk preset.
pub fn small_cfg(n_bs: usize, n_ue: usize, n_users: usize, n_sub: usize, n_symbols: usize, n_rf_bs: usize) -> SystemConfig {
    let mut cfg = SystemConfig::desk();
    cfg.n_ant_bs = n_bs;
    cfg.n_ant_ue = n_ue;
    cfg.n_users = n_users;
    cfg.n_subcarriers = n_sub;
    cfg.n_symbols = n_symbols;
    cfg.n_rf_bs = n_rf_bs;
    cfg.n_rf_ue = 1;
    // Keep L_CP = P − 1 so that P > L_CP holds.
    cfg.tau_max_ns = 4.0 * (n_sub as f64 - 1.0);
    cfg.cp_len = n_sub - 1;
    cfg.ber_bits_per_trial = 4 * n_users * n_sub * 16;
    cfg.validate().expect("test config is valid");
    cfg
}

pub fn nmse_of(chan: &ChannelRealization, est: &EstimateResult, cfg: &SystemConfig) -> f64 {
    nmse(chan.freq_channels(), &reconstruct_channel(est, cfg).unwrap()).unwrap()
}

/// Mean and standard error of the paired differences b − a.
pub fn paired_gap(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    mean_stderr(&d)
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn report(id: u32, pass: bool, detail: &str) {
    println!("criterion {id}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}
