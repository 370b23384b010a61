//! Recovery and downlink metrics.
//!
//! The downlink reuses the uplink estimate under TDD reciprocity: user k's
//! downlink channel is H_{p,k}ᵀ. The BS beams toward each user's estimated
//! LOS with a constant-modulus RF precoder, each user combines with its
//! estimated UE steering vector, and a baseband zero-forcing stage inverts
//! the K × K effective channel built from the true H_{p,k}. Each ZF column
//! is scaled so that user's stream carries power 1/K (total power 1), and the
//! receiver noise variance is 10^(−snr/10).

use rand::Rng;

use crate::array::steering_entries;
use crate::channel::{complex_gaussian, ChannelRealization};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::estimators::EstimateResult;
use crate::linalg::singular_values;
use crate::{CMatrix, CVector, C64};

/// Condition threshold σ_min/σ_max below which the effective channel is treated as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-12;
/// Diagonal loading factor (times the trace) for singular effective channels.
pub const DIAGONAL_LOADING: f64 = 1e-6;

/// Σ ‖Ĥ − H‖_F² / Σ ‖H‖_F² over all users and subcarriers.
pub fn nmse(h_true: &[Vec<CMatrix>], h_est: &[Vec<CMatrix>]) -> Result<f64> {
    if h_true.len() != h_est.len() {
        return Err(Error::Dimension(format!("{} vs {} users", h_true.len(), h_est.len())));
    }
    let (mut err, mut energy) = (0.0, 0.0);
    for (ht, he) in h_true.iter().zip(h_est) {
        if ht.len() != he.len() {
            return Err(Error::Dimension(format!("{} vs {} subcarriers", ht.len(), he.len())));
        }
        for (a, b) in ht.iter().zip(he) {
            if a.shape() != b.shape() {
                return Err(Error::Dimension(format!("{:?} vs {:?}", a.shape(), b.shape())));
            }
            err += (a - b).norm_squared();
            energy += a.norm_squared();
        }
    }
    if energy == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    Ok(err / energy)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Two-stage downlink precoder for one subcarrier.
#[derive(Debug, Clone)]
pub struct DownlinkLink {
    /// G = H_eff·F_BB after power normalization: y = G·s + n.
    pub gain: CMatrix,
    /// ‖w_k‖² per user (0 for a user without an estimate).
    pub combiner_power: Vec<f64>,
    /// Diagonal loading was applied.
    pub regularized: bool,
}

fn user_beams(result: &EstimateResult, cfg: &SystemConfig) -> Result<(CMatrix, Vec<CVector>)> {
    if result.n_users() != cfg.n_users {
        return Err(Error::Dimension(format!("estimate covers {} users, config has {}", result.n_users(), cfg.n_users)));
    }
    let mut f_rf = CMatrix::zeros(cfg.n_ant_bs, cfg.n_users);
    let mut combiners = Vec::with_capacity(cfg.n_users);
    for (k, u) in result.users.iter().enumerate() {
        match u.los() {
            Some(path) => {
                let f = steering_entries(cfg.n_ant_bs, path.aoa_freq).map(|c| c.conj()).unscale((cfg.n_ant_bs as f64).sqrt());
                f_rf.set_column(k, &f);
                combiners.push(steering_entries(cfg.n_ant_ue, path.aod_freq).map(|c| c.conj()).unscale((cfg.n_ant_ue as f64).sqrt()));
            }
            None => combiners.push(CVector::zeros(cfg.n_ant_ue)),
        }
    }
    Ok((f_rf, combiners))
}

fn zero_forcing(h_eff: &CMatrix) -> (CMatrix, bool) {
    let k = h_eff.nrows();
    let sv = singular_values(h_eff);
    let (largest, smallest) = (sv.first().copied().unwrap_or(0.0), sv.last().copied().unwrap_or(0.0));
    if largest > 0.0 && smallest >= SINGULAR_THRESHOLD * largest {
        if let Some(inv) = h_eff.clone().try_inverse() {
            return (inv, false);
        }
    }
    let gram = h_eff * h_eff.adjoint();
    let lambda = DIAGONAL_LOADING * gram.trace().re;
    if lambda == 0.0 {
        return (CMatrix::zeros(k, k), true);
    }
    let loaded = gram + CMatrix::identity(k, k).scale(lambda);
    let inv = loaded.try_inverse().unwrap_or_else(|| CMatrix::zeros(k, k));
    (h_eff.adjoint() * inv, true)
}

/// Builds the precoded downlink for every subcarrier.
pub fn downlink_links(chan: &ChannelRealization, result: &EstimateResult, cfg: &SystemConfig) -> Result<Vec<DownlinkLink>> {
    if chan.n_users() != cfg.n_users {
        return Err(Error::Dimension("channel user count differs from config".into()));
    }
    let (f_rf, combiners) = user_beams(result, cfg)?;
    let k = cfg.n_users;
    (0..cfg.n_subcarriers)
        .map(|p| {
            let mut h_eff = CMatrix::zeros(k, k);
            for (i, w) in combiners.iter().enumerate() {
                // w_iᴴ·H_iᵀ as a row over BS antennas.
                let row = (chan.freq_channel(i, p) * w.map(|c| c.conj())).transpose();
                for j in 0..k {
                    h_eff[(i, j)] = (&row * f_rf.column(j))[(0, 0)];
                }
            }
            let (mut f_bb, regularized) = zero_forcing(&h_eff);
            let stream_power = 1.0 / k as f64;
            for j in 0..k {
                let norm = (&f_rf * f_bb.column(j)).norm();
                let scale = if norm > 0.0 { (stream_power.sqrt()) / norm } else { 0.0 };
                f_bb.column_mut(j).scale_mut(scale);
            }
            Ok(DownlinkLink {
                gain: h_eff * f_bb,
                combiner_power: combiners.iter().map(|w| w.norm_squared()).collect(),
                regularized,
            })
        })
        .collect()
}

fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEfficiency {
    pub bpcu: f64,
    /// Subcarriers whose effective channel needed diagonal loading.
    pub regularized_subcarriers: usize,
}

/// SINR of user k on one link, with residual inter-user interference.
pub fn sinr(link: &DownlinkLink, k: usize, noise_var: f64) -> f64 {
    let signal = link.gain[(k, k)].norm_sqr();
    if signal == 0.0 {
        return 0.0;
    }
    let interference: f64 = (0..link.gain.ncols()).filter(|&j| j != k).map(|j| link.gain[(k, j)].norm_sqr()).sum();
    signal / (interference + noise_var * link.combiner_power[k])
}

/// (1/P)·Σ_p Σ_k log₂(1 + SINR_{k,p}).
pub fn spectral_efficiency(chan: &ChannelRealization, result: &EstimateResult, cfg: &SystemConfig, snr_db: f64) -> Result<SpectralEfficiency> {
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("SNR is NaN".into()));
    }
    let links = downlink_links(chan, result, cfg)?;
    let sigma2 = noise_variance(snr_db);
    let total: f64 = links
        .iter()
        .map(|l| (0..cfg.n_users).map(|k| (1.0 + sinr(l, k, sigma2)).log2()).sum::<f64>())
        .sum();
    Ok(SpectralEfficiency {
        bpcu: total / links.len() as f64,
        regularized_subcarriers: links.iter().filter(|l| l.regularized).count(),
    })
}

const QAM_SCALE: f64 = 0.316_227_766_016_837_94; // 1/√10

/// Gray-mapped 16-QAM: bits (b0, b1) on I and (b2, b3) on Q, 00 → −3, 01 → −1, 11 → +1, 10 → +3.
pub fn qam16_map(bits: u8) -> C64 {
    let level = |b: u8| match b & 0b11 {
        0b00 => -3.0,
        0b01 => -1.0,
        0b11 => 1.0,
        _ => 3.0,
    };
    C64::new(level(bits >> 2), level(bits)) * QAM_SCALE
}

/// Hard-decision inverse of [`qam16_map`].
pub fn qam16_demap(symbol: C64) -> u8 {
    let bits = |v: f64| {
        let v = v / QAM_SCALE;
        if v < -2.0 {
            0b00
        } else if v < 0.0 {
            0b01
        } else if v < 2.0 {
            0b11
        } else {
            0b10
        }
    };
    (bits(symbol.re) << 2) | bits(symbol.im)
}

/// Uncoded 16-QAM bit error rate over the precoded downlink.
///
/// Each user equalizes with its own effective gain G_kk; a user with
/// G_kk = 0 decodes every bit as 0. `n_bits` must be a multiple of 4·K·P.
pub fn ber_16qam<R: Rng + ?Sized>(chan: &ChannelRealization, result: &EstimateResult, cfg: &SystemConfig, snr_db: f64, n_bits: usize, rng: &mut R) -> Result<f64> {
    let block = 4 * cfg.n_users * cfg.n_subcarriers;
    if n_bits == 0 || n_bits % block != 0 {
        return Err(Error::InvalidArgument(format!("n_bits {n_bits} is not a positive multiple of 4·K·P = {block}")));
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidArgument("SNR is NaN".into()));
    }
    let links = downlink_links(chan, result, cfg)?;
    let sigma2 = noise_variance(snr_db);
    let per_link = n_bits / block;
    let k = cfg.n_users;
    let mut errors = 0u64;
    let mut tx_bits = vec![0u8; k];
    let mut s = CVector::zeros(k);
    for link in &links {
        for _ in 0..per_link {
            for (j, b) in tx_bits.iter_mut().enumerate() {
                *b = rng.random_range(0..16u8);
                s[j] = qam16_map(*b);
            }
            let y = &link.gain * &s;
            for u in 0..k {
                let noise = if sigma2 > 0.0 { complex_gaussian(rng, sigma2 * link.combiner_power[u]) } else { C64::new(0.0, 0.0) };
                let g = link.gain[(u, u)];
                let rx = if g == C64::new(0.0, 0.0) { 0 } else { qam16_demap((y[u] + noise) / g) };
                errors += (rx ^ tx_bits[u]).count_ones() as u64;
            }
        }
    }
    Ok(errors as f64 / n_bits as f64)
}
