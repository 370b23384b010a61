//! Rician frequency-selective multipath channels.
//!
//! Each user sees one LOS path and `n_paths - 1` NLOS paths. Path gains are
//! zero-mean circular Gaussian with the LOS/NLOS variance split set by the
//! K-factor and unit total average power per user. Delays are uniform on
//! [0, τ_max] with the LOS path taking the smallest one.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::{angle_transform, steering_entries, wrap_freq, AngleDictionary};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::{CMatrix, CVector, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub gain: C64,
    /// Seconds.
    pub delay: f64,
    /// BS-side spatial frequency d·sin(θ)/λ.
    pub aoa_freq: f64,
    /// UE-side spatial frequency d·sin(φ)/λ.
    pub aod_freq: f64,
    pub is_los: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    per_user_paths: Vec<Vec<PathComponent>>,
    /// `[k][p]`, subcarrier p+1, each N_bs × N_ue.
    freq_channels: Vec<Vec<CMatrix>>,
}

/// Draws a zero-mean circular complex Gaussian with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

pub fn generate_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R, on_grid: bool) -> Result<ChannelRealization> {
    cfg.validate()?;
    let l = cfg.n_paths;
    let kf = cfg.k_factor_linear();
    let (los_var, nlos_var) = if l == 1 {
        (1.0, 0.0)
    } else {
        (kf / (kf + 1.0), 1.0 / ((kf + 1.0) * (l - 1) as f64))
    };
    let tau_max = cfg.tau_max_s();

    let mut per_user_paths = Vec::with_capacity(cfg.n_users);
    for _ in 0..cfg.n_users {
        let mut delays: Vec<f64> = (0..l).map(|_| rng.random::<f64>() * tau_max).collect();
        let los_slot = delays
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        delays.swap(0, los_slot);

        let mut paths = Vec::with_capacity(l);
        for (i, &delay) in delays.iter().enumerate() {
            let is_los = i == 0;
            let gain = complex_gaussian(rng, if is_los { los_var } else { nlos_var });
            let (aoa_freq, aod_freq) = if on_grid {
                let q_bs = rng.random_range(0..cfg.n_ant_bs);
                let q_ue = rng.random_range(0..cfg.n_ant_ue);
                (q_bs as f64 / cfg.n_ant_bs as f64, q_ue as f64 / cfg.n_ant_ue as f64)
            } else {
                (rng.random::<f64>(), rng.random::<f64>())
            };
            paths.push(PathComponent { gain, delay, aoa_freq, aod_freq, is_los });
        }
        per_user_paths.push(paths);
    }
    ChannelRealization::from_paths(per_user_paths, cfg)
}

/// Σ_l α_l·exp(−j2π·f_s·τ_l·p/P)·a_BS(x_l)·a_UE(y_l)ᴴ for subcarrier `p` in 1..=P.
pub fn freq_response(paths: &[PathComponent], p: usize, cfg: &SystemConfig) -> Result<CMatrix> {
    if p == 0 || p > cfg.n_subcarriers {
        return Err(Error::InvalidArgument(format!(
            "subcarrier {p} outside 1..={}",
            cfg.n_subcarriers
        )));
    }
    let steering: Vec<(CVector, CVector)> = paths
        .iter()
        .map(|path| {
            (
                steering_entries(cfg.n_ant_bs, path.aoa_freq),
                steering_entries(cfg.n_ant_ue, path.aod_freq),
            )
        })
        .collect();
    Ok(response_from_steering(paths, &steering, p, cfg))
}

fn response_from_steering(paths: &[PathComponent], steering: &[(CVector, CVector)], p: usize, cfg: &SystemConfig) -> CMatrix {
    let fs = cfg.sample_rate_hz();
    let mut h = CMatrix::zeros(cfg.n_ant_bs, cfg.n_ant_ue);
    for (path, (a_bs, a_ue)) in paths.iter().zip(steering) {
        let cycles = fs * path.delay * p as f64 / cfg.n_subcarriers as f64;
        let coeff = path.gain * C64::from_polar(1.0, -TAU * cycles.rem_euclid(1.0));
        h.gerc(coeff, a_bs, a_ue, C64::new(1.0, 0.0));
    }
    h
}

impl ChannelRealization {
    /// Builds the per-subcarrier matrices from path lists.
    pub fn from_paths(per_user_paths: Vec<Vec<PathComponent>>, cfg: &SystemConfig) -> Result<Self> {
        if per_user_paths.len() != cfg.n_users {
            return Err(Error::Dimension(format!(
                "{} user path lists for K = {}",
                per_user_paths.len(),
                cfg.n_users
            )));
        }
        for path in per_user_paths.iter().flatten() {
            let values = [path.gain.re, path.gain.im, path.delay, path.aoa_freq, path.aod_freq];
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("path component"));
            }
        }
        let freq_channels = per_user_paths
            .iter()
            .map(|paths| {
                let steering: Vec<(CVector, CVector)> = paths
                    .iter()
                    .map(|path| {
                        (
                            steering_entries(cfg.n_ant_bs, path.aoa_freq),
                            steering_entries(cfg.n_ant_ue, path.aod_freq),
                        )
                    })
                    .collect();
                (1..=cfg.n_subcarriers)
                    .map(|p| response_from_steering(paths, &steering, p, cfg))
                    .collect()
            })
            .collect();
        Ok(Self { per_user_paths, freq_channels })
    }

    pub fn per_user_paths(&self) -> &[Vec<PathComponent>] {
        &self.per_user_paths
    }

    pub fn paths(&self, user: usize) -> &[PathComponent] {
        &self.per_user_paths[user]
    }

    /// `[k][p]` frequency-domain channels, subcarrier index p = 0..P-1.
    pub fn freq_channels(&self) -> &[Vec<CMatrix>] {
        &self.freq_channels
    }

    pub fn freq_channel(&self, user: usize, p_index: usize) -> &CMatrix {
        &self.freq_channels[user][p_index]
    }

    pub fn n_users(&self) -> usize {
        self.per_user_paths.len()
    }

    pub fn los_path(&self, user: usize) -> Option<&PathComponent> {
        self.per_user_paths[user].iter().find(|p| p.is_los)
    }

    /// Σ over users and subcarriers of ‖H‖_F².
    pub fn energy(&self) -> f64 {
        self.freq_channels.iter().flatten().map(|h| h.norm_squared()).sum()
    }

    pub fn to_json(&self, cfg: &SystemConfig) -> Result<String> {
        let file = ChannelFile {
            format: CHANNEL_FORMAT.to_string(),
            config_hash: cfg.config_hash(),
            users: self.per_user_paths.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Replays a channel written by [`Self::to_json`] under the same config.
    pub fn from_json(text: &str, cfg: &SystemConfig) -> Result<Self> {
        let file: ChannelFile = serde_json::from_str(text)?;
        if file.format != CHANNEL_FORMAT {
            return Err(Error::Format(format!("unexpected channel format '{}'", file.format)));
        }
        if file.config_hash != cfg.config_hash() {
            return Err(Error::Format("channel file was generated under a different config".into()));
        }
        Self::from_paths(file.users, cfg)
    }
}

const CHANNEL_FORMAT: &str = "dgmp-channel-v1";

/// JSON replay schema for a channel realization.
#[derive(Debug, Serialize, Deserialize)]
struct ChannelFile {
    format: String,
    config_hash: String,
    users: Vec<Vec<PathComponent>>,
}

fn angle_domain(realization: &ChannelRealization, user: usize) -> Result<Vec<CMatrix>> {
    let first = realization
        .freq_channels
        .get(user)
        .and_then(|chs| chs.first())
        .ok_or_else(|| Error::InvalidArgument(format!("no channel for user {user}")))?;
    let a_bs = AngleDictionary::canonical(first.nrows())?;
    let a_ue = AngleDictionary::canonical(first.ncols())?;
    realization.freq_channels[user]
        .iter()
        .map(|h| angle_transform(h, &a_bs, &a_ue))
        .collect()
}

/// Per-subcarrier angle-domain supports: vect indices n_ue·N_bs + n_bs whose
/// magnitude exceeds `threshold` times that subcarrier's largest entry.
pub fn common_support(realization: &ChannelRealization, user: usize, threshold: f64) -> Result<Vec<BTreeSet<usize>>> {
    Ok(angle_domain(realization, user)?
        .iter()
        .map(|ha| {
            let peak = ha.iter().map(|e| e.norm()).fold(0.0, f64::max);
            if peak == 0.0 {
                return BTreeSet::new();
            }
            ha.iter()
                .enumerate()
                .filter(|(_, e)| e.norm() > threshold * peak)
                .map(|(i, _)| i)
                .collect()
        })
        .collect())
}

/// Per-subcarrier smallest index sets holding `fraction` of the angle-domain energy.
pub fn energy_support(realization: &ChannelRealization, user: usize, fraction: f64) -> Result<Vec<BTreeSet<usize>>> {
    Ok(angle_domain(realization, user)?
        .iter()
        .map(|ha| {
            let mut entries: Vec<(usize, f64)> = ha.iter().map(|e| e.norm_sqr()).enumerate().collect();
            let total: f64 = entries.iter().map(|e| e.1).sum();
            entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut acc = 0.0;
            let mut set = BTreeSet::new();
            for (i, e) in entries {
                if acc >= fraction * total || total == 0.0 {
                    break;
                }
                acc += e;
                set.insert(i);
            }
            set
        })
        .collect())
}

/// Jaccard index |A∩B| / |A∪B|; two empty sets count as identical.
pub fn jaccard(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Snaps spatial frequencies onto the canonical grids, used by tests and presets.
pub fn grid_index(freq: f64, n_antennas: usize) -> usize {
    ((wrap_freq(freq) * n_antennas as f64).round() as usize) % n_antennas
}
