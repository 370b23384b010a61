//! Randomized constant-modulus training design.
//!
//! Every RF combiner/precoder entry and every baseband combiner/pilot entry
//! is exp(jφ) with φ i.i.d. uniform on [0, 2π). RF stages are shared by all
//! subcarriers; baseband stages change per subcarrier, which diversifies
//! the per-subcarrier measurement matrices.

use std::f64::consts::TAU;

use rand::Rng;

use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::{CMatrix, CVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct PilotBlock {
    /// `[t]`: N_bs × N_rf_bs RF combiners.
    pub z_rf: Vec<CMatrix>,
    /// `[t][p]`: N_rf_bs × N_rf_bs baseband combiners.
    pub z_bb: Vec<Vec<CMatrix>>,
    /// `[t][k]`: N_ue × N_rf_ue UE RF precoders.
    pub f_rf: Vec<Vec<CMatrix>>,
    /// `[t][p][k]`: effective baseband pilots of length N_rf_ue.
    pub s_eff: Vec<Vec<Vec<CVector>>>,
}

fn random_phasor<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::from_polar(1.0, TAU * rng.random::<f64>())
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    // Row-major draw order keeps the stream layout independent of storage.
    let values: Vec<C64> = (0..rows * cols).map(|_| random_phasor(rng)).collect();
    CMatrix::from_row_slice(rows, cols, &values)
}

pub fn generate_pilots<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> PilotBlock {
    let g = cfg.n_symbols;
    let z_rf = (0..g).map(|_| random_matrix(rng, cfg.n_ant_bs, cfg.n_rf_bs)).collect();
    let f_rf = (0..g)
        .map(|_| (0..cfg.n_users).map(|_| random_matrix(rng, cfg.n_ant_ue, cfg.n_rf_ue)).collect())
        .collect();
    let s_eff = (0..g)
        .map(|_| {
            (0..cfg.n_subcarriers)
                .map(|_| {
                    (0..cfg.n_users)
                        .map(|_| CVector::from_iterator(cfg.n_rf_ue, (0..cfg.n_rf_ue).map(|_| random_phasor(rng))))
                        .collect()
                })
                .collect()
        })
        .collect();
    let z_bb = (0..g)
        .map(|_| (0..cfg.n_subcarriers).map(|_| random_matrix(rng, cfg.n_rf_bs, cfg.n_rf_bs)).collect())
        .collect();
    PilotBlock { z_rf, z_bb, f_rf, s_eff }
}

impl PilotBlock {
    pub fn n_symbols(&self) -> usize {
        self.z_rf.len()
    }

    /// Composite BS combiner Z_p^(t) = Z_RF^(t)·Z_BB,p^(t).
    pub fn combiner(&self, t: usize, p: usize) -> CMatrix {
        &self.z_rf[t] * &self.z_bb[t][p]
    }

    /// Transmitted pilot f_{p,k}^(t) = F_RF,k^(t)·s̃_{p,k}^(t).
    pub fn pilot(&self, t: usize, p: usize, k: usize) -> CVector {
        &self.f_rf[t][k] * &self.s_eff[t][p][k]
    }

    /// Checks every block shape against `cfg`.
    pub fn check_dims(&self, cfg: &SystemConfig) -> Result<()> {
        let bad = |what: &str| Err(Error::Dimension(format!("pilot block {what} does not match config")));
        if self.z_rf.len() != cfg.n_symbols
            || self.z_bb.len() != cfg.n_symbols
            || self.f_rf.len() != cfg.n_symbols
            || self.s_eff.len() != cfg.n_symbols
        {
            return bad("symbol count");
        }
        for t in 0..cfg.n_symbols {
            if self.z_rf[t].shape() != (cfg.n_ant_bs, cfg.n_rf_bs) {
                return bad("RF combiner");
            }
            if self.z_bb[t].len() != cfg.n_subcarriers
                || self.z_bb[t].iter().any(|m| m.shape() != (cfg.n_rf_bs, cfg.n_rf_bs))
            {
                return bad("baseband combiner");
            }
            if self.f_rf[t].len() != cfg.n_users
                || self.f_rf[t].iter().any(|m| m.shape() != (cfg.n_ant_ue, cfg.n_rf_ue))
            {
                return bad("UE precoder");
            }
            if self.s_eff[t].len() != cfg.n_subcarriers
                || self.s_eff[t]
                    .iter()
                    .any(|per_k| per_k.len() != cfg.n_users || per_k.iter().any(|s| s.len() != cfg.n_rf_ue))
            {
                return bad("baseband pilot");
            }
        }
        Ok(())
    }

    /// All phase-only entries, in family order RF combiner, UE precoder,
    /// baseband pilot, baseband combiner.
    pub fn entries(&self) -> impl Iterator<Item = &C64> {
        self.z_rf
            .iter()
            .flat_map(|m| m.iter())
            .chain(self.f_rf.iter().flatten().flat_map(|m| m.iter()))
            .chain(self.s_eff.iter().flatten().flatten().flat_map(|v| v.iter()))
            .chain(self.z_bb.iter().flatten().flat_map(|m| m.iter()))
    }
}
