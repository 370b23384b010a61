//! LOS channel estimators on top of the aggregated measurement model.
//!
//! [`dgmp_estimate`] is the proposed joint greedy search with local grid
//! refinement. [`somp_baseline`] and [`omp_per_subcarrier_baseline`] are
//! fixed-grid references without refinement (joint and independent per
//! subcarrier respectively), and [`oracle_estimate`] fits gains on the true
//! LOS angles.

mod dgmp;
mod greedy;
mod oracle;
mod result;

pub use dgmp::{dgmp_estimate, inner_refine, joint_objective, local_offset, DgmpState, InnerOutcome};
pub use greedy::{omp_per_subcarrier_baseline, somp_baseline};
pub use oracle::oracle_estimate;
pub use result::{EstimateResult, PathEstimate, RefinementDiagnostics, UserEstimate};

use crate::array::steering_entries;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::linalg::{lstsq, normalize_columns};
use crate::measurement::MeasurementOperator;
use crate::{CMatrix, CVector, C64};

/// One atom of a per-subcarrier dictionary: user plus BS/UE spatial frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AtomSpec {
    pub user: usize,
    pub x_bs: f64,
    pub x_ue: f64,
}

/// Per-subcarrier least-squares fit of r̄_p on the normalized atoms.
pub(crate) struct Fit {
    /// `[p][j]` physical gains (normalized LS coefficient over the atom norm).
    pub gains: Vec<Vec<C64>>,
    pub residuals: Vec<CVector>,
    /// `[p]` normalized atom matrices Ξ_p.
    pub xi: Vec<CMatrix>,
}

/// Least-squares fit of one subcarrier: (physical gains, residue, Ξ_p).
pub(crate) fn fit_subcarrier(op: &MeasurementOperator, p: usize, r: &CVector, atoms: &[AtomSpec]) -> Result<(Vec<C64>, CVector, CMatrix)> {
    let mut raw = CMatrix::zeros(op.n_rows(), atoms.len());
    for (j, a) in atoms.iter().enumerate() {
        raw.set_column(j, &op.atom(p, a.user, a.x_bs, a.x_ue));
    }
    let (xi, norms) = normalize_columns(&raw)?;
    let coeffs = lstsq(&xi, r)?;
    let residual = r - &xi * &coeffs;
    Ok((coeffs.iter().zip(&norms).map(|(c, n)| c / *n).collect(), residual, xi))
}

/// Fits the same atom list on every subcarrier.
pub(crate) fn fit_atoms(op: &MeasurementOperator, r_bar: &[CVector], atoms: &[AtomSpec]) -> Result<Fit> {
    let mut fit = Fit { gains: Vec::new(), residuals: Vec::new(), xi: Vec::new() };
    for (p, r) in r_bar.iter().enumerate() {
        let (g, b, xi) = fit_subcarrier(op, p, r, atoms)?;
        fit.gains.push(g);
        fit.residuals.push(b);
        fit.xi.push(xi);
    }
    Ok(fit)
}

pub(crate) fn residual_energy(residuals: &[CVector]) -> f64 {
    residuals.iter().map(|b| b.norm_squared()).sum()
}

pub(crate) fn check_measurement(op: &MeasurementOperator, r_bar: &[CVector], cfg: &SystemConfig) -> Result<()> {
    if op.n_ant_bs() != cfg.n_ant_bs
        || op.n_ant_ue() != cfg.n_ant_ue
        || op.n_users() != cfg.n_users
        || op.n_subcarriers() != cfg.n_subcarriers
        || op.n_symbols() != cfg.n_symbols
        || r_bar.len() != cfg.n_subcarriers
        || r_bar.iter().any(|r| r.len() != op.n_rows())
    {
        return Err(Error::Dimension("measurement set does not match config".into()));
    }
    if r_bar.iter().flat_map(|r| r.iter()).any(|e| !(e.re.is_finite() && e.im.is_finite())) {
        return Err(Error::NonFinite("measurement vector"));
    }
    Ok(())
}

/// Rank-one reconstructions Ĥ_{p,k} = Σ_paths gain_p·a_BS·a_UEᴴ, indexed `[k][p]`.
pub fn reconstruct_channel(result: &EstimateResult, cfg: &SystemConfig) -> Result<Vec<Vec<CMatrix>>> {
    if result.n_users() != cfg.n_users {
        return Err(Error::Dimension(format!("estimate covers {} users, config has {}", result.n_users(), cfg.n_users)));
    }
    let one = C64::new(1.0, 0.0);
    result
        .users
        .iter()
        .map(|u| {
            let mut hs = vec![CMatrix::zeros(cfg.n_ant_bs, cfg.n_ant_ue); cfg.n_subcarriers];
            for path in &u.paths {
                if path.gains.len() != cfg.n_subcarriers {
                    return Err(Error::Dimension(format!("path has {} gains for P = {}", path.gains.len(), cfg.n_subcarriers)));
                }
                let a_bs = steering_entries(cfg.n_ant_bs, path.aoa_freq);
                let a_ue = steering_entries(cfg.n_ant_ue, path.aod_freq);
                for (h, g) in hs.iter_mut().zip(&path.gains) {
                    h.gerc(*g, &a_bs, &a_ue, one);
                }
            }
            Ok(hs)
        })
        .collect()
}
