use nalgebra::DMatrix;

use super::{check_measurement, fit_atoms, residual_energy, AtomSpec, EstimateResult, PathEstimate, RefinementDiagnostics, UserEstimate};
use crate::array::{wrap_freq, Grid};
use crate::config::{SystemConfig, MAX_INNER_ITERATIONS};
use crate::error::{Error, Result};
use crate::measurement::{MeasurementOperator, MeasurementSet};
use crate::{CMatrix, CVector, C64};

/// Working state of the outer loop.
#[derive(Debug, Clone)]
pub struct DgmpState {
    /// `[p]` residues b_p.
    pub residuals: Vec<CVector>,
    pub chosen_users: Vec<usize>,
    /// Refined (aoa, aod) per chosen user, in selection order.
    pub angles: Vec<(f64, f64)>,
    /// `[p]` normalized atom matrices Ξ_p, one column per chosen user.
    pub xi: Vec<CMatrix>,
    /// `[j][p]` physical gains of the j-th chosen user.
    pub gains: Vec<Vec<C64>>,
}

impl DgmpState {
    pub fn new(meas: &MeasurementSet) -> Self {
        let rows = meas.operator.n_rows();
        Self {
            residuals: meas.r_bar.clone(),
            chosen_users: Vec::new(),
            angles: Vec::new(),
            xi: vec![CMatrix::zeros(rows, 0); meas.r_bar.len()],
            gains: Vec::new(),
        }
    }
}

/// Result of one user's grid-refinement loop.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerOutcome {
    pub aoa_freq: f64,
    pub aod_freq: f64,
    /// β from the last iteration.
    pub beta: f64,
    pub beta_trace: Vec<f64>,
    pub iterations: usize,
    pub capped: bool,
    /// Last coarse argmax (n_bs, n_ue) on the shifted grids.
    pub coarse: (usize, usize),
    /// Last local argmax (m_bs, m_ue), each in 0..2J-1.
    pub local: (usize, usize),
}

/// Fractional bin offset of local grid point `m` for refinement factor `j`.
pub fn local_offset(m: usize, j: usize) -> f64 {
    (m as f64 - (j as f64 - 1.0)) / (2.0 * j as f64)
}

/// Σ_p |ψ̃ᴴ·b_p|² for user `k`'s normalized columns on the given grids,
/// indexed [bs point, ue point]. Zero-norm columns score zero.
pub fn joint_objective(op: &MeasurementOperator, residuals: &[CVector], k: usize, bs_grid: &Grid, ue_grid: &Grid) -> DMatrix<f64> {
    let nb = bs_grid.len(op.n_ant_bs());
    let nu = ue_grid.len(op.n_ant_ue());
    let mut total = DMatrix::zeros(nb, nu);
    for (p, b) in residuals.iter().enumerate() {
        let corr = op.correlate(p, k, b, bs_grid, ue_grid);
        let norms = op.column_norms_sq(p, k, bs_grid, ue_grid);
        for ((t, c), n) in total.iter_mut().zip(corr.iter()).zip(norms.iter()) {
            if *n > 0.0 {
                *t += c.norm_sqr() / n;
            }
        }
    }
    total
}

/// Argmax with column-major scan (first index fastest), ties to the lowest index.
fn argmax(values: &DMatrix<f64>) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for j in 0..values.ncols() {
        for i in 0..values.nrows() {
            let v = values[(i, j)];
            if v > best.2 {
                best = (i, j, v);
            }
        }
    }
    best
}

/// Grid-refinement loop for user `k` against the current residues.
///
/// Each iteration takes the coarse argmax on the user's (shifted) full grids,
/// records β, searches (2J−1)² local candidates spaced 1/(2J·N) around the
/// coarse indices, and shifts both full grids by the winning fractional
/// offset. Stops once |β_last − β| < ε or after [`MAX_INNER_ITERATIONS`].
pub fn inner_refine(state: &DgmpState, k: usize, meas: &MeasurementSet, cfg: &SystemConfig) -> Result<InnerOutcome> {
    let op = &meas.operator;
    let j = cfg.refine_factor;
    if j == 0 || !(cfg.epsilon > 0.0) {
        return Err(Error::Config("refinement needs J >= 1 and epsilon > 0".into()));
    }
    if k >= op.n_users() {
        return Err(Error::InvalidArgument(format!("user {k} out of range")));
    }
    let (n_bs, n_ue) = (op.n_ant_bs(), op.n_ant_ue());
    let n_local = 2 * j - 1;

    let mut shift = (0.0, 0.0);
    let mut beta = 0.0;
    let mut beta_last;
    let mut trace = Vec::new();
    let mut coarse = (0, 0);
    let mut local = (j - 1, j - 1);
    let mut capped = true;
    for _ in 0..MAX_INNER_ITERATIONS {
        beta_last = if trace.is_empty() { f64::INFINITY } else { beta };
        let bs_grid = Grid::Uniform { offset: shift.0 };
        let ue_grid = Grid::Uniform { offset: shift.1 };
        let (q_bs, q_ue, b) = argmax(&joint_objective(op, &state.residuals, k, &bs_grid, &ue_grid));
        beta = b;
        trace.push(beta);
        coarse = (q_bs, q_ue);

        let local_bs: Vec<f64> = (0..n_local).map(|m| (q_bs as f64 + local_offset(m, j)) / n_bs as f64).collect();
        let local_ue: Vec<f64> = (0..n_local).map(|m| (q_ue as f64 + local_offset(m, j)) / n_ue as f64).collect();
        let (m_bs, m_ue, _) = argmax(&joint_objective(op, &state.residuals, k, &Grid::Points(local_bs), &Grid::Points(local_ue)));
        local = (m_bs, m_ue);
        shift = (local_offset(m_bs, j), local_offset(m_ue, j));

        if (beta_last - beta).abs() < cfg.epsilon {
            capped = false;
            break;
        }
    }
    Ok(InnerOutcome {
        aoa_freq: wrap_freq((coarse.0 as f64 + shift.0) / n_bs as f64),
        aod_freq: wrap_freq((coarse.1 as f64 + shift.1) / n_ue as f64),
        beta,
        iterations: trace.len(),
        beta_trace: trace,
        capped,
        coarse,
        local,
    })
}

/// Distributed grid matching pursuit: one LOS path per user.
pub fn dgmp_estimate(meas: &MeasurementSet, cfg: &SystemConfig) -> Result<EstimateResult> {
    let op = &meas.operator;
    check_measurement(op, &meas.r_bar, cfg)?;
    let n_users = op.n_users();
    let mut state = DgmpState::new(meas);
    let mut result = EstimateResult::empty("dgmp", n_users);
    let mut diagnostics = vec![None; n_users];
    let canonical = Grid::canonical();

    for _ in 0..n_users {
        // Joint correlation over the columns of users not yet chosen.
        let mut best: Option<(usize, f64)> = None;
        for k in (0..n_users).filter(|k| !state.chosen_users.contains(k)) {
            let (_, _, v) = argmax(&joint_objective(op, &state.residuals, k, &canonical, &canonical));
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((k, v));
            }
        }
        let Some((k, _)) = best else { break };

        let outcome = inner_refine(&state, k, meas, cfg)?;
        state.chosen_users.push(k);
        state.angles.push((outcome.aoa_freq, outcome.aod_freq));
        let atoms: Vec<AtomSpec> = state
            .chosen_users
            .iter()
            .zip(&state.angles)
            .map(|(&user, &(x_bs, x_ue))| AtomSpec { user, x_bs, x_ue })
            .collect();
        let fit = fit_atoms(op, &meas.r_bar, &atoms)?;
        state.gains = (0..state.chosen_users.len())
            .map(|j| fit.gains.iter().map(|g| g[j]).collect())
            .collect();
        state.residuals = fit.residuals;
        state.xi = fit.xi;
        result.residual_energy.push(residual_energy(&state.residuals));
        diagnostics[k] = Some(RefinementDiagnostics {
            iterations: outcome.iterations,
            capped: outcome.capped,
            final_beta: outcome.beta,
            beta_trace: outcome.beta_trace,
        });
    }

    for (j, &k) in state.chosen_users.iter().enumerate() {
        let (aoa_freq, aod_freq) = state.angles[j];
        result.users[k] = UserEstimate {
            user: k,
            paths: vec![PathEstimate { aoa_freq, aod_freq, gains: state.gains[j].clone() }],
            refinement: diagnostics[k].take(),
        };
    }
    result.selection_order = state.chosen_users;
    Ok(result)
}
