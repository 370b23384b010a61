use std::collections::BTreeSet;

use super::{check_measurement, fit_subcarrier, residual_energy, AtomSpec, EstimateResult, PathEstimate};
use crate::array::Grid;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::measurement::{MeasurementOperator, MeasurementSet};
use crate::{CVector, C64};

struct Selection {
    /// Column indices in selection order.
    columns: Vec<usize>,
    /// `[p]` gains aligned with `columns`.
    gains: Vec<Vec<C64>>,
    residual_energy: Vec<f64>,
}

fn column_atom(op: &MeasurementOperator, column: usize) -> AtomSpec {
    let (user, n_bs, n_ue) = op.split_column(column);
    AtomSpec {
        user,
        x_bs: n_bs as f64 / op.n_ant_bs() as f64,
        x_ue: n_ue as f64 / op.n_ant_ue() as f64,
    }
}

/// Matching pursuit on the canonical grid over the given subcarriers jointly.
fn greedy_select(op: &MeasurementOperator, r_bar: &[CVector], subcarriers: &[usize], n_atoms: usize) -> Result<Selection> {
    let canonical = Grid::canonical();
    let per_user = op.columns_per_user();
    let mut residuals: Vec<CVector> = subcarriers.iter().map(|&p| r_bar[p].clone()).collect();
    let mut chosen: Vec<usize> = Vec::new();
    let mut chosen_set = BTreeSet::new();
    let mut gains = vec![Vec::new(); subcarriers.len()];
    let mut energy = Vec::new();

    for _ in 0..n_atoms {
        let mut objective = vec![0.0; op.n_columns()];
        for (b, &p) in residuals.iter().zip(subcarriers) {
            for k in 0..op.n_users() {
                let corr = op.correlate(p, k, b, &canonical, &canonical);
                let norms = op.column_norms_sq(p, k, &canonical, &canonical);
                // Column-major storage matches the n_ue·N_bs + n_bs layout.
                let block = &mut objective[k * per_user..(k + 1) * per_user];
                for ((o, c), n) in block.iter_mut().zip(corr.iter()).zip(norms.iter()) {
                    if *n > 0.0 {
                        *o += c.norm_sqr() / n;
                    }
                }
            }
        }
        let mut best: Option<(usize, f64)> = None;
        for (col, &v) in objective.iter().enumerate() {
            if !chosen_set.contains(&col) && best.is_none_or(|(_, b)| v > b) {
                best = Some((col, v));
            }
        }
        let Some((col, _)) = best else { break };
        chosen.push(col);
        chosen_set.insert(col);

        let atoms: Vec<AtomSpec> = chosen.iter().map(|&c| column_atom(op, c)).collect();
        gains.clear();
        residuals.clear();
        for &p in subcarriers {
            let (g, b, _) = fit_subcarrier(op, p, &r_bar[p], &atoms)?;
            gains.push(g);
            residuals.push(b);
        }
        energy.push(residual_energy(&residuals));
    }
    Ok(Selection { columns: chosen, gains, residual_energy: energy })
}

fn validate_budget(op: &MeasurementOperator, n_atoms: usize) -> Result<()> {
    if n_atoms > op.n_columns() {
        return Err(Error::InvalidArgument(format!("n_atoms {n_atoms} exceeds {} columns", op.n_columns())));
    }
    Ok(())
}

/// Simultaneous OMP on the fixed canonical grid with a joint correlation over all subcarriers.
pub fn somp_baseline(meas: &MeasurementSet, cfg: &SystemConfig, n_atoms: usize) -> Result<EstimateResult> {
    let op = &meas.operator;
    check_measurement(op, &meas.r_bar, cfg)?;
    validate_budget(op, n_atoms)?;
    let all: Vec<usize> = (0..meas.r_bar.len()).collect();
    let sel = greedy_select(op, &meas.r_bar, &all, n_atoms)?;

    let mut result = EstimateResult::empty("somp", op.n_users());
    for (j, &col) in sel.columns.iter().enumerate() {
        let atom = column_atom(op, col);
        result.users[atom.user].paths.push(PathEstimate {
            aoa_freq: atom.x_bs,
            aod_freq: atom.x_ue,
            gains: sel.gains.iter().map(|g| g[j]).collect(),
        });
        if !result.selection_order.contains(&atom.user) {
            result.selection_order.push(atom.user);
        }
    }
    result.residual_energy = sel.residual_energy;
    Ok(result)
}

/// OMP run independently on each subcarrier; paths are merged by grid column
/// with zero gain on subcarriers that did not select them.
pub fn omp_per_subcarrier_baseline(meas: &MeasurementSet, cfg: &SystemConfig, n_atoms: usize) -> Result<EstimateResult> {
    let op = &meas.operator;
    check_measurement(op, &meas.r_bar, cfg)?;
    validate_budget(op, n_atoms)?;
    let n_sub = meas.r_bar.len();
    let selections: Vec<Selection> = (0..n_sub)
        .map(|p| greedy_select(op, &meas.r_bar, &[p], n_atoms))
        .collect::<Result<_>>()?;

    let mut merged: Vec<(usize, Vec<C64>)> = Vec::new();
    for (p, sel) in selections.iter().enumerate() {
        for (j, &col) in sel.columns.iter().enumerate() {
            let slot = match merged.iter().position(|(c, _)| *c == col) {
                Some(i) => i,
                None => {
                    merged.push((col, vec![C64::new(0.0, 0.0); n_sub]));
                    merged.len() - 1
                }
            };
            merged[slot].1[p] = sel.gains[0][j];
        }
    }

    let mut result = EstimateResult::empty("omp", op.n_users());
    for (col, gains) in merged {
        let atom = column_atom(op, col);
        result.users[atom.user].paths.push(PathEstimate { aoa_freq: atom.x_bs, aod_freq: atom.x_ue, gains });
        if !result.selection_order.contains(&atom.user) {
            result.selection_order.push(atom.user);
        }
    }
    let steps = selections.iter().map(|s| s.residual_energy.len()).max().unwrap_or(0);
    result.residual_energy = (0..steps)
        .map(|i| selections.iter().map(|s| s.residual_energy.get(i).or(s.residual_energy.last()).copied().unwrap_or(0.0)).sum())
        .collect();
    result.per_subcarrier_support = Some(selections.into_iter().map(|s| s.columns).collect());
    Ok(result)
}
