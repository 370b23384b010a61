use super::{check_measurement, fit_atoms, residual_energy, AtomSpec, EstimateResult, PathEstimate};
use crate::channel::ChannelRealization;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::measurement::MeasurementSet;

/// Gains fitted on the true LOS angles of every user (the ideal-angle bound).
pub fn oracle_estimate(meas: &MeasurementSet, chan: &ChannelRealization, cfg: &SystemConfig) -> Result<EstimateResult> {
    let op = &meas.operator;
    check_measurement(op, &meas.r_bar, cfg)?;
    if chan.n_users() != op.n_users() {
        return Err(Error::Dimension("channel and measurement user counts differ".into()));
    }
    let atoms: Vec<AtomSpec> = (0..op.n_users())
        .map(|k| {
            chan.los_path(k)
                .map(|path| AtomSpec { user: k, x_bs: path.aoa_freq, x_ue: path.aod_freq })
                .ok_or_else(|| Error::InvalidArgument(format!("user {k} has no LOS path")))
        })
        .collect::<Result<_>>()?;
    let fit = fit_atoms(op, &meas.r_bar, &atoms)?;

    let mut result = EstimateResult::empty("oracle", op.n_users());
    for (j, a) in atoms.iter().enumerate() {
        result.users[a.user].paths.push(PathEstimate {
            aoa_freq: a.x_bs,
            aod_freq: a.x_ue,
            gains: fit.gains.iter().map(|g| g[j]).collect(),
        });
    }
    result.selection_order = (0..op.n_users()).collect();
    result.residual_energy = vec![residual_energy(&fit.residuals)];
    Ok(result)
}
