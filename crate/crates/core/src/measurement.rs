//! Aggregated per-subcarrier measurement model.
//!
//! For subcarrier p the G training symbols stack into
//! r̄_p = Ψ̄_p·h̄ᵃ_p + v̄_p, where row block t of Ψ̄_p is
//! (Ā_UEᴴ·f̄_p^(t))ᵀ ⊗ (Z_p^(t))ᴴ·A_BS. At full scale Ψ̄_p has
//! K·N_bs·N_ue = 16384 columns, so it is never formed: [`MeasurementOperator`]
//! keeps the Kronecker factors and evaluates correlations, column norms and
//! individual atoms directly from them. [`MeasurementOperator::materialize`]
//! builds the dense matrix for small problems and tests.
//!
//! Column ordering follows vect(H̄ᵃ_p) with H̄ᵃ_p = [Hᵃ_1, …, Hᵃ_K]:
//! column k·N_bs·N_ue + n_ue·N_bs + n_bs.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::array::{AngleDictionary, BeamProjector, Grid};
use crate::channel::{complex_gaussian, ChannelRealization};
use crate::config::SystemConfig;
use crate::container::{read_tensors, write_tensors, Tensor};
use crate::error::{Error, Result};
use crate::pilots::PilotBlock;
use crate::{CMatrix, CVector, C64};

/// Pre-noise agreement required between the direct and Kronecker routes.
pub const ROUTE_TOLERANCE: f64 = 1e-10;

/// Factored form of the P aggregated measurement matrices Ψ̄_p.
#[derive(Debug, Clone)]
pub struct MeasurementOperator {
    n_bs: usize,
    n_ue: usize,
    n_rf: usize,
    n_users: usize,
    n_subcarriers: usize,
    n_symbols: usize,
    /// `[p]` [Z_p^(1), …, Z_p^(G)], N_bs × G·N_rf.
    combiners: Vec<CMatrix>,
    /// `[p][k]` [f_{p,k}^(1), …, f_{p,k}^(G)], N_ue × G.
    ue_pilots: Vec<Vec<CMatrix>>,
    bs_proj: BeamProjector,
    ue_proj: BeamProjector,
    /// `[p][k]` canonical-grid UE projections, N_ue × G.
    canon_ue: Vec<Vec<CMatrix>>,
    /// `[p]` canonical-grid BS combiner power, N_bs × G.
    canon_bs_power: Vec<DMatrix<f64>>,
}

impl MeasurementOperator {
    pub fn new(pilots: &PilotBlock, cfg: &SystemConfig) -> Result<Self> {
        pilots.check_dims(cfg)?;
        if pilots.entries().any(|e| !(e.re.is_finite() && e.im.is_finite())) {
            return Err(Error::NonFinite("pilot block"));
        }
        let (g, np, nk, nrf) = (cfg.n_symbols, cfg.n_subcarriers, cfg.n_users, cfg.n_rf_bs);
        let combiners: Vec<CMatrix> = (0..np)
            .map(|p| {
                let mut z = CMatrix::zeros(cfg.n_ant_bs, g * nrf);
                for t in 0..g {
                    z.columns_mut(t * nrf, nrf).copy_from(&pilots.combiner(t, p));
                }
                z
            })
            .collect();
        let ue_pilots: Vec<Vec<CMatrix>> = (0..np)
            .map(|p| {
                (0..nk)
                    .map(|k| {
                        let mut f = CMatrix::zeros(cfg.n_ant_ue, g);
                        for t in 0..g {
                            f.set_column(t, &pilots.pilot(t, p, k));
                        }
                        f
                    })
                    .collect()
            })
            .collect();
        let mut op = Self {
            n_bs: cfg.n_ant_bs,
            n_ue: cfg.n_ant_ue,
            n_rf: nrf,
            n_users: nk,
            n_subcarriers: np,
            n_symbols: g,
            combiners,
            ue_pilots,
            bs_proj: BeamProjector::new(cfg.n_ant_bs),
            ue_proj: BeamProjector::new(cfg.n_ant_ue),
            canon_ue: Vec::new(),
            canon_bs_power: Vec::new(),
        };
        let canonical = Grid::canonical();
        op.canon_ue = (0..np)
            .map(|p| (0..nk).map(|k| op.compute_ue_projection(p, k, &canonical)).collect())
            .collect();
        op.canon_bs_power = (0..np).map(|p| op.compute_bs_power(p, &canonical)).collect();
        Ok(op)
    }

    pub fn n_ant_bs(&self) -> usize {
        self.n_bs
    }

    pub fn n_ant_ue(&self) -> usize {
        self.n_ue
    }

    pub fn n_rf(&self) -> usize {
        self.n_rf
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    /// Rows of Ψ̄_p, G·N_rf.
    pub fn n_rows(&self) -> usize {
        self.n_symbols * self.n_rf
    }

    pub fn columns_per_user(&self) -> usize {
        self.n_bs * self.n_ue
    }

    pub fn n_columns(&self) -> usize {
        self.n_users * self.columns_per_user()
    }

    /// Z_p^(t), N_bs × N_rf.
    pub fn combiner(&self, p: usize, t: usize) -> CMatrix {
        self.combiners[p].columns(t * self.n_rf, self.n_rf).into_owned()
    }

    /// f_{p,k}^(t).
    pub fn ue_pilot(&self, p: usize, k: usize, t: usize) -> CVector {
        self.ue_pilots[p][k].column(t).into_owned()
    }

    /// Splits a column index into (user, n_bs, n_ue).
    pub fn split_column(&self, column: usize) -> (usize, usize, usize) {
        let per_user = self.columns_per_user();
        let (k, local) = (column / per_user, column % per_user);
        (k, local % self.n_bs, local / self.n_bs)
    }

    pub fn join_column(&self, user: usize, n_bs: usize, n_ue: usize) -> usize {
        user * self.columns_per_user() + n_ue * self.n_bs + n_bs
    }

    fn compute_ue_projection(&self, p: usize, k: usize, grid: &Grid) -> CMatrix {
        self.ue_proj.project_columns(&self.ue_pilots[p][k], grid)
    }

    fn compute_bs_power(&self, p: usize, grid: &Grid) -> DMatrix<f64> {
        let proj = self.bs_proj.project_columns(&self.combiners[p], grid);
        let mut out = DMatrix::zeros(proj.nrows(), self.n_symbols);
        for t in 0..self.n_symbols {
            for i in 0..self.n_rf {
                for (o, v) in out.column_mut(t).iter_mut().zip(proj.column(t * self.n_rf + i).iter()) {
                    *o += v.norm_sqr();
                }
            }
        }
        out
    }

    /// u^(t)[q] = a_UE(x_q)ᴴ·f_{p,k}^(t), as a |grid| × G matrix.
    pub fn ue_projection(&self, p: usize, k: usize, grid: &Grid) -> CMatrix {
        if grid.is_canonical() {
            self.canon_ue[p][k].clone()
        } else {
            self.compute_ue_projection(p, k, grid)
        }
    }

    /// ‖(Z_p^(t))ᴴ·a_BS(x_q)‖² as a |grid| × G matrix.
    pub fn bs_power(&self, p: usize, grid: &Grid) -> DMatrix<f64> {
        if grid.is_canonical() {
            self.canon_bs_power[p].clone()
        } else {
            self.compute_bs_power(p, grid)
        }
    }

    /// a_BS(x_q)ᴴ·Z_p^(t)·b^(t) for a stacked residual b, as a |grid| × G matrix.
    pub fn bs_backprojection(&self, p: usize, residual: &CVector, grid: &Grid) -> CMatrix {
        let mut y = CMatrix::zeros(self.n_bs, self.n_symbols);
        for t in 0..self.n_symbols {
            let z = self.combiners[p].columns(t * self.n_rf, self.n_rf);
            y.set_column(t, &(z * residual.rows(t * self.n_rf, self.n_rf)));
        }
        self.bs_proj.project_columns(&y, grid)
    }

    /// Unnormalized correlations ψᴴ·b for user `k`'s columns on the given
    /// grids, as a |bs grid| × |ue grid| matrix.
    pub fn correlate(&self, p: usize, k: usize, residual: &CVector, bs_grid: &Grid, ue_grid: &Grid) -> CMatrix {
        let v = self.bs_backprojection(p, residual, bs_grid);
        if ue_grid.is_canonical() {
            v * self.canon_ue[p][k].adjoint()
        } else {
            v * self.compute_ue_projection(p, k, ue_grid).adjoint()
        }
    }

    /// Squared column norms for user `k` on the given grids.
    pub fn column_norms_sq(&self, p: usize, k: usize, bs_grid: &Grid, ue_grid: &Grid) -> DMatrix<f64> {
        let bs = self.bs_power(p, bs_grid);
        let ue = if ue_grid.is_canonical() {
            self.canon_ue[p][k].map(|c| c.norm_sqr())
        } else {
            self.compute_ue_projection(p, k, ue_grid).map(|c| c.norm_sqr())
        };
        bs * ue.transpose()
    }

    /// Dense block of user `k`'s columns on arbitrary grids; column
    /// n_ue·|bs grid| + n_bs.
    pub fn block(&self, p: usize, k: usize, bs_grid: &Grid, ue_grid: &Grid) -> CMatrix {
        let nb = bs_grid.len(self.n_bs);
        let nu = ue_grid.len(self.n_ue);
        let u = self.ue_projection(p, k, ue_grid);
        // proj[n, t·N_rf + i] = a(x_n)ᴴ·z_i, so W[i, n] = conj of it.
        let proj = self.bs_proj.project_columns(&self.combiners[p], bs_grid);
        let mut out = CMatrix::zeros(self.n_rows(), nb * nu);
        for t in 0..self.n_symbols {
            for i in 0..self.n_rf {
                let row = t * self.n_rf + i;
                let w = proj.column(row);
                for n_ue in 0..nu {
                    let coeff = u[(n_ue, t)];
                    for n_bs in 0..nb {
                        out[(row, n_ue * nb + n_bs)] = coeff * w[n_bs].conj();
                    }
                }
            }
        }
        out
    }

    /// Unnormalized measurement column of the rank-one channel
    /// a_BS(x_bs)·a_UE(x_ue)ᴴ for user `k`.
    pub fn atom(&self, p: usize, k: usize, x_bs: f64, x_ue: f64) -> CVector {
        let block = self.block(p, k, &Grid::Points(vec![x_bs]), &Grid::Points(vec![x_ue]));
        block.column(0).into_owned()
    }

    /// Dense Ψ̄_p.
    pub fn materialize(&self, p: usize) -> CMatrix {
        let per_user = self.columns_per_user();
        let mut out = CMatrix::zeros(self.n_rows(), self.n_columns());
        for k in 0..self.n_users {
            let block = self.block(p, k, &Grid::canonical(), &Grid::canonical());
            out.columns_mut(k * per_user, per_user).copy_from(&block);
        }
        out
    }
}

/// Stacked uplink observations for every subcarrier plus the factored Ψ̄_p.
#[derive(Debug, Clone)]
pub struct MeasurementSet {
    pub config: SystemConfig,
    pub pilots: PilotBlock,
    pub operator: MeasurementOperator,
    /// `[p]` r̄_p of length G·N_rf.
    pub r_bar: Vec<CVector>,
    /// Pre-noise r̄_p, when known (not persisted).
    pub signal: Option<Vec<CVector>>,
    /// Per-entry complex noise variance.
    pub noise_var: f64,
    pub snr_db_target: f64,
    pub snr_db_realized: f64,
    /// Mean over p of ‖Ψ̄_p·h̄ᵃ_p‖².
    pub signal_energy: f64,
    /// Relative disagreement between the two pre-noise evaluation routes.
    pub route_error: f64,
}

impl MeasurementSet {
    pub fn n_subcarriers(&self) -> usize {
        self.r_bar.len()
    }

    /// Dense Ψ̄_p (small problems only).
    pub fn psi_bar(&self, p: usize) -> CMatrix {
        self.operator.materialize(p)
    }

    /// Measurement noise v̄_p = r̄_p − Ψ̄_p·h̄ᵃ_p, when the signal is known.
    pub fn noise(&self) -> Option<Vec<CVector>> {
        self.signal
            .as_ref()
            .map(|s| self.r_bar.iter().zip(s).map(|(r, s)| r - s).collect())
    }
}

/// r_p^(t) = (Z_p^(t))ᴴ·Σ_k H^f_{p,k}·f_{p,k}^(t), evaluated from the channel matrices.
pub fn direct_signal(op: &MeasurementOperator, chan: &ChannelRealization) -> Vec<CVector> {
    (0..op.n_subcarriers)
        .map(|p| {
            let mut r = CVector::zeros(op.n_rows());
            for t in 0..op.n_symbols {
                let mut x = CVector::zeros(op.n_bs);
                for k in 0..op.n_users {
                    x += chan.freq_channel(k, p) * op.ue_pilot(p, k, t);
                }
                let y = op.combiner(p, t).adjoint() * x;
                r.rows_mut(t * op.n_rf, op.n_rf).copy_from(&y);
            }
            r
        })
        .collect()
}

/// Angle-domain coefficients h̄ᵃ_p with H^f_{p,k} = A_BS·Hᵃ_{p,k}·A_UEᴴ.
///
/// With unnormalized DFT dictionaries this is A_BSᴴ·H^f·A_UE / (N_bs·N_ue).
pub fn angle_domain_vector(chan: &ChannelRealization, p: usize, a_bs: &AngleDictionary, a_ue: &AngleDictionary) -> Result<CVector> {
    let scale = C64::new(1.0 / (a_bs.n_antennas() * a_ue.n_antennas()) as f64, 0.0);
    let mut parts = Vec::with_capacity(chan.n_users());
    for k in 0..chan.n_users() {
        let ha = crate::array::angle_transform(chan.freq_channel(k, p), a_bs, a_ue)? * scale;
        parts.extend_from_slice(ha.as_slice());
    }
    Ok(CVector::from_vec(parts))
}

/// Ψ̄_p·h̄ᵃ_p through the dictionary form (Z_p^(t))ᴴ·A_BS·H̄ᵃ_p·Ā_UEᴴ·f̄_p^(t).
fn kronecker_signal(op: &MeasurementOperator, chan: &ChannelRealization) -> Result<Vec<CVector>> {
    let a_bs = AngleDictionary::canonical(op.n_bs)?;
    let a_ue = AngleDictionary::canonical(op.n_ue)?;
    let mut out = Vec::with_capacity(op.n_subcarriers);
    for p in 0..op.n_subcarriers {
        let h_bar = angle_domain_vector(chan, p, &a_bs, &a_ue)?;
        let per_user = op.columns_per_user();
        let h_blocks: Vec<CMatrix> = (0..op.n_users)
            .map(|k| CMatrix::from_column_slice(op.n_bs, op.n_ue, &h_bar.as_slice()[k * per_user..(k + 1) * per_user]))
            .collect();
        let mut r = CVector::zeros(op.n_rows());
        for t in 0..op.n_symbols {
            let mut x = CVector::zeros(op.n_bs);
            for (k, ha) in h_blocks.iter().enumerate() {
                let u = a_ue.columns().adjoint() * op.ue_pilot(p, k, t);
                x += ha * u;
            }
            let y = op.combiner(p, t).adjoint() * (a_bs.columns() * x);
            r.rows_mut(t * op.n_rf, op.n_rf).copy_from(&y);
        }
        out.push(r);
    }
    Ok(out)
}

fn relative_route_error(a: &[CVector], b: &[CVector]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum();
    let reference: f64 = a.iter().map(|x| x.norm_squared()).sum();
    if reference == 0.0 {
        diff.sqrt()
    } else {
        (diff / reference).sqrt()
    }
}

/// Runs the uplink training and returns the aggregated observations.
///
/// The received signal is evaluated directly from the channel matrices and
/// cross-checked against the Kronecker-dictionary route; disagreement above
/// [`ROUTE_TOLERANCE`] is an error. Noise is circular Gaussian with variance
/// chosen so that this realization's mean ‖Ψ̄_p·h̄ᵃ_p‖² over the mean noise
/// energy equals `cfg.snr_db` (an infinite SNR adds no noise).
pub fn assemble_measurement<R: Rng + ?Sized>(pilots: &PilotBlock, chan: &ChannelRealization, cfg: &SystemConfig, rng: &mut R) -> Result<MeasurementSet> {
    cfg.validate()?;
    let operator = MeasurementOperator::new(pilots, cfg)?;
    if chan.n_users() != cfg.n_users
        || chan.freq_channels().iter().any(|hs| {
            hs.len() != cfg.n_subcarriers || hs.iter().any(|h| h.shape() != (cfg.n_ant_bs, cfg.n_ant_ue))
        })
    {
        return Err(Error::Dimension("channel realization does not match config".into()));
    }
    if chan.freq_channels().iter().flatten().flat_map(|h| h.iter()).any(|e| !(e.re.is_finite() && e.im.is_finite())) {
        return Err(Error::NonFinite("channel"));
    }

    let signal = direct_signal(&operator, chan);
    let route_error = relative_route_error(&signal, &kronecker_signal(&operator, chan)?);
    if !(route_error <= ROUTE_TOLERANCE) {
        return Err(Error::RouteMismatch(route_error));
    }

    let n_rows = operator.n_rows();
    let signal_energy = signal.iter().map(|s| s.norm_squared()).sum::<f64>() / signal.len() as f64;
    let noise_var = if cfg.snr_db == f64::INFINITY || signal_energy == 0.0 {
        0.0
    } else {
        signal_energy / n_rows as f64 / 10f64.powf(cfg.snr_db / 10.0)
    };

    let mut noise_energy = 0.0;
    let r_bar: Vec<CVector> = signal
        .iter()
        .map(|s| {
            if noise_var == 0.0 {
                return s.clone();
            }
            let v = CVector::from_fn(n_rows, |_, _| complex_gaussian(rng, noise_var));
            noise_energy += v.norm_squared();
            s + v
        })
        .collect();
    let snr_db_realized = if noise_energy == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal_energy * signal.len() as f64 / noise_energy).log10()
    };

    Ok(MeasurementSet {
        config: cfg.clone(),
        pilots: pilots.clone(),
        operator,
        r_bar,
        signal: Some(signal),
        noise_var,
        snr_db_target: cfg.snr_db,
        snr_db_realized,
        signal_energy,
        route_error,
    })
}

const MEASUREMENT_FORMAT: &str = "dgmp-measurement-v1";

/// Seeds recorded alongside an exported measurement set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub master: Option<u64>,
    pub trial: Option<u64>,
    pub channel: Option<u64>,
    pub pilots: Option<u64>,
    pub noise: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// JSON sidecar describing a measurement tensor container.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementSidecar {
    pub format: String,
    pub tensor_file: String,
    pub tensors: Vec<TensorEntry>,
    pub config: SystemConfig,
    pub config_hash: String,
    pub seeds: SeedRecord,
    /// Serialized as a string so that an infinite target survives JSON.
    pub snr_db_target: String,
    pub snr_db_realized: String,
    pub noise_var: f64,
    pub signal_energy: f64,
}

fn flatten<'a>(values: impl Iterator<Item = &'a C64>) -> Vec<C64> {
    values.copied().collect()
}

fn row_major(m: &CMatrix) -> Vec<C64> {
    m.transpose().as_slice().to_vec()
}

/// Writes `<stem>.bin` (tensors) and `<stem>.json` (sidecar); returns the sidecar path.
pub fn export_measurement(meas: &MeasurementSet, dir: &Path, stem: &str, seeds: &SeedRecord) -> Result<PathBuf> {
    let cfg = &meas.config;
    let pilots = &meas.pilots;
    let (g, np, nk) = (cfg.n_symbols, cfg.n_subcarriers, cfg.n_users);
    let tensors = vec![
        Tensor {
            name: "r_bar".into(),
            shape: vec![np, meas.operator.n_rows()],
            data: flatten(meas.r_bar.iter().flat_map(|r| r.iter())),
        },
        Tensor {
            name: "z_rf".into(),
            shape: vec![g, cfg.n_ant_bs, cfg.n_rf_bs],
            data: pilots.z_rf.iter().flat_map(row_major).collect(),
        },
        Tensor {
            name: "z_bb".into(),
            shape: vec![g, np, cfg.n_rf_bs, cfg.n_rf_bs],
            data: pilots.z_bb.iter().flatten().flat_map(row_major).collect(),
        },
        Tensor {
            name: "f_rf".into(),
            shape: vec![g, nk, cfg.n_ant_ue, cfg.n_rf_ue],
            data: pilots.f_rf.iter().flatten().flat_map(row_major).collect(),
        },
        Tensor {
            name: "s_eff".into(),
            shape: vec![g, np, nk, cfg.n_rf_ue],
            data: flatten(pilots.s_eff.iter().flatten().flatten().flat_map(|v| v.iter())),
        },
    ];
    std::fs::create_dir_all(dir)?;
    let bin_name = format!("{stem}.bin");
    write_tensors(&dir.join(&bin_name), &tensors)?;
    let sidecar = MeasurementSidecar {
        format: MEASUREMENT_FORMAT.into(),
        tensor_file: bin_name,
        tensors: tensors.iter().map(|t| TensorEntry { name: t.name.clone(), shape: t.shape.clone() }).collect(),
        config: cfg.clone(),
        config_hash: cfg.config_hash(),
        seeds: seeds.clone(),
        snr_db_target: meas.snr_db_target.to_string(),
        snr_db_realized: meas.snr_db_realized.to_string(),
        noise_var: meas.noise_var,
        signal_energy: meas.signal_energy,
    };
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(json_path)
}

fn take_matrix(data: &[C64], rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_row_slice(rows, cols, data)
}

/// Loads a measurement set written by [`export_measurement`].
pub fn import_measurement(sidecar_path: &Path) -> Result<(MeasurementSet, MeasurementSidecar)> {
    let sidecar: MeasurementSidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    if sidecar.format != MEASUREMENT_FORMAT {
        return Err(Error::Format(format!("unexpected format '{}'", sidecar.format)));
    }
    let cfg = sidecar.config.clone();
    cfg.validate()?;
    if cfg.config_hash() != sidecar.config_hash {
        return Err(Error::Format("config hash mismatch".into()));
    }
    let dir = sidecar_path.parent().unwrap_or_else(|| Path::new("."));
    let tensors = read_tensors(&dir.join(&sidecar.tensor_file))?;
    let get = |name: &str, shape: &[usize]| -> Result<&Tensor> {
        let t = tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Format(format!("missing tensor '{name}'")))?;
        if t.shape != shape {
            return Err(Error::Format(format!("tensor '{name}' has shape {:?}, expected {shape:?}", t.shape)));
        }
        Ok(t)
    };
    let (g, np, nk) = (cfg.n_symbols, cfg.n_subcarriers, cfg.n_users);
    let rows = g * cfg.n_rf_bs;

    let r = get("r_bar", &[np, rows])?;
    let r_bar = r.data.chunks(rows).map(CVector::from_column_slice).collect();

    let zr = get("z_rf", &[g, cfg.n_ant_bs, cfg.n_rf_bs])?;
    let z_rf = zr.data.chunks(cfg.n_ant_bs * cfg.n_rf_bs).map(|c| take_matrix(c, cfg.n_ant_bs, cfg.n_rf_bs)).collect();

    let zb = get("z_bb", &[g, np, cfg.n_rf_bs, cfg.n_rf_bs])?;
    let zb_mats: Vec<CMatrix> = zb.data.chunks(cfg.n_rf_bs * cfg.n_rf_bs).map(|c| take_matrix(c, cfg.n_rf_bs, cfg.n_rf_bs)).collect();
    let z_bb = zb_mats.chunks(np).map(|c| c.to_vec()).collect();

    let fr = get("f_rf", &[g, nk, cfg.n_ant_ue, cfg.n_rf_ue])?;
    let fr_mats: Vec<CMatrix> = fr.data.chunks(cfg.n_ant_ue * cfg.n_rf_ue).map(|c| take_matrix(c, cfg.n_ant_ue, cfg.n_rf_ue)).collect();
    let f_rf = fr_mats.chunks(nk).map(|c| c.to_vec()).collect();

    let se = get("s_eff", &[g, np, nk, cfg.n_rf_ue])?;
    let se_vecs: Vec<CVector> = se.data.chunks(cfg.n_rf_ue).map(CVector::from_column_slice).collect();
    let per_t: Vec<Vec<CVector>> = se_vecs.chunks(nk).map(|c| c.to_vec()).collect();
    let s_eff = per_t.chunks(np).map(|c| c.to_vec()).collect();

    let pilots = PilotBlock { z_rf, z_bb, f_rf, s_eff };
    let operator = MeasurementOperator::new(&pilots, &cfg)?;
    let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("bad SNR value '{s}': {e}")));
    let meas = MeasurementSet {
        config: cfg,
        pilots,
        operator,
        r_bar,
        signal: None,
        noise_var: sidecar.noise_var,
        snr_db_target: parse(&sidecar.snr_db_target)?,
        snr_db_realized: parse(&sidecar.snr_db_realized)?,
        signal_energy: sidecar.signal_energy,
        route_error: f64::NAN,
    };
    Ok((meas, sidecar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channel;
    use crate::linalg::normalize_columns;
    use crate::pilots::generate_pilots;
    use crate::seeds::rng_from_seed;

    fn tiny_cfg() -> SystemConfig {
        let mut cfg = SystemConfig::desk();
        cfg.n_ant_bs = 8;
        cfg.n_ant_ue = 4;
        cfg.n_users = 1;
        cfg.n_rf_bs = 2;
        cfg.n_symbols = 2;
        cfg.n_subcarriers = 2;
        cfg.tau_max_ns = 4.0;
        cfg.cp_len = 1;
        cfg.ber_bits_per_trial = 4 * 2;
        cfg.validate().unwrap();
        cfg
    }

    #[test]
    fn zero_channel_gives_zero_signal() {
        let cfg = tiny_cfg();
        let pilots = generate_pilots(&cfg, &mut rng_from_seed(1));
        let mut ch = generate_channel(&cfg, &mut rng_from_seed(2), true).unwrap();
        let zeroed: Vec<_> = ch
            .per_user_paths()
            .iter()
            .map(|ps| ps.iter().map(|p| crate::channel::PathComponent { gain: C64::new(0.0, 0.0), ..*p }).collect())
            .collect();
        ch = ChannelRealization::from_paths(zeroed, &cfg).unwrap();
        let meas = assemble_measurement(&pilots, &ch, &cfg, &mut rng_from_seed(3)).unwrap();
        for s in meas.signal.as_ref().unwrap() {
            assert!(s.iter().all(|e| e.norm() == 0.0));
        }
    }

    #[test]
    fn dense_matrix_reproduces_signal() {
        let cfg = tiny_cfg();
        let pilots = generate_pilots(&cfg, &mut rng_from_seed(4));
        let ch = generate_channel(&cfg, &mut rng_from_seed(5), true).unwrap();
        let meas = assemble_measurement(&pilots, &ch, &cfg, &mut rng_from_seed(6)).unwrap();
        assert!(meas.route_error <= ROUTE_TOLERANCE);
        let a_bs = AngleDictionary::canonical(cfg.n_ant_bs).unwrap();
        let a_ue = AngleDictionary::canonical(cfg.n_ant_ue).unwrap();
        for p in 0..cfg.n_subcarriers {
            let h = angle_domain_vector(&ch, p, &a_bs, &a_ue).unwrap();
            let via_dense = meas.psi_bar(p) * h;
            let s = &meas.signal.as_ref().unwrap()[p];
            assert!((&via_dense - s).norm() <= 1e-10 * s.norm());
        }
    }

    #[test]
    fn structured_norms_and_correlations_match_dense() {
        let mut cfg = tiny_cfg();
        cfg.n_users = 2;
        cfg.ber_bits_per_trial = 4 * 2 * 2;
        let pilots = generate_pilots(&cfg, &mut rng_from_seed(7));
        let op = MeasurementOperator::new(&pilots, &cfg).unwrap();
        let b = CVector::from_fn(op.n_rows(), |i, _| C64::new(i as f64 * 0.3 - 1.0, 0.7 - i as f64 * 0.1));
        for p in 0..cfg.n_subcarriers {
            let dense = op.materialize(p);
            let (_, norms) = normalize_columns(&dense).unwrap();
            let corr = dense.adjoint() * &b;
            for k in 0..cfg.n_users {
                let c = op.correlate(p, k, &b, &Grid::canonical(), &Grid::canonical());
                let n2 = op.column_norms_sq(p, k, &Grid::canonical(), &Grid::canonical());
                for n_ue in 0..cfg.n_ant_ue {
                    for n_bs in 0..cfg.n_ant_bs {
                        let col = op.join_column(k, n_bs, n_ue);
                        assert!((c[(n_bs, n_ue)] - corr[col]).norm() < 1e-10);
                        assert!((n2[(n_bs, n_ue)].sqrt() - norms[col]).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn shifted_grid_matches_point_grid() {
        let cfg = tiny_cfg();
        let pilots = generate_pilots(&cfg, &mut rng_from_seed(8));
        let op = MeasurementOperator::new(&pilots, &cfg).unwrap();
        let b = CVector::from_fn(op.n_rows(), |i, _| C64::new(1.0 + i as f64, -0.5));
        let (ob, ou) = (0.35, -0.2);
        let shifted = (Grid::Uniform { offset: ob }, Grid::Uniform { offset: ou });
        let pts = (
            Grid::Points((0..cfg.n_ant_bs).map(|q| (q as f64 + ob) / cfg.n_ant_bs as f64).collect()),
            Grid::Points((0..cfg.n_ant_ue).map(|q| (q as f64 + ou) / cfg.n_ant_ue as f64).collect()),
        );
        let c1 = op.correlate(0, 0, &b, &shifted.0, &shifted.1);
        let c2 = op.correlate(0, 0, &b, &pts.0, &pts.1);
        let n1 = op.column_norms_sq(0, 0, &shifted.0, &shifted.1);
        let n2 = op.column_norms_sq(0, 0, &pts.0, &pts.1);
        assert!((c1 - c2).norm() < 1e-10);
        assert!((n1 - n2).norm() < 1e-9);
        let dense = op.block(0, 0, &pts.0, &pts.1);
        let atom = op.atom(0, 0, pts.0.freq(cfg.n_ant_bs, 3), pts.1.freq(cfg.n_ant_ue, 2));
        assert!((dense.column(2 * cfg.n_ant_bs + 3) - atom).norm() < 1e-12);
    }

    #[test]
    fn subcarrier_matrices_are_diverse() {
        let cfg = tiny_cfg();
        let pilots = generate_pilots(&cfg, &mut rng_from_seed(9));
        let op = MeasurementOperator::new(&pilots, &cfg).unwrap();
        assert!((op.materialize(0) - op.materialize(1)).norm() > 1e-3);
    }

    #[test]
    fn column_helpers_round_trip() {
        let cfg = tiny_cfg();
        let op = MeasurementOperator::new(&generate_pilots(&cfg, &mut rng_from_seed(1)), &cfg).unwrap();
        for c in 0..op.n_columns() {
            let (k, b, u) = op.split_column(c);
            assert_eq!(op.join_column(k, b, u), c);
        }
    }

    #[test]
    fn snr_calibration() {
        let cfg = tiny_cfg().with_snr_db(10.0);
        let pilots = generate_pilots(&cfg, &mut rng_from_seed(10));
        let ch = generate_channel(&cfg, &mut rng_from_seed(11), false).unwrap();
        let mut rng = rng_from_seed(12);
        let (mut sig, mut noi) = (0.0, 0.0);
        for _ in 0..1000 {
            let m = assemble_measurement(&pilots, &ch, &cfg, &mut rng).unwrap();
            sig += m.signal.as_ref().unwrap().iter().map(|s| s.norm_squared()).sum::<f64>();
            noi += m.noise().unwrap().iter().map(|v| v.norm_squared()).sum::<f64>();
        }
        let realized = 10.0 * (sig / noi).log10();
        assert!((realized - 10.0).abs() <= 0.5, "{realized}");
    }

    #[test]
    fn rejects_mismatched_pilots() {
        let cfg = tiny_cfg();
        let pilots = generate_pilots(&cfg.with_symbols(3), &mut rng_from_seed(1));
        let ch = generate_channel(&cfg, &mut rng_from_seed(2), false).unwrap();
        assert!(matches!(assemble_measurement(&pilots, &ch, &cfg, &mut rng_from_seed(3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn export_import_round_trip() {
        let cfg = tiny_cfg();
        let pilots = generate_pilots(&cfg, &mut rng_from_seed(13));
        let ch = generate_channel(&cfg, &mut rng_from_seed(14), false).unwrap();
        let meas = assemble_measurement(&pilots, &ch, &cfg, &mut rng_from_seed(15)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let seeds = SeedRecord { master: Some(1), ..Default::default() };
        let path = export_measurement(&meas, dir.path(), "meas", &seeds).unwrap();
        let (back, sidecar) = import_measurement(&path).unwrap();
        assert_eq!(back.r_bar, meas.r_bar);
        assert_eq!(back.pilots, meas.pilots);
        assert_eq!(back.config, meas.config);
        assert_eq!(sidecar.seeds, seeds);
        assert_eq!(back.noise_var, meas.noise_var);
    }
}
