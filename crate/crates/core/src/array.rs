//! Uniform linear array primitives and angle-domain algebra.
//!
//! Angles are carried as spatial frequencies x = d·sin(θ)/λ, reduced modulo 1
//! since the steering map is 1-periodic in x. Steering vectors are stored
//! unnormalized: entry n is exactly exp(j2πnx), so their norm is √N.

use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{CMatrix, CVector, C64};

/// Reduces a spatial frequency to [0, 1).
pub fn wrap_freq(x: f64) -> f64 {
    let w = x.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs.
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Distance between two spatial frequencies on the unit circle.
pub fn freq_distance(a: f64, b: f64) -> f64 {
    let d = wrap_freq(a - b);
    d.min(1.0 - d)
}

/// exp(j2π·frac) with the argument reduced to one period first.
fn unit_phasor(cycles: f64) -> C64 {
    C64::from_polar(1.0, TAU * cycles.rem_euclid(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringVector {
    entries: CVector,
    spatial_freq: f64,
}

impl SteeringVector {
    pub fn entries(&self) -> &CVector {
        &self.entries
    }

    pub fn into_entries(self) -> CVector {
        self.entries
    }

    pub fn spatial_freq(&self) -> f64 {
        self.spatial_freq
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Array response of an `n_antennas`-element ULA at spatial frequency `spatial_freq`.
pub fn steering_vector(n_antennas: usize, spatial_freq: f64) -> Result<SteeringVector> {
    if n_antennas == 0 {
        return Err(Error::InvalidArgument("steering vector needs at least one antenna".into()));
    }
    if !spatial_freq.is_finite() {
        return Err(Error::NonFinite("spatial frequency"));
    }
    Ok(SteeringVector {
        entries: steering_entries(n_antennas, spatial_freq),
        spatial_freq: wrap_freq(spatial_freq),
    })
}

/// Unchecked steering entries, for hot loops that already validated inputs.
pub(crate) fn steering_entries(n_antennas: usize, spatial_freq: f64) -> CVector {
    let x = wrap_freq(spatial_freq);
    CVector::from_iterator(n_antennas, (0..n_antennas).map(|n| unit_phasor(n as f64 * x)))
}

/// Angle dictionary: one steering vector per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleDictionary {
    columns: CMatrix,
    grid: Vec<f64>,
}

impl AngleDictionary {
    /// DFT dictionary with grid q/N, q = 0..N-1.
    pub fn canonical(n_antennas: usize) -> Result<Self> {
        build_dictionary(n_antennas, &canonical_grid(n_antennas))
    }

    pub fn columns(&self) -> &CMatrix {
        &self.columns
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn n_antennas(&self) -> usize {
        self.columns.nrows()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

pub fn canonical_grid(n_antennas: usize) -> Vec<f64> {
    (0..n_antennas).map(|q| q as f64 / n_antennas as f64).collect()
}

pub fn build_dictionary(n_antennas: usize, grid: &[f64]) -> Result<AngleDictionary> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("dictionary grid is empty".into()));
    }
    if n_antennas == 0 {
        return Err(Error::InvalidArgument("dictionary needs at least one antenna".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("dictionary grid"));
    }
    let mut columns = CMatrix::zeros(n_antennas, grid.len());
    for (q, &x) in grid.iter().enumerate() {
        columns.set_column(q, &steering_entries(n_antennas, x));
    }
    Ok(AngleDictionary { columns, grid: grid.iter().map(|&x| wrap_freq(x)).collect() })
}

/// Column-stacking vectorization.
pub fn vect(m: &CMatrix) -> CVector {
    // nalgebra storage is column-major, which is exactly vect(·).
    CVector::from_column_slice(m.as_slice())
}

/// Explicit Kronecker product a ⊗ b.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            for jj in 0..bc {
                for ii in 0..br {
                    out[(i * br + ii, j * bc + jj)] = s * b[(ii, jj)];
                }
            }
        }
    }
    out
}

/// vect(A·X·B), evaluated without forming the Kronecker product.
pub fn vectorize_sandwich(a: &CMatrix, x: &CMatrix, b: &CMatrix) -> Result<CVector> {
    if a.ncols() != x.nrows() || x.ncols() != b.nrows() {
        return Err(Error::Dimension(format!(
            "A·X·B with A {:?}, X {:?}, B {:?}",
            a.shape(),
            x.shape(),
            b.shape()
        )));
    }
    Ok(vect(&(a * x * b)))
}

/// The operator (Bᵀ ⊗ A) that maps vect(X) to vect(A·X·B).
pub fn sandwich_operator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    kron(&b.transpose(), a)
}

/// Angle-domain channel H_a = A_bsᴴ · H_f · A_ue.
pub fn angle_transform(h_f: &CMatrix, a_bs: &AngleDictionary, a_ue: &AngleDictionary) -> Result<CMatrix> {
    check_square(a_bs, "BS")?;
    check_square(a_ue, "UE")?;
    if h_f.nrows() != a_bs.n_antennas() || h_f.ncols() != a_ue.n_antennas() {
        return Err(Error::Dimension(format!(
            "channel {:?} vs dictionaries {}x{}",
            h_f.shape(),
            a_bs.n_antennas(),
            a_ue.n_antennas()
        )));
    }
    Ok(a_bs.columns().adjoint() * h_f * a_ue.columns())
}

/// Inverse of [`angle_transform`]: H_f = A_bs · H_a · A_ueᴴ / (N_bs·N_ue).
///
/// The canonical dictionaries satisfy AᴴA = N·I, which is where the scale
/// comes from.
pub fn inverse_angle_transform(h_a: &CMatrix, a_bs: &AngleDictionary, a_ue: &AngleDictionary) -> Result<CMatrix> {
    check_square(a_bs, "BS")?;
    check_square(a_ue, "UE")?;
    if h_a.nrows() != a_bs.len() || h_a.ncols() != a_ue.len() {
        return Err(Error::Dimension(format!(
            "angle-domain channel {:?} vs dictionaries {}x{}",
            h_a.shape(),
            a_bs.len(),
            a_ue.len()
        )));
    }
    let scale = 1.0 / (a_bs.n_antennas() * a_ue.n_antennas()) as f64;
    Ok(a_bs.columns() * h_a * a_ue.columns().adjoint() * C64::new(scale, 0.0))
}

fn check_square(dict: &AngleDictionary, side: &str) -> Result<()> {
    if dict.len() != dict.n_antennas() {
        return Err(Error::Dimension(format!(
            "{side} dictionary must be square ({} antennas, {} grid points)",
            dict.n_antennas(),
            dict.len()
        )));
    }
    Ok(())
}

/// Beamspace projections a(x_q)ᴴ·y for a fixed array size.
///
/// A uniform grid x_q = (q + offset)/N is evaluated with one FFT after a
/// phase pre-rotation; arbitrary grids fall back to direct sums.
#[derive(Clone)]
pub struct BeamProjector {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for BeamProjector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BeamProjector").field("n", &self.n).finish()
    }
}

/// Grid of spatial frequencies for one array.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    /// N points (q + offset)/N; offset 0 is the canonical DFT grid.
    Uniform { offset: f64 },
    Points(Vec<f64>),
}

impl Grid {
    pub fn canonical() -> Self {
        Grid::Uniform { offset: 0.0 }
    }

    pub fn len(&self, n_antennas: usize) -> usize {
        match self {
            Grid::Uniform { .. } => n_antennas,
            Grid::Points(p) => p.len(),
        }
    }

    pub fn freq(&self, n_antennas: usize, index: usize) -> f64 {
        match self {
            Grid::Uniform { offset } => wrap_freq((index as f64 + offset) / n_antennas as f64),
            Grid::Points(p) => wrap_freq(p[index]),
        }
    }

    pub fn is_canonical(&self) -> bool {
        matches!(self, Grid::Uniform { offset } if *offset == 0.0)
    }
}

impl BeamProjector {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n);
        Self { n, fft }
    }

    pub fn n_antennas(&self) -> usize {
        self.n
    }

    /// Writes a(x_q)ᴴ·y for every grid point into `out`.
    pub fn project_into(&self, y: &[C64], grid: &Grid, out: &mut [C64]) {
        debug_assert_eq!(y.len(), self.n);
        match grid {
            Grid::Uniform { offset } => {
                debug_assert_eq!(out.len(), self.n);
                if *offset == 0.0 {
                    out.copy_from_slice(y);
                } else {
                    let step = -offset / self.n as f64;
                    for (n, (o, v)) in out.iter_mut().zip(y).enumerate() {
                        *o = v * unit_phasor(step * n as f64);
                    }
                }
                self.fft.process(out);
            }
            Grid::Points(points) => {
                debug_assert_eq!(out.len(), points.len());
                for (o, &x) in out.iter_mut().zip(points) {
                    let x = wrap_freq(x);
                    *o = y
                        .iter()
                        .enumerate()
                        .map(|(n, v)| v * unit_phasor(-(n as f64) * x))
                        .sum();
                }
            }
        }
    }

    /// a(x_q)ᴴ·Y for every column of `y`, as a |grid| × ncols matrix.
    pub fn project_columns(&self, y: &CMatrix, grid: &Grid) -> CMatrix {
        debug_assert_eq!(y.nrows(), self.n);
        match grid {
            Grid::Uniform { offset } => {
                let mut out = y.clone();
                if *offset != 0.0 {
                    let step = -offset / self.n as f64;
                    let rot: Vec<C64> = (0..self.n).map(|n| unit_phasor(step * n as f64)).collect();
                    for mut col in out.column_iter_mut() {
                        for (v, r) in col.iter_mut().zip(&rot) {
                            *v *= r;
                        }
                    }
                }
                if self.n > 0 {
                    self.fft.process(out.as_mut_slice());
                }
                out
            }
            Grid::Points(points) => {
                let mut dict = CMatrix::zeros(self.n, points.len());
                for (j, &x) in points.iter().enumerate() {
                    dict.set_column(j, &steering_entries(self.n, x));
                }
                dict.adjoint() * y
            }
        }
    }

    pub fn project(&self, y: &[C64], grid: &Grid) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); grid.len(self.n)];
        self.project_into(y, grid, &mut out);
        out
    }
}
