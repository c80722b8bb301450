//! Covariance-matrix representation of Gaussian states.
//!
//! Quadratures are interleaved per mode (`X₁, P₁, X₂, P₂, …`) and normalized
//! so that the vacuum has unit variance in every quadrature. The symplectic
//! form is the direct sum of `[[0, 1], [-1, 0]]` blocks, and a state is
//! physical when every symplectic eigenvalue of its covariance is at least 1.
//!
//! All transforms are pure: they take `&self` and return a new state.

use nalgebra::{DMatrix, DVector, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Slack on the Heisenberg bound `ν ≥ 1` for accumulated rounding.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Maximum asymmetry accepted before a covariance counts as corrupted.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Amplitude (`X`) or phase (`P`) quadrature.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    P,
}

impl Quadrature {
    /// Offset of this quadrature inside a mode's `(X, P)` pair.
    pub fn offset(self) -> usize {
        match self {
            Quadrature::X => 0,
            Quadrature::P => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Quadrature::X => Quadrature::P,
            Quadrature::P => Quadrature::X,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Quadrature::X => "X",
            Quadrature::P => "P",
        }
    }
}

/// One of the two receiving stations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Self {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::A => "A",
            Side::B => "B",
        }
    }

    fn offset(self) -> usize {
        match self {
            Side::A => 0,
            Side::B => 2,
        }
    }
}

/// Gaussian state of `n_modes` optical modes: first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    n_modes: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    /// Build a state from its moments. The covariance is symmetrized and the
    /// result must satisfy the uncertainty principle.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(invalid(format!(
                "mean vector length {dim} is not 2·n_modes"
            )));
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(invalid(format!(
                "covariance is {}x{}, expected {dim}x{dim}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("moments must be finite"));
        }
        let state = Self::from_parts(mean, cov);
        let nu_min = state.min_symplectic_eigenvalue()?;
        if nu_min < 1.0 - PHYSICALITY_TOL {
            return Err(Error::UnphysicalState(format!(
                "smallest symplectic eigenvalue {nu_min} is below 1"
            )));
        }
        Ok(state)
    }

    /// Symmetrizes but does not check physicality; for outputs of maps that
    /// preserve it.
    fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        let cov = (&cov + cov.transpose()) * 0.5;
        Self {
            n_modes: mean.len() / 2,
            mean,
            cov,
        }
    }

    /// `n_modes` vacuum modes: zero mean, identity covariance.
    pub fn vacuum(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(invalid("n_modes must be at least 1"));
        }
        let dim = 2 * n_modes;
        Ok(Self::from_parts(
            DVector::zeros(dim),
            DMatrix::identity(dim, dim),
        ))
    }

    /// Single-mode squeezed state with principal variances `v_sqz` and
    /// `v_asqz`, squeezed axis rotated by `angle` away from `X`.
    pub fn squeezed(v_sqz: f64, v_asqz: f64, angle: f64) -> Result<Self> {
        if !(v_sqz > 0.0 && v_asqz > 0.0) || !v_sqz.is_finite() || !v_asqz.is_finite() {
            return Err(invalid(format!(
                "variances must be positive and finite (got {v_sqz}, {v_asqz})"
            )));
        }
        if v_sqz * v_asqz < 1.0 - PHYSICALITY_TOL {
            return Err(Error::UnphysicalState(format!(
                "variance product {} is below 1",
                v_sqz * v_asqz
            )));
        }
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![v_sqz, v_asqz]));
        let r = rotation(angle);
        let cov = &r * diag * r.transpose();
        Ok(Self::from_parts(DVector::zeros(2), cov))
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn variance(&self, mode: usize, q: Quadrature) -> Result<f64> {
        self.check_mode(mode)?;
        let k = 2 * mode + q.offset();
        Ok(self.cov[(k, k)])
    }

    /// Tensor product `self ⊗ other`; modes of `other` follow those of `self`.
    pub fn tensor(&self, other: &GaussianState) -> GaussianState {
        let d1 = self.mean.len();
        let d = d1 + other.mean.len();
        let mut mean = DVector::zeros(d);
        mean.rows_mut(0, d1).copy_from(&self.mean);
        mean.rows_mut(d1, d - d1).copy_from(&other.mean);
        let mut cov = DMatrix::zeros(d, d);
        cov.view_mut((0, 0), (d1, d1)).copy_from(&self.cov);
        cov.view_mut((d1, d1), (d - d1, d - d1))
            .copy_from(&other.cov);
        Self::from_parts(mean, cov)
    }

    /// Beam splitter between modes `i` and `j` with power transmissivity
    /// `t`: `out_i = √t·in_i + √(1−t)·in_j`, `out_j = √(1−t)·in_i − √t·in_j`,
    /// identically on `X` and `P`.
    pub fn beam_splitter(&self, i: usize, j: usize, transmissivity: f64) -> Result<Self> {
        self.check_mode(i)?;
        self.check_mode(j)?;
        if i == j {
            return Err(invalid("beam splitter needs two distinct modes"));
        }
        if !(0.0..=1.0).contains(&transmissivity) {
            return Err(invalid(format!(
                "transmissivity {transmissivity} outside [0, 1]"
            )));
        }
        let a = transmissivity.sqrt();
        let b = (1.0 - transmissivity).sqrt();
        let mut s = DMatrix::identity(2 * self.n_modes, 2 * self.n_modes);
        for q in 0..2 {
            let (ri, rj) = (2 * i + q, 2 * j + q);
            s[(ri, ri)] = a;
            s[(ri, rj)] = b;
            s[(rj, ri)] = b;
            s[(rj, rj)] = -a;
        }
        Ok(self.transformed(&s))
    }

    /// Phase-space rotation of one mode: `X → cosθ·X − sinθ·P`,
    /// `P → sinθ·X + cosθ·P`.
    pub fn phase_rotation(&self, mode: usize, theta: f64) -> Result<Self> {
        self.check_mode(mode)?;
        let mut s = DMatrix::identity(2 * self.n_modes, 2 * self.n_modes);
        s.view_mut((2 * mode, 2 * mode), (2, 2))
            .copy_from(&rotation(theta));
        Ok(self.transformed(&s))
    }

    /// Pure-loss channel with loss fraction `mu`: the mode is mixed with an
    /// ancillary vacuum at transmissivity `1 − mu` and the ancilla is traced
    /// out, giving `V → (1−mu)·V + mu`.
    pub fn loss_channel(&self, mode: usize, mu: f64) -> Result<Self> {
        self.check_mode(mode)?;
        if !(0.0..=1.0).contains(&mu) {
            return Err(invalid(format!("loss {mu} outside [0, 1]")));
        }
        let ancilla = self.n_modes;
        let extended = self.tensor(&GaussianState::vacuum(1)?);
        extended
            .beam_splitter(mode, ancilla, 1.0 - mu)?
            .drop_mode(ancilla)
    }

    /// Add uncorrelated classical Gaussian noise of variance `eps` to one
    /// quadrature of one mode.
    pub fn add_classical_noise(&self, mode: usize, q: Quadrature, eps: f64) -> Result<Self> {
        self.check_mode(mode)?;
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(invalid(format!(
                "noise variance {eps} must be finite and nonnegative"
            )));
        }
        let mut cov = self.cov.clone();
        let k = 2 * mode + q.offset();
        cov[(k, k)] += eps;
        Ok(Self::from_parts(self.mean.clone(), cov))
    }

    /// Partial trace over one mode.
    pub fn drop_mode(&self, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        if self.n_modes == 1 {
            return Err(invalid("cannot trace out the only mode"));
        }
        let keep: Vec<usize> = (0..2 * self.n_modes).filter(|&k| k / 2 != mode).collect();
        let mean = DVector::from_iterator(keep.len(), keep.iter().map(|&k| self.mean[k]));
        let cov = DMatrix::from_fn(keep.len(), keep.len(), |r, c| self.cov[(keep[r], keep[c])]);
        Ok(Self::from_parts(mean, cov))
    }

    /// Symplectic eigenvalues in descending order, one per mode.
    ///
    /// Computed as the singular values of `σ^½ Ω σ^½`, which is
    /// antisymmetric with eigenvalues `±iν_k`.
    pub fn symplectic_eigenvalues(&self) -> Result<Vec<f64>> {
        let asym = (&self.cov - self.cov.transpose()).amax();
        if asym > SYMMETRY_TOL * self.cov.amax().max(1.0) {
            return Err(Error::Internal(format!("covariance asymmetric by {asym}")));
        }
        let eig = self.cov.clone().symmetric_eigen();
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let root =
            &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
        let a = &root * omega(self.n_modes) * &root;
        let squared = (a.transpose() * &a).symmetric_eigen().eigenvalues;
        let mut nu2: Vec<f64> = squared.iter().map(|v| v.max(0.0)).collect();
        nu2.sort_by(|x, y| y.total_cmp(x));
        Ok(nu2.iter().step_by(2).map(|v| v.sqrt()).collect())
    }

    fn min_symplectic_eigenvalue(&self) -> Result<f64> {
        let eig = self.cov.clone().symmetric_eigen();
        if eig.eigenvalues.min() <= 0.0 {
            return Ok(0.0);
        }
        Ok(self
            .symplectic_eigenvalues()?
            .last()
            .copied()
            .unwrap_or(0.0))
    }

    pub fn is_physical(&self) -> bool {
        matches!(self.min_symplectic_eigenvalue(), Ok(nu) if nu >= 1.0 - PHYSICALITY_TOL)
    }

    /// Purity `Tr ρ² = 1/√det σ`; 1 for pure states.
    pub fn purity(&self) -> f64 {
        1.0 / self.cov.determinant().sqrt()
    }

    /// Covariance block of `(X_a, P_a, X_b, P_b)`.
    pub fn two_mode_stats(&self, mode_a: usize, mode_b: usize) -> Result<TwoModeStats> {
        self.check_mode(mode_a)?;
        self.check_mode(mode_b)?;
        if mode_a == mode_b {
            return Err(invalid("two-mode statistics need two distinct modes"));
        }
        let idx = [2 * mode_a, 2 * mode_a + 1, 2 * mode_b, 2 * mode_b + 1];
        TwoModeStats::new(Matrix4::from_fn(|r, c| self.cov[(idx[r], idx[c])]))
    }

    fn transformed(&self, s: &DMatrix<f64>) -> Self {
        Self::from_parts(s * &self.mean, s * &self.cov * s.transpose())
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes {
            return Err(invalid(format!(
                "mode index {mode} out of range for {} modes",
                self.n_modes
            )));
        }
        Ok(())
    }
}

fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Symplectic form `⊕ [[0, 1], [-1, 0]]`.
pub fn omega(n_modes: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for m in 0..n_modes {
        w[(2 * m, 2 * m + 1)] = 1.0;
        w[(2 * m + 1, 2 * m)] = -1.0;
    }
    w
}

/// Second moments of two modes in `(X_A, P_A, X_B, P_B)` order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoModeStats {
    block: Matrix4<f64>,
}

impl TwoModeStats {
    pub fn new(block: Matrix4<f64>) -> Result<Self> {
        if block.iter().any(|v| !v.is_finite()) {
            return Err(invalid("two-mode block must be finite"));
        }
        let block = (block + block.transpose()) * 0.5;
        if (0..4).any(|k| !(block[(k, k)] > 0.0)) {
            return Err(invalid("two-mode block needs positive variances"));
        }
        Ok(Self { block })
    }

    /// Two uncorrelated vacua.
    pub fn vacuum() -> Self {
        Self {
            block: Matrix4::identity(),
        }
    }

    pub fn block(&self) -> &Matrix4<f64> {
        &self.block
    }

    pub fn var(&self, side: Side, q: Quadrature) -> f64 {
        let k = side.offset() + q.offset();
        self.block[(k, k)]
    }

    /// `Cov(q_A, q_B)`.
    pub fn cov(&self, q: Quadrature) -> f64 {
        self.block[(q.offset(), 2 + q.offset())]
    }

    /// Largest absolute moment coupling an `X` to a `P` quadrature.
    pub fn max_cross_xp(&self) -> f64 {
        let (x, p) = ([0usize, 2], [1usize, 3]);
        x.iter()
            .flat_map(|&i| p.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.block[(i, j)].abs())
            .fold(0.0, f64::max)
    }

    /// Same statistics with the roles of A and B exchanged.
    pub fn swapped(&self) -> Self {
        let idx = [2, 3, 0, 1];
        Self {
            block: Matrix4::from_fn(|r, c| self.block[(idx[r], idx[c])]),
        }
    }

    pub(crate) fn local_det(&self, side: Side) -> f64 {
        let o = side.offset();
        self.block.fixed_view::<2, 2>(o, o).determinant()
    }

    pub(crate) fn cross_det(&self) -> f64 {
        self.block.fixed_view::<2, 2>(0, 2).determinant()
    }
}
