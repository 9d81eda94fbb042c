//! Coupled-channel Lippmann-Schwinger solver at fixed complex energy.
//!
//! The integral system is discretized with Nystrom quadrature on the
//! momentum grid. Whenever a channel's on-shell point comes close to the
//! integration path, that channel's Cauchy denominator is handled with an
//! on-shell subtraction and the half-shell value at the on-shell momentum
//! joins the linear system as an extra unknown. This keeps the solve
//! accurate arbitrarily close to the cut, where plain quadrature degrades.
//!
//! Real energies on the cut are treated as upper-rim boundary values
//! throughout this path; the plain assembly below rejects them instead.

use faer::complex_native::c64;
use faer::prelude::*;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{ModelSpec, PotentialKernel};
use crate::quadrature::{kernel_value, CauchyRule, MomentumGrid, SUBTRACTION_MARGIN};

/// Solver tuning knobs.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Condition estimate above which the solve is refused.
    pub cond_limit: f64,
    /// Pole-to-path distance below which on-shell subtraction engages.
    /// Capped internally so subtraction never evaluates a Yamaguchi form
    /// factor near its pole.
    pub subtraction_margin: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            cond_limit: 1e12,
            subtraction_margin: SUBTRACTION_MARGIN,
        }
    }
}

impl SolverOptions {
    pub fn from_params(params: &crate::model::SolverParams) -> Self {
        SolverOptions {
            cond_limit: params.cond_limit,
            ..Default::default()
        }
    }
}

pub(crate) fn effective_margin(model: &ModelSpec, requested: f64) -> f64 {
    match &model.potential {
        PotentialKernel::SeparableYamaguchi { range, .. } => {
            let beta_min = range.iter().cloned().fold(f64::INFINITY, f64::min);
            requested.min(0.8 * beta_min)
        }
        _ => requested,
    }
}

/// LU factorization of an assembled system. The factor itself dominates the
/// cost of every determinant and half-shell evaluation, so it runs on faer;
/// everything around it stays on nalgebra types.
pub(crate) struct Factored {
    lu: faer::solvers::PartialPivLu<c64>,
    det: Complex64,
    /// |diag(U)| extremes, a cheap pivot-ratio condition estimate.
    diag_max: f64,
    diag_min: f64,
}

impl Factored {
    pub(crate) fn new(matrix: &DMatrix<Complex64>) -> Self {
        let size = matrix.nrows();
        let lu = faer::Mat::from_fn(size, size, |i, j| {
            let v = matrix[(i, j)];
            c64::new(v.re, v.im)
        })
        .partial_piv_lu();
        let u = lu.compute_u();
        let mut det = Complex64::new(1.0, 0.0);
        let mut diag_max = 0.0f64;
        let mut diag_min = f64::INFINITY;
        for i in 0..size {
            let d = Complex64::new(u[(i, i)].re, u[(i, i)].im);
            det *= d;
            diag_max = diag_max.max(d.norm());
            diag_min = diag_min.min(d.norm());
        }
        if lu.transposition_count() % 2 == 1 {
            det = -det;
        }
        Factored {
            lu,
            det,
            diag_max,
            diag_min,
        }
    }

    pub(crate) fn cond_estimate(&self) -> f64 {
        if self.diag_min == 0.0 {
            f64::INFINITY
        } else {
            self.diag_max / self.diag_min
        }
    }

    pub(crate) fn determinant(&self) -> Complex64 {
        self.det
    }

    pub(crate) fn solve_mat(&self, rhs: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let sol = self.lu.solve(faer::Mat::from_fn(rhs.nrows(), rhs.ncols(), |i, j| {
            let v = rhs[(i, j)];
            c64::new(v.re, v.im)
        }));
        DMatrix::from_fn(rhs.nrows(), rhs.ncols(), |i, j| {
            Complex64::new(sol[(i, j)].re, sol[(i, j)].im)
        })
    }

    pub(crate) fn solve_vec(&self, rhs: &DVector<Complex64>) -> DVector<Complex64> {
        let sol = self.lu.solve(faer::Mat::from_fn(rhs.nrows(), 1, |i, _| {
            let v = rhs[i];
            c64::new(v.re, v.im)
        }));
        DVector::from_fn(rhs.nrows(), |i, _| Complex64::new(sol[(i, 0)].re, sol[(i, 0)].im))
    }
}

/// Factor a system matrix, refusing it when the pivot-ratio condition
/// estimate exceeds `limit`.
pub(crate) fn guarded_lu(matrix: &DMatrix<Complex64>, limit: f64) -> Result<(Factored, f64)> {
    let factored = Factored::new(matrix);
    let cond = factored.cond_estimate();
    if cond > limit {
        return Err(Error::LinearSolveFailure { cond, limit });
    }
    Ok((factored, cond))
}

/// Plain Nystrom assembly of `I + K` with
/// `K_(ai),(gj) = w_j q_j^2 v_ag(q_i, q_j) / (threshold_g + q_j^2 - z)`.
///
/// Valid only where the denominators stay away from zero, so real energies
/// on the cut are rejected. The near-rim solver path is [`solve_halfshell`].
pub fn assemble_system(
    model: &ModelSpec,
    grid: &MomentumGrid,
    z: Complex64,
) -> Result<DMatrix<Complex64>> {
    if z.im == 0.0 && z.re >= model.lowest_threshold() {
        return Err(Error::OnCut { z });
    }
    let parts = Assembly::build(model, grid, z, 0.0)?;
    Ok(parts.matrix)
}

/// Fredholm determinant `det(I + K)` of the plain assembly. Zeros on the
/// physical sheet below the lowest threshold are bound states (poles of t).
pub fn fredholm_det(model: &ModelSpec, grid: &MomentumGrid, z: Complex64) -> Result<Complex64> {
    let matrix = assemble_system(model, grid, z)?;
    Ok(Factored::new(&matrix).determinant())
}

/// The assembled (possibly augmented) system together with its bookkeeping.
pub(crate) struct Assembly {
    pub(crate) matrix: DMatrix<Complex64>,
    pub(crate) rules: Vec<CauchyRule>,
    /// Channels with an on-shell subtraction, ascending; the extra unknowns
    /// follow the grid block in this order.
    pub(crate) subtracted: Vec<usize>,
    /// (channel, momentum) of every row: m*N grid rows, then extras.
    pub(crate) row_points: Vec<(usize, Complex64)>,
}

impl Assembly {
    pub(crate) fn build(
        model: &ModelSpec,
        grid: &MomentumGrid,
        z: Complex64,
        margin: f64,
    ) -> Result<Self> {
        let m = model.n_channels();
        let n = grid.n();
        let rules: Vec<CauchyRule> = (0..m)
            .map(|g| CauchyRule::build(grid, model.threshold(g), z, margin))
            .collect::<Result<_>>()?;
        let subtracted: Vec<usize> = (0..m).filter(|&g| rules[g].subtracted()).collect();
        let mut row_points = Vec::with_capacity(m * n + subtracted.len());
        for a in 0..m {
            for &q in grid.nodes() {
                row_points.push((a, Complex64::new(q, 0.0)));
            }
        }
        for &g in &subtracted {
            row_points.push((g, rules[g].kappa));
        }
        let size = row_points.len();
        let mut matrix = DMatrix::zeros(size, size);
        for (row, &(a, k_row)) in row_points.iter().enumerate() {
            matrix[(row, row)] += Complex64::new(1.0, 0.0);
            for g in 0..m {
                let rule = &rules[g];
                for j in 0..n {
                    let q = grid.nodes()[j];
                    let v = kernel_value(model, a, g, k_row, Complex64::new(q, 0.0))?;
                    matrix[(row, g * n + j)] +=
                        grid.weights()[j] * q * q * v / rule.denominators[j];
                }
            }
            for (extra, &g) in subtracted.iter().enumerate() {
                let rule = &rules[g];
                let v = kernel_value(model, a, g, k_row, rule.kappa)?;
                matrix[(row, m * n + extra)] += rule.onshell_coeff.unwrap() * v;
            }
        }
        Ok(Assembly {
            matrix,
            rules,
            subtracted,
            row_points,
        })
    }

    /// Apply the integral operator to a vector sampled at `row_points`,
    /// evaluated for channel `a` at momentum `k` (which need not be a node).
    pub(crate) fn apply_row(
        &self,
        model: &ModelSpec,
        grid: &MomentumGrid,
        a: usize,
        k: Complex64,
        x: &DVector<Complex64>,
    ) -> Result<Complex64> {
        let m = model.n_channels();
        let n = grid.n();
        let mut acc = Complex64::new(0.0, 0.0);
        for g in 0..m {
            let rule = &self.rules[g];
            for j in 0..n {
                let q = grid.nodes()[j];
                let v = kernel_value(model, a, g, k, Complex64::new(q, 0.0))?;
                acc += grid.weights()[j] * q * q * v * x[g * n + j] / rule.denominators[j];
            }
        }
        for (extra, &g) in self.subtracted.iter().enumerate() {
            let rule = &self.rules[g];
            let v = kernel_value(model, a, g, k, rule.kappa)?;
            acc += rule.onshell_coeff.unwrap() * v * x[m * n + extra];
        }
        Ok(acc)
    }
}

/// Half-shell solution of the coupled system at energy `z`: one column per
/// requested external `(channel, momentum)` plus the on-shell block.
#[derive(Debug, Clone)]
pub struct TMatrixSolution {
    z: Complex64,
    model: ModelSpec,
    grid: MomentumGrid,
    rules: Vec<CauchyRule>,
    subtracted: Vec<usize>,
    externals: Vec<(usize, Complex64)>,
    /// Augmented solution vectors, user externals first, then the m
    /// on-shell columns.
    columns: Vec<DVector<Complex64>>,
    onshell: DMatrix<Complex64>,
    cond_estimate: f64,
}

/// Solve for half-shell columns `t_gb(q_j, kappa_b, z)` at each external
/// `(b, kappa_b)`, plus the on-shell block `t_ab(kappa_a, kappa_b, z)`.
pub fn solve_halfshell(
    model: &ModelSpec,
    grid: &MomentumGrid,
    z: Complex64,
    externals: &[(usize, Complex64)],
    opts: &SolverOptions,
) -> Result<TMatrixSolution> {
    let m = model.n_channels();
    let n = grid.n();
    for &(b, _) in externals {
        if b >= m {
            return Err(Error::InvalidParameter(format!(
                "external channel {b} out of range for {m} channels"
            )));
        }
    }
    let margin = effective_margin(model, opts.subtraction_margin);
    let assembly = Assembly::build(model, grid, z, margin)?;
    let size = assembly.row_points.len();

    // right-hand sides: user externals, then one on-shell column per channel
    let mut all_externals: Vec<(usize, Complex64)> = externals.to_vec();
    for b in 0..m {
        all_externals.push((b, assembly.rules[b].kappa));
    }
    let mut rhs = DMatrix::zeros(size, all_externals.len());
    for (col, &(b, kappa_b)) in all_externals.iter().enumerate() {
        for (row, &(a, k_row)) in assembly.row_points.iter().enumerate() {
            rhs[(row, col)] = kernel_value(model, a, b, k_row, kappa_b)?;
        }
    }

    let (lu, cond_estimate) = guarded_lu(&assembly.matrix, opts.cond_limit)?;
    let solution = lu.solve_mat(&rhs);
    let columns: Vec<DVector<Complex64>> =
        (0..all_externals.len()).map(|c| solution.column(c).into_owned()).collect();

    let mut sol = TMatrixSolution {
        z,
        model: model.clone(),
        grid: grid.clone(),
        rules: assembly.rules,
        subtracted: assembly.subtracted,
        externals: externals.to_vec(),
        columns,
        onshell: DMatrix::zeros(m, m),
        cond_estimate,
    };
    let n_user = externals.len();
    for a in 0..m {
        for b in 0..m {
            let col = n_user + b;
            sol.onshell[(a, b)] = match sol.subtracted.iter().position(|&g| g == a) {
                // the on-shell value is itself an unknown of the system
                Some(extra) => sol.columns[col][m * n + extra],
                None => sol.extend_column(a, sol.rules[a].kappa, col)?,
            };
        }
    }
    Ok(sol)
}

impl TMatrixSolution {
    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn grid(&self) -> &MomentumGrid {
        &self.grid
    }

    /// On-shell momentum of channel `a` (upper-rim branch).
    pub fn kappa(&self, a: usize) -> Complex64 {
        self.rules[a].kappa
    }

    /// The `t_ab(kappa_a, kappa_b, z)` block.
    pub fn onshell(&self) -> &DMatrix<Complex64> {
        &self.onshell
    }

    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    pub fn external_count(&self) -> usize {
        self.externals.len()
    }

    pub fn subtracted_channels(&self) -> &[usize] {
        &self.subtracted
    }

    /// Stored half-shell node value `t_gb(q_j, kappa_b, z)` for external `b`.
    pub fn node_value(&self, g: usize, j: usize, b: usize) -> Complex64 {
        self.columns[b][g * self.grid.n() + j]
    }

    /// Evaluate `t_ab(k, kappa_b, z)` for external column `b` at an
    /// arbitrary momentum by substituting the solved column back into the
    /// integral equation (Nystrom extension).
    pub fn nystrom_extend(&self, a: usize, k: Complex64, b: usize) -> Result<Complex64> {
        if b >= self.externals.len() {
            return Err(Error::InvalidParameter(format!(
                "external column {b} out of range"
            )));
        }
        self.extend_column(a, k, b)
    }

    /// As `nystrom_extend`, for the on-shell column of channel `b`.
    pub fn extend_onshell_column(&self, a: usize, k: Complex64, b: usize) -> Result<Complex64> {
        self.extend_column(a, k, self.externals.len() + b)
    }

    fn extend_column(&self, a: usize, k: Complex64, col: usize) -> Result<Complex64> {
        let m = self.model.n_channels();
        let n = self.grid.n();
        let (b, kappa_b) = if col < self.externals.len() {
            self.externals[col]
        } else {
            let b = col - self.externals.len();
            (b, self.rules[b].kappa)
        };
        let mut value = kernel_value(&self.model, a, b, k, kappa_b)?;
        for g in 0..m {
            let rule = &self.rules[g];
            for j in 0..n {
                let q = self.grid.nodes()[j];
                let v = kernel_value(&self.model, a, g, k, Complex64::new(q, 0.0))?;
                value -= self.grid.weights()[j] * q * q * v * self.columns[col][g * n + j]
                    / rule.denominators[j];
            }
        }
        for (extra, &g) in self.subtracted.iter().enumerate() {
            let rule = &self.rules[g];
            let v = kernel_value(&self.model, a, g, k, rule.kappa)?;
            value -= rule.onshell_coeff.unwrap() * v * self.columns[col][m * n + extra];
        }
        Ok(value)
    }
}
