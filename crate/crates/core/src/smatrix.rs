//! On-shell scattering matrices and their sheet truncations.
//!
//! The scattering matrix is assembled from the on-shell T-matrix block as
//! `s = I + t A` with channel weights `A_a(z) = -pi i q_a(z)`. The truncated
//! matrix `s_l` keeps the interaction only in the channels crossed by the
//! sheet index; its determinant vanishes exactly at the resonances of that
//! sheet, which is what the root search drives on.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lsolve::{solve_halfshell, SolverOptions, TMatrixSolution};
use crate::model::{physical_momentum, ModelSpec, SheetIndex};
use crate::quadrature::MomentumGrid;

/// Channel weight `A_a(z) = -pi i sqrt(z - threshold)` on the physical
/// branch (three-dimensional channels).
pub fn a_factor(z: Complex64, threshold: f64) -> Result<Complex64> {
    let q = physical_momentum(z, threshold)?;
    Ok(-Complex64::i() * PI * q)
}

/// Scattering matrix, its truncation, and the transposed truncation at one
/// energy and sheet index.
#[derive(Debug, Clone)]
pub struct SMatrixSet {
    pub z: Complex64,
    pub sheet: SheetIndex,
    /// On-shell block `t_ab(q_a, q_b, z)`.
    pub onshell_t: DMatrix<Complex64>,
    /// Diagonal of `A(z)`.
    pub a_factors: DVector<Complex64>,
    /// `s = I + t A`.
    pub full: DMatrix<Complex64>,
    /// `s_l = I + L t L A`: interaction kept only in crossed channels.
    pub truncated: DMatrix<Complex64>,
    /// `s_l^T-side variant: I + L A t L`.
    pub transposed_truncated: DMatrix<Complex64>,
}

/// Assemble the scattering matrices for sheet `sheet` from a solved
/// T-matrix.
pub fn build_smatrix(sol: &TMatrixSolution, sheet: &SheetIndex) -> Result<SMatrixSet> {
    let model = sol.model();
    let m = model.n_channels();
    if sheet.len() != m {
        return Err(Error::Validation(format!(
            "sheet index has {} bits for {} channels",
            sheet.len(),
            m
        )));
    }
    let onshell_t = sol.onshell().clone();
    let a_factors = DVector::from_iterator(
        m,
        (0..m)
            .map(|a| a_factor(sol.z(), model.threshold(a)))
            .collect::<Result<Vec<_>>>()?,
    );
    let bits = sheet.projector_diag();
    let mut full = DMatrix::identity(m, m);
    let mut truncated = DMatrix::identity(m, m);
    let mut transposed = DMatrix::identity(m, m);
    for a in 0..m {
        for b in 0..m {
            let coupling = onshell_t[(a, b)] * a_factors[b];
            full[(a, b)] += coupling;
            truncated[(a, b)] += bits[a] * coupling * bits[b];
            transposed[(a, b)] += bits[a] * a_factors[a] * onshell_t[(a, b)] * bits[b];
        }
    }
    Ok(SMatrixSet {
        z: sol.z(),
        sheet: sheet.clone(),
        onshell_t,
        a_factors,
        full,
        truncated,
        transposed_truncated: transposed,
    })
}

impl SMatrixSet {
    fn crossed_submatrix(&self, matrix: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let crossed = self.sheet.crossed_set();
        DMatrix::from_fn(crossed.len(), crossed.len(), |i, j| {
            matrix[(crossed[i], crossed[j])]
        })
    }

    /// `det s_l`: the determinant of the crossed-channel principal
    /// submatrix (the rest of `s_l` is the identity).
    pub fn det_truncated(&self) -> Complex64 {
        let sub = self.crossed_submatrix(&self.truncated);
        if sub.is_empty() {
            return Complex64::new(1.0, 0.0);
        }
        sub.lu().determinant()
    }

    /// Determinant of the transposed truncation; equals `det s_l`.
    pub fn det_transposed(&self) -> Complex64 {
        let sub = self.crossed_submatrix(&self.transposed_truncated);
        if sub.is_empty() {
            return Complex64::new(1.0, 0.0);
        }
        sub.lu().determinant()
    }

    /// Inverse of `s_l`, embedded in the full channel space (identity in
    /// uncrossed channels). Refused near a resonance, where the crossed
    /// block is numerically singular.
    pub fn inverse_truncated(&self) -> Result<DMatrix<Complex64>> {
        self.embedded_inverse(&self.truncated)
    }

    /// Inverse of the transposed truncation, embedded likewise.
    pub fn inverse_transposed(&self) -> Result<DMatrix<Complex64>> {
        self.embedded_inverse(&self.transposed_truncated)
    }

    fn embedded_inverse(&self, matrix: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
        let m = self.sheet.len();
        let crossed = self.sheet.crossed_set();
        let mut out = DMatrix::identity(m, m);
        if crossed.is_empty() {
            return Ok(out);
        }
        let sub = self.crossed_submatrix(matrix);
        let svd = sub.clone().svd(false, false);
        let sigma_min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if sigma_min < 1e-10 {
            return Err(Error::TruncatedSMatrixSingular { sigma_min });
        }
        let inv = sub
            .try_inverse()
            .ok_or(Error::TruncatedSMatrixSingular { sigma_min })?;
        for (i, &a) in crossed.iter().enumerate() {
            for (j, &b) in crossed.iter().enumerate() {
                out[(a, b)] = inv[(i, j)];
            }
        }
        Ok(out)
    }

}

/// Symmetrized open-channel scattering matrix
/// `S_ab = delta_ab - pi i sqrt(q_a q_b) t_ab` over channels open at
/// `Re z`, plus the list of open channels. Similar to the open principal
/// subblock of `s` by the diagonal `sqrt(q)` rescaling, so determinants and
/// zeros are unchanged; unlike `s` it is exactly unitary on the rim.
pub fn symmetrized_open(sol: &TMatrixSolution) -> Result<(DMatrix<Complex64>, Vec<usize>)> {
    let model = sol.model();
    let m = model.n_channels();
    let open: Vec<usize> = (0..m).filter(|&a| sol.z().re > model.threshold(a)).collect();
    let mut s = DMatrix::identity(open.len(), open.len());
    for (i, &a) in open.iter().enumerate() {
        for (j, &b) in open.iter().enumerate() {
            let qa = physical_momentum(sol.z(), model.threshold(a))?;
            let qb = physical_momentum(sol.z(), model.threshold(b))?;
            s[(i, j)] -= Complex64::i() * PI * (qa * qb).sqrt() * sol.onshell()[(a, b)];
        }
    }
    Ok((s, open))
}

/// `det s_l(z)` by a fresh solve at `z`.
pub fn det_truncated(
    model: &ModelSpec,
    grid: &MomentumGrid,
    z: Complex64,
    sheet: &SheetIndex,
    opts: &SolverOptions,
) -> Result<Complex64> {
    let sol = solve_halfshell(model, grid, z, &[], opts)?;
    Ok(build_smatrix(&sol, sheet)?.det_truncated())
}
