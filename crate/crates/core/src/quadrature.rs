//! Momentum grids and partial-wave kernel evaluation.
//!
//! The half-line is handled with Gauss-Legendre nodes under the rational map
//! `q = c (1+x)/(1-x)`. Cauchy-type integrals with denominators
//! `threshold + q^2 - z` get an automatic on-shell subtraction when the pole
//! pair approaches the integration path, so values stay accurate arbitrarily
//! close to the cut without rotating the contour.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{physical_momentum, ModelSpec, PotentialKernel};

/// Quadrature rule for radial momentum integrals over `(0, inf)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    map_scale: f64,
}

impl MomentumGrid {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn map_scale(&self) -> f64 {
        self.map_scale
    }
}

/// Gauss-Legendre nodes and weights on (-1, 1), by Newton iteration on the
/// Legendre polynomial. Accurate to machine precision for n up to a few
/// thousand.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let legendre = |xi: f64| -> (f64, f64) {
        let (mut p0, mut p1) = (1.0f64, 0.0f64);
        for j in 0..n {
            let p2 = p1;
            p1 = p0;
            p0 = ((2 * j + 1) as f64 * xi * p1 - j as f64 * p2) / (j + 1) as f64;
        }
        let dp = n as f64 * (xi * p0 - p1) / (xi * xi - 1.0);
        (p0, dp)
    };
    for i in 0..n.div_ceil(2) {
        let mut xi = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(xi);
            let dx = p / dp;
            xi -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(xi);
        x[i] = -xi;
        x[n - 1 - i] = xi;
        w[i] = 2.0 / ((1.0 - xi * xi) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Build a momentum grid with `n` nodes and map scale `scale`.
///
/// Grids with 48 or more nodes are self-checked on construction: the rule
/// must integrate `exp(-q)` over the half-line to relative error below 1e-8.
pub fn build_grid(n: usize, scale: f64) -> Result<MomentumGrid> {
    if n < 8 {
        return Err(Error::InvalidParameter(format!(
            "grid needs at least 8 nodes, got {n}"
        )));
    }
    if n > 100_000 {
        return Err(Error::InvalidParameter(format!("grid size {n} is unreasonable")));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "map scale must be positive and finite, got {scale}"
        )));
    }
    let (x, w) = gauss_legendre(n);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let d = 1.0 - x[i];
        nodes.push(scale * (1.0 + x[i]) / d);
        weights.push(w[i] * 2.0 * scale / (d * d));
    }
    let grid = MomentumGrid {
        nodes,
        weights,
        map_scale: scale,
    };
    if n >= 48 {
        let total: f64 = grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .map(|(&q, &w)| w * (-q).exp())
            .sum();
        let rel = (total - 1.0).abs();
        if rel >= 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "grid self-check failed: exp(-q) integrates to relative error {rel:.3e} \
                 (n = {n}, scale = {scale}); adjust the map scale"
            )));
        }
    }
    Ok(grid)
}

/// Exponentially scaled modified spherical Bessel function of the first
/// kind, `exp(-x) i_l(x)`, for complex argument with `Re x >= 0`.
/// Supported for l up to 12.
///
/// Small arguments use the ascending series; larger ones the closed
/// exponential forms with upward recurrence, which is stable once |x| >= l.
/// The scaling keeps values bounded for the large arguments that show up at
/// the far grid nodes, where the bare `i_l` overflows.
pub(crate) fn spherical_bessel_i_scaled(l: u32, x: Complex64) -> Complex64 {
    debug_assert!(l <= 12);
    debug_assert!(x.re >= 0.0);
    let ax = x.norm();
    if ax < (l as f64).max(6.0) {
        return bessel_i_series(l, x) * (-x).exp();
    }
    let em = (-2.0 * x).exp();
    let i0 = (1.0 - em) / (2.0 * x);
    if l == 0 {
        return i0;
    }
    let i1 = (x * (1.0 + em) - (1.0 - em)) / (2.0 * x * x);
    if l == 1 {
        return i1;
    }
    let (mut prev, mut cur) = (i0, i1);
    for k in 1..l {
        let next = prev - (2 * k + 1) as f64 / x * cur;
        prev = cur;
        cur = next;
    }
    cur
}

/// Bare `i_l(x)`; safe only while `exp(|x|)` is representable.
#[cfg(test)]
pub(crate) fn spherical_bessel_i(l: u32, x: Complex64) -> Complex64 {
    if x.re < 0.0 {
        let sign = if l % 2 == 1 { -1.0 } else { 1.0 };
        return sign * spherical_bessel_i_scaled(l, -x) * (-x).exp();
    }
    spherical_bessel_i_scaled(l, x) * x.exp()
}

fn bessel_i_series(l: u32, x: Complex64) -> Complex64 {
    // i_l(x) = x^l sum_s (x^2/2)^s / (s! (2l+2s+1)!!)
    let x2h = x * x * 0.5;
    let mut term = Complex64::new(1.0, 0.0);
    let mut dfact = 1.0f64; // (2l+1)!!
    for k in 0..l {
        dfact *= (2 * k + 3) as f64;
        term *= x;
    }
    if l == 0 {
        dfact = 1.0;
    }
    term /= dfact;
    let mut sum = term;
    for s in 1..200 {
        term *= x2h / ((s as f64) * (2 * l + 2 * s as u32 + 1) as f64);
        sum += term;
        if term.norm() <= 1e-18 * sum.norm().max(1e-300) {
            break;
        }
    }
    sum
}

fn yamaguchi_form_factor(k: Complex64, beta: f64) -> Result<Complex64> {
    let denom = k * k + beta * beta;
    if denom.norm() <= 1e-10 * (k.norm_sqr() + beta * beta) {
        return Err(Error::AnalyticityViolation(format!(
            "momentum {k} sits on a form-factor pole (range {beta})"
        )));
    }
    Ok(1.0 / denom)
}

/// Partial-wave interaction kernel `v_ab(k, k')` of the model in its working
/// partial wave, for complex momenta.
///
/// Conventions: a full kernel `f(k, k')` decomposes as
/// `(1/4pi) sum_l (2l+1) f_l(k,k') P_l(cos theta)` with
/// `f_l = 2pi Int f P_l dcos`, which makes the radial scattering equations
/// factor-free. The Gaussian reduces in closed form to
/// `4pi V exp(-(k^2+k'^2)R^2/4) i_l(k k' R^2/2)`.
pub fn kernel_value(
    model: &ModelSpec,
    a: usize,
    b: usize,
    k: Complex64,
    kp: Complex64,
) -> Result<Complex64> {
    let m = model.n_channels();
    if a >= m || b >= m {
        return Err(Error::InvalidParameter(format!(
            "channel pair ({a},{b}) out of range for {m} channels"
        )));
    }
    let l = model.partial_wave;
    match &model.potential {
        PotentialKernel::Zero => Ok(Complex64::new(0.0, 0.0)),
        PotentialKernel::SeparableYamaguchi { strength, range } => {
            if l != 0 {
                return Err(Error::UnsupportedPartialWave {
                    kind: "yamaguchi",
                    l,
                });
            }
            let ga = yamaguchi_form_factor(k, range[a])?;
            let gb = yamaguchi_form_factor(kp, range[b])?;
            Ok(strength[(a, b)] * (ga * gb))
        }
        PotentialKernel::LocalGaussian { depth, range } => {
            if l > 12 {
                return Err(Error::UnsupportedPartialWave { kind: "gaussian", l });
            }
            let r2 = range[(a, b)] * range[(a, b)];
            let x = k * kp * (0.5 * r2);
            // fold exp(-(k^2+k'^2)R^2/4) into the scaled Bessel factor:
            // the combined exponent -(k -+ k')^2 R^2/4 stays bounded where
            // the bare factors overflow at the far grid nodes
            let (x_pos, sign) = if x.re < 0.0 {
                (-x, if l % 2 == 1 { -1.0 } else { 1.0 })
            } else {
                (x, 1.0)
            };
            let gauss = (-(k * k + kp * kp) * (0.25 * r2) + x_pos).exp();
            let bessel = spherical_bessel_i_scaled(l, x_pos);
            Ok((4.0 * PI * depth[(a, b)] * sign) * (gauss * bessel))
        }
    }
}

/// Default distance from the integration path at which the on-shell
/// subtraction engages.
pub const SUBTRACTION_MARGIN: f64 = 0.35;

/// Discretization of one channel's Cauchy denominator at energy `z`:
/// the per-node denominators plus, close to the cut, an on-shell
/// subtraction node.
#[derive(Debug, Clone)]
pub struct CauchyRule {
    /// `threshold + q_j^2 - z` per grid node.
    pub denominators: Vec<Complex64>,
    /// Channel momentum `sqrt(z - threshold)` on the physical branch.
    pub kappa: Complex64,
    /// Coefficient of `f(kappa)` in the subtracted rule; `None` when the
    /// pole pair is far from the path and the plain rule is accurate.
    pub onshell_coeff: Option<Complex64>,
}

impl CauchyRule {
    /// Build the rule for `Int q^2 f(q) / (threshold + q^2 - z) dq`.
    ///
    /// `margin` is the pole-to-path distance below which subtraction turns
    /// on. The subtraction assumes `f` is even and analytic near `kappa`;
    /// both hold for partial-wave kernels of the supported potentials.
    pub fn build(
        grid: &MomentumGrid,
        threshold: f64,
        z: Complex64,
        margin: f64,
    ) -> Result<CauchyRule> {
        let kappa = physical_momentum(z, threshold)?;
        let mut denominators = Vec::with_capacity(grid.n());
        for &q in grid.nodes() {
            let d = Complex64::new(threshold + q * q, 0.0) - z;
            if d.norm() < 1e-13 * (1.0 + q * q) {
                return Err(Error::SingularKernel(format!(
                    "grid node q = {q} collides with the on-shell point at z = {z}"
                )));
            }
            denominators.push(d);
        }
        // Pole pair is at +-kappa; |Re kappa| lies on the path, so the
        // distance to it is |Im kappa|.
        let onshell_coeff = if kappa.im.abs() < margin {
            let mut dsum = Complex64::new(0.0, 0.0);
            for (j, &w) in grid.weights().iter().enumerate() {
                dsum += w / denominators[j];
            }
            Some(Complex64::i() * PI * kappa * 0.5 - kappa * kappa * dsum)
        } else {
            None
        };
        Ok(CauchyRule {
            denominators,
            kappa,
            onshell_coeff,
        })
    }

    pub fn subtracted(&self) -> bool {
        self.onshell_coeff.is_some()
    }

    /// Apply the rule to a function given its values at the grid nodes and,
    /// when subtracted, at the on-shell point.
    pub fn apply(
        &self,
        grid: &MomentumGrid,
        node_values: &[Complex64],
        onshell_value: Option<Complex64>,
    ) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for (j, (&q, &w)) in grid.nodes().iter().zip(grid.weights()).enumerate() {
            sum += w * q * q * node_values[j] / self.denominators[j];
        }
        if let Some(c) = self.onshell_coeff {
            sum += c * onshell_value.expect("subtracted rule needs the on-shell value");
        }
        sum
    }
}

/// Evaluate `Int_0^inf q^2 f(q) / (threshold + q^2 - z) dq` for a physical
/// sheet energy `z`, accurately up to (and on) the upper rim of the cut.
///
/// `f` must be even and analytic in a neighborhood of the on-shell point
/// whenever `z` lies within [`SUBTRACTION_MARGIN`] of the cut.
pub fn cauchy_integral(
    grid: &MomentumGrid,
    threshold: f64,
    z: Complex64,
    f: &dyn Fn(Complex64) -> Complex64,
) -> Result<Complex64> {
    let rule = CauchyRule::build(grid, threshold, z, SUBTRACTION_MARGIN)?;
    let node_values: Vec<Complex64> = grid
        .nodes()
        .iter()
        .map(|&q| f(Complex64::new(q, 0.0)))
        .collect();
    let onshell = rule.subtracted().then(|| f(rule.kappa));
    Ok(rule.apply(grid, &node_values, onshell))
}
