//! Closed-form reference results for separable channel couplings.
//!
//! With form factors `g(q) = 1/(q^2 + beta^2)` every object of the scattering
//! problem reduces to the scalar loop integral
//! `Phi(z) = Int q^2 g(q)^2 / (threshold + q^2 - z) dq` and small matrix
//! algebra, so T-matrices, scattering matrices, sheet continuations, and
//! resonance positions all have explicit formulas. The integration tests use
//! these as ground truth for the quadrature/linear-solve pipeline.
//!
//! Everything here is derived by residues and validated against adaptive
//! quadrature in this module's tests before anything else relies on it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::model::{physical_momentum, ModelSpec, PotentialKernel, SheetIndex};

/// Yamaguchi form factor `1/(k^2 + beta^2)`.
pub fn form_factor(beta: f64, k: Complex64) -> Complex64 {
    1.0 / (k * k + beta * beta)
}

/// Channel momentum on the physical branch, with the branch point itself
/// mapped to zero (the loop integral is continuous there).
fn kappa(z: Complex64, threshold: f64) -> Complex64 {
    physical_momentum(z, threshold).unwrap_or_else(|_| Complex64::new(0.0, 0.0))
}

/// Physical-sheet loop integral in closed form:
/// `Phi(z) = pi / (4 beta (beta - i kappa)^2)` with `kappa = sqrt(z - threshold)`.
pub fn loop_integral(beta: f64, threshold: f64, z: Complex64) -> Complex64 {
    let k = kappa(z, threshold);
    let d = beta - Complex64::i() * k;
    PI / (4.0 * beta) / (d * d)
}

/// Loop integral continued through the cut when `crossed` is set:
/// the physical value minus the jump `pi i kappa g(kappa)^2`.
pub fn loop_integral_on(beta: f64, threshold: f64, z: Complex64, crossed: bool) -> Complex64 {
    let phi = loop_integral(beta, threshold, z);
    if !crossed {
        return phi;
    }
    let k = kappa(z, threshold);
    let g = form_factor(beta, k);
    phi - Complex64::i() * PI * k * g * g
}

fn separable_parts(model: &ModelSpec) -> Result<(&DMatrix<f64>, &[f64])> {
    match &model.potential {
        PotentialKernel::SeparableYamaguchi { strength, range } if model.partial_wave == 0 => {
            Ok((strength, range))
        }
        _ => Err(Error::Validation(
            "closed forms exist only for separable s-wave couplings".into(),
        )),
    }
}

fn check_sheet(model: &ModelSpec, sheet: &SheetIndex) -> Result<()> {
    if sheet.len() != model.n_channels() {
        return Err(Error::Validation(format!(
            "sheet index has {} bits for {} channels",
            sheet.len(),
            model.n_channels()
        )));
    }
    Ok(())
}

/// Per-channel loop integrals on sheet `sheet`.
pub fn loop_vector(model: &ModelSpec, z: Complex64, sheet: &SheetIndex) -> Result<DVector<Complex64>> {
    let (_, ranges) = separable_parts(model)?;
    check_sheet(model, sheet)?;
    Ok(DVector::from_iterator(
        model.n_channels(),
        (0..model.n_channels()).map(|g| {
            loop_integral_on(ranges[g], model.threshold(g), z, sheet.bits()[g] == 1)
        }),
    ))
}

/// Reduced T-matrix `tau = (I + lambda Phi)^{-1} lambda` on sheet `sheet`.
///
/// `tau` is symmetric for symmetric couplings; the numerical inverse is
/// symmetrized so the closed form keeps that property exactly.
pub fn tau_on(model: &ModelSpec, z: Complex64, sheet: &SheetIndex) -> Result<DMatrix<Complex64>> {
    let (strength, _) = separable_parts(model)?;
    let phi = loop_vector(model, z, sheet)?;
    let m = model.n_channels();
    let lam = strength.map(|x| Complex64::new(x, 0.0));
    let sys = DMatrix::identity(m, m) + &lam * DMatrix::from_diagonal(&phi);
    let inv = sys
        .lu()
        .solve(&lam)
        .ok_or_else(|| Error::SingularKernel("tau system is singular".into()))?;
    Ok((&inv + inv.transpose()).scale(0.5))
}

/// T-matrix entry `t_ab(k, k', z) = g_a(k) tau_ab(z) g_b(k')` on sheet `sheet`.
pub fn tmatrix_on(
    model: &ModelSpec,
    a: usize,
    b: usize,
    k: Complex64,
    kp: Complex64,
    z: Complex64,
    sheet: &SheetIndex,
) -> Result<Complex64> {
    let (_, ranges) = separable_parts(model)?;
    let tau = tau_on(model, z, sheet)?;
    Ok(form_factor(ranges[a], k) * tau[(a, b)] * form_factor(ranges[b], kp))
}

/// Fredholm determinant `det(I + lambda Phi_sheet(z))`.
pub fn det_fredholm(model: &ModelSpec, z: Complex64, sheet: &SheetIndex) -> Result<Complex64> {
    let (strength, _) = separable_parts(model)?;
    let phi = loop_vector(model, z, sheet)?;
    let m = model.n_channels();
    let lam = strength.map(|x| Complex64::new(x, 0.0));
    let sys = DMatrix::identity(m, m) + &lam * DMatrix::from_diagonal(&phi);
    Ok(sys.lu().determinant())
}

/// Determinant of the truncated scattering matrix,
/// `det s_sheet(z) = det(I + lambda Phi_sheet) / det(I + lambda Phi)`.
pub fn det_truncated(model: &ModelSpec, z: Complex64, sheet: &SheetIndex) -> Result<Complex64> {
    let num = det_fredholm(model, z, sheet)?;
    let den = det_fredholm(model, z, &SheetIndex::physical(model.n_channels()))?;
    Ok(num / den)
}

/// Physical scattering matrix
/// `s_ab = delta_ab - pi i kappa_b g_a(kappa_a) tau_ab g_b(kappa_b)`.
pub fn smatrix(model: &ModelSpec, z: Complex64) -> Result<DMatrix<Complex64>> {
    smatrix_continued(model, z, &SheetIndex::physical(model.n_channels()))
}

/// Scattering matrix continued to sheet `sheet`. Crossing a channel flips
/// its momentum, which for even form factors only flips the sign of the
/// `-pi i kappa` weight in that channel's column.
pub fn smatrix_continued(
    model: &ModelSpec,
    z: Complex64,
    sheet: &SheetIndex,
) -> Result<DMatrix<Complex64>> {
    let (_, ranges) = separable_parts(model)?;
    let tau = tau_on(model, z, sheet)?;
    let m = model.n_channels();
    let signs = sheet.momentum_signs();
    let mut s = DMatrix::identity(m, m);
    for a in 0..m {
        let ka = kappa(z, model.threshold(a));
        let ga = form_factor(ranges[a], ka);
        for b in 0..m {
            let kb = kappa(z, model.threshold(b));
            let gb = form_factor(ranges[b], kb);
            let weight = -Complex64::i() * PI * (signs[b] * kb);
            s[(a, b)] += ga * tau[(a, b)] * gb * weight;
        }
    }
    Ok(s)
}

/// Resolvent matrix element between the channel form factors themselves,
/// `<g, g(z) g> = sum_g Phi_g - sum_gd Phi_g tau_gd Phi_d`, on sheet `sheet`.
pub fn resolvent_pairing(model: &ModelSpec, z: Complex64, sheet: &SheetIndex) -> Result<Complex64> {
    let phi = loop_vector(model, z, sheet)?;
    let tau = tau_on(model, z, sheet)?;
    let mut value = phi.sum();
    for g in 0..model.n_channels() {
        for d in 0..model.n_channels() {
            value -= phi[g] * tau[(g, d)] * phi[d];
        }
    }
    Ok(value)
}

/// Free-resolvent pairing (zero coupling): `sum_g Phi_g` on sheet `sheet`.
pub fn free_resolvent_pairing(
    model: &ModelSpec,
    z: Complex64,
    sheet: &SheetIndex,
) -> Result<Complex64> {
    Ok(loop_vector(model, z, sheet)?.sum())
}

/// Algebraic root positions of a single separable channel.
///
/// With `s = sqrt(|strength| pi / (4 beta))`:
/// attraction binds once `s > beta` (bound state at `threshold - (s-beta)^2`),
/// always leaves a crossed-sheet zero at `threshold - (s+beta)^2`, and below
/// critical strength leaves a second one at `threshold - (beta-s)^2`;
/// repulsion puts a conjugate pair at `threshold + (+-s + i beta)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBodyRoots {
    /// Coupling at which a zero-energy bound state appears: `-4 beta^3 / pi`.
    pub critical_strength: f64,
    /// Physical-sheet pole below threshold, if bound.
    pub bound: Option<f64>,
    /// Real crossed-sheet zeros below threshold.
    pub virtual_states: Vec<f64>,
    /// Crossed-sheet conjugate pair (upper, lower), for repulsive coupling.
    pub resonance_pair: Option<(Complex64, Complex64)>,
}

pub fn two_body_roots(strength: f64, beta: f64, threshold: f64) -> TwoBodyRoots {
    let critical_strength = -4.0 * beta.powi(3) / PI;
    let mut roots = TwoBodyRoots {
        critical_strength,
        bound: None,
        virtual_states: Vec::new(),
        resonance_pair: None,
    };
    if strength < 0.0 {
        let s = (strength.abs() * PI / (4.0 * beta)).sqrt();
        if s > beta {
            roots.bound = Some(threshold - (s - beta) * (s - beta));
        } else if s < beta {
            roots.virtual_states.push(threshold - (beta - s) * (beta - s));
        }
        roots.virtual_states.push(threshold - (beta + s) * (beta + s));
        roots.virtual_states.sort_by(|a, b| a.partial_cmp(b).unwrap());
    } else if strength > 0.0 {
        let sp = (strength * PI / (4.0 * beta)).sqrt();
        let upper = Complex64::new(threshold, 0.0) + Complex64::new(sp, beta).powi(2);
        let lower = Complex64::new(threshold, 0.0) + Complex64::new(-sp, beta).powi(2);
        roots.resonance_pair = Some((upper, lower));
    }
    roots
}

/// Muller iteration on an analytic scalar function. Returns the root when
/// |f| drops below `ftol` (or the step stalls at a point nearly as good).
fn muller(
    f: &dyn Fn(Complex64) -> Complex64,
    z0: Complex64,
    spread: f64,
    ftol: f64,
) -> Option<Complex64> {
    let mut x0 = z0 + Complex64::new(spread, 0.0);
    let mut x1 = z0 + Complex64::new(-0.4 * spread, 0.9 * spread);
    let mut x2 = z0;
    let (mut f0, mut f1, mut f2) = (f(x0), f(x1), f(x2));
    for _ in 0..60 {
        let h1 = x1 - x0;
        let h2 = x2 - x1;
        if h1.norm() == 0.0 || h2.norm() == 0.0 {
            break;
        }
        let d1 = (f1 - f0) / h1;
        let d2 = (f2 - f1) / h2;
        let dd = (d2 - d1) / (h2 + h1);
        let b = d2 + h2 * dd;
        let disc = (b * b - 4.0 * f2 * dd).sqrt();
        let den = if (b + disc).norm() >= (b - disc).norm() {
            b + disc
        } else {
            b - disc
        };
        if den.norm() == 0.0 {
            break;
        }
        let step = -2.0 * f2 / den;
        let x3 = x2 + step;
        let f3 = f(x3);
        x0 = x1;
        f0 = f1;
        x1 = x2;
        f1 = f2;
        x2 = x3;
        f2 = f3;
        if f2.norm() < ftol {
            return Some(x2);
        }
        if step.norm() < 1e-13 * (1.0 + x2.norm()) {
            break;
        }
    }
    (f2.norm() < ftol * 100.0).then_some(x2)
}

/// Zeros of `det s_sheet(z)` inside a rectangle, from the closed form:
/// roots of `det(I + lambda Phi_sheet) = 0` that are not cancelled by a
/// coinciding physical-sheet pole. These are the reference resonance and
/// virtual-state positions.
pub fn resonance_roots(
    model: &ModelSpec,
    sheet: &SheetIndex,
    re_range: (f64, f64),
    im_range: (f64, f64),
) -> Result<Vec<Complex64>> {
    separable_parts(model)?;
    check_sheet(model, sheet)?;
    let physical = SheetIndex::physical(model.n_channels());
    let numerator = |z: Complex64| det_fredholm(model, z, sheet).unwrap();
    let (nx, ny) = (48usize, 48usize);
    let dx = (re_range.1 - re_range.0) / (nx - 1) as f64;
    let dy = (im_range.1 - im_range.0) / (ny - 1) as f64;
    if !(dx > 0.0 && dy > 0.0) {
        return Err(Error::InvalidRegion("degenerate rectangle".into()));
    }
    let mut mag = vec![vec![0.0f64; nx]; ny];
    for (iy, row) in mag.iter_mut().enumerate() {
        for (ix, cell) in row.iter_mut().enumerate() {
            let z = Complex64::new(
                re_range.0 + ix as f64 * dx,
                im_range.0 + iy as f64 * dy,
            );
            *cell = numerator(z).norm();
        }
    }
    let spread = 0.5 * dx.hypot(dy);
    let mut roots: Vec<Complex64> = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let v = mag[iy][ix];
            let mut is_min = true;
            for (jy, jx) in neighbors(iy, ix, ny, nx) {
                if mag[jy][jx] < v {
                    is_min = false;
                    break;
                }
            }
            if !is_min {
                continue;
            }
            let z0 = Complex64::new(
                re_range.0 + ix as f64 * dx,
                im_range.0 + iy as f64 * dy,
            );
            let Some(root) = muller(&numerator, z0, spread, 1e-12) else {
                continue;
            };
            if root.re < re_range.0
                || root.re > re_range.1
                || root.im < im_range.0
                || root.im > im_range.1
            {
                continue;
            }
            // a coinciding physical-sheet zero cancels in det s_sheet
            if det_fredholm(model, root, &physical)?.norm() < 1e-8 {
                continue;
            }
            if roots.iter().all(|r| (r - root).norm() > 1e-7) {
                roots.push(root);
            }
        }
    }
    roots.sort_by(|a, b| (a.re, a.im).partial_cmp(&(b.re, b.im)).unwrap());
    Ok(roots)
}

fn neighbors(iy: usize, ix: usize, ny: usize, nx: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(8);
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if dy == 0 && dx == 0 {
                continue;
            }
            let (jy, jx) = (iy as i64 + dy, ix as i64 + dx);
            if jy >= 0 && jy < ny as i64 && jx >= 0 && jx < nx as i64 {
                out.push((jy as usize, jx as usize));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;
    use crate::quadrature::{build_grid, cauchy_integral};
    use approx::assert_relative_eq;

    fn one_channel(strength: f64, beta: f64, threshold: f64) -> ModelSpec {
        parse_model(&format!(
            r#"{{"channels": [{{"threshold": {threshold}}}],
                 "potential": {{"kind": "yamaguchi", "strength": [[{strength}]], "range": [{beta}]}}}}"#
        ))
        .unwrap()
    }

    fn two_channel() -> ModelSpec {
        parse_model(
            r#"{"channels": [{"threshold": 0.0}, {"threshold": 1.5}],
                "potential": {"kind": "yamaguchi",
                              "strength": [[-2.0, 0.6], [0.6, -1.4]],
                              "range": [1.0, 1.3]}}"#,
        )
        .unwrap()
    }

    fn sheet(bits: &[u8]) -> SheetIndex {
        SheetIndex::new(bits.to_vec()).unwrap()
    }

    // The mandatory pre-trust validation: the closed form against adaptive
    // quadrature, everywhere we later rely on it.
    #[test]
    fn loop_integral_matches_quadrature() {
        for &(beta, threshold) in &[(0.8, 0.0), (1.0, 0.0), (1.6, 1.5)] {
            let grid = build_grid(400, beta).unwrap();
            let g2 = move |q: Complex64| {
                let g = form_factor(beta, q);
                g * g
            };
            let zs = [
                Complex64::new(threshold - 1.0, 0.0),
                Complex64::new(threshold - 0.5, 0.0),
                Complex64::new(threshold + 1.0, 0.8),
                Complex64::new(threshold + 2.0, -0.7),
                Complex64::new(threshold + 1.3, 1e-6),
                Complex64::new(threshold + 1.3, 0.0),
                Complex64::new(threshold - 0.03, 0.0),
            ];
            for &z in &zs {
                let want = cauchy_integral(&grid, threshold, z, &g2).unwrap();
                let got = loop_integral(beta, threshold, z);
                assert!(
                    (got - want).norm() <= 1e-12 * (1.0 + want.norm()),
                    "beta={beta} th={threshold} z={z}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn loop_integral_threshold_value() {
        // At z exactly on the lowest branch point the denominator reduces to
        // q^2 and the integral collapses to Int g(q)^2 dq = pi / (4 beta^3).
        for &beta in &[0.7f64, 1.0, 1.9] {
            let expected = PI / (4.0 * beta.powi(3));
            let got = loop_integral(beta, 0.0, Complex64::new(0.0, 0.0));
            assert_relative_eq!(got.re, expected, max_relative = 1e-14);
            assert!(got.im.abs() < 1e-15);
            let grid = build_grid(400, beta).unwrap();
            let direct: f64 = grid
                .nodes()
                .iter()
                .zip(grid.weights())
                .map(|(&q, &w)| {
                    let g = 1.0 / (q * q + beta * beta);
                    w * g * g
                })
                .sum();
            assert_relative_eq!(direct, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn loop_integral_decays_at_large_negative_energy() {
        let mut prev = loop_integral(1.0, 0.0, Complex64::new(-10.0, 0.0)).norm();
        for &x in &[-100.0, -1000.0, -1e6] {
            let cur = loop_integral(1.0, 0.0, Complex64::new(x, 0.0)).norm();
            assert!(cur < prev);
            prev = cur;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn continued_loop_integral_closed_form() {
        // Phi - pi i kappa g^2 collapses to pi / (4 beta (beta + i kappa)^2).
        let beta = 1.1;
        for &z in &[
            Complex64::new(0.7, 0.3),
            Complex64::new(-2.0, 0.0),
            Complex64::new(1.9, -0.8),
            Complex64::new(0.2, 1e-7),
        ] {
            let got = loop_integral_on(beta, 0.0, z, true);
            let k = physical_momentum(z, 0.0).unwrap();
            let d = beta + Complex64::i() * k;
            let want = PI / (4.0 * beta) / (d * d);
            assert!((got - want).norm() <= 1e-14 * want.norm(), "z={z}");
        }
    }

    #[test]
    fn continuation_matches_lower_rim() {
        // Crossing the cut from above lands on the value just below it.
        let beta = 1.0;
        let e = 1.7;
        let eps = 1e-9;
        let above = Complex64::new(e, eps);
        let below = Complex64::new(e, -eps);
        let cont = loop_integral_on(beta, 0.0, above, true);
        let rim = loop_integral(beta, 0.0, below);
        assert!((cont - rim).norm() < 1e-8);
    }

    #[test]
    fn tau_satisfies_integral_equation_by_quadrature() {
        // t = v - v g0 t, with the convolution done by blind quadrature.
        let model = two_channel();
        let grid = build_grid(300, 1.0).unwrap();
        let physical = SheetIndex::physical(2);
        let zs = [
            Complex64::new(0.8, 0.6),
            Complex64::new(2.1, -0.9),
            Complex64::new(-0.7, 0.0),
            Complex64::new(1.9, 1e-6),
        ];
        let ks = [
            (Complex64::new(0.4, 0.0), Complex64::new(1.2, 0.0)),
            (Complex64::new(0.9, 0.3), Complex64::new(0.2, -0.1)),
        ];
        for &z in &zs {
            for &(k, kp) in &ks {
                for a in 0..2 {
                    for b in 0..2 {
                        let t = tmatrix_on(&model, a, b, k, kp, z, &physical).unwrap();
                        let v = crate::quadrature::kernel_value(&model, a, b, k, kp).unwrap();
                        let mut conv = Complex64::new(0.0, 0.0);
                        for g in 0..2 {
                            let inner = |q: Complex64| {
                                crate::quadrature::kernel_value(&model, a, g, k, q).unwrap()
                                    * tmatrix_on(&model, g, b, q, kp, z, &physical).unwrap()
                            };
                            conv += cauchy_integral(&grid, model.threshold(g), z, &inner).unwrap();
                        }
                        let residual = (t - (v - conv)).norm();
                        assert!(
                            residual < 1e-9,
                            "z={z} k={k} kp={kp} ({a},{b}): residual {residual:.2e}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn physical_sheet_truncation_is_trivial() {
        let model = two_channel();
        let z = Complex64::new(0.9, 0.4);
        let d = det_truncated(&model, z, &sheet(&[0, 0])).unwrap();
        assert!((d - 1.0).norm() < 1e-15);
    }

    #[test]
    fn scalar_truncated_det_equals_scattering_function() {
        let model = one_channel(-2.0, 1.0, 0.0);
        for &z in &[
            Complex64::new(1.4, 0.3),
            Complex64::new(0.5, -0.6),
            Complex64::new(-0.4, 0.0),
        ] {
            let d = det_truncated(&model, z, &sheet(&[1])).unwrap();
            let s = smatrix(&model, z).unwrap()[(0, 0)];
            assert!((d - s).norm() <= 1e-14 * s.norm(), "z={z}");
        }
    }

    #[test]
    fn scalar_continued_s_is_the_inverse() {
        for model in [one_channel(-2.0, 1.0, 0.0), one_channel(1.3, 0.9, 0.5)] {
            for &z in &[
                Complex64::new(1.2, 0.4),
                Complex64::new(2.0, -0.3),
                Complex64::new(0.7, 0.05),
            ] {
                let s = smatrix(&model, z).unwrap()[(0, 0)];
                let sc = smatrix_continued(&model, z, &sheet(&[1])).unwrap()[(0, 0)];
                assert!((s * sc - 1.0).norm() < 1e-12, "z={z}: {}", (s * sc - 1.0).norm());
            }
        }
    }

    #[test]
    fn reciprocity_and_reflection_hold_exactly() {
        let model = two_channel();
        let z = Complex64::new(1.3, 0.7);
        let sh = sheet(&[1, 0]);
        let k = Complex64::new(0.8, 0.2);
        let kp = Complex64::new(1.5, -0.4);
        for a in 0..2 {
            for b in 0..2 {
                let t1 = tmatrix_on(&model, a, b, k, kp, z, &sh).unwrap();
                let t2 = tmatrix_on(&model, b, a, kp, k, z, &sh).unwrap();
                assert!((t1 - t2).norm() <= 1e-15 * t1.norm());
            }
        }
        // Schwarz reflection on the physical sheet
        let physical = sheet(&[0, 0]);
        let t = tmatrix_on(&model, 0, 1, k.conj(), kp.conj(), z.conj(), &physical).unwrap();
        let t_reflected = tmatrix_on(&model, 0, 1, k, kp, z, &physical).unwrap().conj();
        assert!((t - t_reflected).norm() <= 1e-13 * t.norm());
    }

    #[test]
    fn scalar_resolvent_pairing_reduces_to_known_form() {
        // One channel: <g, g(z) g> = Phi / (1 + lambda Phi).
        let model = one_channel(-2.0, 1.0, 0.0);
        for bits in [[0u8], [1u8]] {
            let sh = sheet(&bits);
            let z = Complex64::new(0.8, -0.5);
            let got = resolvent_pairing(&model, z, &sh).unwrap();
            let phi = loop_integral_on(1.0, 0.0, z, bits[0] == 1);
            let want = phi / (1.0 - 2.0 * phi);
            assert!((got - want).norm() <= 1e-14 * want.norm());
        }
    }

    #[test]
    fn two_body_root_positions_are_frozen() {
        // strength -2, range 1: one bound state and one deep crossed-sheet zero
        let roots = two_body_roots(-2.0, 1.0, 0.0);
        assert_relative_eq!(roots.critical_strength, -1.2732395447351628, epsilon = 1e-15);
        assert_relative_eq!(roots.bound.unwrap(), -0.06416805216389605, epsilon = 1e-13);
        assert_eq!(roots.virtual_states.len(), 1);
        assert_relative_eq!(roots.virtual_states[0], -5.0774246014258955, epsilon = 1e-12);
        assert!(roots.resonance_pair.is_none());

        // repulsive strength +2: conjugate pair
        let rep = two_body_roots(2.0, 1.0, 0.0);
        let (up, dn) = rep.resonance_pair.unwrap();
        assert_relative_eq!(up.re, 0.5707963267948966, epsilon = 1e-13);
        assert_relative_eq!(up.im, 2.5066282746310002, epsilon = 1e-13);
        assert!((dn - up.conj()).norm() < 1e-15);

        // weak attraction: no bound state, two crossed-sheet zeros
        let weak = two_body_roots(-0.5, 1.0, 0.0);
        assert!(weak.bound.is_none());
        assert_eq!(weak.virtual_states.len(), 2);
    }

    #[test]
    fn two_body_roots_satisfy_their_defining_equations() {
        for &(strength, beta, threshold) in
            &[(-2.0, 1.0, 0.0), (-0.5, 1.0, 0.0), (2.0, 1.0, 0.0), (-3.1, 1.4, 0.8)]
        {
            let roots = two_body_roots(strength, beta, threshold);
            if let Some(zb) = roots.bound {
                let d = 1.0 + strength * loop_integral(beta, threshold, Complex64::new(zb, 0.0));
                assert!(d.norm() < 1e-12, "bound residual {}", d.norm());
            }
            for &zv in &roots.virtual_states {
                let n = 1.0
                    + strength * loop_integral_on(beta, threshold, Complex64::new(zv, 0.0), true);
                assert!(n.norm() < 1e-12, "virtual residual {}", n.norm());
            }
            if let Some((up, dn)) = roots.resonance_pair {
                for z in [up, dn] {
                    let n = 1.0 + strength * loop_integral_on(beta, threshold, z, true);
                    assert!(n.norm() < 1e-12, "pair residual {}", n.norm());
                }
            }
        }
    }

    #[test]
    fn root_search_recovers_algebraic_positions() {
        let model = one_channel(-2.0, 1.0, 0.0);
        let found = resonance_roots(&model, &sheet(&[1]), (-6.0, -4.0), (-0.2, 0.2)).unwrap();
        assert_eq!(found.len(), 1);
        assert!((found[0] - Complex64::new(-5.0774246014258955, 0.0)).norm() < 1e-10);

        let rep = one_channel(2.0, 1.0, 0.0);
        let found = resonance_roots(&rep, &sheet(&[1]), (0.0, 1.2), (-3.5, -1.5)).unwrap();
        assert_eq!(found.len(), 1);
        assert!(
            (found[0] - Complex64::new(0.5707963267948966, -2.5066282746310002)).norm() < 1e-10
        );
    }

    #[test]
    fn uncoupled_channels_give_union_of_scalar_roots() {
        let model = parse_model(
            r#"{"channels": [{"threshold": 0.0}, {"threshold": 0.5}],
                "potential": {"kind": "yamaguchi",
                              "strength": [[-2.0, 0.0], [0.0, -2.0]],
                              "range": [1.0, 1.0]}}"#,
        )
        .unwrap();
        let both = resonance_roots(&model, &sheet(&[1, 1]), (-6.0, -4.0), (-0.2, 0.2)).unwrap();
        assert_eq!(both.len(), 2);
        assert!((both[0] - Complex64::new(-5.0774246014258955, 0.0)).norm() < 1e-9);
        assert!((both[1] - Complex64::new(-4.5774246014258955, 0.0)).norm() < 1e-9);
        // crossing only channel 1 sees only that channel's zero
        let first = resonance_roots(&model, &sheet(&[1, 0]), (-6.0, -4.0), (-0.2, 0.2)).unwrap();
        assert_eq!(first.len(), 1);
        assert!((first[0] - Complex64::new(-5.0774246014258955, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn free_coupling_has_no_roots() {
        let model = parse_model(
            r#"{"channels": [{"threshold": 0.0}],
                "potential": {"kind": "yamaguchi", "strength": [[0.0]], "range": [1.0]}}"#,
        )
        .unwrap();
        let found = resonance_roots(&model, &sheet(&[1]), (-6.0, -0.1), (-1.0, 1.0)).unwrap();
        assert!(found.is_empty());
    }

    #[test]
    fn closed_forms_reject_nonseparable_models() {
        let model = parse_model(
            r#"{"channels": [{"threshold": 0.0}],
                "potential": {"kind": "gaussian", "depth": [[-2.0]], "range": [[1.0]]}}"#,
        )
        .unwrap();
        assert!(matches!(
            tau_on(&model, Complex64::new(1.0, 0.5), &sheet(&[0])),
            Err(Error::Validation(_))
        ));
    }
}
