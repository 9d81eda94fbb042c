//! Zero search for the truncated scattering determinant: winding-number
//! counting over rectangles, Muller refinement of individual roots, and
//! amplitude extraction at each accepted zero.
//!
//! On a sheet with no crossed channel the truncation is the identity and
//! `det s_l = 1` identically, so scanning and counting there return the
//! trivial answer by construction. Searching the physical sheet instead
//! targets the Fredholm determinant of the plain assembly, whose zeros
//! below the lowest threshold are the bound-state poles of t.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lsolve::{fredholm_det, solve_halfshell, SolverOptions};
use crate::model::{ModelSpec, SheetIndex};
use crate::quadrature::MomentumGrid;
use crate::smatrix::{self, build_smatrix};

/// Rectangle in the energy plane to scan or count over.
#[derive(Debug, Clone)]
pub struct SearchRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    /// Scan resolution along Re z.
    pub grid_nx: usize,
    /// Scan resolution along Im z.
    pub grid_ny: usize,
    /// Initial boundary samples for the winding integral; bisection adds
    /// more wherever the phase turns fast.
    pub boundary_points: usize,
}

impl SearchRegion {
    /// Reject degenerate rectangles, undersized resolutions and any region
    /// whose closure contains a channel threshold (branch points must stay
    /// outside).
    // the negated comparisons also reject NaN bounds from parsed input
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if !(self.re_min < self.re_max) || !(self.im_min < self.im_max) {
            return Err(Error::InvalidRegion(format!(
                "degenerate rectangle [{}, {}] x [{}, {}]",
                self.re_min, self.re_max, self.im_min, self.im_max
            )));
        }
        if self.grid_nx < 2 || self.grid_ny < 2 {
            return Err(Error::InvalidRegion(format!(
                "scan grid {}x{} is too coarse, need at least 2x2",
                self.grid_nx, self.grid_ny
            )));
        }
        if self.boundary_points < 8 {
            return Err(Error::InvalidRegion(format!(
                "{} boundary points cannot trace a rectangle, need at least 8",
                self.boundary_points
            )));
        }
        for a in 0..model.n_channels() {
            let lam = model.threshold(a);
            if self.re_min <= lam
                && lam <= self.re_max
                && self.im_min <= 0.0
                && 0.0 <= self.im_max
            {
                return Err(Error::InvalidRegion(format!(
                    "threshold {lam} lies in the region closure"
                )));
            }
        }
        Ok(())
    }

    /// Counting needs the objective analytic inside the rectangle, which
    /// fails when the region straddles the scattering cut [lambda_1, inf).
    /// Regions entirely below the lowest threshold may cross the real axis
    /// freely; that is where the virtual states live.
    fn ensure_cut_free(&self, model: &ModelSpec) -> Result<()> {
        if self.im_min < 0.0 && self.im_max > 0.0 && self.re_min >= model.lowest_threshold() {
            return Err(Error::InvalidRegion(format!(
                "region [{}, {}] x [{}, {}] straddles the scattering cut",
                self.re_min, self.re_max, self.im_min, self.im_max
            )));
        }
        Ok(())
    }

    fn span(&self) -> f64 {
        (self.re_max - self.re_min).max(self.im_max - self.im_min)
    }

    fn contains(&self, z: Complex64) -> bool {
        self.re_min <= z.re && z.re <= self.re_max && self.im_min <= z.im && z.im <= self.im_max
    }
}

/// What a refined root is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResonanceKind {
    BoundState,
    VirtualState,
    Resonance,
}

impl std::fmt::Display for ResonanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResonanceKind::BoundState => "bound_state",
            ResonanceKind::VirtualState => "virtual_state",
            ResonanceKind::Resonance => "resonance",
        })
    }
}

/// A refined determinant zero with its amplitudes.
///
/// On crossed sheets `null_vector` solves `s_l(z*) A = 0`, is zero exactly
/// in uncrossed channels, has unit norm and its first nonzero component
/// rotated real positive; `extended` carries the amplitude into every
/// channel. On the physical sheet the zero is a pole of t instead, and
/// both vectors hold the normalized direction of the on-shell residue.
#[derive(Debug, Clone)]
pub struct ResonanceResult {
    pub sheet: SheetIndex,
    pub z_star: Complex64,
    /// |objective(z_star)| at acceptance.
    pub residual: f64,
    pub null_vector: DVector<Complex64>,
    pub extended: DVector<Complex64>,
    /// Channel normalization constants of the outgoing Gamow components.
    /// All channels are radial with three spatial dimensions, where the
    /// general constant collapses to sqrt(pi/2) exactly.
    pub gamow_coeffs: Vec<Complex64>,
    pub kind: ResonanceKind,
}

/// `det s_l(z)` as the search objective. Without crossed channels the
/// truncation is the identity, so no solve is needed.
fn det_objective(
    model: &ModelSpec,
    grid: &MomentumGrid,
    z: Complex64,
    sheet: &SheetIndex,
    opts: &SolverOptions,
) -> Result<Complex64> {
    if sheet.crossed_set().is_empty() {
        return Ok(Complex64::new(1.0, 0.0));
    }
    smatrix::det_truncated(model, grid, z, sheet, opts)
}

/// Objective whose zeros are the states searched for: `det s_l` on crossed
/// sheets, the plain Fredholm determinant on the physical sheet.
fn search_objective(
    model: &ModelSpec,
    grid: &MomentumGrid,
    z: Complex64,
    sheet: &SheetIndex,
    opts: &SolverOptions,
) -> Result<Complex64> {
    if sheet.crossed_set().is_empty() {
        return fredholm_det(model, grid, z);
    }
    smatrix::det_truncated(model, grid, z, sheet, opts)
}

/// Evaluate `det s_l` over the region's scan grid. Row-major: Im z varies
/// slowest, Re z fastest, both endpoints included.
pub fn scan(
    model: &ModelSpec,
    grid: &MomentumGrid,
    region: &SearchRegion,
    sheet: &SheetIndex,
    opts: &SolverOptions,
) -> Result<Vec<(Complex64, Complex64)>> {
    region.validate(model)?;
    let points = grid_points(region);
    let values: Vec<(Complex64, Complex64)> = points
        .par_iter()
        .map(|&z| {
            let det = det_objective(model, grid, z, sheet, opts)?;
            if det.re.is_nan() || det.im.is_nan() {
                return Err(Error::Validation(format!(
                    "determinant evaluated to NaN at z = {z}"
                )));
            }
            Ok((z, det))
        })
        .collect::<Result<_>>()?;
    Ok(values)
}

fn grid_points(region: &SearchRegion) -> Vec<Complex64> {
    let (nx, ny) = (region.grid_nx, region.grid_ny);
    let dx = (region.re_max - region.re_min) / (nx - 1) as f64;
    let dy = (region.im_max - region.im_min) / (ny - 1) as f64;
    let mut points = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            points.push(Complex64::new(
                region.re_min + ix as f64 * dx,
                region.im_min + iy as f64 * dy,
            ));
        }
    }
    points
}

/// Count zeros of `det s_l` inside the region by the argument principle:
/// the winding of the determinant along the rectangle boundary. Boundary
/// samples are bisected until adjacent phase steps are below pi/2, so the
/// winding cannot silently skip a turn.
///
/// The count is net: a physical-sheet bound state is a pole of `det s_l`
/// and subtracts one where it falls inside the region.
pub fn count_zeros(
    model: &ModelSpec,
    grid: &MomentumGrid,
    region: &SearchRegion,
    sheet: &SheetIndex,
    opts: &SolverOptions,
) -> Result<i64> {
    region.validate(model)?;
    region.ensure_cut_free(model)?;
    winding_count(
        &|z| det_objective(model, grid, z, sheet, opts),
        region,
    )
}

/// Magnitude below which a boundary sample counts as sitting on a zero.
const BOUNDARY_FLOOR: f64 = 1e-4;

fn winding_count(
    f: &(dyn Fn(Complex64) -> Result<Complex64> + Sync),
    region: &SearchRegion,
) -> Result<i64> {
    let corners = [
        Complex64::new(region.re_min, region.im_min),
        Complex64::new(region.re_max, region.im_min),
        Complex64::new(region.re_max, region.im_max),
        Complex64::new(region.re_min, region.im_max),
    ];
    // parameter t in [0, 4): edge floor(t), linear within
    let point = |t: f64| {
        let k = (t.floor() as usize) % 4;
        let s = t - t.floor();
        corners[k] + (corners[(k + 1) % 4] - corners[k]) * s
    };
    let checked = |t: f64| -> Result<Complex64> {
        let z = point(t);
        let value = f(z)?;
        if value.norm() < BOUNDARY_FLOOR {
            return Err(Error::ContourTooClose(format!(
                "|det| = {:.3e} at boundary point z = {z}",
                value.norm()
            )));
        }
        Ok(value)
    };

    let per_edge = (region.boundary_points / 4).max(2);
    let ts: Vec<f64> = (0..4)
        .flat_map(|k| (0..per_edge).map(move |i| k as f64 + i as f64 / per_edge as f64))
        .collect();
    let samples: Vec<Complex64> = ts
        .par_iter()
        .map(|&t| checked(t))
        .collect::<Result<_>>()?;

    // accumulate arg increments, bisecting any segment that turns too fast
    let mut total = 0.0f64;
    let mut stack: Vec<(f64, Complex64, f64, Complex64)> = Vec::new();
    for i in 0..ts.len() {
        let j = (i + 1) % ts.len();
        let t1 = if j == 0 { ts[j] + 4.0 } else { ts[j] };
        stack.push((ts[i], samples[i], t1, samples[j]));
    }
    // LIFO keeps the work deterministic
    while let Some((t0, f0, t1, f1)) = stack.pop() {
        let step = (f1 / f0).arg();
        if step.abs() < PI / 2.0 {
            total += step;
            continue;
        }
        if t1 - t0 < 1e-7 {
            return Err(Error::ContourTooClose(format!(
                "phase step never settles near z = {}",
                point(0.5 * (t0 + t1))
            )));
        }
        let tm = 0.5 * (t0 + t1);
        let fm = checked(tm)?;
        stack.push((tm, fm, t1, f1));
        stack.push((t0, f0, tm, fm));
    }
    let winding = total / (2.0 * PI);
    let nearest = winding.round();
    if (winding - nearest).abs() > 0.25 {
        return Err(Error::NonIntegerWinding { winding });
    }
    Ok(nearest as i64)
}

/// Muller iteration for a zero of an analytic function, derivative-free.
/// Succeeds when |f| drops below 1e-10 or the step shrinks below 1e-12.
fn muller(
    f: &dyn Fn(Complex64) -> Result<Complex64>,
    z0: Complex64,
) -> Result<Complex64> {
    const MAX_ITER: usize = 50;
    let h = 1e-4 * (1.0 + z0.norm());
    let mut p0 = z0 - Complex64::new(h, 0.0);
    let mut p1 = z0 + Complex64::new(h, 0.0);
    let mut p2 = z0;
    let mut f0 = f(p0)?;
    let mut f1 = f(p1)?;
    let mut f2 = f(p2)?;
    for iter in 0..MAX_ITER {
        let d01 = (f1 - f0) / (p1 - p0);
        let d12 = (f2 - f1) / (p2 - p1);
        let d012 = (d12 - d01) / (p2 - p0);
        let w = d12 + (p2 - p1) * d012;
        let disc = (w * w - 4.0 * f2 * d012).sqrt();
        let den_plus = w + disc;
        let den_minus = w - disc;
        let den = if den_plus.norm() >= den_minus.norm() {
            den_plus
        } else {
            den_minus
        };
        if den.norm() == 0.0 || !den.is_finite() {
            return Err(Error::NoConvergence { iterations: iter });
        }
        let dz = -2.0 * f2 / den;
        let p_next = p2 + dz;
        let f_next = f(p_next)?;
        if f_next.norm() < 1e-10 || dz.norm() < 1e-12 {
            return Ok(p_next);
        }
        p0 = p1;
        f0 = f1;
        p1 = p2;
        f1 = f2;
        p2 = p_next;
        f2 = f_next;
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITER,
    })
}

/// Polish a root guess with Muller iteration and extract the amplitudes at
/// the converged zero.
pub fn refine(
    model: &ModelSpec,
    grid: &MomentumGrid,
    z0: Complex64,
    sheet: &SheetIndex,
    opts: &SolverOptions,
) -> Result<ResonanceResult> {
    let m = model.n_channels();
    if sheet.len() != m {
        return Err(Error::Validation(format!(
            "sheet index has {} bits for {} channels",
            sheet.len(),
            m
        )));
    }
    let z_star = muller(&|z| search_objective(model, grid, z, sheet, opts), z0)?;
    let crossed = sheet.crossed_set();
    let gamow = vec![Complex64::new((PI / 2.0).sqrt(), 0.0); m];

    if crossed.is_empty() {
        // physical sheet: z_star is a pole of t; read the residue direction
        // off the on-shell block slightly off the axis, where the pole term
        // dominates everything else
        let residual = fredholm_det(model, grid, z_star)?.norm();
        let offset = Complex64::new(0.0, 1e-6 * (1.0 + z_star.norm()));
        let sol = solve_halfshell(model, grid, z_star + offset, &[], opts)?;
        let svd = sol.onshell().clone().svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let idx = arg_extreme(&svd.singular_values, true);
        let direction = gauge(v_t.row(idx).map(|x| x.conj()).transpose());
        return Ok(ResonanceResult {
            sheet: sheet.clone(),
            z_star,
            residual,
            null_vector: direction.clone(),
            extended: direction,
            gamow_coeffs: gamow,
            kind: kind_of(sheet, z_star, model),
        });
    }

    let sol = solve_halfshell(model, grid, z_star, &[], opts)?;
    let set = build_smatrix(&sol, sheet)?;
    let residual = set.det_truncated().norm();
    let sub = DMatrix::from_fn(crossed.len(), crossed.len(), |i, j| {
        set.truncated[(crossed[i], crossed[j])]
    });
    let svd = sub.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = &svd.singular_values;
    let idx_min = arg_extreme(sigma, false);
    let vector_at = |idx: usize| -> DVector<Complex64> {
        let sub_v = v_t.row(idx).map(|x| x.conj()).transpose();
        let mut full = DVector::zeros(m);
        for (i, &g) in crossed.iter().enumerate() {
            full[g] = sub_v[i];
        }
        gauge(full)
    };
    if crossed.len() >= 2 {
        let sigma_max = sigma.iter().cloned().fold(0.0f64, f64::max);
        let mut small: Vec<usize> = (0..sigma.len())
            .filter(|&i| sigma[i] < 1e-4 * (1.0 + sigma_max))
            .collect();
        if small.len() >= 2 {
            small.sort_by(|&a, &b| sigma[a].total_cmp(&sigma[b]));
            return Err(Error::DegenerateNull {
                z: z_star,
                vectors: small
                    .into_iter()
                    .take(2)
                    .map(|i| vector_at(i).iter().cloned().collect())
                    .collect(),
            });
        }
    }
    let null_vector = vector_at(idx_min);
    // amplitude carried into every channel: -(J t J') L A times the null
    // vector
    let mut extended = DVector::zeros(m);
    for a in 0..m {
        let mut acc = Complex64::new(0.0, 0.0);
        for &g in &crossed {
            acc += set.onshell_t[(a, g)] * set.a_factors[g] * null_vector[g];
        }
        extended[a] = -acc;
    }
    Ok(ResonanceResult {
        sheet: sheet.clone(),
        z_star,
        residual,
        null_vector,
        extended,
        gamow_coeffs: gamow,
        kind: kind_of(sheet, z_star, model),
    })
}

fn arg_extreme(values: &DVector<f64>, largest: bool) -> usize {
    let mut idx = 0;
    for i in 1..values.len() {
        if (largest && values[i] > values[idx]) || (!largest && values[i] < values[idx]) {
            idx = i;
        }
    }
    idx
}

/// Unit norm, first nonzero component rotated real positive; exact zeros
/// stay exact.
fn gauge(mut v: DVector<Complex64>) -> DVector<Complex64> {
    let norm = v.norm();
    if norm > 0.0 {
        v.unscale_mut(norm);
    }
    if let Some(lead) = v.iter().find(|x| x.norm() > 1e-12).copied() {
        let phase = lead / Complex64::new(lead.norm(), 0.0);
        let rotate = phase.conj();
        for x in v.iter_mut() {
            *x *= rotate;
        }
    }
    v
}

/// Sort a refined root into bound state, virtual state or resonance.
pub fn classify(result: &ResonanceResult, model: &ModelSpec) -> ResonanceKind {
    kind_of(&result.sheet, result.z_star, model)
}

fn kind_of(sheet: &SheetIndex, z: Complex64, model: &ModelSpec) -> ResonanceKind {
    let physical = sheet.crossed_set().is_empty();
    let below = z.re < model.lowest_threshold();
    let on_axis = z.im.abs() < 1e-8;
    if physical && below && on_axis {
        ResonanceKind::BoundState
    } else if !physical && below && on_axis {
        ResonanceKind::VirtualState
    } else {
        ResonanceKind::Resonance
    }
}

/// Everything `find_all` learned about a region.
#[derive(Debug, Clone)]
pub struct FindOutcome {
    /// Net winding count over the region boundary.
    pub expected: i64,
    /// Refined roots inside the region, sorted by (Re z*, Im z*).
    pub results: Vec<ResonanceResult>,
    /// Set when the refined roots disagree with the winding count.
    pub warning: Option<String>,
}

/// Count, then locate: winding count over the region, scan for seeds,
/// refine each, deduplicate and sort. A mismatch between the count and the
/// refined roots is reported as a warning, not an error.
pub fn find_all(
    model: &ModelSpec,
    grid: &MomentumGrid,
    region: &SearchRegion,
    sheet: &SheetIndex,
    opts: &SolverOptions,
) -> Result<FindOutcome> {
    region.validate(model)?;
    region.ensure_cut_free(model)?;
    let objective = |z| search_objective(model, grid, z, sheet, opts);
    let expected = winding_count(&objective, region)?;
    if expected <= 0 {
        let warning = (expected < 0).then(|| {
            format!("winding {expected} is negative: only poles enclosed")
        });
        return Ok(FindOutcome {
            expected,
            results: Vec::new(),
            warning,
        });
    }

    let points = grid_points(region);
    let values: Vec<Complex64> = points
        .par_iter()
        .map(|&z| objective(z))
        .collect::<Result<_>>()?;
    let mut seeds = local_minima(&values, region.grid_nx, region.grid_ny);
    seeds.sort_by(|&a, &b| values[a].norm().total_cmp(&values[b].norm()));
    seeds.truncate(2 * expected as usize + 4);

    let tol = 1e-7 * (1.0 + region.span());
    let mut results: Vec<ResonanceResult> = Vec::new();
    for seed in seeds {
        let refined = match refine(model, grid, points[seed], sheet, opts) {
            Ok(r) => r,
            Err(Error::NoConvergence { .. }) => continue,
            Err(other) => return Err(other),
        };
        if !region.contains(refined.z_star) {
            continue;
        }
        if results
            .iter()
            .all(|r| (r.z_star - refined.z_star).norm() > tol)
        {
            results.push(refined);
        }
    }
    results.sort_by(|a, b| {
        a.z_star
            .re
            .total_cmp(&b.z_star.re)
            .then(a.z_star.im.total_cmp(&b.z_star.im))
    });
    let found = results.len() as i64;
    let warning = (found != expected)
        .then(|| format!("winding count {expected} but {found} refined roots"));
    Ok(FindOutcome {
        expected,
        results,
        warning,
    })
}

/// Indices whose |value| is no larger than any of its 8 neighbors.
fn local_minima(values: &[Complex64], nx: usize, ny: usize) -> Vec<usize> {
    let mag = |ix: usize, iy: usize| values[iy * nx + ix].norm();
    let mut out = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let here = mag(ix, iy);
            let mut minimal = true;
            'neighbors: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                        continue;
                    }
                    if mag(jx as usize, jy as usize) < here {
                        minimal = false;
                        break 'neighbors;
                    }
                }
            }
            if minimal {
                out.push(iy * nx + ix);
            }
        }
    }
    out
}
