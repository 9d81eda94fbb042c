//! Model description: channels, potentials, sheet signatures, and the
//! physical momentum map.
//!
//! A model is a finite set of binary channels with thresholds
//! `lambda_1 < ... < lambda_m` and a real symmetric coupling potential. All
//! channels are three-dimensional, so the energy surface carries `2^m`
//! sheets, one per subset of crossed channel cuts.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

/// One binary channel: a threshold and the dimension of its reduced motion.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub index: usize,
    pub threshold: f64,
    pub dimension: u32,
}

/// Interaction kernels in momentum space. Strength and depth matrices are
/// real symmetric; entries couple channel pairs.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKernel {
    /// Rank-one separable kernel per channel pair:
    /// `v_ab(k,k') = strength[a][b] * g_a(k) * g_b(k')` with
    /// `g_a(k) = 1/(k^2 + range[a]^2)`. Partial wave 0 only.
    SeparableYamaguchi {
        strength: DMatrix<f64>,
        range: Vec<f64>,
    },
    /// Momentum-space Gaussian `depth[a][b] * exp(-(k-k')^2 R_ab^2 / 4)`,
    /// reduced to the working partial wave in closed form.
    LocalGaussian {
        depth: DMatrix<f64>,
        range: DMatrix<f64>,
    },
    /// No interaction; the scattering matrix is the identity.
    Zero,
}

impl PotentialKernel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PotentialKernel::SeparableYamaguchi { .. } => "yamaguchi",
            PotentialKernel::LocalGaussian { .. } => "gaussian",
            PotentialKernel::Zero => "zero",
        }
    }
}

/// A validated model: ascending thresholds, symmetric couplings, and the
/// shared partial wave for the radial reduction.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub channels: Vec<ChannelSpec>,
    pub potential: PotentialKernel,
    pub partial_wave: u32,
}

impl ModelSpec {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn threshold(&self, channel: usize) -> f64 {
        self.channels[channel].threshold
    }

    pub fn thresholds(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.threshold).collect()
    }

    /// Lowest threshold; the cut of the full system starts here.
    pub fn lowest_threshold(&self) -> f64 {
        self.channels[0].threshold
    }
}

/// Momentum grid parameters from the config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridParams {
    pub n_points: usize,
    pub scale: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            n_points: 100,
            scale: 1.0,
        }
    }
}

/// Solver guards from the config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub cond_limit: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { cond_limit: 1e12 }
    }
}

/// Fully parsed configuration file.
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub model: ModelSpec,
    pub grid: GridParams,
    pub solver: SolverParams,
}

/// Sheet signature: one bit per channel, 1 where the channel cut has been
/// crossed. The all-zero signature is the physical sheet.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SheetIndex {
    bits: Vec<u8>,
}

impl SheetIndex {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::Validation("sheet signature must be non-empty".into()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Validation(
                "sheet signature entries must be 0 or 1".into(),
            ));
        }
        Ok(SheetIndex { bits })
    }

    pub fn physical(m: usize) -> Self {
        SheetIndex { bits: vec![0; m] }
    }

    /// Parse a comma-separated bit list such as `1,0,1`.
    pub fn parse(text: &str, m: usize) -> Result<Self> {
        let bits: Vec<u8> = text
            .split(',')
            .map(|s| match s.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::Validation(format!(
                    "sheet entry `{other}` is not 0 or 1"
                ))),
            })
            .collect::<Result<_>>()?;
        if bits.len() != m {
            return Err(Error::Validation(format!(
                "sheet signature has {} entries, model has {m} channels",
                bits.len()
            )));
        }
        SheetIndex::new(bits)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn crossed(&self, channel: usize) -> bool {
        self.bits[channel] == 1
    }

    pub fn is_physical(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Channels whose cut has been crossed, in ascending order.
    pub fn crossed_set(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&a| self.crossed(a)).collect()
    }

    /// Diagonal of the crossing projector (the bit pattern as floats).
    pub fn projector_diag(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }

    /// Momentum sign picked up by each channel on this sheet: -1 where the
    /// square root flips branch, +1 elsewhere.
    pub fn momentum_signs(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b == 1 { -1.0 } else { 1.0 }).collect()
    }

    /// Parity factor `(-1)^l` picked up by crossed channels when on-shell
    /// momenta change sign in partial wave `l`; +1 for uncrossed channels.
    pub fn parity_signs(&self, partial_wave: u32) -> Vec<f64> {
        let flip = if partial_wave % 2 == 1 { -1.0 } else { 1.0 };
        self.bits
            .iter()
            .map(|&b| if b == 1 { flip } else { 1.0 })
            .collect()
    }
}

impl fmt::Display for SheetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.bits.iter().map(|b| b.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// All `2^m` sheet signatures in lexicographic order; the first entry is the
/// physical sheet.
pub fn enumerate_sheets(m: usize) -> Vec<SheetIndex> {
    assert!((1..=20).contains(&m), "channel count out of range");
    let mut out = Vec::with_capacity(1 << m);
    for code in 0..(1u32 << m) {
        let bits = (0..m)
            .map(|a| ((code >> (m - 1 - a)) & 1) as u8)
            .collect();
        out.push(SheetIndex { bits });
    }
    out
}

/// Channel momentum `q = sqrt(z - threshold)` with the branch chosen so that
/// the whole cut plane maps into the closed upper half momentum plane. On
/// the upper rim of the cut this is the positive real root; below threshold
/// it is positive imaginary.
pub fn physical_momentum(z: Complex64, threshold: f64) -> Result<Complex64> {
    let w = z - threshold;
    if w.re == 0.0 && w.im == 0.0 {
        return Err(Error::BranchPoint { z, threshold });
    }
    // arg in [0, 2pi): the cut sits along arg = 0.
    let mut arg = w.arg();
    if arg < 0.0 {
        arg += 2.0 * PI;
    }
    Ok(Complex64::from_polar(w.norm().sqrt(), 0.5 * arg))
}

// ---------------------------------------------------------------------------
// Config parsing

fn default_dimension() -> u32 {
    3
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelConfig {
    threshold: f64,
    #[serde(default = "default_dimension")]
    dimension: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialConfig {
    kind: String,
    #[serde(default)]
    strength: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    depth: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    range: Option<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridConfig {
    #[serde(default)]
    n_points: Option<i64>,
    #[serde(default)]
    scale: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverConfig {
    #[serde(default)]
    cond_limit: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    channels: Vec<ChannelConfig>,
    potential: PotentialConfig,
    #[serde(default)]
    partial_wave: Option<i64>,
    #[serde(default)]
    grid: Option<GridConfig>,
    #[serde(default)]
    solver: Option<SolverConfig>,
}

fn square_symmetric(name: &str, rows: &[Vec<f64>], m: usize) -> Result<DMatrix<f64>> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Validation(format!(
            "{name} matrix must be {m}x{m} to match the channel count"
        )));
    }
    let mat = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
    if mat.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("{name} matrix has non-finite entries")));
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if mat[(i, j)] != mat[(j, i)] {
                return Err(Error::Validation(format!(
                    "{name} matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(mat)
}

fn parse_potential(cfg: &PotentialConfig, m: usize) -> Result<PotentialKernel> {
    let take_range = |shape: &str| -> Result<serde_json::Value> {
        cfg.range
            .clone()
            .ok_or_else(|| Error::Validation(format!("potential requires a `range` {shape}")))
    };
    match cfg.kind.as_str() {
        "yamaguchi" => {
            if cfg.depth.is_some() {
                return Err(Error::Validation(
                    "yamaguchi potential takes `strength`, not `depth`".into(),
                ));
            }
            let strength_rows = cfg.strength.as_ref().ok_or_else(|| {
                Error::Validation("yamaguchi potential requires a `strength` matrix".into())
            })?;
            let strength = square_symmetric("strength", strength_rows, m)?;
            let range: Vec<f64> = serde_json::from_value(take_range("array (one entry per channel)")?)
                .map_err(|e| Error::Validation(format!("yamaguchi `range` must be an array of numbers: {e}")))?;
            if range.len() != m {
                return Err(Error::Validation(format!(
                    "yamaguchi `range` has {} entries, model has {m} channels",
                    range.len()
                )));
            }
            if range.iter().any(|&b| !(b.is_finite() && b > 0.0)) {
                return Err(Error::Validation("yamaguchi `range` entries must be positive".into()));
            }
            Ok(PotentialKernel::SeparableYamaguchi { strength, range })
        }
        "gaussian" => {
            if cfg.strength.is_some() {
                return Err(Error::Validation(
                    "gaussian potential takes `depth`, not `strength`".into(),
                ));
            }
            let depth_rows = cfg.depth.as_ref().ok_or_else(|| {
                Error::Validation("gaussian potential requires a `depth` matrix".into())
            })?;
            let depth = square_symmetric("depth", depth_rows, m)?;
            let range_rows: Vec<Vec<f64>> = serde_json::from_value(take_range("matrix")?)
                .map_err(|e| Error::Validation(format!("gaussian `range` must be a matrix: {e}")))?;
            let range = square_symmetric("range", &range_rows, m)?;
            // negated form so NaN entries fail too
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if range.iter().any(|&r| !(r > 0.0)) {
                return Err(Error::Validation("gaussian `range` entries must be positive".into()));
            }
            Ok(PotentialKernel::LocalGaussian { depth, range })
        }
        "zero" => {
            if cfg.strength.is_some() || cfg.depth.is_some() || cfg.range.is_some() {
                return Err(Error::Validation(
                    "zero potential takes no parameters".into(),
                ));
            }
            Ok(PotentialKernel::Zero)
        }
        other => Err(Error::Validation(format!(
            "unknown potential kind `{other}` (expected yamaguchi, gaussian, or zero)"
        ))),
    }
}

/// Parse and validate a full configuration file (model, grid, solver).
pub fn parse_config(text: &str) -> Result<ParsedConfig> {
    let cfg: ConfigFile =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;

    let m = cfg.channels.len();
    if m == 0 {
        return Err(Error::Validation("model needs at least one channel".into()));
    }
    let mut channels = Vec::with_capacity(m);
    for (index, ch) in cfg.channels.iter().enumerate() {
        if !ch.threshold.is_finite() {
            return Err(Error::Validation(format!(
                "channel {index} threshold is not finite"
            )));
        }
        if ch.dimension != 3 {
            return Err(Error::Validation(format!(
                "channel {index} has dimension {}, only 3 is supported",
                ch.dimension
            )));
        }
        channels.push(ChannelSpec {
            index,
            threshold: ch.threshold,
            dimension: ch.dimension,
        });
    }
    for a in 1..m {
        // negated form so a NaN threshold fails too
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(channels[a].threshold > channels[a - 1].threshold) {
            return Err(Error::Validation(format!(
                "thresholds must be strictly ascending, violated at channel {a}"
            )));
        }
    }

    let partial_wave_raw = cfg.partial_wave.unwrap_or(0);
    if partial_wave_raw < 0 {
        return Err(Error::Validation(format!(
            "partial_wave must be non-negative, got {partial_wave_raw}"
        )));
    }
    let partial_wave = partial_wave_raw as u32;

    let potential = parse_potential(&cfg.potential, m)?;

    let mut grid = GridParams::default();
    if let Some(g) = &cfg.grid {
        if let Some(n) = g.n_points {
            if n < 8 {
                return Err(Error::Validation(format!(
                    "grid.n_points must be at least 8, got {n}"
                )));
            }
            if n > 100_000 {
                return Err(Error::Validation(format!("grid.n_points {n} is unreasonably large")));
            }
            grid.n_points = n as usize;
        }
        if let Some(c) = g.scale {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Validation("grid.scale must be positive".into()));
            }
            grid.scale = c;
        }
    }

    let mut solver = SolverParams::default();
    if let Some(s) = &cfg.solver {
        if let Some(cl) = s.cond_limit {
            if !(cl.is_finite() && cl > 0.0) {
                return Err(Error::Validation("solver.cond_limit must be positive".into()));
            }
            solver.cond_limit = cl;
        }
    }

    Ok(ParsedConfig {
        model: ModelSpec {
            channels,
            potential,
            partial_wave,
        },
        grid,
        solver,
    })
}

/// Parse a configuration file and return the model part.
pub fn parse_model(text: &str) -> Result<ModelSpec> {
    parse_config(text).map(|c| c.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TWO_CHANNEL: &str = r#"{
        "channels": [{"threshold": 0.0}, {"threshold": 2.0}],
        "potential": {"kind": "yamaguchi", "strength": [[-2.0, 0.5], [0.5, -1.0]], "range": [1.0, 1.2]},
        "partial_wave": 0,
        "grid": {"n_points": 64, "scale": 1.0}
    }"#;

    #[test]
    fn parses_two_channel_model() {
        let cfg = parse_config(TWO_CHANNEL).unwrap();
        assert_eq!(cfg.model.n_channels(), 2);
        assert_eq!(cfg.model.channels[1].threshold, 2.0);
        assert_eq!(cfg.grid.n_points, 64);
        assert_eq!(cfg.solver.cond_limit, 1e12);
        assert_eq!(cfg.model.potential.kind_name(), "yamaguchi");
    }

    #[test]
    fn rejects_descending_thresholds() {
        let text = TWO_CHANNEL.replace("2.0}", "-1.0}");
        match parse_config(&text) {
            Err(Error::Validation(msg)) => assert!(msg.contains("ascending")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_equal_thresholds() {
        let text = TWO_CHANNEL.replacen("\"threshold\": 2.0", "\"threshold\": 0.0", 1);
        assert!(matches!(parse_config(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_asymmetric_strength() {
        let text = TWO_CHANNEL.replace("[0.5, -1.0]", "[0.6, -1.0]");
        match parse_config(&text) {
            Err(Error::Validation(msg)) => assert!(msg.contains("symmetric")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_partial_wave() {
        let text = TWO_CHANNEL.replace("\"partial_wave\": 0", "\"partial_wave\": -1");
        assert!(matches!(parse_config(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = TWO_CHANNEL.replace("\"partial_wave\": 0", "\"partial_wave\": 0, \"extra\": 1");
        assert!(matches!(parse_config(&text), Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_wrong_dimension() {
        let text = TWO_CHANNEL.replace("{\"threshold\": 0.0}", "{\"threshold\": 0.0, \"dimension\": 2}");
        match parse_config(&text) {
            Err(Error::Validation(msg)) => assert!(msg.contains("dimension")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_nonpositive_range() {
        let text = TWO_CHANNEL.replace("[1.0, 1.2]", "[1.0, 0.0]");
        assert!(matches!(parse_config(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn zero_potential_takes_no_parameters() {
        let text = r#"{"channels": [{"threshold": 0.0}], "potential": {"kind": "zero"}}"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.model.potential, PotentialKernel::Zero);
        assert_eq!(cfg.model.partial_wave, 0);
        assert_eq!(cfg.grid, GridParams::default());
    }

    #[test]
    fn sheet_enumeration_is_lexicographic() {
        let sheets = enumerate_sheets(2);
        let bits: Vec<&[u8]> = sheets.iter().map(|s| s.bits()).collect();
        assert_eq!(bits, vec![&[0, 0][..], &[0, 1], &[1, 0], &[1, 1]]);
        assert!(sheets[0].is_physical());
        assert_eq!(enumerate_sheets(3).len(), 8);
        let unique: std::collections::HashSet<_> = enumerate_sheets(3).into_iter().collect();
        assert_eq!(unique.len(), 8);
    }

    #[test]
    fn sheet_parse_round_trips() {
        let s = SheetIndex::parse("1,0,1", 3).unwrap();
        assert_eq!(s.bits(), &[1, 0, 1]);
        assert_eq!(s.to_string(), "1,0,1");
        assert_eq!(s.crossed_set(), vec![0, 2]);
        assert!(SheetIndex::parse("1,2", 2).is_err());
        assert!(SheetIndex::parse("1", 2).is_err());
    }

    #[test]
    fn momentum_on_upper_rim_is_positive_real() {
        let q = physical_momentum(Complex64::new(5.0, 0.0), 1.0).unwrap();
        assert_relative_eq!(q.re, 2.0, epsilon = 1e-14);
        assert_eq!(q.im, 0.0);
    }

    #[test]
    fn momentum_below_threshold_is_positive_imaginary() {
        let q = physical_momentum(Complex64::new(0.0, 0.0), 1.0).unwrap();
        assert!(q.re.abs() < 1e-15);
        assert_relative_eq!(q.im, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn momentum_just_below_cut_has_negative_real_part() {
        // z = lambda + 4 - 0.1i sits under the cut; the root is near -2 with
        // a small positive imaginary part.
        let q = physical_momentum(Complex64::new(4.0, -0.1), 0.0).unwrap();
        assert!(q.re < -1.9);
        assert!(q.im > 0.0 && q.im < 0.05);
        // square back
        let z = q * q;
        assert_relative_eq!(z.re, 4.0, epsilon = 1e-12);
        assert_relative_eq!(z.im, -0.1, epsilon = 1e-12);
    }

    #[test]
    fn momentum_errors_on_branch_point() {
        assert!(matches!(
            physical_momentum(Complex64::new(1.0, 0.0), 1.0),
            Err(Error::BranchPoint { .. })
        ));
    }

    proptest! {
        #[test]
        fn momentum_maps_into_upper_half_plane(re in -50.0f64..50.0, im in -50.0f64..50.0) {
            prop_assume!(re != 0.0 || im != 0.0);
            let q = physical_momentum(Complex64::new(re, im), 0.0).unwrap();
            prop_assert!(q.im >= 0.0);
            if im != 0.0 {
                prop_assert!(q.im > 0.0);
            }
            let z = q * q;
            prop_assert!((z - Complex64::new(re, im)).norm() <= 1e-10 * (1.0 + z.norm()));
        }

        #[test]
        fn projector_identities(bits in proptest::collection::vec(0u8..2, 1..6)) {
            let sheet = SheetIndex::new(bits).unwrap();
            let l_diag = sheet.projector_diag();
            // idempotent and annihilated by its complement
            for (a, &la) in l_diag.iter().enumerate() {
                prop_assert_eq!(la * la, la);
                prop_assert_eq!(la * (1.0 - la), 0.0);
                let e = sheet.momentum_signs()[a];
                prop_assert_eq!(e, if sheet.crossed(a) { -1.0 } else { 1.0 });
                prop_assert_eq!(sheet.parity_signs(2)[a], 1.0);
                prop_assert_eq!(sheet.parity_signs(1)[a], if sheet.crossed(a) { -1.0 } else { 1.0 });
            }
        }
    }
}
