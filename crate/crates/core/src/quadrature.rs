//! Deterministic tensor-grid quadrature for one-site measures.
//!
//! This is the brute-force oracle behind every fitted constant: means,
//! variances, entropies and Dirichlet forms of measures `Z^-1 e^-H dx` on a
//! truncated box, with Gauss-Legendre (default) or trapezoid rules. Energies
//! are shifted by their minimum over the grid before exponentiation so that
//! strongly displaced boundary conditions cannot underflow the normalization
//! constant. Reductions run in a fixed node order, so results are
//! bit-reproducible for a given grid.

use crate::geometry::{SpinPoint, SpinSpace};
use crate::model::{site_energy, ModelParams, Site, SpinConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("grid needs at least 16 points per axis, got {0}")]
    TooFewPoints(usize),
    #[error("normalization constant vanished on the grid")]
    ZUnderflow,
    #[error("tail check failed: {0}")]
    TailCheckFailed(String),
    #[error("deterministic quadrature supports at most {max} integration dimensions, got {got}")]
    DimensionTooLarge { max: usize, got: usize },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadRule {
    GaussLegendre,
    Trapezoid,
}

/// Truncated tensor grid: one half-width per coordinate axis of the spin
/// space, a common node count and the rule tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub points_per_axis: usize,
    pub rule: QuadRule,
    pub half_widths: Vec<f64>,
}

/// Phase value beyond which the integrand is considered fully decayed when
/// choosing truncation widths (density below e^-40).
const TAIL_PHASE: f64 = 40.0;

impl GridSpec {
    /// Adaptive default: 64 Gauss-Legendre points per axis, half-widths per
    /// axis chosen so the phase at `L * e_k` reaches `TAIL_PHASE`. On the
    /// Heisenberg group the vertical axis is much tighter than the planar
    /// ones because the metric grows like a square root there.
    pub fn for_model(params: &ModelParams) -> Self {
        GridSpec {
            points_per_axis: 64,
            rule: QuadRule::GaussLegendre,
            half_widths: Self::adaptive_half_widths(params),
        }
    }

    pub fn adaptive_half_widths(params: &ModelParams) -> Vec<f64> {
        let dcut = TAIL_PHASE.powf(1.0 / params.p as f64);
        match params.spin_space {
            SpinSpace::Line => vec![dcut],
            SpinSpace::Heisenberg1 => {
                // d(0,0,t) = 2 sqrt(pi t), so t = (dcut/2)^2 / pi
                let vertical = dcut * dcut / (4.0 * std::f64::consts::PI);
                vec![dcut, dcut, vertical]
            }
        }
    }

    pub fn with_points(mut self, m: usize) -> Self {
        self.points_per_axis = m;
        self
    }

    pub fn validate(&self, space: SpinSpace) -> Result<(), QuadratureError> {
        if self.points_per_axis < 16 {
            return Err(QuadratureError::TooFewPoints(self.points_per_axis));
        }
        if self.half_widths.len() != space.dim() {
            return Err(QuadratureError::Geometry(
                crate::geometry::GeometryError::DimensionMismatch {
                    expected: space.dim(),
                    found: self.half_widths.len(),
                },
            ));
        }
        Ok(())
    }

    /// Nodes and weights on axis `k`, mapped to `[-L_k, L_k]`.
    pub fn axis_grid(&self, k: usize) -> (Vec<f64>, Vec<f64>) {
        let l = self.half_widths[k];
        match self.rule {
            QuadRule::GaussLegendre => {
                let (mut nodes, mut weights) = gauss_legendre(self.points_per_axis);
                for x in nodes.iter_mut() {
                    *x *= l;
                }
                for w in weights.iter_mut() {
                    *w *= l;
                }
                (nodes, weights)
            }
            QuadRule::Trapezoid => {
                let m = self.points_per_axis;
                let step = 2.0 * l / (m - 1) as f64;
                let nodes: Vec<f64> = (0..m).map(|i| -l + step * i as f64).collect();
                let mut weights = vec![step; m];
                weights[0] = 0.5 * step;
                weights[m - 1] = 0.5 * step;
                (nodes, weights)
            }
        }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let half = m.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for n in 2..=m {
                let p2 = ((2 * n - 1) as f64 * x * p1 - (n - 1) as f64 * p0) / n as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

/// A one-site measure: the interaction-free phase measure when `neighbors`
/// is `None`, otherwise the conditional measure at the given frozen
/// neighbour spins.
#[derive(Debug, Clone)]
pub struct SiteMeasureSpec {
    pub params: ModelParams,
    pub neighbors: Option<[SpinPoint; 4]>,
}

impl SiteMeasureSpec {
    pub fn free(params: &ModelParams) -> Self {
        SiteMeasureSpec {
            params: params.clone(),
            neighbors: None,
        }
    }

    pub fn conditional(params: &ModelParams, neighbors: [SpinPoint; 4]) -> Self {
        SiteMeasureSpec {
            params: params.clone(),
            neighbors: Some(neighbors),
        }
    }

    /// Conditional one-site energy as a function of the spin distance.
    pub fn energy_of_dist(&self, d: f64) -> f64 {
        match self.neighbor_dists() {
            Some(nd) => site_energy(d, &nd, &self.params),
            None => d.powi(self.params.p as i32),
        }
    }

    pub fn neighbor_dists(&self) -> Option<[f64; 4]> {
        let space = self.params.spin_space;
        self.neighbors.map(|ns| {
            [
                space.metric_d(&ns[0]).expect("finite neighbor"),
                space.metric_d(&ns[1]).expect("finite neighbor"),
                space.metric_d(&ns[2]).expect("finite neighbor"),
                space.metric_d(&ns[3]).expect("finite neighbor"),
            ]
        })
    }
}

/// Statistics of a scalar function under a one-site measure.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SiteFunctionals {
    pub mean: f64,
    pub variance: f64,
    /// Entropy of `f^2`: `E[f^2 log f^2] - (E f^2) log(E f^2)`.
    pub entropy_f2: f64,
    /// Dirichlet form `E |grad f|^2` with the horizontal gradient.
    pub dirichlet: f64,
    /// `entropy_f2 / dirichlet`; infinite when the Dirichlet form vanishes
    /// but the entropy does not (flagged, must not occur for valid inputs).
    pub lsi_ratio: f64,
    pub mean_f2: f64,
}

/// `x log x` extended by zero at the origin.
pub fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Tensor nodes of a spin-space grid with product quadrature weights and
/// cached spin distances.
pub struct NodeSet {
    pub points: Vec<SpinPoint>,
    pub dists: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn build_nodes(space: SpinSpace, grid: &GridSpec) -> Result<NodeSet, QuadratureError> {
    grid.validate(space)?;
    match space {
        SpinSpace::Line => {
            let (nodes, weights) = grid.axis_grid(0);
            let points: Vec<SpinPoint> = nodes.iter().map(|&x| SpinPoint::line(x)).collect();
            let dists = nodes.iter().map(|x| x.abs()).collect();
            Ok(NodeSet {
                points,
                dists,
                weights,
            })
        }
        SpinSpace::Heisenberg1 => {
            let (n1, w1) = grid.axis_grid(0);
            let (n2, w2) = grid.axis_grid(1);
            let (n3, w3) = grid.axis_grid(2);
            let m = grid.points_per_axis;
            let mut points = Vec::with_capacity(m * m * m);
            let mut dists = Vec::with_capacity(m * m * m);
            let mut weights = Vec::with_capacity(m * m * m);
            for (i, &x1) in n1.iter().enumerate() {
                for (j, &x2) in n2.iter().enumerate() {
                    let wij = w1[i] * w2[j];
                    for (k, &x3) in n3.iter().enumerate() {
                        let p = SpinPoint::heisenberg(x1, x2, x3);
                        points.push(p);
                        dists.push(space.metric_d(&p).expect("finite grid node"));
                        weights.push(wij * w3[k]);
                    }
                }
            }
            Ok(NodeSet {
                points,
                dists,
                weights,
            })
        }
    }
}

/// Mean, variance, entropy of `f^2`, Dirichlet form and their ratio under a
/// one-site measure, by deterministic quadrature.
pub fn site_functionals<F>(
    f: F,
    spec: &SiteMeasureSpec,
    grid: &GridSpec,
) -> Result<SiteFunctionals, QuadratureError>
where
    F: Fn(&SpinPoint) -> f64,
{
    let space = spec.params.spin_space;
    let nodes = build_nodes(space, grid)?;

    let energies: Vec<f64> = nodes.dists.iter().map(|&d| spec.energy_of_dist(d)).collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut s_f = 0.0;
    let mut s_f2 = 0.0;
    let mut s_f2_log = 0.0;
    let mut s_dir = 0.0;
    for (idx, p) in nodes.points.iter().enumerate() {
        let w = nodes.weights[idx] * (-(energies[idx] - e_min)).exp();
        if w == 0.0 {
            continue;
        }
        let v = f(p);
        z += w;
        s_f += w * v;
        s_f2 += w * v * v;
        s_f2_log += w * xlogx(v * v);
        let h = 1e-4 * (1.0 + nodes.dists[idx]);
        let g = space.horizontal_grad(&f, p, h)?;
        s_dir += w * g.norm_sq();
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(QuadratureError::ZUnderflow);
    }
    let mean = s_f / z;
    let mean_f2 = s_f2 / z;
    let variance = (mean_f2 - mean * mean).max(0.0);
    let entropy_f2 = s_f2_log / z - xlogx(mean_f2);
    let dirichlet = s_dir / z;
    let lsi_ratio = if dirichlet < 1e-14 {
        if entropy_f2 > 1e-12 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        entropy_f2 / dirichlet
    };
    Ok(SiteFunctionals {
        mean,
        variance,
        entropy_f2,
        dirichlet,
        lsi_ratio,
        mean_f2,
    })
}

/// `E^i f` at the configuration's frozen neighbours: integrates `f` over the
/// spin at `site` with all other coordinates held fixed.
pub fn conditional_expectation<F>(
    f: F,
    site: Site,
    cfg: &SpinConfig,
    params: &ModelParams,
    grid: &GridSpec,
) -> Result<f64, QuadratureError>
where
    F: Fn(&SpinConfig) -> f64,
{
    if !cfg.is_interior(site) {
        return Err(QuadratureError::Model(
            crate::model::ModelError::SiteOutsideWindow(site.0, site.1),
        ));
    }
    let space = params.spin_space;
    let nodes = build_nodes(space, grid)?;
    let nd = cfg.neighbor_dists(site);
    let mut scratch = cfg.clone();
    let energies: Vec<f64> = nodes
        .dists
        .iter()
        .map(|&d| site_energy(d, &nd, params))
        .collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut s = 0.0;
    for (idx, p) in nodes.points.iter().enumerate() {
        let w = nodes.weights[idx] * (-(energies[idx] - e_min)).exp();
        if w == 0.0 {
            continue;
        }
        scratch.set_spin(site, *p)?;
        z += w;
        s += w * f(&scratch);
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(QuadratureError::ZUnderflow);
    }
    Ok(s / z)
}

/// Relative drift of the normalization constant and of the mean of a
/// reference function when the grid is refined, plus the measure mass living
/// outside the truncation box (computed on a doubled box). The once-per-model
/// self-validation gate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridCheck {
    pub z_rel_change_refine: f64,
    pub mean_rel_change_refine: f64,
    pub tail_mass: f64,
}

pub fn grid_convergence_check<F>(
    f: F,
    spec: &SiteMeasureSpec,
    grid: &GridSpec,
) -> Result<GridCheck, QuadratureError>
where
    F: Fn(&SpinPoint) -> f64 + Copy,
{
    let base = site_functionals(f, spec, grid)?;
    let refined = site_functionals(f, spec, &grid.clone().with_points(grid.points_per_axis * 2))?;

    let zb = partition_scale(spec, grid, None)?;
    let zr = partition_scale(spec, &grid.clone().with_points(grid.points_per_axis * 2), None)?;

    let mut wide = grid.clone();
    for l in wide.half_widths.iter_mut() {
        *l *= 2.0;
    }
    wide.points_per_axis *= 2;
    let z_total = partition_scale(spec, &wide, None)?;
    let z_inside = partition_scale(spec, &wide, Some(&grid.half_widths))?;

    Ok(GridCheck {
        z_rel_change_refine: ((zr - zb) / zb).abs(),
        mean_rel_change_refine: ((refined.mean - base.mean) / (1.0 + base.mean.abs())).abs(),
        tail_mass: ((z_total - z_inside) / z_total).max(0.0),
    })
}

/// Unshifted partition integral of the measure on the grid, optionally
/// restricted to nodes inside a smaller box (tail comparisons only;
/// expectations use the shifted form).
fn partition_scale(
    spec: &SiteMeasureSpec,
    grid: &GridSpec,
    inside: Option<&[f64]>,
) -> Result<f64, QuadratureError> {
    let space = spec.params.spin_space;
    let nodes = build_nodes(space, grid)?;
    let mut z = 0.0;
    for (idx, p) in nodes.points.iter().enumerate() {
        if let Some(box_half_widths) = inside {
            let inside_box = p
                .coords()
                .iter()
                .zip(box_half_widths)
                .all(|(c, l)| c.abs() <= *l);
            if !inside_box {
                continue;
            }
        }
        z += nodes.weights[idx] * (-spec.energy_of_dist(nodes.dists[idx])).exp();
    }
    if !(z > 0.0) || !z.is_finite() {
        return Err(QuadratureError::ZUnderflow);
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatticeSpec;
    use approx::assert_relative_eq;

    /// E[x^2] under e^{-x^4} dx / Z, frozen from the Gamma-function identity
    /// Gamma(3/4) / Gamma(1/4).
    pub const QUARTIC_SECOND_MOMENT: f64 = 0.337989120033642364;

    fn quartic_params() -> ModelParams {
        ModelParams::new(SpinSpace::Line, 4, 3, 0.0, LatticeSpec::new(1, 1))
    }

    #[test]
    fn gauss_legendre_known_nodes() {
        let (nodes, weights) = gauss_legendre(5);
        let expect_nodes = [
            -0.906179845938664,
            -0.538469310105683,
            0.0,
            0.538469310105683,
            0.906179845938664,
        ];
        let expect_weights = [
            0.236926885056189,
            0.478628670499366,
            0.568888888888889,
            0.478628670499366,
            0.236926885056189,
        ];
        for i in 0..5 {
            assert_relative_eq!(nodes[i], expect_nodes[i], epsilon = 1e-12);
            assert_relative_eq!(weights[i], expect_weights[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (nodes, weights) = gauss_legendre(8);
        for k in 0..16usize {
            let quad: f64 = nodes
                .iter()
                .zip(&weights)
                .map(|(x, w)| w * x.powi(k as i32))
                .sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            assert!((quad - exact).abs() < 1e-13, "degree {k}: {quad} vs {exact}");
        }
    }

    #[test]
    fn constant_function_normalizes() {
        let params = quartic_params();
        let spec = SiteMeasureSpec::free(&params);
        let grid = GridSpec::for_model(&params);
        let out = site_functionals(|_| 1.0, &spec, &grid).unwrap();
        assert_relative_eq!(out.mean, 1.0, epsilon = 1e-12);
        assert!(out.variance.abs() < 1e-12);
        assert!(out.entropy_f2.abs() < 1e-12);
        assert_eq!(out.lsi_ratio, 0.0);
    }

    #[test]
    fn quartic_moment_matches_gamma_identity() {
        let params = quartic_params();
        let spec = SiteMeasureSpec::free(&params);
        let grid = GridSpec::for_model(&params);
        let out = site_functionals(|p| p.coords()[0], &spec, &grid).unwrap();
        assert!(out.mean.abs() < 1e-12, "odd moment should vanish");
        assert_relative_eq!(out.variance, QUARTIC_SECOND_MOMENT, epsilon = 1e-9);
        // dirichlet of f(x) = x is 1
        assert_relative_eq!(out.dirichlet, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn heisenberg_free_measure_bump_has_finite_ratio() {
        let params = ModelParams::new(SpinSpace::Heisenberg1, 4, 3, 0.0, LatticeSpec::new(1, 1));
        let spec = SiteMeasureSpec::free(&params);
        let grid = GridSpec::for_model(&params).with_points(32);
        let space = params.spin_space;
        let bump = move |p: &SpinPoint| {
            let d = space.metric_d(p).unwrap();
            let t = (d - 1.0) / 0.6;
            if t.abs() < 1.0 {
                (1.0 - 1.0 / (1.0 - t * t)).exp()
            } else {
                0.0
            }
        };
        let out = site_functionals(bump, &spec, &grid).unwrap();
        assert!(out.entropy_f2 > 0.0);
        assert!(out.dirichlet > 0.0);
        assert!(out.lsi_ratio.is_finite());
    }

    #[test]
    fn conditional_expectation_examples() {
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.0, LatticeSpec::new(1, 1));
        let cfg = SpinConfig::identity(&params);
        let grid = GridSpec::for_model(&params);

        // independent of the site: unchanged
        let c = conditional_expectation(|_| 2.5, (0, 0), &cfg, &params, &grid).unwrap();
        assert_relative_eq!(c, 2.5, epsilon = 1e-12);

        // second moment of the free quartic measure
        let m2 = conditional_expectation(
            |cfg| {
                let x = cfg.spin((0, 0)).coords()[0];
                x * x
            },
            (0, 0),
            &cfg,
            &params,
            &grid,
        )
        .unwrap();
        assert_relative_eq!(m2, QUARTIC_SECOND_MOMENT, epsilon = 1e-9);
    }

    #[test]
    fn conditional_expectation_idempotent() {
        // E^i(E^i f) = E^i f: the inner value is constant in x_i
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.1, LatticeSpec::new(2, 1));
        let mut cfg = SpinConfig::identity(&params);
        cfg.set_spin((1, 0), SpinPoint::line(0.7)).unwrap();
        let grid = GridSpec::for_model(&params);
        let f = |c: &SpinConfig| {
            let x = c.spin((0, 0)).coords()[0];
            x * x + 0.3 * x
        };
        let once = conditional_expectation(f, (0, 0), &cfg, &params, &grid).unwrap();
        let twice = conditional_expectation(
            |c| conditional_expectation(f, (0, 0), c, &params, &grid).unwrap(),
            (0, 0),
            &cfg,
            &params,
            &grid,
        )
        .unwrap();
        assert_relative_eq!(once, twice, epsilon = 1e-10);
    }

    #[test]
    fn displaced_boundary_does_not_underflow() {
        let params = ModelParams::new(
            SpinSpace::Line,
            4,
            3,
            0.2,
            LatticeSpec::new(1, 1)
                .with_boundary(crate::model::BoundarySpec::at_distance(SpinSpace::Line, 8.0)),
        );
        let w = SpinPoint::line(8.0);
        let spec = SiteMeasureSpec::conditional(&params, [w, w, w, w]);
        let grid = GridSpec::for_model(&params);
        let out = site_functionals(|p| p.coords()[0], &spec, &grid).unwrap();
        assert!(out.variance.is_finite() && out.variance > 0.0);
    }

    #[test]
    fn trapezoid_rule_agrees_with_gauss() {
        let params = quartic_params();
        let spec = SiteMeasureSpec::free(&params);
        let gl = GridSpec::for_model(&params);
        let mut tz = gl.clone();
        tz.rule = QuadRule::Trapezoid;
        tz.points_per_axis = 512;
        let a = site_functionals(|p| p.coords()[0] * p.coords()[0], &spec, &gl).unwrap();
        let b = site_functionals(|p| p.coords()[0] * p.coords()[0], &spec, &tz).unwrap();
        assert_relative_eq!(a.mean, b.mean, max_relative = 1e-6);
    }

    #[test]
    fn ratios_invariant_under_positive_scaling() {
        // entropy and dirichlet both scale with the square of the function
        let params = quartic_params();
        let spec = SiteMeasureSpec::free(&params);
        let grid = GridSpec::for_model(&params);
        let f = |p: &SpinPoint| {
            let x = p.coords()[0];
            let t = (x.abs() - 0.8) / 0.5;
            if t.abs() < 1.0 {
                (1.0 - 1.0 / (1.0 - t * t)).exp()
            } else {
                0.0
            }
        };
        let base = site_functionals(f, &spec, &grid).unwrap();
        let scaled = site_functionals(|p| 3.0 * f(p), &spec, &grid).unwrap();
        assert_relative_eq!(base.lsi_ratio, scaled.lsi_ratio, max_relative = 1e-10);
        assert_relative_eq!(
            base.variance / base.dirichlet,
            scaled.variance / scaled.dirichlet,
            max_relative = 1e-10
        );
    }

    #[test]
    fn grid_convergence_gate() {
        let params = quartic_params();
        let spec = SiteMeasureSpec::free(&params);
        let grid = GridSpec::for_model(&params).with_points(32);
        let check =
            grid_convergence_check(|p: &SpinPoint| p.coords()[0] * p.coords()[0], &spec, &grid)
                .unwrap();
        assert!(
            check.z_rel_change_refine < 1e-6,
            "refinement moved Z by {}",
            check.z_rel_change_refine
        );
        assert!(
            check.tail_mass < 1e-10,
            "tail mass not negligible: {}",
            check.tail_mass
        );
        assert!(check.mean_rel_change_refine < 1e-6);
    }
}
