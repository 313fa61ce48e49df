//! Group arithmetic, metric structure and horizontal differential calculus
//! for the two supported spin spaces.
//!
//! `Line` is the real line with addition; its metric is `|x|` and the single
//! generator is `d/dx`. `Heisenberg1` is R^3 with the group law
//!
//! ```text
//! x . y = (x1 + y1, x2 + y2, x3 + y3 + (x1*y2 - x2*y1)/2)
//! ```
//!
//! (half-commutator convention), horizontal generators
//! `X1 = d/dx1 - (x2/2) d/dx3`, `X2 = d/dx2 + (x1/2) d/dx3`, and the
//! Carnot-Caratheodory metric induced by horizontal paths. Distances to the
//! identity are computed from the classical one-parameter family of
//! circular-arc geodesics: the planar projection of a minimizing geodesic is a
//! circular arc whose chord is the planar part of the target and whose swept
//! sector area equals the vertical coordinate. Solving the resulting
//! transcendental equation for the arc angle gives the length.

use thiserror::Error;

/// Maximum coordinate dimension over all supported spin spaces.
pub const MAX_DIM: usize = 3;

/// Maximum number of horizontal generators over all supported spin spaces.
pub const MAX_GENERATORS: usize = 2;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point has dimension {found}, spin space expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("coordinate {index} is not finite: {value}")]
    NonFiniteCoordinate { index: usize, value: f64 },
    #[error("finite-difference step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("distance solver failed for point {point:?}: {detail}")]
    SolverFailed { point: [f64; 3], detail: String },
}

/// Which spin space is active. The metric, group law and generator count of
/// every operation in this module are dispatched on this tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpinSpace {
    /// The abelian line R^1.
    Line,
    /// The first Heisenberg group, identified with R^3.
    Heisenberg1,
}

impl SpinSpace {
    /// Coordinate dimension of a point.
    pub fn dim(self) -> usize {
        match self {
            SpinSpace::Line => 1,
            SpinSpace::Heisenberg1 => 3,
        }
    }

    /// Number of horizontal (Hormander) generators.
    pub fn generator_count(self) -> usize {
        match self {
            SpinSpace::Line => 1,
            SpinSpace::Heisenberg1 => 2,
        }
    }

    /// Identity element.
    pub fn identity(self) -> SpinPoint {
        SpinPoint {
            coords: [0.0; MAX_DIM],
            dim: self.dim() as u8,
        }
    }

    /// Group product `x . y`.
    pub fn mul(self, x: &SpinPoint, y: &SpinPoint) -> Result<SpinPoint, GeometryError> {
        self.check(x)?;
        self.check(y)?;
        let mut out = [0.0; MAX_DIM];
        match self {
            SpinSpace::Line => out[0] = x.coords[0] + y.coords[0],
            SpinSpace::Heisenberg1 => {
                out[0] = x.coords[0] + y.coords[0];
                out[1] = x.coords[1] + y.coords[1];
                out[2] = x.coords[2]
                    + y.coords[2]
                    + 0.5 * (x.coords[0] * y.coords[1] - x.coords[1] * y.coords[0]);
            }
        }
        Ok(SpinPoint {
            coords: out,
            dim: self.dim() as u8,
        })
    }

    /// Group inverse. For both supported spaces this is coordinatewise
    /// negation; in the Heisenberg case the half-commutator term cancels.
    pub fn inv(self, x: &SpinPoint) -> Result<SpinPoint, GeometryError> {
        self.check(x)?;
        let mut out = [0.0; MAX_DIM];
        for k in 0..self.dim() {
            out[k] = -x.coords[k];
        }
        Ok(SpinPoint {
            coords: out,
            dim: self.dim() as u8,
        })
    }

    /// Distance of `x` to the identity element.
    pub fn metric_d(self, x: &SpinPoint) -> Result<f64, GeometryError> {
        self.check(x)?;
        match self {
            SpinSpace::Line => Ok(x.coords[0].abs()),
            SpinSpace::Heisenberg1 => {
                cc_distance(x.coords[0], x.coords[1], x.coords[2]).map_err(|detail| {
                    GeometryError::SolverFailed {
                        point: x.coords,
                        detail,
                    }
                })
            }
        }
    }

    /// The point `t * e_k`: coordinate `k` set to `t`, all others zero.
    /// Multiplying on the right by this point realizes the exact flow of the
    /// k-th left-invariant generator for time `t`.
    pub fn generator_point(self, k: usize, t: f64) -> SpinPoint {
        debug_assert!(k < self.generator_count());
        let mut out = [0.0; MAX_DIM];
        out[k] = t;
        SpinPoint {
            coords: out,
            dim: self.dim() as u8,
        }
    }

    /// Horizontal gradient of `f` at `x` by central differences along the
    /// exact flows of the generators, with step `h`.
    pub fn horizontal_grad<F>(
        self,
        f: F,
        x: &SpinPoint,
        h: f64,
    ) -> Result<HorizontalVector, GeometryError>
    where
        F: Fn(&SpinPoint) -> f64,
    {
        if h <= 0.0 {
            return Err(GeometryError::NonPositiveStep(h));
        }
        self.check(x)?;
        let n = self.generator_count();
        let mut comps = [0.0; MAX_GENERATORS];
        for k in 0..n {
            let fwd = self.mul(x, &self.generator_point(k, h))?;
            let bwd = self.mul(x, &self.generator_point(k, -h))?;
            comps[k] = (f(&fwd) - f(&bwd)) / (2.0 * h);
        }
        Ok(HorizontalVector {
            comps,
            n: n as u8,
        })
    }

    /// Sub-Laplacian of `f` at `x` by second-order central differences along
    /// the exact generator flows.
    pub fn sub_laplacian<F>(self, f: F, x: &SpinPoint, h: f64) -> Result<f64, GeometryError>
    where
        F: Fn(&SpinPoint) -> f64,
    {
        if h <= 0.0 {
            return Err(GeometryError::NonPositiveStep(h));
        }
        self.check(x)?;
        let f0 = f(x);
        let mut acc = 0.0;
        for k in 0..self.generator_count() {
            let fwd = self.mul(x, &self.generator_point(k, h))?;
            let bwd = self.mul(x, &self.generator_point(k, -h))?;
            acc += (f(&fwd) - 2.0 * f0 + f(&bwd)) / (h * h);
        }
        Ok(acc)
    }

    /// Default finite-difference step at `x`: `1e-4 * (1 + d(x))`.
    pub fn default_fd_step(self, x: &SpinPoint) -> Result<f64, GeometryError> {
        Ok(1e-4 * (1.0 + self.metric_d(x)?))
    }

    /// Point at parameter `t` in `[0, 1]` on a minimizing geodesic from the
    /// identity to `x`. Satisfies `d(radial_geodesic(x, t)) = t * d(x)`.
    pub fn radial_geodesic(self, x: &SpinPoint, t: f64) -> Result<SpinPoint, GeometryError> {
        self.check(x)?;
        match self {
            SpinSpace::Line => Ok(SpinPoint {
                coords: [t * x.coords[0], 0.0, 0.0],
                dim: 1,
            }),
            SpinSpace::Heisenberg1 => {
                let p = h1_radial_geodesic(x.coords, t).map_err(|detail| {
                    GeometryError::SolverFailed {
                        point: x.coords,
                        detail,
                    }
                })?;
                Ok(SpinPoint { coords: p, dim: 3 })
            }
        }
    }

    /// Anisotropic dilation: identity scaling on the line, the homogeneous
    /// dilation `(l x1, l x2, l^2 x3)` on the Heisenberg group.
    pub fn dilate(self, x: &SpinPoint, lambda: f64) -> Result<SpinPoint, GeometryError> {
        self.check(x)?;
        let mut out = [0.0; MAX_DIM];
        match self {
            SpinSpace::Line => out[0] = lambda * x.coords[0],
            SpinSpace::Heisenberg1 => {
                out[0] = lambda * x.coords[0];
                out[1] = lambda * x.coords[1];
                out[2] = lambda * lambda * x.coords[2];
            }
        }
        Ok(SpinPoint {
            coords: out,
            dim: self.dim() as u8,
        })
    }

    fn check(self, x: &SpinPoint) -> Result<(), GeometryError> {
        if x.dim as usize != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim(),
                found: x.dim as usize,
            });
        }
        Ok(())
    }
}

/// A point of the active spin space. Unused trailing coordinates are zero.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpinPoint {
    coords: [f64; MAX_DIM],
    dim: u8,
}

impl SpinPoint {
    /// Point on the line.
    pub fn line(x: f64) -> Self {
        SpinPoint {
            coords: [x, 0.0, 0.0],
            dim: 1,
        }
    }

    /// Point of the Heisenberg group.
    pub fn heisenberg(x1: f64, x2: f64, x3: f64) -> Self {
        SpinPoint {
            coords: [x1, x2, x3],
            dim: 3,
        }
    }

    /// Build a point for `space` from a coordinate slice, validating the
    /// dimension and finiteness of every coordinate.
    pub fn from_coords(space: SpinSpace, coords: &[f64]) -> Result<Self, GeometryError> {
        if coords.len() != space.dim() {
            return Err(GeometryError::DimensionMismatch {
                expected: space.dim(),
                found: coords.len(),
            });
        }
        let mut out = [0.0; MAX_DIM];
        for (index, &value) in coords.iter().enumerate() {
            if !value.is_finite() {
                return Err(GeometryError::NonFiniteCoordinate { index, value });
            }
            out[index] = value;
        }
        Ok(SpinPoint {
            coords: out,
            dim: coords.len() as u8,
        })
    }

    /// Active coordinates.
    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim as usize]
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    /// Euclidean norm of the coordinate vector (diagnostic use only; the
    /// metric of the space is `SpinSpace::metric_d`).
    pub fn coord_norm(&self) -> f64 {
        self.coords()
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }
}

/// Coefficients of a vector along the horizontal generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizontalVector {
    comps: [f64; MAX_GENERATORS],
    n: u8,
}

impl HorizontalVector {
    pub fn new(space: SpinSpace, comps: &[f64]) -> Result<Self, GeometryError> {
        if comps.len() != space.generator_count() {
            return Err(GeometryError::DimensionMismatch {
                expected: space.generator_count(),
                found: comps.len(),
            });
        }
        let mut out = [0.0; MAX_GENERATORS];
        out[..comps.len()].copy_from_slice(comps);
        Ok(HorizontalVector {
            comps: out,
            n: comps.len() as u8,
        })
    }

    pub fn components(&self) -> &[f64] {
        &self.comps[..self.n as usize]
    }

    pub fn norm_sq(&self) -> f64 {
        self.components().iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

/// Points with planar radius below this are treated as lying on the
/// vertical axis, where the distance has the closed form `2 sqrt(pi |x3|)`.
/// The metric is non-smooth on the axis, so differential checks stay outside
/// a much larger tube.
pub const AXIS_TUBE_RADIUS: f64 = 1e-8;

/// `mu(beta) = (beta - sin beta) / (1 - cos beta)` on `(0, 2 pi)`, the
/// monotone increasing arc-angle profile of the geodesic family. The value
/// equals `4 |x3| / rho^2` at the arc angle solving the geodesic endpoint
/// condition.
fn mu_profile(beta: f64) -> f64 {
    if beta < 1e-4 {
        // series; the direct expression cancels catastrophically here
        let b2 = beta * beta;
        return beta / 3.0 * (1.0 + b2 / 30.0 + b2 * b2 / 840.0);
    }
    (beta - beta.sin()) / (1.0 - beta.cos())
}

fn mu_profile_deriv(beta: f64) -> f64 {
    let one_m_cos = 1.0 - beta.cos();
    if one_m_cos < 1e-12 {
        return 1.0 / 3.0;
    }
    (one_m_cos * one_m_cos - (beta - beta.sin()) * beta.sin()) / (one_m_cos * one_m_cos)
}

/// Solve `mu_profile(beta) = m` for `beta` in `(0, 2 pi)` by bisection with a
/// Newton polish. `m` must be positive.
fn solve_arc_angle(m: f64) -> Result<f64, String> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(format!("arc-angle ratio must be positive and finite, got {m}"));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let (mut lo, mut hi) = (0.0_f64, two_pi);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mu_profile(mid) < m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut beta = 0.5 * (lo + hi);
    for _ in 0..4 {
        let g = mu_profile(beta) - m;
        let dg = mu_profile_deriv(beta);
        if dg <= 0.0 {
            break;
        }
        let next = beta - g / dg;
        if next > lo && next < hi {
            beta = next;
        } else {
            break;
        }
    }
    if !beta.is_finite() || beta <= 0.0 || beta >= two_pi {
        return Err(format!("arc angle out of range for ratio {m}: {beta}"));
    }
    Ok(beta)
}

/// Carnot-Caratheodory distance of `(x1, x2, x3)` to the identity.
fn cc_distance(x1: f64, x2: f64, x3: f64) -> Result<f64, String> {
    if !x1.is_finite() || !x2.is_finite() || !x3.is_finite() {
        return Err("non-finite coordinate".to_string());
    }
    let rho = x1.hypot(x2);
    let z = x3.abs();
    if z == 0.0 {
        // horizontal straight segment
        return Ok(rho);
    }
    if rho < AXIS_TUBE_RADIUS {
        // vertical point: full-circle geodesic
        return Ok(2.0 * (std::f64::consts::PI * z).sqrt());
    }
    let beta = solve_arc_angle(4.0 * z / (rho * rho))?;
    let alpha = 0.5 * beta;
    Ok(rho * alpha / alpha.sin())
}

/// Minimizing geodesic from the identity to `x` in the Heisenberg group,
/// evaluated at parameter `t` in `[0, 1]`.
fn h1_radial_geodesic(x: [f64; 3], t: f64) -> Result<[f64; 3], String> {
    let t = t.clamp(0.0, 1.0);
    let rho = x[0].hypot(x[1]);
    let z = x[2];
    if z.abs() == 0.0 {
        return Ok([t * x[0], t * x[1], 0.0]);
    }
    // Build the arc for target (rho, 0, |z|); mirror for z < 0; rotate last.
    let (px, py, pz) = if rho < AXIS_TUBE_RADIUS {
        // full circle of area |z|
        let r = (z.abs() / std::f64::consts::PI).sqrt();
        let theta0 = -0.5 * std::f64::consts::PI;
        let theta = theta0 + 2.0 * std::f64::consts::PI * t;
        let px = r * theta.cos();
        let py = r + r * theta.sin();
        let area = 0.5
            * r
            * r
            * (2.0 * std::f64::consts::PI * t - (2.0 * std::f64::consts::PI * t).sin());
        (px, py, area)
    } else {
        let beta = solve_arc_angle(4.0 * z.abs() / (rho * rho))?;
        let alpha = 0.5 * beta;
        let r = rho / (2.0 * alpha.sin());
        // center above the chord, counterclockwise traversal: positive sweep
        let (cx, cy) = (0.5 * rho, r * alpha.cos());
        let theta0 = (-alpha.cos()).atan2(-alpha.sin());
        let theta = theta0 + 2.0 * alpha * t;
        let px = cx + r * theta.cos();
        let py = cy + r * theta.sin();
        let area = 0.5
            * (r * cx * (theta.sin() - theta0.sin()) - r * cy * (theta.cos() - theta0.cos())
                + r * r * 2.0 * alpha * t);
        (px, py, area)
    };
    let (px, py, pz) = if z < 0.0 { (px, -py, -pz) } else { (px, py, pz) };
    let phi = x[1].atan2(x[0]);
    let (s, c) = (phi.sin(), phi.cos());
    Ok([c * px - s * py, s * px + c * py, pz])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H1: SpinSpace = SpinSpace::Heisenberg1;
    const LINE: SpinSpace = SpinSpace::Line;

    fn hp(x1: f64, x2: f64, x3: f64) -> SpinPoint {
        SpinPoint::heisenberg(x1, x2, x3)
    }

    #[test]
    fn group_law_matches_printed_formula() {
        let e = H1.identity();
        let x = hp(2.0, -1.0, 5.0);
        assert_eq!(H1.mul(&e, &x).unwrap(), x);
        assert_eq!(H1.mul(&x, &e).unwrap(), x);

        let p = H1.mul(&hp(1.0, 0.0, 0.0), &hp(0.0, 1.0, 0.0)).unwrap();
        assert_eq!(p.coords(), &[1.0, 1.0, 0.5]);
    }

    #[test]
    fn inverse_cancels() {
        for (a, b, c) in [(1.0, 2.0, 3.0), (-4.0, 0.0, 1.0), (0.3, -0.7, 0.11)] {
            let x = hp(a, b, c);
            let xi = H1.inv(&x).unwrap();
            assert_eq!(xi.coords(), &[-a, -b, -c]);
            let prod = H1.mul(&x, &xi).unwrap();
            for &v in prod.coords() {
                assert!(v.abs() < 1e-15, "mul(x, inv x) = {prod:?}");
            }
        }
    }

    #[test]
    fn associativity_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let mut pts = [[0.0; 3]; 3];
            for p in pts.iter_mut() {
                for c in p.iter_mut() {
                    *c = rng.gen_range(-10.0..10.0);
                }
            }
            let [x, y, z] = pts.map(|p| hp(p[0], p[1], p[2]));
            let left = H1.mul(&H1.mul(&x, &y).unwrap(), &z).unwrap();
            let right = H1.mul(&x, &H1.mul(&y, &z).unwrap()).unwrap();
            let mag: f64 = 1.0
                + [x, y, z]
                    .iter()
                    .map(|p| p.coord_norm())
                    .sum::<f64>();
            for k in 0..3 {
                assert!(
                    (left.coords()[k] - right.coords()[k]).abs() <= 1e-12 * mag,
                    "associativity violated at {x:?} {y:?} {z:?}"
                );
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let x = SpinPoint::line(1.0);
        let y = hp(0.0, 0.0, 0.0);
        assert!(matches!(
            H1.mul(&x, &y),
            Err(GeometryError::DimensionMismatch { .. })
        ));
        assert!(SpinPoint::from_coords(LINE, &[1.0, 2.0]).is_err());
        assert!(SpinPoint::from_coords(H1, &[1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn distance_planar_and_vertical() {
        assert_eq!(H1.metric_d(&H1.identity()).unwrap(), 0.0);
        assert_relative_eq!(H1.metric_d(&hp(3.0, 4.0, 0.0)).unwrap(), 5.0, epsilon = 1e-12);
        // golden: vertical unit point, full-circle geodesic value 2 sqrt(pi)
        assert_relative_eq!(
            H1.metric_d(&hp(0.0, 0.0, 1.0)).unwrap(),
            3.544907701811032,
            epsilon = 1e-9
        );
        // golden values frozen from the geodesic-shooting oracle
        assert_relative_eq!(
            H1.metric_d(&hp(1.0, 1.0, 0.3)).unwrap(),
            1.585641894145,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            H1.metric_d(&hp(0.5, -0.2, 1.0)).unwrap(),
            3.027329343644,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            H1.metric_d(&hp(2.0, 0.0, 0.5)).unwrap(),
            2.173540407890,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            H1.metric_d(&hp(0.3, 0.3, 2.0)).unwrap(),
            4.594034737679,
            epsilon = 1e-9
        );
    }

    #[test]
    fn distance_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let x = hp(
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
                rng.gen_range(-5.0..5.0),
            );
            let d = H1.metric_d(&x).unwrap();
            let di = H1.metric_d(&H1.inv(&x).unwrap()).unwrap();
            assert_relative_eq!(d, di, max_relative = 1e-6);
        }
    }

    #[test]
    fn distance_subadditive_along_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let x = hp(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let y = hp(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let dxy = H1.metric_d(&H1.mul(&x, &y).unwrap()).unwrap();
            let bound = H1.metric_d(&x).unwrap() + H1.metric_d(&y).unwrap();
            assert!(
                dxy <= bound + 1e-6,
                "triangle inequality violated: d(xy)={dxy}, d(x)+d(y)={bound}"
            );
        }
    }

    #[test]
    fn dilation_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let x = hp(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let d = H1.metric_d(&x).unwrap();
            if d < 1e-3 {
                continue;
            }
            for lambda in [0.5, 2.0, 3.0] {
                let scaled = H1.dilate(&x, lambda).unwrap();
                let ds = H1.metric_d(&scaled).unwrap();
                assert_relative_eq!(ds, lambda * d, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = H1
            .horizontal_grad(|_| 7.25, &hp(1.0, -2.0, 0.4), 1e-4)
            .unwrap();
        assert_eq!(g.components(), &[0.0, 0.0]);
    }

    #[test]
    fn gradient_of_vertical_coordinate() {
        // f(x) = x3: X1 f = -x2/2, X2 f = x1/2; at (1,0,0) this is (0, 0.5)
        let g = H1
            .horizontal_grad(|p| p.coords()[2], &hp(1.0, 0.0, 0.0), 1e-5)
            .unwrap();
        assert_relative_eq!(g.components()[0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(g.components()[1], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn eikonal_for_distance() {
        // |grad d| = 1 away from the vertical axis
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 1000 {
            let x = hp(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            if x.coords()[0].hypot(x.coords()[1]) <= 0.1 {
                continue;
            }
            let h = H1.default_fd_step(&x).unwrap();
            let g = H1
                .horizontal_grad(|p| H1.metric_d(p).unwrap(), &x, h)
                .unwrap();
            let n = g.norm();
            assert!(
                (n - 1.0).abs() <= 1e-3,
                "eikonal violated at {x:?}: |grad d| = {n}"
            );
            checked += 1;
        }
    }

    #[test]
    fn sub_laplacian_basics() {
        assert_relative_eq!(
            H1.sub_laplacian(|_| 3.0, &hp(0.7, 0.1, -0.2), 1e-3).unwrap(),
            0.0,
            epsilon = 1e-9
        );
        // f = x1^2 has X1^2 f = 2, X2^2 f = 0
        let lap = H1
            .sub_laplacian(|p| p.coords()[0] * p.coords()[0], &hp(1.3, -0.4, 0.2), 1e-4)
            .unwrap();
        assert_relative_eq!(lap, 2.0, epsilon = 1e-5);
    }

    #[test]
    fn sub_laplacian_of_distance_bounded() {
        // |lap d| * d stays bounded on the sampled off-axis region
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut fitted = 0.0_f64;
        let mut n = 0;
        while n < 500 {
            let x = hp(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let rho = x.coords()[0].hypot(x.coords()[1]);
            let d = H1.metric_d(&x).unwrap();
            if rho <= 0.15 || !(0.5..=5.0).contains(&d) {
                continue;
            }
            let h = 1e-3 * (1.0 + d);
            let lap = H1
                .sub_laplacian(|p| H1.metric_d(p).unwrap(), &x, h)
                .unwrap();
            fitted = fitted.max(lap.abs() * d);
            n += 1;
        }
        assert!(fitted.is_finite() && fitted > 0.0);
        assert!(fitted < 100.0, "fitted K suspiciously large: {fitted}");
    }

    #[test]
    fn line_backend_reduces_to_ordinary_calculus() {
        let x = SpinPoint::line(-2.5);
        assert_eq!(LINE.metric_d(&x).unwrap(), 2.5);
        let g = LINE
            .horizontal_grad(|p| p.coords()[0] * p.coords()[0], &x, 1e-5)
            .unwrap();
        assert_eq!(g.components().len(), 1);
        assert_relative_eq!(g.components()[0], -5.0, epsilon = 1e-8);
        let lap = LINE
            .sub_laplacian(|p| p.coords()[0] * p.coords()[0], &x, 1e-4)
            .unwrap();
        assert_relative_eq!(lap, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn radial_geodesic_scales_distance() {
        let targets = [
            hp(1.0, 1.0, 0.3),
            hp(0.5, -0.2, 1.0),
            hp(2.0, 0.0, 0.5),
            hp(-0.7, 0.4, -0.9),
            hp(3.0, 4.0, 0.0),
            hp(0.0, 0.0, 1.0),
        ];
        for x in targets {
            let d = H1.metric_d(&x).unwrap();
            let end = H1.radial_geodesic(&x, 1.0).unwrap();
            for k in 0..3 {
                assert!(
                    (end.coords()[k] - x.coords()[k]).abs() < 1e-9 * (1.0 + d),
                    "geodesic endpoint mismatch for {x:?}: {end:?}"
                );
            }
            for t in [0.2, 0.5, 0.8] {
                let p = H1.radial_geodesic(&x, t).unwrap();
                let dp = H1.metric_d(&p).unwrap();
                assert_relative_eq!(dp, t * d, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn line_radial_geodesic() {
        let x = SpinPoint::line(4.0);
        let p = LINE.radial_geodesic(&x, 0.25).unwrap();
        assert_eq!(p.coords(), &[1.0]);
    }
}
