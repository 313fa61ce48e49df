//! Phases, interactions and finite-window Hamiltonians.
//!
//! The Hamiltonian of a window `L` inside `Z^2` with fixed boundary data `w`
//! is
//!
//! ```text
//! H(x_L) = sum_{i in L} d(x_i)^p
//!        + delta * [ sum_{interior edges {i,j}} (d(x_i) + d(x_j))^r
//!                  + sum_{i in L, j in bd(L), j ~ i} (d(x_i) + d(w_j))^r ]
//! ```
//!
//! with every interior edge counted once. All energies are functions of the
//! spin distances alone, which lets callers precompute distance tables and
//! keeps the corresponding measure invariant under spin inversion.

use crate::geometry::{SpinPoint, SpinSpace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("site ({0}, {1}) is outside the window")]
    SiteOutsideWindow(i32, i32),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// A lattice site. Interior sites have `0 <= x < width`, `0 <= y < height`;
/// anything adjacent outside the window is a boundary site.
pub type Site = (i32, i32);

/// Checkerboard parity of a site: class 0 or 1 by coordinate-sum parity.
pub fn site_parity(site: Site) -> u8 {
    ((site.0 + site.1).rem_euclid(2)) as u8
}

pub fn neighbors(site: Site) -> [Site; 4] {
    let (x, y) = site;
    [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]
}

/// Fixed boundary data on the sites adjacent to the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundarySpec {
    /// Every boundary spin is the identity element.
    Identity,
    /// Every boundary spin equals the given point.
    Uniform(SpinPoint),
    /// Every boundary spin sits at this distance from the identity (first
    /// coordinate displaced).
    AtDistance(f64),
}

impl BoundarySpec {
    pub fn resolve(&self, space: SpinSpace) -> SpinPoint {
        match self {
            BoundarySpec::Identity => space.identity(),
            BoundarySpec::Uniform(p) => *p,
            BoundarySpec::AtDistance(a) => match space {
                SpinSpace::Line => SpinPoint::line(*a),
                SpinSpace::Heisenberg1 => SpinPoint::heisenberg(*a, 0.0, 0.0),
            },
        }
    }

    /// Uniform boundary at distance `a` from the identity (first coordinate
    /// set to `a`, which realizes distance `a` in both spin spaces).
    pub fn at_distance(space: SpinSpace, a: f64) -> Self {
        if a == 0.0 {
            return BoundarySpec::Identity;
        }
        match space {
            SpinSpace::Line => BoundarySpec::Uniform(SpinPoint::line(a)),
            SpinSpace::Heisenberg1 => BoundarySpec::Uniform(SpinPoint::heisenberg(a, 0.0, 0.0)),
        }
    }
}

/// A rectangular window of `Z^2` plus its frozen boundary condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_boundary")]
    pub boundary: BoundarySpec,
}

fn default_boundary() -> BoundarySpec {
    BoundarySpec::Identity
}

impl LatticeSpec {
    pub fn new(width: usize, height: usize) -> Self {
        LatticeSpec {
            width,
            height,
            boundary: BoundarySpec::Identity,
        }
    }

    pub fn with_boundary(mut self, boundary: BoundarySpec) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn site_count(&self) -> usize {
        self.width * self.height
    }
}

/// Model parameters: spin space, phase exponent `p`, interaction exponent
/// `r`, coupling `delta`, the uniform edge-coupling bound of the framework
/// Hamiltonian, and the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelParams {
    pub spin_space: SpinSpace,
    pub p: u32,
    pub r: u32,
    pub delta: f64,
    /// Uniform bound on the edge couplings. The concrete model absorbs all
    /// couplings into `delta`; when absent it defaults to `delta`.
    #[serde(default)]
    pub j_bound: Option<f64>,
    pub lattice: LatticeSpec,
}

impl ModelParams {
    pub fn new(spin_space: SpinSpace, p: u32, r: u32, delta: f64, lattice: LatticeSpec) -> Self {
        ModelParams {
            spin_space,
            p,
            r,
            delta,
            j_bound: None,
            lattice,
        }
    }

    pub fn coupling_bound(&self) -> f64 {
        self.j_bound.unwrap_or(self.delta)
    }

    /// Structural validation: finite nonnegative couplings and a nonempty
    /// window. Exponent conditions such as `p >= 2` are the business of the
    /// assumption audit, which must be able to observe them failing.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(ModelError::InvalidParams(format!(
                "delta must be finite and nonnegative, got {}",
                self.delta
            )));
        }
        if let Some(j) = self.j_bound {
            if !j.is_finite() || j < 0.0 {
                return Err(ModelError::InvalidParams(format!(
                    "j_bound must be finite and nonnegative, got {j}"
                )));
            }
        }
        if self.p == 0 || self.r == 0 {
            return Err(ModelError::InvalidParams(
                "exponents p and r must be positive".to_string(),
            ));
        }
        if self.lattice.width == 0 || self.lattice.height == 0 {
            return Err(ModelError::InvalidParams(
                "lattice window must be nonempty".to_string(),
            ));
        }
        Ok(())
    }

    /// Violations of the exponent window the concrete model is stated for
    /// (`p >= 2`, `r > 2`, `2r <= p + 2`). Empty means conforming.
    pub fn example_constraint_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.p < 2 {
            v.push(format!("phase exponent p = {} < 2", self.p));
        }
        if self.delta > 0.0 {
            if self.r <= 2 {
                v.push(format!("interaction exponent r = {} <= 2", self.r));
            }
            if 2 * self.r > self.p + 2 {
                v.push(format!("2r = {} exceeds p + 2 = {}", 2 * self.r, self.p + 2));
            }
        }
        v
    }
}

/// Single-site phase `d(x)^p`.
pub fn phase(x: &SpinPoint, params: &ModelParams) -> f64 {
    let d = params
        .spin_space
        .metric_d(x)
        .expect("finite point of the active spin space");
    d.powi(params.p as i32)
}

/// Edge interaction `(d(x) + d(w))^r`.
pub fn interaction(x: &SpinPoint, w: &SpinPoint, params: &ModelParams) -> f64 {
    let space = params.spin_space;
    let dx = space.metric_d(x).expect("finite point");
    let dw = space.metric_d(w).expect("finite point");
    interaction_from_dist(dx, dw, params.r)
}

pub fn interaction_from_dist(dx: f64, dw: f64, r: u32) -> f64 {
    (dx + dw).powi(r as i32)
}

/// Binomial expansion of the edge interaction,
/// `sum_{k=0}^{r} C(r,k) dx^{r-k} dw^k`. Equals `interaction_from_dist`
/// identically; kept as the independent algebraic route.
pub fn interaction_expanded(dx: f64, dw: f64, r: u32) -> f64 {
    (0..=r)
        .map(|k| binomial(r, k) * dx.powi((r - k) as i32) * dw.powi(k as i32))
        .sum()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Conditional energy of one site at distance `d_site` given the distances
/// of its four neighbours: `d^p + delta * sum_j (d + d_j)^r`.
pub fn site_energy(d_site: f64, neighbor_d: &[f64; 4], params: &ModelParams) -> f64 {
    let mut acc = d_site.powi(params.p as i32);
    if params.delta != 0.0 {
        for &dj in neighbor_d {
            acc += params.delta * interaction_from_dist(d_site, dj, params.r);
        }
    }
    acc
}

/// An assignment of spins to the interior of the window. Boundary values are
/// resolved from the lattice spec at construction and never mutated; spin
/// distances are cached alongside the points.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinConfig {
    space: SpinSpace,
    width: i32,
    height: i32,
    interior: Vec<SpinPoint>,
    interior_d: Vec<f64>,
    boundary_point: SpinPoint,
    boundary_d: f64,
}

impl SpinConfig {
    /// All-identity interior with the boundary resolved from the params.
    pub fn identity(params: &ModelParams) -> Self {
        let space = params.spin_space;
        let n = params.lattice.site_count();
        let boundary_point = params.lattice.boundary.resolve(space);
        let boundary_d = space
            .metric_d(&boundary_point)
            .expect("boundary point valid for the spin space");
        SpinConfig {
            space,
            width: params.lattice.width as i32,
            height: params.lattice.height as i32,
            interior: vec![space.identity(); n],
            interior_d: vec![0.0; n],
            boundary_point,
            boundary_d,
        }
    }

    pub fn space(&self) -> SpinSpace {
        self.space
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn is_interior(&self, site: Site) -> bool {
        site.0 >= 0 && site.0 < self.width && site.1 >= 0 && site.1 < self.height
    }

    pub fn index(&self, site: Site) -> usize {
        debug_assert!(self.is_interior(site));
        (site.1 * self.width + site.0) as usize
    }

    pub fn interior_sites(&self) -> impl Iterator<Item = Site> + '_ {
        let (w, h) = (self.width, self.height);
        (0..h).flat_map(move |y| (0..w).map(move |x| (x, y)))
    }

    /// Interior sites of one checkerboard class, row-major order.
    pub fn parity_sites(&self, parity: u8) -> Vec<Site> {
        self.interior_sites()
            .filter(|&s| site_parity(s) == parity)
            .collect()
    }

    /// Spin at a site: interior value or the frozen boundary value.
    pub fn spin(&self, site: Site) -> SpinPoint {
        if self.is_interior(site) {
            self.interior[self.index(site)]
        } else {
            self.boundary_point
        }
    }

    /// Cached distance of the spin at a site to the identity.
    pub fn dist(&self, site: Site) -> f64 {
        if self.is_interior(site) {
            self.interior_d[self.index(site)]
        } else {
            self.boundary_d
        }
    }

    pub fn boundary_point(&self) -> SpinPoint {
        self.boundary_point
    }

    pub fn set_spin(&mut self, site: Site, point: SpinPoint) -> Result<(), ModelError> {
        if !self.is_interior(site) {
            return Err(ModelError::SiteOutsideWindow(site.0, site.1));
        }
        let d = self.space.metric_d(&point)?;
        let idx = self.index(site);
        self.interior[idx] = point;
        self.interior_d[idx] = d;
        Ok(())
    }

    /// Distances of the four neighbours of an interior site.
    pub fn neighbor_dists(&self, site: Site) -> [f64; 4] {
        let ns = neighbors(site);
        [
            self.dist(ns[0]),
            self.dist(ns[1]),
            self.dist(ns[2]),
            self.dist(ns[3]),
        ]
    }
}

/// One-site Hamiltonian `H^i`: phase of the site plus its four incident
/// interactions, neighbours read from the configuration.
pub fn site_hamiltonian(
    site: Site,
    cfg: &SpinConfig,
    params: &ModelParams,
) -> Result<f64, ModelError> {
    if !cfg.is_interior(site) {
        return Err(ModelError::SiteOutsideWindow(site.0, site.1));
    }
    Ok(site_energy(cfg.dist(site), &cfg.neighbor_dists(site), params))
}

/// Window Hamiltonian with every interior edge counted once and one term per
/// (interior site, adjacent boundary site) pair.
pub fn total_hamiltonian(cfg: &SpinConfig, params: &ModelParams) -> f64 {
    let mut acc = 0.0;
    for site in cfg.interior_sites() {
        let d = cfg.dist(site);
        acc += d.powi(params.p as i32);
        if params.delta == 0.0 {
            continue;
        }
        // interior edges once via right/up; boundary edges from their unique
        // interior endpoint
        for n in neighbors(site) {
            let counted = if cfg.is_interior(n) {
                (n.0 == site.0 + 1 && n.1 == site.1) || (n.1 == site.1 + 1 && n.0 == site.0)
            } else {
                true
            };
            if counted {
                acc += params.delta * interaction_from_dist(d, cfg.dist(n), params.r);
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_params(p: u32, r: u32, delta: f64, w: usize, h: usize) -> ModelParams {
        ModelParams::new(SpinSpace::Line, p, r, delta, LatticeSpec::new(w, h))
    }

    #[test]
    fn phase_examples() {
        let params = line_params(4, 3, 0.1, 1, 1);
        assert_eq!(phase(&SpinPoint::line(0.0), &params), 0.0);
        assert_eq!(phase(&SpinPoint::line(2.0), &params), 16.0);

        let hp = ModelParams::new(SpinSpace::Heisenberg1, 4, 3, 0.1, LatticeSpec::new(1, 1));
        // d((3,4,0)) = 5 so the phase is 5^4
        assert_relative_eq!(
            phase(&SpinPoint::heisenberg(3.0, 4.0, 0.0), &hp),
            625.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn interaction_examples_and_expansion() {
        let params = line_params(4, 3, 1.0, 1, 1);
        let e = SpinPoint::line(0.0);
        assert_eq!(interaction(&e, &e, &params), 0.0);
        assert_eq!(
            interaction(&SpinPoint::line(1.0), &SpinPoint::line(2.0), &params),
            27.0
        );
        // binomial route: 1 + 3*1*2 + 3*1*4 + 8 = 27
        assert_eq!(interaction_expanded(1.0, 2.0, 3), 27.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for r in [3u32, 4] {
            for _ in 0..200 {
                let dx: f64 = rng.gen_range(0.0..4.0);
                let dw: f64 = rng.gen_range(0.0..4.0);
                let direct = interaction_from_dist(dx, dw, r);
                let expanded = interaction_expanded(dx, dw, r);
                assert_relative_eq!(direct, expanded, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn site_hamiltonian_hand_count() {
        let params = line_params(4, 3, 0.1, 3, 3);
        let mut cfg = SpinConfig::identity(&params);
        assert_eq!(site_hamiltonian((1, 1), &cfg, &params).unwrap(), 0.0);

        cfg.set_spin((1, 1), SpinPoint::line(1.0)).unwrap();
        // 1^4 + 0.1 * 4 * (1+0)^3 = 1.4
        assert_relative_eq!(
            site_hamiltonian((1, 1), &cfg, &params).unwrap(),
            1.4,
            max_relative = 1e-12
        );

        // delta = 0 reduces to the phase
        let free = line_params(4, 3, 0.0, 3, 3);
        assert_relative_eq!(
            site_hamiltonian((1, 1), &cfg, &free).unwrap(),
            1.0,
            max_relative = 1e-12
        );

        assert!(site_hamiltonian((5, 0), &cfg, &params).is_err());
    }

    #[test]
    fn total_hamiltonian_two_site_window() {
        // 2x1 window, p=4, r=3, delta=1, spins (1,1), boundary all 0:
        // phases 1+1, interior edge (1+1)^3 = 8, six boundary edges of 1
        let params = line_params(4, 3, 1.0, 2, 1);
        let mut cfg = SpinConfig::identity(&params);
        cfg.set_spin((0, 0), SpinPoint::line(1.0)).unwrap();
        cfg.set_spin((1, 0), SpinPoint::line(1.0)).unwrap();
        assert_relative_eq!(total_hamiltonian(&cfg, &params), 16.0, max_relative = 1e-12);

        // all identity spins give zero energy
        let zero = SpinConfig::identity(&params);
        assert_eq!(total_hamiltonian(&zero, &params), 0.0);
    }

    #[test]
    fn one_site_window_total_equals_site() {
        let params = line_params(4, 3, 0.7, 1, 1);
        let mut cfg = SpinConfig::identity(&params);
        cfg.set_spin((0, 0), SpinPoint::line(1.3)).unwrap();
        assert_relative_eq!(
            total_hamiltonian(&cfg, &params),
            site_hamiltonian((0, 0), &cfg, &params).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn local_global_consistency() {
        // replacing one spin changes the total by the change of the one-site
        // Hamiltonian: edges are counted once globally and once locally
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = ModelParams::new(
            SpinSpace::Line,
            4,
            3,
            0.25,
            LatticeSpec::new(3, 3).with_boundary(BoundarySpec::at_distance(SpinSpace::Line, 0.5)),
        );
        for _ in 0..50 {
            let mut cfg = SpinConfig::identity(&params);
            for site in cfg.interior_sites().collect::<Vec<_>>() {
                cfg.set_spin(site, SpinPoint::line(rng.gen_range(-1.5..1.5)))
                    .unwrap();
            }
            let site = (
                rng.gen_range(0..params.lattice.width) as i32,
                rng.gen_range(0..params.lattice.height) as i32,
            );
            let before_total = total_hamiltonian(&cfg, &params);
            let before_site = site_hamiltonian(site, &cfg, &params).unwrap();
            let y = SpinPoint::line(rng.gen_range(-1.5..1.5));
            cfg.set_spin(site, y).unwrap();
            let after_total = total_hamiltonian(&cfg, &params);
            let after_site = site_hamiltonian(site, &cfg, &params).unwrap();
            let scale = 1.0 + before_total.abs() + after_total.abs();
            assert!(
                ((after_total - before_total) - (after_site - before_site)).abs() <= 1e-10 * scale
            );
        }
    }

    #[test]
    fn energies_are_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = ModelParams::new(SpinSpace::Heisenberg1, 4, 3, 0.2, LatticeSpec::new(2, 2));
        for _ in 0..100 {
            let x = SpinPoint::heisenberg(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let w = SpinPoint::heisenberg(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            assert!(phase(&x, &params) >= 0.0);
            assert!(interaction(&x, &w, &params) >= 0.0);
        }
    }

    #[test]
    fn parity_classes_partition_window() {
        let params = line_params(4, 3, 0.0, 4, 3);
        let cfg = SpinConfig::identity(&params);
        let g0 = cfg.parity_sites(0);
        let g1 = cfg.parity_sites(1);
        assert_eq!(g0.len() + g1.len(), 12);
        for s in &g0 {
            for n in neighbors(*s) {
                assert_ne!(site_parity(n), 0, "parity class contains adjacent sites");
            }
        }
    }

    #[test]
    fn boundary_spec_distances() {
        for space in [SpinSpace::Line, SpinSpace::Heisenberg1] {
            for a in [0.0, 1.0, 4.0] {
                let b = BoundarySpec::at_distance(space, a);
                let d = space.metric_d(&b.resolve(space)).unwrap();
                assert_relative_eq!(d, a, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn params_validation() {
        let mut p = line_params(4, 3, 0.1, 2, 2);
        assert!(p.validate().is_ok());
        p.delta = -1.0;
        assert!(p.validate().is_err());
        let q = line_params(1, 3, 0.1, 2, 2);
        assert!(
            q.validate().is_ok(),
            "p = 1 must be constructible for the audit"
        );
        assert!(!q.example_constraint_violations().is_empty());
    }
}
