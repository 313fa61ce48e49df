//! Smooth compactly supported test functions on configurations.
//!
//! The family is built from radial bumps of the spin distance,
//! `g_{a,w}(t) = exp(1 - 1/(1 - ((t-a)/w)^2))` on `|t - a| < w` (zero
//! outside), together with coordinate-times-bump factors, products across
//! sites and affine shifts. Per-site horizontal gradients are central
//! differences along the exact generator flows, evaluated by substituting
//! the perturbed spin without mutating the configuration, so a gradient
//! never allocates a scratch window.

use crate::geometry::{HorizontalVector, SpinPoint, SpinSpace};
use crate::model::{Site, SpinConfig};

/// The smooth bump profile on the distance axis: maximum 1 at `t = a`,
/// support `(a - w, a + w)`.
pub fn bump_profile(t: f64, center: f64, width: f64) -> f64 {
    let u = (t - center) / width;
    let u2 = u * u;
    if u2 < 1.0 {
        (1.0 - 1.0 / (1.0 - u2)).exp()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TestFn {
    /// `g_{a,w}(d(x_site))`.
    SiteBump { site: Site, center: f64, width: f64 },
    /// `coord_k(x_site) * g_{a,w}(d(x_site))`.
    CoordBump {
        site: Site,
        coord: usize,
        center: f64,
        width: f64,
    },
    /// Product of factors.
    Product(Vec<TestFn>),
    /// Sum of terms.
    Sum(Vec<TestFn>),
    /// `offset + scale * inner`.
    Affine {
        offset: f64,
        scale: f64,
        inner: Box<TestFn>,
    },
}

impl TestFn {
    pub fn bump(site: Site, center: f64, width: f64) -> Self {
        TestFn::SiteBump {
            site,
            center,
            width,
        }
    }

    pub fn coord_bump(site: Site, coord: usize, center: f64, width: f64) -> Self {
        TestFn::CoordBump {
            site,
            coord,
            center,
            width,
        }
    }

    pub fn shifted(self, offset: f64) -> Self {
        TestFn::Affine {
            offset,
            scale: 1.0,
            inner: Box::new(self),
        }
    }

    pub fn scaled(self, scale: f64) -> Self {
        TestFn::Affine {
            offset: 0.0,
            scale,
            inner: Box::new(self),
        }
    }

    /// Sites the function depends on.
    pub fn sites(&self) -> Vec<Site> {
        let mut out = Vec::new();
        self.collect_sites(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_sites(&self, out: &mut Vec<Site>) {
        match self {
            TestFn::SiteBump { site, .. } | TestFn::CoordBump { site, .. } => out.push(*site),
            TestFn::Product(fs) | TestFn::Sum(fs) => {
                for f in fs {
                    f.collect_sites(out);
                }
            }
            TestFn::Affine { inner, .. } => inner.collect_sites(out),
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            TestFn::SiteBump {
                site,
                center,
                width,
            } => format!("bump[{},{}](a={center},w={width})", site.0, site.1),
            TestFn::CoordBump {
                site,
                coord,
                center,
                width,
            } => format!(
                "x{}*bump[{},{}](a={center},w={width})",
                coord + 1,
                site.0,
                site.1
            ),
            TestFn::Product(fs) => fs
                .iter()
                .map(|f| f.descriptor())
                .collect::<Vec<_>>()
                .join("*"),
            TestFn::Sum(fs) => fs
                .iter()
                .map(|f| f.descriptor())
                .collect::<Vec<_>>()
                .join("+"),
            TestFn::Affine {
                offset,
                scale,
                inner,
            } => format!("{offset}+{scale}*({})", inner.descriptor()),
        }
    }

    pub fn evaluate(&self, cfg: &SpinConfig) -> f64 {
        self.evaluate_with(cfg, None)
    }

    /// Evaluate with one spin substituted on the fly.
    pub fn evaluate_with(&self, cfg: &SpinConfig, over: Option<(Site, &SpinPoint)>) -> f64 {
        match self {
            TestFn::SiteBump {
                site,
                center,
                width,
            } => {
                let d = dist_of(cfg, over, *site);
                bump_profile(d, *center, *width)
            }
            TestFn::CoordBump {
                site,
                coord,
                center,
                width,
            } => {
                let p = spin_of(cfg, over, *site);
                let d = cfg
                    .space()
                    .metric_d(&p)
                    .expect("finite spin in configuration");
                p.coords()[*coord] * bump_profile(d, *center, *width)
            }
            TestFn::Product(fs) => fs.iter().map(|f| f.evaluate_with(cfg, over)).product(),
            TestFn::Sum(fs) => fs.iter().map(|f| f.evaluate_with(cfg, over)).sum(),
            TestFn::Affine {
                offset,
                scale,
                inner,
            } => offset + scale * inner.evaluate_with(cfg, over),
        }
    }

    /// Evaluate a single-site function directly on a point of the spin
    /// space. Panics if the function touches more than one site.
    pub fn evaluate_point(&self, space: SpinSpace, p: &SpinPoint) -> f64 {
        debug_assert!(self.sites().len() <= 1, "not a single-site function");
        match self {
            TestFn::SiteBump { center, width, .. } => {
                let d = space.metric_d(p).expect("finite point");
                bump_profile(d, *center, *width)
            }
            TestFn::CoordBump {
                coord,
                center,
                width,
                ..
            } => {
                let d = space.metric_d(p).expect("finite point");
                p.coords()[*coord] * bump_profile(d, *center, *width)
            }
            TestFn::Product(fs) => fs.iter().map(|f| f.evaluate_point(space, p)).product(),
            TestFn::Sum(fs) => fs.iter().map(|f| f.evaluate_point(space, p)).sum(),
            TestFn::Affine {
                offset,
                scale,
                inner,
            } => offset + scale * inner.evaluate_point(space, p),
        }
    }

    /// Horizontal gradient with respect to the spin at `site`, central
    /// differences along the generator flows with step `h`.
    pub fn site_gradient(&self, cfg: &SpinConfig, site: Site, h: f64) -> HorizontalVector {
        let space = cfg.space();
        let x = cfg.spin(site);
        let n = space.generator_count();
        let mut comps = [0.0; crate::geometry::MAX_GENERATORS];
        for (k, c) in comps.iter_mut().enumerate().take(n) {
            let fwd = space
                .mul(&x, &space.generator_point(k, h))
                .expect("valid flow point");
            let bwd = space
                .mul(&x, &space.generator_point(k, -h))
                .expect("valid flow point");
            *c = (self.evaluate_with(cfg, Some((site, &fwd)))
                - self.evaluate_with(cfg, Some((site, &bwd))))
                / (2.0 * h);
        }
        HorizontalVector::new(space, &comps[..n]).expect("component count matches space")
    }

    /// Squared norm of the full horizontal gradient over the given sites.
    pub fn grad_norm_sq(&self, cfg: &SpinConfig, sites: &[Site], h: f64) -> f64 {
        sites
            .iter()
            .map(|&s| self.site_gradient(cfg, s, h).norm_sq())
            .sum()
    }
}

fn spin_of(cfg: &SpinConfig, over: Option<(Site, &SpinPoint)>, site: Site) -> SpinPoint {
    match over {
        Some((s, p)) if s == site => *p,
        _ => cfg.spin(site),
    }
}

fn dist_of(cfg: &SpinConfig, over: Option<(Site, &SpinPoint)>, site: Site) -> f64 {
    match over {
        Some((s, p)) if s == site => cfg
            .space()
            .metric_d(p)
            .expect("finite override point"),
        // cached distance
        _ => cfg.dist(site),
    }
}

/// Default (center, width) ladder for the bump family.
pub const BUMP_GRID: [(f64, f64); 8] = [
    (0.4, 0.35),
    (0.8, 0.4),
    (1.2, 0.5),
    (1.6, 0.6),
    (0.6, 0.55),
    (1.0, 0.8),
    (1.4, 0.45),
    (0.9, 0.3),
];

/// Bumps and coordinate bumps living on a single site (the default
/// twenty-member one-site family).
pub fn one_site_family(site: Site, space: SpinSpace) -> Vec<TestFn> {
    let mut fam: Vec<TestFn> = BUMP_GRID
        .iter()
        .map(|&(a, w)| TestFn::bump(site, a, w))
        .collect();
    for coord in 0..space.dim().min(2) {
        for &(a, w) in BUMP_GRID.iter().take(4) {
            fam.push(TestFn::coord_bump(site, coord, a, w));
        }
    }
    // shifted bumps exercise functions bounded away from zero
    fam.push(TestFn::bump(site, 0.8, 0.4).shifted(1.0));
    fam.push(TestFn::bump(site, 1.2, 0.5).shifted(0.5));
    fam
}

/// Family for one-site entropy inequalities at `site`: pure-site members,
/// neighbour-only members and mixed products.
pub fn weak_lsi_family(site: Site, space: SpinSpace) -> Vec<TestFn> {
    let ns = crate::model::neighbors(site);
    let mut fam: Vec<TestFn> = Vec::new();
    for &(a, w) in BUMP_GRID.iter().take(6) {
        fam.push(TestFn::bump(site, a, w).shifted(0.4));
    }
    // the site factors of the mixed products below, so the pure sub-family
    // pins a coefficient that already covers them
    fam.push(TestFn::bump(site, 0.8, 0.5).shifted(0.5));
    if space.dim() >= 1 {
        fam.push(TestFn::coord_bump(site, 0, 0.8, 0.6).shifted(0.6));
        fam.push(TestFn::coord_bump(site, 0, 0.9, 0.6).shifted(0.8));
    }
    // neighbour-only: entropy-free, they pin nothing but exercise the zero side
    fam.push(TestFn::bump(ns[0], 0.8, 0.5).shifted(0.5));
    // mixed products with each neighbour
    for (k, &n) in ns.iter().enumerate() {
        let (a, w) = BUMP_GRID[k % BUMP_GRID.len()];
        fam.push(TestFn::Product(vec![
            TestFn::bump(site, 0.8, 0.5).shifted(0.5),
            TestFn::bump(n, a, w).shifted(0.5),
        ]));
        fam.push(TestFn::Product(vec![
            TestFn::coord_bump(site, 0, 0.9, 0.6).shifted(0.8),
            TestFn::bump(n, a, w.min(0.6)).shifted(0.4),
        ]));
    }
    fam
}

/// Family for two-site sweep inequalities on sites `i`, `j`: members
/// depending on `i` alone, on `j` alone, and jointly.
pub fn two_site_family(i: Site, j: Site, space: SpinSpace) -> Vec<TestFn> {
    let mut fam = Vec::new();
    for &(a, w) in BUMP_GRID.iter().take(4) {
        fam.push(TestFn::bump(i, a, w));
        fam.push(TestFn::bump(j, a, w));
    }
    if space.dim() >= 1 {
        fam.push(TestFn::coord_bump(i, 0, 0.8, 0.6));
        fam.push(TestFn::coord_bump(j, 0, 0.8, 0.6));
    }
    for &(a, w) in BUMP_GRID.iter().take(3) {
        fam.push(TestFn::Product(vec![
            TestFn::bump(i, a, w).shifted(0.5),
            TestFn::bump(j, 1.0, 0.7).shifted(0.5),
        ]));
        fam.push(TestFn::Sum(vec![
            TestFn::bump(i, a, w),
            TestFn::bump(j, a, w).scaled(0.7),
        ]));
    }
    fam
}

/// Family on a window for global entropy fits: single-site members spread
/// over the window plus a few neighbouring products.
pub fn window_family(params: &crate::model::ModelParams) -> Vec<TestFn> {
    let cfg = SpinConfig::identity(params);
    let sites: Vec<Site> = cfg.interior_sites().collect();
    let mut fam = Vec::new();
    for (k, &s) in sites.iter().enumerate() {
        let (a, w) = BUMP_GRID[k % BUMP_GRID.len()];
        fam.push(TestFn::bump(s, a, w).shifted(0.5));
        if fam.len() >= 12 {
            break;
        }
    }
    let mid = sites[sites.len() / 2];
    for n in crate::model::neighbors(mid) {
        if cfg.is_interior(n) {
            fam.push(TestFn::Product(vec![
                TestFn::bump(mid, 0.8, 0.5).shifted(0.5),
                TestFn::bump(n, 1.0, 0.6).shifted(0.5),
            ]));
        }
    }
    if params.spin_space.dim() >= 1 {
        fam.push(TestFn::coord_bump(mid, 0, 0.8, 0.6).shifted(0.2));
    }
    fam
}
