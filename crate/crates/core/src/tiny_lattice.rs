//! Exact tensor-grid functionals for tiny line-spin windows.
//!
//! Windows with at most four sites and line spins admit full deterministic
//! quadrature of the finite-volume Gibbs measure and of the checkerboard
//! conditional operators. Functions on the window are tabulated on the
//! product grid (`LatticeFn`), and the conditional operators act on tables,
//! so compositions like the alternating sweep operators and their entropy
//! decompositions are evaluated without any sampling. Because the operators
//! integrate against the same discrete weights that define the discrete
//! Gibbs measure, algebraic identities between them hold to machine
//! precision, independent of the truncation quality of the grid.

use crate::geometry::{SpinPoint, SpinSpace};
use crate::model::{interaction_from_dist, neighbors, ModelParams, Site, SpinConfig};
use crate::quadrature::{xlogx, GridSpec, QuadratureError};
use serde::Serialize;

/// Upper bound on the integration dimension (= site count for line spins).
pub const MAX_TINY_SITES: usize = 4;

/// Precomputed tables for one window: shared 1-D nodes, per-site base
/// energies (phase plus frozen boundary edges) and the interior edge list.
pub struct TinyLattice {
    params: ModelParams,
    sites: Vec<Site>,
    parity: Vec<u8>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `site_base_energy[i][v]`: phase of node `v` plus its interactions
    /// with the boundary neighbours of site `i`.
    site_base_energy: Vec<Vec<f64>>,
    /// Interior edges as (site index, site index) pairs, each once.
    edges: Vec<(usize, usize)>,
    /// `pair_energy[v * m + w] = (d_v + d_w)^r`, shared by all edges.
    pair_energy: Vec<f64>,
}

/// A function on the window that depends only on the sites in `deps`
/// (indices into `TinyLattice::sites`, ascending), tabulated on the product
/// grid in row-major order over `deps`.
#[derive(Debug, Clone)]
pub struct LatticeFn {
    pub deps: Vec<usize>,
    pub table: Vec<f64>,
}

/// Functionals of the finite-volume Gibbs measure.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TinyLatticeFunctionals {
    pub gibbs_mean: f64,
    pub entropy_f2: f64,
    pub dirichlet: f64,
}

impl TinyLattice {
    pub fn new(params: &ModelParams, grid: &GridSpec) -> Result<Self, QuadratureError> {
        if params.spin_space != SpinSpace::Line {
            return Err(QuadratureError::DimensionTooLarge {
                max: MAX_TINY_SITES,
                got: params.spin_space.dim() * params.lattice.site_count(),
            });
        }
        let n = params.lattice.site_count();
        if n > MAX_TINY_SITES {
            return Err(QuadratureError::DimensionTooLarge {
                max: MAX_TINY_SITES,
                got: n,
            });
        }
        grid.validate(params.spin_space)?;
        let (nodes, weights) = grid.axis_grid(0);
        let dists: Vec<f64> = nodes.iter().map(|x| x.abs()).collect();
        let m = nodes.len();

        let cfg = SpinConfig::identity(params);
        let sites: Vec<Site> = cfg.interior_sites().collect();
        let parity: Vec<u8> = sites.iter().map(|&s| crate::model::site_parity(s)).collect();
        let boundary_d = params
            .spin_space
            .metric_d(&params.lattice.boundary.resolve(params.spin_space))
            .expect("boundary point valid");

        let mut site_base_energy = Vec::with_capacity(n);
        for &s in &sites {
            let boundary_edges = neighbors(s)
                .iter()
                .filter(|nb| !cfg.is_interior(**nb))
                .count();
            let row: Vec<f64> = dists
                .iter()
                .map(|&d| {
                    d.powi(params.p as i32)
                        + params.delta
                            * boundary_edges as f64
                            * interaction_from_dist(d, boundary_d, params.r)
                })
                .collect();
            site_base_energy.push(row);
        }

        let mut edges = Vec::new();
        for (i, &s) in sites.iter().enumerate() {
            for nb in neighbors(s) {
                if cfg.is_interior(nb) {
                    let j = sites.iter().position(|&t| t == nb).unwrap();
                    if i < j {
                        edges.push((i, j));
                    }
                }
            }
        }

        let mut pair_energy = vec![0.0; m * m];
        for v in 0..m {
            for w in 0..m {
                pair_energy[v * m + w] = interaction_from_dist(dists[v], dists[w], params.r);
            }
        }

        Ok(TinyLattice {
            params: params.clone(),
            sites,
            parity,
            nodes,
            weights,
            site_base_energy,
            edges,
            pair_energy,
        })
    }

    pub fn m(&self) -> usize {
        self.nodes.len()
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site_index(&self, site: Site) -> Option<usize> {
        self.sites.iter().position(|&s| s == site)
    }

    pub fn parity_site_indices(&self, parity: u8) -> Vec<usize> {
        (0..self.sites.len())
            .filter(|&i| self.parity[i] == parity)
            .collect()
    }

    fn total_energy(&self, assign: &[usize]) -> f64 {
        let m = self.m();
        let mut acc = 0.0;
        for (i, &v) in assign.iter().enumerate() {
            acc += self.site_base_energy[i][v];
        }
        for &(i, j) in &self.edges {
            acc += self.params.delta * self.pair_energy[assign[i] * m + assign[j]];
        }
        acc
    }

    fn config_for(&self, assign: &[usize], scratch: &mut SpinConfig) {
        for (i, &v) in assign.iter().enumerate() {
            scratch
                .set_spin(self.sites[i], SpinPoint::line(self.nodes[v]))
                .expect("interior site");
        }
    }

    /// Iterate all value assignments (odometer order).
    fn for_each_assignment(&self, mut body: impl FnMut(&[usize])) {
        let n = self.site_count();
        let m = self.m();
        let mut assign = vec![0usize; n];
        loop {
            body(&assign);
            let mut k = n;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                assign[k] += 1;
                if assign[k] < m {
                    break;
                }
                assign[k] = 0;
            }
        }
    }

    /// Mean, entropy of `f^2` and Dirichlet form of `f` under the
    /// finite-volume Gibbs measure, by full tensor quadrature.
    pub fn gibbs_functionals<F>(&self, f: F) -> Result<TinyLatticeFunctionals, QuadratureError>
    where
        F: Fn(&SpinConfig) -> f64,
    {
        let mut scratch = SpinConfig::identity(&self.params);
        let n = self.site_count();

        // global energy shift
        let mut e_min = f64::INFINITY;
        self.for_each_assignment(|a| {
            let e = self.total_energy(a);
            if e < e_min {
                e_min = e;
            }
        });

        let mut z = 0.0;
        let mut s_f = 0.0;
        let mut s_f2 = 0.0;
        let mut s_f2_log = 0.0;
        let mut s_dir = 0.0;
        let mut err: Option<QuadratureError> = None;
        self.for_each_assignment(|a| {
            if err.is_some() {
                return;
            }
            let mut w = (-(self.total_energy(a) - e_min)).exp();
            for &v in a {
                w *= self.weights[v];
            }
            if w == 0.0 {
                return;
            }
            self.config_for(a, &mut scratch);
            let v0 = f(&scratch);
            z += w;
            s_f += w * v0;
            s_f2 += w * v0 * v0;
            s_f2_log += w * xlogx(v0 * v0);
            // per-site central differences for the Dirichlet form
            for i in 0..n {
                let x = self.nodes[a[i]];
                let h = 1e-4 * (1.0 + x.abs());
                let site = self.sites[i];
                if scratch.set_spin(site, SpinPoint::line(x + h)).is_err() {
                    err = Some(QuadratureError::Model(
                        crate::model::ModelError::SiteOutsideWindow(site.0, site.1),
                    ));
                    return;
                }
                let fp = f(&scratch);
                scratch
                    .set_spin(site, SpinPoint::line(x - h))
                    .expect("interior site");
                let fmm = f(&scratch);
                scratch
                    .set_spin(site, SpinPoint::line(x))
                    .expect("interior site");
                let g = (fp - fmm) / (2.0 * h);
                s_dir += w * g * g;
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if !(z > 0.0) || !z.is_finite() {
            return Err(QuadratureError::ZUnderflow);
        }
        let mean_f2 = s_f2 / z;
        Ok(TinyLatticeFunctionals {
            gibbs_mean: s_f / z,
            entropy_f2: s_f2_log / z - xlogx(mean_f2),
            dirichlet: s_dir / z,
        })
    }

    /// Tabulate an arbitrary configuration function on the full product grid.
    pub fn tabulate<F>(&self, f: F) -> LatticeFn
    where
        F: Fn(&SpinConfig) -> f64,
    {
        let mut scratch = SpinConfig::identity(&self.params);
        let mut table = Vec::with_capacity(self.m().pow(self.site_count() as u32));
        self.for_each_assignment(|a| {
            self.config_for(a, &mut scratch);
            table.push(f(&scratch));
        });
        LatticeFn {
            deps: (0..self.site_count()).collect(),
            table,
        }
    }

    fn project(&self, f: &LatticeFn, assign: &[usize]) -> f64 {
        let m = self.m();
        let mut idx = 0usize;
        for &d in &f.deps {
            idx = idx * m + assign[d];
        }
        f.table[idx]
    }

    /// Mean of a tabulated function under the finite-volume Gibbs measure.
    pub fn gibbs_mean_fn(&self, f: &LatticeFn) -> Result<f64, QuadratureError> {
        let mut e_min = f64::INFINITY;
        self.for_each_assignment(|a| {
            let e = self.total_energy(a);
            if e < e_min {
                e_min = e;
            }
        });
        let mut z = 0.0;
        let mut s = 0.0;
        self.for_each_assignment(|a| {
            let mut w = (-(self.total_energy(a) - e_min)).exp();
            for &v in a {
                w *= self.weights[v];
            }
            z += w;
            s += w * self.project(f, a);
        });
        if !(z > 0.0) || !z.is_finite() {
            return Err(QuadratureError::ZUnderflow);
        }
        Ok(s / z)
    }

    /// Conditional energy of site `i` at node `v` given the assignment of
    /// its interior neighbours.
    fn site_conditional_energy(&self, i: usize, v: usize, assign: &[usize]) -> f64 {
        let m = self.m();
        let mut acc = self.site_base_energy[i][v];
        for &(a, b) in &self.edges {
            if a == i {
                acc += self.params.delta * self.pair_energy[v * m + assign[b]];
            } else if b == i {
                acc += self.params.delta * self.pair_energy[assign[a] * m + v];
            }
        }
        acc
    }

    /// `E^{Gamma_k} f`: integrate out the sites of parity `k`. The result
    /// depends on the opposite-parity sites.
    pub fn conditional_parity(&self, f: &LatticeFn, parity: u8) -> Result<LatticeFn, QuadratureError> {
        let inner = self.parity_site_indices(parity);
        self.conditional_over(f, &inner)
    }

    /// `E^{i} f` for a single site.
    pub fn conditional_site(&self, f: &LatticeFn, site_idx: usize) -> Result<LatticeFn, QuadratureError> {
        self.conditional_over(f, &[site_idx])
    }

    /// Integrate out `inner` (mutually non-adjacent site indices) against
    /// their conditional weights given the remaining sites.
    fn conditional_over(&self, f: &LatticeFn, inner: &[usize]) -> Result<LatticeFn, QuadratureError> {
        for (a_pos, &a) in inner.iter().enumerate() {
            for &b in &inner[a_pos + 1..] {
                let adjacent = self
                    .edges
                    .iter()
                    .any(|&(i, j)| (i == a && j == b) || (i == b && j == a));
                if adjacent {
                    return Err(QuadratureError::TailCheckFailed(
                        "conditional block contains adjacent sites".to_string(),
                    ));
                }
            }
        }
        let outer: Vec<usize> = (0..self.site_count())
            .filter(|i| !inner.contains(i))
            .collect();
        let m = self.m();
        let mut table = vec![0.0; m.pow(outer.len() as u32)];

        // odometer over outer assignments
        let mut assign = vec![0usize; self.site_count()];
        let mut outer_vals = vec![0usize; outer.len()];
        let mut out_idx = 0usize;
        loop {
            for (pos, &site) in outer.iter().enumerate() {
                assign[site] = outer_vals[pos];
            }
            // factorized conditional weights per inner site, shifted per site
            let mut factors: Vec<Vec<f64>> = Vec::with_capacity(inner.len());
            for &i in inner {
                let mut energies = Vec::with_capacity(m);
                let mut emin = f64::INFINITY;
                for v in 0..m {
                    let e = self.site_conditional_energy(i, v, &assign);
                    emin = emin.min(e);
                    energies.push(e);
                }
                let row: Vec<f64> = energies
                    .iter()
                    .enumerate()
                    .map(|(v, &e)| self.weights[v] * (-(e - emin)).exp())
                    .collect();
                factors.push(row);
            }
            // integrate f over the inner block
            let mut z = 0.0;
            let mut s = 0.0;
            let mut inner_vals = vec![0usize; inner.len()];
            'inner: loop {
                let mut w = 1.0;
                for (pos, &site) in inner.iter().enumerate() {
                    assign[site] = inner_vals[pos];
                    w *= factors[pos][inner_vals[pos]];
                }
                z += w;
                s += w * self.project(f, &assign);
                let mut k = inner.len();
                loop {
                    if k == 0 {
                        break 'inner;
                    }
                    k -= 1;
                    inner_vals[k] += 1;
                    if inner_vals[k] < m {
                        break;
                    }
                    inner_vals[k] = 0;
                }
            }
            if !(z > 0.0) || !z.is_finite() {
                return Err(QuadratureError::ZUnderflow);
            }
            table[out_idx] = s / z;

            out_idx += 1;
            let mut k = outer.len();
            loop {
                if k == 0 {
                    return Ok(LatticeFn {
                        deps: outer,
                        table,
                    });
                }
                k -= 1;
                outer_vals[k] += 1;
                if outer_vals[k] < m {
                    break;
                }
                outer_vals[k] = 0;
            }
        }
    }

    /// `Ent_{E^{Gamma_k}}(f) = E[f log f] - lambda(E f)` as a function of the
    /// opposite-parity sites. Requires `f > 0`.
    pub fn entropy_parity(&self, f: &LatticeFn, parity: u8) -> Result<LatticeFn, QuadratureError> {
        let lam = f.map(xlogx);
        let a = self.conditional_parity(&lam, parity)?;
        let b = self.conditional_parity(f, parity)?;
        Ok(LatticeFn {
            deps: a.deps.clone(),
            table: a
                .table
                .iter()
                .zip(&b.table)
                .map(|(&elam, &ef)| elam - xlogx(ef))
                .collect(),
        })
    }

    /// Pointwise combination of two tabulated functions; the result depends
    /// on the union of their dependencies.
    pub fn combine<Op>(&self, a: &LatticeFn, b: &LatticeFn, op: Op) -> LatticeFn
    where
        Op: Fn(f64, f64) -> f64,
    {
        let mut deps: Vec<usize> = a.deps.iter().chain(b.deps.iter()).cloned().collect();
        deps.sort_unstable();
        deps.dedup();
        let m = self.m();
        let mut table = Vec::with_capacity(m.pow(deps.len() as u32));
        let mut vals = vec![0usize; deps.len()];
        let mut assign = vec![0usize; self.site_count()];
        loop {
            for (pos, &site) in deps.iter().enumerate() {
                assign[site] = vals[pos];
            }
            table.push(op(self.project(a, &assign), self.project(b, &assign)));
            let mut k = deps.len();
            loop {
                if k == 0 {
                    return LatticeFn { deps, table };
                }
                k -= 1;
                vals[k] += 1;
                if vals[k] < m {
                    break;
                }
                vals[k] = 0;
            }
        }
    }

    pub fn max_abs_diff(&self, a: &LatticeFn, b: &LatticeFn) -> f64 {
        let d = self.combine(a, b, |x, y| (x - y).abs());
        d.table.iter().cloned().fold(0.0, f64::max)
    }
}

impl LatticeFn {
    pub fn map(&self, f: impl Fn(f64) -> f64) -> LatticeFn {
        LatticeFn {
            deps: self.deps.clone(),
            table: self.table.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.table.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn constant(value: f64) -> LatticeFn {
        LatticeFn {
            deps: Vec::new(),
            table: vec![value],
        }
    }
}

/// Functionals of `f` under the finite-volume Gibbs measure of a tiny line
/// window (at most four sites).
pub fn tiny_lattice_functionals<F>(
    f: F,
    params: &ModelParams,
    grid: &GridSpec,
) -> Result<TinyLatticeFunctionals, QuadratureError>
where
    F: Fn(&SpinConfig) -> f64,
{
    TinyLattice::new(params, grid)?.gibbs_functionals(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatticeSpec;
    use crate::quadrature::{site_functionals, SiteMeasureSpec};
    use approx::assert_relative_eq;

    fn grid(m: usize, params: &ModelParams) -> GridSpec {
        GridSpec::for_model(params).with_points(m)
    }

    fn bump(x: f64, a: f64, w: f64) -> f64 {
        let t = (x.abs() - a) / w;
        if t.abs() < 1.0 {
            (1.0 - 1.0 / (1.0 - t * t)).exp()
        } else {
            0.0
        }
    }

    #[test]
    fn rejects_large_or_non_line_windows() {
        let p = ModelParams::new(SpinSpace::Line, 4, 3, 0.0, LatticeSpec::new(3, 2));
        assert!(TinyLattice::new(&p, &grid(32, &p)).is_err());
        let p = ModelParams::new(SpinSpace::Heisenberg1, 4, 3, 0.0, LatticeSpec::new(1, 1));
        assert!(TinyLattice::new(&p, &grid(32, &p)).is_err());
    }

    #[test]
    fn product_measure_factorizes() {
        // delta = 0: the Gibbs mean of a product of per-site functions is the
        // product of the one-site means
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.0, LatticeSpec::new(2, 2));
        let g = grid(32, &params);
        let f = |c: &SpinConfig| {
            c.interior_sites()
                .map(|s| 1.0 + 0.5 * bump(c.spin(s).coords()[0], 0.8, 0.6))
                .product::<f64>()
        };
        let out = tiny_lattice_functionals(f, &params, &g).unwrap();
        let one = site_functionals(
            |p| 1.0 + 0.5 * bump(p.coords()[0], 0.8, 0.6),
            &SiteMeasureSpec::free(&params),
            &g,
        )
        .unwrap();
        assert_relative_eq!(out.gibbs_mean, one.mean.powi(4), max_relative = 1e-8);
    }

    #[test]
    fn constant_function_has_zero_entropy() {
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.1, LatticeSpec::new(2, 2));
        let out = tiny_lattice_functionals(|_| 2.0, &params, &grid(24, &params)).unwrap();
        assert_relative_eq!(out.gibbs_mean, 2.0, epsilon = 1e-12);
        assert!(out.entropy_f2.abs() < 1e-10);
        assert!(out.dirichlet.abs() < 1e-12);
    }

    #[test]
    fn odd_observable_vanishes_by_symmetry() {
        // H is even under global sign flip on the line with identity boundary
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.1, LatticeSpec::new(2, 1));
        let out =
            tiny_lattice_functionals(|c| c.spin((0, 0)).coords()[0], &params, &grid(32, &params))
                .unwrap();
        assert!(out.gibbs_mean.abs() < 1e-10, "mean = {}", out.gibbs_mean);
    }

    #[test]
    fn dlr_one_step_is_exact_on_the_grid() {
        // gibbs_mean(E^i f) = gibbs_mean(f) holds exactly for the discrete
        // measure defined by the quadrature weights
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.1, LatticeSpec::new(2, 2));
        let lat = TinyLattice::new(&params, &grid(24, &params)).unwrap();
        let f = lat.tabulate(|c| {
            let a = c.spin((0, 0)).coords()[0];
            let b = c.spin((1, 0)).coords()[0];
            (1.0 + 0.3 * bump(a, 0.6, 0.5)) * (1.0 + 0.2 * b * bump(b, 0.9, 0.7))
        });
        let mean_f = lat.gibbs_mean_fn(&f).unwrap();
        for i in 0..lat.site_count() {
            let ef = lat.conditional_site(&f, i).unwrap();
            let mean_ef = lat.gibbs_mean_fn(&ef).unwrap();
            assert_relative_eq!(mean_ef, mean_f, max_relative = 1e-12);
        }
    }

    #[test]
    fn parity_conditional_leaves_opposite_parity_functions() {
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.1, LatticeSpec::new(2, 2));
        let lat = TinyLattice::new(&params, &grid(24, &params)).unwrap();
        // function of parity-1 sites only
        let f = lat.tabulate(|c| {
            let v = c.spin((1, 0)).coords()[0];
            1.0 + bump(v, 0.5, 0.4)
        });
        let ef = lat.conditional_parity(&f, 0).unwrap();
        // integrating out parity 0 must not change a parity-1 function
        let diff = lat.max_abs_diff(&f, &ef);
        assert!(diff < 1e-12, "E^(0) moved a parity-1 function by {diff}");
    }

    #[test]
    fn parity_classes_are_not_adjacent() {
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.1, LatticeSpec::new(2, 2));
        let lat = TinyLattice::new(&params, &grid(24, &params)).unwrap();
        let f = lat.tabulate(|c| c.spin((0, 0)).coords()[0].powi(2));
        // integrating out two adjacent sites through the factorized path is
        // rejected
        assert!(lat.conditional_over(&f, &[0, 1]).is_err());
        assert!(lat.conditional_parity(&f, 0).is_ok());
    }

    #[test]
    fn entropy_of_positive_constant_vanishes() {
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.1, LatticeSpec::new(2, 2));
        let lat = TinyLattice::new(&params, &grid(24, &params)).unwrap();
        let f = lat.tabulate(|_| 1.7);
        let ent = lat.entropy_parity(&f, 0).unwrap();
        for &v in &ent.table {
            assert!(v.abs() < 1e-12);
        }
    }
}
