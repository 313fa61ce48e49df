//! Sweeping-out contractions: how much of a function's gradient leaks into
//! a neighbouring coordinate after one conditional integration, plain and
//! square-root composite, at single-edge and checkerboard-block level.
//!
//! The reference measure is the exact finite-volume Gibbs measure of a tiny
//! line window: a two-site window for the edge inequalities and the 2x2
//! window for the block inequalities. Conditional expectations are evaluated
//! directly at perturbed coordinates, so the outer gradients differentiate
//! both the integrand and the conditional density.

use super::{fit_two_sided, Constraint, FitError};
use crate::geometry::SpinSpace;
use crate::model::{LatticeSpec, ModelParams, Site, SpinConfig};
use crate::quadrature::GridSpec;
use crate::report::{FitReport, RatioRow};
use crate::testfn::TestFn;
use std::cell::RefCell;

/// Evaluate a test function at explicit site values through a scratch
/// window.
struct ValueFn<'a> {
    f: &'a TestFn,
    sites: Vec<Site>,
    scratch: RefCell<SpinConfig>,
}

impl<'a> ValueFn<'a> {
    fn new(f: &'a TestFn, params: &ModelParams) -> Self {
        let cfg = SpinConfig::identity(params);
        ValueFn {
            f,
            sites: cfg.interior_sites().collect(),
            scratch: RefCell::new(cfg),
        }
    }

    fn eval(&self, vals: &[f64]) -> f64 {
        let mut cfg = self.scratch.borrow_mut();
        for (k, &v) in vals.iter().enumerate() {
            cfg.set_spin(self.sites[k], crate::geometry::SpinPoint::line(v))
                .expect("interior site");
        }
        self.f.evaluate(&cfg)
    }
}

/// Shared grid data for a tiny line window: nodes, per-site base energies
/// (phase + boundary edges) as functions of a continuous spin value, and
/// interior adjacency.
struct WindowOracle {
    params: ModelParams,
    sites: Vec<Site>,
    /// interior neighbour indices per site
    nbrs: Vec<Vec<usize>>,
    /// boundary edge count per site
    boundary_edges: Vec<usize>,
    boundary_d: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    shift: std::cell::OnceCell<f64>,
}

impl WindowOracle {
    fn new(params: &ModelParams, grid: &GridSpec) -> Result<Self, FitError> {
        if params.spin_space != SpinSpace::Line {
            return Err(FitError::Precondition(
                "sweep fits run on the line backend (cost guard)".to_string(),
            ));
        }
        grid.validate(params.spin_space)?;
        let (nodes, weights) = grid.axis_grid(0);
        let cfg = SpinConfig::identity(params);
        let sites: Vec<Site> = cfg.interior_sites().collect();
        let mut nbrs = Vec::with_capacity(sites.len());
        let mut boundary_edges = Vec::with_capacity(sites.len());
        for &s in &sites {
            let mut inner = Vec::new();
            let mut outer = 0usize;
            for n in crate::model::neighbors(s) {
                if cfg.is_interior(n) {
                    inner.push(sites.iter().position(|&t| t == n).unwrap());
                } else {
                    outer += 1;
                }
            }
            nbrs.push(inner);
            boundary_edges.push(outer);
        }
        let boundary_d = params
            .spin_space
            .metric_d(&params.lattice.boundary.resolve(params.spin_space))
            .expect("boundary point");
        Ok(WindowOracle {
            params: params.clone(),
            sites,
            nbrs,
            boundary_edges,
            boundary_d,
            nodes,
            weights,
            shift: std::cell::OnceCell::new(),
        })
    }

    /// One-site conditional energy at site `i` with spin value `v`, the
    /// other sites held at `vals`.
    fn cond_energy(&self, i: usize, v: f64, vals: &[f64]) -> f64 {
        let d = v.abs();
        let mut acc = d.powi(self.params.p as i32)
            + self.params.delta
                * self.boundary_edges[i] as f64
                * crate::model::interaction_from_dist(d, self.boundary_d, self.params.r);
        for &j in &self.nbrs[i] {
            acc += self.params.delta
                * crate::model::interaction_from_dist(d, vals[j].abs(), self.params.r);
        }
        acc
    }

    /// Conditionally integrate `g(v_block..)` over the mutually non-adjacent
    /// sites `block`, the rest frozen at `vals`. `g` receives the full value
    /// vector.
    fn cond_block<G: Fn(&[f64]) -> f64>(&self, block: &[usize], vals: &[f64], g: G) -> f64 {
        let m = self.nodes.len();
        // factorized weights per block site
        let factors: Vec<Vec<f64>> = block
            .iter()
            .map(|&i| {
                let mut e = Vec::with_capacity(m);
                let mut emin = f64::INFINITY;
                for &x in &self.nodes {
                    let en = self.cond_energy(i, x, vals);
                    emin = emin.min(en);
                    e.push(en);
                }
                e.iter()
                    .enumerate()
                    .map(|(v, &en)| self.weights[v] * (-(en - emin)).exp())
                    .collect()
            })
            .collect();
        let mut work = vals.to_vec();
        let mut z = 0.0;
        let mut s = 0.0;
        let mut idx = vec![0usize; block.len()];
        'outer: loop {
            let mut w = 1.0;
            for (pos, &i) in block.iter().enumerate() {
                work[i] = self.nodes[idx[pos]];
                w *= factors[pos][idx[pos]];
            }
            z += w;
            s += w * g(&work);
            let mut k = block.len();
            loop {
                if k == 0 {
                    break 'outer;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < m {
                    break;
                }
                idx[k] = 0;
            }
        }
        s / z
    }

    fn total_energy(&self, vals: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, &v) in vals.iter().enumerate() {
            let d = v.abs();
            acc += d.powi(self.params.p as i32)
                + self.params.delta
                    * self.boundary_edges[i] as f64
                    * crate::model::interaction_from_dist(d, self.boundary_d, self.params.r);
            for &j in &self.nbrs[i] {
                if j > i {
                    acc += self.params.delta
                        * crate::model::interaction_from_dist(d, vals[j].abs(), self.params.r);
                }
            }
        }
        acc
    }

    fn for_each_node(&self, mut body: impl FnMut(&[f64], &[usize], f64)) {
        let n = self.sites.len();
        let m = self.nodes.len();
        let mut idx = vec![0usize; n];
        let mut vals = vec![0.0; n];
        loop {
            let mut w = 1.0;
            for (k, &v) in idx.iter().enumerate() {
                vals[k] = self.nodes[v];
                w *= self.weights[v];
            }
            body(&vals, &idx, w);
            let mut k = n;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < m {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    fn energy_shift(&self) -> f64 {
        *self.shift.get_or_init(|| {
            let mut e_min = f64::INFINITY;
            self.for_each_node(|vals, _, _| {
                let e = self.total_energy(vals);
                if e < e_min {
                    e_min = e;
                }
            });
            e_min
        })
    }

    /// Gibbs expectation of `g` over the whole window.
    fn gibbs<G: Fn(&[f64]) -> f64>(&self, g: G) -> f64 {
        let e_min = self.energy_shift();
        let mut z = 0.0;
        let mut s = 0.0;
        self.for_each_node(|vals, _, quad_w| {
            let w = quad_w * (-(self.total_energy(vals) - e_min)).exp();
            z += w;
            s += w * g(vals);
        });
        s / z
    }

    /// Probability masses of the joint marginal on the coordinates in
    /// `keep`, tabulated over their node tuples (row-major in `keep` order).
    fn marginal(&self, keep: &[usize]) -> Vec<f64> {
        let m = self.nodes.len();
        let e_min = self.energy_shift();
        let mut table = vec![0.0; m.pow(keep.len() as u32)];
        let mut z = 0.0;
        self.for_each_node(|vals, idx, quad_w| {
            let w = quad_w * (-(self.total_energy(vals) - e_min)).exp();
            z += w;
            let mut flat = 0usize;
            for &k in keep {
                flat = flat * m + idx[k];
            }
            table[flat] += w;
        });
        for t in table.iter_mut() {
            *t /= z;
        }
        table
    }

    fn fd_step(v: f64) -> f64 {
        1e-4 * (1.0 + v.abs())
    }

    /// `nu |grad_{sites in block} g|^2` where `g` sees the full value vector.
    fn gibbs_grad_sq<G: Fn(&[f64]) -> f64>(&self, block: &[usize], g: G) -> f64 {
        self.gibbs(|vals| {
            let mut work = vals.to_vec();
            let mut acc = 0.0;
            for &i in block {
                let h = Self::fd_step(vals[i]);
                work[i] = vals[i] + h;
                let fp = g(&work);
                work[i] = vals[i] - h;
                let fm = g(&work);
                work[i] = vals[i];
                let gr = (fp - fm) / (2.0 * h);
                acc += gr * gr;
            }
            acc
        })
    }

    /// `nu |grad_out g|^2` for a `g` that depends only on the coordinates in
    /// `out`: integrates the finite differences against the `out` marginal
    /// instead of the full joint, which removes an `m^block` factor.
    fn marginal_grad_sq<G: Fn(&[f64]) -> f64>(&self, out: &[usize], marg: &[f64], g: G) -> f64 {
        let m = self.nodes.len();
        let n = self.sites.len();
        let mut idx = vec![0usize; out.len()];
        let mut vals = vec![0.0; n];
        let mut acc = 0.0;
        let mut flat = 0usize;
        loop {
            for (pos, &site) in out.iter().enumerate() {
                vals[site] = self.nodes[idx[pos]];
            }
            let w = marg[flat];
            if w > 0.0 {
                let mut grad_sq = 0.0;
                let mut work = vals.clone();
                for &i in out {
                    let h = Self::fd_step(vals[i]);
                    work[i] = vals[i] + h;
                    let fp = g(&work);
                    work[i] = vals[i] - h;
                    let fm = g(&work);
                    work[i] = vals[i];
                    let gr = (fp - fm) / (2.0 * h);
                    grad_sq += gr * gr;
                }
                acc += w * grad_sq;
            }
            flat += 1;
            let mut k = out.len();
            loop {
                if k == 0 {
                    return acc;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < m {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

/// Constraints for `nu |grad_out (E^block f)|^2 <= c1 nu |grad_out f|^2
/// + c2 nu |grad_block f|^2` over the family, optionally with the
/// square-root composite `sqrt(E^block f^2)` in place of `E^block f`.
fn sweep_constraints(
    oracle: &WindowOracle,
    family: &[TestFn],
    block: &[usize],
    out: &[usize],
    sqrt_composite: bool,
) -> Vec<Constraint> {
    // the conditional composite depends on the out coordinates only, so its
    // gradient integrates against the out marginal
    let out_marginal = oracle.marginal(out);
    let mut rows = Vec::new();
    for f in family {
        let vf = ValueFn::new(f, &oracle.params);
        let composite = |vals: &[f64]| {
            if sqrt_composite {
                oracle
                    .cond_block(block, vals, |v| {
                        let x = vf.eval(v);
                        x * x
                    })
                    .max(0.0)
                    .sqrt()
            } else {
                oracle.cond_block(block, vals, |v| vf.eval(v))
            }
        };
        let lhs = oracle.marginal_grad_sq(out, &out_marginal, composite);
        let a = oracle.gibbs_grad_sq(out, |v| vf.eval(v));
        let b = oracle.gibbs_grad_sq(block, |v| vf.eval(v));
        rows.push(Constraint {
            name: f.descriptor(),
            lhs,
            a,
            b,
            lhs_stderr: 0.0,
        });
    }
    rows
}

fn report_from(
    id: &str,
    edge_names: (&str, &str),
    block_names: (&str, &str),
    edge: super::TwoSidedFit,
    block: super::TwoSidedFit,
    edge_rows: Vec<Constraint>,
    block_rows: Vec<Constraint>,
    criterion: String,
) -> FitReport {
    let mut rows = Vec::new();
    for (scope, set, fit) in [("edge", &edge_rows, edge), ("block", &block_rows, block)] {
        for c in set {
            let rhs = fit.primary * c.a + fit.secondary * c.b;
            rows.push(RatioRow {
                function: format!("{scope} | {}", c.name),
                lhs: c.lhs,
                rhs,
                ratio: if rhs > 0.0 { c.lhs / rhs } else { 0.0 },
                stderr: c.lhs_stderr,
            });
        }
    }
    let pass = edge.secondary < 1.0 && block.secondary < 1.0;
    FitReport {
        inequality: id.to_string(),
        constants: vec![
            (edge_names.0.to_string(), edge.primary),
            (edge_names.1.to_string(), edge.secondary),
            (block_names.0.to_string(), block.primary),
            (block_names.1.to_string(), block.secondary),
        ],
        rows,
        verdict: FitReport::verdict_from(pass, &[]),
        criterion,
        notes: vec![
            "primary coefficient pinned on the sub-family free of the secondary direction"
                .to_string(),
        ],
    }
}

fn two_site_params(params: &ModelParams) -> ModelParams {
    let mut p = params.clone();
    p.lattice = LatticeSpec {
        width: 2,
        height: 1,
        boundary: params.lattice.boundary.clone(),
    };
    p
}

fn quad_params(params: &ModelParams) -> ModelParams {
    let mut p = params.clone();
    p.lattice = LatticeSpec {
        width: 2,
        height: 2,
        boundary: params.lattice.boundary.clone(),
    };
    p
}

fn block_family(params: &ModelParams) -> Vec<TestFn> {
    // members on Gamma_1 = {(1,0),(0,1)} alone, Gamma_0 = {(0,0),(1,1)}
    // alone, and mixed products
    let g0 = [(0, 0), (1, 1)];
    let g1 = [(1, 0), (0, 1)];
    let _ = params;
    let mut fam = Vec::new();
    for &(a, w) in crate::testfn::BUMP_GRID.iter().take(3) {
        for s in g1 {
            fam.push(TestFn::bump(s, a, w));
        }
        for s in g0 {
            fam.push(TestFn::bump(s, a, w));
        }
    }
    fam.push(TestFn::coord_bump(g1[0], 0, 0.8, 0.6));
    fam.push(TestFn::coord_bump(g0[0], 0, 0.8, 0.6));
    fam.push(TestFn::Product(vec![
        TestFn::bump(g0[0], 0.8, 0.5).shifted(0.5),
        TestFn::bump(g1[0], 1.0, 0.7).shifted(0.5),
    ]));
    fam.push(TestFn::Product(vec![
        TestFn::bump(g0[1], 0.9, 0.6).shifted(0.5),
        TestFn::bump(g1[1], 0.7, 0.5).shifted(0.5),
    ]));
    fam
}

/// Gradient leakage of one conditional integration (edge level) and of one
/// parity-block integration (block level). The secondary coefficients must
/// stay below one for the alternating dynamics to contract.
pub fn fit_sweep_contraction(
    family: &[TestFn],
    params: &ModelParams,
    grid: &GridSpec,
) -> Result<FitReport, FitError> {
    // edge level on the 2x1 window: block = {site i}, out = {site j}
    let pair = two_site_params(params);
    let pair_oracle = WindowOracle::new(&pair, grid)?;
    let edge_rows = sweep_constraints(&pair_oracle, family, &[0], &[1], false);
    let edge = fit_two_sided(&edge_rows)?;

    // block level on the 2x2 window: block = Gamma_0, out = Gamma_1
    let quad = quad_params(params);
    let quad_oracle = WindowOracle::new(&quad, grid)?;
    let bfam = block_family(&quad);
    let cfgq = SpinConfig::identity(&quad);
    let sitesq: Vec<Site> = cfgq.interior_sites().collect();
    let g0: Vec<usize> = sitesq
        .iter()
        .enumerate()
        .filter(|(_, s)| crate::model::site_parity(**s) == 0)
        .map(|(i, _)| i)
        .collect();
    let g1: Vec<usize> = sitesq
        .iter()
        .enumerate()
        .filter(|(_, s)| crate::model::site_parity(**s) == 1)
        .map(|(i, _)| i)
        .collect();
    let block_rows = sweep_constraints(&quad_oracle, &bfam, &g0, &g1, false);
    let block = fit_two_sided(&block_rows)?;

    Ok(report_from(
        "sweep-contraction",
        ("D1", "D2"),
        ("R1", "R2"),
        edge,
        block,
        edge_rows,
        block_rows,
        "nu|grad_j E^i f|^2 <= D1 nu|grad_j f|^2 + D2 nu|grad_i f|^2 with D2 < 1; \
         block version with (R1, R2), R2 < 1"
            .to_string(),
    ))
}

/// Same leakage fit for the square-root composite `sqrt(E f^2)`.
pub fn fit_sqrt_sweep(
    family: &[TestFn],
    params: &ModelParams,
    grid: &GridSpec,
) -> Result<FitReport, FitError> {
    let pair = two_site_params(params);
    let pair_oracle = WindowOracle::new(&pair, grid)?;
    // edge level: integrate site j, differentiate site i
    let edge_rows = sweep_constraints(&pair_oracle, family, &[1], &[0], true);
    let edge = fit_two_sided(&edge_rows)?;

    let quad = quad_params(params);
    let quad_oracle = WindowOracle::new(&quad, grid)?;
    let bfam = block_family(&quad);
    let cfgq = SpinConfig::identity(&quad);
    let sitesq: Vec<Site> = cfgq.interior_sites().collect();
    let g0: Vec<usize> = sitesq
        .iter()
        .enumerate()
        .filter(|(_, s)| crate::model::site_parity(**s) == 0)
        .map(|(i, _)| i)
        .collect();
    let g1: Vec<usize> = sitesq
        .iter()
        .enumerate()
        .filter(|(_, s)| crate::model::site_parity(**s) == 1)
        .map(|(i, _)| i)
        .collect();
    let block_rows = sweep_constraints(&quad_oracle, &bfam, &g0, &g1, true);
    let block = fit_two_sided(&block_rows)?;

    Ok(report_from(
        "sqrt-sweep",
        ("G1", "G2"),
        ("C1", "C2"),
        edge,
        block,
        edge_rows,
        block_rows,
        "nu|grad_i sqrt(E^j f^2)|^2 <= G1 nu|grad_i f|^2 + G2 nu|grad_j f|^2 with G2 < 1; \
         block version with (C1, C2), C2 < 1"
            .to_string(),
    ))
}
