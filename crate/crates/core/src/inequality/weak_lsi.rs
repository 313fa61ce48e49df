//! Weak one-site entropy inequality: the average (over the window measure)
//! of the one-site entropy of `f^2` bounded by the gradient at the site plus
//! a strict sub-unit multiple of the neighbour gradients.
//!
//! Hybrid estimator: equilibrium configurations come from the checkerboard
//! sampler, the conditional one-site entropies at each configuration come
//! from deterministic quadrature.

use super::{fit_two_sided, Constraint, FitError};
use crate::dynamics::{sample_gibbs, ChainSpec};
use crate::estimators::batch_means_stderr;
use crate::model::{neighbors, site_energy, ModelParams, Site, SpinConfig};
use crate::quadrature::{build_nodes, xlogx, GridSpec};
use crate::report::{FitReport, RatioRow};
use crate::testfn::TestFn;

/// Entropy of `f^2` under the one-site conditional measure at `site`, the
/// other coordinates frozen from `cfg`.
pub fn one_site_entropy_f2(
    f: &TestFn,
    site: Site,
    cfg: &SpinConfig,
    params: &ModelParams,
    grid: &GridSpec,
) -> Result<f64, FitError> {
    let space = params.spin_space;
    let nodes = build_nodes(space, grid)?;
    let nd = cfg.neighbor_dists(site);
    let energies: Vec<f64> = nodes
        .dists
        .iter()
        .map(|&d| site_energy(d, &nd, params))
        .collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut s_f2 = 0.0;
    let mut s_f2l = 0.0;
    for (idx, p) in nodes.points.iter().enumerate() {
        let w = nodes.weights[idx] * (-(energies[idx] - e_min)).exp();
        if w == 0.0 {
            continue;
        }
        let v = f.evaluate_with(cfg, Some((site, p)));
        z += w;
        s_f2 += w * v * v;
        s_f2l += w * xlogx(v * v);
    }
    if !(z > 0.0) {
        return Err(FitError::Quadrature(
            crate::quadrature::QuadratureError::ZUnderflow,
        ));
    }
    Ok(s_f2l / z - xlogx(s_f2 / z))
}

/// Conditional expectation of the squared site gradient of `f` under the
/// one-site measure at `site`.
pub fn one_site_grad_sq(
    f: &TestFn,
    site: Site,
    cfg: &SpinConfig,
    params: &ModelParams,
    grid: &GridSpec,
) -> Result<f64, FitError> {
    let space = params.spin_space;
    let nodes = build_nodes(space, grid)?;
    let nd = cfg.neighbor_dists(site);
    let energies: Vec<f64> = nodes
        .dists
        .iter()
        .map(|&d| site_energy(d, &nd, params))
        .collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut scratch = cfg.clone();
    let mut z = 0.0;
    let mut s = 0.0;
    for (idx, p) in nodes.points.iter().enumerate() {
        let w = nodes.weights[idx] * (-(energies[idx] - e_min)).exp();
        if w == 0.0 {
            continue;
        }
        scratch.set_spin(site, *p)?;
        let h = 1e-4 * (1.0 + nodes.dists[idx]);
        z += w;
        s += w * f.site_gradient(&scratch, site, h).norm_sq();
    }
    if !(z > 0.0) {
        return Err(FitError::Quadrature(
            crate::quadrature::QuadratureError::ZUnderflow,
        ));
    }
    Ok(s / z)
}

/// Fit `(c1, c2)` in
/// `nu[Ent_i(f^2)] <= c1 nu|grad_i f|^2 + c2 sum_{j~i} nu|grad_j f|^2`:
/// `c1` from the members depending on the site alone, `c2` the smallest
/// coefficient covering the mixed members. Verdict passes when `c2 < 1`.
pub fn fit_weak_lsi(
    family: &[TestFn],
    site: Site,
    params: &ModelParams,
    chain: &ChainSpec,
    grid: &GridSpec,
) -> Result<FitReport, FitError> {
    let run = sample_gibbs(params, chain)?;
    if run.samples.is_empty() {
        return Err(FitError::Precondition("no equilibrium samples".to_string()));
    }
    let ns = neighbors(site);
    let mut constraints = Vec::with_capacity(family.len());
    for f in family {
        let mut ent = Vec::with_capacity(run.samples.len());
        let mut grad_i = Vec::with_capacity(run.samples.len());
        let mut grad_n = Vec::with_capacity(run.samples.len());
        let f_sites = f.sites();
        let touches_site = f_sites.contains(&site);
        for cfg in &run.samples {
            // entropy vanishes identically when f ignores the site
            let e = if touches_site {
                one_site_entropy_f2(f, site, cfg, params, grid)?
            } else {
                0.0
            };
            ent.push(e);
            let h = 1e-5;
            // conditionally integrated site gradient: the same tower-property
            // estimator as the entropy, so at zero coupling the two sides
            // cancel per sample instead of only in the large-sample limit
            let gi = if touches_site {
                one_site_grad_sq(f, site, cfg, params, grid)?
            } else {
                0.0
            };
            grad_i.push(gi);
            grad_n.push(
                ns.iter()
                    .map(|&j| f.site_gradient(cfg, j, h).norm_sq())
                    .sum::<f64>(),
            );
        }
        let n = ent.len() as f64;
        let lhs = ent.iter().sum::<f64>() / n;
        let a = grad_i.iter().sum::<f64>() / n;
        let b = grad_n.iter().sum::<f64>() / n;
        constraints.push(Constraint {
            name: f.descriptor(),
            lhs,
            a,
            b,
            lhs_stderr: batch_means_stderr(&ent, 24),
        });
    }
    let fit = fit_two_sided(&constraints)?;
    // noise of the secondary coefficient: the binding mixed constraint's
    // entropy stderr scaled by its neighbour-gradient mass
    let c2_stderr = constraints
        .iter()
        .filter(|c| c.b > 1e-12)
        .map(|c| (((c.lhs - fit.primary * c.a) / c.b).max(0.0), c.lhs_stderr / c.b))
        .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
        .map(|(_, se)| se)
        .unwrap_or(0.0);
    let rows: Vec<RatioRow> = constraints
        .iter()
        .map(|c| {
            let rhs = fit.primary * c.a + fit.secondary * c.b;
            RatioRow {
                function: c.name.clone(),
                lhs: c.lhs,
                rhs,
                ratio: if rhs > 1e-14 { c.lhs / rhs } else { 0.0 },
                stderr: if rhs > 1e-14 { c.lhs_stderr / rhs } else { 0.0 },
            }
        })
        .collect();
    let pass = fit.secondary < 1.0;
    let verdict = FitReport::verdict_from(pass, &rows);
    Ok(FitReport {
        inequality: "weak-lsi".to_string(),
        constants: vec![
            ("c1".to_string(), fit.primary),
            ("c2".to_string(), fit.secondary),
            ("c2_stderr".to_string(), c2_stderr),
        ],
        rows,
        verdict,
        criterion: "nu[Ent_i(f^2)] <= c1 nu|grad_i f|^2 + c2 sum_{j~i} nu|grad_j f|^2 \
                    with c2 < 1"
            .to_string(),
        notes: vec![format!("acceptance = {:.3}", run.acceptance.rate())],
    })
}
