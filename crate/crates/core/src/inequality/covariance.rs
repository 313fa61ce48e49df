//! The covariance inequality used by the square-root sweeping bound:
//! `cov(f^2, g)^2 <= 8 E[f^2] E[(f - Ef)^2 (g^2 + E[g^2])]`.

use super::FitError;
use crate::quadrature::{build_nodes, GridSpec, SiteMeasureSpec};
use crate::report::{FitReport, RatioRow};
use crate::testfn::TestFn;

pub fn check_covariance_lemma(
    f: &TestFn,
    g: &TestFn,
    spec: &SiteMeasureSpec,
    grid: &GridSpec,
) -> Result<FitReport, FitError> {
    let space = spec.params.spin_space;
    let nodes = build_nodes(space, grid)?;
    let energies: Vec<f64> = nodes.dists.iter().map(|&d| spec.energy_of_dist(d)).collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut z = 0.0;
    let mut s_f = 0.0;
    let mut s_f2 = 0.0;
    let mut s_g = 0.0;
    let mut s_g2 = 0.0;
    let mut s_f2g = 0.0;
    let vals: Vec<(f64, f64, f64)> = nodes
        .points
        .iter()
        .enumerate()
        .map(|(idx, p)| {
            let w = nodes.weights[idx] * (-(energies[idx] - e_min)).exp();
            (w, f.evaluate_point(space, p), g.evaluate_point(space, p))
        })
        .collect();
    for &(w, fv, gv) in &vals {
        z += w;
        s_f += w * fv;
        s_f2 += w * fv * fv;
        s_g += w * gv;
        s_g2 += w * gv * gv;
        s_f2g += w * fv * fv * gv;
    }
    if !(z > 0.0) {
        return Err(FitError::Quadrature(
            crate::quadrature::QuadratureError::ZUnderflow,
        ));
    }
    let (m_f, m_f2, m_g, m_g2, m_f2g) = (s_f / z, s_f2 / z, s_g / z, s_g2 / z, s_f2g / z);
    let lhs = (m_f2g - m_f2 * m_g).powi(2);
    // E[(f - Ef)^2 (g^2 + E g^2)]
    let mut s_mix = 0.0;
    for &(w, fv, gv) in &vals {
        s_mix += w * (fv - m_f).powi(2) * (gv * gv + m_g2);
    }
    let rhs = 8.0 * m_f2 * (s_mix / z);
    let pass = lhs <= rhs * (1.0 + 1e-9) + 1e-15;
    let rows = vec![RatioRow {
        function: format!("f={} ; g={}", f.descriptor(), g.descriptor()),
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { 0.0 },
        stderr: 0.0,
    }];
    Ok(FitReport {
        inequality: "covariance".to_string(),
        constants: vec![("slack".to_string(), rhs - lhs)],
        rows,
        verdict: FitReport::verdict_from(pass, &[]),
        criterion: "cov(f^2, g)^2 <= 8 E[f^2] E[(f-Ef)^2 (g^2 + E g^2)]".to_string(),
        notes: Vec::new(),
    })
}
