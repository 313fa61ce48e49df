//! Coercive bound for the one-site measure: the smallest constant with
//! `E[d^r f^2] <= C0 (E|grad f|^2 + E f^2)` across the family, fitted in
//! both the `d^r` and the full-Hamiltonian form.

use super::FitError;
use crate::quadrature::{build_nodes, GridSpec, SiteMeasureSpec};
use crate::report::{FitReport, RatioRow};
use crate::testfn::TestFn;

pub fn fit_ubound(
    family: &[TestFn],
    spec: &SiteMeasureSpec,
    grid: &GridSpec,
) -> Result<FitReport, FitError> {
    let params = &spec.params;
    if params.r > params.p {
        return Err(FitError::Precondition(format!(
            "coercive bound requires r <= p, got r = {} > p = {}",
            params.r, params.p
        )));
    }
    let space = params.spin_space;
    let nodes = build_nodes(space, grid)?;
    let energies: Vec<f64> = nodes.dists.iter().map(|&d| spec.energy_of_dist(d)).collect();
    let e_min = energies.iter().cloned().fold(f64::INFINITY, f64::min);

    let mut rows = Vec::new();
    let mut c0 = 0.0_f64;
    let mut c0_h = 0.0_f64;
    let mut any_mass = false;
    for f in family {
        let eval = |p: &crate::geometry::SpinPoint| f.evaluate_point(space, p);
        let mut z = 0.0;
        let mut s_drf2 = 0.0;
        let mut s_hf2 = 0.0;
        let mut s_f2 = 0.0;
        let mut s_dir = 0.0;
        for (idx, p) in nodes.points.iter().enumerate() {
            let w = nodes.weights[idx] * (-(energies[idx] - e_min)).exp();
            if w == 0.0 {
                continue;
            }
            let v = eval(p);
            let d = nodes.dists[idx];
            z += w;
            s_f2 += w * v * v;
            s_drf2 += w * d.powi(params.r as i32) * v * v;
            s_hf2 += w * energies[idx] * v * v;
            let h = 1e-4 * (1.0 + d);
            let g = space.horizontal_grad(&eval, p, h).map_err(crate::quadrature::QuadratureError::from)?;
            s_dir += w * g.norm_sq();
        }
        if !(z > 0.0) {
            return Err(FitError::Quadrature(
                crate::quadrature::QuadratureError::ZUnderflow,
            ));
        }
        let lhs = s_drf2 / z;
        let lhs_h = s_hf2 / z;
        let rhs = s_dir / z + s_f2 / z;
        if lhs > 1e-14 {
            any_mass = true;
        }
        if rhs > 1e-14 {
            c0 = c0.max(lhs / rhs);
            c0_h = c0_h.max(lhs_h / rhs);
            rows.push(RatioRow {
                function: f.descriptor(),
                lhs,
                rhs,
                ratio: lhs / rhs,
                stderr: 0.0,
            });
        }
    }
    if !any_mass {
        return Err(FitError::DegenerateFamily(
            "every member has vanishing weighted mass of d^r f^2".to_string(),
        ));
    }
    let pass = c0.is_finite() && c0 > 0.0 && c0_h.is_finite();
    Ok(FitReport {
        inequality: "ubound".to_string(),
        constants: vec![("C0".to_string(), c0), ("C0_H".to_string(), c0_h)],
        rows,
        verdict: FitReport::verdict_from(pass, &[]),
        criterion: "finite C0 with E[d^r f^2] <= C0 (E|grad f|^2 + E f^2) across the family; \
                    C0_H is the same fit with H in place of d^r"
            .to_string(),
        notes: Vec::new(),
    })
}
