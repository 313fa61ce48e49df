//! Numerical audit of the structural assumptions the model is expected to
//! satisfy: gradient alignment of phase and interactions with the metric
//! gradient, metric regularity, domination of the interactions by the phase,
//! and the group-theoretic conditions (subadditivity of the Hamiltonian
//! along the product, inversion invariance, monotonicity along radial
//! geodesics).
//!
//! Every check is a spot check on random sample points: failures are report
//! entries with the worst margin and a witnessing point, never errors. The
//! domination checks use the interaction in expanded form with the pure
//! boundary term dropped (it is constant in the site spin, so the
//! conditional measure and all gradients are unchanged), which is what makes
//! the distance-times-derivative lower bound hold down to the identity.

use crate::geometry::{SpinPoint, SpinSpace};
use crate::model::{binomial, site_energy, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct AuditEntry {
    pub id: String,
    pub pass: bool,
    /// Worst-case margin; positive means violation for bound-type checks.
    pub margin: f64,
    pub witness: Option<String>,
    pub fitted: Vec<(String, f64)>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub sample_points: usize,
    pub seed: u64,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, id: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Interaction with the pure boundary term dropped:
/// `sum_{k=0}^{r-1} C(r,k) t^{r-k} u^k = (t+u)^r - u^r`.
fn interaction_reduced(t: f64, u: f64, r: u32) -> f64 {
    (0..r)
        .map(|k| binomial(r, k) * t.powi((r - k) as i32) * u.powi(k as i32))
        .sum()
}

/// `d/dt` of the interaction (identical for the full and reduced forms).
fn interaction_deriv(t: f64, u: f64, r: u32) -> f64 {
    r as f64 * (t + u).powi(r as i32 - 1)
}

fn phase_deriv(t: f64, p: u32) -> f64 {
    p as f64 * t.powi(p as i32 - 1)
}

struct Sampler {
    rng: ChaCha8Rng,
    space: SpinSpace,
    scale: f64,
}

impl Sampler {
    fn point(&mut self) -> SpinPoint {
        match self.space {
            SpinSpace::Line => SpinPoint::line(self.rng.gen_range(-self.scale..self.scale)),
            SpinSpace::Heisenberg1 => SpinPoint::heisenberg(
                self.rng.gen_range(-self.scale..self.scale),
                self.rng.gen_range(-self.scale..self.scale),
                self.rng.gen_range(-self.scale..self.scale),
            ),
        }
    }

    /// A point usable for finite-difference checks: bounded away from the
    /// set where the metric is not smooth.
    fn smooth_point(&mut self) -> SpinPoint {
        loop {
            let p = self.point();
            let planar = match self.space {
                SpinSpace::Line => p.coords()[0].abs(),
                SpinSpace::Heisenberg1 => p.coords()[0].hypot(p.coords()[1]),
            };
            if planar > 0.15 {
                return p;
            }
        }
    }
}

/// Run every assumption check on `n_points` sampled points.
pub fn audit_assumptions(params: &ModelParams, n_points: usize, seed: u64) -> AuditReport {
    let space = params.spin_space;
    let mut sampler = Sampler {
        rng: ChaCha8Rng::seed_from_u64(seed ^ 0x6175_6469_74),
        space,
        scale: 2.2,
    };
    let mut entries = Vec::new();

    let d_of = |p: &SpinPoint| space.metric_d(p).expect("finite sample");

    // reusable samples
    let points: Vec<SpinPoint> = (0..n_points).map(|_| sampler.smooth_point()).collect();
    let omega_dists: Vec<f64> = (0..n_points)
        .map(|_| sampler.rng.gen_range(0.0..2.5))
        .collect();

    // (H2.1): grad(phase) = phi_1 * grad(d), phi_1 = p d^(p-1) >= 0
    {
        let mut worst = 0.0_f64;
        let mut witness = None;
        for x in &points {
            let d = d_of(x);
            let h = 1e-4 * (1.0 + d);
            let grad_phi = space
                .horizontal_grad(|q| d_of(q).powi(params.p as i32), x, h)
                .unwrap();
            let grad_d = space.horizontal_grad(|q| d_of(q), x, h).unwrap();
            let phi1 = phase_deriv(d, params.p);
            let scale = 1.0 + phi1 * (1.0 + grad_d.norm());
            let dev = grad_phi
                .components()
                .iter()
                .zip(grad_d.components())
                .map(|(a, b)| (a - phi1 * b).abs())
                .fold(0.0, f64::max)
                / scale;
            if dev > worst {
                worst = dev;
                witness = Some(format!("{:?}", x.coords()));
            }
        }
        entries.push(AuditEntry {
            id: "H2.1".into(),
            pass: worst < 5e-3,
            margin: worst,
            witness,
            fitted: vec![("phi1_form".into(), params.p as f64)],
            detail: "grad(phase) aligns with phi_1 grad(d), phi_1 = p d^(p-1)".into(),
        });
    }

    // (H2.2): grad(V_j) = U_j grad(d) with U_j = r (d + d(omega))^(r-1) >= 0
    {
        let mut worst = 0.0_f64;
        let mut witness = None;
        for (x, &u) in points.iter().zip(&omega_dists) {
            let d = d_of(x);
            let h = 1e-4 * (1.0 + d);
            let grad_v = space
                .horizontal_grad(|q| (d_of(q) + u).powi(params.r as i32), x, h)
                .unwrap();
            let grad_d = space.horizontal_grad(|q| d_of(q), x, h).unwrap();
            let uj = interaction_deriv(d, u, params.r);
            let scale = 1.0 + uj * (1.0 + grad_d.norm());
            let dev = grad_v
                .components()
                .iter()
                .zip(grad_d.components())
                .map(|(a, b)| (a - uj * b).abs())
                .fold(0.0, f64::max)
                / scale;
            if dev > worst {
                worst = dev;
                witness = Some(format!("{:?} omega_d={u}", x.coords()));
            }
        }
        entries.push(AuditEntry {
            id: "H2.2".into(),
            pass: worst < 5e-3,
            margin: worst,
            witness,
            fitted: vec![("U_form".into(), params.r as f64)],
            detail: "grad(V) aligns with U grad(d), U = r (d + d(omega))^(r-1)".into(),
        });
    }

    // (H2.3): xi <= |grad d| <= tau, both 1 away from the singular set
    {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0_f64;
        for x in &points {
            let d = d_of(x);
            let h = 1e-4 * (1.0 + d);
            let n = space.horizontal_grad(|q| d_of(q), x, h).unwrap().norm();
            lo = lo.min(n);
            hi = hi.max(n);
        }
        let pass = (lo - 1.0).abs() < 2e-3 && (hi - 1.0).abs() < 2e-3;
        entries.push(AuditEntry {
            id: "H2.3".into(),
            pass,
            margin: (hi - 1.0).abs().max((lo - 1.0).abs()),
            witness: None,
            fitted: vec![("xi".into(), lo), ("tau".into(), hi)],
            detail: "metric gradient norm bounded below and above".into(),
        });
    }

    // (H2.4): |lap d| <= theta / d, fitted theta
    {
        let mut theta = 0.0_f64;
        for x in &points {
            let d = d_of(x);
            if d < 0.3 {
                continue;
            }
            let h = 1e-3 * (1.0 + d);
            let lap = space.sub_laplacian(|q| d_of(q), x, h).unwrap();
            theta = theta.max(lap.abs() * d);
        }
        entries.push(AuditEntry {
            id: "H2.4".into(),
            pass: theta.is_finite() && theta < 100.0,
            margin: theta,
            witness: None,
            fitted: vec![("theta".into(), theta)],
            detail: "|lap d| * d bounded on the sampled off-axis region".into(),
        });
    }

    // (H2.5): k0 phi <= d phi_1 and d^q <= phi for some q >= 2
    {
        let q = params.p.max(2);
        let mut k0 = f64::INFINITY;
        let mut worst = f64::NEG_INFINITY;
        let mut witness = None;
        for x in &points {
            let d = d_of(x);
            if d < 1e-6 {
                continue;
            }
            let phi = d.powi(params.p as i32);
            k0 = k0.min(d * phase_deriv(d, params.p) / phi);
            let gap = d.powi(q as i32) - phi;
            if gap > worst {
                worst = gap;
                witness = Some(format!("{:?} (d={d:.3})", x.coords()));
            }
        }
        let pass = k0 > 0.0 && worst <= 1e-9;
        entries.push(AuditEntry {
            id: "H2.5".into(),
            pass,
            margin: worst,
            witness,
            fitted: vec![("k0".into(), k0), ("q".into(), q as f64)],
            detail: format!("k0 phi <= d phi_1 and d^{q} <= phi"),
        });
    }

    // (H2.6): k0 V <= d U for the reduced interaction
    {
        let mut k0 = f64::INFINITY;
        for (x, &u) in points.iter().zip(&omega_dists) {
            let t = d_of(x);
            let v = interaction_reduced(t, u, params.r);
            if v < 1e-12 {
                continue;
            }
            k0 = k0.min(t * interaction_deriv(t, u, params.r) / v);
        }
        entries.push(AuditEntry {
            id: "H2.6".into(),
            pass: k0 > 0.0,
            margin: k0,
            witness: None,
            fitted: vec![("k0_interaction".into(), k0)],
            detail: "d U dominates the reduced interaction (boundary-only term dropped)".into(),
        });
    }

    // (Hinfty): V grows without bound in the boundary distance
    {
        let t = 0.8_f64;
        let us: [f64; 5] = [0.0, 1.0, 4.0, 16.0, 64.0];
        let vals: Vec<f64> = us
            .iter()
            .map(|&u| (t + u).powi(params.r as i32))
            .collect();
        let monotone = vals.windows(2).all(|w| w[1] > w[0]);
        entries.push(AuditEntry {
            id: "Hinfty".into(),
            pass: monotone && vals[vals.len() - 1] > 1e3,
            margin: vals[vals.len() - 1],
            witness: None,
            fitted: Vec::new(),
            detail: "interaction diverges as the boundary spin distance grows".into(),
        });
    }

    // (H2.8)/(H2.9): |grad V|^2 and V bounded by k (1 + d^s + d^s(omega)),
    // s = 2r - 2; the alternative exponent 2p - 2 is reported alongside.
    {
        let s = 2 * params.r as i32 - 2;
        let s_alt = 2 * params.p as i32 - 2;
        let mut k_grad = 0.0_f64;
        let mut k_val = 0.0_f64;
        let mut k_grad_alt = 0.0_f64;
        for (x, &u) in points.iter().zip(&omega_dists) {
            let t = d_of(x);
            let gsq = interaction_deriv(t, u, params.r).powi(2);
            let v = interaction_reduced(t, u, params.r);
            let den = 1.0 + t.powi(s) + u.powi(s);
            let den_alt = 1.0 + t.powi(s_alt) + u.powi(s_alt);
            k_grad = k_grad.max(gsq / den);
            k_val = k_val.max(v / den);
            k_grad_alt = k_grad_alt.max(gsq / den_alt);
        }
        let s_ok = s as u32 <= params.p;
        entries.push(AuditEntry {
            id: "H2.8".into(),
            pass: s_ok && k_grad.is_finite(),
            margin: k_grad,
            witness: None,
            fitted: vec![
                ("s".into(), s as f64),
                ("k".into(), k_grad),
                ("s_alt".into(), s_alt as f64),
                ("k_alt".into(), k_grad_alt),
            ],
            detail: format!(
                "|grad V|^2 <= k (1 + d^s + d^s(omega)); s = 2r-2 = {s} must not exceed p = {}",
                params.p
            ),
        });
        entries.push(AuditEntry {
            id: "H2.9".into(),
            pass: s_ok && k_val.is_finite(),
            margin: k_val,
            witness: None,
            fitted: vec![("s".into(), s as f64), ("k".into(), k_val)],
            detail: "V <= k (1 + d^s + d^s(omega))".into(),
        });
    }

    // frozen neighbour distances for the Hamiltonian-level checks
    let omega4: [f64; 4] = [
        omega_dists[0 % omega_dists.len()],
        omega_dists[1 % omega_dists.len()],
        omega_dists[2 % omega_dists.len()],
        omega_dists[3 % omega_dists.len()],
    ];
    let h_of = |p: &SpinPoint| site_energy(d_of(p), &omega4, params);

    // (lowerH): H(x y) <= lambda (H(x) + H(y)) for a fitted lambda
    {
        let mut lambda = 1.0_f64;
        let mut witness = None;
        for k in 0..points.len() / 2 {
            let x = &points[2 * k];
            let y = &points[2 * k + 1];
            let hx = h_of(x);
            let hy = h_of(y);
            if hx + hy < 0.1 {
                continue;
            }
            let hxy = h_of(&space.mul(x, y).unwrap());
            let ratio = hxy / (hx + hy);
            if ratio > lambda {
                lambda = ratio;
                witness = Some(format!("{:?} * {:?}", x.coords(), y.coords()));
            }
        }
        entries.push(AuditEntry {
            id: "lowerH".into(),
            pass: lambda.is_finite(),
            margin: lambda,
            witness,
            fitted: vec![("lambda".into(), lambda)],
            detail: "H(x y) <= lambda H(x) + lambda H(y), fitted lambda".into(),
        });
    }

    // (Hinverse): H(x^-1) = H(x) exactly (distances are inversion invariant)
    {
        let mut worst = 0.0_f64;
        for x in &points {
            let hx = h_of(x);
            let hi = h_of(&space.inv(x).unwrap());
            worst = worst.max((hx - hi).abs() / (1.0 + hx));
        }
        entries.push(AuditEntry {
            id: "Hinverse".into(),
            pass: worst <= 1e-9,
            margin: worst,
            witness: None,
            fitted: Vec::new(),
            detail: "H(x^-1) = H(x)".into(),
        });
    }

    // (Hgeo): H is monotone along radial geodesics from the identity
    {
        let mut worst = f64::NEG_INFINITY;
        let mut witness = None;
        for x in points.iter().take(200) {
            let hx = h_of(x);
            for s in [0.15, 0.35, 0.55, 0.75, 0.95] {
                let g = space.radial_geodesic(x, s).unwrap();
                let gap = (h_of(&g) - hx) / (1.0 + hx);
                if gap > worst {
                    worst = gap;
                    witness = Some(format!("{:?} at s={s}", x.coords()));
                }
            }
        }
        entries.push(AuditEntry {
            id: "Hgeo".into(),
            pass: worst <= 1e-6,
            margin: worst,
            witness,
            fitted: Vec::new(),
            detail: "H along a radial geodesic never exceeds its endpoint value".into(),
        });
    }

    AuditReport {
        entries,
        sample_points: n_points,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LatticeSpec;

    #[test]
    fn example_model_passes_on_both_backends() {
        for space in [SpinSpace::Line, SpinSpace::Heisenberg1] {
            let params = ModelParams::new(space, 4, 3, 0.1, LatticeSpec::new(2, 2));
            let report = audit_assumptions(&params, 300, 7);
            for e in &report.entries {
                assert!(e.pass, "{space:?}: {} failed with margin {} ({})", e.id, e.margin, e.detail);
            }
        }
    }

    #[test]
    fn negative_control_p1_fails_phase_domination() {
        let params = ModelParams::new(SpinSpace::Line, 1, 3, 0.1, LatticeSpec::new(2, 2));
        let report = audit_assumptions(&params, 300, 7);
        let h25 = report.entry("H2.5").unwrap();
        assert!(!h25.pass, "H2.5 should fail for p = 1");
        assert!(h25.margin > 0.0);
        assert!(h25.witness.is_some());
        assert!(!report.pass());
    }

    #[test]
    fn delta_zero_keeps_equality_margin() {
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.0, LatticeSpec::new(2, 2));
        let report = audit_assumptions(&params, 200, 11);
        let h25 = report.entry("H2.5").unwrap();
        assert!(h25.pass);
        assert!(h25.margin.abs() <= 1e-9, "margin {}", h25.margin);
        // k0 = p for the pure power phase
        let k0 = h25.fitted.iter().find(|(n, _)| n == "k0").unwrap().1;
        assert!((k0 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn fitted_interaction_bound_reported() {
        let params = ModelParams::new(SpinSpace::Line, 4, 3, 0.1, LatticeSpec::new(2, 2));
        let report = audit_assumptions(&params, 300, 13);
        let h28 = report.entry("H2.8").unwrap();
        assert!(h28.pass);
        let s = h28.fitted.iter().find(|(n, _)| n == "s").unwrap().1;
        assert_eq!(s, 4.0);
        let k = h28.fitted.iter().find(|(n, _)| n == "k").unwrap().1;
        assert!(k > 0.0 && k.is_finite());
    }

    #[test]
    fn audit_is_deterministic() {
        let params = ModelParams::new(SpinSpace::Heisenberg1, 4, 3, 0.1, LatticeSpec::new(2, 2));
        let a = audit_assumptions(&params, 100, 3);
        let b = audit_assumptions(&params, 100, 3);
        for (x, y) in a.entries.iter().zip(&b.entries) {
            assert_eq!(x.margin, y.margin);
            assert_eq!(x.pass, y.pass);
        }
    }
}
