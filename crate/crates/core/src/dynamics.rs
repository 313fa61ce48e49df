//! Metropolis-within-Gibbs checkerboard dynamics.
//!
//! One sweep applies `m_in` Metropolis steps to every site of one parity
//! class, holding the other class and the boundary fixed. Sites within a
//! class are conditionally independent, and every site update draws from a
//! counter-based generator keyed by `(seed, site, sweep, replica)`, so the
//! result of a sweep is independent of the site visiting order and
//! bit-reproducible for a given `ChainSpec`. The invariant measure of each
//! site update is the exact one-site conditional, whatever `m_in` is;
//! `m_in` only controls how closely one sweep approximates one exact block
//! resampling.

use crate::geometry::SpinPoint;
use crate::model::{site_energy, ModelParams, Site, SpinConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("need at least 2 replicas for a standard error, got {0}")]
    TooFewReplicas(usize),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Sampler parameters. Identical specs reproduce identical trajectories
/// bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct ChainSpec {
    pub seed: u64,
    /// Gaussian proposal scale per coordinate.
    pub proposal_scale: f64,
    /// Metropolis steps per site approximating one exact conditional
    /// resampling.
    pub inner_resample_steps: u32,
    /// Equilibration sweeps before retaining samples.
    pub burn_in: u32,
    pub n_samples: u32,
    /// Keep every `thinning`-th sweep after burn-in.
    pub thinning: u32,
}

impl Default for ChainSpec {
    fn default() -> Self {
        ChainSpec {
            seed: 1,
            proposal_scale: 0.5,
            inner_resample_steps: 32,
            burn_in: 500,
            n_samples: 2000,
            thinning: 2,
        }
    }
}

impl ChainSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for one site update, keyed by (seed, site, sweep, replica).
pub fn update_rng(seed: u64, site: Site, sweep: u64, replica: u64) -> ChaCha8Rng {
    let mut state = seed ^ DERIVE_SALT;
    for part in [
        site.0 as u64 ^ 0x8000_0000,
        site.1 as u64 ^ 0x4000_0000,
        sweep,
        replica,
    ] {
        state ^= part.wrapping_mul(0xd134_2543_de82_ef95);
        let _ = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

const DERIVE_SALT: u64 = 0x7370_696e_6c61_6221;

/// Metropolis acceptance probability for an energy change.
pub fn metropolis_accept_prob(delta_h: f64) -> f64 {
    if delta_h <= 0.0 {
        1.0
    } else {
        (-delta_h).exp()
    }
}

/// Running acceptance diagnostics.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct AcceptanceDiag {
    pub proposals: u64,
    pub accepted: u64,
}

impl AcceptanceDiag {
    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    fn merge(&mut self, other: AcceptanceDiag) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
    }
}

/// One Metropolis step on a single site: propose `x * xi` with Gaussian
/// coordinates of scale `sigma` (a symmetric proposal since Lebesgue measure
/// is the Haar measure and `xi`, `xi^-1` are equidistributed), accept with
/// probability `min(1, exp(-dH))`. Rejection leaves the configuration
/// unchanged.
pub fn metropolis_site_step(
    site: Site,
    cfg: &mut SpinConfig,
    params: &ModelParams,
    sigma: f64,
    rng: &mut ChaCha8Rng,
    diag: &mut AcceptanceDiag,
) -> Result<bool, DynamicsError> {
    let space = cfg.space();
    let x = cfg.spin(site);
    let d_x = cfg.dist(site);
    let nd = cfg.neighbor_dists(site);

    let mut xi = [0.0_f64; 3];
    for c in xi.iter_mut().take(space.dim()) {
        let z: f64 = rng.sample(StandardNormal);
        *c = sigma * z;
    }
    let step = SpinPoint::from_coords(space, &xi[..space.dim()]).expect("finite proposal");
    let y = space.mul(&x, &step).map_err(crate::model::ModelError::from)?;
    let d_y = space.metric_d(&y).map_err(crate::model::ModelError::from)?;

    let delta_h = site_energy(d_y, &nd, params) - site_energy(d_x, &nd, params);
    diag.proposals += 1;
    let u: f64 = rng.gen();
    if u < metropolis_accept_prob(delta_h) {
        cfg.set_spin(site, y)?;
        diag.accepted += 1;
        Ok(true)
    } else {
        Ok(false)
    }
}

/// Apply `m_in` Metropolis steps to each of the given sites. The sites must
/// belong to one parity class; their conditionals depend only on the other
/// class and the boundary, so the result does not depend on the order of
/// this list.
pub fn resample_sites(
    cfg: &mut SpinConfig,
    sites: &[Site],
    params: &ModelParams,
    chain: &ChainSpec,
    sweep: u64,
    replica: u64,
) -> Result<AcceptanceDiag, DynamicsError> {
    debug_assert!(
        sites
            .windows(2)
            .all(|w| crate::model::site_parity(w[0]) == crate::model::site_parity(w[1])),
        "resampled sites must share a parity class"
    );
    let mut diag = AcceptanceDiag::default();
    for &site in sites {
        let mut rng = update_rng(chain.seed, site, sweep, replica);
        let mut site_diag = AcceptanceDiag::default();
        for _ in 0..chain.inner_resample_steps {
            metropolis_site_step(site, cfg, params, chain.proposal_scale, &mut rng, &mut site_diag)?;
        }
        diag.merge(site_diag);
    }
    Ok(diag)
}

/// Resample every interior site of one parity class.
pub fn resample_parity(
    cfg: &mut SpinConfig,
    parity: u8,
    params: &ModelParams,
    chain: &ChainSpec,
    sweep: u64,
    replica: u64,
) -> Result<AcceptanceDiag, DynamicsError> {
    let sites = cfg.parity_sites(parity);
    resample_sites(cfg, &sites, params, chain, sweep, replica)
}

/// Parity applied at sweep `s` (1-based): class 0 first, then alternating.
pub fn sweep_parity(sweep: u64) -> u8 {
    if sweep % 2 == 1 {
        0
    } else {
        1
    }
}

/// Run the alternating schedule for `n` sweeps from `start`.
pub fn run_sweeps(
    start: &SpinConfig,
    n: u64,
    params: &ModelParams,
    chain: &ChainSpec,
    replica: u64,
) -> Result<(SpinConfig, AcceptanceDiag), DynamicsError> {
    let mut cfg = start.clone();
    let mut diag = AcceptanceDiag::default();
    for sweep in 1..=n {
        diag.merge(resample_parity(
            &mut cfg,
            sweep_parity(sweep),
            params,
            chain,
            sweep,
            replica,
        )?);
    }
    Ok((cfg, diag))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QnEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_replicas: usize,
}

/// Monte Carlo estimate of the n-fold alternating block resampling applied
/// to `f`, started at `start`: the average of `f` after `n` sweeps over
/// independent replicas. `n = 0` returns `f(start)` exactly.
pub fn estimate_qn_f<F>(
    f: F,
    start: &SpinConfig,
    n: u64,
    params: &ModelParams,
    chain: &ChainSpec,
    n_replicas: usize,
) -> Result<QnEstimate, DynamicsError>
where
    F: Fn(&SpinConfig) -> f64,
{
    if n == 0 {
        return Ok(QnEstimate {
            mean: f(start),
            stderr: 0.0,
            n_replicas,
        });
    }
    if n_replicas < 2 {
        return Err(DynamicsError::TooFewReplicas(n_replicas));
    }
    let values: Vec<f64> = (0..n_replicas)
        .map(|r| {
            let (cfg, _) = run_sweeps(start, n, params, chain, r as u64)?;
            Ok(f(&cfg))
        })
        .collect::<Result<_, DynamicsError>>()?;
    let (mean, stderr) = crate::estimators::mean_and_stderr(&values);
    Ok(QnEstimate {
        mean,
        stderr,
        n_replicas,
    })
}

/// `f` evaluated along one replica trajectory after 0, 1, ..., n_max sweeps
/// of the forward schedule (parity 0 first).
pub fn qn_trajectory<F>(
    f: F,
    start: &SpinConfig,
    n_max: u64,
    params: &ModelParams,
    chain: &ChainSpec,
    replica: u64,
) -> Result<Vec<f64>, DynamicsError>
where
    F: Fn(&SpinConfig) -> f64,
{
    let mut cfg = start.clone();
    let mut out = Vec::with_capacity(n_max as usize + 1);
    out.push(f(&cfg));
    for sweep in 1..=n_max {
        resample_parity(&mut cfg, sweep_parity(sweep), params, chain, sweep, replica)?;
        out.push(f(&cfg));
    }
    Ok(out)
}

/// One replica realization of the n-fold conditional composition applied to
/// `f`. A Markov chain realizes a composition of conditional expectations
/// outermost-first, so the sweep at position `s` carries the operator index
/// `b = n + 1 - s` and its parity. Keying the per-site generators by `b`
/// makes two consecutive levels share the randomness of their common
/// suffix, which couples the paired estimates.
pub fn qn_level_value<F>(
    f: F,
    start: &SpinConfig,
    n: u64,
    params: &ModelParams,
    chain: &ChainSpec,
    replica: u64,
) -> Result<f64, DynamicsError>
where
    F: Fn(&SpinConfig) -> f64,
{
    let mut cfg = start.clone();
    for s in 1..=n {
        let b = n + 1 - s;
        resample_parity(&mut cfg, sweep_parity(b), params, chain, b, replica)?;
    }
    Ok(f(&cfg))
}

/// Result of a long equilibrium run.
#[derive(Debug, Clone)]
pub struct GibbsRun {
    pub samples: Vec<SpinConfig>,
    pub acceptance: AcceptanceDiag,
    pub warnings: Vec<String>,
    pub seed: u64,
}

/// Thinned equilibrium samples of the finite-volume Gibbs measure via the
/// alternating dynamics. Acceptance rates outside `[0.1, 0.9]` produce a
/// warning in the diagnostics, not an error.
pub fn sample_gibbs(params: &ModelParams, chain: &ChainSpec) -> Result<GibbsRun, DynamicsError> {
    let mut cfg = SpinConfig::identity(params);
    let mut acceptance = AcceptanceDiag::default();
    let thinning = chain.thinning.max(1) as u64;
    let total = chain.burn_in as u64 + chain.n_samples as u64 * thinning;
    let mut samples = Vec::with_capacity(chain.n_samples as usize);
    for sweep in 1..=total {
        let diag = resample_parity(&mut cfg, sweep_parity(sweep), params, chain, sweep, 0)?;
        acceptance.merge(diag);
        if sweep > chain.burn_in as u64 && (sweep - chain.burn_in as u64) % thinning == 0 {
            samples.push(cfg.clone());
        }
    }
    samples.truncate(chain.n_samples as usize);
    let mut warnings = Vec::new();
    let rate = acceptance.rate();
    if !(0.1..=0.9).contains(&rate) {
        warnings.push(format!(
            "acceptance rate {rate:.3} outside [0.1, 0.9]; consider adjusting proposal_scale"
        ));
    }
    Ok(GibbsRun {
        samples,
        acceptance,
        warnings,
        seed: chain.seed,
    })
}
