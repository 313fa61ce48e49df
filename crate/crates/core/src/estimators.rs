//! Small statistical estimators shared by the samplers and the fits:
//! batch-means standard errors, plug-in entropy with jackknife bias
//! correction, bootstrap index resampling and least-squares log-linear fits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sample mean and the iid standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Standard error of the mean by batch means, robust to autocorrelation in
/// Markov-chain output. Falls back to the iid error for short series.
pub fn batch_means_stderr(values: &[f64], n_batches: usize) -> f64 {
    let n = values.len();
    if n < 2 * n_batches || n_batches < 2 {
        return mean_and_stderr(values).1;
    }
    let batch_len = n / n_batches;
    let used = batch_len * n_batches;
    let batch_means: Vec<f64> = (0..n_batches)
        .map(|b| {
            values[b * batch_len..(b + 1) * batch_len]
                .iter()
                .sum::<f64>()
                / batch_len as f64
        })
        .collect();
    let (_, se_batches) = mean_and_stderr(&batch_means);
    // the grand mean over `used` points has the stderr of the batch means
    // divided by sqrt(batches) already built in via mean_and_stderr
    let _ = used;
    se_batches
}

/// Plug-in entropy of `f^2` from samples of `f`, with jackknife bias
/// correction: `Ent = E[f^2 log f^2] - E[f^2] log E[f^2]`.
pub fn entropy_f2_jackknife(f_values: &[f64]) -> EntropyEstimate {
    let n = f_values.len();
    let xlogx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    let f2: Vec<f64> = f_values.iter().map(|v| v * v).collect();
    let f2log: Vec<f64> = f2.iter().map(|&v| xlogx(v)).collect();
    let s2: f64 = f2.iter().sum();
    let s2l: f64 = f2log.iter().sum();
    let nn = n as f64;
    let plugin = s2l / nn - xlogx(s2 / nn);
    if n < 3 {
        return EntropyEstimate {
            plugin,
            corrected: plugin,
        };
    }
    // leave-one-out estimates in O(n) from the running sums
    let mut loo_sum = 0.0;
    for i in 0..n {
        let m2 = (s2 - f2[i]) / (nn - 1.0);
        let m2l = (s2l - f2log[i]) / (nn - 1.0);
        loo_sum += m2l - xlogx(m2);
    }
    let loo_mean = loo_sum / nn;
    EntropyEstimate {
        plugin,
        corrected: nn * plugin - (nn - 1.0) * loo_mean,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EntropyEstimate {
    pub plugin: f64,
    pub corrected: f64,
}

/// Deterministic bootstrap resamples: `b` index vectors of length `n`.
pub fn bootstrap_indices(n: usize, b: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x626f_6f74);
    (0..b)
        .map(|_| (0..n).map(|_| rng.gen_range(0..n)).collect())
        .collect()
}

/// Least-squares line fit of `y` against `x`; returns slope, intercept and
/// the coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (intercept + slope * a)).powi(2))
        .sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        r2,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}
