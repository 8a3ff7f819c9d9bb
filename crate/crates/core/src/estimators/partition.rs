//! Importance-sampling estimates of the partition function.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::log_sum_exp;
use crate::sampler::Target;

pub const MIN_PARTITION_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionEstimate {
    /// Mean of `exp(-H)` under the reference.
    pub z_hat: f64,
    pub stderr: f64,
    /// Jackknife bias-corrected `log Z`.
    pub log_z: f64,
    /// Delta-method standard error of `log Z`.
    pub log_z_stderr: f64,
    pub n: usize,
    /// Every draw had infinite energy; the estimate is 0.
    pub all_infinite: bool,
}

/// Estimates `Z = E[exp(-H)]` under the target's reference measure from
/// `n` independent reference draws.
pub fn partition_estimate<R: Rng + ?Sized>(
    target: &Target,
    n: usize,
    rng: &mut R,
) -> Result<PartitionEstimate> {
    if n < MIN_PARTITION_SAMPLES {
        return Err(Error::Precondition(format!(
            "partition estimates need at least {MIN_PARTITION_SAMPLES} samples, got {n}"
        )));
    }
    let mut log_w = Vec::with_capacity(n);
    for _ in 0..n {
        // non-simple draws (only possible on finite site sets) carry no mass
        let lw = match target.reference().sample(rng) {
            Some(c) => match target.energy(c.points())?.finite() {
                Some(h) => -h,
                None => f64::NEG_INFINITY,
            },
            None => f64::NEG_INFINITY,
        };
        log_w.push(lw);
    }
    Ok(from_log_weights(&log_w))
}

/// Summary of a sample of log importance weights.
pub fn from_log_weights(log_w: &[f64]) -> PartitionEstimate {
    let n = log_w.len();
    let nf = n as f64;
    let log_sum = log_sum_exp(log_w);
    if log_sum == f64::NEG_INFINITY {
        log::warn!("all {n} reference draws have infinite energy; Z estimated as 0");
        return PartitionEstimate {
            z_hat: 0.0,
            stderr: 0.0,
            log_z: f64::NEG_INFINITY,
            log_z_stderr: f64::INFINITY,
            n,
            all_infinite: true,
        };
    }
    let log_mean = log_sum - nf.ln();
    // scaled weights w_i / mean, mean 1
    let scaled: Vec<f64> = log_w.iter().map(|l| (l - log_mean).exp()).collect();
    let var_scaled = scaled.iter().map(|s| (s - 1.0).powi(2)).sum::<f64>() / (nf - 1.0);
    let rel_se = (var_scaled / nf).sqrt();

    // leave-one-out log means: log((n - s_i) / (n - 1)) + log_mean
    let loo_mean = scaled
        .iter()
        .map(|s| ((nf - s).max(0.0) / (nf - 1.0)).ln() + log_mean)
        .sum::<f64>()
        / nf;
    let log_z = if loo_mean.is_finite() {
        nf * log_mean - (nf - 1.0) * loo_mean
    } else {
        log_mean
    };
    let z_hat = log_mean.exp();
    PartitionEstimate {
        z_hat,
        stderr: z_hat * rel_se,
        log_z,
        log_z_stderr: rel_se,
        n,
        all_infinite: false,
    }
}
