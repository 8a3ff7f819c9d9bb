//! Nested Monte-Carlo residuals of the DLR equation on a finite window.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::functionals::TestFunctional;
use crate::configuration::Configuration;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::numerics::mean_stderr;
use crate::sampler::{chain_rng, run_chain, PoissonReference, ProposalMix, RejectionSampler, Schedule, Target};
use crate::tempered::minimal_t;

pub const MIN_INNER_SAMPLES: usize = 100;
pub const DEFAULT_DLR_K: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlrReport {
    pub functional: String,
    /// `|E_P[F] - E_P[∫F dΞ]|`.
    pub residual: f64,
    pub stderr: f64,
    pub k: f64,
    pub pass: bool,
    pub outer: usize,
    pub inner: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlrSettings {
    /// Kernel draws per outer sample.
    pub inner: usize,
    pub k: f64,
    pub delta: f64,
    /// Chain settings, used only when the kernel cannot be sampled exactly.
    pub mix: ProposalMix,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
}

impl DlrSettings {
    pub fn new(inner: usize, seed: u64) -> Self {
        Self {
            inner,
            k: DEFAULT_DLR_K,
            delta: 1.0,
            mix: ProposalMix::default(),
            burn_in: 10_000,
            thin: 50,
            seed,
        }
    }
}

/// Draws from the Gibbsian kernel on the reference window given the
/// exterior of `xi`, exactly when the conditional energy is certified
/// non-negative and by a chain otherwise.
pub fn kernel_draws(
    model: &Arc<dyn EnergyModel>,
    reference: &PoissonReference,
    xi: &Configuration,
    settings: &DlrSettings,
    stream: u64,
) -> Result<Vec<Configuration>> {
    let exterior = xi.restrict_complement(reference.window());
    let t = minimal_t(&exterior, settings.delta);
    let target = Target::kernel(model.clone(), reference.clone(), &exterior, t, settings.delta)?;
    let mut rng = chain_rng(settings.seed, stream);
    if model.conditional_is_nonnegative() {
        let mut sampler = RejectionSampler::new(&target)?;
        (0..settings.inner).map(|_| sampler.sample(&mut rng)).collect()
    } else {
        let schedule = Schedule {
            steps: settings.burn_in + settings.thin * settings.inner as u64,
            burn_in: settings.burn_in,
            thin: settings.thin,
        };
        run_chain(&target, &settings.mix, schedule, &mut rng).map(|(s, _)| s)
    }
}

/// Residuals for every functional, sharing the same outer samples and the
/// same kernel draws. Outer sample `i` uses stream `i` of the seed, so the
/// result does not depend on the thread count.
pub fn dlr_residuals(
    outer: &[Configuration],
    model: Arc<dyn EnergyModel>,
    reference: &PoissonReference,
    functionals: &[TestFunctional],
    settings: &DlrSettings,
) -> Result<Vec<DlrReport>> {
    if settings.inner < MIN_INNER_SAMPLES {
        return Err(Error::Precondition(format!(
            "need at least {MIN_INNER_SAMPLES} kernel draws per outer sample, got {}",
            settings.inner
        )));
    }
    if outer.len() < 2 {
        return Err(Error::Precondition("need at least two outer samples".into()));
    }
    let window = reference.window();
    // per outer sample, per functional: F(xi) - mean_j F(gamma_j xi_ext)
    let diffs: Vec<Vec<f64>> = outer
        .par_iter()
        .enumerate()
        .map(|(i, xi)| {
            let draws = kernel_draws(&model, reference, xi, settings, i as u64)?;
            let exterior = xi.restrict_complement(window);
            let glued: Vec<Configuration> = draws
                .iter()
                .map(|g| g.union(&exterior))
                .collect::<Result<_>>()?;
            Ok(functionals
                .iter()
                .map(|f| {
                    let inner = glued.iter().map(|c| f.eval(c)).sum::<f64>() / glued.len() as f64;
                    f.eval(xi) - inner
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(functionals
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let column: Vec<f64> = diffs.iter().map(|row| row[k]).collect();
            let (mean, stderr) = mean_stderr(&column);
            let residual = mean.abs();
            DlrReport {
                functional: f.id.clone(),
                residual,
                stderr,
                k: settings.k,
                pass: residual <= settings.k * stderr,
                outer: outer.len(),
                inner: settings.inner,
            }
        })
        .collect())
}
