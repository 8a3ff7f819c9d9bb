//! The J statistic, relative entropy with respect to the Poisson
//! reference, and per-volume entropy curves over growing cubes.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::partition::{partition_estimate, PartitionEstimate};
use crate::configuration::{tame_statistic, Configuration, Window};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::marks::MarkLaw;
use crate::numerics::mean_stderr;
use crate::sampler::{chain_rng, run_chain, PoissonReference, ProposalMix, RejectionSampler, Schedule, Target};

pub const MIN_J_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JStatistic {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Mean tame statistic `<gamma, 1 + |m|^(d+delta)>` over samples.
pub fn j_statistic(samples: &[Configuration], delta: f64) -> Result<JStatistic> {
    if samples.len() < MIN_J_SAMPLES {
        return Err(Error::Precondition(format!(
            "J statistic needs at least {MIN_J_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let stats: Vec<f64> = samples.iter().map(|c| tame_statistic(c, delta)).collect();
    let (mean, stderr) = mean_stderr(&stats);
    Ok(JStatistic {
        mean,
        stderr,
        n: samples.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub relative_entropy: f64,
    pub log_z: f64,
    pub mean_energy: f64,
    pub volume: f64,
    pub per_volume: f64,
    pub stderr: f64,
    pub energy_stderr: f64,
    pub log_z_stderr: f64,
    pub n: usize,
    /// The estimate is not below `-3 stderr`.
    pub consistent: bool,
}

/// `-E[H] - log Z` from Gibbs samples and a partition estimate.
pub fn relative_entropy_estimate(
    target: &Target,
    samples: &[Configuration],
    partition: &PartitionEstimate,
) -> Result<EntropyReport> {
    if samples.len() < 2 {
        return Err(Error::Precondition("need at least two Gibbs samples".into()));
    }
    if partition.all_infinite {
        return Err(Error::Numerical("partition estimate is zero".into()));
    }
    let energies = samples
        .iter()
        .map(|c| {
            target.energy(c.points())?.finite().ok_or_else(|| {
                Error::Precondition("a Gibbs sample has infinite energy".into())
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean_energy, energy_stderr) = mean_stderr(&energies);
    let relative_entropy = -mean_energy - partition.log_z;
    let stderr = energy_stderr.hypot(partition.log_z_stderr);
    let volume = target.reference().window().volume();
    let consistent = relative_entropy >= -3.0 * stderr;
    if !consistent {
        log::warn!(
            "relative entropy {relative_entropy} below -3 stderr ({stderr}); energy and partition estimates disagree"
        );
    }
    Ok(EntropyReport {
        relative_entropy,
        log_z: partition.log_z,
        mean_energy,
        volume,
        per_volume: relative_entropy / volume,
        stderr,
        energy_stderr,
        log_z_stderr: partition.log_z_stderr,
        n: samples.len(),
        consistent,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplerChoice {
    /// Rejection when the model is certified non-negative and acceptance is
    /// workable, the chain otherwise.
    #[default]
    Auto,
    Rejection,
    Chain,
}

/// `count` draws from the target: independent exact draws by rejection, or
/// thinned states of one chain.
pub fn gibbs_samples<R: Rng + ?Sized>(
    target: &Target,
    count: usize,
    choice: SamplerChoice,
    mix: &ProposalMix,
    burn_in: u64,
    thin: u64,
    rng: &mut R,
) -> Result<Vec<Configuration>> {
    let chain = |rng: &mut R| {
        let schedule = Schedule {
            steps: burn_in + thin * count as u64,
            burn_in,
            thin,
        };
        run_chain(target, mix, schedule, rng).map(|(s, _)| s)
    };
    let rejection = |rng: &mut R| -> Result<Vec<Configuration>> {
        let mut sampler = RejectionSampler::new(target)?;
        (0..count).map(|_| sampler.sample(rng)).collect()
    };
    match choice {
        SamplerChoice::Chain => chain(rng),
        SamplerChoice::Rejection => rejection(rng),
        SamplerChoice::Auto => match rejection(rng) {
            Err(Error::Precondition(_)) | Err(Error::LowAcceptance { .. }) => {
                log::info!("falling back to a chain for {}", target.model().id());
                chain(rng)
            }
            other => other,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSettings {
    pub sizes: Vec<u32>,
    pub samples_per_size: usize,
    pub partition_samples: usize,
    pub sampler: SamplerChoice,
    pub mix: ProposalMix,
    pub burn_in: u64,
    pub thin: u64,
    pub delta: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: u32,
    pub entropy: EntropyReport,
    pub j: JStatistic,
    /// Largest `-H / <gamma, f>` seen over the Gibbs samples.
    pub sample_stability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyCurve {
    pub model_id: String,
    pub z: f64,
    pub points: Vec<CurvePoint>,
}

impl EntropyCurve {
    /// Largest upper confidence limit of `J_n / |Λ_n|` over the curve.
    pub fn a1_hat(&self) -> f64 {
        self.points
            .iter()
            .map(|p| (p.j.mean + 3.0 * p.j.stderr) / p.entropy.volume)
            .fold(0.0, f64::max)
    }

    /// Stability constant: the larger of an audit value and what the Gibbs
    /// samples themselves exhibit.
    pub fn c_hat(&self, audit: f64) -> f64 {
        self.points.iter().map(|p| p.sample_stability).fold(audit, f64::max)
    }

    /// `c a1 + z` with `c` floored at 0.
    pub fn ceiling(&self, audit: f64) -> f64 {
        self.c_hat(audit).max(0.0) * self.a1_hat() + self.z
    }

    /// Every upper confidence limit lies under the ceiling.
    pub fn is_bounded_by(&self, ceiling: f64) -> bool {
        self.points
            .iter()
            .all(|p| p.entropy.per_volume + 3.0 * p.entropy.stderr / p.entropy.volume <= ceiling)
    }

    /// No step up between consecutive sizes exceeds the combined interval
    /// half-widths.
    pub fn has_no_upward_trend(&self) -> bool {
        self.points.windows(2).all(|w| {
            let (a, b) = (&w[0].entropy, &w[1].entropy);
            let width = 3.0 * ((a.stderr / a.volume).powi(2) + (b.stderr / b.volume).powi(2)).sqrt();
            b.per_volume - a.per_volume <= width
        })
    }
}

/// Per-volume relative entropy of the free-boundary Gibbs measure on
/// `[-n, n)^d` for each requested `n`. Size `k` of the list uses streams
/// `2k` and `2k + 1` of the seed.
pub fn specific_entropy_curve(
    model: Arc<dyn EnergyModel>,
    d: usize,
    z: f64,
    marks: &MarkLaw,
    settings: &CurveSettings,
) -> Result<EntropyCurve> {
    if settings.sizes.is_empty() || settings.sizes.windows(2).any(|w| w[0] >= w[1]) || settings.sizes[0] == 0 {
        return Err(Error::Precondition("sizes must be positive and increasing".into()));
    }
    let mut points = Vec::new();
    for (k, &n) in settings.sizes.iter().enumerate() {
        let reference = PoissonReference::new(Window::cube(n as f64, d), z, marks.clone())?;
        let target = Target::free(model.clone(), reference);
        let mut rng = chain_rng(settings.seed, 2 * k as u64);
        let samples = gibbs_samples(
            &target,
            settings.samples_per_size,
            settings.sampler,
            &settings.mix,
            settings.burn_in,
            settings.thin,
            &mut rng,
        )?;
        let mut rng = chain_rng(settings.seed, 2 * k as u64 + 1);
        let partition = partition_estimate(&target, settings.partition_samples, &mut rng)?;
        let entropy = relative_entropy_estimate(&target, &samples, &partition)?;
        let j = j_statistic(&samples, settings.delta)?;
        let sample_stability = samples
            .iter()
            .filter(|c| !c.is_empty())
            .filter_map(|c| {
                model
                    .energy(c.points())
                    .finite()
                    .map(|h| -h / tame_statistic(c, settings.delta))
            })
            .fold(f64::NEG_INFINITY, f64::max);
        log::info!(
            "n = {n}: I/|Λ| = {} ± {}, J/|Λ| = {}",
            entropy.per_volume,
            entropy.stderr / entropy.volume,
            j.mean / entropy.volume
        );
        points.push(CurvePoint {
            n,
            entropy,
            j,
            sample_stability,
        });
    }
    Ok(EntropyCurve {
        model_id: model.id(),
        z,
        points,
    })
}
