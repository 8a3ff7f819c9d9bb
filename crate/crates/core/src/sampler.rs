//! Poisson references, exact rejection sampling and birth–death–move
//! Metropolis–Hastings chains for finite-volume Gibbs measures, Gibbsian
//! kernels and their cut-off versions.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::configuration::{mark_sup_points, Configuration, MarkedPoint, Window};
use crate::energy::{interaction_range, Energy, EnergyModel, Environment};
use crate::error::{Error, Result};
use crate::marks::MarkLaw;
use crate::tempered::is_tempered;

/// Counter-based stream `stream` of the generator keyed by `seed`.
pub fn chain_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = rand_distr::Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as usize
}

/// Poisson process on `window` with intensity `z` and iid marks.
pub fn sample_poisson<R: Rng + ?Sized>(
    window: &Window,
    z: f64,
    law: &MarkLaw,
    rng: &mut R,
) -> Result<Configuration> {
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::InvalidParameter(format!("intensity must be >= 0, got {z}")));
    }
    let n = poisson_count(z * window.volume(), rng);
    let points = (0..n)
        .map(|_| {
            let x = window.sample_uniform(rng);
            MarkedPoint::new(x, law.sample(rng))
        })
        .collect::<Result<Vec<_>>>()?;
    Configuration::new(window.dim(), points)
}

#[derive(Clone, Debug, PartialEq)]
pub enum LocationLaw {
    Uniform,
    /// Uniform over a finite set of sites inside the window.
    Sites(Vec<Vec<f64>>),
}

/// The reference measure `z dx ⊗ R(dm)` on a window, possibly with
/// locations restricted to finitely many sites (total mass `z |Λ|` spread
/// evenly over the sites).
#[derive(Clone, Debug)]
pub struct PoissonReference {
    window: Window,
    z: f64,
    locations: LocationLaw,
    marks: MarkLaw,
}

impl PoissonReference {
    pub fn new(window: Window, z: f64, marks: MarkLaw) -> Result<Self> {
        if !(z >= 0.0) || !z.is_finite() {
            return Err(Error::InvalidParameter(format!("intensity must be >= 0, got {z}")));
        }
        Ok(Self {
            window,
            z,
            locations: LocationLaw::Uniform,
            marks,
        })
    }

    pub fn with_sites(window: Window, z: f64, sites: Vec<Vec<f64>>, marks: MarkLaw) -> Result<Self> {
        if sites.is_empty() || sites.iter().any(|s| !window.contains(s)) {
            return Err(Error::InvalidParameter(
                "sites must be a nonempty set of points inside the window".into(),
            ));
        }
        let mut r = Self::new(window, z, marks)?;
        r.locations = LocationLaw::Sites(sites);
        Ok(r)
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn marks(&self) -> &MarkLaw {
        &self.marks
    }

    pub fn locations(&self) -> &LocationLaw {
        &self.locations
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }

    /// Total mass `z |Λ|`.
    pub fn mass(&self) -> f64 {
        self.z * self.window.volume()
    }

    pub fn sample_location<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.locations {
            LocationLaw::Uniform => self.window.sample_uniform(rng),
            LocationLaw::Sites(s) => s[rng.random_range(0..s.len())].clone(),
        }
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> MarkedPoint {
        let x = self.sample_location(rng);
        MarkedPoint::new(x, self.marks.sample(rng)).expect("sampled marks are valid")
    }

    /// A draw of the reference process; `None` when two atoms share a
    /// location (possible only with sites).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Configuration> {
        let n = poisson_count(self.mass(), rng);
        let points: Vec<MarkedPoint> = (0..n).map(|_| self.sample_point(rng)).collect();
        Configuration::new(self.dim(), points).ok()
    }
}

#[derive(Clone, Debug)]
enum RangeRule {
    /// Use the whole stored environment.
    Whole,
    /// Truncate at the interaction range of the tempered class.
    Tempered { t: u64, delta: f64 },
}

/// The law a chain targets: a reference on Λ, an energy model, and the
/// exterior it is conditioned on.
#[derive(Clone, Debug)]
pub struct Target {
    model: Arc<dyn EnergyModel>,
    reference: PoissonReference,
    env: Environment,
    rule: RangeRule,
    mark_cap: Option<f64>,
}

impl Target {
    /// Finite-volume Gibbs measure with free boundary condition.
    pub fn free(model: Arc<dyn EnergyModel>, reference: PoissonReference) -> Self {
        Self {
            model,
            reference,
            env: Environment::default(),
            rule: RangeRule::Whole,
            mark_cap: None,
        }
    }

    /// Gibbsian kernel given the exterior of `xi`, which must be tempered
    /// of class `t`.
    pub fn kernel(
        model: Arc<dyn EnergyModel>,
        reference: PoissonReference,
        xi: &Configuration,
        t: u64,
        delta: f64,
    ) -> Result<Self> {
        let exterior = xi.restrict_complement(reference.window());
        let report = is_tempered(&exterior, t, delta);
        if !report.tempered {
            return Err(Error::NotTempered {
                t,
                minimal: report.minimal_t,
            });
        }
        let env = Environment::new(&exterior, reference.window());
        Ok(Self {
            model,
            reference,
            env,
            rule: RangeRule::Tempered { t, delta },
            mark_cap: None,
        })
    }

    /// Cut-off kernel: environment restricted to `outer` and marks capped
    /// at `m0`.
    pub fn cutoff(
        model: Arc<dyn EnergyModel>,
        reference: PoissonReference,
        xi: &Configuration,
        outer: &Window,
        m0: f64,
    ) -> Result<Self> {
        if !(m0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("mark cap must be >= 0, got {m0}")));
        }
        let env = Environment::new(xi, reference.window()).restricted_to(outer);
        Ok(Self {
            model,
            reference,
            env,
            rule: RangeRule::Whole,
            mark_cap: Some(m0),
        })
    }

    pub fn model(&self) -> &Arc<dyn EnergyModel> {
        &self.model
    }

    pub fn reference(&self) -> &PoissonReference {
        &self.reference
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn mark_cap(&self) -> Option<f64> {
        self.mark_cap
    }

    pub fn has_environment(&self) -> bool {
        !self.env.is_empty()
    }

    /// Environment atoms that may interact with interiors whose largest
    /// mark is `mark_sup`.
    pub fn env_for(&self, mark_sup: f64) -> &[MarkedPoint] {
        match self.rule {
            RangeRule::Whole => self.env.points(),
            RangeRule::Tempered { t, delta } => {
                let r = 2.0 * crate::tempered::l_range(t, self.reference.dim(), delta)
                    + 2.0 * mark_sup
                    + 1.0;
                self.env.within(r)
            }
        }
    }

    /// Conditional energy of an interior configuration.
    pub fn energy(&self, interior: &[MarkedPoint]) -> Result<Energy> {
        self.model
            .conditional(interior, self.env_for(mark_sup_points(interior)))
    }

    fn admits_mark(&self, p: &MarkedPoint) -> bool {
        self.mark_cap.is_none_or(|m0| p.mark_norm() <= m0)
    }
}

/// Interaction range for a tempered kernel, re-exported for callers that
/// size outer windows.
pub fn kernel_range(interior_mark_sup: f64, t: u64, d: usize, delta: f64) -> f64 {
    interaction_range(&[], t, d, delta) + 2.0 * interior_mark_sup
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalMix {
    pub birth: f64,
    pub death: f64,
    pub shift: f64,
    pub remark: f64,
    /// Standard deviation of Gaussian displacements.
    pub move_scale: f64,
}

impl Default for ProposalMix {
    fn default() -> Self {
        Self {
            birth: 0.3,
            death: 0.3,
            shift: 0.2,
            remark: 0.2,
            move_scale: 0.3,
        }
    }
}

impl ProposalMix {
    pub fn new(birth_death: f64, shift: f64, remark: f64, move_scale: f64) -> Result<Self> {
        let mix = Self {
            birth: birth_death,
            death: birth_death,
            shift,
            remark,
            move_scale,
        };
        mix.validate()?;
        Ok(mix)
    }

    pub fn validate(&self) -> Result<()> {
        let p = [self.birth, self.death, self.shift, self.remark];
        if p.iter().any(|x| !(0.0..=1.0).contains(x))
            || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12
            || self.birth != self.death
            || self.birth == 0.0
            || !(self.move_scale > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "invalid proposal mix {self:?}: probabilities must sum to 1 with equal positive birth and death"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Birth,
    Death,
    Shift,
    Remark,
}

impl MoveKind {
    const ALL: [MoveKind; 4] = [MoveKind::Birth, MoveKind::Death, MoveKind::Shift, MoveKind::Remark];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MoveStats {
    pub proposed: [u64; 4],
    pub accepted: [u64; 4],
}

impl MoveStats {
    pub fn acceptance_rate(&self, kind: MoveKind) -> f64 {
        let i = kind.index();
        if self.proposed[i] == 0 {
            0.0
        } else {
            self.accepted[i] as f64 / self.proposed[i] as f64
        }
    }
}

/// Log acceptance ratio of a birth from `n` atoms.
pub fn birth_log_ratio(mass: f64, n: usize, delta_h: f64) -> f64 {
    mass.ln() - ((n + 1) as f64).ln() - delta_h
}

/// Log acceptance ratio of a death from `n >= 1` atoms.
pub fn death_log_ratio(mass: f64, n: usize, delta_h: f64) -> f64 {
    (n as f64).ln() - mass.ln() - delta_h
}

/// Log acceptance ratio of a symmetric move or an independent remark.
pub fn move_log_ratio(delta_h: f64) -> f64 {
    -delta_h
}

pub const DRIFT_CHECK_INTERVAL: u64 = 10_000;
pub const DRIFT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct ChainState {
    points: Vec<MarkedPoint>,
    energy: f64,
    step: u64,
    stats: MoveStats,
}

impl ChainState {
    /// The empty configuration, whose conditional energy is 0.
    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            energy: 0.0,
            step: 0,
            stats: MoveStats::default(),
        }
    }

    pub fn points(&self) -> &[MarkedPoint] {
        &self.points
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn stats(&self) -> &MoveStats {
        &self.stats
    }

    pub fn configuration(&self, dim: usize) -> Configuration {
        Configuration::from_points_unchecked(dim, self.points.clone())
    }
}

fn without(points: &[MarkedPoint], idx: usize) -> Vec<MarkedPoint> {
    let mut v = points.to_vec();
    v.remove(idx);
    v
}

fn occupied(points: &[MarkedPoint], x: &[f64]) -> bool {
    points.iter().any(|p| p.location() == x)
}

/// Energy change from `current` to `proposed`; for local models through
/// the insertion/removal sums around the changed atom.
fn energy_change(
    target: &Target,
    current: &[MarkedPoint],
    removed: Option<usize>,
    added: Option<&MarkedPoint>,
) -> Result<Energy> {
    let sup = added.map_or(0.0, |p| p.mark_norm()).max(mark_sup_points(current));
    let env = target.env_for(sup);
    let model = target.model.as_ref();
    if model.is_local() {
        let base = match removed {
            Some(i) => without(current, i),
            None => current.to_vec(),
        };
        let gain = match added {
            Some(p) => model.insertion_delta(&base, env, p)?,
            None => Energy::ZERO,
        };
        let loss = match removed {
            Some(i) => model
                .insertion_delta(&base, env, &current[i])?
                .finite()
                .ok_or_else(|| Error::Numerical("current state has infinite energy".into()))?,
            None => 0.0,
        };
        Ok(gain.minus(loss))
    } else {
        let mut proposed = match removed {
            Some(i) => without(current, i),
            None => current.to_vec(),
        };
        if let Some(p) = added {
            match removed {
                Some(i) => proposed.insert(i, p.clone()),
                None => proposed.push(p.clone()),
            }
        }
        let before = model
            .conditional(current, env)?
            .finite()
            .ok_or_else(|| Error::Numerical("current state has infinite energy".into()))?;
        Ok(model.conditional(&proposed, env)?.minus(before))
    }
}

/// One birth/death/move/remark Metropolis–Hastings step. Returns the move
/// attempted and whether it was accepted.
pub fn bdm_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    target: &Target,
    mix: &ProposalMix,
    rng: &mut R,
) -> Result<(MoveKind, bool)> {
    let reference = &target.reference;
    let mass = reference.mass();
    let n = state.points.len();
    let u_kind: f64 = rng.random();
    let kind = if u_kind < mix.birth {
        MoveKind::Birth
    } else if u_kind < mix.birth + mix.death {
        MoveKind::Death
    } else if u_kind < mix.birth + mix.death + mix.shift {
        MoveKind::Shift
    } else {
        MoveKind::Remark
    };

    // (removed index, added atom, log ratio without the energy term)
    let proposal: Option<(Option<usize>, Option<MarkedPoint>, f64)> = match kind {
        MoveKind::Birth => {
            let p = reference.sample_point(rng);
            let ok = mass > 0.0 && !occupied(&state.points, p.location()) && target.admits_mark(&p);
            ok.then(|| (None, Some(p), birth_log_ratio(mass, n, 0.0)))
        }
        MoveKind::Death => (n > 0).then(|| {
            let i = rng.random_range(0..n);
            (Some(i), None, death_log_ratio(mass, n, 0.0))
        }),
        MoveKind::Shift => {
            if n == 0 {
                None
            } else {
                let i = rng.random_range(0..n);
                let old = &state.points[i];
                let x: Vec<f64> = match reference.locations() {
                    LocationLaw::Uniform => old
                        .location()
                        .iter()
                        .map(|c| {
                            let g: f64 = StandardNormal.sample(rng);
                            c + mix.move_scale * g
                        })
                        .collect(),
                    LocationLaw::Sites(_) => reference.sample_location(rng),
                };
                let ok = reference.window().contains(&x) && !occupied(&state.points, &x);
                ok.then(|| (Some(i), Some(old.with_location(x)), 0.0))
            }
        }
        MoveKind::Remark => {
            if n == 0 {
                None
            } else {
                let i = rng.random_range(0..n);
                let p = state.points[i].with_mark(reference.marks().sample(rng));
                target.admits_mark(&p).then(|| (Some(i), Some(p), 0.0))
            }
        }
    };
    let u: f64 = rng.random();
    state.step += 1;
    state.stats.proposed[kind.index()] += 1;

    let mut accepted = false;
    if let Some((removed, added, log_base)) = proposal {
        if let Energy::Finite(dh) = energy_change(target, &state.points, removed, added.as_ref())? {
            if u.ln() < log_base - dh {
                accepted = true;
                state.energy += dh;
                match (removed, added) {
                    (Some(i), Some(p)) => state.points[i] = p,
                    (Some(i), None) => {
                        state.points.remove(i);
                    }
                    (None, Some(p)) => state.points.push(p),
                    (None, None) => {}
                }
            }
        }
    }
    if accepted {
        state.stats.accepted[kind.index()] += 1;
    }
    if state.step % DRIFT_CHECK_INTERVAL == 0 {
        check_drift(state, target)?;
    }
    Ok((kind, accepted))
}

/// Recomputes the cached energy and fails when it drifted.
pub fn check_drift(state: &mut ChainState, target: &Target) -> Result<()> {
    let recomputed = target
        .energy(&state.points)?
        .finite()
        .ok_or_else(|| Error::Numerical("chain reached a state of infinite energy".into()))?;
    if (recomputed - state.energy).abs() > DRIFT_TOLERANCE * recomputed.abs().max(1.0) {
        log::error!(
            "energy drift at step {}: cached {}, recomputed {}, state {:?}",
            state.step,
            state.energy,
            recomputed,
            state.points
        );
        return Err(Error::Drift {
            step: state.step,
            cached: state.energy,
            recomputed,
        });
    }
    state.energy = recomputed;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub steps: u64,
    pub burn_in: u64,
    pub thin: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            steps: 1_100_000,
            burn_in: 100_000,
            thin: 100,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.steps <= self.burn_in || self.thin == 0 {
            return Err(Error::InvalidParameter(format!(
                "schedule needs steps > burn_in and thin >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Runs a chain from the empty configuration and keeps every `thin`-th
/// state after burn-in.
pub fn run_chain<R: Rng + ?Sized>(
    target: &Target,
    mix: &ProposalMix,
    schedule: Schedule,
    rng: &mut R,
) -> Result<(Vec<Configuration>, ChainState)> {
    schedule.validate()?;
    mix.validate()?;
    let mut state = ChainState::empty();
    let mut samples = Vec::new();
    for s in 1..=schedule.steps {
        bdm_step(&mut state, target, mix, rng)?;
        if s > schedule.burn_in && (s - schedule.burn_in) % schedule.thin == 0 {
            samples.push(state.configuration(target.reference.dim()));
        }
    }
    log::debug!("chain finished: {:?}", state.stats);
    Ok((samples, state))
}

/// Independent chains on streams `0..n_chains` of `seed`, run in parallel;
/// results are in stream order.
pub fn run_chains(
    target: &Target,
    mix: &ProposalMix,
    schedule: Schedule,
    seed: u64,
    n_chains: usize,
) -> Result<Vec<Vec<Configuration>>> {
    (0..n_chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = chain_rng(seed, c as u64);
            run_chain(target, mix, schedule, &mut rng).map(|(s, _)| s)
        })
        .collect()
}

/// Final state of a cut-off kernel chain.
#[allow(clippy::too_many_arguments)]
pub fn sample_cutoff_kernel<R: Rng + ?Sized>(
    model: Arc<dyn EnergyModel>,
    reference: PoissonReference,
    outer: &Window,
    m0: f64,
    xi: &Configuration,
    mix: &ProposalMix,
    steps: u64,
    rng: &mut R,
) -> Result<Configuration> {
    let target = Target::cutoff(model, reference, xi, outer, m0)?;
    let mut state = ChainState::empty();
    for _ in 0..steps {
        bdm_step(&mut state, &target, mix, rng)?;
    }
    Ok(state.configuration(target.reference.dim()))
}

pub const REJECTION_MIN_ATTEMPTS: u64 = 100_000;
pub const REJECTION_MIN_RATE: f64 = 1e-4;

/// Exact sampler proposing from the reference and accepting with
/// probability `exp(-H)`; needs a certificate that the relevant energy is
/// non-negative.
#[derive(Debug)]
pub struct RejectionSampler<'a> {
    target: &'a Target,
    attempts: u64,
    accepted: u64,
}

impl<'a> RejectionSampler<'a> {
    pub fn new(target: &'a Target) -> Result<Self> {
        let model = target.model();
        let certified = if target.has_environment() {
            model.conditional_is_nonnegative()
        } else {
            model.is_nonnegative()
        };
        if !certified {
            return Err(Error::Precondition(format!(
                "rejection sampling needs a non-negative energy, {} has no certificate",
                model.id()
            )));
        }
        Ok(Self {
            target,
            attempts: 0,
            accepted: 0,
        })
    }

    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            1.0
        } else {
            self.accepted as f64 / self.attempts as f64
        }
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Configuration> {
        loop {
            self.attempts += 1;
            let candidate = self.target.reference.sample(rng);
            let u: f64 = rng.random();
            if let Some(c) = candidate {
                let admitted = c.points().iter().all(|p| self.target.admits_mark(p));
                if admitted && u < self.target.energy(c.points())?.boltzmann() {
                    self.accepted += 1;
                    return Ok(c);
                }
            }
            if self.attempts >= REJECTION_MIN_ATTEMPTS && self.acceptance_rate() < REJECTION_MIN_RATE {
                return Err(Error::LowAcceptance {
                    rate: self.acceptance_rate(),
                    attempts: self.attempts,
                });
            }
        }
    }
}

/// One exact draw from the free-boundary Gibbs measure.
pub fn rejection_sample<R: Rng + ?Sized>(
    model: Arc<dyn EnergyModel>,
    reference: PoissonReference,
    rng: &mut R,
) -> Result<Configuration> {
    let target = Target::free(model, reference);
    RejectionSampler::new(&target)?.sample(rng)
}

impl MoveKind {
    pub fn all() -> [MoveKind; 4] {
        Self::ALL
    }
}
