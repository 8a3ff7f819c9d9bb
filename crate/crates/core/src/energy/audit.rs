//! Empirical stability constants and the Lennard-Jones floor.

use rand::Rng;

use super::{conditional_energy, interaction_range, Energy, EnergyModel};
use crate::configuration::{tame_statistic, Configuration, Window};
use crate::error::{Error, Result};
use crate::marks::MarkLaw;
use crate::sampler::sample_poisson;
use crate::tempered::is_tempered;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityReport {
    /// Largest observed `-H / <gamma, f>`; `-inf` when nothing was evaluated.
    pub c_hat: f64,
    pub trials: usize,
    /// Trials with a nonempty configuration of finite energy.
    pub evaluated: usize,
}

fn check_trials(n: usize) -> Result<()> {
    if n < 1000 {
        return Err(Error::Precondition(format!(
            "stability audits need at least 1000 trials, got {n}"
        )));
    }
    Ok(())
}

/// Largest `-H(gamma) / <gamma, 1 + |m|^(d+delta)>` over generated
/// configurations.
pub fn stability_audit<R, G>(
    model: &dyn EnergyModel,
    n_trials: usize,
    delta: f64,
    mut generate: G,
    rng: &mut R,
) -> Result<StabilityReport>
where
    R: Rng + ?Sized,
    G: FnMut(&mut R) -> Result<Configuration>,
{
    check_trials(n_trials)?;
    let mut c_hat = f64::NEG_INFINITY;
    let mut evaluated = 0;
    for _ in 0..n_trials {
        let gamma = generate(rng)?;
        if gamma.is_empty() {
            continue;
        }
        if let Energy::Finite(h) = model.energy(gamma.points()) {
            evaluated += 1;
            c_hat = c_hat.max(-h / tame_statistic(&gamma, delta));
        }
    }
    Ok(StabilityReport {
        c_hat,
        trials: n_trials,
        evaluated,
    })
}

/// Largest `-H_Λ(gamma_Λ xi) / <gamma_Λ, f>` over generated interiors and
/// tempered environments.
#[allow(clippy::too_many_arguments)]
pub fn local_stability_audit<R, G, E>(
    model: &dyn EnergyModel,
    window: &Window,
    t: u64,
    delta: f64,
    n_trials: usize,
    mut interior: G,
    mut environment: E,
    rng: &mut R,
) -> Result<StabilityReport>
where
    R: Rng + ?Sized,
    G: FnMut(&mut R) -> Result<Configuration>,
    E: FnMut(&mut R) -> Result<Configuration>,
{
    check_trials(n_trials)?;
    let mut c_hat = f64::NEG_INFINITY;
    let mut evaluated = 0;
    for _ in 0..n_trials {
        let gamma = interior(rng)?.restrict(window);
        let xi = environment(rng)?;
        if gamma.is_empty() {
            continue;
        }
        if let Energy::Finite(h) = conditional_energy(model, &gamma, &xi, window, t, delta)? {
            evaluated += 1;
            c_hat = c_hat.max(-h / tame_statistic(&gamma, delta));
        }
    }
    Ok(StabilityReport {
        c_hat,
        trials: n_trials,
        evaluated,
    })
}

/// Poisson configurations in `window`, cycling through `intensities`.
pub fn poisson_trials<R: Rng + ?Sized>(
    window: Window,
    intensities: Vec<f64>,
    law: MarkLaw,
) -> impl FnMut(&mut R) -> Result<Configuration> {
    let mut k = 0;
    move |rng: &mut R| {
        let z = intensities[k % intensities.len()];
        k += 1;
        sample_poisson(&window, z, &law, rng)
    }
}

/// A Poisson environment on `outer` minus `inner`, redrawn until it lies in
/// the tempered class `t`.
#[allow(clippy::too_many_arguments)]
pub fn tempered_environment<R: Rng + ?Sized>(
    outer: &Window,
    inner: &Window,
    z: f64,
    law: &MarkLaw,
    t: u64,
    delta: f64,
    max_tries: usize,
    rng: &mut R,
) -> Result<Configuration> {
    for _ in 0..max_tries {
        let xi = sample_poisson(outer, z, law, rng)?.restrict_complement(inner);
        if is_tempered(&xi, t, delta).tempered {
            return Ok(xi);
        }
    }
    Err(Error::Precondition(format!(
        "no environment in class {t} after {max_tries} draws"
    )))
}

/// Whether the constant estimated on ten times the trials stays within a
/// quarter of the smaller run's scale.
pub fn audit_is_bounded(small: f64, large: f64) -> bool {
    if large == f64::NEG_INFINITY {
        return true;
    }
    if small == f64::NEG_INFINITY {
        return large <= 0.0;
    }
    large.is_finite() && large <= small + 0.25 * small.abs().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EscalationReport {
    pub small: StabilityReport,
    pub large: StabilityReport,
    pub bounded: bool,
}

pub fn escalating_stability_audit<R, G>(
    model: &dyn EnergyModel,
    base_trials: usize,
    delta: f64,
    mut generate: G,
    rng: &mut R,
) -> Result<EscalationReport>
where
    R: Rng + ?Sized,
    G: FnMut(&mut R) -> Result<Configuration>,
{
    let small = stability_audit(model, base_trials, delta, &mut generate, rng)?;
    let large = stability_audit(model, 10 * base_trials, delta, &mut generate, rng)?;
    Ok(EscalationReport {
        small,
        large,
        bounded: audit_is_bounded(small.c_hat, large.c_hat),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn escalating_local_audit<R, G, E>(
    model: &dyn EnergyModel,
    window: &Window,
    t: u64,
    delta: f64,
    base_trials: usize,
    mut interior: G,
    mut environment: E,
    rng: &mut R,
) -> Result<EscalationReport>
where
    R: Rng + ?Sized,
    G: FnMut(&mut R) -> Result<Configuration>,
    E: FnMut(&mut R) -> Result<Configuration>,
{
    let small = local_stability_audit(
        model,
        window,
        t,
        delta,
        base_trials,
        &mut interior,
        &mut environment,
        rng,
    )?;
    let large = local_stability_audit(
        model,
        window,
        t,
        delta,
        10 * base_trials,
        &mut interior,
        &mut environment,
        rng,
    )?;
    Ok(EscalationReport {
        small,
        large,
        bounded: audit_is_bounded(small.c_hat, large.c_hat),
    })
}

/// Location and value of the Lennard-Jones minimum, located by bisection on
/// the derivative.
pub fn lj_minimum() -> (f64, f64) {
    let derivative = |u: f64| {
        let s6 = (1.5 / u).powi(6);
        16.0 * (-12.0 * s6 * s6 + 6.0 * s6) / u
    };
    let (mut lo, mut hi) = (1.5, 3.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if derivative(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    (u, super::lj_pair(u).expect("positive distance"))
}

/// Smallest `c` with `-1 - z^(5/2) >= -c (1 + z^(2+delta))` for all `z >= 0`;
/// infinite when `delta < 1/2`.
pub fn psi_stability_constant(delta: f64) -> f64 {
    if delta < 0.5 {
        return f64::INFINITY;
    }
    // beyond z = 1 the ratio is at most 1
    let ratio = |z: f64| (1.0 + z.powf(2.5)) / (1.0 + z.powf(2.0 + delta));
    let n = 100_000;
    (0..=n).map(|i| ratio(i as f64 / n as f64)).fold(1.0, f64::max)
}

/// `c1 ∨ c2 c4(t)` for the diffusion model on a window centred at the
/// origin, where `c2 = 4` is the Lennard-Jones floor and `c4(t)` bounds the
/// number of tempered exterior atoms within the interaction range.
pub fn diffusion_local_bound(window: &Window, t: u64, mark_bound: f64, d: usize, delta: f64) -> f64 {
    let range = interaction_range(&[], t, d, delta) + 2.0 * mark_bound;
    let radius = (window.circumradius() + range).ceil();
    let c4 = t as f64 * radius.powi(d as i32);
    psi_stability_constant(delta).max(4.0 * c4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{lj_pair, HardSphere, NonNegPair, PairPotential, Poisson};
    use crate::marks::RadiusLaw;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square(n: f64) -> Window {
        Window::cube(n, 2)
    }

    #[test]
    fn lj_floor() {
        let (u, v) = lj_minimum();
        assert!((u - 1.5 * 2f64.powf(1.0 / 6.0)).abs() < 1e-9);
        assert!((v + 4.0).abs() < 1e-9);
        assert!((lj_pair(u).unwrap() - v).abs() < 1e-15);
    }

    #[test]
    fn psi_constant() {
        assert_eq!(psi_stability_constant(0.5), 1.0);
        let c = psi_stability_constant(0.75);
        assert!(c > 1.0 && c < 2.0);
        assert!(psi_stability_constant(0.4).is_infinite());
    }

    #[test]
    fn nonnegative_models_have_nonpositive_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let law = MarkLaw::Radius(RadiusLaw::uniform(0.8).unwrap());
        let pair = NonNegPair::new(PairPotential::Power { coef: 1.0, exponent: 2.0 }).unwrap();
        for model in [&Poisson as &dyn EnergyModel, &HardSphere, &pair] {
            let gen = poisson_trials(square(1.0), vec![0.5, 2.0], law.clone());
            let r = stability_audit(model, 1000, 1.0, gen, &mut rng).unwrap();
            assert!(r.c_hat <= 0.0, "{}", model.id());
            assert!(r.evaluated > 0);
        }
        assert!(stability_audit(&Poisson, 10, 1.0, poisson_trials(square(1.0), vec![1.0], law), &mut rng).is_err());
    }

    #[test]
    fn empty_environment_reduces_to_global_audit() {
        let law = MarkLaw::Radius(RadiusLaw::uniform(0.8).unwrap());
        let pair = NonNegPair::new(PairPotential::Power { coef: 1.0, exponent: 2.0 }).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        let global = stability_audit(&pair, 1000, 1.0, poisson_trials(square(1.0), vec![3.0], law.clone()), &mut a)
            .unwrap();
        let local = local_stability_audit(
            &pair,
            &square(1.0),
            1,
            1.0,
            1000,
            poisson_trials(square(1.0), vec![3.0], law),
            |_: &mut ChaCha8Rng| Ok(Configuration::empty(2)),
            &mut b,
        )
        .unwrap();
        assert_eq!(global, local);
    }

    #[test]
    fn boundedness_rule() {
        assert!(audit_is_bounded(2.0, 2.4));
        assert!(!audit_is_bounded(2.0, 2.6));
        assert!(audit_is_bounded(0.1, 0.35));
        assert!(!audit_is_bounded(0.1, 0.4));
        assert!(audit_is_bounded(f64::NEG_INFINITY, f64::NEG_INFINITY));
        assert!(!audit_is_bounded(1.0, f64::INFINITY));
    }
}
