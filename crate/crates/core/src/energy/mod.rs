//! Energy functionals, conditional energies with an explicit random range,
//! and the concrete model families.

mod audit;
mod models;

use std::fmt;
use std::ops::Add;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::configuration::{mark_sup_points, Configuration, MarkedPoint, Window};
use crate::error::{Error, Result};
use crate::tempered::{is_tempered, l_range};

pub use audit::{
    audit_is_bounded, diffusion_local_bound, escalating_local_audit, escalating_stability_audit,
    lj_minimum, local_stability_audit, poisson_trials, psi_stability_constant, stability_audit,
    tempered_environment, EscalationReport, StabilityReport,
};
pub use models::{
    lj_pair, CountCap, Diffusion, HardSphere, NonNegPair, PairPotential, Poisson, Quermass,
};

/// A value in `R ∪ {+∞}`. Infinity absorbs under addition; NaN is never
/// produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Energy {
    Finite(f64),
    Infinite,
}

impl Energy {
    pub const ZERO: Energy = Energy::Finite(0.0);

    /// Maps `+inf` to [`Energy::Infinite`]; panics on NaN or `-inf`, which
    /// would signal a bug in a model.
    pub fn from_f64(v: f64) -> Self {
        assert!(!v.is_nan(), "energy evaluated to NaN");
        assert!(v != f64::NEG_INFINITY, "energy evaluated to -inf");
        if v == f64::INFINITY {
            Energy::Infinite
        } else {
            Energy::Finite(v)
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Energy::Finite(_))
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Energy::Infinite)
    }

    /// The value as a float, with `+inf` for infinity.
    pub fn value(&self) -> f64 {
        match self {
            Energy::Finite(v) => *v,
            Energy::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Energy::Finite(v) => Some(*v),
            Energy::Infinite => None,
        }
    }

    /// `exp(-H)`, zero for infinite energy.
    pub fn boltzmann(&self) -> f64 {
        match self {
            Energy::Finite(v) => (-v).exp(),
            Energy::Infinite => 0.0,
        }
    }

    /// `self - v` for a finite `v`.
    pub fn minus(&self, v: f64) -> Energy {
        match self {
            Energy::Finite(a) => Energy::from_f64(a - v),
            Energy::Infinite => Energy::Infinite,
        }
    }

    /// Difference of two energies; `None` when the subtrahend is infinite.
    pub fn checked_sub(&self, other: Energy) -> Option<Energy> {
        other.finite().map(|b| self.minus(b))
    }
}

impl Add for Energy {
    type Output = Energy;

    fn add(self, rhs: Energy) -> Energy {
        match (self, rhs) {
            (Energy::Finite(a), Energy::Finite(b)) => Energy::from_f64(a + b),
            _ => Energy::Infinite,
        }
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Energy::Finite(v) => write!(f, "{v}"),
            Energy::Infinite => write!(f, "inf"),
        }
    }
}

/// A translation-invariant energy functional on finite configurations.
pub trait EnergyModel: Send + Sync + fmt::Debug {
    fn id(&self) -> String;

    fn energy(&self, points: &[MarkedPoint]) -> Energy;

    /// Energy of `inner` in the presence of `env`:
    /// `H(inner ∪ env) - H(env)`.
    fn conditional(&self, inner: &[MarkedPoint], env: &[MarkedPoint]) -> Result<Energy> {
        let base = self
            .energy(env)
            .finite()
            .ok_or(Error::InfeasibleEnvironment)?;
        let all: Vec<MarkedPoint> = inner.iter().chain(env).cloned().collect();
        Ok(self.energy(&all).minus(base))
    }

    /// Change of the conditional energy when `new` joins `base`.
    fn insertion_delta(
        &self,
        base: &[MarkedPoint],
        env: &[MarkedPoint],
        new: &MarkedPoint,
    ) -> Result<Energy> {
        let before = self.conditional(base, env)?.finite().ok_or_else(|| {
            Error::Precondition("insertion into a configuration of infinite energy".into())
        })?;
        let mut grown = base.to_vec();
        grown.push(new.clone());
        Ok(self.conditional(&grown, env)?.minus(before))
    }

    /// Whether `insertion_delta` is a local sum rather than a recomputation.
    fn is_local(&self) -> bool {
        false
    }

    /// Certifies `H >= 0` on every finite configuration.
    fn is_nonnegative(&self) -> bool {
        false
    }

    /// Certifies `H_Λ >= 0` for every environment.
    fn conditional_is_nonnegative(&self) -> bool {
        false
    }

    /// The only dimension the model is defined in, if restricted.
    fn required_dim(&self) -> Option<usize> {
        None
    }
}

/// Exterior points of an environment, ordered by distance to the window so
/// that truncations at any radius are prefixes.
#[derive(Clone, Debug, Default)]
pub struct Environment {
    points: Vec<MarkedPoint>,
    distances: Vec<f64>,
}

impl Environment {
    pub fn new(xi: &Configuration, window: &Window) -> Self {
        let mut tagged: Vec<(f64, MarkedPoint)> = xi
            .points()
            .iter()
            .filter(|p| !window.contains(p.location()))
            .map(|p| (window.distance_to(p.location()), p.clone()))
            .collect();
        tagged.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (distances, points) = tagged.into_iter().unzip();
        Self { points, distances }
    }

    pub fn points(&self) -> &[MarkedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points within distance `r` of the window.
    pub fn within(&self, r: f64) -> &[MarkedPoint] {
        let k = self.distances.partition_point(|d| *d <= r);
        &self.points[..k]
    }

    /// The sub-environment lying in `outer`, order preserved.
    pub fn restricted_to(&self, outer: &Window) -> Environment {
        let (points, distances) = self
            .points
            .iter()
            .zip(&self.distances)
            .filter(|(p, _)| outer.contains(p.location()))
            .map(|(p, d)| (p.clone(), *d))
            .unzip();
        Environment { points, distances }
    }
}

/// `2 l(t) + 2 sup|m| + 1`, the radius beyond which a tempered exterior
/// cannot affect the conditional energy of `inner`.
pub fn interaction_range(inner: &[MarkedPoint], t: u64, d: usize, delta: f64) -> f64 {
    2.0 * l_range(t, d, delta) + 2.0 * mark_sup_points(inner) + 1.0
}

/// Conditional energy of `gamma` (supported in `window`) given the exterior
/// of `xi`, truncated at the interaction range.
pub fn conditional_energy(
    model: &dyn EnergyModel,
    gamma: &Configuration,
    xi: &Configuration,
    window: &Window,
    t: u64,
    delta: f64,
) -> Result<Energy> {
    if gamma.dim() != xi.dim() {
        return Err(Error::DimensionMismatch {
            expected: gamma.dim(),
            found: xi.dim(),
        });
    }
    if let Some(p) = gamma.points().iter().find(|p| !window.contains(p.location())) {
        return Err(Error::Precondition(format!(
            "point {:?} lies outside the window",
            p.location()
        )));
    }
    let exterior = xi.restrict_complement(window);
    let report = is_tempered(&exterior, t, delta);
    if !report.tempered {
        return Err(Error::NotTempered {
            t,
            minimal: report.minimal_t,
        });
    }
    let env = Environment::new(&exterior, window);
    let r = interaction_range(gamma.points(), t, gamma.dim(), delta);
    model.conditional(gamma.points(), env.within(r))
}

/// Difference between the gaps `H_Δ - H_Λ` of two interior fillings sharing
/// the same exterior; `None` when an energy involved is infinite.
#[allow(clippy::too_many_arguments)]
pub fn additivity_check(
    model: &dyn EnergyModel,
    filling_a: &Configuration,
    filling_b: &Configuration,
    exterior: &Configuration,
    inner: &Window,
    outer: &Window,
    t: u64,
    delta: f64,
) -> Result<Option<f64>> {
    let gap = |filling: &Configuration| -> Result<Option<f64>> {
        let ring = exterior.restrict(outer);
        let far = exterior.restrict_complement(outer);
        let big = filling.union(&ring)?;
        let h_outer = conditional_energy(model, &big, &far, outer, t, delta)?;
        let h_inner = conditional_energy(model, filling, exterior, inner, t, delta)?;
        Ok(match (h_outer, h_inner) {
            (Energy::Finite(a), Energy::Finite(b)) => Some(a - b),
            _ => None,
        })
    };
    Ok(match (gap(filling_a)?, gap(filling_b)?) {
        (Some(a), Some(b)) => Some(a - b),
        _ => None,
    })
}

/// Declarative model description used by run configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Poisson,
    Quermass {
        alpha1: f64,
        alpha2: f64,
        alpha3: f64,
    },
    Hardcore,
    Nonnegpair {
        potential: PairPotential,
    },
    Diffusion {
        #[serde(default = "default_a0")]
        a0: f64,
    },
}

fn default_a0() -> f64 {
    1.5
}

impl ModelSpec {
    pub fn build(&self, d: usize) -> Result<Arc<dyn EnergyModel>> {
        let model: Arc<dyn EnergyModel> = match self {
            ModelSpec::Poisson => Arc::new(Poisson),
            ModelSpec::Quermass {
                alpha1,
                alpha2,
                alpha3,
            } => Arc::new(Quermass::new(*alpha1, *alpha2, *alpha3)?),
            ModelSpec::Hardcore => Arc::new(HardSphere),
            ModelSpec::Nonnegpair { potential } => Arc::new(NonNegPair::new(potential.clone())?),
            ModelSpec::Diffusion { a0 } => Arc::new(Diffusion::with_range(*a0)?),
        };
        if let Some(req) = model.required_dim() {
            if req != d {
                return Err(Error::DimensionMismatch {
                    expected: req,
                    found: d,
                });
            }
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configuration::Mark;
    use crate::marks::PathMark;
    use proptest::prelude::*;

    fn pt(x: &[f64], r: f64) -> MarkedPoint {
        MarkedPoint::radius(x.to_vec(), r).unwrap()
    }

    fn cfg(points: Vec<MarkedPoint>) -> Configuration {
        let d = points.first().map(|p| p.dim()).unwrap_or(2);
        Configuration::new(d, points).unwrap()
    }

    fn models() -> Vec<Arc<dyn EnergyModel>> {
        vec![
            Arc::new(Poisson),
            Arc::new(Quermass::new(1.0, 0.5, 0.3).unwrap()),
            Arc::new(HardSphere),
            Arc::new(NonNegPair::new(PairPotential::Power { coef: 1.5, exponent: 1.0 }).unwrap()),
            Arc::new(Diffusion::default()),
        ]
    }

    #[test]
    fn energy_arithmetic() {
        assert_eq!(Energy::Finite(1.0) + Energy::Infinite, Energy::Infinite);
        assert_eq!(Energy::Infinite.minus(3.0), Energy::Infinite);
        assert_eq!(Energy::Finite(1.0).checked_sub(Energy::Infinite), None);
        assert_eq!(Energy::from_f64(f64::INFINITY), Energy::Infinite);
        assert_eq!(Energy::Infinite.boltzmann(), 0.0);
    }

    #[test]
    fn empty_configuration_has_zero_energy() {
        for m in models() {
            assert_eq!(m.energy(&[]), Energy::ZERO, "{}", m.id());
        }
    }

    #[test]
    fn interaction_range_examples() {
        assert!((interaction_range(&[], 1, 2, 1.0) - 9.0).abs() < 1e-12);
        assert!((interaction_range(&[pt(&[0.0, 0.0], 0.5)], 1, 2, 1.0) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_examples() {
        let lam = Window::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let gamma = cfg(vec![pt(&[0.0, 0.0], 0.4), pt(&[0.5, 0.1], 0.3)]);
        for m in models() {
            let free = conditional_energy(m.as_ref(), &gamma, &Configuration::empty(2), &lam, 1, 1.0)
                .unwrap();
            assert_eq!(free, m.energy(gamma.points()), "{}", m.id());
        }

        // diffusion: one interior point, one interacting exterior point
        let model = Diffusion::default();
        let path = |end: [f64; 2]| {
            let k = 8;
            Mark::Path(Arc::new(
                PathMark::new(
                    (0..=k)
                        .map(|i| {
                            let s = i as f64 / k as f64;
                            [end[0] * s, end[1] * s]
                        })
                        .collect(),
                )
                .unwrap(),
            ))
        };
        let x1 = MarkedPoint::new(vec![0.5, 0.0], path([0.3, 0.0])).unwrap();
        let x2 = MarkedPoint::new(vec![2.3, 0.0], path([0.0, 0.4])).unwrap();
        let g = cfg(vec![x1.clone()]);
        let xi = cfg(vec![x2.clone()]);
        let got = conditional_energy(&model, &g, &xi, &lam, 1, 0.75).unwrap().value();
        let u: f64 = 1.8;
        let phi = 16.0 * ((1.5 / u).powi(12) - (1.5 / u).powi(6));
        // |m1(s) - m2(s)|^2 = s^2 (0.09 + 0.16); trapezoid on 8 cells
        let trap: f64 = (0..8)
            .map(|i| {
                let (a, b) = (i as f64 / 8.0, (i + 1) as f64 / 8.0);
                0.5 * (a * a + b * b) * 0.25 / 8.0
            })
            .sum();
        let psi = -1.0 - 0.3f64.powf(2.5);
        assert!((got - (psi + phi + trap)).abs() < 1e-12, "{got}");
    }

    #[test]
    fn far_environment_is_ignored_bit_exactly() {
        let lam = Window::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let gamma = cfg(vec![pt(&[0.0, 0.0], 0.4), pt(&[0.5, 0.1], 0.3)]);
        let near = cfg(vec![pt(&[1.5, 0.0], 0.2)]);
        let r = interaction_range(gamma.points(), 3, 2, 1.0);
        let far = cfg(vec![pt(&[1.5, 0.0], 0.2), pt(&[1.0 + r + 5.0, 0.0], 0.1)]);
        for m in models() {
            let a = conditional_energy(m.as_ref(), &gamma, &near, &lam, 3, 1.0).unwrap();
            let b = conditional_energy(m.as_ref(), &gamma, &far, &lam, 3, 1.0).unwrap();
            assert_eq!(a.value().to_bits(), b.value().to_bits(), "{}", m.id());
        }
    }

    #[test]
    fn untempered_environment_is_rejected() {
        let lam = Window::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let xi = cfg(vec![pt(&[1.5, 0.0], 3.0)]);
        let err = conditional_energy(&Poisson, &Configuration::empty(2), &xi, &lam, 1, 1.0);
        assert!(matches!(err, Err(Error::NotTempered { .. })));
    }

    #[test]
    fn hard_core_conditional_is_a_feasibility_check() {
        // the environment overlaps itself, yet the conditional energy of a
        // compatible interior point is finite
        let lam = Window::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let xi = cfg(vec![pt(&[3.0, 0.0], 0.6), pt(&[3.5, 0.0], 0.6)]);
        let gamma = cfg(vec![pt(&[0.0, 0.0], 0.5)]);
        let h = conditional_energy(&HardSphere, &gamma, &xi, &lam, 20, 1.0).unwrap();
        assert_eq!(h, Energy::ZERO);
        assert!(Quermass::new(1.0, 0.0, 0.0)
            .unwrap()
            .conditional(gamma.points(), xi.points())
            .is_ok());
    }

    #[test]
    fn additivity_free_boundary() {
        let lam = Window::new_box(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let big = Window::new_box(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
        let a = cfg(vec![pt(&[0.0, 0.0], 0.4)]);
        let b = cfg(vec![pt(&[0.5, 0.5], 0.2), pt(&[-0.5, 0.2], 0.3)]);
        let ring = cfg(vec![pt(&[1.5, 0.0], 0.5), pt(&[-2.0, 2.0], 0.3)]);
        let r = additivity_check(&Poisson, &a, &b, &ring, &lam, &big, 5, 1.0).unwrap();
        assert_eq!(r, Some(0.0));
        for m in models() {
            let r = additivity_check(m.as_ref(), &a, &b, &ring, &lam, &big, 5, 1.0).unwrap();
            if let Some(r) = r {
                assert!(r.abs() < 1e-12, "{}: {r}", m.id());
            }
        }
    }

    #[test]
    fn model_spec_round_trip() {
        let spec: ModelSpec = serde_json::from_str(r#"{"model":"quermass","alpha1":1,"alpha2":0,"alpha3":0}"#).unwrap();
        assert!(spec.build(2).is_ok());
        assert!(spec.build(3).is_err());
        assert!(serde_json::from_str::<ModelSpec>(r#"{"model":"ising"}"#).is_err());
    }

    fn arb_points() -> impl Strategy<Value = Vec<MarkedPoint>> {
        prop::collection::vec(((-5.0..5.0f64), (-5.0..5.0f64), (0.0..1.2f64)), 0..10).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (x, y, r))| pt(&[x + 1e-7 * i as f64, y], r))
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn translation_invariance(points in arb_points(), vx in -20.0..20.0f64, vy in -20.0..20.0f64) {
            for m in models() {
                let a = m.energy(&points);
                let shifted: Vec<MarkedPoint> = points.iter().map(|p| p.translated(&[vx, vy])).collect();
                let b = m.energy(&shifted);
                match (a, b) {
                    (Energy::Finite(x), Energy::Finite(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{} {x} {y}", m.id()),
                    (x, y) => prop_assert_eq!(x, y),
                }
            }
        }

        #[test]
        fn conditional_matches_difference(points in arb_points(), split in 0usize..10) {
            let k = split.min(points.len());
            let (inner, env) = points.split_at(k);
            for m in models() {
                let h_env = m.energy(env);
                if h_env.is_infinite() { continue; }
                let c = m.conditional(inner, env).unwrap();
                let full = m.energy(&points).minus(h_env.value());
                match (c, full) {
                    (Energy::Finite(x), Energy::Finite(y)) => {
                        // the difference oracle cancels the environment's own energy
                        let scale = h_env.value().abs().max(x.abs()).max(1.0);
                        prop_assert!((x - y).abs() <= 1e-9 * scale, "{}: {x} vs {y}", m.id());
                    }
                    (x, y) => prop_assert_eq!(x, y),
                }
            }
        }

        #[test]
        fn insertion_delta_is_a_difference(points in arb_points(), x in -5.0..5.0f64, y in -5.0..5.0f64, r in 0.0..1.2f64) {
            let new = pt(&[x + 0.5e-7, y], r);
            let (base, env) = points.split_at(points.len() / 2);
            for m in models() {
                let Ok(before) = m.conditional(base, env) else { continue };
                let Some(b) = before.finite() else { continue };
                let mut grown = base.to_vec();
                grown.push(new.clone());
                let after = m.conditional(&grown, env).unwrap();
                let delta = m.insertion_delta(base, env, &new).unwrap();
                match (after.minus(b), delta) {
                    (Energy::Finite(u), Energy::Finite(v)) => {
                        let scale = b.abs().max(after.value().abs()).max(1.0);
                        prop_assert!((u - v).abs() <= 1e-9 * scale, "{}: {u} vs {v}", m.id());
                    }
                    (u, v) => prop_assert_eq!(u, v),
                }
            }
        }
    }
}
