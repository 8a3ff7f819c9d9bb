use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Energy, EnergyModel};
use crate::configuration::MarkedPoint;
use crate::error::{Error, Result};
use crate::geometry::{functionals, DiscSystem};
use crate::marks::PathMark;

/// Shared evaluation of energies made of self terms and pair terms.
trait PairInteraction {
    fn self_term(&self, _p: &MarkedPoint) -> f64 {
        0.0
    }

    /// `None` when the two atoms do not interact.
    fn pair(&self, a: &MarkedPoint, b: &MarkedPoint) -> Option<f64>;
}

fn pair_energy<P: PairInteraction>(model: &P, points: &[MarkedPoint]) -> Energy {
    let mut sum = 0.0;
    for (i, p) in points.iter().enumerate() {
        sum += model.self_term(p);
        for q in &points[..i] {
            if let Some(v) = model.pair(p, q) {
                if v == f64::INFINITY {
                    return Energy::Infinite;
                }
                sum += v;
            }
        }
    }
    Energy::from_f64(sum)
}

fn pair_conditional<P: PairInteraction>(
    model: &P,
    inner: &[MarkedPoint],
    env: &[MarkedPoint],
) -> Energy {
    let Energy::Finite(mut sum) = pair_energy(model, inner) else {
        return Energy::Infinite;
    };
    for p in inner {
        for q in env {
            if let Some(v) = model.pair(p, q) {
                if v == f64::INFINITY {
                    return Energy::Infinite;
                }
                sum += v;
            }
        }
    }
    Energy::from_f64(sum)
}

fn pair_insertion<P: PairInteraction>(
    model: &P,
    base: &[MarkedPoint],
    env: &[MarkedPoint],
    new: &MarkedPoint,
) -> Energy {
    let mut sum = model.self_term(new);
    for q in base.iter().chain(env) {
        if let Some(v) = model.pair(new, q) {
            if v == f64::INFINITY {
                return Energy::Infinite;
            }
            sum += v;
        }
    }
    Energy::from_f64(sum)
}

macro_rules! pair_model_methods {
    () => {
        fn energy(&self, points: &[MarkedPoint]) -> Energy {
            pair_energy(self, points)
        }

        fn conditional(&self, inner: &[MarkedPoint], env: &[MarkedPoint]) -> Result<Energy> {
            Ok(pair_conditional(self, inner, env))
        }

        fn insertion_delta(
            &self,
            base: &[MarkedPoint],
            env: &[MarkedPoint],
            new: &MarkedPoint,
        ) -> Result<Energy> {
            Ok(pair_insertion(self, base, env, new))
        }

        fn is_local(&self) -> bool {
            true
        }
    };
}

/// The free model `H ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Poisson;

impl PairInteraction for Poisson {
    fn pair(&self, _a: &MarkedPoint, _b: &MarkedPoint) -> Option<f64> {
        None
    }
}

impl EnergyModel for Poisson {
    fn id(&self) -> String {
        "poisson".into()
    }

    pair_model_methods!();

    fn is_nonnegative(&self) -> bool {
        true
    }

    fn conditional_is_nonnegative(&self) -> bool {
        true
    }
}

/// Hard balls: infinite energy as soon as two balls `B(x, |m|)` overlap.
#[derive(Clone, Copy, Debug, Default)]
pub struct HardSphere;

impl PairInteraction for HardSphere {
    fn pair(&self, a: &MarkedPoint, b: &MarkedPoint) -> Option<f64> {
        (a.distance(b) < a.mark_norm() + b.mark_norm()).then_some(f64::INFINITY)
    }
}

impl EnergyModel for HardSphere {
    fn id(&self) -> String {
        "hardcore".into()
    }

    pair_model_methods!();

    fn is_nonnegative(&self) -> bool {
        true
    }

    fn conditional_is_nonnegative(&self) -> bool {
        true
    }
}

/// Radial profile of a non-negative pair interaction, vanishing at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairPotential {
    /// `coef * r^exponent`.
    Power { coef: f64, exponent: f64 },
    /// Piecewise linear through `(distances[i], values[i])`, constant past
    /// the last knot.
    Table { distances: Vec<f64>, values: Vec<f64> },
}

impl PairPotential {
    fn validate(&self) -> Result<()> {
        match self {
            PairPotential::Power { coef, exponent } => {
                if !(*coef >= 0.0) || !(*exponent > 0.0) || !coef.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "power potential needs coef >= 0 and exponent > 0, got {coef}, {exponent}"
                    )));
                }
            }
            PairPotential::Table { distances, values } => {
                let ok = distances.len() == values.len()
                    && distances.len() >= 2
                    && distances[0] == 0.0
                    && values[0] == 0.0
                    && distances.windows(2).all(|w| w[0] < w[1])
                    && values.iter().all(|v| *v >= 0.0 && v.is_finite());
                if !ok {
                    return Err(Error::InvalidParameter(
                        "table potential needs increasing distances from 0, values >= 0, and phi(0) = 0"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, r: f64) -> f64 {
        match self {
            PairPotential::Power { coef, exponent } => coef * r.powf(*exponent),
            PairPotential::Table { distances, values } => {
                let k = distances.partition_point(|d| *d <= r);
                if k >= distances.len() {
                    return *values.last().unwrap();
                }
                let (d0, d1) = (distances[k - 1], distances[k]);
                let w = (r - d0) / (d1 - d0);
                values[k - 1] * (1.0 - w) + values[k] * w
            }
        }
    }
}

/// `sum_{i<j} phi(|x_i - x_j|)` over pairs whose balls meet.
#[derive(Clone, Debug)]
pub struct NonNegPair {
    potential: PairPotential,
}

impl NonNegPair {
    pub fn new(potential: PairPotential) -> Result<Self> {
        potential.validate()?;
        Ok(Self { potential })
    }

    pub fn potential(&self) -> &PairPotential {
        &self.potential
    }
}

impl PairInteraction for NonNegPair {
    fn pair(&self, a: &MarkedPoint, b: &MarkedPoint) -> Option<f64> {
        let r = a.distance(b);
        (r <= a.mark_norm() + b.mark_norm()).then(|| self.potential.value(r))
    }
}

impl EnergyModel for NonNegPair {
    fn id(&self) -> String {
        "nonnegpair".into()
    }

    pair_model_methods!();

    fn is_nonnegative(&self) -> bool {
        true
    }

    fn conditional_is_nonnegative(&self) -> bool {
        true
    }
}

/// Linear combination of area, perimeter and Euler characteristic of the
/// union of grains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quermass {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Quermass {
    pub fn new(alpha1: f64, alpha2: f64, alpha3: f64) -> Result<Self> {
        if ![alpha1, alpha2, alpha3].iter().all(|a| a.is_finite()) {
            return Err(Error::InvalidParameter("Quermass coefficients must be finite".into()));
        }
        Ok(Self {
            alpha1,
            alpha2,
            alpha3,
        })
    }
}

impl EnergyModel for Quermass {
    fn id(&self) -> String {
        format!("quermass({},{},{})", self.alpha1, self.alpha2, self.alpha3)
    }

    fn energy(&self, points: &[MarkedPoint]) -> Energy {
        if points.is_empty() {
            return Energy::ZERO;
        }
        let f = functionals(&DiscSystem::from_points(points));
        Energy::from_f64(self.alpha1 * f.area + self.alpha2 * f.perimeter + self.alpha3 * f.euler as f64)
    }

    /// All three functionals are additive over connected components of the
    /// union, so only exterior grains linked to `inner` through chains of
    /// touching grains contribute.
    fn conditional(&self, inner: &[MarkedPoint], env: &[MarkedPoint]) -> Result<Energy> {
        const TOUCH_SLACK: f64 = 1e-6;
        let touches = |a: &MarkedPoint, b: &MarkedPoint| {
            a.distance(b) <= a.mark_norm() + b.mark_norm() + TOUCH_SLACK
        };
        let mut linked = vec![false; env.len()];
        let mut frontier: Vec<&MarkedPoint> = inner.iter().collect();
        while let Some(p) = frontier.pop() {
            for (k, q) in env.iter().enumerate() {
                if !linked[k] && touches(p, q) {
                    linked[k] = true;
                    frontier.push(q);
                }
            }
        }
        let relevant: Vec<MarkedPoint> = env
            .iter()
            .zip(&linked)
            .filter(|(_, l)| **l)
            .map(|(q, _)| q.clone())
            .collect();
        let base = self
            .energy(&relevant)
            .finite()
            .ok_or(Error::InfeasibleEnvironment)?;
        let all: Vec<MarkedPoint> = inner.iter().chain(&relevant).cloned().collect();
        Ok(self.energy(&all).minus(base))
    }

    fn is_nonnegative(&self) -> bool {
        self.alpha1 >= 0.0 && self.alpha2 >= 0.0 && self.alpha3 == 0.0
    }

    fn required_dim(&self) -> Option<usize> {
        Some(2)
    }
}

/// Lennard-Jones profile `16((1.5/u)^12 - (1.5/u)^6)`.
pub fn lj_pair(u: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Lennard-Jones distance must be positive, got {u}"
        )));
    }
    Ok(lj(u))
}

fn lj(u: f64) -> f64 {
    let s6 = (1.5 / u).powi(6);
    16.0 * (s6 * s6 - s6)
}

/// Planar points carrying diffusion paths: self term `-1 - |m|^(5/2)`,
/// Lennard-Jones attraction between locations and a clipped quadratic
/// repulsion between paths, active within `a0 + |m1| + |m2|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diffusion {
    pub a0: f64,
    pub path_clip: f64,
}

impl Default for Diffusion {
    fn default() -> Self {
        Self {
            a0: 1.5,
            path_clip: 1e6,
        }
    }
}

impl Diffusion {
    pub fn with_range(a0: f64) -> Result<Self> {
        if !(a0 >= 0.0) || !a0.is_finite() {
            return Err(Error::InvalidParameter(format!("a0 must be >= 0, got {a0}")));
        }
        Ok(Self {
            a0,
            ..Self::default()
        })
    }

    /// `psi(z) = -1 - z^(5/2)`.
    pub fn self_potential(z: f64) -> f64 {
        -1.0 - z.powf(2.5)
    }

    /// Trapezoid approximation of `int_0^1 min(|m1(s) - m2(s)|^2, clip) ds`.
    pub fn path_interaction(&self, a: &PathMark, b: &PathMark) -> f64 {
        let k = a.steps().max(b.steps());
        let f = |i: usize| {
            let s = i as f64 / k as f64;
            let pa = path_at(a, s);
            let pb = path_at(b, s);
            let v2 = (pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2);
            v2.min(self.path_clip)
        };
        let mut sum = 0.5 * (f(0) + f(k));
        for i in 1..k {
            sum += f(i);
        }
        sum / k as f64
    }
}

fn path_at(p: &PathMark, s: f64) -> [f64; 2] {
    let samples = p.samples();
    let k = p.steps();
    let pos = s * k as f64;
    let i = (pos.floor() as usize).min(k - 1);
    let w = pos - i as f64;
    if w == 0.0 {
        return samples[i];
    }
    [
        samples[i][0] * (1.0 - w) + samples[i + 1][0] * w,
        samples[i][1] * (1.0 - w) + samples[i + 1][1] * w,
    ]
}

impl PairInteraction for Diffusion {
    fn self_term(&self, p: &MarkedPoint) -> f64 {
        Self::self_potential(p.mark_norm())
    }

    fn pair(&self, a: &MarkedPoint, b: &MarkedPoint) -> Option<f64> {
        let u = a.distance(b);
        if u > self.a0 + a.mark_norm() + b.mark_norm() {
            return None;
        }
        let paths = match (a.mark().as_path(), b.mark().as_path()) {
            (Some(pa), Some(pb)) => self.path_interaction(pa, pb),
            _ => 0.0,
        };
        Some(lj(u) + paths)
    }
}

impl EnergyModel for Diffusion {
    fn id(&self) -> String {
        format!("diffusion(a0={})", self.a0)
    }

    pair_model_methods!();

    fn required_dim(&self) -> Option<usize> {
        Some(2)
    }
}

/// Caps the number of atoms inside the window: configurations with more
/// than `max_n` interior atoms get infinite energy.
#[derive(Clone, Debug)]
pub struct CountCap {
    inner: Arc<dyn EnergyModel>,
    max_n: usize,
}

impl CountCap {
    pub fn new(inner: Arc<dyn EnergyModel>, max_n: usize) -> Self {
        Self { inner, max_n }
    }
}

impl EnergyModel for CountCap {
    fn id(&self) -> String {
        format!("{}|n<={}", self.inner.id(), self.max_n)
    }

    fn energy(&self, points: &[MarkedPoint]) -> Energy {
        if points.len() > self.max_n {
            Energy::Infinite
        } else {
            self.inner.energy(points)
        }
    }

    fn conditional(&self, inner: &[MarkedPoint], env: &[MarkedPoint]) -> Result<Energy> {
        if inner.len() > self.max_n {
            return Ok(Energy::Infinite);
        }
        self.inner.conditional(inner, env)
    }

    fn insertion_delta(
        &self,
        base: &[MarkedPoint],
        env: &[MarkedPoint],
        new: &MarkedPoint,
    ) -> Result<Energy> {
        if base.len() + 1 > self.max_n {
            return Ok(Energy::Infinite);
        }
        self.inner.insertion_delta(base, env, new)
    }

    fn is_local(&self) -> bool {
        self.inner.is_local()
    }

    fn is_nonnegative(&self) -> bool {
        self.inner.is_nonnegative()
    }

    fn conditional_is_nonnegative(&self) -> bool {
        self.inner.conditional_is_nonnegative()
    }

    fn required_dim(&self) -> Option<usize> {
        self.inner.required_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configuration::Mark;
    use std::f64::consts::PI;

    fn pt(x: &[f64], r: f64) -> MarkedPoint {
        MarkedPoint::radius(x.to_vec(), r).unwrap()
    }

    #[test]
    fn quermass_matches_geometry() {
        let q = Quermass::new(1.0, 0.0, 0.0).unwrap();
        assert!((q.energy(&[pt(&[0.3, 0.2], 1.0)]).value() - PI).abs() < 1e-12);
        let full = Quermass::new(1.0, 2.0, -3.0).unwrap();
        let pts = [pt(&[0.0, 0.0], 1.0), pt(&[1.0, 0.0], 1.0)];
        let expected = 2.0 * PI - (2.0 * PI / 3.0 - 3f64.sqrt() / 2.0) + 2.0 * 8.0 * PI / 3.0 - 3.0;
        assert!((full.energy(&pts).value() - expected).abs() < 1e-9);
        assert!(q.is_nonnegative());
        assert!(!full.is_nonnegative());
    }

    #[test]
    fn hard_sphere_examples() {
        let close = [pt(&[0.0, 0.0], 1.0), pt(&[1.5, 0.0], 1.0)];
        let apart = [pt(&[0.0, 0.0], 1.0), pt(&[2.5, 0.0], 1.0)];
        assert_eq!(HardSphere.energy(&close), Energy::Infinite);
        assert_eq!(HardSphere.energy(&apart), Energy::ZERO);
    }

    #[test]
    fn nonneg_pair_range() {
        let m = NonNegPair::new(PairPotential::Power { coef: 2.0, exponent: 1.0 }).unwrap();
        assert_eq!(m.energy(&[pt(&[0.0, 0.0], 0.5), pt(&[1.1, 0.0], 0.5)]), Energy::ZERO);
        let e = m.energy(&[pt(&[0.0, 0.0], 0.5), pt(&[0.9, 0.0], 0.5)]).value();
        assert!((e - 1.8).abs() < 1e-12);
        let table = PairPotential::Table {
            distances: vec![0.0, 1.0, 2.0],
            values: vec![0.0, 2.0, 3.0],
        };
        assert!((table.value(0.5) - 1.0).abs() < 1e-15);
        assert!((table.value(1.5) - 2.5).abs() < 1e-15);
        assert_eq!(table.value(7.0), 3.0);
        assert!(NonNegPair::new(PairPotential::Power { coef: -1.0, exponent: 1.0 }).is_err());
    }

    #[test]
    fn lj_values() {
        assert_eq!(lj_pair(1.5).unwrap(), 0.0);
        let umin = 1.5 * 2f64.powf(1.0 / 6.0);
        assert!((lj_pair(umin).unwrap() + 4.0).abs() < 1e-12);
        assert!(lj_pair(1e4).unwrap() < 0.0 && lj_pair(1e4).unwrap() > -1e-15);
        for u in [1.5, 1.7, 2.0, 3.0, 10.0] {
            assert!(lj_pair(u).unwrap() <= 0.0);
        }
        assert!(lj_pair(0.0).is_err());
        assert!(lj_pair(-1.0).is_err());
    }

    #[test]
    fn diffusion_cutoff_is_exact() {
        let m = Diffusion::default();
        let a = pt(&[0.0, 0.0], 0.2);
        let b = pt(&[1.5 + 0.2 + 0.3 + 1e-9, 0.0], 0.3);
        assert_eq!(m.pair(&a, &b), None);
        let c = pt(&[1.5 + 0.2 + 0.3, 0.0], 0.3);
        assert!(m.pair(&a, &c).is_some());
    }

    #[test]
    fn path_term_is_clipped_and_nonnegative() {
        let m = Diffusion::default();
        let far = PathMark::new(vec![[0.0, 0.0], [1e4, 0.0], [2e4, 0.0]]).unwrap();
        let zero = PathMark::new(vec![[0.0, 0.0]; 3]).unwrap();
        let v = m.path_interaction(&far, &zero);
        assert!((v - (0.5 * 0.0 + 1e6 + 0.5 * 1e6) / 2.0).abs() < 1e-6);
        assert_eq!(m.path_interaction(&zero, &zero), 0.0);
        let a = MarkedPoint::new(vec![0.0, 0.0], Mark::Path(Arc::new(zero))).unwrap();
        let b = pt(&[1.0, 0.0], 0.0);
        assert_eq!(m.pair(&a, &b), Some(lj(1.0)));
    }

    #[test]
    fn count_cap() {
        let cap = CountCap::new(Arc::new(Poisson), 2);
        let pts = [pt(&[0.0], 0.0), pt(&[1.0], 0.0), pt(&[2.0], 0.0)];
        assert_eq!(cap.energy(&pts[..2]), Energy::ZERO);
        assert_eq!(cap.energy(&pts), Energy::Infinite);
        assert_eq!(cap.insertion_delta(&pts[..2], &[], &pts[2]).unwrap(), Energy::Infinite);
        // the environment does not count
        assert_eq!(cap.conditional(&pts[..2], &pts[2..]).unwrap(), Energy::ZERO);
    }
}
