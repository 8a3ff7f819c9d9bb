//! Exact laws of discretised micro-instances: finitely many sites, finitely
//! many marks, every state enumerated.

use crate::configuration::{Configuration, MarkedPoint, Window};
use crate::energy::{Energy, EnergyModel};
use crate::error::{Error, Result};
use crate::numerics::log_sum_exp;

pub const STATE_LIMIT: u128 = 100_000;

/// Sites each carrying reference mass `site_mass`, and a finite radius law.
#[derive(Clone, Debug, PartialEq)]
pub struct MicroInstance {
    pub sites: Vec<Vec<f64>>,
    pub marks: Vec<f64>,
    pub mark_probs: Vec<f64>,
    pub site_mass: f64,
}

impl MicroInstance {
    pub fn new(sites: Vec<Vec<f64>>, marks: Vec<f64>, mark_probs: Vec<f64>, site_mass: f64) -> Result<Self> {
        let d = sites.first().map_or(0, |s| s.len());
        if sites.is_empty() || sites.iter().any(|s| s.len() != d) {
            return Err(Error::InvalidParameter("sites must be nonempty with a common dimension".into()));
        }
        if marks.is_empty() || marks.len() != mark_probs.len() || marks.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidParameter("need one probability per non-negative mark".into()));
        }
        if mark_probs.iter().any(|p| !(*p > 0.0)) || (mark_probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("mark probabilities must be positive and sum to 1".into()));
        }
        if !(site_mass > 0.0) {
            return Err(Error::InvalidParameter("site mass must be positive".into()));
        }
        Ok(Self {
            sites,
            marks,
            mark_probs,
            site_mass,
        })
    }

    /// Centres of a regular grid of `per_axis^d` cells tiling the box, with
    /// site mass `z` times the cell volume.
    pub fn cell_centres(window: &Window, per_axis: usize, marks: Vec<f64>, mark_probs: Vec<f64>, z: f64) -> Result<Self> {
        let (lo, hi) = window.bounding_box();
        let d = lo.len();
        let mut sites = Vec::new();
        let total = per_axis.pow(d as u32);
        for mut k in 0..total {
            let mut x = Vec::with_capacity(d);
            for a in 0..d {
                let i = k % per_axis;
                k /= per_axis;
                x.push(lo[a] + (i as f64 + 0.5) * (hi[a] - lo[a]) / per_axis as f64);
            }
            sites.push(x);
        }
        let cell = window.volume() / total as f64;
        Self::new(sites, marks, mark_probs, z * cell)
    }

    pub fn dim(&self) -> usize {
        self.sites[0].len()
    }

    /// `(1 + #marks)^#sites`: every site empty or holding one mark.
    pub fn state_count(&self) -> u128 {
        ((1 + self.marks.len()) as u128).saturating_pow(self.sites.len() as u32)
    }

    /// The sub-instance of sites inside `window`.
    pub fn restricted(&self, window: &Window) -> Result<Self> {
        let sites: Vec<_> = self.sites.iter().filter(|s| window.contains(s)).cloned().collect();
        Self::new(sites, self.marks.clone(), self.mark_probs.clone(), self.site_mass)
    }

    /// Per-site labels (0 empty, `k + 1` mark `k`) of a configuration living
    /// on the instance, or `None`.
    pub fn labels(&self, config: &Configuration) -> Option<Vec<usize>> {
        let mut labels = vec![0; self.sites.len()];
        for p in config.points() {
            let s = self.sites.iter().position(|x| x.as_slice() == p.location())?;
            let m = self.marks.iter().position(|m| *m == p.mark_norm())?;
            labels[s] = m + 1;
        }
        Some(labels)
    }

    /// Index of a configuration among the enumerated states.
    pub fn state_index(&self, config: &Configuration) -> Option<usize> {
        let base = 1 + self.marks.len();
        let labels = self.labels(config)?;
        Some(labels.iter().rev().fold(0, |acc, l| acc * base + l))
    }

    fn decode(&self, mut index: usize) -> (Vec<MarkedPoint>, f64) {
        let base = 1 + self.marks.len();
        let mut points = Vec::new();
        let mut log_w = 0.0;
        for site in &self.sites {
            let l = index % base;
            index /= base;
            if l > 0 {
                points.push(MarkedPoint::radius(site.clone(), self.marks[l - 1]).expect("valid mark"));
                log_w += (self.site_mass * self.mark_probs[l - 1]).ln();
            }
        }
        (points, log_w)
    }
}

/// An exactly enumerated law over the states of a micro-instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactLaw {
    pub states: Vec<Configuration>,
    pub probs: Vec<f64>,
    /// Log normaliser relative to the reference weights.
    pub log_z: f64,
}

/// The law on the instance's states with weight
/// `prod(site_mass * p(mark)) * exp(-H(state | env))`.
pub fn enumerate_gibbs(model: &dyn EnergyModel, instance: &MicroInstance, env: &[MarkedPoint]) -> Result<ExactLaw> {
    let count = instance.state_count();
    if count > STATE_LIMIT {
        return Err(Error::StateSpaceOverflow {
            states: count,
            limit: STATE_LIMIT,
        });
    }
    let d = instance.dim();
    let mut states = Vec::with_capacity(count as usize);
    let mut log_weights = Vec::with_capacity(count as usize);
    for index in 0..count as usize {
        let (points, log_w) = instance.decode(index);
        let lw = match model.conditional(&points, env)? {
            Energy::Finite(h) => log_w - h,
            Energy::Infinite => f64::NEG_INFINITY,
        };
        states.push(Configuration::from_points_unchecked(d, points));
        log_weights.push(lw);
    }
    let log_z = log_sum_exp(&log_weights);
    if log_z == f64::NEG_INFINITY {
        return Err(Error::Numerical("every state has infinite energy".into()));
    }
    let probs = log_weights.iter().map(|l| (l - log_z).exp()).collect();
    Ok(ExactLaw { states, probs, log_z })
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different state sets");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical distribution of samples over the instance's states.
pub fn empirical_law<'a, I>(instance: &MicroInstance, samples: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a Configuration>,
{
    let mut counts = vec![0u64; instance.state_count() as usize];
    let mut n = 0u64;
    for c in samples {
        let i = instance
            .state_index(c)
            .ok_or_else(|| Error::Precondition("sample does not live on the micro-instance".into()))?;
        counts[i] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Precondition("no samples".into()));
    }
    Ok(counts.into_iter().map(|c| c as f64 / n as f64).collect())
}

/// Largest total-variation gap between the kernel on `outer` given the
/// fixed environment `env`, and the composition of the kernel on `inner`
/// with the outer kernel's marginal on `outer \ inner`.
pub fn kernel_compatibility_check(
    model: &dyn EnergyModel,
    instance: &MicroInstance,
    inner: &Window,
    env: &[MarkedPoint],
) -> Result<f64> {
    let outer_law = enumerate_gibbs(model, instance, env)?;
    let inside: Vec<bool> = instance.sites.iter().map(|s| inner.contains(s)).collect();
    if !inside.iter().any(|b| *b) {
        return Err(Error::Precondition("inner window holds no site".into()));
    }
    let inner_instance = instance.restricted(inner)?;
    let base = 1 + instance.marks.len();
    let inner_base = |labels: &[usize]| -> usize {
        labels
            .iter()
            .zip(&inside)
            .filter(|(_, b)| **b)
            .rev()
            .fold(0, |acc, (l, _)| acc * base + l)
    };

    // group outer states by their part outside `inner`
    let mut composed = vec![0.0; outer_law.states.len()];
    let mut by_exterior: std::collections::BTreeMap<Vec<usize>, Vec<usize>> = Default::default();
    for (i, s) in outer_law.states.iter().enumerate() {
        let labels = instance.labels(s).expect("enumerated state");
        let ext: Vec<usize> = labels.iter().zip(&inside).map(|(l, b)| if *b { 0 } else { *l }).collect();
        by_exterior.entry(ext).or_default().push(i);
    }
    for members in by_exterior.values() {
        let marginal: f64 = members.iter().map(|i| outer_law.probs[*i]).sum();
        let first = &outer_law.states[members[0]];
        let mut kernel_env: Vec<MarkedPoint> = first
            .points()
            .iter()
            .filter(|p| !inner.contains(p.location()))
            .cloned()
            .collect();
        kernel_env.extend(env.iter().cloned());
        let kernel = enumerate_gibbs(model, &inner_instance, &kernel_env)?;
        for i in members {
            let labels = instance.labels(&outer_law.states[*i]).expect("enumerated state");
            composed[*i] = marginal * kernel.probs[inner_base(&labels)];
        }
    }
    Ok(total_variation(&outer_law.probs, &composed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{HardSphere, NonNegPair, PairPotential, Poisson};

    fn instance() -> MicroInstance {
        let w = Window::new_box(vec![0.0, 0.0], vec![2.0, 2.0]).unwrap();
        MicroInstance::cell_centres(&w, 2, vec![0.4, 0.8], vec![0.5, 0.5], 1.0).unwrap()
    }

    #[test]
    fn indexing_round_trips() {
        let inst = instance();
        assert_eq!(inst.state_count(), 81);
        for i in 0..81 {
            let (pts, _) = inst.decode(i);
            let c = Configuration::new(2, pts).unwrap();
            assert_eq!(inst.state_index(&c), Some(i));
        }
        let off = Configuration::new(2, vec![MarkedPoint::radius(vec![0.1, 0.1], 0.4).unwrap()]).unwrap();
        assert_eq!(inst.state_index(&off), None);
    }

    #[test]
    fn poisson_law_is_product_form() {
        // with no interaction every site is independently empty w.p. 1 / (1 + site_mass)
        let inst = instance();
        let law = enumerate_gibbs(&Poisson, &inst, &[]).unwrap();
        let empty = law.probs[0];
        assert!((empty - (1.0 / 2.0f64).powi(4)).abs() < 1e-15);
        assert!((law.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(kernel_compatibility_check(&Poisson, &inst, &half(), &[]).unwrap() < 1e-15);
    }

    fn half() -> Window {
        Window::new_box(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap()
    }

    fn env() -> Vec<MarkedPoint> {
        vec![
            MarkedPoint::radius(vec![2.7, 0.5], 0.8).unwrap(),
            MarkedPoint::radius(vec![-0.6, 1.5], 0.4).unwrap(),
        ]
    }

    #[test]
    fn compatibility_on_interacting_instances() {
        let inst = instance();
        let pair = NonNegPair::new(PairPotential::Power { coef: 1.5, exponent: 1.0 }).unwrap();
        for model in [&HardSphere as &dyn EnergyModel, &pair] {
            for e in [vec![], env()] {
                let dev = kernel_compatibility_check(model, &inst, &half(), &e).unwrap();
                assert!(dev <= 1e-10, "{}: {dev}", model.id());
            }
        }
    }

    #[test]
    fn overflow_is_rejected() {
        let w = Window::new_box(vec![0.0, 0.0], vec![4.0, 4.0]).unwrap();
        let big = MicroInstance::cell_centres(&w, 4, vec![0.4, 0.8], vec![0.5, 0.5], 1.0).unwrap();
        assert!(matches!(
            enumerate_gibbs(&Poisson, &big, &[]),
            Err(Error::StateSpaceOverflow { .. })
        ));
    }

    #[test]
    fn hard_core_excludes_overlaps() {
        let inst = instance();
        let law = enumerate_gibbs(&HardSphere, &inst, &[]).unwrap();
        for (s, p) in law.states.iter().zip(&law.probs) {
            let overlap = s.points().iter().enumerate().any(|(i, a)| {
                s.points()[..i].iter().any(|b| a.distance(b) < a.mark_norm() + b.mark_norm())
            });
            assert_eq!(overlap, *p == 0.0);
        }
    }
}
