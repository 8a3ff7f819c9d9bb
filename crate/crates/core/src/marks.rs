//! Mark reference laws: scalar radius laws and Euler–Maruyama discretised
//! Langevin paths, plus the super-exponential moment audit.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::configuration::Mark;
use crate::error::{Error, Result};
use crate::numerics::{integrate, ks_distance, mean_stderr};

pub const DEFAULT_LANGEVIN_STEPS: usize = 256;
const SUBBOTIN_TABLE_CELLS: usize = 4096;

/// A discretised planar path started at the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct PathMark {
    samples: Vec<[f64; 2]>,
    sup: f64,
}

impl PathMark {
    pub fn new(samples: Vec<[f64; 2]>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::InvalidParameter(
                "a path needs at least K + 1 = 3 samples".into(),
            ));
        }
        if samples[0] != [0.0, 0.0] {
            return Err(Error::InvalidParameter("paths must start at 0".into()));
        }
        if samples.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite path sample".into()));
        }
        let sup = sup_norm_of(&samples);
        Ok(Self { samples, sup })
    }

    pub fn samples(&self) -> &[[f64; 2]] {
        &self.samples
    }

    /// Grid maximum of `|m(s)|`. This is a downward-biased estimate of the
    /// continuous supremum.
    pub fn sup_norm(&self) -> f64 {
        self.sup
    }

    /// Number of grid steps K.
    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }
}

fn sup_norm_of(samples: &[[f64; 2]]) -> f64 {
    samples
        .iter()
        .map(|[x, y]| x.hypot(*y))
        .fold(0.0, f64::max)
}

pub fn sup_norm(path: &PathMark) -> f64 {
    path.sup_norm()
}

/// Inverse-CDF table for the density proportional to `exp(-l^p)` on
/// `[0, cutoff]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbotinTable {
    exponent: f64,
    cutoff: f64,
    cdf: Vec<f64>,
    norm: f64,
}

impl SubbotinTable {
    fn new(exponent: f64, cutoff: f64) -> Self {
        let h = cutoff / SUBBOTIN_TABLE_CELLS as f64;
        let dens = |l: f64| (-l.powf(exponent)).exp();
        let mut cdf = Vec::with_capacity(SUBBOTIN_TABLE_CELLS + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for k in 0..SUBBOTIN_TABLE_CELLS {
            let a = k as f64 * h;
            acc += integrate(dens, a, a + h, 1e-15);
            cdf.push(acc);
        }
        let norm = acc;
        for c in &mut cdf {
            *c /= norm;
        }
        Self {
            exponent,
            cutoff,
            cdf,
            norm,
        }
    }

    fn density(&self, l: f64) -> f64 {
        (-l.powf(self.exponent)).exp() / self.norm
    }

    /// Table CDF, exact up to quadrature error inside each cell.
    pub fn cdf(&self, l: f64) -> f64 {
        if l <= 0.0 {
            return 0.0;
        }
        if l >= self.cutoff {
            return 1.0;
        }
        let h = self.cutoff / SUBBOTIN_TABLE_CELLS as f64;
        let k = ((l / h) as usize).min(SUBBOTIN_TABLE_CELLS - 1);
        let a = k as f64 * h;
        self.cdf[k] + integrate(|s| self.density(s), a, l, 1e-15)
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let h = self.cutoff / SUBBOTIN_TABLE_CELLS as f64;
        let k = self.cdf.partition_point(|c| *c <= u).clamp(1, SUBBOTIN_TABLE_CELLS) - 1;
        let (c0, c1) = (self.cdf[k], self.cdf[k + 1]);
        let a = k as f64 * h;
        let mut l = if c1 > c0 { a + h * (u - c0) / (c1 - c0) } else { a };
        // two Newton corrections on the in-cell CDF
        for _ in 0..2 {
            let f = self.density(l);
            if f <= 0.0 {
                break;
            }
            let err = self.cdf[k] + integrate(|s| self.density(s), a, l, 1e-15) - u;
            l = (l - err / f).clamp(a, a + h);
        }
        l
    }
}

/// Laws of the mark norm on `R_+`.
#[derive(Clone, Debug, PartialEq)]
pub enum RadiusLaw {
    PointMass(f64),
    Uniform(f64),
    TruncatedSubbotin(Arc<SubbotinTable>),
    Table { values: Vec<f64>, cumulative: Vec<f64> },
}

impl RadiusLaw {
    pub fn point_mass(value: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::InvalidParameter(format!("point mass at {value}")));
        }
        Ok(RadiusLaw::PointMass(value))
    }

    pub fn uniform(b: f64) -> Result<Self> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("uniform[0, {b}]")));
        }
        Ok(RadiusLaw::Uniform(b))
    }

    /// Density proportional to `exp(-l^exponent)` on `[0, cutoff]`.
    pub fn truncated_subbotin(exponent: f64, cutoff: f64) -> Result<Self> {
        if !(exponent > 0.0) || !(cutoff > 0.0) || !cutoff.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "truncated subbotin needs exponent > 0 and cutoff > 0, got ({exponent}, {cutoff})"
            )));
        }
        Ok(RadiusLaw::TruncatedSubbotin(Arc::new(SubbotinTable::new(
            exponent, cutoff,
        ))))
    }

    /// The default germ-grain law with exponent `d + 2 delta + 1`.
    pub fn default_subbotin(d: usize, delta: f64, cutoff: f64) -> Result<Self> {
        Self::truncated_subbotin(d as f64 + 2.0 * delta + 1.0, cutoff)
    }

    pub fn table(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::InvalidParameter(
                "table law needs matching non-empty values and probabilities".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || probs.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::InvalidParameter(
                "table values must be >= 0 and probabilities > 0".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p / total;
                acc
            })
            .collect();
        Ok(RadiusLaw::Table { values, cumulative })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            RadiusLaw::PointMass(v) => *v,
            RadiusLaw::Uniform(b) => b * rng.random::<f64>(),
            RadiusLaw::TruncatedSubbotin(t) => t.quantile(rng.random::<f64>()),
            RadiusLaw::Table { values, cumulative } => {
                let u: f64 = rng.random();
                let i = cumulative.partition_point(|c| *c <= u).min(values.len() - 1);
                values[i]
            }
        }
    }

    pub fn upper_bound(&self) -> f64 {
        match self {
            RadiusLaw::PointMass(v) => *v,
            RadiusLaw::Uniform(b) => *b,
            RadiusLaw::TruncatedSubbotin(t) => t.cutoff,
            RadiusLaw::Table { values, .. } => values.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Smooth confining potentials `V(x) = coef * |x|^exponent` on the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub coef: f64,
    pub exponent: f64,
}

impl Potential {
    pub const ZERO: Potential = Potential {
        coef: 0.0,
        exponent: 2.0,
    };

    pub fn quadratic() -> Self {
        Self {
            coef: 1.0,
            exponent: 2.0,
        }
    }

    pub fn quartic() -> Self {
        Self {
            coef: 1.0,
            exponent: 4.0,
        }
    }

    pub fn value(&self, x: [f64; 2]) -> f64 {
        self.radial(x[0].hypot(x[1]))
    }

    pub fn radial(&self, r: f64) -> f64 {
        self.coef * r.powf(self.exponent)
    }

    pub fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        let r2 = x[0] * x[0] + x[1] * x[1];
        if self.coef == 0.0 || r2 == 0.0 {
            return [0.0, 0.0];
        }
        let s = self.coef * self.exponent * r2.powf(0.5 * self.exponent - 1.0);
        [s * x[0], s * x[1]]
    }
}

/// Euler–Maruyama discretisation of `dX = -1/2 grad V(X) ds + dB` on
/// `[0, 1]` with `K` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LangevinSpec {
    potential: Potential,
    steps: usize,
}

impl LangevinSpec {
    pub fn new(potential: Potential, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidParameter(format!("K must be >= 2, got {steps}")));
        }
        if !potential.coef.is_finite() || potential.coef < 0.0 || !(potential.exponent >= 2.0) {
            return Err(Error::InvalidParameter(format!(
                "potential must have coef >= 0 and exponent >= 2, got {potential:?}"
            )));
        }
        Ok(Self { potential, steps })
    }

    pub fn potential(&self) -> Potential {
        self.potential
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_size(&self) -> f64 {
        1.0 / self.steps as f64
    }

    #[inline]
    fn advance<R: Rng + ?Sized>(&self, x: [f64; 2], rng: &mut R) -> [f64; 2] {
        let h = self.step_size();
        let g = self.potential.gradient(x);
        let sh = h.sqrt();
        let n0: f64 = rng.sample(StandardNormal);
        let n1: f64 = rng.sample(StandardNormal);
        [x[0] - 0.5 * h * g[0] + sh * n0, x[1] - 0.5 * h * g[1] + sh * n1]
    }

    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> PathMark {
        let mut samples = Vec::with_capacity(self.steps + 1);
        let mut x = [0.0, 0.0];
        samples.push(x);
        for _ in 0..self.steps {
            x = self.advance(x, rng);
            samples.push(x);
        }
        let sup = sup_norm_of(&samples);
        PathMark { samples, sup }
    }
}

/// Reference law R of the marks.
#[derive(Clone, Debug, PartialEq)]
pub enum MarkLaw {
    Radius(RadiusLaw),
    Langevin(LangevinSpec),
}

impl MarkLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Mark {
        sample_mark(self, rng)
    }

    /// Almost-sure bound on the mark norm, when one exists.
    pub fn norm_upper_bound(&self) -> Option<f64> {
        match self {
            MarkLaw::Radius(r) => Some(r.upper_bound()),
            MarkLaw::Langevin(_) => None,
        }
    }
}

pub fn sample_mark<R: Rng + ?Sized>(law: &MarkLaw, rng: &mut R) -> Mark {
    match law {
        MarkLaw::Radius(r) => Mark::Radius(r.sample(rng)),
        MarkLaw::Langevin(spec) => Mark::Path(Arc::new(spec.sample_path(rng))),
    }
}

/// Serializable description of a mark law, as it appears in run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkLawSpec {
    PointMass { value: f64 },
    Uniform { b: f64 },
    TruncatedSubbotin { exponent: f64, cutoff: f64 },
    Table { values: Vec<f64>, probs: Vec<f64> },
    Langevin {
        coef: f64,
        exponent: f64,
        #[serde(default = "default_steps")]
        steps: usize,
    },
}

fn default_steps() -> usize {
    DEFAULT_LANGEVIN_STEPS
}

impl MarkLawSpec {
    pub fn build(&self) -> Result<MarkLaw> {
        Ok(match self {
            MarkLawSpec::PointMass { value } => MarkLaw::Radius(RadiusLaw::point_mass(*value)?),
            MarkLawSpec::Uniform { b } => MarkLaw::Radius(RadiusLaw::uniform(*b)?),
            MarkLawSpec::TruncatedSubbotin { exponent, cutoff } => {
                MarkLaw::Radius(RadiusLaw::truncated_subbotin(*exponent, *cutoff)?)
            }
            MarkLawSpec::Table { values, probs } => {
                MarkLaw::Radius(RadiusLaw::table(values.clone(), probs.clone())?)
            }
            MarkLawSpec::Langevin {
                coef,
                exponent,
                steps,
            } => MarkLaw::Langevin(LangevinSpec::new(
                Potential {
                    coef: *coef,
                    exponent: *exponent,
                },
                *steps,
            )?),
        })
    }
}

/// Monte-Carlo estimate of `E[exp(l^(d + 2 delta))]` under the norm law.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
    /// Samples whose integrand overflowed.
    pub non_finite: usize,
    /// Set when the sampled tail overflows: the moment looks divergent.
    pub diverges_at_sampled_tail: bool,
}

pub fn super_exp_moment_estimate<R: Rng + ?Sized>(
    law: &MarkLaw,
    d: usize,
    delta: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<MomentEstimate> {
    if n_samples < 1000 {
        return Err(Error::Precondition(format!(
            "moment audit needs at least 1000 samples, got {n_samples}"
        )));
    }
    let norms: Vec<f64> = (0..n_samples).map(|_| sample_mark(law, rng).norm()).collect();
    Ok(moment_from_norms(&norms, d, delta))
}

/// The moment audit on a fixed batch of norm samples.
pub fn moment_from_norms(norms: &[f64], d: usize, delta: f64) -> MomentEstimate {
    let exponent = d as f64 + 2.0 * delta;
    let values: Vec<f64> = norms.iter().map(|l| l.powf(exponent).exp()).collect();
    let non_finite = values.iter().filter(|v| !v.is_finite()).count();
    if non_finite > 0 {
        return MomentEstimate {
            estimate: f64::INFINITY,
            stderr: f64::INFINITY,
            n: norms.len(),
            non_finite,
            diverges_at_sampled_tail: true,
        };
    }
    let (estimate, stderr) = mean_stderr(&values);
    MomentEstimate {
        estimate,
        stderr,
        n: norms.len(),
        non_finite,
        diverges_at_sampled_tail: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantCheckSettings {
    pub burn_in: usize,
    pub n_samples: usize,
    /// Euler–Maruyama steps between recorded samples.
    pub thin: usize,
    pub guard_radius: f64,
    pub ks_threshold: f64,
}

impl Default for InvariantCheckSettings {
    fn default() -> Self {
        Self {
            burn_in: 100_000,
            n_samples: 100_000,
            thin: DEFAULT_LANGEVIN_STEPS,
            guard_radius: 50.0,
            ks_threshold: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvariantReport {
    pub ks_distance: f64,
    pub threshold: f64,
    pub n: usize,
    pub pass: bool,
}

/// Radial CDF of the density proportional to `exp(-V)` on the plane,
/// normalised by quadrature up to `r_max`.
pub fn radial_target_cdf(potential: Potential, r_max: f64) -> impl Fn(f64) -> f64 {
    const CELLS: usize = 20_000;
    let h = r_max / CELLS as f64;
    let dens = move |r: f64| r * (-potential.radial(r)).exp();
    let mut table = Vec::with_capacity(CELLS + 1);
    table.push(0.0);
    let mut acc = 0.0;
    for k in 0..CELLS {
        let a = k as f64 * h;
        acc += integrate(dens, a, a + h, 1e-14);
        table.push(acc);
    }
    let total = acc;
    move |r: f64| {
        if r <= 0.0 {
            return 0.0;
        }
        if r >= r_max {
            return 1.0;
        }
        let k = (r / h) as usize;
        let a = k as f64 * h;
        (table[k] + integrate(dens, a, r, 1e-14)) / total
    }
}

/// Runs one long Euler–Maruyama chain and compares its radial marginal
/// with the density proportional to `exp(-V)`.
pub fn langevin_invariant_check<R: Rng + ?Sized>(
    spec: &LangevinSpec,
    settings: &InvariantCheckSettings,
    rng: &mut R,
) -> Result<InvariantReport> {
    if settings.n_samples == 0 || settings.thin == 0 {
        return Err(Error::InvalidParameter("need n_samples, thin >= 1".into()));
    }
    let guard = settings.guard_radius;
    let mut x = [0.0, 0.0];
    let mut step = 0usize;
    let check = |x: [f64; 2], step: usize| -> Result<()> {
        let r = x[0].hypot(x[1]);
        if !(r <= guard) {
            return Err(Error::Diverged { step, norm: r });
        }
        Ok(())
    };
    for _ in 0..settings.burn_in {
        x = spec.advance(x, rng);
        step += 1;
        check(x, step)?;
    }
    let mut radii = Vec::with_capacity(settings.n_samples);
    for _ in 0..settings.n_samples {
        for _ in 0..settings.thin {
            x = spec.advance(x, rng);
            step += 1;
            check(x, step)?;
        }
        radii.push(x[0].hypot(x[1]));
    }
    if spec.potential.coef == 0.0 {
        return Err(Error::Precondition(
            "V = 0 is not confining; no invariant probability".into(),
        ));
    }
    let cdf = radial_target_cdf(spec.potential, guard);
    let ks = ks_distance(&radii, cdf);
    Ok(InvariantReport {
        ks_distance: ks,
        threshold: settings.ks_threshold,
        n: radii.len(),
        pass: ks <= settings.ks_threshold,
    })
}
