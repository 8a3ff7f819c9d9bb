//! Temperedness classes, their critical radii, and the enlarged classes
//! used to separate far-away grains from a central ball. Everything is
//! decided exactly on finite configurations.

use crate::configuration::{tame_weight, Configuration, MarkedPoint};
use crate::error::{Error, Result};

/// `l1(t, eta) = (t / eta^(d + delta))^(1 / delta)`.
pub fn l1(t: u64, eta: f64, d: usize, delta: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::InvalidParameter("t must be >= 1".into()));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eta must lie in (0, 1), got {eta}"
        )));
    }
    if !(delta > 0.0) || d == 0 {
        return Err(Error::InvalidParameter(format!(
            "need d >= 1 and delta > 0, got d = {d}, delta = {delta}"
        )));
    }
    Ok((t as f64 / eta.powf(d as f64 + delta)).powf(1.0 / delta))
}

/// Half of `l1(t, 1/2)`: the radius beyond which tempered grains stay
/// away from the central ball.
pub fn l_range(t: u64, d: usize, delta: f64) -> f64 {
    0.5 * l1(t.max(1), 0.5, d, delta).expect("valid parameters")
}

#[derive(Clone, Debug, PartialEq)]
pub struct TemperednessReport {
    pub t: u64,
    pub tempered: bool,
    pub minimal_t: u64,
    /// `(l, t * l^d - statistic)` for every integer `l` scanned.
    pub slack: Vec<(u64, f64)>,
}

/// Windowed tame statistics `<gamma_{B(0,l)}, f>` for `l = 1..=l_max`.
fn ball_statistics(config: &Configuration, delta: f64) -> Vec<(u64, f64)> {
    let d = config.dim();
    let mut radial: Vec<(f64, f64)> = config
        .points()
        .iter()
        .map(|p| (p.norm_location(), tame_weight(p.mark_norm(), d, delta)))
        .collect();
    radial.sort_by(|a, b| a.0.total_cmp(&b.0));
    let l_max = config.circumradius().ceil() as u64 + 1;
    let mut out = Vec::with_capacity(l_max as usize);
    let mut k = 0;
    let mut acc = 0.0;
    for l in 1..=l_max {
        while k < radial.len() && radial[k].0 <= l as f64 {
            acc += radial[k].1;
            k += 1;
        }
        out.push((l, acc));
    }
    out
}

/// Smallest integer `t >= 1` with `<gamma_{B(0,l)}, f> <= t l^d` for all
/// integer `l >= 1`.
pub fn minimal_t(config: &Configuration, delta: f64) -> u64 {
    let d = config.dim() as i32;
    ball_statistics(config, delta)
        .into_iter()
        .map(|(l, s)| {
            let bound = (l as f64).powi(d);
            let mut t = (s / bound).ceil().max(1.0) as u64;
            while s > t as f64 * bound {
                t += 1;
            }
            t
        })
        .max()
        .unwrap_or(1)
}

pub fn is_tempered(config: &Configuration, t: u64, delta: f64) -> TemperednessReport {
    let d = config.dim() as i32;
    let slack: Vec<(u64, f64)> = ball_statistics(config, delta)
        .into_iter()
        .map(|(l, s)| (l, t as f64 * (l as f64).powi(d) - s))
        .collect();
    TemperednessReport {
        t,
        tempered: t >= 1 && slack.iter().all(|(_, s)| *s >= 0.0),
        minimal_t: minimal_t(config, delta),
        slack,
    }
}

/// Membership in the enlarged class: for every `k >= l`, grains centred
/// outside `B(0, 2k+1)` keep clear of `B(0, k)`.
pub fn in_underline_m(config: &Configuration, l: u64) -> bool {
    config.points().iter().all(|p| {
        let r = p.norm_location();
        // largest integer k with 2k + 1 < r
        let k = ((r - 1.0) / 2.0).ceil() - 1.0;
        k < l as f64 || r - p.mark_norm() >= k
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeparationWitness {
    pub index: usize,
    pub point: MarkedPoint,
    pub gap: f64,
}

/// Checks that every grain centred outside `B(0, 2l+1)` misses `B(0, l)`.
/// Returns the first offending atom, if any.
pub fn range_separation_check(
    config: &Configuration,
    t: u64,
    l: f64,
    delta: f64,
) -> Result<Option<SeparationWitness>> {
    let needed = l_range(t, config.dim(), delta);
    if l < needed {
        return Err(Error::Precondition(format!(
            "separation radius {l} is below the range radius {needed} of class {t}"
        )));
    }
    for (index, p) in config.points().iter().enumerate() {
        let r = p.norm_location();
        if r > 2.0 * l + 1.0 && r - p.mark_norm() < l {
            return Ok(Some(SeparationWitness {
                index,
                point: p.clone(),
                gap: r - p.mark_norm() - l,
            }));
        }
    }
    Ok(None)
}
