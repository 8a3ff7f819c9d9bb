//! Finite simple marked point configurations, observation windows and the
//! tame statistics consumed everywhere else.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marks::PathMark;

/// Element of the mark space: a non-negative radius or a planar path.
#[derive(Clone, Debug, PartialEq)]
pub enum Mark {
    Radius(f64),
    Path(Arc<PathMark>),
}

impl Mark {
    pub fn norm(&self) -> f64 {
        match self {
            Mark::Radius(r) => *r,
            Mark::Path(p) => p.sup_norm(),
        }
    }

    pub fn as_path(&self) -> Option<&PathMark> {
        match self {
            Mark::Path(p) => Some(p),
            Mark::Radius(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkedPoint {
    location: Vec<f64>,
    mark: Mark,
    mark_norm: f64,
}

impl MarkedPoint {
    pub fn new(location: Vec<f64>, mark: Mark) -> Result<Self> {
        if location.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite location {location:?}"
            )));
        }
        let mark_norm = mark.norm();
        if !(mark_norm >= 0.0) || !mark_norm.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mark norm must be finite and non-negative, got {mark_norm}"
            )));
        }
        Ok(Self {
            location,
            mark,
            mark_norm,
        })
    }

    /// Shorthand for a point carrying a radius mark.
    pub fn radius(location: Vec<f64>, r: f64) -> Result<Self> {
        Self::new(location, Mark::Radius(r))
    }

    pub fn location(&self) -> &[f64] {
        &self.location
    }

    pub fn mark(&self) -> &Mark {
        &self.mark
    }

    pub fn mark_norm(&self) -> f64 {
        self.mark_norm
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn norm_location(&self) -> f64 {
        self.location.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &MarkedPoint) -> f64 {
        distance(&self.location, &other.location)
    }

    /// Same mark, location moved by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Self {
        Self {
            location: self
                .location
                .iter()
                .zip(shift)
                .map(|(a, b)| a + b)
                .collect(),
            mark: self.mark.clone(),
            mark_norm: self.mark_norm,
        }
    }

    pub(crate) fn with_location(&self, location: Vec<f64>) -> Self {
        Self {
            location,
            mark: self.mark.clone(),
            mark_norm: self.mark_norm,
        }
    }

    pub(crate) fn with_mark(&self, mark: Mark) -> Self {
        let mark_norm = mark.norm();
        Self {
            location: self.location.clone(),
            mark,
            mark_norm,
        }
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn location_key(x: &[f64]) -> Vec<u64> {
    // +0.0 and -0.0 are the same location
    x.iter().map(|c| (c + 0.0).to_bits()).collect()
}

/// A finite simple marked point measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    dim: usize,
    points: Vec<MarkedPoint>,
}

impl Configuration {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            points: Vec::new(),
        }
    }

    /// Builds a configuration, rejecting dimension mismatches and repeated
    /// locations.
    pub fn new(dim: usize, points: Vec<MarkedPoint>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        let mut seen = HashSet::with_capacity(points.len());
        for p in &points {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
            if !seen.insert(location_key(p.location())) {
                return Err(Error::DuplicateLocation(p.location().to_vec()));
            }
        }
        Ok(Self { dim, points })
    }

    /// Caller guarantees simplicity and matching dimensions.
    pub(crate) fn from_points_unchecked(dim: usize, points: Vec<MarkedPoint>) -> Self {
        debug_assert!(points.iter().all(|p| p.dim() == dim));
        Self { dim, points }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[MarkedPoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<MarkedPoint> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn restrict(&self, window: &Window) -> Configuration {
        restrict(self, window)
    }

    /// Atoms outside `window`.
    pub fn restrict_complement(&self, window: &Window) -> Configuration {
        Self {
            dim: self.dim,
            points: self
                .points
                .iter()
                .filter(|p| !window.contains(p.location()))
                .cloned()
                .collect(),
        }
    }

    pub fn translated(&self, shift: &[f64]) -> Configuration {
        Self {
            dim: self.dim,
            points: self.points.iter().map(|p| p.translated(shift)).collect(),
        }
    }

    /// Superposition of two configurations; fails if a location repeats.
    pub fn union(&self, other: &Configuration) -> Result<Configuration> {
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        Configuration::new(self.dim, points)
    }

    /// Largest distance of a location from the origin.
    pub fn circumradius(&self) -> f64 {
        self.points
            .iter()
            .map(MarkedPoint::norm_location)
            .fold(0.0, f64::max)
    }
}

/// Observation windows. Boxes are half-open so lattice tilings partition
/// space; balls are closed; dilated boxes are kept implicit as a distance
/// predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Window {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    DilatedBox { lo: Vec<f64>, hi: Vec<f64>, radius: f64 },
}

impl Window {
    /// The centred cube `[-n, n)^d`.
    pub fn cube(n: f64, dim: usize) -> Self {
        Window::Box {
            lo: vec![-n; dim],
            hi: vec![n; dim],
        }
    }

    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidParameter(
                "box corners must have equal, positive dimension".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidParameter(format!(
                "empty box {lo:?}..{hi:?}"
            )));
        }
        Ok(Window::Box { lo, hi })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || center.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "ball radius must be positive, got {radius}"
            )));
        }
        Ok(Window::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Window::Box { lo, .. } | Window::DilatedBox { lo, .. } => lo.len(),
            Window::Ball { center, .. } => center.len(),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Window::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(c, (a, b))| *a <= *c && *c < *b),
            Window::Ball { center, radius } => distance(x, center) <= *radius,
            Window::DilatedBox { lo, hi, radius } => box_distance(lo, hi, x) <= *radius,
        }
    }

    /// Euclidean distance from `x` to the (closed) window; zero inside.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        match self {
            Window::Box { lo, hi } => box_distance(lo, hi, x),
            Window::Ball { center, radius } => (distance(x, center) - radius).max(0.0),
            Window::DilatedBox { lo, hi, radius } => (box_distance(lo, hi, x) - radius).max(0.0),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Window::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| b - a).product(),
            Window::Ball { radius, center } => {
                unit_ball_volume(center.len()) * radius.powi(center.len() as i32)
            }
            Window::DilatedBox { lo, hi, radius } => {
                // Steiner formula for a box: sum_j e_j(sides) * kappa_{d-j} * r^{d-j}
                let sides: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
                let d = sides.len();
                let e = elementary_symmetric(&sides);
                (0..=d)
                    .map(|j| e[j] * unit_ball_volume(d - j) * radius.powi((d - j) as i32))
                    .sum()
            }
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Window::Box { lo, hi } => (lo.clone(), hi.clone()),
            Window::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Window::DilatedBox { lo, hi, radius } => (
                lo.iter().map(|c| c - radius).collect(),
                hi.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// Largest distance from the origin to a point of the window.
    pub fn circumradius(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        match self {
            Window::Ball { center, radius } => {
                center.iter().map(|c| c * c).sum::<f64>().sqrt() + radius
            }
            _ => lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| a.abs().max(b.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Uniform location in the window.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = self.bounding_box();
        loop {
            let x: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| a + (b - a) * rng.random::<f64>())
                .collect();
            if self.contains(&x) {
                return x;
            }
        }
    }

    /// Minkowski dilation by the closed ball `B(0, r)`.
    pub fn dilate(&self, r: f64) -> Result<Window> {
        dilate(self, r)
    }

    pub fn is_subset_of_box(&self, lo: &[f64], hi: &[f64]) -> bool {
        let (a, b) = self.bounding_box();
        a.iter().zip(lo).all(|(x, y)| x >= y) && b.iter().zip(hi).all(|(x, y)| x <= y)
    }
}

fn box_distance(lo: &[f64], hi: &[f64], x: &[f64]) -> f64 {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(c, (a, b))| {
            let gap = if *c < *a {
                a - c
            } else if *c > *b {
                c - b
            } else {
                0.0
            };
            gap * gap
        })
        .sum::<f64>()
        .sqrt()
}

fn elementary_symmetric(values: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; values.len() + 1];
    e[0] = 1.0;
    for (k, v) in values.iter().enumerate() {
        for j in (1..=k + 1).rev() {
            e[j] += e[j - 1] * v;
        }
    }
    e
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// Dimension, stability exponent offset and activity of a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub delta: f64,
    pub z: f64,
}

impl ModelParams {
    pub fn new(d: usize, delta: f64, z: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("d must be >= 1".into()));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("delta must be > 0, got {delta}")));
        }
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::InvalidParameter(format!("z must be > 0, got {z}")));
        }
        Ok(Self { d, delta, z })
    }

    /// The exponent `d + delta` of the tame weight.
    pub fn tame_exponent(&self) -> f64 {
        self.d as f64 + self.delta
    }
}

/// Atoms of `config` located in `window`, in their original order.
pub fn restrict(config: &Configuration, window: &Window) -> Configuration {
    Configuration {
        dim: config.dim,
        points: config
            .points
            .iter()
            .filter(|p| window.contains(p.location()))
            .cloned()
            .collect(),
    }
}

/// `f(x, m) = 1 + |m|^(d + delta)`.
pub fn tame_weight(mark_norm: f64, d: usize, delta: f64) -> f64 {
    1.0 + mark_norm.powf(d as f64 + delta)
}

/// `<gamma, 1 + |m|^(d + delta)>`.
pub fn tame_statistic(config: &Configuration, delta: f64) -> f64 {
    config
        .points
        .iter()
        .map(|p| tame_weight(p.mark_norm, config.dim, delta))
        .sum()
}

/// Supremum of the mark norms, with the empty supremum taken as 0.
pub fn mark_sup(config: &Configuration) -> f64 {
    mark_sup_points(&config.points)
}

pub(crate) fn mark_sup_points(points: &[MarkedPoint]) -> f64 {
    points.iter().map(|p| p.mark_norm).fold(0.0, f64::max)
}

pub fn dilate(window: &Window, r: f64) -> Result<Window> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "dilation radius must be finite and >= 0, got {r}"
        )));
    }
    Ok(match window {
        Window::Box { lo, hi } => Window::DilatedBox {
            lo: lo.clone(),
            hi: hi.clone(),
            radius: r,
        },
        Window::Ball { center, radius } => Window::Ball {
            center: center.clone(),
            radius: radius + r,
        },
        Window::DilatedBox { lo, hi, radius } => Window::DilatedBox {
            lo: lo.clone(),
            hi: hi.clone(),
            radius: radius + r,
        },
    })
}
