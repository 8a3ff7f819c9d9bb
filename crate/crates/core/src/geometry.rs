//! Area, perimeter and Euler–Poincaré characteristic of finite unions of
//! closed discs in the plane, with an independent Monte-Carlo / flood-fill
//! oracle.
//!
//! Area and perimeter come from the exposed boundary arcs: every circle is
//! split at its crossings with the other circles, each piece is kept when
//! its midpoint lies outside all other discs, and the area is accumulated
//! with Green's theorem along the kept arcs. The Euler characteristic is
//! the alternating simplex count of the nerve; by Helly's theorem in the
//! plane a family of discs has a common point iff every three of them do,
//! so the nerve is determined by pairwise and triple tests. Heavily
//! stacked systems fall back to the total turning of the boundary.

use std::collections::{HashMap, HashSet};
use std::f64::consts::TAU;

use rand::Rng;

use crate::configuration::Configuration;
use crate::error::{Error, Result};

const TANGENCY_TOL: f64 = 1e-9;
const TANGENCY_PERTURBATION: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disc {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Disc {
    pub fn new(cx: f64, cy: f64, radius: f64) -> Self {
        Self {
            center: [cx, cy],
            radius,
        }
    }

    fn contains_point(&self, p: [f64; 2]) -> bool {
        dist(self.center, p) <= self.radius
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscSystem {
    discs: Vec<Disc>,
}

impl DiscSystem {
    pub fn new(discs: Vec<Disc>) -> Result<Self> {
        for d in &discs {
            if !(d.radius >= 0.0) || !d.radius.is_finite() || !d.center.iter().all(|c| c.is_finite()) {
                return Err(Error::InvalidParameter(format!("invalid disc {d:?}")));
            }
        }
        Ok(Self { discs })
    }

    /// The germ-grain set of a planar configuration: discs `B(x, |m|)`.
    pub fn from_configuration(config: &Configuration) -> Result<Self> {
        if config.dim() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: config.dim(),
            });
        }
        Ok(Self::from_points(config.points()))
    }

    pub(crate) fn from_points(points: &[crate::configuration::MarkedPoint]) -> Self {
        Self {
            discs: points
                .iter()
                .map(|p| Disc::new(p.location()[0], p.location()[1], p.mark_norm()))
                .collect(),
        }
    }

    pub fn discs(&self) -> &[Disc] {
        &self.discs
    }

    pub fn push(&mut self, disc: Disc) {
        self.discs.push(disc);
    }

    pub fn translated(&self, v: [f64; 2]) -> Self {
        Self {
            discs: self
                .discs
                .iter()
                .map(|d| Disc::new(d.center[0] + v[0], d.center[1] + v[1], d.radius))
                .collect(),
        }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            discs: self
                .discs
                .iter()
                .map(|d| Disc::new(d.center[0] * lambda, d.center[1] * lambda, d.radius * lambda))
                .collect(),
        }
    }

    /// Zero-radius grains are dropped; centres are re-expressed relative to
    /// the first disc.
    fn active_local(&self) -> Vec<Disc> {
        let active: Vec<Disc> = self.discs.iter().copied().filter(|d| d.radius > 0.0).collect();
        let Some(origin) = active.first().map(|d| d.center) else {
            return active;
        };
        active
            .into_iter()
            .map(|d| Disc::new(d.center[0] - origin[0], d.center[1] - origin[1], d.radius))
            .collect()
    }

    pub fn bounding_box(&self) -> Option<([f64; 2], [f64; 2])> {
        let active: Vec<&Disc> = self.discs.iter().filter(|d| d.radius > 0.0).collect();
        if active.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for d in active {
            for k in 0..2 {
                lo[k] = lo[k].min(d.center[k] - d.radius);
                hi[k] = hi[k].max(d.center[k] + d.radius);
            }
        }
        Some((lo, hi))
    }
}

/// Discs not covered by another disc; exact duplicates keep their first copy.
fn uncovered(discs: &[Disc]) -> Vec<Disc> {
    discs
        .iter()
        .enumerate()
        .filter(|(i, a)| {
            !discs.iter().enumerate().any(|(j, b)| {
                if *i == j {
                    return false;
                }
                if a.center == b.center && a.radius == b.radius {
                    return j < *i;
                }
                dist(a.center, b.center) + a.radius <= b.radius
            })
        })
        .map(|(_, d)| *d)
        .collect()
}

#[derive(Clone, Copy, Debug, Default)]
struct ArcTotals {
    area: f64,
    perimeter: f64,
    /// Sum of the exposed arc angles.
    angle: f64,
}

fn exposed_arcs(discs: &[Disc]) -> ArcTotals {
    let discs = uncovered(discs);
    let mut totals = ArcTotals::default();
    let mut angles = Vec::new();
    for (i, a) in discs.iter().enumerate() {
        angles.clear();
        for (j, b) in discs.iter().enumerate() {
            if i == j {
                continue;
            }
            let d = dist(a.center, b.center);
            if d >= a.radius + b.radius || d + b.radius <= a.radius || d + a.radius <= b.radius {
                continue;
            }
            let base = (b.center[1] - a.center[1]).atan2(b.center[0] - a.center[0]);
            let cos_alpha = ((a.radius * a.radius + d * d - b.radius * b.radius) / (2.0 * a.radius * d))
                .clamp(-1.0, 1.0);
            let alpha = cos_alpha.acos();
            angles.push((base - alpha).rem_euclid(TAU));
            angles.push((base + alpha).rem_euclid(TAU));
        }
        angles.sort_by(f64::total_cmp);
        let pieces: Vec<(f64, f64)> = if angles.is_empty() {
            vec![(0.0, TAU)]
        } else {
            (0..angles.len())
                .map(|k| {
                    let start = angles[k];
                    let end = if k + 1 < angles.len() {
                        angles[k + 1]
                    } else {
                        angles[0] + TAU
                    };
                    (start, end)
                })
                .collect()
        };
        let r = a.radius;
        let [cx, cy] = a.center;
        for (t1, t2) in pieces {
            if t2 - t1 <= 0.0 {
                continue;
            }
            let mid = 0.5 * (t1 + t2);
            let p = [cx + r * mid.cos(), cy + r * mid.sin()];
            let covered = discs
                .iter()
                .enumerate()
                .any(|(j, b)| j != i && dist(p, b.center) < b.radius);
            if covered {
                continue;
            }
            let dt = t2 - t1;
            totals.angle += dt;
            totals.perimeter += r * dt;
            totals.area += 0.5
                * (r * r * dt + r * cx * (t2.sin() - t1.sin()) - r * cy * (t2.cos() - t1.cos()));
        }
    }
    totals
}

/// Lebesgue measure of the union of the discs.
pub fn union_area(s: &DiscSystem) -> f64 {
    exposed_arcs(&s.active_local()).area
}

/// Length of the boundary of the union of the discs.
pub fn union_perimeter(s: &DiscSystem) -> f64 {
    exposed_arcs(&s.active_local()).perimeter
}

/// Area and perimeter in one pass.
pub fn union_area_perimeter(s: &DiscSystem) -> (f64, f64) {
    let t = exposed_arcs(&s.active_local());
    (t.area, t.perimeter)
}

/// Perturbs near-tangent pairs by growing the later disc, returning the
/// number of perturbations applied.
fn make_generic(discs: &mut [Disc]) -> usize {
    let mut count = 0;
    for _round in 0..8 {
        let mut changed = false;
        for i in 0..discs.len() {
            for j in (i + 1)..discs.len() {
                let d = dist(discs[i].center, discs[j].center);
                let external = (d - (discs[i].radius + discs[j].radius)).abs() < TANGENCY_TOL;
                let internal = (d - (discs[i].radius - discs[j].radius).abs()).abs() < TANGENCY_TOL;
                if external || internal {
                    discs[j].radius += TANGENCY_PERTURBATION;
                    changed = true;
                    count += 1;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if count > 0 {
        log::warn!("euler characteristic: perturbed {count} near-tangent disc pair(s) by {TANGENCY_PERTURBATION}");
    }
    count
}

fn circle_crossings(a: &Disc, b: &Disc) -> Option<[[f64; 2]; 2]> {
    let d = dist(a.center, b.center);
    if d == 0.0 || d > a.radius + b.radius || d < (a.radius - b.radius).abs() {
        return None;
    }
    let along = (a.radius * a.radius - b.radius * b.radius + d * d) / (2.0 * d);
    let h = (a.radius * a.radius - along * along).max(0.0).sqrt();
    let ux = (b.center[0] - a.center[0]) / d;
    let uy = (b.center[1] - a.center[1]) / d;
    let mx = a.center[0] + along * ux;
    let my = a.center[1] + along * uy;
    Some([[mx - h * uy, my + h * ux], [mx + h * uy, my - h * ux]])
}

/// Whether three closed discs share a point. A non-empty intersection
/// either equals one of the discs (then it contains that disc's centre) or
/// has a vertex, which is a crossing point of two of the circles.
fn triple_intersects(a: &Disc, b: &Disc, c: &Disc) -> bool {
    let discs = [a, b, c];
    let inside_all = |p: [f64; 2]| {
        discs
            .iter()
            .all(|d| dist(p, d.center) <= d.radius * (1.0 + 1e-12) + 1e-12)
    };
    if discs.iter().any(|d| inside_all(d.center)) {
        return true;
    }
    for (x, y) in [(a, b), (a, c), (b, c)] {
        if let Some(points) = circle_crossings(x, y) {
            if points.iter().any(|p| inside_all(*p)) {
                return true;
            }
        }
    }
    false
}

/// Nerve simplices enumerated before switching to the boundary count.
const NERVE_BUDGET: usize = 1 << 12;

/// Euler–Poincaré characteristic of the union via the nerve theorem.
/// Discs inside another disc are dropped first; when many discs share a
/// point the nerve is too large and the boundary turning count is used.
pub fn euler_characteristic(s: &DiscSystem) -> i64 {
    let mut discs = s.active_local();
    make_generic(&mut discs);
    let discs = uncovered(&discs);
    nerve_euler(&discs, NERVE_BUDGET).unwrap_or_else(|| turning_euler(&discs))
}

/// Euler characteristic from the total turning of the union boundary:
/// exposed arcs turn by their angle, and each exposed crossing point turns
/// back by the angle between the two radii that meet there.
fn turning_euler(discs: &[Disc]) -> i64 {
    let discs = uncovered(discs);
    let arcs = exposed_arcs(&discs).angle;
    let mut corners = 0.0;
    for (i, a) in discs.iter().enumerate() {
        for (j, b) in discs.iter().enumerate().skip(i + 1) {
            let Some(points) = circle_crossings(a, b) else {
                continue;
            };
            let d = dist(a.center, b.center);
            let cos = (a.radius * a.radius + b.radius * b.radius - d * d) / (2.0 * a.radius * b.radius);
            let angle = cos.clamp(-1.0, 1.0).acos();
            for p in points {
                let exposed = discs
                    .iter()
                    .enumerate()
                    .all(|(k, c)| k == i || k == j || dist(p, c.center) >= c.radius);
                if exposed {
                    corners += angle;
                }
            }
        }
    }
    ((arcs - corners) / TAU).round() as i64
}

fn nerve_euler(discs: &[Disc], budget: usize) -> Option<i64> {
    let n = discs.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dist(discs[i].center, discs[j].center) <= discs[i].radius + discs[j].radius {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let adj_set: Vec<HashSet<usize>> = adj.iter().map(|v| v.iter().copied().collect()).collect();
    let mut triples: HashMap<(usize, usize, usize), bool> = HashMap::new();
    let mut triple = |a: usize, b: usize, c: usize| -> bool {
        let mut k = [a, b, c];
        k.sort_unstable();
        *triples
            .entry((k[0], k[1], k[2]))
            .or_insert_with(|| triple_intersects(&discs[k[0]], &discs[k[1]], &discs[k[2]]))
    };

    // Depth-first enumeration of all simplices with increasing vertex order.
    let mut chi: i64 = 0;
    let mut visited = 0usize;
    let mut stack: Vec<(Vec<usize>, Vec<usize>)> = (0..n)
        .map(|v| (vec![v], adj[v].iter().copied().filter(|w| *w > v).collect()))
        .collect();
    while let Some((simplex, candidates)) = stack.pop() {
        visited += 1;
        if visited > budget {
            return None;
        }
        chi += if simplex.len() % 2 == 1 { 1 } else { -1 };
        for (k, &w) in candidates.iter().enumerate() {
            let ok = simplex.len() < 2
                || (0..simplex.len()).all(|a| {
                    ((a + 1)..simplex.len()).all(|b| triple(simplex[a], simplex[b], w))
                });
            if !ok {
                continue;
            }
            let mut next = simplex.clone();
            next.push(w);
            let rest = candidates[k + 1..]
                .iter()
                .copied()
                .filter(|u| adj_set[w].contains(u))
                .collect();
            stack.push((next, rest));
        }
    }
    Some(chi)
}

/// All three functionals at once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Functionals {
    pub area: f64,
    pub perimeter: f64,
    pub euler: i64,
}

pub fn functionals(s: &DiscSystem) -> Functionals {
    let (area, perimeter) = union_area_perimeter(s);
    Functionals {
        area,
        perimeter,
        euler: euler_characteristic(s),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleEstimate {
    pub area: f64,
    pub area_stderr: f64,
    pub perimeter: f64,
    pub perimeter_stderr: f64,
    pub euler: i64,
    pub grid: usize,
}

pub const DEFAULT_ORACLE_GRID: usize = 2048;

/// Independent estimates: hit-or-miss area over the bounding box, boundary
/// length from uniformly sampled circle points, and the Euler characteristic
/// from flood-filling a pixel raster (8-connected foreground, 4-connected
/// background).
pub fn mc_geometry_oracle<R: Rng + ?Sized>(
    s: &DiscSystem,
    n_points: usize,
    grid: usize,
    rng: &mut R,
) -> Result<OracleEstimate> {
    if n_points < 10_000 {
        return Err(Error::Precondition(format!(
            "oracle needs at least 10^4 points, got {n_points}"
        )));
    }
    let discs: Vec<Disc> = s.discs.iter().copied().filter(|d| d.radius > 0.0).collect();
    let Some((lo, hi)) = s.bounding_box() else {
        return Ok(OracleEstimate {
            area: 0.0,
            area_stderr: 0.0,
            perimeter: 0.0,
            perimeter_stderr: 0.0,
            euler: 0,
            grid,
        });
    };
    let w = hi[0] - lo[0];
    let h = hi[1] - lo[1];
    let box_area = w * h;
    let mut hits = 0usize;
    for _ in 0..n_points {
        let p = [lo[0] + w * rng.random::<f64>(), lo[1] + h * rng.random::<f64>()];
        if discs.iter().any(|d| d.contains_point(p)) {
            hits += 1;
        }
    }
    let p = hits as f64 / n_points as f64;
    let area = box_area * p;
    let area_stderr = box_area * (p * (1.0 - p) / n_points as f64).sqrt();

    let total_len: f64 = discs.iter().map(|d| TAU * d.radius).sum();
    let mut exposed = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        // pick a circle proportionally to its length, then a uniform angle
        let mut u = rng.random::<f64>() * total_len;
        let mut idx = discs.len() - 1;
        for (k, d) in discs.iter().enumerate() {
            let l = TAU * d.radius;
            if u < l {
                idx = k;
                break;
            }
            u -= l;
        }
        let t = rng.random::<f64>() * TAU;
        let c = &discs[idx];
        let q = [c.center[0] + c.radius * t.cos(), c.center[1] + c.radius * t.sin()];
        let hidden = discs
            .iter()
            .enumerate()
            .any(|(k, d)| k != idx && dist(q, d.center) < d.radius);
        exposed.push(if hidden { 0.0 } else { 1.0 });
    }
    let q = exposed.iter().sum::<f64>() / n_points as f64;
    let perimeter = total_len * q;
    let (euler, finest) = adaptive_flood_fill_euler(&discs, lo, hi, grid);
    let perimeter_stderr = total_len * (q * (1.0 - q) / n_points as f64).sqrt();

    Ok(OracleEstimate {
        area,
        area_stderr,
        perimeter,
        perimeter_stderr,
        euler,
        grid: finest,
    })
}

/// Finest grid tried by the adaptive raster.
pub const MAX_ORACLE_GRID: usize = 1 << 17;

/// Euler characteristic of the rasterised union on a `grid`-cell square
/// pixel lattice covering the bounding box, padded by two pixels.
/// Foreground is 8-connected, background 4-connected. A bounded background
/// component counts as a hole only if it survives a 3x3 erosion; thinner
/// pieces are digitisation slivers at shallow circle crossings.
/// Components are found over run-length encoded rows, so fine grids stay
/// cheap.
pub fn flood_fill_euler(discs: &[Disc], lo: [f64; 2], hi: [f64; 2], grid: usize) -> i64 {
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let px = side / grid as f64;
    let nx = ((hi[0] - lo[0]) / px).ceil() as i64 + 4;
    let ny = ((hi[1] - lo[1]) / px).ceil() as usize + 4;
    let x0 = lo[0] - 2.0 * px;
    let y0 = lo[1] - 2.0 * px;
    let mut fg: Vec<Vec<(i64, i64)>> = Vec::with_capacity(ny);
    let mut spans = Vec::new();
    for row in 0..ny {
        let y = y0 + (row as f64 + 0.5) * px;
        spans.clear();
        for d in discs {
            let dy = y - d.center[1];
            let rem = d.radius * d.radius - dy * dy;
            if rem < 0.0 {
                continue;
            }
            let half = rem.sqrt();
            let c_lo = ((((d.center[0] - half - x0) / px) - 0.5).ceil() as i64).max(0);
            let c_hi = ((((d.center[0] + half - x0) / px) - 0.5).floor() as i64).min(nx - 1);
            if c_lo <= c_hi {
                spans.push((c_lo, c_hi));
            }
        }
        spans.sort_unstable();
        let mut runs: Vec<(i64, i64)> = Vec::new();
        for &(a, b) in &spans {
            match runs.last_mut() {
                Some(last) if a <= last.1 + 1 => last.1 = last.1.max(b),
                _ => runs.push((a, b)),
            }
        }
        fg.push(runs);
    }
    let bg: Vec<Vec<(i64, i64)>> = fg
        .iter()
        .map(|runs| {
            let mut gaps = Vec::with_capacity(runs.len() + 1);
            let mut next = 0;
            for &(a, b) in runs {
                if a > next {
                    gaps.push((next, a - 1));
                }
                next = b + 1;
            }
            if next < nx {
                gaps.push((next, nx - 1));
            }
            gaps
        })
        .collect();
    let fg_components = run_components(&fg, 1).len();
    let deep = eroded_runs(&bg);
    let outer = run_components(&bg, 0);
    let outer_label = outer[0].0;
    let holes = outer
        .iter()
        .filter(|(label, runs)| *label != outer_label && runs.iter().any(|&(k, i)| deep[k][i]))
        .count();
    fg_components as i64 - holes as i64
}

/// Marks the background runs holding a pixel whose 3x3 neighbourhood is
/// all background.
fn eroded_runs(rows: &[Vec<(i64, i64)>]) -> Vec<Vec<bool>> {
    // columns in [a, b] whose 3-window lies inside one run of `row`
    let inner = |row: &[(i64, i64)], a: i64, b: i64| -> Vec<(i64, i64)> {
        row.iter()
            .map(|&(l, h)| ((l + 1).max(a), (h - 1).min(b)))
            .filter(|(l, h)| l <= h)
            .collect()
    };
    rows.iter()
        .enumerate()
        .map(|(k, row)| {
            row.iter()
                .map(|&(a, b)| {
                    if k == 0 || k + 1 == rows.len() || b - a < 2 {
                        return false;
                    }
                    let up = inner(&rows[k - 1], a + 1, b - 1);
                    let down = inner(&rows[k + 1], a + 1, b - 1);
                    up.iter().any(|u| down.iter().any(|d| u.0.max(d.0) <= u.1.min(d.1)))
                })
                .collect()
        })
        .collect()
}

/// Smallest geometric scale that a raster must resolve: gaps and overlaps
/// of near-tangent pairs, and distances from pairwise crossing points to a
/// third circle.
fn feature_scale(discs: &[Disc]) -> f64 {
    let mut scale = f64::INFINITY;
    let mut crossings = Vec::new();
    for (i, a) in discs.iter().enumerate() {
        for b in &discs[i + 1..] {
            let d = dist(a.center, b.center);
            for g in [d - (a.radius + b.radius), d - (a.radius - b.radius).abs()] {
                if g.abs() > 0.0 {
                    scale = scale.min(g.abs());
                }
            }
            if let Some(ps) = circle_crossings(a, b) {
                crossings.extend(ps);
            }
        }
    }
    for p in crossings {
        for c in discs {
            let g = (dist(p, c.center) - c.radius).abs();
            if g > 1e-12 * c.radius {
                scale = scale.min(g);
            }
        }
    }
    scale
}

/// Raster Euler characteristic on a grid fine enough for the smallest
/// feature scale (at least `grid`), doubled until two successive grids
/// agree or `MAX_ORACLE_GRID` is reached. Returns the value and the finest
/// grid used.
pub fn adaptive_flood_fill_euler(discs: &[Disc], lo: [f64; 2], hi: [f64; 2], grid: usize) -> (i64, usize) {
    let side = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let needed = (4.0 * side / feature_scale(discs)).ceil();
    let mut grid = if needed.is_finite() { grid.max(needed as usize) } else { grid };
    grid = grid.clamp(16, MAX_ORACLE_GRID);
    let mut last = flood_fill_euler(discs, lo, hi, grid);
    while grid < MAX_ORACLE_GRID {
        grid = (grid * 2).min(MAX_ORACLE_GRID);
        let chi = flood_fill_euler(discs, lo, hi, grid);
        if chi == last {
            break;
        }
        last = chi;
    }
    (last, grid)
}

/// Connected components of runs on consecutive rows; `slack` 1 links
/// diagonal neighbours (8-connectivity), 0 only edge neighbours. Each
/// component lists its runs as (row, index) pairs, ordered by first run.
fn run_components(rows: &[Vec<(i64, i64)>], slack: i64) -> Vec<(usize, Vec<(usize, usize)>)> {
    let mut offsets = Vec::with_capacity(rows.len());
    let mut total = 0;
    for r in rows {
        offsets.push(total);
        total += r.len();
    }
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for k in 1..rows.len() {
        let (above, below) = (&rows[k - 1], &rows[k]);
        let (mut i, mut j) = (0, 0);
        while i < above.len() && j < below.len() {
            let (a, b) = (above[i], below[j]);
            if a.0 <= b.1 + slack && b.0 <= a.1 + slack {
                let ra = find(&mut parent, offsets[k - 1] + i);
                let rb = find(&mut parent, offsets[k] + j);
                parent[ra.max(rb)] = ra.min(rb);
            }
            if a.1 < b.1 {
                i += 1;
            } else {
                j += 1;
            }
        }
    }
    let mut groups: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
    let mut slot = HashMap::new();
    for (k, r) in rows.iter().enumerate() {
        for i in 0..r.len() {
            let root = find(&mut parent, offsets[k] + i);
            let g = *slot.entry(root).or_insert_with(|| {
                groups.push((root, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push((k, i));
        }
    }
    groups
}

/// Lens area of two discs of radius `r` at centre distance `d`.
pub fn lens_area(r: f64, d: f64) -> f64 {
    if d >= 2.0 * r {
        return 0.0;
    }
    2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sys(d: &[(f64, f64, f64)]) -> DiscSystem {
        DiscSystem::new(d.iter().map(|&(x, y, r)| Disc::new(x, y, r)).collect()).unwrap()
    }

    #[test]
    fn single_disc() {
        let s = sys(&[(0.3, -2.0, 1.0)]);
        assert!((union_area(&s) - PI).abs() < 1e-12);
        assert!((union_perimeter(&s) - TAU).abs() < 1e-12);
        assert_eq!(euler_characteristic(&s), 1);
    }

    #[test]
    fn two_disc_cases() {
        let far = sys(&[(0.0, 0.0, 1.0), (3.0, 0.0, 1.0)]);
        assert!((union_area(&far) - 2.0 * PI).abs() < 1e-12);
        assert!((union_perimeter(&far) - 4.0 * PI).abs() < 1e-12);
        assert_eq!(euler_characteristic(&far), 2);

        let near = sys(&[(0.0, 0.0, 1.0), (1.0, 0.0, 1.0)]);
        let expected = 2.0 * PI - (2.0 * PI / 3.0 - 3f64.sqrt() / 2.0);
        assert!((expected - (2.0 * PI - lens_area(1.0, 1.0))).abs() < 1e-12);
        assert!((union_area(&near) - expected).abs() < 1e-9);
        assert!((union_area(&near) - 5.0548).abs() < 1e-4);
        assert!((union_perimeter(&near) - 8.0 * PI / 3.0).abs() < 1e-9);
        assert_eq!(euler_characteristic(&near), 1);
    }

    #[test]
    fn ring_of_three_has_a_hole() {
        // pairwise overlapping discs around an uncovered centre
        let r = 0.9;
        let s = sys(&[
            (1.0, 0.0, r),
            ((2.0 * PI / 3.0).cos(), (2.0 * PI / 3.0).sin(), r),
            ((4.0 * PI / 3.0).cos(), (4.0 * PI / 3.0).sin(), r),
        ]);
        assert_eq!(euler_characteristic(&s), 0);
        let (lo, hi) = s.bounding_box().unwrap();
        assert_eq!(flood_fill_euler(s.discs(), lo, hi, 2048), 0);
    }

    #[test]
    fn annulus_of_many_discs() {
        // 12 discs on a circle: one component with one hole
        let s = sys(&(0..12)
            .map(|k| {
                let t = k as f64 * TAU / 12.0;
                (3.0 * t.cos(), 3.0 * t.sin(), 1.0)
            })
            .collect::<Vec<_>>());
        assert_eq!(euler_characteristic(&s), 0);
        // a filled centre closes the hole
        let mut filled = s.clone();
        filled.push(Disc::new(0.0, 0.0, 2.5));
        assert_eq!(euler_characteristic(&filled), 1);
    }

    #[test]
    fn four_discs_sharing_a_point() {
        // the nerve has a 3-simplex; V - E + F alone would give 4 - 6 + 4 = 2
        let s = sys(&[(1.0, 0.0, 1.2), (-1.0, 0.0, 1.2), (0.0, 1.0, 1.2), (0.0, -1.0, 1.2)]);
        assert_eq!(euler_characteristic(&s), 1);
    }

    #[test]
    fn degenerate_grains() {
        let s = sys(&[(0.0, 0.0, 0.0), (5.0, 0.0, 0.0)]);
        assert_eq!(union_area(&s), 0.0);
        assert_eq!(euler_characteristic(&s), 0);
        let tangent = sys(&[(0.0, 0.0, 1.0), (2.0, 0.0, 1.0)]);
        assert_eq!(euler_characteristic(&tangent), 1);
        assert!((union_area(&tangent) - 2.0 * PI).abs() < 1e-12);
        let dup = sys(&[(0.0, 0.0, 1.0), (0.0, 0.0, 1.0)]);
        assert!((union_area(&dup) - PI).abs() < 1e-12);
        assert_eq!(euler_characteristic(&dup), 1);
        let nested = sys(&[(0.0, 0.0, 2.0), (0.5, 0.0, 1.0)]);
        assert!((union_area(&nested) - 4.0 * PI).abs() < 1e-12);
        assert!((union_perimeter(&nested) - 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn oracle_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = sys(&[(0.0, 0.0, 1.0)]);
        let o = mc_geometry_oracle(&one, 1_000_000, 512, &mut rng).unwrap();
        assert!((o.area - PI).abs() < 4.0 * o.area_stderr);
        assert!((o.area_stderr - 0.0016).abs() < 0.001);
        assert_eq!(o.euler, 1);
        let empty = DiscSystem::default();
        let o = mc_geometry_oracle(&empty, 10_000, 512, &mut rng).unwrap();
        assert_eq!((o.area, o.euler, o.area_stderr), (0.0, 0, 0.0));
        assert!(mc_geometry_oracle(&one, 100, 512, &mut rng).is_err());
    }

    #[test]
    fn adaptive_raster_finds_tiny_holes() {
        // three unit discs around a hole of radius 1e-3
        let discs: Vec<Disc> = (0..3)
            .map(|k| {
                let a = k as f64 * TAU / 3.0;
                Disc::new(1.001 * a.cos(), 1.001 * a.sin(), 1.0)
            })
            .collect();
        let s = DiscSystem::new(discs.clone()).unwrap();
        let (lo, hi) = s.bounding_box().unwrap();
        assert_eq!(euler_characteristic(&s), 0);
        assert_eq!(flood_fill_euler(&discs, lo, hi, 512), 1);
        let (chi, grid) = adaptive_flood_fill_euler(&discs, lo, hi, 512);
        assert_eq!(chi, 0);
        assert!(grid > 512);
    }

    #[test]
    fn perimeter_matches_boundary_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let near = sys(&[(0.0, 0.0, 1.0), (1.0, 0.0, 1.0)]);
        let o = mc_geometry_oracle(&near, 200_000, 256, &mut rng).unwrap();
        assert!((o.perimeter - 8.0 * PI / 3.0).abs() < 4.0 * o.perimeter_stderr);
        assert!((o.area - union_area(&near)).abs() < 4.0 * o.area_stderr);
    }

    fn arb_system() -> impl Strategy<Value = DiscSystem> {
        prop::collection::vec(((-4.0..4.0f64), (-4.0..4.0f64), (0.05..1.5f64)), 1..15)
            .prop_map(|v| sys(&v))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn translation_invariance(s in arb_system(), vx in -50.0..50.0f64, vy in -50.0..50.0f64) {
            let t = s.translated([vx, vy]);
            let (a, p) = union_area_perimeter(&s);
            let (a2, p2) = union_area_perimeter(&t);
            prop_assert!((a - a2).abs() <= 1e-9 * a.max(1.0));
            prop_assert!((p - p2).abs() <= 1e-9 * p.max(1.0));
            prop_assert_eq!(euler_characteristic(&s), euler_characteristic(&t));
        }

        #[test]
        fn scaling_covariance(s in arb_system(), lambda in 0.2..5.0f64) {
            let t = s.scaled(lambda);
            let (a, p) = union_area_perimeter(&s);
            let (a2, p2) = union_area_perimeter(&t);
            prop_assert!((a2 - lambda * lambda * a).abs() <= 1e-9 * a2.max(1.0));
            prop_assert!((p2 - lambda * p).abs() <= 1e-9 * p2.max(1.0));
            prop_assert_eq!(euler_characteristic(&s), euler_characteristic(&t));
        }

        #[test]
        fn adding_a_disc_never_shrinks_area(s in arb_system(), x in -4.0..4.0f64, y in -4.0..4.0f64, r in 0.0..2.0f64) {
            let mut t = s.clone();
            t.push(Disc::new(x, y, r));
            prop_assert!(union_area(&t) >= union_area(&s) - 1e-9);
        }

        #[test]
        fn disjoint_additivity(s in arb_system(), u in arb_system()) {
            // push the second system far away
            let far = u.translated([100.0, 0.0]);
            let mut joint = s.clone();
            for d in far.discs() {
                joint.push(*d);
            }
            let (a, p) = union_area_perimeter(&joint);
            let (a1, p1) = union_area_perimeter(&s);
            let (a2, p2) = union_area_perimeter(&u);
            prop_assert!((a - a1 - a2).abs() <= 1e-9 * a.max(1.0));
            prop_assert!((p - p1 - p2).abs() <= 1e-9 * p.max(1.0));
            prop_assert_eq!(euler_characteristic(&joint), euler_characteristic(&s) + euler_characteristic(&u));
        }

        #[test]
        fn nerve_and_boundary_turning_agree(s in arb_system()) {
            let mut discs = s.active_local();
            make_generic(&mut discs);
            let discs = uncovered(&discs);
            prop_assert_eq!(nerve_euler(&discs, usize::MAX), Some(turning_euler(&discs)));
        }
    }

    #[test]
    fn stacked_discs_use_the_boundary_count() {
        // 40 discs through the origin: the nerve has 2^40 simplices
        let discs: Vec<(f64, f64, f64)> = (0..40)
            .map(|k| {
                let a = k as f64 * 0.157;
                (0.3 * a.cos(), 0.3 * a.sin(), 1.0 + 0.001 * k as f64)
            })
            .collect();
        let s = sys(&discs);
        assert_eq!(nerve_euler(&uncovered(&s.active_local()), NERVE_BUDGET), None);
        assert_eq!(euler_characteristic(&s), 1);
        let ring: Vec<(f64, f64, f64)> = (0..8)
            .map(|k| {
                let a = k as f64 * TAU / 8.0;
                (2.0 * a.cos(), 2.0 * a.sin(), 0.9)
            })
            .collect();
        assert_eq!(turning_euler(&sys(&ring).active_local()), 0);
    }
}
