//! A fixed, versioned library of bounded local test functionals.

use serde::{Deserialize, Serialize};

use crate::configuration::{Configuration, Window};

/// Bumped whenever a functional is added, removed or redefined.
pub const LIBRARY_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionalKind {
    /// Number of atoms in the region, capped.
    Count { region: Window, cap: usize },
    /// One when the region holds no atom.
    Empty { region: Window },
    /// `min(1, sum of mark norms)` over the region.
    MarkSum { region: Window },
    /// Number of atom pairs in the region closer than `r`, capped.
    PairCount { region: Window, r: f64, cap: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunctional {
    pub id: String,
    pub kind: FunctionalKind,
}

impl TestFunctional {
    pub fn eval(&self, config: &Configuration) -> f64 {
        match &self.kind {
            FunctionalKind::Count { region, cap } => {
                (config.points().iter().filter(|p| region.contains(p.location())).count()).min(*cap)
                    as f64
            }
            FunctionalKind::Empty { region } => {
                let any = config.points().iter().any(|p| region.contains(p.location()));
                if any {
                    0.0
                } else {
                    1.0
                }
            }
            FunctionalKind::MarkSum { region } => config
                .points()
                .iter()
                .filter(|p| region.contains(p.location()))
                .map(|p| p.mark_norm())
                .sum::<f64>()
                .min(1.0),
            FunctionalKind::PairCount { region, r, cap } => {
                let inside: Vec<_> = config
                    .points()
                    .iter()
                    .filter(|p| region.contains(p.location()))
                    .collect();
                let mut count = 0;
                for i in 0..inside.len() {
                    for j in 0..i {
                        if inside[i].distance(inside[j]) < *r {
                            count += 1;
                        }
                    }
                }
                count.min(*cap) as f64
            }
        }
    }

    /// The largest value the functional can take.
    pub fn bound(&self) -> f64 {
        match &self.kind {
            FunctionalKind::Count { cap, .. } | FunctionalKind::PairCount { cap, .. } => *cap as f64,
            FunctionalKind::Empty { .. } | FunctionalKind::MarkSum { .. } => 1.0,
        }
    }
}

fn sub_box(lo: &[f64], hi: &[f64], from: f64, to: f64, axis: Option<usize>) -> Window {
    let (mut a, mut b) = (lo.to_vec(), hi.to_vec());
    match axis {
        Some(k) => {
            let w = hi[k] - lo[k];
            a[k] = lo[k] + from * w;
            b[k] = lo[k] + to * w;
        }
        None => {
            for k in 0..lo.len() {
                let w = hi[k] - lo[k];
                a[k] = lo[k] + from * w;
                b[k] = lo[k] + to * w;
            }
        }
    }
    Window::new_box(a, b).expect("nonempty sub-box")
}

/// The eleven library functionals localised to the bounding box of
/// `window`. Counts are capped at `cap`.
pub fn library(window: &Window, cap: usize) -> Vec<TestFunctional> {
    let (lo, hi) = window.bounding_box();
    let whole = Window::new_box(lo.clone(), hi.clone()).expect("nonempty box");
    let side = (0..lo.len()).map(|k| hi[k] - lo[k]).fold(f64::INFINITY, f64::min);
    let centre: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let f = |id: &str, kind| TestFunctional {
        id: id.to_string(),
        kind,
    };
    vec![
        f("count", FunctionalKind::Count { region: whole.clone(), cap }),
        f("count_lower_half", FunctionalKind::Count { region: sub_box(&lo, &hi, 0.0, 0.5, Some(0)), cap }),
        f("count_upper_half", FunctionalKind::Count { region: sub_box(&lo, &hi, 0.5, 1.0, Some(0)), cap }),
        f("count_core", FunctionalKind::Count { region: sub_box(&lo, &hi, 0.25, 0.75, None), cap }),
        f("count_corner", FunctionalKind::Count { region: sub_box(&lo, &hi, 0.0, 0.5, None), cap }),
        f("empty", FunctionalKind::Empty { region: whole.clone() }),
        f("empty_core", FunctionalKind::Empty { region: sub_box(&lo, &hi, 0.25, 0.75, None) }),
        f(
            "empty_ball",
            FunctionalKind::Empty {
                region: Window::ball(centre, 0.25 * side).expect("positive radius"),
            },
        ),
        f("mark_sum", FunctionalKind::MarkSum { region: whole.clone() }),
        f(
            "close_pairs",
            FunctionalKind::PairCount {
                region: whole.clone(),
                r: 0.25 * side,
                cap,
            },
        ),
        f("mark_sum_half", FunctionalKind::MarkSum { region: sub_box(&lo, &hi, 0.0, 0.5, Some(0)) }),
    ]
}
