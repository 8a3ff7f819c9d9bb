//! Draws from the empirical field: independent block copies of a
//! finite-volume law tiled over space, then a uniform lattice shift.

use rand::Rng;

use crate::configuration::{Configuration, Window};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FieldDraw {
    /// The shifted field restricted to the observation window.
    pub configuration: Configuration,
    /// The lattice shift `κ ∈ [-n, n)^d ∩ Z^d` that was applied.
    pub shift: Vec<i64>,
    /// Number of block copies materialised.
    pub blocks: usize,
}

/// Tiles space with blocks `[-n, n)^d + 2n k`, fills the blocks meeting the
/// shifted observation window with independent draws of `block_law` (each
/// supported in `[-n, n)^d`), translates the whole field by a uniform
/// lattice vector of `[-n, n)^d` and restricts it to `observe`.
pub fn empirical_field_draw<R, F>(
    mut block_law: F,
    n: u32,
    observe: &Window,
    max_blocks: usize,
    rng: &mut R,
) -> Result<FieldDraw>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<Configuration>,
{
    if n == 0 {
        return Err(Error::InvalidParameter("block size n must be >= 1".into()));
    }
    let d = observe.dim();
    let n_i = n as i64;
    let side = 2.0 * n as f64;
    let shift: Vec<i64> = (0..d).map(|_| rng.random_range(-n_i..n_i)).collect();

    // blocks meeting observe - shift
    let (lo, hi) = observe.bounding_box();
    let ranges: Vec<(i64, i64)> = (0..d)
        .map(|k| {
            let a = lo[k] - shift[k] as f64;
            let b = hi[k] - shift[k] as f64;
            let first = ((a + n as f64) / side).floor() as i64;
            let last = ((b + n as f64) / side).ceil() as i64 - 1;
            (first, last.max(first))
        })
        .collect();
    let blocks: u128 = ranges.iter().map(|(a, b)| (b - a + 1) as u128).product();
    if blocks > max_blocks as u128 {
        return Err(Error::Precondition(format!(
            "observation window needs {blocks} blocks, more than the {max_blocks} allowed"
        )));
    }

    let mut points = Vec::new();
    let mut index: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        let block = block_law(rng)?;
        if block.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: block.dim(),
            });
        }
        let offset: Vec<f64> = index
            .iter()
            .zip(&shift)
            .map(|(k, s)| *k as f64 * side + *s as f64)
            .collect();
        points.extend(
            block
                .translated(&offset)
                .into_points()
                .into_iter()
                .filter(|p| observe.contains(p.location())),
        );
        // odometer over the block index box
        let mut k = 0;
        loop {
            if k == d {
                let configuration = Configuration::new(d, points)?;
                return Ok(FieldDraw {
                    configuration,
                    shift,
                    blocks: blocks as usize,
                });
            }
            if index[k] < ranges[k].1 {
                index[k] += 1;
                break;
            }
            index[k] = ranges[k].0;
            k += 1;
        }
    }
}
