use super::GridSpec;
use crate::error::{Error, Result};

/// Symmetric rounding so a segment and its reverse agree away from ties.
#[inline]
fn round_half_away(v: f64) -> i64 {
    v.round() as i64
}

fn segment(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    // Canonical direction keeps the chain independent of traversal order.
    let (from, to, flip) = if a <= b { (a, b, false) } else { (b, a, true) };
    let di = to.0 - from.0;
    let dj = to.1 - from.1;
    let steps = di.abs().max(dj.abs());
    let mut nodes: Vec<(i64, i64)> = (0..=steps)
        .map(|k| {
            if steps == 0 {
                return from;
            }
            let t = k as f64 / steps as f64;
            (
                from.0 + round_half_away(t * di as f64),
                from.1 + round_half_away(t * dj as f64),
            )
        })
        .collect();
    if flip {
        nodes.reverse();
    }
    nodes
}

/// 8-connected chain of node indices following `polyline`.
///
/// Each vertex snaps to its nearest node. Every node of the chain must lie
/// inside `mask`.
pub fn rasterize_path(
    name: &str,
    polyline: &[[f64; 2]],
    grid: &GridSpec,
    mask: &[bool],
) -> Result<Vec<usize>> {
    if polyline.len() < 2 {
        return Err(Error::Schema(format!(
            "path `{name}` needs at least 2 points"
        )));
    }
    let snapped: Vec<(i64, i64)> = polyline
        .iter()
        .map(|p| {
            let (i, j) = grid.nearest(*p);
            (i as i64, j as i64)
        })
        .collect();
    let mut chain: Vec<usize> = Vec::new();
    for w in snapped.windows(2) {
        for (i, j) in segment(w[0], w[1]) {
            let (i, j) = (i as usize, j as usize);
            let idx = grid.index(i, j);
            if !mask[idx] {
                return Err(Error::PathOutsideMask {
                    path: name.to_string(),
                    i,
                    j,
                });
            }
            if chain.last() != Some(&idx) {
                chain.push(idx);
            }
        }
    }
    Ok(chain)
}
