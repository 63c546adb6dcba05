use super::Coords;
use crate::{Error, Result};

/// Greedy farthest point sampling.
///
/// Starts at `start`; every following pick maximizes the minimum squared
/// distance to the already selected set. Ties go to the lowest index and a
/// point is never picked twice, even among exact duplicates.
pub fn farthest_point_sampling(coords: &Coords, m: usize, start: usize) -> Result<Vec<usize>> {
    let n = coords.len();
    if m == 0 || m > n {
        return Err(Error::invalid(format!("fps: m={m} must be in 1..={n}")));
    }
    if start >= n {
        return Err(Error::invalid(format!("fps: start {start} out of range for {n} points")));
    }
    let mut selected = vec![false; n];
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut out = Vec::with_capacity(m);
    let mut current = start;
    loop {
        selected[current] = true;
        out.push(current);
        if out.len() == m {
            break;
        }
        let q = coords.row(current);
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let d = coords.dist2(i, q);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if min_d2[i] > best_d {
                best_d = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(out)
}
