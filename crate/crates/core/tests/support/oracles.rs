//! Brute-force references for sampling and grouping. Shared between the core
//! integration tests and the acceptance target.

use radar_xconv::pointcloud::{ball_group, farthest_point_sampling, knn_group, Coords};
use radar_xconv::{derive_seed, rng_from_seed};

/// Counter-based uniform source that needs no RNG traits.
pub struct Stream {
    seed: u64,
    n: u64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream { seed, n: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.n += 1;
        derive_seed(self.seed, self.n)
    }

    /// Uniform in `lo..=hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn fps_ref(c: &Coords, m: usize, start: usize) -> Vec<usize> {
    let mut out = vec![start];
    while out.len() < m {
        let mut best = None;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..c.len() {
            if out.contains(&i) {
                continue;
            }
            let d = out.iter().map(|&s| dist2(c.row(i), c.row(s))).fold(f64::INFINITY, f64::min);
            if d > best_d {
                best_d = d;
                best = Some(i);
            }
        }
        out.push(best.unwrap());
    }
    out
}

/// Every index ordered by (not the RP, squared distance, index).
pub fn ranked(c: &Coords, rp: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| {
        let ka = (a != rp, dist2(c.row(a), c.row(rp)), a);
        let kb = (b != rp, dist2(c.row(b), c.row(rp)), b);
        ka.partial_cmp(&kb).unwrap()
    });
    idx
}

pub fn knn_ref(c: &Coords, rp: usize, k: usize) -> Vec<usize> {
    ranked(c, rp)[..k].to_vec()
}

/// Checks one ball-grouping row: the ranked in-radius prefix, padding drawn
/// from the in-radius set, and containment.
pub fn check_ball_row(c: &Coords, rp: usize, k: usize, r: f64, row: &[usize]) -> Result<(), String> {
    let inside: Vec<usize> = ranked(c, rp).into_iter().filter(|&i| dist2(c.row(i), c.row(rp)) <= r * r).collect();
    let head = inside.len().min(k);
    if row.len() != k {
        return Err(format!("row length {} != {k}", row.len()));
    }
    if row[..head] != inside[..head] {
        return Err(format!("rp {rp} r {r}: prefix {:?} != {:?}", &row[..head], &inside[..head]));
    }
    if let Some(&bad) = row.iter().find(|i| !inside.contains(i)) {
        return Err(format!("rp {rp} r {r}: member {bad} outside radius"));
    }
    Ok(())
}

/// Runs FPS, k-NN and ball grouping on one instance against the references.
pub fn check_instance(c: &Coords, starts: &[usize], k_values: &[usize], radii: &[f64], seed: u64) -> Result<(), String> {
    let n = c.len();
    for &start in starts {
        let got = farthest_point_sampling(c, n, start).map_err(|e| e.to_string())?;
        let want = fps_ref(c, n, start);
        if got != want {
            return Err(format!("fps start {start}: {got:?} != {want:?}"));
        }
    }
    let rps: Vec<usize> = (0..n).collect();
    for &k in k_values.iter().filter(|&&k| k >= 1 && k <= n) {
        let g = knn_group(c, &rps, k).map_err(|e| e.to_string())?;
        for &rp in &rps {
            if g.row(rp) != knn_ref(c, rp, k).as_slice() {
                return Err(format!("knn rp {rp} k {k}: {:?}", g.row(rp)));
            }
        }
        for &r in radii {
            let g = ball_group(c, &rps, k, r, &mut rng_from_seed(seed)).map_err(|e| e.to_string())?;
            for &rp in &rps {
                check_ball_row(c, rp, k, r, g.row(rp))?;
            }
        }
    }
    Ok(())
}

/// Every non-empty subset of at most 8 points of the 3×3 integer grid.
pub fn exhaustive_grid() -> Result<usize, String> {
    let grid: Vec<[f64; 2]> = (0..9).map(|i| [(i % 3) as f64, (i / 3) as f64]).collect();
    let mut count = 0;
    for mask in 1u32..(1 << 9) {
        let n = mask.count_ones() as usize;
        if n > 8 {
            continue;
        }
        let rows: Vec<f64> = (0..9).filter(|b| mask >> b & 1 == 1).flat_map(|b| grid[b]).collect();
        let c = Coords::new(2, rows).unwrap();
        let ks: Vec<usize> = (1..=n).collect();
        check_instance(&c, &ks.iter().map(|k| k - 1).collect::<Vec<_>>(), &ks, &[0.5, 1.0, 1.5, 2.0, 3.0], mask as u64)
            .map_err(|e| format!("grid mask {mask:#b}: {e}"))?;
        count += 1;
    }
    Ok(count)
}

/// Random instances with up to 64 points in 1 to 3 dimensions. Half of them
/// live on a coarse lattice so ties and duplicates are common.
pub fn random_instances(instances: usize, seed: u64) -> Result<usize, String> {
    let mut s = Stream::new(seed);
    for t in 0..instances {
        let n = s.range(1, 64);
        let d = s.range(1, 3);
        let lattice = t % 2 == 0;
        let data: Vec<f64> = (0..n * d)
            .map(|_| if lattice { s.range(0, 4) as f64 } else { 10.0 * s.unit() - 5.0 })
            .collect();
        let c = Coords::new(d, data).unwrap();
        let ks = [1, s.range(1, n), n];
        let radii = [0.5 + 3.0 * s.unit(), 1.0];
        let starts = [0, s.range(0, n - 1), n - 1];
        check_instance(&c, &starts, &ks, &radii, t as u64).map_err(|e| format!("instance {t} (n {n}, d {d}): {e}"))?;
    }
    Ok(instances)
}
