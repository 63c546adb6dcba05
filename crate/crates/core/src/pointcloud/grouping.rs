use std::cmp::Ordering;

use rand::Rng as _;

use super::Coords;
use crate::{Error, Result, Rng};

/// Cluster membership for a set of representative points (RPs).
///
/// `members` is an M×K row-major index matrix into the source cloud. For
/// groupings built from an RP subset of the source (`knn_group`,
/// `ball_group`) the RP is always the first member of its row.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    pub rp_indices: Vec<usize>,
    pub members: Vec<usize>,
    pub k: usize,
    /// Per-RP radius for ball grouping, `None` for k-NN.
    pub radii_used: Option<Vec<f64>>,
}

impl Grouping {
    pub fn num_rps(&self) -> usize {
        self.rp_indices.len()
    }

    pub fn row(&self, m: usize) -> &[usize] {
        &self.members[m * self.k..(m + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> {
        self.members.chunks(self.k)
    }
}

// Orders candidates by (squared distance, index) with the query's own point first.
fn rank(a: &(f64, usize), b: &(f64, usize), own: Option<usize>) -> Ordering {
    let ka = (Some(a.1) != own, a.0, a.1);
    let kb = (Some(b.1) != own, b.0, b.1);
    ka.0.cmp(&kb.0)
        .then(ka.1.partial_cmp(&kb.1).unwrap_or(Ordering::Equal))
        .then(ka.2.cmp(&kb.2))
}

fn distances(source: &Coords, q: &[f64]) -> Vec<(f64, usize)> {
    (0..source.len()).map(|i| (source.dist2(i, q), i)).collect()
}

fn knn_row(source: &Coords, q: &[f64], own: Option<usize>, k: usize) -> Vec<usize> {
    let mut d = distances(source, q);
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, |a, b| rank(a, b, own));
        d.truncate(k);
    }
    d.sort_unstable_by(|a, b| rank(a, b, own));
    d.into_iter().map(|(_, i)| i).collect()
}

fn ball_row(
    source: &Coords,
    q: &[f64],
    own: Option<usize>,
    k: usize,
    radius: f64,
    rng: &mut Rng,
) -> Vec<usize> {
    let r2 = radius * radius;
    let mut cand: Vec<(f64, usize)> = distances(source, q)
        .into_iter()
        .filter(|&(d, i)| d <= r2 || Some(i) == own)
        .collect();
    if cand.is_empty() {
        // Query outside every source point's radius: fall back to the nearest one.
        return vec![knn_row(source, q, None, 1)[0]; k];
    }
    cand.sort_unstable_by(|a, b| rank(a, b, own));
    let mut row: Vec<usize> = cand.iter().take(k).map(|&(_, i)| i).collect();
    while row.len() < k {
        let pick = rng.random_range(0..cand.len());
        row.push(cand[pick].1);
    }
    row
}

fn check_rps(source: &Coords, rp_indices: &[usize], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("cluster size k must be >= 1"));
    }
    if rp_indices.is_empty() {
        return Err(Error::invalid("no representative points"));
    }
    if let Some(&bad) = rp_indices.iter().find(|&&i| i >= source.len()) {
        return Err(Error::invalid(format!("rp index {bad} out of range for {} points", source.len())));
    }
    Ok(())
}

/// The `k` nearest points to every RP, RP first, then by ascending distance
/// with lowest-index tie-break.
pub fn knn_group(coords: &Coords, rp_indices: &[usize], k: usize) -> Result<Grouping> {
    check_rps(coords, rp_indices, k)?;
    if k > coords.len() {
        return Err(Error::invalid(format!("knn: k={k} exceeds {} points", coords.len())));
    }
    let mut members = Vec::with_capacity(rp_indices.len() * k);
    for &rp in rp_indices {
        members.extend(knn_row(coords, coords.row(rp), Some(rp), k));
    }
    Ok(Grouping {
        rp_indices: rp_indices.to_vec(),
        members,
        k,
        radii_used: None,
    })
}

/// Radius-bounded grouping: up to `k` nearest points within `radius`, padded
/// to `k` by uniform random duplication of the in-radius candidates.
pub fn ball_group(
    coords: &Coords,
    rp_indices: &[usize],
    k: usize,
    radius: f64,
    rng: &mut Rng,
) -> Result<Grouping> {
    check_rps(coords, rp_indices, k)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let mut members = Vec::with_capacity(rp_indices.len() * k);
    for &rp in rp_indices {
        members.extend(ball_row(coords, coords.row(rp), Some(rp), k, radius, rng));
    }
    Ok(Grouping {
        rp_indices: rp_indices.to_vec(),
        members,
        k,
        radii_used: Some(vec![radius; rp_indices.len()]),
    })
}

fn check_query(source: &Coords, queries: &Coords, own: &[Option<usize>], k: usize) -> Result<()> {
    if source.dim() != queries.dim() {
        return Err(Error::shape("query", source.dim(), queries.dim()));
    }
    if own.len() != queries.len() {
        return Err(Error::shape("query self indices", queries.len(), own.len()));
    }
    if k == 0 || source.is_empty() || queries.is_empty() {
        return Err(Error::invalid("query needs k >= 1 and non-empty clouds"));
    }
    Ok(())
}

/// k-NN of arbitrary query points within `source`. `own[q]` names the source
/// index coinciding with query `q`, if any; it is ranked first.
pub fn knn_query(
    source: &Coords,
    queries: &Coords,
    own: &[Option<usize>],
    k: usize,
) -> Result<Grouping> {
    check_query(source, queries, own, k)?;
    if k > source.len() {
        return Err(Error::invalid(format!("knn: k={k} exceeds {} points", source.len())));
    }
    let mut members = Vec::with_capacity(queries.len() * k);
    for (q, &o) in own.iter().enumerate() {
        members.extend(knn_row(source, queries.row(q), o, k));
    }
    Ok(Grouping {
        rp_indices: (0..queries.len()).collect(),
        members,
        k,
        radii_used: None,
    })
}

/// Ball grouping of arbitrary query points. A query with no source point in
/// range is assigned its nearest source point, duplicated `k` times.
pub fn ball_query(
    source: &Coords,
    queries: &Coords,
    own: &[Option<usize>],
    k: usize,
    radius: f64,
    rng: &mut Rng,
) -> Result<Grouping> {
    check_query(source, queries, own, k)?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let mut members = Vec::with_capacity(queries.len() * k);
    for (q, &o) in own.iter().enumerate() {
        members.extend(ball_row(source, queries.row(q), o, k, radius, rng));
    }
    Ok(Grouping {
        rp_indices: (0..queries.len()).collect(),
        members,
        k,
        radii_used: Some(vec![radius; queries.len()]),
    })
}

/// Local coordinates `member − rp` as an M×K×D row-major block.
pub fn localize(coords: &Coords, grouping: &Grouping) -> Vec<f64> {
    let queries = coords.select(&grouping.rp_indices);
    localize_query(coords, &queries, grouping)
}

/// Local coordinates `member − query` for a query grouping.
pub fn localize_query(source: &Coords, queries: &Coords, grouping: &Grouping) -> Vec<f64> {
    let d = source.dim();
    let mut out = Vec::with_capacity(grouping.members.len() * d);
    for (m, row) in grouping.rows().enumerate() {
        let q = queries.row(m);
        for &j in row {
            out.extend(source.row(j).iter().zip(q).map(|(a, b)| a - b));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    fn line(xs: &[f64]) -> Coords {
        Coords::new(1, xs.to_vec()).unwrap()
    }

    #[test]
    fn knn_k1_is_rp() {
        let c = line(&[0.0, 0.0, 1.0]);
        let g = knn_group(&c, &[0, 1, 2], 1).unwrap();
        assert_eq!(g.members, vec![0, 1, 2]);
    }

    #[test]
    fn knn_line_example() {
        let c = line(&[0.0, 1.0, 2.0, 5.0]);
        let g = knn_group(&c, &[1], 3).unwrap();
        assert_eq!(g.row(0), &[1, 0, 2]);
    }

    #[test]
    fn knn_duplicate_tie_lower_index() {
        let c = line(&[0.0, 3.0, 3.0, 1.0]);
        let g = knn_group(&c, &[0], 3).unwrap();
        assert_eq!(g.row(0), &[0, 3, 1]);
        assert!(knn_group(&c, &[0], 5).is_err());
    }

    #[test]
    fn ball_isolated_rp_duplicates() {
        let c = line(&[0.0, 10.0, 20.0]);
        let g = ball_group(&c, &[1], 4, 1.0, &mut rng_from_seed(3)).unwrap();
        assert_eq!(g.row(0), &[1, 1, 1, 1]);
    }

    #[test]
    fn ball_line_example() {
        let c = line(&[0.0, 0.5, 3.0]);
        let g = ball_group(&c, &[0], 2, 1.0, &mut rng_from_seed(3)).unwrap();
        assert_eq!(g.row(0), &[0, 1]);
        assert_eq!(g.radii_used, Some(vec![1.0]));
    }

    #[test]
    fn ball_all_in_radius() {
        let c = line(&[0.0, 0.1, 0.2, 0.3]);
        let g = ball_group(&c, &[2], 4, 5.0, &mut rng_from_seed(0)).unwrap();
        let mut row = g.row(0).to_vec();
        row.sort_unstable();
        assert_eq!(row, vec![0, 1, 2, 3]);
        assert!(ball_group(&c, &[2], 4, 0.0, &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn query_falls_back_to_nearest() {
        let src = line(&[0.0, 10.0]);
        let q = line(&[7.0]);
        let g = ball_query(&src, &q, &[None], 3, 1.0, &mut rng_from_seed(1)).unwrap();
        assert_eq!(g.row(0), &[1, 1, 1]);
        let g = knn_query(&src, &q, &[None], 2).unwrap();
        assert_eq!(g.row(0), &[1, 0]);
    }

    #[test]
    fn localize_example() {
        let c = Coords::from_rows(&[[3.0, 4.0], [5.0, 6.0]]);
        let g = knn_group(&c, &[0], 2).unwrap();
        assert_eq!(localize(&c, &g), vec![0.0, 0.0, 2.0, 2.0]);
        let same = Coords::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        let g = knn_group(&same, &[1], 2).unwrap();
        assert!(localize(&same, &g).iter().all(|&v| v == 0.0));
    }
}
