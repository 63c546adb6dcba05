mod support;

use proptest::prelude::*;
use radar_xconv::pointcloud::{ball_group, farthest_point_sampling, knn_group, Coords};
use radar_xconv::rng_from_seed;
use support::oracles::{check_ball_row, exhaustive_grid, fps_ref, knn_ref, random_instances};

#[test]
fn grid_subsets_match_reference() {
    assert_eq!(exhaustive_grid().unwrap(), 510);
}

#[test]
fn random_instances_match_reference() {
    random_instances(300, 8).unwrap();
}

fn cloud() -> impl Strategy<Value = Coords> {
    (1usize..=3, 1usize..=40).prop_flat_map(|(d, n)| {
        prop::collection::vec(prop_oneof![(-5i32..5).prop_map(f64::from), -5.0f64..5.0], n * d)
            .prop_map(move |v| Coords::new(d, v).unwrap())
    })
}

proptest! {
    #[test]
    fn fps_matches_brute_force(c in cloud(), start_frac in 0.0f64..1.0, m_frac in 0.0f64..1.0) {
        let n = c.len();
        let start = ((n as f64 * start_frac) as usize).min(n - 1);
        let m = 1 + ((n - 1) as f64 * m_frac) as usize;
        let got = farthest_point_sampling(&c, m, start).unwrap();
        prop_assert_eq!(&got, &fps_ref(&c, m, start));
        let mut sorted = got.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), m);
    }

    #[test]
    fn knn_matches_brute_force(c in cloud(), k_frac in 0.0f64..1.0) {
        let n = c.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let rps: Vec<usize> = (0..n).collect();
        let g = knn_group(&c, &rps, k).unwrap();
        for rp in 0..n {
            prop_assert_eq!(g.row(rp)[0], rp);
            let want = knn_ref(&c, rp, k);
            prop_assert_eq!(g.row(rp), want.as_slice());
        }
    }

    #[test]
    fn ball_rows_are_contained(c in cloud(), k in 1usize..12, r in 0.1f64..6.0, seed in any::<u64>()) {
        let rps: Vec<usize> = (0..c.len()).collect();
        let g = ball_group(&c, &rps, k, r, &mut rng_from_seed(seed)).unwrap();
        for rp in rps {
            prop_assert_eq!(g.row(rp)[0], rp);
            if let Err(e) = check_ball_row(&c, rp, k, r, g.row(rp)) {
                return Err(TestCaseError::fail(e));
            }
        }
    }

    #[test]
    fn normalize_contract_holds(n in 1usize..3000, target in 1usize..1500, seed in any::<u64>()) {
        if let Err(e) = support::invariants::normalize_contract(n, target, seed) {
            return Err(TestCaseError::fail(e));
        }
    }
}
