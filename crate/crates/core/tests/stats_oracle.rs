mod common;

use common::*;
use epp_core::corpus::k_core_mask;
use epp_core::pipeline::{StatsBundle, StatsConfig};
use epp_core::popstats::{high_pop_threshold, local_popularity};

#[test]
fn tables_match_brute_force_recount() {
    for (seed, n, w) in [(1u64, 300usize, 3usize), (2, 700, 1), (3, 1000, 12)] {
        let ds = random_split(seed, n, 15, 25, 30);
        let cfg = StatsConfig {
            window_steps: Some(w),
            quantile: 0.2,
            ..Default::default()
        };
        let stats = StatsBundle::build(&ds, &cfg).unwrap();
        let brute = BruteTables::new(&ds, w, 20);
        for t in 0..ds.grid.num_steps {
            for i in 0..ds.num_items {
                assert_eq!(stats.pop.local(i, t), brute.local[i][t], "p[{i}][{t}]");
            }
            assert_eq!(stats.pers.threshold[t], brute.threshold[t], "threshold at {t}");
            assert_eq!(high_pop_threshold(&stats.pop, t, 0.2), brute.threshold[t]);
            for u in 0..ds.num_users {
                assert_eq!(stats.pers.personal(u, t), brute.personal[u][t], "s[{u}][{t}]");
            }
        }
        for i in 0..ds.num_items {
            assert_eq!(stats.pop.avg_local[i], brute.avg_local[i]);
            let d = ds.train.iter().filter(|x| x.item == i).count() as u64;
            assert_eq!(stats.pop.global[i], d);
        }
    }
}

#[test]
fn local_popularity_sums_to_one_on_nonempty_windows() {
    for seed in 10..15 {
        let ds = random_split(seed, 800, 20, 40, 50);
        for w in [1, 4, 50] {
            let pop = local_popularity(&ds.train, ds.num_items, &ds.grid, w);
            for t in 0..ds.grid.num_steps {
                let sum: f64 = pop.step_values(t).sum();
                if pop.window_totals[t] > 0 {
                    assert!((sum - 1.0).abs() < 1e-9, "step {t}: {sum}");
                } else {
                    assert_eq!(sum, 0.0);
                }
            }
        }
    }
}

#[test]
fn wider_windows_never_shrink_the_window_count() {
    let ds = random_split(21, 600, 10, 30, 40);
    let mut prev = vec![0u64; ds.grid.num_steps];
    for w in 1..=12 {
        let pop = local_popularity(&ds.train, ds.num_items, &ds.grid, w);
        for (t, (&now, before)) in pop.window_totals.iter().zip(prev.iter_mut()).enumerate() {
            assert!(now >= *before, "w={w} t={t}");
            *before = now;
        }
    }
}

#[test]
fn personal_popularity_stays_in_unit_interval() {
    let ds = random_split(5, 900, 30, 20, 25);
    let stats = StatsBundle::build(
        &ds,
        &StatsConfig {
            window_steps: Some(2),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(stats.pers.personal.iter().all(|&s| (0.0..=1.0).contains(&s)));
    assert!(stats.pop.avg_local.iter().all(|&p| (0.0..=1.0).contains(&p)));
}

#[test]
fn k_core_matches_iterative_brute_force() {
    // a 12-interaction log where removing user 3 cascades into item 2
    let edges = [
        (0, 0),
        (0, 1),
        (1, 0),
        (1, 1),
        (2, 0),
        (2, 1),
        (3, 2),
        (3, 0),
        (4, 2),
        (0, 3),
        (1, 3),
        (2, 3),
    ];
    for k in 0..=4 {
        assert_eq!(k_core_mask(&edges, k), brute_k_core(&edges, k), "k={k}");
    }
    let kept = k_core_mask(&edges, 2);
    let survivors: Vec<_> = edges.iter().zip(&kept).filter(|(_, &k)| k).map(|(e, _)| *e).collect();
    for &(u, i) in &survivors {
        assert!(survivors.iter().filter(|e| e.0 == u).count() >= 2);
        assert!(survivors.iter().filter(|e| e.1 == i).count() >= 2);
    }
    assert!(!survivors.contains(&(3, 2)) && !survivors.contains(&(4, 2)));
}

#[test]
fn k_core_matches_brute_force_on_random_logs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let edges: Vec<(usize, usize)> = (0..60)
            .map(|_| (rng.random_range(0..12), rng.random_range(0..10)))
            .collect();
        for k in 1..=5 {
            assert_eq!(k_core_mask(&edges, k), brute_k_core(&edges, k));
        }
    }
}
