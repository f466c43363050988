use pfn_core::data::*;
use pfn_core::numeric::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn halton_base_two_prefix() {
    let x: Vec<f64> = (1..=3).map(|i| halton_point(i, 1).unwrap()[0]).collect();
    assert_eq!(x, [0.5, 0.25, 0.75]);
}

#[test]
fn sobol_fills_dyadic_grid() {
    let mut cells = [[0u8; 8]; 8];
    for i in 0..64 {
        let p = sobol_point(i, 2).unwrap();
        cells[(p[0] * 8.0) as usize][(p[1] * 8.0) as usize] += 1;
    }
    assert!(cells.iter().flatten().all(|&c| c == 1), "{cells:?}");
}

#[test]
fn sobol_net_property_holds_for_other_shapes() {
    // every 2^m block of consecutive points is a (0,m,2)-net in dims 1 and 2
    for m in 1..=8u32 {
        let n = 1u64 << m;
        for start_block in 0..3u64 {
            for a in 0..=m {
                let (bx, by) = (1usize << a, 1usize << (m - a));
                let mut cells = vec![0u32; bx * by];
                for i in start_block * n..(start_block + 1) * n {
                    let p = sobol_point(i, 2).unwrap();
                    cells[(p[0] * bx as f64) as usize * by + (p[1] * by as f64) as usize] += 1;
                }
                assert!(cells.iter().all(|&c| c == 1), "m {m} a {a} block {start_block}");
            }
        }
    }
}

/// Largest gap between the empirical and true mass of random anchored boxes.
fn box_discrepancy(points: &[Vec<f64>], probes: &[Vec<f64>]) -> f64 {
    probes
        .iter()
        .map(|corner| {
            let vol: f64 = corner.iter().product();
            let inside = points
                .iter()
                .filter(|p| p.iter().zip(corner).all(|(a, b)| a < b))
                .count();
            (inside as f64 / points.len() as f64 - vol).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn quasi_random_points_beat_pseudo_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for dims in [2, 4, 6] {
        let probes: Vec<Vec<f64>> = (0..2000)
            .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
            .collect();
        let n = 512;
        let halton: Vec<_> = (1..=n).map(|i| halton_point(i, dims).unwrap()).collect();
        let sobol: Vec<_> = (0..n).map(|i| sobol_point(i, dims).unwrap()).collect();
        let random: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
            .collect();
        let dr = box_discrepancy(&random, &probes);
        assert!(box_discrepancy(&halton, &probes) < dr, "halton dims {dims}");
        assert!(box_discrepancy(&sobol, &probes) < dr, "sobol dims {dims}");
    }
}

#[test]
fn points_stay_in_unit_cube() {
    for i in 0..2000 {
        for p in [halton_point(i, 10).unwrap(), sobol_point(i, 6).unwrap()] {
            assert!(p.iter().all(|&v| (0.0..1.0).contains(&v)));
        }
    }
}

fn positive_rate(spec: &ProblemSpec, n: u64) -> f64 {
    let pos = (1..=n)
        .filter(|&i| spec.label(&halton_point(i, spec.dims).unwrap()) == 1)
        .count();
    pos as f64 / n as f64
}

#[test]
fn needle_problem_is_rare_but_present() {
    let r = positive_rate(&needle4d(), 10_000);
    assert!((0.01..=0.04).contains(&r), "{r}");
    assert!(needle4d().imbalanced);
}

#[test]
fn balanced_problems_have_moderate_rates() {
    for spec in [rings2d(), box6d()] {
        let r = positive_rate(&spec, 10_000);
        assert!((0.3..=0.6).contains(&r), "{} {r}", spec.name);
    }
}

#[test]
fn generated_labels_are_pure() {
    for spec in builtin_problems() {
        for seed in [0, 17, 4095, 9000] {
            let g = generate_problem(&spec, 200, 100, seed).unwrap();
            assert_eq!(g.train.n_rows(), 200);
            assert_eq!(g.test.n_rows(), 100);
            for ds in [&g.train, &g.test] {
                for r in 0..ds.n_rows() {
                    assert_eq!(spec.label(ds.x.row(r)), ds.y[r]);
                }
            }
            let counts = g.train.class_counts();
            assert!(counts.iter().all(|&c| c > 0), "{} {counts:?}", spec.name);
            assert_eq!(g.train.guard.is_some(), spec.imbalanced);
        }
    }
}

#[test]
fn missing_class_triggers_noted_regeneration() {
    let spec = needle4d();
    let hit = (0..4096u64).find_map(|seed| {
        let g = generate_problem(&spec, 8, 8, seed).unwrap();
        (!g.notes.is_empty()).then_some(g)
    });
    let g = hit.expect("some short prefix lacks a positive point");
    assert!(g.train.class_counts().iter().all(|&c| c > 0));
    assert!(g.notes[0].contains("needle4d"));
}

#[test]
fn test_points_differ_from_train_points() {
    let g = generate_problem(&box6d(), 128, 128, 3).unwrap();
    for r in 0..g.test.n_rows() {
        for s in 0..g.train.n_rows() {
            assert_ne!(g.test.x.row(r), g.train.x.row(s));
        }
    }
}

proptest! {
    #[test]
    fn csv_round_trip_is_bit_exact(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 6..60),
        n_classes in 2usize..5,
        seed in any::<u64>(),
    ) {
        let d = 3;
        let n = values.len() / d;
        let x = Matrix::from_vec(n, d, values[..n * d].to_vec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = (0..n).map(|_| rng.random_range(0..n_classes)).collect();
        let ds = Dataset::new("p", x, y, n_classes).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = save_dataset(&ds, dir.path()).unwrap();
        let back = load_csv_dataset(&files.csv, &files.meta).unwrap();
        prop_assert_eq!(back, ds);
    }
}

#[test]
fn malformed_csv_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let x = Matrix::from_rows(&[vec![0.5, 1.0], vec![0.25, 2.0]]).unwrap();
    let ds = Dataset::new("bad", x, vec![0, 1], 2).unwrap();
    let files = save_dataset(&ds, dir.path()).unwrap();
    std::fs::write(&files.csv, "x0,x1,label\n0.5,1.0,0\n0.25,oops,1\n").unwrap();
    match load_csv_dataset(&files.csv, &files.meta) {
        Err(pfn_core::Error::Parse { line, detail, .. }) => {
            assert_eq!(line, 3);
            assert!(detail.contains("x1"), "{detail}");
        }
        other => panic!("{other:?}"),
    }
    std::fs::write(&files.csv, "x0,x1,label\n0.5,1.0,0\n0.25,1.0,7\n").unwrap();
    assert!(matches!(
        load_csv_dataset(&files.csv, &files.meta),
        Err(pfn_core::Error::Validation(_))
    ));
}
