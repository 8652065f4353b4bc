use std::io::Write;

use ndarray::s;
use qrff_core::adaptive::{optimize_greedy, OptimizerOptions};
use qrff_core::densities::{transform, ProductDensity};
use qrff_core::discrepancy::{box_discrepancy_gaussian, BoxBounds};
use qrff_core::experiment::{run_pipeline, synthetic_gaussian, Dataset, ExperimentConfig, SequenceKind};
use qrff_core::sequences::halton;
use qrff_core::{Error, FrequencySet};

fn prefix(m: &FrequencySet, t: usize) -> FrequencySet {
    FrequencySet::new(m.points.slice(s![..t, ..]).to_owned(), "prefix").unwrap()
}

#[test]
fn greedy_prefixes_against_halton_prefixes() {
    let p = ProductDensity::gaussian(vec![1.0, 1.0]).unwrap();
    let b = BoxBounds::uniform(1.0, 2).unwrap();
    let tr = optimize_greedy(16, &p, &b, 1, &OptimizerOptions::greedy_inner()).unwrap();
    let hal = transform(&halton(16, 2, false, 1).unwrap(), &p).unwrap();
    let d2 = |f: &FrequencySet| box_discrepancy_gaussian(f, &p, &b).unwrap().d_squared;
    for t in 1..=16 {
        let (g, h) = (d2(&prefix(&tr.freqs, t)), d2(&prefix(&hal, t)));
        assert!((tr.records[t - 1].objective - g).abs() <= 1e-12);
        if t == 1 || t >= 4 {
            assert!(g <= h, "t={t}: greedy {g:e} > halton {h:e}");
        }
    }
    // Prefix dominance is not guaranteed: the best single point is the
    // origin, and the best point to add to it is the origin again, so the
    // greedy 2-set keeps the 1-set's discrepancy while Halton's improves.
    assert!(tr.freqs.points.row(1).iter().all(|v| v.abs() < 1e-6));
    assert!(d2(&prefix(&tr.freqs, 2)) > d2(&prefix(&hal, 2)));
}

#[test]
fn greedy_step_is_grid_optimal() {
    let p = ProductDensity::gaussian(vec![1.0, 1.0]).unwrap();
    let b = BoxBounds::uniform(1.0, 2).unwrap();
    let tr = optimize_greedy(3, &p, &b, 1, &OptimizerOptions::greedy_inner()).unwrap();
    let fixed = prefix(&tr.freqs, 2);
    let mut best = f64::INFINITY;
    for i in -120..=120 {
        for j in -120..=120 {
            let mut pts = fixed.points.clone();
            pts.push_row(ndarray::array![i as f64 * 0.05, j as f64 * 0.05].view())
                .unwrap();
            let f = FrequencySet::new(pts, "grid").unwrap();
            best = best.min(box_discrepancy_gaussian(&f, &p, &b).unwrap().d_squared);
        }
    }
    assert!(
        tr.final_d_squared <= best + 1e-12,
        "greedy {:e} grid {best:e}",
        tr.final_d_squared
    );
}

#[test]
fn pipeline_discrepancy_tracks_gram_error() {
    let ds = synthetic_gaussian(200, 2, 21);
    let cfg = ExperimentConfig {
        sequences: vec![
            SequenceKind::Mc,
            SequenceKind::Halton,
            SequenceKind::Lattice,
            SequenceKind::Global,
        ],
        s_grid: vec![8, 16, 32, 64],
        trials: 5,
        seed: 21,
        ..Default::default()
    };
    let report = run_pipeline(&cfg, &ds).unwrap();
    let rho = report.spearman_half_box_vs_frobenius.expect("enough cells");
    assert!(rho > 0.0, "spearman {rho}");

    for s in &cfg.s_grid {
        let full = |seq: &str| {
            report
                .discrepancy
                .iter()
                .find(|r| r.sequence == seq && r.s == *s)
                .and_then(|r| r.full_box)
                .unwrap()
        };
        assert!(full("halton") >= full("global"), "s={s}");
    }
}

#[test]
fn pipeline_rejects_unknown_sequence_names() {
    let err = "sobol".parse::<SequenceKind>().unwrap_err();
    let msg = err.to_string();
    for name in [
        "mc",
        "halton",
        "halton-scrambled",
        "lattice",
        "global",
        "greedy",
        "weighted",
    ] {
        assert!(msg.contains(name), "{msg}");
    }
}

#[test]
fn load_csv_reports_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    std::fs::File::create(&good)
        .unwrap()
        .write_all(b"1,2\n3,4\n5,6\n")
        .unwrap();
    let ds = Dataset::load_csv(&good, false, false).unwrap();
    assert_eq!((ds.n(), ds.d()), (3, 2));
    let ds = Dataset::load_csv(&good, true, false).unwrap();
    assert_eq!(ds.y.unwrap().to_vec(), vec![2.0, 4.0, 6.0]);

    let bad = dir.path().join("bad.csv");
    std::fs::File::create(&bad).unwrap().write_all(b"1,a\n").unwrap();
    match Dataset::load_csv(&bad, false, false) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
        other => panic!("{other:?}"),
    }

    let empty = dir.path().join("empty.csv");
    std::fs::File::create(&empty).unwrap();
    assert!(matches!(Dataset::load_csv(&empty, false, false), Err(Error::Empty(_))));
}
