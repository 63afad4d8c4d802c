use std::collections::BTreeMap;

use mqsvis::error::Error;
use mqsvis::hyperterms::GainParams;
use mqsvis::indicators::{compute_report, compute_tile, gather, BlurWidth, TileSpec};
use mqsvis::preselection::{ModelConfig, Preselection, StrategyConfig};
use mqsvis::series::PrecisionConfig;
use mqsvis::tiling::{discover_and_gather, schedule_tiles, write_partial, TileManifest};

fn model() -> ModelConfig {
    ModelConfig::new(
        GainParams::from_mean(5.0).unwrap(),
        Preselection::Theoretical { sigma: 2 },
        PrecisionConfig::default(),
        StrategyConfig::default(),
    )
    .unwrap()
}

fn write_all(dir: &std::path::Path, manifest: &TileManifest, order: &[(u64, u64)]) {
    let widths = BlurWidth::defaults();
    let m = model();
    for &(x, y) in order {
        let spec = TileSpec::new(x, y, manifest.tile_size, TileSpec::margin_for(&widths)).unwrap();
        let p = compute_tile(spec, &m, &widths).unwrap().partial;
        write_partial(dir, manifest, x, y, &p).unwrap();
    }
}

#[test]
fn files_reproduce_in_memory_report() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = TileManifest::new(3, 7, "5", "2", "0").unwrap();
    let order: Vec<_> = schedule_tiles(&manifest).iter().map(|w| (w.x, w.y)).collect();
    write_all(dir.path(), &manifest, &order);
    let from_files = discover_and_gather(&manifest, dir.path()).unwrap();
    let direct = compute_report(&model(), 3, 7, &BlurWidth::defaults()).unwrap();
    assert_eq!(from_files, direct);
}

#[test]
fn creation_order_is_irrelevant() {
    let manifest = TileManifest::new(3, 5, "5", "2", "0").unwrap();
    let mut order: Vec<_> = schedule_tiles(&manifest).iter().map(|w| (w.x, w.y)).collect();
    let a = tempfile::tempdir().unwrap();
    write_all(a.path(), &manifest, &order);
    order.reverse();
    order.swap(0, 2);
    let b = tempfile::tempdir().unwrap();
    write_all(b.path(), &manifest, &order);
    assert_eq!(
        discover_and_gather(&manifest, a.path()).unwrap(),
        discover_and_gather(&manifest, b.path()).unwrap()
    );
}

#[test]
fn empty_directory_reports_first_hole() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = TileManifest::new(2, 10, "5", "2", "0").unwrap();
    match discover_and_gather(&manifest, dir.path()) {
        Err(Error::MissingTile { x: 0, y: 0, path: Some(p) }) => {
            assert!(p.ends_with("M5_Dth2_r0-0,0.txt"))
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn garbled_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = TileManifest::new(1, 10, "5", "2", "0").unwrap();
    std::fs::write(dir.path().join("M5_Dth2_r0-0,0.txt"), "prob_sum=oops\n").unwrap();
    let err = discover_and_gather(&manifest, dir.path()).unwrap_err();
    assert!(matches!(err, Error::MalformedPartial { .. }));
    assert!(err.to_string().contains("M5_Dth2_r0-0,0.txt"));
}

#[test]
fn tile_size_invariance() {
    let widths = BlurWidth::defaults();
    let m = model();
    let reference = compute_report(&m, 1, 50, &widths).unwrap();
    for (side, size) in [(10, 5), (5, 10), (2, 25)] {
        let r = compute_report(&m, side, size, &widths).unwrap();
        let d = reference.max_relative_difference(&r);
        assert!(d < 1e-12, "size {size}: {d:e}");
    }
}

#[test]
fn single_full_tile_matches_direct_sum() {
    let m = model();
    let report = compute_report(&m, 1, 40, &[]).unwrap();
    let mut total = 0.0;
    let mut max: f64 = 0.0;
    for k in 0..40 {
        for l in 0..40 {
            let p = m.probability(k, l);
            total += p;
            max = max.max(p);
        }
    }
    assert!((report.total_prob - total).abs() < 1e-12);
    assert_eq!(report.max_p, max);
    assert_eq!(report.visibility_overlap, 1.0);
}

#[test]
fn partials_are_reduced_in_fixed_order() {
    let m = model();
    let mut forward = BTreeMap::new();
    for (x, y) in [(0, 0), (1, 0), (1, 1)] {
        let spec = TileSpec::new(x, y, 10, 0).unwrap();
        forward.insert((x, y), compute_tile(spec, &m, &[]).unwrap().partial);
    }
    let mut backward = BTreeMap::new();
    for (k, v) in forward.iter().rev() {
        backward.insert(*k, v.clone());
    }
    assert_eq!(gather(2, &forward).unwrap(), gather(2, &backward).unwrap());
}
