use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stereo_xct::detect2d::{
    baseline_detect, detect_tiled, merge_tiles, threshold_map, tile_image, tile_offsets, BaselineConfig,
    PixelClassifier, TileSpec,
};
use stereo_xct::nn::TrainConfig;
use stereo_xct::phantom::TrainingPair;
use stereo_xct::projection::forward_project;
use stereo_xct::{ConeBeamGeometry, Projection, ProjectionKind, Vec3, Volume, VolumeSpec};

fn random_image(rows: usize, cols: usize, seed: u64) -> Projection {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect();
    Projection::from_data(rows, cols, 1.0, ProjectionKind::Probability, d).unwrap()
}

fn tile_spec() -> impl Strategy<Value = (usize, usize, TileSpec)> {
    (1usize..300).prop_flat_map(|side| {
        (Just(side), 1..=side).prop_flat_map(|(side, block)| {
            let per_side = (1..=(side - block + 1).min(24)).prop_map(TileSpec::PerSide);
            let stride = (1..=block).prop_map(TileSpec::Stride);
            (Just(side), Just(block), prop_oneof![per_side, stride])
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn accepted_tilings_cover_every_pixel((side, block, spec) in tile_spec()) {
        // Layouts that would leave gaps are rejected up front.
        let Ok(offs) = tile_offsets(side, block, spec) else {
            prop_assert!(matches!(spec, TileSpec::PerSide(_)));
            return Ok(());
        };
        prop_assert_eq!(offs[0], 0);
        prop_assert_eq!(*offs.last().unwrap(), side - block);
        prop_assert!(offs.windows(2).all(|w| w[0] < w[1]));
        let mut covered = vec![false; side];
        for o in &offs {
            covered[*o..o + block].iter_mut().for_each(|c| *c = true);
        }
        prop_assert!(covered.iter().all(|c| *c));
        if let TileSpec::PerSide(n) = spec {
            prop_assert_eq!(offs.len(), n);
        }
    }

    #[test]
    fn gapped_layouts_are_rejected(side in 3usize..300, frac in 0.05..0.45f64) {
        let block = ((side as f64 * frac) as usize).max(1);
        prop_assert!(tile_offsets(side, block, TileSpec::PerSide(2)).is_err());
        prop_assert!(tile_offsets(side, block, TileSpec::PerSide(1)).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn merge_ignores_block_order(seed in 0u64..1000, n in 3usize..6) {
        let img = random_image(48, 40, seed);
        let mut tiles = tile_image(&img, 16, TileSpec::PerSide(n)).unwrap();
        for t in tiles.iter_mut() {
            let salt = (t.row * 7 + t.col) as f64 / 400.0;
            t.data = t.data.map(|v| (v + salt).min(1.0));
        }
        let a = merge_tiles(&tiles, 48, 40).unwrap();
        tiles.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
        let b = merge_tiles(&tiles, 48, 40).unwrap();
        prop_assert!(a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn baseline_output_is_a_probability(seed in 0u64..1000, sigma in 0.5..4.0f64, scale in -3.0..3.0f64) {
        let img = random_image(32, 32, seed).map(|v| v * 10f64.powf(scale)).with_kind(ProjectionKind::Attenuation);
        let map = baseline_detect(&img, &BaselineConfig { sigma, ..Default::default() }).unwrap();
        prop_assert!(map.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let bin = threshold_map(&map, 0.5).unwrap();
        prop_assert!(bin.data().iter().all(|v| *v == 0.0 || *v == 1.0));
    }
}

#[test]
fn tiled_baseline_matches_whole_image_inside_blocks() {
    let img = random_image(96, 96, 3).with_kind(ProjectionKind::Attenuation);
    let cfg = BaselineConfig { sigma: 1.5, scale: Some(0.5), ..Default::default() };
    let whole = baseline_detect(&img, &cfg).unwrap();
    let (block, spec) = (40, TileSpec::PerSide(3));
    let tiled = detect_tiled(&img, block, spec, |b| baseline_detect(b, &cfg)).unwrap();
    let offs = tile_offsets(96, block, spec).unwrap();
    let s = cfg.support();
    // A coordinate is clean when every covering block sees it at least `s`
    // from any block edge that is not also an image edge.
    let clean = |x: usize| {
        offs.iter().filter(|&&o| (o..o + block).contains(&x)).all(|&o| {
            let lo_ok = o == 0 || x >= o + s;
            let hi_ok = o + block == 96 || x + s < o + block;
            lo_ok && hi_ok
        })
    };
    let mut checked = 0;
    for r in (0..96).filter(|&r| clean(r)) {
        for c in (0..96).filter(|&c| clean(c)) {
            assert!((tiled.get(r, c) - whole.get(r, c)).abs() < 1e-6, "pixel ({r}, {c})");
            checked += 1;
        }
    }
    assert!(checked > 96 * 96 / 2, "only {checked} interior pixels");
}

#[test]
fn baseline_peak_lies_on_a_projected_box_edge() {
    // Hessian magnitude peaks about one sigma off a pure step, so the ideal
    // edge is probed at sigma 1.
    for angle in [0.0, 20.0, 45.0, 70.0] {
    let (n, pitch) = (48, 0.5);
    let g = ConeBeamGeometry::new(290.0, 923.0, 96, 96, 1.0, angle).unwrap();
    let spec = VolumeSpec::centered([n, n, n], pitch).unwrap();
    let half = Vec3::new(6.0, 4.0, 5.0);
    let vol = Volume::from_fn(spec, |i, j, k| {
        let x = spec.voxel_center(i, j, k);
        if x.x.abs() <= half.x && x.y.abs() <= half.y && x.z.abs() <= half.z { 1.0 } else { 0.0 }
    });
    let proj = forward_project(&vol, &g).unwrap();
    let map = baseline_detect(&proj, &BaselineConfig { sigma: 1.0, ..Default::default() }).unwrap();
    let best = (0..map.data().len()).max_by(|a, b| map.data()[*a].total_cmp(&map.data()[*b])).unwrap();
    let (r, c) = ((best / 96) as f64, (best % 96) as f64);

    let cam = g.projection_matrix().unwrap();
    let corner = |m: usize| Vec3::new(
        if m & 1 == 0 { -half.x } else { half.x },
        if m & 2 == 0 { -half.y } else { half.y },
        if m & 4 == 0 { -half.z } else { half.z },
    );
    let mut nearest = f64::INFINITY;
    for a in 0..8usize {
        for bit in [1, 2, 4] {
            let b = a | bit;
            if b == a {
                continue;
            }
            let (p, q) = (cam.project(&corner(a)).unwrap(), cam.project(&corner(b)).unwrap());
            let (dx, dy) = (q.0 - p.0, q.1 - p.1);
            let t = (((c - p.0) * dx + (r - p.1) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            nearest = nearest.min(((p.0 + t * dx - c).powi(2) + (p.1 + t * dy - r).powi(2)).sqrt());
        }
    }
    assert!(nearest <= 2.0, "angle {angle}: peak ({c}, {r}) is {nearest} px from every projected edge");
    }
}

#[test]
fn all_zero_target_drives_probabilities_down() {
    let input = random_image(16, 16, 9).with_kind(ProjectionKind::Attenuation);
    let target = Projection::zeros(16, 16, 1.0, ProjectionKind::Probability);
    let pair = TrainingPair { input: input.clone(), target, source: "zero".into(), offset: (0, 0) };
    let mut clf = PixelClassifier::new(1, 4, 2).unwrap();
    let cfg = TrainConfig { lr: 1e-2, epochs: 50, batch: 1, pos_weight: Some(1.0), ..Default::default() };
    clf.train(std::slice::from_ref(&pair), &cfg).unwrap();
    let p = clf.predict(&input).unwrap();
    let mean = p.data().iter().sum::<f64>() / p.data().len() as f64;
    assert!(mean < 0.1, "mean probability {mean}");
    assert_eq!(p, clf.predict(&input).unwrap());
}
