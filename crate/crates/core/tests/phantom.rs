use proptest::prelude::*;

use stereo_xct::phantom::{
    build_2d_training_set, build_3d_training_set, generate_phantom, point_segment_distance, rasterize_segments,
    rotate_edge_volume, Axis, Dataset2dConfig, Dataset3dConfig, PhantomSpec, RandomPhantomConfig, ShapeKind,
    ShapeSpec,
};
use stereo_xct::reconstruct::StereoConfig;
use stereo_xct::{ConeBeamGeometry, Vec3, Volume, VolumeSpec};

fn desk_random() -> RandomPhantomConfig {
    RandomPhantomConfig::default()
}

fn lit(v: &Volume) -> Vec<Vec3> {
    let s = *v.spec();
    (0..s.len()).filter(|i| v.data()[*i] > 0.5).map(|i| {
        let (a, b, c) = s.unindex(i);
        s.voxel_center(a, b, c)
    }).collect()
}

#[test]
fn axis_aligned_box_edges_have_analytic_lengths() {
    let pitch = 0.5;
    let grid = VolumeSpec::centered([64, 64, 64], pitch).unwrap();
    let shape = ShapeSpec {
        kind: ShapeKind::Box,
        center_mm: [0.25, -0.25, 0.25],
        rotation_deg: [0.0; 3],
        dimensions_mm: [12.0, 8.0, 10.0],
        corner_radius_mm: 0.0,
        attenuation: 0.2,
    };
    let segs = shape.feature_segments();
    assert_eq!(segs.len(), 12);
    let mut union = Volume::zeros(grid);
    let mut total = 0;
    for seg in &segs {
        let mut one = Volume::zeros(grid);
        rasterize_segments(&mut one, std::slice::from_ref(seg));
        let n = one.count_nonzero();
        let expected = (seg.1 - seg.0).norm() / pitch;
        assert!((n as f64 - expected).abs() <= 2.0, "edge of {expected} voxels lit {n}");
        total += n;
        rasterize_segments(&mut union, std::slice::from_ref(seg));
    }
    // Each of the 8 corners is shared by three edges.
    assert_eq!(union.count_nonzero(), total - 16);
    for c in shape.corners() {
        let v = grid.mm_to_voxel(&c).map(|x| x.round() as usize);
        assert_eq!(union.get(v.x, v.y, v.z), 1.0);
    }
}

#[test]
fn prism_only_spec_lights_its_twelve_edges() {
    let grid = VolumeSpec::centered([48, 40, 44], 0.5).unwrap();
    let spec = PhantomSpec { prism_mm: [20.0, 16.0, 18.0], prism_attenuation: 1.0, shapes: vec![], noise_sigma: 0.0, rng_seed: 0 };
    let (att, edges) = generate_phantom(&spec, &grid).unwrap();
    assert!(att.data().iter().all(|v| *v == 0.0 || *v == 1.0));
    let segs = spec.feature_segments();
    assert_eq!(segs.len(), 12);
    for p in lit(&edges) {
        let d = segs.iter().map(|(a, b)| point_segment_distance(&p, a, b)).fold(f64::INFINITY, f64::min);
        assert!(d <= 0.5 * 3f64.sqrt() * 0.5 + 1e-9, "voxel {p:?} is {d} mm off");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn edge_voxels_hug_the_analytic_edges(seed in 0u64..10_000) {
        let grid = VolumeSpec::centered([56, 40, 48], 0.5).unwrap();
        let spec = PhantomSpec::random(seed, &desk_random());
        let (_, edges) = generate_phantom(&spec, &grid).unwrap();
        let segs = spec.feature_segments();
        let pitch = grid.voxel_pitch;
        // Every lit voxel within one voxel of an edge...
        for p in lit(&edges) {
            let d = segs.iter().map(|(a, b)| point_segment_distance(&p, a, b)).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= pitch + 1e-9, "voxel {:?} is {} voxels off", p, d / pitch);
        }
        // ...and every edge within one voxel of a lit voxel.
        for (a, b) in &segs {
            let n = ((b - a).norm() / (0.5 * pitch)).ceil().max(1.0) as usize;
            for s in 0..=n {
                let q = a + (b - a) * (s as f64 / n as f64);
                let v = grid.mm_to_voxel(&q);
                let mut found = false;
                for di in -1..=1i64 {
                    for dj in -1..=1i64 {
                        for dk in -1..=1i64 {
                            let (i, j, k) = (v.x.round() as i64 + di, v.y.round() as i64 + dj, v.z.round() as i64 + dk);
                            found |= edges.get_or_zero(i, j, k) > 0.5;
                        }
                    }
                }
                prop_assert!(found, "edge point {:?} has no lit voxel nearby", q);
            }
        }
    }

    #[test]
    fn generation_is_a_pure_function_of_the_seed(seed in 0u64..10_000) {
        let grid = VolumeSpec::centered([32, 32, 32], 1.0).unwrap();
        let spec = PhantomSpec::random(seed, &desk_random());
        prop_assert_eq!(&spec, &PhantomSpec::random(seed, &desk_random()));
        let (a1, e1) = generate_phantom(&spec, &grid).unwrap();
        let (a2, e2) = generate_phantom(&spec, &grid).unwrap();
        prop_assert_eq!(a1.data(), a2.data());
        prop_assert_eq!(e1.data(), e2.data());
    }
}

#[test]
fn full_turn_rotation_keeps_most_edge_voxels() {
    let grid = VolumeSpec::centered([48, 48, 48], 0.6).unwrap();
    let spec = PhantomSpec::random(21, &desk_random());
    let (_, edges) = generate_phantom(&spec, &grid).unwrap();
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        let back = rotate_edge_volume(&edges, 360.0, axis);
        let (mut inter, mut uni) = (0, 0);
        for (a, b) in edges.data().iter().zip(back.data()) {
            inter += (*a > 0.5 && *b > 0.5) as usize;
            uni += (*a > 0.5 || *b > 0.5) as usize;
        }
        let jaccard = inter as f64 / uni as f64;
        assert!(jaccard >= 0.95, "{axis:?}: {jaccard}");
        assert_eq!(rotate_edge_volume(&edges, 0.0, axis).data(), edges.data());
    }
}

fn dataset3d() -> Dataset3dConfig {
    Dataset3dConfig {
        geometry: ConeBeamGeometry::new(290.0, 923.0, 128, 128, 0.8, 0.0).unwrap(),
        view_angles_deg: (-29.0, 32.0),
        axis: Axis::Y,
        stereo: StereoConfig::default(),
    }
}

#[test]
fn stereo_evidence_covers_the_edges() {
    let grid = VolumeSpec::centered([40, 40, 40], 0.6).unwrap();
    let spec = PhantomSpec::random(4, &desk_random());
    let (_, edges) = generate_phantom(&spec, &grid).unwrap();
    let pairs = build_3d_training_set(&edges, &[0.0], &dataset3d()).unwrap();
    assert_eq!(pairs.len(), 1);
    let (input, target) = (&pairs[0].input, &pairs[0].target);
    assert_eq!(target.data(), edges.data());
    // High-evidence region: the top quarter of the summed back-projection.
    let cut = 0.25 * input.max();
    let (mut hit, mut total) = (0, 0);
    for idx in (0..grid.len()).filter(|i| target.data()[*i] > 0.5) {
        let (i, j, k) = grid.unindex(idx);
        total += 1;
        let mut near = false;
        for di in -2..=2i64 {
            for dj in -2..=2i64 {
                for dk in -2..=2i64 {
                    near |= input.get_or_zero(i as i64 + di, j as i64 + dj, k as i64 + dk) >= cut;
                }
            }
        }
        hit += near as usize;
    }
    let coverage = hit as f64 / total as f64;
    assert!(coverage >= 0.9, "coverage {coverage}");
}

#[test]
fn empty_edges_give_empty_pairs() {
    let grid = VolumeSpec::centered([16, 16, 16], 1.0).unwrap();
    let pairs = build_3d_training_set(&Volume::zeros(grid), &[0.0, 90.0], &dataset3d()).unwrap();
    for p in &pairs {
        assert!(p.input.data().iter().all(|v| *v == 0.0));
        assert!(p.target.data().iter().all(|v| *v == 0.0));
    }
}

#[test]
fn two_d_dataset_is_deterministic_and_reassembles() {
    let cfg = Dataset2dConfig {
        grid: VolumeSpec::centered([32, 32, 32], 1.0).unwrap(),
        geometry: ConeBeamGeometry::new(290.0, 923.0, 64, 64, 2.0, 0.0).unwrap(),
        views_per_phantom: 2,
        block: 32,
        blocks_per_side: 3,
    };
    let specs: Vec<PhantomSpec> = (0..2).map(|s| PhantomSpec::random(s, &desk_random())).collect();
    let a = build_2d_training_set(&specs, &cfg).unwrap();
    let b = build_2d_training_set(&specs, &cfg).unwrap();
    assert_eq!(a.len(), 2 * 2 * 9);
    assert_eq!(a, b);
    // Blocks are plain crops: overlapping blocks agree on shared pixels.
    for x in &a[..9] {
        for y in &a[..9] {
            for r in 0..32 {
                for c in 0..32 {
                    let (gr, gc) = (x.offset.0 + r, x.offset.1 + c);
                    if (y.offset.0..y.offset.0 + 32).contains(&gr) && (y.offset.1..y.offset.1 + 32).contains(&gc) {
                        assert_eq!(x.input.get(r, c), y.input.get(gr - y.offset.0, gc - y.offset.1));
                    }
                }
            }
        }
    }
}
