//! Benchmark fixtures shared by the criterion benches.

use stereo_xct::{ConeBeamGeometry, Projection, ProjectionKind, Volume, VolumeSpec};

/// Uniform sphere of radius `n/3` voxels in an `n³` grid at 0.5 mm.
pub fn sphere(n: usize) -> Volume {
    let spec = VolumeSpec::centered([n; 3], 0.5).expect("valid grid");
    let r = n as f64 * 0.5 / 3.0;
    Volume::from_fn(spec, |i, j, k| if spec.voxel_center(i, j, k).norm() <= r { 1.0 } else { 0.0 })
}

/// Desk geometry with a square detector of `side` pixels.
pub fn geometry(side: usize, pixel: f64) -> ConeBeamGeometry {
    ConeBeamGeometry::new(290.0, 923.0, side, side, pixel, -29.0).expect("valid geometry")
}

/// Smooth deterministic test image.
pub fn image(side: usize, kind: ProjectionKind) -> Projection {
    let data = (0..side * side)
        .map(|i| {
            let (r, c) = ((i / side) as f64, (i % side) as f64);
            0.5 + 0.5 * (0.11 * r).sin() * (0.07 * c).cos()
        })
        .collect();
    Projection::from_data(side, side, 1.0, kind, data).expect("valid image")
}
