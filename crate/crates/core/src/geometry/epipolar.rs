use std::collections::HashSet;

use nalgebra::{DMatrix, Matrix3, Matrix3x4, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeometryError, IntrinsicMatrix, Pose, ProjectionMatrix};

/// Pixel coordinates of one point seen in view 1 `(u1, v1)` and view 2 `(u2, v2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMatch {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
}

impl PointMatch {
    pub fn new(u1: f64, v1: f64, u2: f64, v2: f64) -> Self {
        Self { u1, v1, u2, v2 }
    }

    fn key(&self) -> [u64; 4] {
        [self.u1.to_bits(), self.v1.to_bits(), self.u2.to_bits(), self.v2.to_bits()]
    }
}

/// Corresponding points between the two views; duplicates are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 4]>", into = "Vec<[f64; 4]>")]
pub struct PointMatchSet {
    matches: Vec<PointMatch>,
}

impl PointMatchSet {
    pub fn new(matches: Vec<PointMatch>) -> Result<Self, GeometryError> {
        let mut seen = HashSet::with_capacity(matches.len());
        for (i, m) in matches.iter().enumerate() {
            if [m.u1, m.v1, m.u2, m.v2].iter().any(|x| !x.is_finite()) {
                return Err(GeometryError::Degenerate(format!("non-finite match at index {i}")));
            }
            if !seen.insert(m.key()) {
                return Err(GeometryError::DuplicateMatch(i));
            }
        }
        Ok(Self { matches })
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PointMatch> {
        self.matches.iter()
    }

    pub fn as_slice(&self) -> &[PointMatch] {
        &self.matches
    }
}

impl TryFrom<Vec<[f64; 4]>> for PointMatchSet {
    type Error = GeometryError;

    fn try_from(v: Vec<[f64; 4]>) -> Result<Self, Self::Error> {
        Self::new(v.into_iter().map(|[a, b, c, d]| PointMatch::new(a, b, c, d)).collect())
    }
}

impl From<PointMatchSet> for Vec<[f64; 4]> {
    fn from(s: PointMatchSet) -> Self {
        s.matches.iter().map(|m| [m.u1, m.v1, m.u2, m.v2]).collect()
    }
}

/// Similarity transform moving the centroid to the origin with mean distance √2.
fn hartley_transform(pts: &[(f64, f64)]) -> Result<Matrix3<f64>, GeometryError> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (cx, cy) = (cx / n, cy / n);
    let mean = pts.iter().map(|p| ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()).sum::<f64>() / n;
    if mean < 1e-12 {
        return Err(GeometryError::Degenerate("all points coincide in one view".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

/// Singular values sorted descending with the matching right singular vectors
/// (rows of `Vᵀ`).
fn sorted_svd(a: DMatrix<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let values = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let vectors = idx.iter().map(|&i| vt.row(i).iter().copied().collect()).collect();
    (values, vectors)
}

/// Normalized eight-point estimate of the fundamental matrix, `x₂ᵀ F x₁ = 0`.
///
/// Coordinates are Hartley-normalized per view before the linear solve and
/// the result is projected to rank 2. The returned matrix has unit Frobenius
/// norm.
pub fn estimate_fundamental(matches: &PointMatchSet) -> Result<Matrix3<f64>, GeometryError> {
    let n = matches.len();
    if n < 8 {
        return Err(GeometryError::NotEnoughMatches(n));
    }
    let p1: Vec<(f64, f64)> = matches.iter().map(|m| (m.u1, m.v1)).collect();
    let p2: Vec<(f64, f64)> = matches.iter().map(|m| (m.u2, m.v2)).collect();
    let t1 = hartley_transform(&p1)?;
    let t2 = hartley_transform(&p2)?;

    // Padding with zero rows keeps the full 9x9 right basis when n = 8.
    let mut a = DMatrix::<f64>::zeros(n.max(9), 9);
    for (i, (a1, a2)) in p1.iter().zip(&p2).enumerate() {
        let x = t1 * Vector3::new(a1.0, a1.1, 1.0);
        let y = t2 * Vector3::new(a2.0, a2.1, 1.0);
        let row = [
            y.x * x.x, y.x * x.y, y.x,
            y.y * x.x, y.y * x.y, y.y,
            x.x, x.y, 1.0,
        ];
        for (j, v) in row.into_iter().enumerate() {
            a[(i, j)] = v;
        }
    }
    let (sv, vecs) = sorted_svd(a);
    if sv[0] <= 0.0 || sv[7] / sv[0] < 1e-9 {
        return Err(GeometryError::Degenerate(format!(
            "design matrix rank below 8 (σ₈/σ₁ = {:.3e})",
            if sv[0] > 0.0 { sv[7] / sv[0] } else { 0.0 }
        )));
    }
    let f = &vecs[8];
    let fn_ = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let rank2 = enforce_rank2(&fn_);
    let full = t2.transpose() * rank2 * t1;
    Ok(full / full.norm())
}

fn enforce_rank2(f: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = f.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = svd.singular_values;
    let imin = s.imin();
    s[imin] = 0.0;
    u * Matrix3::from_diagonal(&s) * vt
}

/// Algebraic residual `|x₂ᵀ F x₁|` with `F` and both homogeneous pixel vectors
/// scaled to unit norm.
pub fn epipolar_residual(f: &Matrix3<f64>, m: &PointMatch) -> f64 {
    let x1 = Vector3::new(m.u1, m.v1, 1.0).normalize();
    let x2 = Vector3::new(m.u2, m.v2, 1.0).normalize();
    (x2.transpose() * (f / f.norm()) * x1)[0].abs()
}

fn triangulate_raw(p1: &Matrix3x4<f64>, p2: &Matrix3x4<f64>, x1: (f64, f64), x2: (f64, f64)) -> Vector3<f64> {
    let mut a = Matrix4::zeros();
    for (r, (p, (u, v))) in [(p1, x1), (p2, x2)].into_iter().enumerate() {
        a.set_row(2 * r, &(p.row(2) * u - p.row(0)));
        a.set_row(2 * r + 1, &(p.row(2) * v - p.row(1)));
    }
    // Row scaling keeps the SVD well conditioned for pixel-scale inputs.
    for mut row in a.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.unwrap();
    let h = vt.row(svd.singular_values.imin());
    Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3])
}

/// Linear (DLT) triangulation of one correspondence.
pub fn triangulate(
    p1: &ProjectionMatrix,
    p2: &ProjectionMatrix,
    x1: (f64, f64),
    x2: (f64, f64),
) -> Vector3<f64> {
    triangulate_raw(p1.entries(), p2.entries(), x1, x2)
}

/// Relative pose of view 2 from a fundamental matrix and both intrinsics.
///
/// `E = K₂ᵀ F K₁` is split into its four `(R, t)` candidates and the one that
/// places a majority of triangulated matches in front of both cameras wins.
/// The translation is returned with unit norm.
pub fn decompose_essential(
    f: &Matrix3<f64>,
    k1: &IntrinsicMatrix,
    k2: &IntrinsicMatrix,
    matches: &PointMatchSet,
) -> Result<Pose, GeometryError> {
    k1.validate()?;
    k2.validate()?;
    let e = k2.matrix().transpose() * f * k1.matrix();
    let svd = e.svd(true, true);
    let mut u = svd.u.unwrap();
    let mut vt = svd.v_t.unwrap();
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    // Third left singular vector pairs with the smallest singular value.
    let imin = svd.singular_values.imin();
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let (ua, ub, uc) = match imin {
        0 => (1, 2, 0),
        1 => (2, 0, 1),
        _ => (0, 1, 2),
    };
    // Reorder so that the null direction is last while keeping det(U) = det(V) = +1.
    let perm = |m: &Matrix3<f64>, by_col: bool| {
        if by_col {
            Matrix3::from_columns(&[m.column(ua), m.column(ub), m.column(uc)])
        } else {
            Matrix3::from_rows(&[m.row(ua), m.row(ub), m.row(uc)])
        }
    };
    let u = perm(&u, true);
    let vt = perm(&vt, false);
    let t = u.column(2).into_owned();
    let candidates = [
        (u * w * vt, t),
        (u * w * vt, -t),
        (u * w.transpose() * vt, t),
        (u * w.transpose() * vt, -t),
    ];

    let k1i = k1.inverse();
    let k2i = k2.inverse();
    let norm: Vec<((f64, f64), (f64, f64))> = matches
        .iter()
        .map(|m| {
            let a = k1i * Vector3::new(m.u1, m.v1, 1.0);
            let b = k2i * Vector3::new(m.u2, m.v2, 1.0);
            ((a.x / a.z, a.y / a.z), (b.x / b.z, b.y / b.z))
        })
        .collect();
    let p1 = Matrix3x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0);

    let mut best = (0usize, 0usize);
    for (ci, (r, t)) in candidates.iter().enumerate() {
        let mut p2 = Matrix3x4::zeros();
        p2.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        p2.set_column(3, t);
        let count = norm
            .iter()
            .filter(|(a, b)| {
                let x = triangulate_raw(&p1, &p2, *a, *b);
                let d2 = (r * x + t).z;
                x.z > 0.0 && d2 > 0.0
            })
            .count();
        if count > best.0 {
            best = (count, ci);
        }
    }
    if 2 * best.0 <= matches.len() {
        return Err(GeometryError::DecompositionFailed { best: best.0, total: matches.len() });
    }
    let (r, t) = candidates[best.1];
    let r = orthonormalize(&r);
    Pose::new(r, t.normalize())
}

fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let m = svd.u.unwrap() * svd.v_t.unwrap();
    if m.determinant() < 0.0 { -m } else { m }
}

/// Fix the metric scale of a unit-translation pose.
///
/// Both sources are assumed to aim at the rotation center, so the optical axes
/// of the two cameras meet there. The closest approach of the axes gives the
/// implied source-to-center distance of view 1 for the unit baseline, and `t`
/// is scaled so that distance equals `known_sod`.
pub fn resolve_translation_scale(pose: &Pose, known_sod: f64) -> Result<Pose, GeometryError> {
    if !(known_sod > 0.0 && known_sod.is_finite()) {
        return Err(GeometryError::InvalidScale(known_sod));
    }
    let t = *pose.translation();
    let tn = t.norm();
    if tn < 1e-15 {
        return Err(GeometryError::Degenerate("zero translation has no scale".into()));
    }
    let unit = pose.with_translation(t / tn);
    let c2 = unit.center();
    let d2 = pose.rotation().transpose() * Vector3::z();
    let e = Vector3::z();
    let b = e.dot(&d2);
    let denom = 1.0 - b * b;
    if denom < 1e-12 {
        return Err(GeometryError::Degenerate("optical axes are parallel".into()));
    }
    let w0 = -c2;
    let lambda = (b * d2.dot(&w0) - e.dot(&w0)) / denom;
    if !(lambda > 0.0) {
        return Err(GeometryError::Degenerate(format!(
            "optical axes meet behind the reference camera (λ = {lambda:.3e})"
        )));
    }
    Ok(unit.with_translation(unit.translation() * (known_sod / lambda)))
}
