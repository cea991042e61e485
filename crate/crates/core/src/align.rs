//! Rigid alignment. Two routes are provided: correspondence-based Procrustes
//! (Kabsch, no scaling) for the metrics, and a correspondence-free
//! structure-tensor alignment for the geometry loss.
//!
//! Both map the FIRST argument's coordinate frame onto the SECOND's:
//! `x_target ~ R * x_source + t`.

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Vec3};
use crate::rig::Skeleton;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub r: Mat3,
    pub t: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            r: math::mat3_identity(),
            t: [0.0; 3],
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        math::add(math::mat3_vec(&self.r, p), self.t)
    }

    pub fn apply_all(&self, points: &[Vec3]) -> Vec<Vec3> {
        points.iter().map(|&p| self.apply(p)).collect()
    }

    /// R orthonormal with det +1, both within `tol` elementwise.
    pub fn is_valid_rotation(&self, tol: f64) -> bool {
        let rt = math::mat3_transpose(&self.r);
        let id = math::mat3_mul(&rt, &self.r);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                if (id[i][j] - want).abs() > tol {
                    return false;
                }
            }
        }
        (math::mat3_det(&self.r) - 1.0).abs() <= tol
    }
}

fn check_finite(points: &[Vec3], ctx: &str) -> Result<()> {
    if points.iter().flatten().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteCoordinate { context: ctx.into() })
    }
}

/// Least-squares rigid transform (rotation + translation, no scale) mapping
/// `source` onto `target` with correspondence by index.
///
/// If the optimal orthogonal map has a reflection, the singular direction
/// with the smallest singular value is flipped, which yields the optimal
/// proper rotation.
pub fn kabsch_align(source: &[Vec3], target: &[Vec3]) -> Result<RigidTransform> {
    if source.len() != target.len() {
        return Err(Error::CountMismatch {
            left: source.len(),
            right: target.len(),
        });
    }
    if source.is_empty() {
        return Err(Error::EmptySet);
    }
    check_finite(source, "kabsch source")?;
    check_finite(target, "kabsch target")?;

    let sc = math::centroid(source);
    let tc = math::centroid(target);

    // cross-covariance H = sum (s - sc)(g - tc)^T
    let mut h = [[0.0f64; 3]; 3];
    for (s, g) in source.iter().zip(target) {
        let a = math::sub(*s, sc);
        let b = math::sub(*g, tc);
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] += a[i] * b[j];
            }
        }
    }

    // SVD via the eigendecomposition of H^T H: H = U S V^T, H^T H = V S^2 V^T
    let mut hth = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            hth[i][j] = (0..3).map(|k| h[k][i] * h[k][j]).sum();
        }
    }
    let (eigs, v) = math::sym_eigen3(&hth); // descending, det(V) = +1
    let sigma: Vec<f64> = eigs.iter().map(|&e| e.max(0.0).sqrt()).collect();

    // left singular vectors: u_i = H v_i / sigma_i for numerically nonzero
    // eigenvalues, completed orthonormally (right-handed) for the rest
    let mut u_cols: [Option<Vec3>; 3] = [None; 3];
    for i in 0..3 {
        if eigs[i] > 1e-12 * eigs[0].max(f64::MIN_POSITIVE) {
            let vi = [v[0][i], v[1][i], v[2][i]];
            let hv = [
                math::dot(h[0], vi),
                math::dot(h[1], vi),
                math::dot(h[2], vi),
            ];
            u_cols[i] = Some(math::scale(hv, 1.0 / sigma[i]));
        }
    }
    complete_orthonormal(&mut u_cols);
    let mut u = [[0.0f64; 3]; 3];
    for (i, col) in u_cols.iter().enumerate() {
        let col = col.expect("completed basis");
        for r in 0..3 {
            u[r][i] = col[r];
        }
    }
    gram_schmidt_polish(&mut u);

    // R = V diag(1,1,d) U^T with d = det(V) det(U) = det(U)
    let d = math::mat3_det(&u).signum() * math::mat3_det(&v).signum();
    let mut v_adj = v;
    for r in 0..3 {
        v_adj[r][2] *= d;
    }
    let r = math::mat3_mul(&v_adj, &math::mat3_transpose(&u));
    let t = math::sub(tc, math::mat3_vec(&r, sc));
    Ok(RigidTransform { r, t })
}

/// In-place Gram-Schmidt on the columns, in order. Orientation-preserving.
fn gram_schmidt_polish(m: &mut Mat3) {
    let mut cols: [Vec3; 3] = [[0.0; 3]; 3];
    for c in 0..3 {
        for r in 0..3 {
            cols[c][r] = m[r][c];
        }
    }
    for c in 0..3 {
        for prev in 0..c {
            let proj = math::dot(cols[c], cols[prev]);
            cols[c] = math::sub(cols[c], math::scale(cols[prev], proj));
        }
        cols[c] = math::normalized(cols[c], 1e-300).unwrap_or(cols[c]);
    }
    for c in 0..3 {
        for r in 0..3 {
            m[r][c] = cols[c][r];
        }
    }
}

/// Fills the `None` columns so the three form a right-handed orthonormal set.
fn complete_orthonormal(cols: &mut [Option<Vec3>; 3]) {
    let have: Vec<Vec3> = cols.iter().flatten().copied().collect();
    match have.len() {
        3 => {}
        2 => {
            let c = math::cross(have[0], have[1]);
            let slot = cols.iter().position(Option::is_none).unwrap();
            cols[slot] = Some(c);
        }
        1 => {
            let a = have[0];
            // pick the standard axis least aligned with a
            let axes = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
            let pick = axes
                .iter()
                .min_by(|x, y| {
                    math::dot(**x, a)
                        .abs()
                        .partial_cmp(&math::dot(**y, a).abs())
                        .unwrap()
                })
                .unwrap();
            let b = math::normalized(
                math::sub(*pick, math::scale(a, math::dot(*pick, a))),
                1e-300,
            )
            .unwrap();
            let c = math::cross(a, b);
            let mut fill = [b, c].into_iter();
            for slot in cols.iter_mut() {
                if slot.is_none() {
                    *slot = Some(fill.next().unwrap());
                }
            }
        }
        0 => {
            cols[0] = Some([1.0, 0.0, 0.0]);
            cols[1] = Some([0.0, 1.0, 0.0]);
            cols[2] = Some([0.0, 0.0, 1.0]);
        }
        _ => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMethod {
    StructureTensor,
    KabschFallback,
    CentroidFallback,
}

#[derive(Debug, Clone)]
pub struct StructAlign {
    pub transform: RigidTransform,
    pub method: AlignMethod,
    /// Symmetric squared-midpoint Chamfer achieved by the returned transform.
    pub midpoint_chamfer: f64,
}

struct EdgeStats {
    tensor: Mat3,
    midpoints: Vec<Vec3>,
}

fn edge_stats(skel: &Skeleton) -> Result<EdgeStats> {
    let edges = skel.edges();
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    let vectors: Vec<Vec3> = edges
        .iter()
        .map(|&(p, c)| math::sub(skel.joints[c], skel.joints[p]))
        .collect();
    let midpoints: Vec<Vec3> = edges
        .iter()
        .map(|&(p, c)| math::scale(math::add(skel.joints[p], skel.joints[c]), 0.5))
        .collect();
    let total: f64 = vectors.iter().map(|v| math::norm(*v)).sum();
    let mut tensor = [[0.0f64; 3]; 3];
    if total > 0.0 {
        for v in &vectors {
            let w = math::norm(*v) / total; // weights favor long, stable bones
            for i in 0..3 {
                for j in 0..3 {
                    tensor[i][j] += w * v[i] * v[j];
                }
            }
        }
    }
    Ok(EdgeStats { tensor, midpoints })
}

/// Symmetric squared Chamfer between two point sets.
pub fn chamfer_sq(a: &[Vec3], b: &[Vec3]) -> f64 {
    let one_way = |from: &[Vec3], to: &[Vec3]| -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| math::dist_sq(*p, *q))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    0.5 * (one_way(a, b) + one_way(b, a))
}

/// The four det(+1) eigenvector sign combinations considered by
/// [`structure_tensor_align`], each with its midpoint Chamfer.
pub fn structure_tensor_candidates(
    anchor: &Skeleton,
    frame: &Skeleton,
) -> Result<Vec<StructAlign>> {
    let a = edge_stats(anchor)?;
    let f = edge_stats(frame)?;
    let (_, pa) = math::sym_eigen3(&a.tensor);
    let (_, pf) = math::sym_eigen3(&f.tensor);
    let mu_a = math::centroid(&a.midpoints);
    let mu_f = math::centroid(&f.midpoints);

    const SIGNS: [[f64; 3]; 4] = [
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ];
    let mut out = Vec::with_capacity(4);
    for signs in SIGNS {
        let mut pa_signed = pa;
        for (c, s) in signs.iter().enumerate() {
            for r in 0..3 {
                pa_signed[r][c] *= s;
            }
        }
        let r = math::mat3_mul(&pf, &math::mat3_transpose(&pa_signed));
        let t = math::sub(mu_f, math::mat3_vec(&r, mu_a));
        let transform = RigidTransform { r, t };
        let moved = transform.apply_all(&a.midpoints);
        let chamfer = chamfer_sq(&moved, &f.midpoints);
        out.push(StructAlign {
            transform,
            method: AlignMethod::StructureTensor,
            midpoint_chamfer: chamfer,
        });
    }
    Ok(out)
}

/// Correspondence-free rigid alignment of `anchor` onto `frame` by matching
/// the principal axes of the bone structure tensors. Among the four det(+1)
/// axis sign choices the one minimizing the symmetric midpoint Chamfer wins.
///
/// Rank-deficient tensors (single bone, collinear bones) fall back to Kabsch
/// when joint counts match, else to an identity rotation with centroid
/// translation; the result carries the method used.
pub fn structure_tensor_align(anchor: &Skeleton, frame: &Skeleton) -> Result<StructAlign> {
    let a = edge_stats(anchor)?;
    let f = edge_stats(frame)?;

    let rank2 = |tensor: &Mat3| {
        let (eigs, _) = math::sym_eigen3(tensor);
        eigs[1] > 1e-9 * eigs[0].max(f64::MIN_POSITIVE)
    };
    if !rank2(&a.tensor) || !rank2(&f.tensor) {
        let mu_a = math::centroid(&a.midpoints);
        let mu_f = math::centroid(&f.midpoints);
        if anchor.joint_count() == frame.joint_count() {
            let transform = kabsch_align(&anchor.joints, &frame.joints)?;
            let chamfer = chamfer_sq(&transform.apply_all(&a.midpoints), &f.midpoints);
            return Ok(StructAlign {
                transform,
                method: AlignMethod::KabschFallback,
                midpoint_chamfer: chamfer,
            });
        }
        let transform = RigidTransform {
            r: math::mat3_identity(),
            t: math::sub(mu_f, mu_a),
        };
        let chamfer = chamfer_sq(&transform.apply_all(&a.midpoints), &f.midpoints);
        return Ok(StructAlign {
            transform,
            method: AlignMethod::CentroidFallback,
            midpoint_chamfer: chamfer,
        });
    }

    let candidates = structure_tensor_candidates(anchor, frame)?;
    Ok(candidates
        .into_iter()
        .min_by(|x, y| x.midpoint_chamfer.partial_cmp(&y.midpoint_chamfer).unwrap())
        .expect("four candidates"))
}
