//! Small dense linear algebra and deterministic RNG plumbing.
//!
//! All skeleton-scale matrices here are tiny (3x3 tensors, JxJ Laplacians with
//! J in the tens), so a cyclic Jacobi eigensolver is plenty and keeps the
//! numeric path dependency-free and easy to audit.

use ndarray::Array2;
use rand::{Rng, RngExt};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm_sq(a: Vec3) -> f64 {
    dot(a, a)
}

pub fn norm(a: Vec3) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist_sq(a: Vec3, b: Vec3) -> f64 {
    norm_sq(sub(a, b))
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    dist_sq(a, b).sqrt()
}

/// Unit vector, or `None` when the norm is below `eps`.
pub fn normalized(a: Vec3, eps: f64) -> Option<Vec3> {
    let n = norm(a);
    if n <= eps {
        None
    } else {
        Some(scale(a, 1.0 / n))
    }
}

pub fn centroid(points: &[Vec3]) -> Vec3 {
    let mut c = [0.0; 3];
    for p in points {
        c = add(c, *p);
    }
    scale(c, 1.0 / points.len().max(1) as f64)
}

pub fn mat3_identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

pub fn mat3_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat3_transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn mat3_det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Rodrigues rotation about a unit axis.
pub fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Uniform random rotation from a random unit quaternion.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Mat3 {
    let q: [f64; 4] = [
        standard_normal(rng),
        standard_normal(rng),
        standard_normal(rng),
        standard_normal(rng),
    ];
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

/// Box-Muller standard normal draw.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns of an orthogonal matrix. `rel_tol` bounds the final off-diagonal
/// Frobenius mass relative to the input's.
pub fn sym_eigen(a: &Array2<f64>, rel_tol: f64) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "sym_eigen needs a square matrix");
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let fro: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let stop = rel_tol * fro.max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= stop {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= stop / (n as f64 * n as f64) {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[p, k]] = m[[k, p]];
                    m[[k, q]] = s * mkp + c * mkq;
                    m[[q, k]] = m[[k, q]];
                }
                // closed-form updates keep the pivot entries exact
                m[[p, p]] = app - t * apq;
                m[[q, q]] = aqq + t * apq;
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].partial_cmp(&m[[j, j]]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| m[[i, i]]).collect();
    let mut vecs = Array2::<f64>::zeros((n, n));
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vecs[[row, col]] = v[[row, src]];
        }
    }
    (eigvals, vecs)
}

/// 3x3 symmetric eigendecomposition: eigenvalues descending, eigenvector
/// columns forming a proper rotation (det +1).
pub fn sym_eigen3(m: &Mat3) -> ([f64; 3], Mat3) {
    let a = Array2::from_shape_fn((3, 3), |(i, j)| m[i][j]);
    let (vals, vecs) = sym_eigen(&a, 1e-12);
    // ascending -> descending
    let vals3 = [vals[2], vals[1], vals[0]];
    let mut cols = [[0.0; 3]; 3];
    for (c, src) in [2usize, 1, 0].iter().enumerate() {
        for r in 0..3 {
            cols[r][c] = vecs[[r, *src]];
        }
    }
    if mat3_det(&cols) < 0.0 {
        for r in 0..3 {
            cols[r][2] = -cols[r][2];
        }
    }
    (vals3, cols)
}

/// SplitMix64 step, used to derive independent seed substreams.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic substream seed for `(seed, tag)` pairs.
pub fn substream(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(0xA0761D6478BD642F)))
}

/// FNV-1a hash of a string, for stable per-clip seed derivation.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xCBF29CE484222325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001B3);
    }
    h
}
