//! Shared skinning machinery: pose-consistent surface sampling, barycentric
//! teacher transfer, the Top-K support mask, and the masked
//! renormalization/averaging operators every skinning loss and metric is
//! built from.

use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::rig::{RigClip, Skeleton};
use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;

/// Surface points sampled once on the anchor mesh and carried through every
/// frame by the shared `(face, barycentric)` index, which is what makes the
/// correspondences pose-consistent.
#[derive(Debug, Clone)]
pub struct SurfaceSamples {
    /// Face index per sample.
    pub faces: Vec<usize>,
    /// Vertex triple of each sampled face.
    pub face_vertices: Vec<[usize; 3]>,
    /// Barycentric weights per sample (non-negative, sum 1).
    pub bary: Vec<[f64; 3]>,
    /// positions[k][i]: sample i interpolated on frame k.
    pub positions: Vec<Vec<Vec3>>,
    /// normals[k][i]: unit face normal of the containing face at frame k.
    pub normals: Vec<Vec<Vec3>>,
    /// Samples whose face degenerated (zero area) on some frame.
    pub degenerate: Vec<bool>,
}

impl SurfaceSamples {
    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn frame_count(&self) -> usize {
        self.positions.len()
    }

    /// N x 6 query rows for frame k: position then normal.
    pub fn query_matrix(&self, k: usize) -> Vec<[f64; 6]> {
        self.positions[k]
            .iter()
            .zip(&self.normals[k])
            .map(|(e, n)| [e[0], e[1], e[2], n[0], n[1], n[2]])
            .collect()
    }
}

fn face_area(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    0.5 * math::norm(math::cross(math::sub(b, a), math::sub(c, a)))
}

fn face_normal(a: Vec3, b: Vec3, c: Vec3) -> Option<Vec3> {
    math::normalized(math::cross(math::sub(b, a), math::sub(c, a)), 1e-12)
}

/// Per-clip sampling seed: global seed combined with the clip id hash, so
/// multi-clip runs are reproducible clip-by-clip.
pub fn clip_seed(global_seed: u64, clip_id: &str) -> u64 {
    math::substream(global_seed, math::fnv1a64(clip_id))
}

/// Area-weighted triangle sampling on the anchor mesh, square-root warp for
/// uniform barycentrics. Sample i is a pure function of `(seed, i)`, so
/// results do not depend on evaluation order or thread count.
pub fn sample_surface(clip: &RigClip, n_samples: usize, seed: u64) -> Result<SurfaceSamples> {
    assert!(n_samples >= 1, "need at least one sample");
    let (faces, mesh_frames) = match (&clip.faces, &clip.mesh_frames) {
        (Some(f), Some(m)) if !f.is_empty() && !m.is_empty() => (f, m),
        _ => return Err(Error::NoMesh),
    };
    let anchor = &mesh_frames[0];
    let mut cumulative = Vec::with_capacity(faces.len());
    let mut total = 0.0;
    for tri in faces {
        let area = face_area(
            anchor.vertices[tri[0]],
            anchor.vertices[tri[1]],
            anchor.vertices[tri[2]],
        );
        total += area;
        cumulative.push(total);
    }
    if total <= 0.0 {
        return Err(Error::ZeroAreaMesh);
    }

    let mut face_idx = Vec::with_capacity(n_samples);
    let mut bary = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(math::substream(seed, i as u64));
        let u = rng.random::<f64>() * total;
        let fi = cumulative.partition_point(|&c| c <= u).min(faces.len() - 1);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let s = r1.sqrt();
        face_idx.push(fi);
        bary.push([1.0 - s, s * (1.0 - r2), s * r2]);
    }
    from_parts(clip, face_idx, bary)
}

/// Builds samples from explicit `(face, barycentric)` assignments. Used by
/// tests and by callers that need hand-placed query points.
pub fn from_parts(
    clip: &RigClip,
    face_idx: Vec<usize>,
    bary: Vec<[f64; 3]>,
) -> Result<SurfaceSamples> {
    let (faces, mesh_frames) = match (&clip.faces, &clip.mesh_frames) {
        (Some(f), Some(m)) if !f.is_empty() && !m.is_empty() => (f, m),
        _ => return Err(Error::NoMesh),
    };
    assert_eq!(face_idx.len(), bary.len());
    let n = face_idx.len();
    let face_vertices: Vec<[usize; 3]> = face_idx.iter().map(|&f| faces[f]).collect();

    let mut positions = Vec::with_capacity(mesh_frames.len());
    let mut normals = Vec::with_capacity(mesh_frames.len());
    let mut degenerate = vec![false; n];
    for frame in mesh_frames {
        let mut pos_k = Vec::with_capacity(n);
        let mut nrm_k = Vec::with_capacity(n);
        for i in 0..n {
            let [va, vb, vc] = face_vertices[i];
            let (a, b, c) = (frame.vertices[va], frame.vertices[vb], frame.vertices[vc]);
            let l = bary[i];
            pos_k.push(math::add(
                math::add(math::scale(a, l[0]), math::scale(b, l[1])),
                math::scale(c, l[2]),
            ));
            match face_normal(a, b, c) {
                Some(nrm) => nrm_k.push(nrm),
                None => {
                    nrm_k.push([0.0; 3]);
                    degenerate[i] = true;
                }
            }
        }
        positions.push(pos_k);
        normals.push(nrm_k);
    }

    Ok(SurfaceSamples {
        faces: face_idx,
        face_vertices,
        bary,
        positions,
        normals,
        degenerate,
    })
}

/// Transfers per-vertex teacher rows to the sampled points by barycentric
/// interpolation. Convexity keeps rows row-stochastic over valid joints.
pub fn barycentric_transfer(
    vertex_teacher: &Array2<f64>,
    samples: &SurfaceSamples,
) -> Result<Array2<f64>> {
    let needed = samples
        .face_vertices
        .iter()
        .flatten()
        .copied()
        .max()
        .map(|m| m + 1)
        .unwrap_or(0);
    if vertex_teacher.nrows() < needed {
        return Err(Error::ShapeMismatch {
            context: format!(
                "vertex teacher has {} rows, samples reference vertex {}",
                vertex_teacher.nrows(),
                needed - 1
            ),
        });
    }
    let j = vertex_teacher.ncols();
    let mut out = Array2::<f64>::zeros((samples.len(), j));
    for i in 0..samples.len() {
        let [va, vb, vc] = samples.face_vertices[i];
        let l = samples.bary[i];
        for col in 0..j {
            out[[i, col]] = l[0] * vertex_teacher[[va, col]]
                + l[1] * vertex_teacher[[vb, col]]
                + l[2] * vertex_teacher[[vc, col]];
        }
    }
    Ok(out)
}

/// Per-row support mask: 1 on the `k_s` largest teacher entries among valid
/// joints (ties prefer the lower joint index), `gamma` on the remaining valid
/// joints, 0 on invalid joints.
pub fn build_mask(
    teacher: &Array2<f64>,
    valid: &[bool],
    k_s: usize,
    gamma: f64,
) -> Result<Array2<f64>> {
    assert!(k_s >= 1, "k_s must be at least 1");
    assert!((0.0..1.0).contains(&gamma), "gamma must be in [0, 1)");
    let j = teacher.ncols();
    assert_eq!(valid.len(), j, "valid mask length must match joint count");
    let valid_idx: Vec<usize> = (0..j).filter(|&c| valid[c]).collect();
    if valid_idx.is_empty() {
        return Err(Error::NoValidJoints);
    }
    let keep = k_s.min(valid_idx.len());

    let mut mask = Array2::<f64>::zeros((teacher.nrows(), j));
    for (i, row) in teacher.rows().into_iter().enumerate() {
        let mut ranked = valid_idx.clone();
        // stable sort keeps lower joint indices first among ties
        ranked.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap());
        for (rank, &col) in ranked.iter().enumerate() {
            mask[[i, col]] = if rank < keep { 1.0 } else { gamma };
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone)]
pub struct Renormed {
    pub matrix: Array2<f64>,
    /// Rows whose entire mass fell outside the support; they come back as
    /// all-zero rows.
    pub zero_rows: Vec<usize>,
}

/// Renormalizes non-negative rows on the masked support:
/// `R(Z; m) = (Z * [m > 0]) / (row sum over support + eps)`.
pub fn renorm(z: &Array2<f64>, mask: &Array2<f64>, epsilon: f64) -> Renormed {
    assert_eq!(z.dim(), mask.dim(), "renorm needs matching shapes");
    let mut out = Array2::<f64>::zeros(z.dim());
    let mut zero_rows = Vec::new();
    for i in 0..z.nrows() {
        let mut sum = 0.0;
        for col in 0..z.ncols() {
            if mask[[i, col]] > 0.0 {
                sum += z[[i, col]];
            }
        }
        if sum <= 0.0 {
            zero_rows.push(i);
            continue;
        }
        let denom = sum + epsilon;
        for col in 0..z.ncols() {
            if mask[[i, col]] > 0.0 {
                out[[i, col]] = z[[i, col]] / denom;
            }
        }
    }
    Renormed {
        matrix: out,
        zero_rows,
    }
}

/// Masked averaging operator: `<f, m> = sum(f * m) / (sum(m) / N)`.
/// The mask sum is normalized by the point count N, so results scale with
/// N by construction (they aggregate per-point contributions).
pub fn masked_avg(f: &Array2<f64>, mask: &Array2<f64>) -> Result<f64> {
    assert_eq!(f.dim(), mask.dim(), "masked_avg needs matching shapes");
    let mask_sum: f64 = mask.iter().sum();
    if mask_sum == 0.0 {
        return Err(Error::ZeroMask);
    }
    let num: f64 = f.iter().zip(mask.iter()).map(|(a, b)| a * b).sum();
    let n = f.nrows() as f64;
    Ok(num / (mask_sum / n))
}

/// Euclidean distance from `p` to the closed segment `a..b`
/// (point distance when `a == b`).
pub fn point_to_segment(p: Vec3, a: Vec3, b: Vec3) -> f64 {
    let ab = math::sub(b, a);
    let len_sq = math::norm_sq(ab);
    if len_sq == 0.0 {
        return math::dist(p, a);
    }
    let t = (math::dot(math::sub(p, a), ab) / len_sq).clamp(0.0, 1.0);
    math::dist(p, math::add(a, math::scale(ab, t)))
}

/// Point teacher restricted to its Top-K support, with everything the
/// skinning losses and metrics need to renormalize and mask consistently.
#[derive(Debug, Clone)]
pub struct MaskedTeacher {
    /// N x J row-stochastic teacher over valid joints.
    pub weights: Array2<f64>,
    /// N x J mask with entries in {0, gamma, 1}.
    pub mask: Array2<f64>,
    pub valid: Vec<bool>,
    pub k_s: usize,
    pub gamma: f64,
    pub epsilon: f64,
}

impl MaskedTeacher {
    /// Defaults: K_s = 4, gamma = 0, epsilon = 1e-8.
    pub fn with_defaults(weights: Array2<f64>, valid: Vec<bool>) -> Result<Self> {
        Self::new(weights, valid, 4, 0.0, 1e-8)
    }

    pub fn new(
        weights: Array2<f64>,
        valid: Vec<bool>,
        k_s: usize,
        gamma: f64,
        epsilon: f64,
    ) -> Result<Self> {
        assert!(epsilon > 0.0, "epsilon must be positive");
        for (i, row) in weights.rows().into_iter().enumerate() {
            let sum: f64 = row
                .iter()
                .enumerate()
                .filter(|(c, _)| valid[*c])
                .map(|(_, x)| *x)
                .sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::NotRowStochastic { row: i });
            }
        }
        let mask = build_mask(&weights, &valid, k_s, gamma)?;
        Ok(MaskedTeacher {
            weights,
            mask,
            valid,
            k_s,
            gamma,
            epsilon,
        })
    }

    /// Teacher renormalized on its own support.
    pub fn renormed(&self) -> Array2<f64> {
        renorm(&self.weights, &self.mask, self.epsilon).matrix
    }

    pub fn point_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn joint_count(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormTransform {
    pub center: Vec3,
    pub scale: f64,
}

impl NormTransform {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        math::scale(math::sub(p, self.center), self.scale)
    }
}

/// Normalizes a clip into the centered unit cube: the anchor's axis-aligned
/// bounding box (mesh if present, else joints) is centered and its longest
/// axis scaled to length 1, preserving aspect ratio. Every frame shares the
/// anchor's transform, which is returned rather than persisted.
pub fn normalize_clip(clip: &RigClip) -> Result<(RigClip, NormTransform)> {
    let anchor_points: Vec<Vec3> = match &clip.mesh_frames {
        Some(frames) if !frames.is_empty() => frames[0].vertices.clone(),
        _ => clip.anchor().joints.clone(),
    };
    if anchor_points.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &anchor_points {
        for c in 0..3 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    let extent = (0..3).map(|c| hi[c] - lo[c]).fold(0.0, f64::max);
    let transform = NormTransform {
        center: [
            0.5 * (lo[0] + hi[0]),
            0.5 * (lo[1] + hi[1]),
            0.5 * (lo[2] + hi[2]),
        ],
        scale: if extent > 0.0 { 1.0 / extent } else { 1.0 },
    };

    let mut out = clip.clone();
    for skel in &mut out.skeleton_frames {
        for p in &mut skel.joints {
            *p = transform.apply(*p);
        }
    }
    if let Some(frames) = &mut out.mesh_frames {
        for frame in frames {
            for v in &mut frame.vertices {
                *v = transform.apply(*v);
            }
        }
    }
    Ok((out, transform))
}

/// Debug CSV dump: face, barycentrics, then per-frame position and normal.
pub fn write_samples_csv<W: Write>(samples: &SurfaceSamples, mut w: W) -> Result<()> {
    let frames = samples.frame_count();
    let mut header = String::from("face,l1,l2,l3");
    for k in 0..frames {
        header.push_str(&format!(",x{k},y{k},z{k},nx{k},ny{k},nz{k}"));
    }
    writeln!(w, "{header}")?;
    for i in 0..samples.len() {
        let mut row = format!(
            "{},{},{},{}",
            samples.faces[i], samples.bary[i][0], samples.bary[i][1], samples.bary[i][2]
        );
        for k in 0..frames {
            let e = samples.positions[k][i];
            let n = samples.normals[k][i];
            row.push_str(&format!(
                ",{},{},{},{},{},{}",
                e[0], e[1], e[2], n[0], n[1], n[2]
            ));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Point-to-bone distances for every sample at one frame: bone j spans
/// joint j to its parent (a point at the joint for roots). Invalid joints
/// get `f64::INFINITY`.
pub fn point_bone_distances(
    points: &[Vec3],
    skeleton: &Skeleton,
    valid: &[bool],
) -> Result<Array2<f64>> {
    let j_count = skeleton.joint_count();
    assert_eq!(valid.len(), j_count);
    if !valid.iter().any(|&v| v) {
        return Err(Error::NoValidBones);
    }
    let mut out = Array2::<f64>::from_elem((points.len(), j_count), f64::INFINITY);
    for j in 0..j_count {
        if !valid[j] {
            continue;
        }
        let a = skeleton.joints[j];
        let b = skeleton
            .parent_index(j)
            .map(|p| skeleton.joints[p])
            .unwrap_or(a);
        for (i, p) in points.iter().enumerate() {
            out[[i, j]] = point_to_segment(*p, a, b);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::MeshFrame;
    use ndarray::array;

    fn mesh_clip(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> RigClip {
        let skel = Skeleton::new(vec![[0.0; 3], [0.0, 1.0, 0.0]], vec![0, 1]);
        RigClip {
            clip_id: "mesh".into(),
            skeleton_frames: vec![skel],
            faces: Some(faces),
            mesh_frames: Some(vec![MeshFrame { vertices }]),
            skin_weights: None,
            valid_mask: None,
        }
    }

    #[test]
    fn single_triangle_samples_land_inside() {
        let clip = mesh_clip(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        );
        let samples = sample_surface(&clip, 64, 7).unwrap();
        for i in 0..samples.len() {
            assert_eq!(samples.faces[i], 0);
            let p = samples.positions[0][i];
            assert!(p[0] >= -1e-12 && p[1] >= -1e-12 && p[0] + p[1] <= 1.0 + 1e-12);
            assert!(p[2].abs() < 1e-15);
            let b = samples.bary[i];
            assert!((b[0] + b[1] + b[2] - 1.0).abs() < 1e-12);
            assert!((math::norm(samples.normals[0][i]) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forced_barycentric_hits_vertex() {
        let clip = mesh_clip(
            vec![[0.3, 0.4, 0.5], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        );
        let samples = from_parts(&clip, vec![0], vec![[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(samples.positions[0][0], [0.3, 0.4, 0.5]);
    }

    #[test]
    fn area_weighting_respects_nine_to_one_ratio() {
        // face 0 has 9x the area of face 1
        let clip = mesh_clip(
            vec![
                [0.0, 0.0, 0.0],
                [3.0, 0.0, 0.0],
                [0.0, 3.0, 0.0],
                [10.0, 0.0, 0.0],
                [11.0, 0.0, 0.0],
                [10.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        );
        for seed in [1u64, 42, 1234] {
            let samples = sample_surface(&clip, 10_000, seed).unwrap();
            let frac0 =
                samples.faces.iter().filter(|&&f| f == 0).count() as f64 / samples.len() as f64;
            assert!((0.88..=0.92).contains(&frac0), "seed {seed}: {frac0}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_per_index() {
        let clip = mesh_clip(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        );
        let a = sample_surface(&clip, 32, 99).unwrap();
        let b = sample_surface(&clip, 32, 99).unwrap();
        assert_eq!(a.bary, b.bary);
        // prefixes agree: sample i depends only on (seed, i)
        let c = sample_surface(&clip, 8, 99).unwrap();
        assert_eq!(&a.bary[..8], &c.bary[..]);
    }

    #[test]
    fn missing_mesh_and_zero_area_errors() {
        let skel = Skeleton::new(vec![[0.0; 3]], vec![0]);
        let bare = RigClip {
            clip_id: "bare".into(),
            skeleton_frames: vec![skel],
            faces: None,
            mesh_frames: None,
            skin_weights: None,
            valid_mask: None,
        };
        assert!(matches!(sample_surface(&bare, 4, 0), Err(Error::NoMesh)));

        let flat = mesh_clip(vec![[0.0; 3], [0.0; 3], [0.0; 3]], vec![[0, 1, 2]]);
        assert!(matches!(
            sample_surface(&flat, 4, 0),
            Err(Error::ZeroAreaMesh)
        ));
    }

    #[test]
    fn transfer_hand_cases() {
        let clip = mesh_clip(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        );
        let teacher = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]];

        let s = from_parts(&clip, vec![0], vec![[1.0, 0.0, 0.0]]).unwrap();
        let out = barycentric_transfer(&teacher, &s).unwrap();
        assert_eq!(out.row(0).to_vec(), vec![1.0, 0.0]);

        let s = from_parts(&clip, vec![0], vec![[0.5, 0.5, 0.0]]).unwrap();
        let out = barycentric_transfer(&teacher, &s).unwrap();
        assert_eq!(out.row(0).to_vec(), vec![0.5, 0.5]);

        // identical rows stay fixed under any convex combination
        let same = array![[0.25, 0.75], [0.25, 0.75], [0.25, 0.75]];
        let third = 1.0 / 3.0;
        let s = from_parts(&clip, vec![0], vec![[third, third, third]]).unwrap();
        let out = barycentric_transfer(&same, &s).unwrap();
        assert!((out[[0, 0]] - 0.25).abs() < 1e-12);
        assert!((out[[0, 1]] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn transfer_preserves_row_stochasticity() {
        let clip = mesh_clip(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        );
        let teacher = array![[0.7, 0.3], [0.2, 0.8], [0.5, 0.5]];
        let samples = sample_surface(&clip, 200, 3).unwrap();
        let out = barycentric_transfer(&teacher, &samples).unwrap();
        for row in out.rows() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mask_ranks_and_respects_validity() {
        let teacher = array![[0.5, 0.3, 0.1, 0.1]];
        let m = build_mask(&teacher, &[true; 4], 2, 0.0).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![1.0, 1.0, 0.0, 0.0]);

        // k_s >= valid count: everything valid gets 1
        let m = build_mask(&teacher, &[true; 4], 9, 0.25).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![1.0; 4]);

        // invalid joint stays 0 regardless of weight
        let teacher = array![[0.4, 0.6]];
        let m = build_mask(&teacher, &[true, false], 2, 0.5).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![1.0, 0.0]);

        // gamma fills the remaining valid joints
        let teacher = array![[0.5, 0.3, 0.2]];
        let m = build_mask(&teacher, &[true; 3], 1, 0.25).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![1.0, 0.25, 0.25]);

        assert!(matches!(
            build_mask(&teacher, &[false; 3], 1, 0.0),
            Err(Error::NoValidJoints)
        ));
    }

    #[test]
    fn mask_tie_prefers_lower_index() {
        let teacher = array![[0.25, 0.25, 0.25, 0.25]];
        let m = build_mask(&teacher, &[true; 4], 2, 0.0).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn renorm_hand_case() {
        let z = array![[0.5, 0.3, 0.1, 0.1]];
        let m = array![[1.0, 1.0, 0.0, 0.0]];
        let out = renorm(&z, &m, 1e-8);
        assert!(out.zero_rows.is_empty());
        assert!((out.matrix[[0, 0]] - 0.625).abs() < 1e-7);
        assert!((out.matrix[[0, 1]] - 0.375).abs() < 1e-7);
        assert_eq!(out.matrix[[0, 2]], 0.0);
    }

    #[test]
    fn renorm_full_support_and_zero_support() {
        let z = array![[0.25, 0.75]];
        let m = array![[1.0, 1.0]];
        let out = renorm(&z, &m, 1e-9);
        assert!((out.matrix[[0, 0]] - 0.25).abs() < 1e-8);

        // all mass outside the support: flagged zero row
        let z = array![[0.0, 1.0]];
        let m = array![[1.0, 0.0]];
        let out = renorm(&z, &m, 1e-9);
        assert_eq!(out.zero_rows, vec![0]);
        assert_eq!(out.matrix[[0, 0]], 0.0);
        assert_eq!(out.matrix[[0, 1]], 0.0);
    }

    #[test]
    fn renorm_is_idempotent_within_epsilon() {
        let z = array![[0.4, 0.4, 0.2], [0.1, 0.8, 0.1]];
        let m = array![[1.0, 1.0, 0.0], [1.0, 1.0, 1.0]];
        let eps = 1e-8;
        let once = renorm(&z, &m, eps).matrix;
        let twice = renorm(&once, &m, eps).matrix;
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((a - b).abs() <= 2.0 * eps);
        }
    }

    #[test]
    fn masked_avg_follows_the_operator_definition() {
        // all ones: sum(f*m) = N*J, sum(m)/N = J, result N
        let n = 5;
        let j = 3;
        let f = Array2::<f64>::ones((n, j));
        let m = Array2::<f64>::ones((n, j));
        assert_eq!(masked_avg(&f, &m).unwrap(), n as f64);

        // single active entry
        let mut f = Array2::<f64>::zeros((1, 4));
        f[[0, 0]] = 2.5;
        let mut m = Array2::<f64>::zeros((1, 4));
        m[[0, 0]] = 1.0;
        assert_eq!(masked_avg(&f, &m).unwrap(), 2.5);

        // linearity in f
        let f = array![[1.0, 2.0], [3.0, 4.0]];
        let m = array![[1.0, 0.0], [1.0, 1.0]];
        let base = masked_avg(&f, &m).unwrap();
        let scaled = masked_avg(&(&f * 3.0), &m).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-12);

        assert!(matches!(
            masked_avg(&f, &Array2::zeros((2, 2))),
            Err(Error::ZeroMask)
        ));
    }

    #[test]
    fn masked_avg_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..50 {
            let n = rng.random_range(1..=8usize);
            let j = rng.random_range(1..=8usize);
            let f = Array2::from_shape_fn((n, j), |_| rng.random::<f64>() * 4.0 - 2.0);
            let m = Array2::from_shape_fn(
                (n, j),
                |_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 },
            );
            if m.iter().sum::<f64>() == 0.0 {
                continue;
            }
            // literal transcription of the averaging operator
            let mut num = 0.0;
            let mut msum = 0.0;
            for i in 0..n {
                for c in 0..j {
                    num += f[[i, c]] * m[[i, c]];
                    msum += m[[i, c]];
                }
            }
            let want = num / (msum / n as f64);
            let got = masked_avg(&f, &m).unwrap();
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn point_to_segment_analytic_cases() {
        assert_eq!(
            point_to_segment([0.0, 1.0, 0.0], [0.0; 3], [2.0, 0.0, 0.0]),
            1.0
        );
        assert_eq!(
            point_to_segment([3.0, 0.0, 0.0], [0.0; 3], [2.0, 0.0, 0.0]),
            1.0
        );
        assert_eq!(
            point_to_segment([1.0, 1.0, 2.0], [1.0, 1.0, 1.0], [1.0, 1.0, 1.0]),
            1.0
        );
    }

    #[test]
    fn point_to_segment_matches_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        for _ in 0..20 {
            let p = [rng.random(), rng.random(), rng.random()];
            let a = [rng.random(), rng.random(), rng.random()];
            let b = [rng.random(), rng.random(), rng.random()];
            let got = point_to_segment(p, a, b);
            let mut best = f64::INFINITY;
            for s in 0..=10_000 {
                let t = s as f64 / 10_000.0;
                let q = math::add(a, math::scale(math::sub(b, a), t));
                best = best.min(math::dist(p, q));
            }
            assert!((got - best).abs() < 1e-3, "{got} vs {best}");
            assert!(got <= best + 1e-12);
        }
    }

    #[test]
    fn teacher_construction_checks_rows() {
        let ok = array![[0.7, 0.3], [0.0, 1.0]];
        assert!(MaskedTeacher::with_defaults(ok, vec![true, true]).is_ok());
        let bad = array![[0.7, 0.6]];
        assert!(matches!(
            MaskedTeacher::with_defaults(bad, vec![true, true]),
            Err(Error::NotRowStochastic { .. })
        ));
    }

    #[test]
    fn normalize_clip_longest_axis_to_unit() {
        let clip = mesh_clip(
            vec![[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [0.0, 2.0, 0.0]],
            vec![[0, 1, 2]],
        );
        let (normed, t) = normalize_clip(&clip).unwrap();
        assert_eq!(t.scale, 0.25);
        let verts = &normed.mesh_frames.as_ref().unwrap()[0].vertices;
        let xs: Vec<f64> = verts.iter().map(|v| v[0]).collect();
        let span = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((span - 1.0).abs() < 1e-12);
        // aspect preserved: y span scaled by the same factor
        let ys: Vec<f64> = verts.iter().map(|v| v[1]).collect();
        let yspan = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - ys.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((yspan - 0.5).abs() < 1e-12);
    }

    #[test]
    fn samples_csv_shape() {
        let clip = mesh_clip(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        );
        let samples = sample_surface(&clip, 3, 1).unwrap();
        let mut buf = Vec::new();
        write_samples_csv(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("face,l1,l2,l3,x0"));
    }

    #[test]
    fn bone_distances_use_parent_segments() {
        // bone 1 spans joint 1 to its parent joint 0; bone 0 is a point
        let skel = Skeleton::new(vec![[0.0; 3], [2.0, 0.0, 0.0]], vec![0, 1]);
        let d = point_bone_distances(&[[1.0, 1.0, 0.0]], &skel, &[true, true]).unwrap();
        assert!((d[[0, 0]] - 2f64.sqrt()).abs() < 1e-12);
        assert!((d[[0, 1]] - 1.0).abs() < 1e-12);

        let d = point_bone_distances(&[[1.0, 1.0, 0.0]], &skel, &[false, true]).unwrap();
        assert_eq!(d[[0, 0]], f64::INFINITY);
    }
}
