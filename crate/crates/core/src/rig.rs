//! Core rig domain types: skeletons, animated clips, and the joint-tree
//! utilities shared by the losses and metrics.
//!
//! Parent convention: `parents[j] = 0` marks joint `j` as a root; a value
//! `p > 0` means the parent of joint `j` is joint `p - 1` (the stored value is
//! 1-based). Inputs that self-parent their roots are converted on load.

use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use ndarray::Array2;

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    /// J joint positions, nominally inside the centered unit cube.
    pub joints: Vec<Vec3>,
    /// J parent labels in `{0, ..., J}`; 0 = root, p>0 = joint p (1-based).
    pub parents: Vec<u32>,
}

impl Skeleton {
    pub fn new(joints: Vec<Vec3>, parents: Vec<u32>) -> Self {
        Skeleton { joints, parents }
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    /// 0-based parent index of joint `j`, or `None` for roots.
    pub fn parent_index(&self, j: usize) -> Option<usize> {
        match self.parents[j] {
            0 => None,
            p => Some(p as usize - 1),
        }
    }

    /// Directed bone edges `(parent, child)` induced by the parent vector.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.joint_count())
            .filter_map(|j| self.parent_index(j).map(|p| (p, j)))
            .filter(|(p, j)| p != j)
            .collect()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.joint_count())
            .filter(|&j| self.parents[j] == 0)
            .collect()
    }

    pub fn has_finite_coords(&self) -> bool {
        self.joints.iter().flatten().all(|c| c.is_finite())
    }

    /// Follows parent pointers from every joint; `false` if a cycle exists
    /// or a parent label points outside the joint range.
    pub fn is_acyclic(&self) -> bool {
        let j_count = self.joint_count();
        for start in 0..j_count {
            let mut cur = start;
            let mut steps = 0;
            loop {
                let p = self.parents[cur];
                if p == 0 {
                    break;
                }
                let p = p as usize - 1;
                if p >= j_count {
                    return false;
                }
                cur = p;
                steps += 1;
                if steps > j_count {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshFrame {
    pub vertices: Vec<Vec3>,
}

/// An animated rig clip. Frame 0 is the anchor used as the canonical
/// reference by every loss and metric.
#[derive(Debug, Clone)]
pub struct RigClip {
    pub clip_id: String,
    pub skeleton_frames: Vec<Skeleton>,
    /// Shared triangle list (0-based vertex indices); present iff meshes are.
    pub faces: Option<Vec<[usize; 3]>>,
    pub mesh_frames: Option<Vec<MeshFrame>>,
    /// Per-frame N_v x J row-stochastic vertex weights.
    pub skin_weights: Option<Vec<Array2<f64>>>,
    /// Valid-joint mask V over the anchor's joints.
    pub valid_mask: Option<Vec<bool>>,
}

impl RigClip {
    pub fn anchor(&self) -> &Skeleton {
        &self.skeleton_frames[0]
    }

    pub fn frame_count(&self) -> usize {
        self.skeleton_frames.len()
    }

    /// Non-anchor frame count K.
    pub fn k(&self) -> usize {
        self.frame_count().saturating_sub(1)
    }
}

/// Hop-count distances on the joint tree.
#[derive(Debug, Clone)]
pub struct JointTreeDistances {
    /// J x J symmetric hop counts; pairs in different components hold
    /// the sentinel.
    pub dist: Array2<u32>,
    /// 2*J, stored for pairs that span forest components.
    pub sentinel: u32,
    /// True when the skeleton is a multi-root forest.
    pub cross_component: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationCode {
    NoFrames,
    EmptySkeleton,
    ParentLengthMismatch,
    ParentOutOfRange,
    Cycle,
    MultiRoot,
    NonFiniteCoordinate,
    TopologyMismatch,
    FaceIndexOutOfRange,
    MeshTooSmall,
    FrameCountMismatch,
    SkinShapeMismatch,
    SkinNotRowStochastic,
    ValidMaskLength,
    NoValidJoints,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        use ViolationCode::*;
        match self {
            NoFrames => "NO_FRAMES",
            EmptySkeleton => "EMPTY_SKELETON",
            ParentLengthMismatch => "PARENT_LENGTH_MISMATCH",
            ParentOutOfRange => "PARENT_OUT_OF_RANGE",
            Cycle => "CYCLE",
            MultiRoot => "MULTI_ROOT",
            NonFiniteCoordinate => "NONFINITE_COORDINATE",
            TopologyMismatch => "TOPOLOGY_MISMATCH",
            FaceIndexOutOfRange => "FACE_INDEX_OUT_OF_RANGE",
            MeshTooSmall => "MESH_TOO_SMALL",
            FrameCountMismatch => "FRAME_COUNT_MISMATCH",
            SkinShapeMismatch => "SKIN_SHAPE_MISMATCH",
            SkinNotRowStochastic => "SKIN_NOT_ROW_STOCHASTIC",
            ValidMaskLength => "VALID_MASK_LENGTH",
            NoValidJoints => "NO_VALID_JOINTS",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub code: ViolationCode,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    /// No violations of any severity.
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    /// Warnings (e.g. multi-root) do not make a clip invalid.
    pub fn is_valid(&self) -> bool {
        self.violations
            .iter()
            .all(|v| v.severity != Severity::Error)
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn push(&mut self, code: ViolationCode, severity: Severity, message: String) {
        self.violations.push(Violation {
            code,
            severity,
            message,
        });
    }
}

/// Checks every clip invariant and reports violations as data.
pub fn validate_clip(clip: &RigClip) -> ValidationReport {
    let mut report = ValidationReport::default();
    if clip.skeleton_frames.is_empty() {
        report.push(
            ViolationCode::NoFrames,
            Severity::Error,
            "clip has no skeleton frames".into(),
        );
        return report;
    }

    for (k, skel) in clip.skeleton_frames.iter().enumerate() {
        if skel.joint_count() == 0 {
            report.push(
                ViolationCode::EmptySkeleton,
                Severity::Error,
                format!("frame {k} has zero joints"),
            );
            continue;
        }
        if skel.parents.len() != skel.joint_count() {
            report.push(
                ViolationCode::ParentLengthMismatch,
                Severity::Error,
                format!(
                    "frame {k}: {} parents for {} joints",
                    skel.parents.len(),
                    skel.joint_count()
                ),
            );
            continue;
        }
        if !skel.has_finite_coords() {
            report.push(
                ViolationCode::NonFiniteCoordinate,
                Severity::Error,
                format!("frame {k} contains non-finite joint coordinates"),
            );
        }
        let j_count = skel.joint_count() as u32;
        if skel.parents.iter().any(|&p| p > j_count) {
            report.push(
                ViolationCode::ParentOutOfRange,
                Severity::Error,
                format!("frame {k} has a parent label above J"),
            );
            continue;
        }
        if !skel.is_acyclic() {
            report.push(
                ViolationCode::Cycle,
                Severity::Error,
                format!("frame {k} parent pointers contain a cycle"),
            );
        } else if skel.roots().len() > 1 {
            report.push(
                ViolationCode::MultiRoot,
                Severity::Warning,
                format!("frame {k} has {} roots", skel.roots().len()),
            );
        } else if skel.roots().is_empty() {
            // acyclic with J >= 1 always reaches a root, so this is
            // unreachable; kept as a belt for parent labels above J.
            report.push(
                ViolationCode::Cycle,
                Severity::Error,
                format!("frame {k} has no root"),
            );
        }
    }

    match (&clip.mesh_frames, &clip.faces) {
        (Some(frames), Some(faces)) => {
            if frames.len() != clip.skeleton_frames.len() {
                report.push(
                    ViolationCode::FrameCountMismatch,
                    Severity::Error,
                    format!(
                        "{} mesh frames vs {} skeleton frames",
                        frames.len(),
                        clip.skeleton_frames.len()
                    ),
                );
            }
            let n_v = frames.first().map(|f| f.vertices.len()).unwrap_or(0);
            if n_v < 3 {
                report.push(
                    ViolationCode::MeshTooSmall,
                    Severity::Error,
                    format!("anchor mesh has {n_v} vertices"),
                );
            }
            for (k, f) in frames.iter().enumerate() {
                if f.vertices.len() != n_v {
                    report.push(
                        ViolationCode::TopologyMismatch,
                        Severity::Error,
                        format!("mesh frame {k} has {} vertices, anchor has {n_v}", f.vertices.len()),
                    );
                }
                if !f.vertices.iter().flatten().all(|c| c.is_finite()) {
                    report.push(
                        ViolationCode::NonFiniteCoordinate,
                        Severity::Error,
                        format!("mesh frame {k} contains non-finite vertices"),
                    );
                }
            }
            for (i, face) in faces.iter().enumerate() {
                if face.iter().any(|&v| v >= n_v) {
                    report.push(
                        ViolationCode::FaceIndexOutOfRange,
                        Severity::Error,
                        format!("face {i} references a vertex >= {n_v}"),
                    );
                }
            }
        }
        (Some(_), None) | (None, Some(_)) => {
            report.push(
                ViolationCode::TopologyMismatch,
                Severity::Error,
                "mesh frames and faces must be present together".into(),
            );
        }
        (None, None) => {}
    }

    if let Some(weights) = &clip.skin_weights {
        if weights.len() != clip.skeleton_frames.len() {
            report.push(
                ViolationCode::FrameCountMismatch,
                Severity::Error,
                format!(
                    "{} skin-weight frames vs {} skeleton frames",
                    weights.len(),
                    clip.skeleton_frames.len()
                ),
            );
        }
        let n_v = clip
            .mesh_frames
            .as_ref()
            .and_then(|f| f.first())
            .map(|f| f.vertices.len());
        for (k, w) in weights.iter().enumerate() {
            let j_expect = clip
                .skeleton_frames
                .get(k)
                .map(|s| s.joint_count())
                .unwrap_or(0);
            if w.ncols() != j_expect || n_v.map(|n| w.nrows() != n).unwrap_or(false) {
                report.push(
                    ViolationCode::SkinShapeMismatch,
                    Severity::Error,
                    format!("skin weights frame {k} is {}x{}", w.nrows(), w.ncols()),
                );
                continue;
            }
            let valid = clip.valid_mask.as_deref();
            for (r, row) in w.rows().into_iter().enumerate() {
                let sum: f64 = row
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| valid.map(|v| v.get(*j).copied().unwrap_or(false)).unwrap_or(true))
                    .map(|(_, x)| *x)
                    .sum();
                if (sum - 1.0).abs() > 1e-6 {
                    report.push(
                        ViolationCode::SkinNotRowStochastic,
                        Severity::Error,
                        format!("skin weights frame {k} row {r} sums to {sum}"),
                    );
                    break;
                }
            }
        }

        let anchor_j = clip.anchor().joint_count();
        match &clip.valid_mask {
            Some(mask) if mask.len() != anchor_j => {
                report.push(
                    ViolationCode::ValidMaskLength,
                    Severity::Error,
                    format!("valid mask has {} entries for {anchor_j} joints", mask.len()),
                );
            }
            Some(mask) if !mask.iter().any(|&v| v) => {
                report.push(
                    ViolationCode::NoValidJoints,
                    Severity::Error,
                    "valid mask has no true entries".into(),
                );
            }
            _ => {}
        }
    } else if let Some(mask) = &clip.valid_mask {
        if mask.len() != clip.anchor().joint_count() {
            report.push(
                ViolationCode::ValidMaskLength,
                Severity::Error,
                format!(
                    "valid mask has {} entries for {} joints",
                    mask.len(),
                    clip.anchor().joint_count()
                ),
            );
        }
    }

    report
}

/// Euclidean minimum spanning tree on the joints, via Prim's algorithm seeded
/// at joint 0. Equal-weight candidates break ties on the smaller
/// `(min_index, max_index)` pair, which pins the edge set bit-for-bit.
pub fn anchor_mst(skeleton: &Skeleton) -> Result<Vec<(usize, usize)>> {
    let n = skeleton.joint_count();
    if !skeleton.has_finite_coords() {
        return Err(Error::NonFiniteCoordinate {
            context: "anchor_mst".into(),
        });
    }
    if n <= 1 {
        return Ok(Vec::new());
    }

    let key = |i: usize, j: usize| -> (usize, usize) { (i.min(j), i.max(j)) };
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    // best connection of each out-of-tree vertex to the tree
    let mut best_dist = vec![f64::INFINITY; n];
    let mut best_from = vec![0usize; n];
    for v in 1..n {
        best_dist[v] = math::dist(skeleton.joints[0], skeleton.joints[v]);
    }

    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let better = match pick {
                None => true,
                Some(cur) => {
                    let a = (best_dist[v], key(best_from[v], v));
                    let b = (best_dist[cur], key(best_from[cur], cur));
                    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
                }
            };
            if better {
                pick = Some(v);
            }
        }
        let v = pick.expect("graph is complete, a vertex always remains");
        in_tree[v] = true;
        edges.push(key(best_from[v], v));
        for u in 0..n {
            if in_tree[u] {
                continue;
            }
            let d = math::dist(skeleton.joints[v], skeleton.joints[u]);
            let cand = (d, key(v, u));
            let cur = (best_dist[u], key(best_from[u], u));
            if cand.0 < cur.0 || (cand.0 == cur.0 && cand.1 < cur.1) {
                best_dist[u] = d;
                best_from[u] = v;
            }
        }
    }
    edges.sort();
    Ok(edges)
}

/// Unweighted shortest-path hop counts on the joint tree. Multi-root forests
/// get a `2*J` sentinel between components and are flagged.
pub fn tree_distances(skeleton: &Skeleton) -> Result<JointTreeDistances> {
    if !skeleton.is_acyclic() {
        return Err(Error::CyclicParents);
    }
    let n = skeleton.joint_count();
    let sentinel = 2 * n as u32;
    let mut adj = vec![Vec::new(); n];
    for (p, c) in skeleton.edges() {
        adj[p].push(c);
        adj[c].push(p);
    }

    let mut dist = Array2::<u32>::from_elem((n, n), sentinel);
    let mut cross = false;
    for start in 0..n {
        // BFS from every node
        let mut seen = vec![false; n];
        let mut queue = std::collections::VecDeque::new();
        seen[start] = true;
        dist[[start, start]] = 0;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    dist[[start, v]] = dist[[start, u]] + 1;
                    queue.push_back(v);
                }
            }
        }
        if seen.iter().any(|&s| !s) {
            cross = true;
        }
    }

    Ok(JointTreeDistances {
        dist,
        sentinel,
        cross_component: cross,
    })
}

/// Applies a consistent joint relabeling: `perm[new] = old`.
/// Useful for permutation-invariance checks.
pub fn permute_skeleton(skeleton: &Skeleton, perm: &[usize]) -> Skeleton {
    let n = skeleton.joint_count();
    assert_eq!(perm.len(), n);
    let mut old_to_new = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        old_to_new[old] = new;
    }
    let joints = perm.iter().map(|&old| skeleton.joints[old]).collect();
    let parents = perm
        .iter()
        .map(|&old| match skeleton.parents[old] {
            0 => 0,
            p => old_to_new[p as usize - 1] as u32 + 1,
        })
        .collect();
    Skeleton { joints, parents }
}
