//! Procedural articulated clips with ground truth: a rest skeleton, per-frame
//! sinusoidal joint swings driven through forward kinematics, a capsule-tube
//! mesh deformed by linear blend skinning, and the pose-invariant weights the
//! deformation used. Everything a test or demo needs to know the right
//! answer in advance.

use crate::error::{Error, Result};
use crate::math::{self, Mat3, Vec3};
use crate::rig::{MeshFrame, RigClip, Skeleton};
use crate::skinops;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    /// Single chain from the root, zigzagged slightly off axis.
    Chain,
    /// A trunk chain that splits into two branches at its last joint.
    TwoBranch { trunk: usize },
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub clip_id: String,
    pub joints: usize,
    pub topology: Topology,
    /// Swing amplitude in radians per joint; a single entry is broadcast.
    pub amplitudes: Vec<f64>,
    /// Frame count K+1 (anchor included).
    pub frames: usize,
    pub bone_length: f64,
    pub tube_radius: f64,
    /// Cross-section vertices per ring.
    pub tube_segments: usize,
    /// Rings along each bone.
    pub tube_rings: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        // two-branch six-joint rig, three frames, ~1k vertices
        SynthConfig {
            clip_id: "demo".into(),
            joints: 6,
            topology: Topology::TwoBranch { trunk: 2 },
            amplitudes: vec![0.0, 0.35, 0.35, 0.35, 0.35, 0.35],
            frames: 3,
            bone_length: 0.3,
            tube_radius: 0.05,
            tube_segments: 8,
            tube_rings: 24,
            seed: 42,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.joints < 2 {
            return Err(Error::InvalidConfig("need at least 2 joints".into()));
        }
        if self.frames < 1 {
            return Err(Error::InvalidConfig("need at least the anchor frame".into()));
        }
        let amps = self.resolved_amplitudes()?;
        if amps.iter().any(|&a| !(0.0..std::f64::consts::PI).contains(&a)) {
            return Err(Error::InvalidConfig(
                "amplitudes must lie in [0, pi)".into(),
            ));
        }
        if self.bone_length <= 0.0 || self.tube_radius <= 0.0 {
            return Err(Error::InvalidConfig("bone and radius must be positive".into()));
        }
        if self.tube_segments < 3 || self.tube_rings < 2 {
            return Err(Error::InvalidConfig(
                "tube needs >= 3 segments and >= 2 rings".into(),
            ));
        }
        if let Topology::TwoBranch { trunk } = self.topology {
            if trunk < 1 || trunk + 2 > self.joints {
                return Err(Error::InvalidConfig(
                    "two-branch trunk must leave room for both branches".into(),
                ));
            }
        }
        Ok(())
    }

    fn resolved_amplitudes(&self) -> Result<Vec<f64>> {
        match self.amplitudes.len() {
            1 => Ok(vec![self.amplitudes[0]; self.joints]),
            n if n == self.joints => Ok(self.amplitudes.clone()),
            n => Err(Error::InvalidConfig(format!(
                "{n} amplitudes for {} joints",
                self.joints
            ))),
        }
    }

    fn parents(&self) -> Vec<u32> {
        match self.topology {
            Topology::Chain => (0..self.joints)
                .map(|j| if j == 0 { 0 } else { j as u32 })
                .collect(),
            Topology::TwoBranch { trunk } => {
                let mut parents = Vec::with_capacity(self.joints);
                let rest = self.joints - trunk;
                let first_branch = rest / 2 + rest % 2;
                for j in 0..self.joints {
                    let p = if j == 0 {
                        0
                    } else if j < trunk {
                        j as u32 // previous trunk joint, 1-based
                    } else if j == trunk || j == trunk + first_branch {
                        trunk as u32 // both branches hang off the trunk end
                    } else {
                        j as u32
                    };
                    parents.push(p);
                }
                parents
            }
        }
    }
}

/// Rest pose: trunk grows along +y with a slight alternating zigzag so the
/// layout is never exactly collinear; branches lean left/right.
fn rest_offsets(cfg: &SynthConfig, parents: &[u32]) -> Vec<Vec3> {
    let l = cfg.bone_length;
    let lean: f64 = 0.25; // radians off the trunk direction
    let mut offsets = vec![[0.0, 0.0, 0.0]; cfg.joints];
    let (first_branch_start, second_branch_start) = match cfg.topology {
        Topology::TwoBranch { trunk } => {
            let rest = cfg.joints - trunk;
            (trunk, trunk + rest / 2 + rest % 2)
        }
        Topology::Chain => (usize::MAX, usize::MAX),
    };
    for j in 1..cfg.joints {
        let dir = if j >= second_branch_start {
            [-lean.sin(), lean.cos(), 0.02]
        } else if j >= first_branch_start {
            [lean.sin(), lean.cos(), -0.02]
        } else {
            // zigzag: alternate a small x tilt
            let tilt = if j % 2 == 0 { 0.12 } else { -0.12 };
            [tilt, 1.0, 0.03 * j as f64]
        };
        let dir = math::normalized(dir, 1e-12).expect("nonzero direction");
        offsets[j] = math::scale(dir, l);
        let _ = parents;
    }
    offsets
}

struct FkPose {
    positions: Vec<Vec3>,
    rotations: Vec<Mat3>,
}

fn forward_kinematics(
    rest: &[Vec3],
    offsets: &[Vec3],
    parents: &[u32],
    angles: &[f64],
    axes: &[Vec3],
) -> FkPose {
    let n = rest.len();
    let mut positions = vec![[0.0; 3]; n];
    let mut rotations = vec![math::mat3_identity(); n];
    for j in 0..n {
        let local = math::axis_angle(axes[j], angles[j]);
        match parents[j] {
            0 => {
                positions[j] = rest[j];
                rotations[j] = local;
            }
            p => {
                let p = p as usize - 1;
                positions[j] = math::add(positions[p], math::mat3_vec(&rotations[p], offsets[j]));
                rotations[j] = math::mat3_mul(&rotations[p], &local);
            }
        }
    }
    FkPose {
        positions,
        rotations,
    }
}

/// Smooth pose-invariant ground-truth weights: inverse squared distance to
/// the two nearest bones in the rest pose, renormalized.
fn ground_truth_weights(rest: &Skeleton, vertices: &[Vec3]) -> Array2<f64> {
    let j_count = rest.joint_count();
    let valid = vec![true; j_count];
    let dists = skinops::point_bone_distances(vertices, rest, &valid).expect("all joints valid");
    let mut weights = Array2::<f64>::zeros((vertices.len(), j_count));
    for i in 0..vertices.len() {
        let mut ranked: Vec<usize> = (0..j_count).collect();
        ranked.sort_by(|&a, &b| dists[[i, a]].partial_cmp(&dists[[i, b]]).unwrap());
        let (a, b) = (ranked[0], ranked[1]);
        let wa = 1.0 / (dists[[i, a]].powi(2) + 1e-8);
        let wb = 1.0 / (dists[[i, b]].powi(2) + 1e-8);
        weights[[i, a]] = wa / (wa + wb);
        weights[[i, b]] = wb / (wa + wb);
    }
    weights
}

/// Open tube around each bone in the rest pose: `tube_rings` rings of
/// `tube_segments` vertices each, quads split into triangles.
fn build_tube_mesh(cfg: &SynthConfig, rest: &Skeleton) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (p, c) in rest.edges() {
        let a = rest.joints[p];
        let b = rest.joints[c];
        let axis = math::normalized(math::sub(b, a), 1e-12).expect("positive bone length");
        // orthonormal frame around the bone axis
        let pick = if axis[0].abs() < 0.9 {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let u = math::normalized(math::cross(axis, pick), 1e-12).expect("frame");
        let v = math::cross(axis, u);
        let base = vertices.len();
        for ring in 0..cfg.tube_rings {
            let t = ring as f64 / (cfg.tube_rings - 1) as f64;
            let center = math::add(a, math::scale(math::sub(b, a), t));
            for s in 0..cfg.tube_segments {
                let phi = std::f64::consts::TAU * s as f64 / cfg.tube_segments as f64;
                let radial = math::add(
                    math::scale(u, phi.cos() * cfg.tube_radius),
                    math::scale(v, phi.sin() * cfg.tube_radius),
                );
                vertices.push(math::add(center, radial));
            }
        }
        for ring in 0..cfg.tube_rings - 1 {
            for s in 0..cfg.tube_segments {
                let s_next = (s + 1) % cfg.tube_segments;
                let i00 = base + ring * cfg.tube_segments + s;
                let i01 = base + ring * cfg.tube_segments + s_next;
                let i10 = base + (ring + 1) * cfg.tube_segments + s;
                let i11 = base + (ring + 1) * cfg.tube_segments + s_next;
                faces.push([i00, i10, i01]);
                faces.push([i01, i10, i11]);
            }
        }
    }
    (vertices, faces)
}

/// Generates a full clip: FK skeleton frames, LBS-deformed mesh frames with
/// shared topology, the ground-truth weights, and an all-valid joint mask,
/// bounding-box normalized on the anchor. Deterministic given the config.
pub fn generate_clip(cfg: &SynthConfig) -> Result<RigClip> {
    cfg.validate()?;
    let parents = cfg.parents();
    let amplitudes = cfg.resolved_amplitudes()?;
    let offsets = rest_offsets(cfg, &parents);

    // rest positions by accumulating offsets
    let mut rest_pos = vec![[0.0; 3]; cfg.joints];
    for j in 1..cfg.joints {
        let p = parents[j] as usize - 1;
        rest_pos[j] = math::add(rest_pos[p], offsets[j]);
    }
    let rest = Skeleton::new(rest_pos.clone(), parents.clone());

    // per-joint swing axes drawn once from the seed
    let mut rng = ChaCha8Rng::seed_from_u64(math::substream(cfg.seed, 0x0AE5));
    let axes: Vec<Vec3> = (0..cfg.joints)
        .map(|_| {
            let v = [
                math::standard_normal(&mut rng),
                math::standard_normal(&mut rng),
                math::standard_normal(&mut rng),
            ];
            math::normalized(v, 1e-9).unwrap_or([0.0, 0.0, 1.0])
        })
        .collect();

    let (rest_vertices, faces) = build_tube_mesh(cfg, &rest);
    let weights = ground_truth_weights(&rest, &rest_vertices);

    let mut skeleton_frames = Vec::with_capacity(cfg.frames);
    let mut mesh_frames = Vec::with_capacity(cfg.frames);
    for k in 0..cfg.frames {
        let phase = std::f64::consts::TAU * k as f64 / cfg.frames as f64;
        let angles: Vec<f64> = amplitudes.iter().map(|a| a * phase.sin()).collect();
        let pose = forward_kinematics(&rest_pos, &offsets, &parents, &angles, &axes);
        skeleton_frames.push(Skeleton::new(pose.positions.clone(), parents.clone()));

        // LBS: every frame (anchor included) goes through the same path so
        // zero-amplitude clips are bitwise static
        let mut verts = Vec::with_capacity(rest_vertices.len());
        for (vi, v) in rest_vertices.iter().enumerate() {
            let mut out = [0.0; 3];
            for j in 0..cfg.joints {
                let w = weights[[vi, j]];
                if w == 0.0 {
                    continue;
                }
                let local = math::sub(*v, rest_pos[j]);
                let moved = math::add(pose.positions[j], math::mat3_vec(&pose.rotations[j], local));
                out = math::add(out, math::scale(moved, w));
            }
            verts.push(out);
        }
        mesh_frames.push(MeshFrame { vertices: verts });
    }

    let skin_weights = vec![weights; cfg.frames];
    let clip = RigClip {
        clip_id: cfg.clip_id.clone(),
        skeleton_frames,
        faces: Some(faces),
        mesh_frames: Some(mesh_frames),
        skin_weights: Some(skin_weights),
        valid_mask: Some(vec![true; cfg.joints]),
    };
    let (normalized, _) = skinops::normalize_clip(&clip)?;
    Ok(normalized)
}

/// Adds iid Gaussian noise (sigma) to the joints and vertices of every
/// non-anchor frame; the anchor and the weights stay untouched.
pub fn perturb_clip(clip: &RigClip, sigma: f64, seed: u64) -> RigClip {
    if sigma == 0.0 {
        return clip.clone();
    }
    let mut out = clip.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(math::substream(seed, math::fnv1a64(&clip.clip_id)));
    for skel in out.skeleton_frames.iter_mut().skip(1) {
        for p in skel.joints.iter_mut() {
            for c in p.iter_mut() {
                *c += sigma * math::standard_normal(&mut rng);
            }
        }
    }
    if let Some(frames) = &mut out.mesh_frames {
        for frame in frames.iter_mut().skip(1) {
            for v in frame.vertices.iter_mut() {
                for c in v.iter_mut() {
                    *c += sigma * math::standard_normal(&mut rng);
                }
            }
        }
    }
    out
}

/// Minimal OBJ reader: `v x y z` and `f a b c ...` lines only (1-based
/// indices, slash attributes ignored, polygons fan-triangulated).
pub fn read_obj(path: &Path) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let text = std::fs::read_to_string(path)?;
    parse_obj(&text)
}

pub fn parse_obj(text: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut v = [0.0; 3];
                for c in v.iter_mut() {
                    *c = parts
                        .next()
                        .and_then(|t| t.parse::<f64>().ok())
                        .ok_or_else(|| {
                            Error::ClipFormat(format!("obj line {}: bad vertex", ln + 1))
                        })?;
                }
                vertices.push(v);
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or(t);
                        first
                            .parse::<usize>()
                            .ok()
                            .and_then(|i| i.checked_sub(1))
                            .ok_or_else(|| {
                                Error::ClipFormat(format!("obj line {}: bad face index", ln + 1))
                            })
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::ClipFormat(format!(
                        "obj line {}: face needs 3+ vertices",
                        ln + 1
                    )));
                }
                for t in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[t], idx[t + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}
