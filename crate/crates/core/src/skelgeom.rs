//! Permutation-invariant geometry loss on decoded skeletons.
//!
//! After rigid alignment of each frame to the anchor, three terms compare
//! bone directions (bidirectional nearest-cosine), sorted bone-length
//! spectra, and edge endpoints (symmetric Chamfer). None of them depends on
//! joint labels, so re-parented but geometrically identical predictions
//! score the same.

use crate::align::{self, AlignMethod, RigidTransform};
use crate::error::{Error, Result};
use crate::math::{self, Vec3};
use crate::rig::Skeleton;

/// Edge-derived geometry of one skeleton frame.
#[derive(Debug, Clone)]
pub struct EdgeGeometry {
    /// `(parent, child)` index pairs.
    pub edges: Vec<(usize, usize)>,
    /// `x_child - x_parent` per edge.
    pub vectors: Vec<Vec3>,
    /// `(x_parent + x_child) / 2` per edge.
    pub midpoints: Vec<Vec3>,
    /// All edge endpoints concatenated (2 per edge, duplicates kept).
    pub endpoints: Vec<Vec3>,
}

impl EdgeGeometry {
    pub fn from_skeleton(skel: &Skeleton) -> Self {
        let edges = skel.edges();
        let vectors = edges
            .iter()
            .map(|&(p, c)| math::sub(skel.joints[c], skel.joints[p]))
            .collect();
        let midpoints = edges
            .iter()
            .map(|&(p, c)| math::scale(math::add(skel.joints[p], skel.joints[c]), 0.5))
            .collect();
        let endpoints = edges
            .iter()
            .flat_map(|&(p, c)| [skel.joints[p], skel.joints[c]])
            .collect();
        EdgeGeometry {
            edges,
            vectors,
            midpoints,
            endpoints,
        }
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.vectors.iter().map(|v| math::norm(*v)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Keeps the `ceil(rho * |E|)` longest edges (zero-length edges excluded),
/// ties broken toward the lexicographically smaller index pair, and returns
/// them with unit-normalized direction vectors.
pub fn top_rho_edges(geom: &EdgeGeometry, rho: f64) -> Result<EdgeGeometry> {
    assert!(rho > 0.0 && rho <= 1.0, "rho must be in (0, 1]");
    let mut ranked: Vec<usize> = (0..geom.edges.len())
        .filter(|&i| math::norm(geom.vectors[i]) > 0.0)
        .collect();
    if ranked.is_empty() {
        return Err(Error::NoEdges);
    }
    ranked.sort_by(|&a, &b| {
        let la = math::norm(geom.vectors[a]);
        let lb = math::norm(geom.vectors[b]);
        lb.partial_cmp(&la)
            .unwrap()
            .then_with(|| geom.edges[a].cmp(&geom.edges[b]))
    });
    let keep = ((rho * ranked.len() as f64).ceil() as usize).clamp(1, ranked.len());
    ranked.truncate(keep);

    let mut out = EdgeGeometry {
        edges: Vec::with_capacity(keep),
        vectors: Vec::with_capacity(keep),
        midpoints: Vec::with_capacity(keep),
        endpoints: Vec::with_capacity(2 * keep),
    };
    for i in ranked {
        out.edges.push(geom.edges[i]);
        out.vectors
            .push(math::normalized(geom.vectors[i], 0.0).expect("zero-length filtered"));
        out.midpoints.push(geom.midpoints[i]);
        out.endpoints.push(geom.endpoints[2 * i]);
        out.endpoints.push(geom.endpoints[2 * i + 1]);
    }
    Ok(out)
}

/// Bidirectional best-cosine penalty between unit direction sets, with the
/// anchor directions rotated by `r` first. Ranges over [0, 2].
pub fn directional_loss(anchor: &EdgeGeometry, frame: &EdgeGeometry, r: &math::Mat3) -> Result<f64> {
    if anchor.is_empty() || frame.is_empty() {
        return Err(Error::NoEdges);
    }
    let rotated: Vec<Vec3> = anchor
        .vectors
        .iter()
        .map(|v| math::mat3_vec(r, *v))
        .collect();
    let best = |from: &[Vec3], to: &[Vec3]| -> f64 {
        from.iter()
            .map(|a| {
                to.iter()
                    .map(|b| math::dot(*a, *b))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(0.5 * ((1.0 - best(&rotated, &frame.vectors)) + (1.0 - best(&frame.vectors, &rotated))))
}

/// Mean squared difference between the first `min(|E_0|, |E_k|)` entries of
/// the ascending-sorted edge-length lists. Lengths are rigid-invariant, so
/// no alignment is applied.
pub fn length_loss(anchor: &EdgeGeometry, frame: &EdgeGeometry) -> Result<f64> {
    if anchor.is_empty() || frame.is_empty() {
        return Err(Error::NoEdges);
    }
    let mut la = anchor.lengths();
    let mut lf = frame.lengths();
    la.sort_by(|a, b| a.partial_cmp(b).unwrap());
    lf.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = la.len().min(lf.len());
    Ok((0..m).map(|i| (lf[i] - la[i]).powi(2)).sum::<f64>() / m as f64)
}

/// Symmetric mean squared nearest-neighbor distance between the transformed
/// anchor endpoints and the frame endpoints.
pub fn endpoint_chamfer(anchor: &[Vec3], frame: &[Vec3], t: &RigidTransform) -> Result<f64> {
    if anchor.is_empty() || frame.is_empty() {
        return Err(Error::EmptySet);
    }
    let moved = t.apply_all(anchor);
    Ok(align::chamfer_sq(&moved, frame))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alignment {
    StructureTensor,
    /// Used when edge counts and joint counts both match; otherwise the
    /// frame silently falls back to structure tensors.
    Kabsch,
}

#[derive(Debug, Clone)]
pub struct GeomLossConfig {
    /// Fraction of longest edges entering the directional term.
    pub rho: f64,
    pub lambda_dir: f64,
    pub lambda_len: f64,
    pub lambda_ch: f64,
    pub alignment: Alignment,
}

impl Default for GeomLossConfig {
    fn default() -> Self {
        GeomLossConfig {
            rho: 1.0,
            lambda_dir: 1.0,
            lambda_len: 1.0,
            lambda_ch: 1.0,
            alignment: Alignment::StructureTensor,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FrameGeomLoss {
    pub dir: f64,
    pub len: f64,
    pub chamfer: f64,
    pub combined: f64,
    /// Frame had no usable edges; maximal penalties were substituted.
    pub degenerate: bool,
    pub alignment: AlignMethod,
}

#[derive(Debug, Clone)]
pub struct GeomLoss {
    pub total: f64,
    pub per_frame: Vec<FrameGeomLoss>,
}

/// Geometry-space loss of a clip: per non-anchor frame, align to the anchor,
/// evaluate the three terms, combine with the configured weights, then
/// average over frames.
///
/// A frame without edges cannot be aligned or compared; it contributes the
/// maximal direction penalty, the anchor's mean squared length, and the
/// anchor's endpoint spread, flagged as degenerate.
pub fn geom_loss(anchor: &Skeleton, frames: &[Skeleton], cfg: &GeomLossConfig) -> Result<GeomLoss> {
    let anchor_geom = EdgeGeometry::from_skeleton(anchor);
    if anchor_geom.is_empty() {
        return Err(Error::NoEdges);
    }
    if frames.is_empty() {
        return Err(Error::TooFewFrames { got: 0, need: 1 });
    }
    let anchor_top = top_rho_edges(&anchor_geom, cfg.rho)?;

    let mut per_frame = Vec::with_capacity(frames.len());
    for frame in frames {
        let frame_geom = EdgeGeometry::from_skeleton(frame);
        if frame_geom.is_empty() || top_rho_edges(&frame_geom, cfg.rho).is_err() {
            // degenerate prediction: finite, maximal penalties
            let lengths = anchor_geom.lengths();
            let len_pen = lengths.iter().map(|l| l * l).sum::<f64>() / lengths.len() as f64;
            let mu = math::centroid(&anchor_geom.endpoints);
            let spread = anchor_geom
                .endpoints
                .iter()
                .map(|p| math::dist_sq(*p, mu))
                .sum::<f64>()
                / anchor_geom.endpoints.len() as f64;
            let combined = cfg.lambda_dir * 2.0 + cfg.lambda_len * len_pen + cfg.lambda_ch * spread;
            per_frame.push(FrameGeomLoss {
                dir: 2.0,
                len: len_pen,
                chamfer: spread,
                combined,
                degenerate: true,
                alignment: AlignMethod::CentroidFallback,
            });
            continue;
        }
        let frame_top = top_rho_edges(&frame_geom, cfg.rho)?;

        let use_kabsch = cfg.alignment == Alignment::Kabsch
            && anchor_geom.edges.len() == frame_geom.edges.len()
            && anchor.joint_count() == frame.joint_count();
        let (transform, method) = if use_kabsch {
            (
                align::kabsch_align(&anchor.joints, &frame.joints)?,
                AlignMethod::KabschFallback,
            )
        } else {
            let out = align::structure_tensor_align(anchor, frame)?;
            (out.transform, out.method)
        };

        let dir = directional_loss(&anchor_top, &frame_top, &transform.r)?;
        let len = length_loss(&anchor_geom, &frame_geom)?;
        let chamfer = endpoint_chamfer(&anchor_geom.endpoints, &frame_geom.endpoints, &transform)?;
        let combined = cfg.lambda_dir * dir + cfg.lambda_len * len + cfg.lambda_ch * chamfer;
        per_frame.push(FrameGeomLoss {
            dir,
            len,
            chamfer,
            combined,
            degenerate: false,
            alignment: method,
        });
    }

    let total = per_frame.iter().map(|f| f.combined).sum::<f64>() / per_frame.len() as f64;
    Ok(GeomLoss { total, per_frame })
}
