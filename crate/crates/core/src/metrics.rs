//! Temporal-stability evaluation protocol for rigs: skeleton drift metrics
//! against the anchor frame (pairwise distances, bone lengths, Laplacian
//! spectra, bone angles), static accuracy metrics against ground truth, and
//! the teacher-based skinning consistency metrics.
//!
//! Per-clip values aggregate to dataset means; clips that violate a metric's
//! preconditions are skipped with a recorded reason, never silently padded.

use crate::align::kabsch_align;
use crate::error::{Error, Result};
use crate::fmt::fmt12;
use crate::math::{self, Vec3};
use crate::rig::{anchor_mst, RigClip, Skeleton};
use crate::skinops::{self, MaskedTeacher};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Denominator floor shared by every metric.
pub const METRIC_EPS: f64 = 1e-9;
/// Eigenvalues compared by the spectral metric.
pub const DEFAULT_N_EIGS: usize = 8;
/// Points per bone for the bone-sampled Chamfer variants.
pub const DEFAULT_SAMPLES_PER_BONE: usize = 16;

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Frames aligned onto the anchor with rigid Kabsch (no scale); the anchor
/// itself is returned untouched.
fn aligned_frames(frames: &[Skeleton]) -> Result<Vec<Vec<Vec3>>> {
    let anchor = &frames[0];
    let j = anchor.joint_count();
    if j < 2 {
        return Err(Error::SingleJoint);
    }
    let mut out = Vec::with_capacity(frames.len());
    out.push(anchor.joints.clone());
    for frame in &frames[1..] {
        if frame.joint_count() != j {
            return Err(Error::CountMismatch {
                left: j,
                right: frame.joint_count(),
            });
        }
        let t = kabsch_align(&frame.joints, &anchor.joints)?;
        out.push(t.apply_all(&frame.joints));
    }
    Ok(out)
}

fn sorted_pairwise(points: &[Vec3]) -> Vec<f64> {
    let n = points.len();
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(math::dist(points[i], points[j]));
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d
}

/// Pairwise joint distance deviation: after alignment, the sorted pairwise
/// distance list of each non-anchor frame is compared to the anchor's,
/// normalized by the anchor's median pairwise distance.
pub fn pjdd(frames: &[Skeleton]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            got: frames.len(),
            need: 2,
        });
    }
    let aligned = aligned_frames(frames)?;
    let d0 = sorted_pairwise(&aligned[0]);
    let denom = median(&d0).max(METRIC_EPS);
    let mut total = 0.0;
    for frame in &aligned[1..] {
        let dk = sorted_pairwise(frame);
        let sum: f64 = dk.iter().zip(&d0).map(|(a, b)| (a - b).abs()).sum();
        total += sum / (d0.len() as f64 * denom);
    }
    Ok(total / (aligned.len() - 1) as f64)
}

fn mst_lengths(points: &[Vec3], edges: &[(usize, usize)]) -> Vec<f64> {
    let mut l: Vec<f64> = edges
        .iter()
        .map(|&(u, v)| math::dist(points[u], points[v]))
        .collect();
    l.sort_by(|a, b| a.partial_cmp(b).unwrap());
    l
}

/// Bone length relative deviation over the anchor's Euclidean MST edges,
/// sorted lengths compared frame-to-anchor and normalized by the median
/// anchor MST length.
pub fn blrd(frames: &[Skeleton]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            got: frames.len(),
            need: 2,
        });
    }
    let aligned = aligned_frames(frames)?;
    let edges = anchor_mst(&frames[0])?;
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    let l0 = mst_lengths(&aligned[0], &edges);
    let denom = median(&l0).max(METRIC_EPS);
    let mut total = 0.0;
    for frame in &aligned[1..] {
        let lk = mst_lengths(frame, &edges);
        let sum: f64 = lk.iter().zip(&l0).map(|(a, b)| (a - b).abs()).sum();
        total += sum / (edges.len() as f64 * denom);
    }
    Ok(total / (aligned.len() - 1) as f64)
}

/// Ascending eigenvalues of the normalized Laplacian of the MST-weighted
/// graph at one frame. Degrees are floored at the metric epsilon so
/// coincident joints cannot divide by zero.
fn laplacian_spectrum(points: &[Vec3], edges: &[(usize, usize)], denom: f64) -> Vec<f64> {
    let j = points.len();
    let mut weights = Array2::<f64>::zeros((j, j));
    for &(u, v) in edges {
        let w = math::dist(points[u], points[v]) / denom;
        weights[[u, v]] = w;
        weights[[v, u]] = w;
    }
    let degrees: Vec<f64> = (0..j)
        .map(|u| (0..j).map(|v| weights[[u, v]]).sum::<f64>().max(METRIC_EPS))
        .collect();
    let mut lap = Array2::<f64>::eye(j);
    for &(u, v) in edges {
        // sqrt(w/du)*sqrt(w/dv) equals w/sqrt(du*dv) and keeps the
        // single-edge case exactly at +-1
        let a = (weights[[u, v]] / degrees[u]).sqrt() * (weights[[u, v]] / degrees[v]).sqrt();
        lap[[u, v]] = -a;
        lap[[v, u]] = -a;
    }
    let (eigs, _) = math::sym_eigen(&lap, 1e-10);
    eigs
}

/// Normalized-Laplacian spectrum of one skeleton on its own MST topology,
/// median-length normalized. Diagnostic surface for the spectral metric.
pub fn mst_laplacian_spectrum(skel: &Skeleton) -> Result<Vec<f64>> {
    let edges = anchor_mst(skel)?;
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    let lengths = mst_lengths(&skel.joints, &edges);
    let denom = median(&lengths).max(METRIC_EPS);
    Ok(laplacian_spectrum(&skel.joints, &edges, denom))
}

/// Graph spectral discrepancy: mean absolute difference of the first
/// `n_eigs` (capped at J) normalized-Laplacian eigenvalues between each
/// aligned frame and the anchor, on the anchor MST topology.
pub fn gsd(frames: &[Skeleton], n_eigs: usize) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            got: frames.len(),
            need: 2,
        });
    }
    let aligned = aligned_frames(frames)?;
    let edges = anchor_mst(&frames[0])?;
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    let l0 = mst_lengths(&aligned[0], &edges);
    let denom = median(&l0).max(METRIC_EPS);
    let take = n_eigs.min(frames[0].joint_count());

    let spec0 = laplacian_spectrum(&aligned[0], &edges, denom);
    let mut total = 0.0;
    for frame in &aligned[1..] {
        let spec_k = laplacian_spectrum(frame, &edges, denom);
        let sum: f64 = (0..take).map(|r| (spec_k[r] - spec0[r]).abs()).sum();
        total += sum / take as f64;
    }
    Ok(total / (aligned.len() - 1) as f64)
}

/// Angle between unit vectors, in [0, pi]. The atan2 form agrees with
/// arccos of the dot product but stays accurate near 0 and pi, where
/// arccos would turn 1e-16 coordinate noise into 1e-8 angles.
fn angle_between(a: Vec3, b: Vec3) -> f64 {
    math::norm(math::cross(a, b)).atan2(math::dot(a, b))
}

/// Joint angle discrepancy: per anchor-MST edge, the angle between the raw
/// anchor direction and the aligned frame direction, normalized to [0, 1].
/// Zero-length edges are skipped.
pub fn jad(frames: &[Skeleton]) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::TooFewFrames {
            got: frames.len(),
            need: 2,
        });
    }
    let aligned = aligned_frames(frames)?;
    let edges = anchor_mst(&frames[0])?;
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    let anchor = &frames[0].joints;
    let mut total = 0.0;
    for frame in &aligned[1..] {
        let mut sum = 0.0;
        let mut counted = 0usize;
        for &(u, v) in &edges {
            let a = math::normalized(math::sub(anchor[v], anchor[u]), 0.0);
            let b = math::normalized(math::sub(frame[v], frame[u]), 0.0);
            if let (Some(a), Some(b)) = (a, b) {
                sum += angle_between(a, b) / std::f64::consts::PI;
                counted += 1;
            }
        }
        if counted == 0 {
            return Err(Error::NoEdges);
        }
        total += sum / counted as f64;
    }
    Ok(total / (aligned.len() - 1) as f64)
}

/// Mean per-joint Euclidean error against ground truth, no alignment
/// (both live in the same canonical coordinates).
pub fn mpjpe_anchor(pred: &Skeleton, gt: &Skeleton) -> Result<f64> {
    if pred.joint_count() != gt.joint_count() {
        return Err(Error::CountMismatch {
            left: pred.joint_count(),
            right: gt.joint_count(),
        });
    }
    let sum: f64 = pred
        .joints
        .iter()
        .zip(&gt.joints)
        .map(|(a, b)| math::dist(*a, *b))
        .sum();
    Ok(sum / pred.joint_count() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChamferMode {
    /// Joints vs joints.
    J2J,
    /// Predicted joints vs points sampled along ground-truth bones.
    J2B,
    /// Sampled predicted bones vs sampled ground-truth bones.
    B2B,
}

fn bone_points(skel: &Skeleton, samples_per_bone: usize) -> Result<Vec<Vec3>> {
    let edges = skel.edges();
    if edges.is_empty() {
        return Err(Error::NoEdges);
    }
    assert!(samples_per_bone >= 2, "need both bone endpoints");
    let mut out = Vec::with_capacity(edges.len() * samples_per_bone);
    for (p, c) in edges {
        let (a, b) = (skel.joints[p], skel.joints[c]);
        for s in 0..samples_per_bone {
            let t = s as f64 / (samples_per_bone - 1) as f64;
            out.push(math::add(a, math::scale(math::sub(b, a), t)));
        }
    }
    Ok(out)
}

/// Symmetric mean Euclidean (not squared) nearest-neighbor distance between
/// the two rigs' point sets, with bones discretized by uniform sampling.
pub fn chamfer_static(
    pred: &Skeleton,
    gt: &Skeleton,
    mode: ChamferMode,
    samples_per_bone: usize,
) -> Result<f64> {
    let (a, b) = match mode {
        ChamferMode::J2J => (pred.joints.clone(), gt.joints.clone()),
        ChamferMode::J2B => (pred.joints.clone(), bone_points(gt, samples_per_bone)?),
        ChamferMode::B2B => (
            bone_points(pred, samples_per_bone)?,
            bone_points(gt, samples_per_bone)?,
        ),
    };
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let one_way = |from: &[Vec3], to: &[Vec3]| -> f64 {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| math::dist(*p, *q))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(0.5 * (one_way(&a, &b) + one_way(&b, &a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkinConsistency {
    /// Masked L1 of non-anchor predictions vs the anchor teacher.
    pub l1_bca: f64,
    /// Masked symmetric KL of non-anchor predictions vs the teacher.
    pub symkl_bca: f64,
    /// Masked entropy averaged over all frames.
    pub entropy: f64,
}

/// Teacher-based skinning consistency over frames 0..K (frame 0 = anchor).
/// With no non-anchor frames the teacher-relative terms are zero.
pub fn skin_consistency(preds: &[Array2<f64>], teacher: &MaskedTeacher) -> Result<SkinConsistency> {
    if preds.is_empty() {
        return Err(Error::TooFewFrames { got: 0, need: 1 });
    }
    let mask = &teacher.mask;
    let y = teacher.renormed();
    let renormed: Vec<Array2<f64>> = preds
        .iter()
        .map(|p| skinops::renorm(p, mask, teacher.epsilon).matrix)
        .collect();

    let k = preds.len() - 1;
    let (mut l1, mut symkl) = (0.0, 0.0);
    for w_k in renormed.iter().skip(1) {
        l1 += crate::skinloss::masked_l1(w_k, &y, mask)?;
        symkl += crate::skinloss::sym_kl(&y, w_k, mask)?;
    }
    if k > 0 {
        l1 /= k as f64;
        symkl /= k as f64;
    }
    let mut entropy = 0.0;
    for w_k in &renormed {
        entropy += crate::skinloss::masked_entropy(w_k, mask)?;
    }
    entropy /= preds.len() as f64;
    Ok(SkinConsistency {
        l1_bca: l1,
        symkl_bca: symkl,
        entropy,
    })
}

/// Joint-level weighted temporal variance: per joint, the per-point
/// population variance over frames weighted by the mean influence.
pub fn per_joint_variance(preds: &[Array2<f64>]) -> Result<Vec<f64>> {
    if preds.len() < 2 {
        return Err(Error::TooFewFrames {
            got: preds.len(),
            need: 2,
        });
    }
    let (n, j) = preds[0].dim();
    for p in preds {
        if p.dim() != (n, j) {
            return Err(Error::ShapeMismatch {
                context: "per_joint_variance frames".into(),
            });
        }
    }
    let frames = preds.len() as f64;
    let mut cons = vec![0.0; j];
    for joint in 0..j {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let mean: f64 = preds.iter().map(|p| p[[i, joint]]).sum::<f64>() / frames;
            let var: f64 = preds
                .iter()
                .map(|p| (p[[i, joint]] - mean).powi(2))
                .sum::<f64>()
                / frames;
            num += var * mean;
            den += mean;
        }
        cons[joint] = num / (den + METRIC_EPS);
    }
    Ok(cons)
}

/// Per-joint improvement from an original to a fine-tuned model.
pub fn delta_cons(orig: &[f64], ft: &[f64]) -> Vec<f64> {
    orig.iter().zip(ft).map(|(a, b)| a - b).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipRecord {
    pub metric: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct ClipMetrics {
    pub clip_id: String,
    pub frames: usize,
    pub joints: usize,
    pub pjdd: Option<f64>,
    pub blrd: Option<f64>,
    pub gsd: Option<f64>,
    pub jad: Option<f64>,
    pub mpjpe_anchor: Option<f64>,
    pub cd_j2j: Option<f64>,
    pub cd_j2b: Option<f64>,
    pub cd_b2b: Option<f64>,
    pub skin_l1: Option<f64>,
    pub skin_symkl: Option<f64>,
    pub skin_entropy: Option<f64>,
    pub cons_j: Option<Vec<f64>>,
    pub delta_j: Option<Vec<f64>>,
    pub skipped: Vec<SkipRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct SkelMetricOptions {
    pub n_eigs: usize,
    pub samples_per_bone: usize,
}

impl Default for SkelMetricOptions {
    fn default() -> Self {
        SkelMetricOptions {
            n_eigs: DEFAULT_N_EIGS,
            samples_per_bone: DEFAULT_SAMPLES_PER_BONE,
        }
    }
}

/// Computes every applicable skeleton metric for one clip, recording
/// skipped metrics with their reason codes instead of failing the clip.
pub fn skeleton_clip_metrics(
    clip: &RigClip,
    gt_anchor: Option<&Skeleton>,
    opts: &SkelMetricOptions,
) -> ClipMetrics {
    let mut out = ClipMetrics {
        clip_id: clip.clip_id.clone(),
        frames: clip.frame_count(),
        joints: clip.anchor().joint_count(),
        ..ClipMetrics::default()
    };
    let frames = &clip.skeleton_frames;
    let record = |metric: &str, result: Result<f64>, slot: &mut Option<f64>,
                      skipped: &mut Vec<SkipRecord>| {
        match result {
            Ok(v) => *slot = Some(v),
            Err(e) => skipped.push(SkipRecord {
                metric: metric.into(),
                reason: e.code().into(),
            }),
        }
    };

    let mut skipped = Vec::new();
    let (mut v_pjdd, mut v_blrd, mut v_gsd, mut v_jad) = (None, None, None, None);
    record("pjdd", pjdd(frames), &mut v_pjdd, &mut skipped);
    record("blrd", blrd(frames), &mut v_blrd, &mut skipped);
    record("gsd", gsd(frames, opts.n_eigs), &mut v_gsd, &mut skipped);
    record("jad", jad(frames), &mut v_jad, &mut skipped);
    out.pjdd = v_pjdd;
    out.blrd = v_blrd;
    out.gsd = v_gsd;
    out.jad = v_jad;

    if let Some(gt) = gt_anchor {
        let mut slot = None;
        record(
            "mpjpe_anchor",
            mpjpe_anchor(clip.anchor(), gt),
            &mut slot,
            &mut skipped,
        );
        out.mpjpe_anchor = slot;
        let mut slot = None;
        record(
            "cd_j2j",
            chamfer_static(clip.anchor(), gt, ChamferMode::J2J, opts.samples_per_bone),
            &mut slot,
            &mut skipped,
        );
        out.cd_j2j = slot;
        let mut slot = None;
        record(
            "cd_j2b",
            chamfer_static(clip.anchor(), gt, ChamferMode::J2B, opts.samples_per_bone),
            &mut slot,
            &mut skipped,
        );
        out.cd_j2b = slot;
        let mut slot = None;
        record(
            "cd_b2b",
            chamfer_static(clip.anchor(), gt, ChamferMode::B2B, opts.samples_per_bone),
            &mut slot,
            &mut skipped,
        );
        out.cd_b2b = slot;
    }
    out.skipped = skipped;
    out
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct Aggregate {
    pub clip_count: usize,
    pub pjdd_mean: Option<f64>,
    pub pjdd_count: usize,
    pub blrd_mean: Option<f64>,
    pub blrd_count: usize,
    pub gsd_mean: Option<f64>,
    pub gsd_count: usize,
    pub jad_mean: Option<f64>,
    pub jad_count: usize,
    pub mpjpe_anchor_mean: Option<f64>,
    pub mpjpe_anchor_count: usize,
    pub cd_j2j_mean: Option<f64>,
    pub cd_j2j_count: usize,
    pub cd_j2b_mean: Option<f64>,
    pub cd_j2b_count: usize,
    pub cd_b2b_mean: Option<f64>,
    pub cd_b2b_count: usize,
    pub skin_l1_mean: Option<f64>,
    pub skin_l1_count: usize,
    pub skin_symkl_mean: Option<f64>,
    pub skin_symkl_count: usize,
    pub skin_entropy_mean: Option<f64>,
    pub skin_entropy_count: usize,
    pub skipped_total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub clips: Vec<ClipMetrics>,
    pub aggregate: Aggregate,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let present: Vec<f64> = values.flatten().collect();
    if present.is_empty() {
        (None, 0)
    } else {
        (
            Some(present.iter().sum::<f64>() / present.len() as f64),
            present.len(),
        )
    }
}

/// Assembles per-clip records (kept in input order) into a report whose
/// aggregate is the arithmetic mean of the present per-clip values.
pub fn assemble_report(clips: Vec<ClipMetrics>) -> MetricReport {
    let mut agg = Aggregate {
        clip_count: clips.len(),
        skipped_total: clips.iter().map(|c| c.skipped.len()).sum(),
        ..Aggregate::default()
    };
    macro_rules! fill {
        ($field:ident, $mean:ident, $count:ident) => {
            let (m, c) = mean_of(clips.iter().map(|c| c.$field));
            agg.$mean = m;
            agg.$count = c;
        };
    }
    fill!(pjdd, pjdd_mean, pjdd_count);
    fill!(blrd, blrd_mean, blrd_count);
    fill!(gsd, gsd_mean, gsd_count);
    fill!(jad, jad_mean, jad_count);
    fill!(mpjpe_anchor, mpjpe_anchor_mean, mpjpe_anchor_count);
    fill!(cd_j2j, cd_j2j_mean, cd_j2j_count);
    fill!(cd_j2b, cd_j2b_mean, cd_j2b_count);
    fill!(cd_b2b, cd_b2b_mean, cd_b2b_count);
    fill!(skin_l1, skin_l1_mean, skin_l1_count);
    fill!(skin_symkl, skin_symkl_mean, skin_symkl_count);
    fill!(skin_entropy, skin_entropy_mean, skin_entropy_count);
    MetricReport {
        clips,
        aggregate: agg,
    }
}

/// Report JSON with canonical key order and 12-significant-digit floats;
/// byte-stable across runs and thread counts.
pub fn report_to_json(report: &MetricReport) -> String {
    crate::fmt::to_json_12(report)
}

pub const CSV_COLUMNS: &str = "clip_id,frames,joints,pjdd,blrd,gsd,jad,mpjpe_anchor,cd_j2j,cd_j2b,cd_b2b,skin_l1,skin_symkl,skin_entropy";

fn csv_cell(v: Option<f64>) -> String {
    v.map(fmt12).unwrap_or_default()
}

/// One row per clip plus a final aggregate row; empty cells for skipped
/// metrics. Vector-valued diagnostics stay in the JSON report.
pub fn report_to_csv(report: &MetricReport) -> String {
    let mut s = String::from(CSV_COLUMNS);
    s.push('\n');
    for c in &report.clips {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.clip_id,
            c.frames,
            c.joints,
            csv_cell(c.pjdd),
            csv_cell(c.blrd),
            csv_cell(c.gsd),
            csv_cell(c.jad),
            csv_cell(c.mpjpe_anchor),
            csv_cell(c.cd_j2j),
            csv_cell(c.cd_j2b),
            csv_cell(c.cd_b2b),
            csv_cell(c.skin_l1),
            csv_cell(c.skin_symkl),
            csv_cell(c.skin_entropy),
        ));
    }
    let a = &report.aggregate;
    s.push_str(&format!(
        "AGGREGATE_MEAN,{},,{},{},{},{},{},{},{},{},{},{},{}\n",
        a.clip_count,
        csv_cell(a.pjdd_mean),
        csv_cell(a.blrd_mean),
        csv_cell(a.gsd_mean),
        csv_cell(a.jad_mean),
        csv_cell(a.mpjpe_anchor_mean),
        csv_cell(a.cd_j2j_mean),
        csv_cell(a.cd_j2b_mean),
        csv_cell(a.cd_b2b_mean),
        csv_cell(a.skin_l1_mean),
        csv_cell(a.skin_symkl_mean),
        csv_cell(a.skin_entropy_mean),
    ));
    s
}

fn md_cell(v: Option<f64>) -> String {
    v.map(fmt_short).unwrap_or_else(|| "-".into())
}

fn fmt_short(x: f64) -> String {
    crate::fmt::fmt_sig(x, 6)
}

/// Markdown tables: temporal stability first, then static/skinning metrics
/// when any clip carries them.
pub fn report_to_markdown(report: &MetricReport) -> String {
    let mut s = String::new();
    s.push_str("| clip | PJDD | BLRD | GSD | JAD | MPJPE@Anchor |\n");
    s.push_str("|---|---|---|---|---|---|\n");
    for c in &report.clips {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            c.clip_id,
            md_cell(c.pjdd),
            md_cell(c.blrd),
            md_cell(c.gsd),
            md_cell(c.jad),
            md_cell(c.mpjpe_anchor),
        ));
    }
    let a = &report.aggregate;
    s.push_str(&format!(
        "| **mean** | {} | {} | {} | {} | {} |\n",
        md_cell(a.pjdd_mean),
        md_cell(a.blrd_mean),
        md_cell(a.gsd_mean),
        md_cell(a.jad_mean),
        md_cell(a.mpjpe_anchor_mean),
    ));

    let any_static = report
        .clips
        .iter()
        .any(|c| c.cd_j2j.is_some() || c.skin_l1.is_some());
    if any_static {
        s.push('\n');
        s.push_str("| clip | CD-J2J | CD-J2B | CD-B2B | L1 | SymKL | Entropy |\n");
        s.push_str("|---|---|---|---|---|---|---|\n");
        for c in &report.clips {
            s.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} | {} |\n",
                c.clip_id,
                md_cell(c.cd_j2j),
                md_cell(c.cd_j2b),
                md_cell(c.cd_b2b),
                md_cell(c.skin_l1),
                md_cell(c.skin_symkl),
                md_cell(c.skin_entropy),
            ));
        }
        s.push_str(&format!(
            "| **mean** | {} | {} | {} | {} | {} | {} |\n",
            md_cell(a.cd_j2j_mean),
            md_cell(a.cd_j2b_mean),
            md_cell(a.cd_b2b_mean),
            md_cell(a.skin_l1_mean),
            md_cell(a.skin_symkl_mean),
            md_cell(a.skin_entropy_mean),
        ));
    }
    s
}
