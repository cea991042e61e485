//! Skeleton token codec and the token-space consistency losses.
//!
//! A skeleton becomes a stream of per-joint quadruples `(t_x, t_y, t_z, t_p)`:
//! three quantized coordinate bins over `[-0.5, 0.5]` plus the discrete parent
//! label (0 = root). The losses score externally supplied per-slot predictive
//! distributions against a target token sequence; no generative model runs
//! here.

use crate::error::{Error, Result};
use crate::rig::Skeleton;
use std::io::{Read, Write};

pub const DEFAULT_N_DISC: u32 = 256;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TokenSequence {
    /// One `(t_x, t_y, t_z, t_p)` quadruple per joint, in storage order.
    pub quads: Vec<[u32; 4]>,
    /// Coordinate bin count; coordinate tokens live in `1..=n_disc`.
    pub n_disc: u32,
}

impl TokenSequence {
    pub fn joint_count(&self) -> usize {
        self.quads.len()
    }

    /// Flattened length L = 4J.
    pub fn len(&self) -> usize {
        4 * self.quads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quads.is_empty()
    }

    /// Token at flattened position i (0-based).
    pub fn token_at(&self, i: usize) -> u32 {
        self.quads[i / 4][i % 4]
    }

    /// Vocabulary size of the slot at flattened position i:
    /// `n_disc` for coordinate slots, J+1 for the parent slot.
    pub fn vocab_at(&self, i: usize) -> usize {
        if i % 4 == 3 {
            self.joint_count() + 1
        } else {
            self.n_disc as usize
        }
    }

    /// 0-based class index of the target token at position i.
    pub fn class_at(&self, i: usize) -> usize {
        let t = self.token_at(i);
        if i % 4 == 3 {
            t as usize
        } else {
            t as usize - 1
        }
    }
}

/// Per-position predictive scores (log-domain) with a validity mask over
/// flattened positions. Positions run 0..slots.len() in token order.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotLogits {
    pub slots: Vec<Vec<f64>>,
    pub mask: Vec<bool>,
}

impl SlotLogits {
    /// All provided positions marked valid.
    pub fn dense(slots: Vec<Vec<f64>>) -> Self {
        let mask = vec![true; slots.len()];
        SlotLogits { slots, mask }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Quantizes one coordinate: bin = clamp(floor((c + 0.5) * n_disc)), token = bin + 1.
pub fn coordinate_token(c: f64, n_disc: u32) -> u32 {
    let bin = ((c + 0.5) * f64::from(n_disc)).floor();
    let bin = bin.clamp(0.0, f64::from(n_disc - 1));
    bin as u32 + 1
}

/// Decodes a coordinate token to its bin center.
pub fn coordinate_value(token: u32, n_disc: u32) -> f64 {
    (f64::from(token - 1) + 0.5) / f64::from(n_disc) - 0.5
}

pub fn tokenize(skeleton: &Skeleton, n_disc: u32) -> Result<TokenSequence> {
    assert!(n_disc >= 2, "n_disc must be at least 2");
    if !skeleton.has_finite_coords() {
        return Err(Error::NonFiniteCoordinate {
            context: "tokenize".into(),
        });
    }
    let quads = skeleton
        .joints
        .iter()
        .zip(&skeleton.parents)
        .map(|(j, &p)| {
            [
                coordinate_token(j[0], n_disc),
                coordinate_token(j[1], n_disc),
                coordinate_token(j[2], n_disc),
                p,
            ]
        })
        .collect();
    Ok(TokenSequence { quads, n_disc })
}

pub fn detokenize(tokens: &TokenSequence) -> Result<Skeleton> {
    let j_count = tokens.joint_count();
    let mut joints = Vec::with_capacity(j_count);
    let mut parents = Vec::with_capacity(j_count);
    for quad in &tokens.quads {
        let mut pos = [0.0f64; 3];
        for (axis, slot) in pos.iter_mut().zip(&quad[..3]) {
            if *slot < 1 || *slot > tokens.n_disc {
                return Err(Error::TokenOutOfRange {
                    token: *slot,
                    n_disc: tokens.n_disc,
                });
            }
            *axis = coordinate_value(*slot, tokens.n_disc);
        }
        if quad[3] as usize > j_count {
            return Err(Error::ParentIndexOutOfRange {
                token: quad[3],
                joints: j_count,
            });
        }
        joints.push(pos);
        parents.push(quad[3]);
    }
    Ok(Skeleton::new(joints, parents))
}

/// Cross entropy of one slot: -log softmax(scores)[class], max-subtracted
/// for stability and floored at zero.
fn slot_ce(scores: &[f64], class: usize) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    (lse - scores[class]).max(0.0)
}

/// Weighted token-level cross entropy over the masked positions.
///
/// The parent slot of each quadruple (position i with i mod 4 = 3) carries
/// weight `alpha`, every other slot weight 1; the result is the weighted
/// mean. Instantiates both the anchor loss and, with frame logits against
/// anchor targets, the symmetric cross-frame term.
pub fn weighted_ce(logits: &SlotLogits, targets: &TokenSequence, alpha: f64) -> Result<f64> {
    assert!(alpha >= 1.0, "alpha must be >= 1");
    assert_eq!(
        logits.slots.len(),
        logits.mask.len(),
        "logits mask length must match slot count"
    );
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, (scores, &active)) in logits.slots.iter().zip(&logits.mask).enumerate() {
        if !active {
            continue;
        }
        if i >= targets.len() {
            return Err(Error::PositionOutOfRange {
                position: i,
                len: targets.len(),
            });
        }
        let vocab = targets.vocab_at(i);
        if scores.len() != vocab {
            return Err(Error::VocabMismatch {
                position: i,
                expected: vocab,
                got: scores.len(),
            });
        }
        if !scores.iter().all(|s| s.is_finite()) {
            return Err(Error::NonFiniteCoordinate {
                context: format!("logits position {i}"),
            });
        }
        let w = if i % 4 == 3 { alpha } else { 1.0 };
        num += w * slot_ce(scores, targets.class_at(i));
        den += w;
    }
    if den == 0.0 {
        return Err(Error::EmptyPositionSet);
    }
    Ok(num / den)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenLossWeights {
    pub alpha: f64,
    pub lambda_anchor: f64,
    pub lambda_sym: f64,
}

impl Default for TokenLossWeights {
    fn default() -> Self {
        // alpha and lambda_sym are the method defaults; lambda_anchor has no
        // published value, only the ratio matters
        TokenLossWeights {
            alpha: 3.0,
            lambda_anchor: 1.0,
            lambda_sym: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenLoss {
    pub total: f64,
    pub anchor_term: f64,
    pub sym_term: f64,
}

/// Combined token-space objective: the anchor cross entropy plus the mean
/// cross-frame term, each against the same anchor target tokens.
pub fn token_loss(
    anchor_logits: &SlotLogits,
    frame_logits: &[SlotLogits],
    targets: &TokenSequence,
    weights: &TokenLossWeights,
) -> Result<TokenLoss> {
    let anchor_term = weighted_ce(anchor_logits, targets, weights.alpha)?;
    let sym_term = if frame_logits.is_empty() {
        0.0
    } else {
        let mut sum = 0.0;
        for frame in frame_logits {
            sum += weighted_ce(frame, targets, weights.alpha)?;
        }
        sum / frame_logits.len() as f64
    };
    Ok(TokenLoss {
        total: weights.lambda_anchor * anchor_term + weights.lambda_sym * sym_term,
        anchor_term,
        sym_term,
    })
}

const LOGITS_MAGIC: &[u8; 4] = b"SPRL";

/// Writes the binary logits format: magic "SPRL", u32 position count, then
/// per position a u32 vocab size and that many little-endian f32 scores,
/// positions in flattened token order.
pub fn write_logits<W: Write>(logits: &SlotLogits, mut w: W) -> Result<()> {
    w.write_all(LOGITS_MAGIC)?;
    w.write_all(&(logits.slots.len() as u32).to_le_bytes())?;
    for scores in &logits.slots {
        w.write_all(&(scores.len() as u32).to_le_bytes())?;
        for s in scores {
            w.write_all(&(*s as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_logits<R: Read>(mut r: R) -> Result<SlotLogits> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Truncated)?;
    if &magic != LOGITS_MAGIC {
        return Err(Error::BadMagic);
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4).map_err(|_| Error::Truncated)?;
    let count = u32::from_le_bytes(buf4) as usize;
    let mut slots = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut buf4).map_err(|_| Error::Truncated)?;
        let vocab = u32::from_le_bytes(buf4) as usize;
        let mut scores = Vec::with_capacity(vocab);
        for _ in 0..vocab {
            r.read_exact(&mut buf4).map_err(|_| Error::Truncated)?;
            scores.push(f64::from(f32::from_le_bytes(buf4)));
        }
        slots.push(scores);
    }
    Ok(SlotLogits::dense(slots))
}
