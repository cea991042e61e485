//! Desk-scale skinning predictor and fine-tuning loop: a softmax-linear head
//! over fixed random Fourier features of the 6-D surface query, trained with
//! plain gradient descent on the full skinning objective. Small enough for
//! finite-difference checks, expressive enough to show the consistency
//! gains end to end.

use crate::error::{Error, Result};
use crate::math;
use crate::metrics::{skin_consistency, SkinConsistency};
use crate::rig::RigClip;
use crate::skinloss::{skin_loss_gradient, GradientBatch, SkinLossBreakdown, SkinLossWeights};
use crate::skinops::{MaskedTeacher, SurfaceSamples};
use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct ToyModelParams {
    /// Trainable head, J x F.
    pub head: Array2<f64>,
    /// Fixed random Fourier frequencies, F x 6.
    pub frequencies: Array2<f64>,
    /// Fixed phases, length F.
    pub phases: Vec<f64>,
    /// Valid-joint mask; invalid joints receive exactly zero weight.
    pub valid: Vec<bool>,
}

pub const DEFAULT_FEATURES: usize = 64;
/// Frequency scale for the Fourier features.
const FREQ_SIGMA: f64 = 4.0;

impl ToyModelParams {
    /// Zero head (uniform predictions) with seeded frequencies and phases.
    pub fn new(joints: usize, features: usize, valid: Vec<bool>, seed: u64) -> Self {
        assert_eq!(valid.len(), joints);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frequencies =
            Array2::from_shape_fn((features, 6), |_| FREQ_SIGMA * math::standard_normal(&mut rng));
        let phases = (0..features)
            .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
            .collect();
        ToyModelParams {
            head: Array2::zeros((joints, features)),
            frequencies,
            phases,
            valid,
        }
    }

    pub fn joint_count(&self) -> usize {
        self.head.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.head.ncols()
    }

    /// phi(u) = cos(Omega u + phase).
    pub fn features(&self, u: &[f64; 6]) -> Vec<f64> {
        (0..self.feature_count())
            .map(|f| {
                let mut acc = self.phases[f];
                for c in 0..6 {
                    acc += self.frequencies[[f, c]] * u[c];
                }
                acc.cos()
            })
            .collect()
    }

    /// Row-stochastic predictions from precomputed feature rows.
    pub fn predict_features(&self, phi: &[Vec<f64>]) -> Result<Array2<f64>> {
        let j_count = self.joint_count();
        if !self.valid.iter().any(|&v| v) {
            return Err(Error::NoValidJoints);
        }
        let mut out = Array2::<f64>::zeros((phi.len(), j_count));
        for (i, row) in phi.iter().enumerate() {
            if row.len() != self.feature_count() {
                return Err(Error::ShapeMismatch {
                    context: format!(
                        "feature row {i} has {} entries, head expects {}",
                        row.len(),
                        self.feature_count()
                    ),
                });
            }
            let logits: Vec<f64> = (0..j_count)
                .map(|j| (0..row.len()).map(|f| self.head[[j, f]] * row[f]).sum())
                .collect();
            let max = logits
                .iter()
                .zip(&self.valid)
                .filter(|(_, &v)| v)
                .map(|(z, _)| *z)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..j_count {
                if self.valid[j] {
                    let e = (logits[j] - max).exp();
                    out[[i, j]] = e;
                    sum += e;
                }
            }
            for j in 0..j_count {
                out[[i, j]] /= sum;
            }
        }
        Ok(out)
    }
}

/// Predicts per-point joint distributions for a batch of 6-D queries.
pub fn predict(model: &ToyModelParams, queries: &[[f64; 6]]) -> Result<Array2<f64>> {
    let phi: Vec<Vec<f64>> = queries.iter().map(|u| model.features(u)).collect();
    model.predict_features(&phi)
}

#[derive(Debug, Clone, Copy)]
pub struct FinetuneOptions {
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    pub feature_count: usize,
    /// Standard deviation of the seeded random head init. A nonzero init
    /// gives the untrained predictor frame-to-frame jitter, which is what
    /// the per-joint variance diagnostic measures shrinking.
    pub init_scale: f64,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        FinetuneOptions {
            lr: 0.05,
            steps: 200,
            seed: 42,
            feature_count: DEFAULT_FEATURES,
            init_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub loss: SkinLossBreakdown,
}

#[derive(Debug, Clone)]
pub struct FinetuneResult {
    /// Loss at steps 0..=steps (entry s is evaluated before update s).
    pub trace: Vec<StepRecord>,
    pub before: SkinConsistency,
    pub after: SkinConsistency,
    /// Per-joint weighted temporal variance before/after, when the clip has
    /// at least two frames.
    pub cons_before: Option<Vec<f64>>,
    pub cons_after: Option<Vec<f64>>,
    pub model: ToyModelParams,
}

/// Full-batch gradient descent on the skinning objective. One step is one
/// pass over all frames and points, so the step index doubles as the epoch
/// for the prior warmup. Deterministic given the seed.
pub fn finetune(
    clip: &RigClip,
    samples: &SurfaceSamples,
    teacher: &MaskedTeacher,
    weights: &SkinLossWeights,
    opt: &FinetuneOptions,
) -> Result<FinetuneResult> {
    if clip.mesh_frames.is_none() {
        return Err(Error::NoMesh);
    }
    let j_count = teacher.joint_count();
    if teacher.point_count() != samples.len() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "teacher has {} points, samples have {}",
                teacher.point_count(),
                samples.len()
            ),
        });
    }

    let window: Vec<usize> = match &weights.prior_window {
        Some(w) => w.clone(),
        None => (0..samples.frame_count()).collect(),
    };
    let prior = crate::skinloss::geometric_prior(
        samples,
        clip.anchor(),
        &teacher.valid,
        weights.beta,
        &window,
    )?;

    let mut model = ToyModelParams::new(
        j_count,
        opt.feature_count,
        teacher.valid.clone(),
        math::substream(opt.seed, 0x7079),
    );
    if opt.init_scale != 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(math::substream(opt.seed, 0x1217));
        model.head = Array2::from_shape_fn((j_count, opt.feature_count), |_| {
            opt.init_scale * math::standard_normal(&mut rng)
        });
    }

    let predict_all = |model: &ToyModelParams| -> Result<Vec<Array2<f64>>> {
        (0..samples.frame_count())
            .map(|k| predict(model, &samples.query_matrix(k)))
            .collect()
    };

    let preds_start = predict_all(&model)?;
    let before = skin_consistency(&preds_start, teacher)?;
    let cons_before = crate::metrics::per_joint_variance(&preds_start).ok();

    let mut trace = Vec::with_capacity(opt.steps + 1);
    for step in 0..=opt.steps {
        let batch = GradientBatch {
            samples,
            teacher,
            prior: &prior,
            weights,
            epoch: step,
        };
        let (grad, loss) = skin_loss_gradient(&model, &batch)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged { step });
        }
        trace.push(StepRecord { step, loss });
        if step < opt.steps {
            model.head = &model.head - &(opt.lr * &grad);
        }
    }

    let preds_end = predict_all(&model)?;
    let after = skin_consistency(&preds_end, teacher)?;
    let cons_after = crate::metrics::per_joint_variance(&preds_end).ok();
    Ok(FinetuneResult {
        trace,
        before,
        after,
        cons_before,
        cons_after,
        model,
    })
}
