//! Temporal rig-consistency toolkit.
//!
//! Implements the pieces needed to study and enforce cross-frame consistency
//! of skeletal rigs on animated mesh clips:
//!
//! - [`rig`]: clip/skeleton domain types, validation, joint-tree utilities
//! - [`rigio`]: the clip JSON interchange format
//! - [`align`]: Kabsch and structure-tensor rigid alignment
//! - [`token`]: skeleton token codec and token-space consistency losses
//! - [`skelgeom`]: permutation-invariant geometry loss on decoded skeletons
//! - [`skinops`]: surface sampling, barycentric teacher transfer, masked operators
//! - [`skinloss`]: articulation-invariant skinning objective with analytic gradients
//! - [`metrics`]: the temporal-stability and skinning-consistency evaluation protocol
//! - [`synth`]: synthetic articulated clip generator (skeleton + LBS mesh + weights)
//! - [`toy`]: a small differentiable skinning head and its fine-tuning loop
//!
//! ```
//! use temporig::{metrics, synth};
//!
//! // a 6-joint articulated clip with ground-truth skinning
//! let clip = synth::generate_clip(&synth::SynthConfig::default()).unwrap();
//!
//! // temporal drift of the skeleton frames relative to the anchor
//! let pjdd = metrics::pjdd(&clip.skeleton_frames).unwrap();
//! let blrd = metrics::blrd(&clip.skeleton_frames).unwrap();
//! assert!(pjdd > 0.0 && blrd > 0.0); // the demo clip actually articulates
//!
//! // a rigidly moved copy of the anchor scores (numerically) zero
//! let frozen = vec![clip.anchor().clone(), clip.anchor().clone()];
//! assert!(metrics::pjdd(&frozen).unwrap() < 1e-9);
//! ```

pub mod align;
pub mod error;
pub mod fmt;
pub mod math;
pub mod metrics;
pub mod rig;
pub mod rigio;
pub mod skelgeom;
pub mod skinloss;
pub mod skinops;
pub mod synth;
pub mod token;
pub mod toy;

pub use error::{Error, Result};
pub use ndarray;
