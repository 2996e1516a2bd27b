//! Mutual-information lower bounds for frame-level representations.
//!
//! Two tractable estimators are provided:
//!
//! * a **supervised** bound on `I(Z;Y)` between representations and
//!   frame-level labels, obtained by training a prediction probe and
//!   subtracting its cross-entropy from the empirical label entropy, and
//! * an **unsupervised** bound on `I(Za;Zb)` between two views of the same
//!   data, obtained by quantizing one view with k-means so its entropy
//!   becomes estimable, then probing it from the other view.
//!
//! Both bounds are validated against synthetic datasets with closed-form
//! mutual information (see [`oracle`]). All randomness is seeded and every
//! estimate is reproducible bit-for-bit from its configuration.
//!
//! Modules follow the data path: [`datamodel`] (on-disk formats and
//! manifests), [`views`] (time-shift pairing and block masking),
//! [`cluster`] (k-means quantization), [`probe`] (logistic / MLP
//! predictors), [`mi`] (bound assembly and seed aggregation), [`oracle`]
//! (ground-truth synthesis), [`pipeline`] (manifest-driven runs) and
//! [`validation`] (the synthetic self-check suite).

pub mod cluster;
pub mod datamodel;
pub mod error;
pub mod mi;
pub mod oracle;
pub mod pipeline;
pub mod probe;
pub mod validation;
pub mod views;

pub use error::{Error, Result};
