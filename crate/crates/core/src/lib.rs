//! Word-level sign recognition from holistic landmark sequences.
//!
//! The crate reads per-frame 543-point landmark streams (`LMK1` files),
//! segments them into trials from annotations, applies the preprocessing
//! chain (frame-rate correction, calibration, dominance flipping, temporal
//! normalization, z-scoring), and trains linear SVM, DTW-feature SVM and
//! attention bi-LSTM classifiers under signer-disjoint evaluation.

pub mod cli;
pub mod error;
pub mod ingest;
pub mod landmark;
pub mod lmk;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod rq;
pub mod seqdist;
pub mod synth;

pub use error::{Error, Result};
pub use landmark::{FeatureSet, LandmarkFrame, LandmarkPoint, TrialSequence, WordClass};
