//! Classifier backends and the evaluation protocol.

pub mod eval;
pub mod rnn;
pub mod svm;

use crate::error::{Error, Result};
use crate::preprocess::FeatureSequence;

/// Something that maps an input to a class index.
pub trait Classifier<X: ?Sized>: Send + Sync {
    fn classify(&self, x: &X) -> usize;
}

impl<X: ?Sized, C: Classifier<X> + ?Sized> Classifier<X> for Box<C> {
    fn classify(&self, x: &X) -> usize {
        (**self).classify(x)
    }
}

/// Frame-major concatenation of a fixed-length sequence.
pub fn flatten_trial(seq: &FeatureSequence, expected_frames: usize) -> Result<Vec<f64>> {
    if seq.len() != expected_frames {
        return Err(Error::Length {
            expected: expected_frames,
            got: seq.len(),
        });
    }
    Ok(seq.frames.concat())
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
