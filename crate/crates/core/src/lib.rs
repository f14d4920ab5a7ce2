//! Cost-sensitive pixel-wise crack segmentation.
//!
//! A small SegNet-style encoder-decoder is trained with uniform or
//! median-frequency class weights, its softmax output is labelled with a
//! MAP, prior-adjusted ML or threshold rule, and the result is scored with
//! pixel precision, recall, F1 and the area under the precision-recall
//! curve. Gaussian-process Bayesian optimization tunes the optimizer.

pub mod bayesopt;
pub mod dataset;
pub mod decision;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod priors;
pub mod training;

pub use decision::ProbMap;
pub use error::{Error, Result};
pub use grid::{Grid3, Mask};
pub use priors::{ClassWeights, PriorMap};
