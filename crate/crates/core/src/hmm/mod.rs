//! Left-to-right continuous-density HMMs with diagonal Gaussian-mixture
//! emissions.

mod decode;
mod io;
mod mixture;
mod model;
mod train;

pub use decode::{log_forward, viterbi, ViterbiPath};
pub use io::{
    load_model, model_from_str, model_to_string, save_model, MODEL_FORMAT, MODEL_VERSION,
};
pub use mixture::{Component, GaussianMixture, SUM_TOLERANCE};
pub use model::Hmm;
pub use train::{
    baum_welch, baum_welch_observed, flat_start, split_mixtures, train_model, TrainConfig,
    TrainOutcome, TrainedModel,
};
