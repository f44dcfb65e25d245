//! Small reverse-mode differentiation core over dense f64 vectors and
//! matrices: just enough for a bidirectional LSTM with an MLP head.

mod lstm;
mod params;
mod tape;

pub use lstm::{lstm_sequence, lstm_step, LstmParams, LstmWeights};
pub use params::{Adam, Checkpoint, ParamId, ParamStore, Parameter, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use tape::{sigmoid, softmax, Mode, NodeId, Tape};
