//! Minimal dense-array numeric core: arrays, the reverse-mode tape, LSTM cell
//! primitives, AdaGrad with clipping, and gradient checking.

pub mod array;
pub mod gradcheck;
pub mod lstm;
pub mod optim;
pub mod tape;

pub use array::{Array, ParamSet};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use lstm::{lstm_init, lstm_step, LstmWeights};
pub use optim::{adagrad_update, clip_global_norm, NamedGrads, OptimState};
pub use tape::{Tape, Var};
