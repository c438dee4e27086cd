//! Minimal deterministic neural substrate: a 2-d tensor type, a reverse-mode
//! tape, dense/LSTM layers, Adam, and a binary checkpoint format. Everything
//! is f64 and single-threaded so that gradient checks are tight and repeated
//! runs are bit-identical.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::{dense_forward, lstm_forward, Dense, Lstm};
pub use optim::{AdamConfig, ParamStore};
pub use tape::{softmax_slice, Act, NodeId, Tape};
pub use tensor::Tensor2;
