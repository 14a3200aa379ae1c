//! Dense `f64` tensors, a define-by-run reverse-mode tape, Adam, and the
//! `PAEW` checkpoint format.
//!
//! ```
//! use graphpae_tensor::{ParamStore, Tape, Tensor};
//!
//! let mut store = ParamStore::new();
//! let w = store.insert("w", Tensor::row_vector(vec![1.0, -2.0])).unwrap();
//! let mut tape = Tape::new();
//! let wv = tape.param(&store, w);
//! let sq = tape.square(wv);
//! let loss = tape.sum(sq);
//! let grads = tape.gradients(loss, &store).unwrap();
//! assert_eq!(grads.get(w).data(), &[2.0, -4.0]);
//! ```

mod adam;
mod checkpoint;
mod error;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use error::{Result, TensorError};
pub use gradcheck::{finite_diff_check, finite_diff_check_with_floor, GradCheckReport, DEFAULT_FLOOR};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{Adjoints, Tape, Var};
pub use tensor::Tensor;

/// LeakyReLU negative slope used throughout the encoder.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;
