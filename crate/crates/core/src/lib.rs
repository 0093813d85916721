//! Sparse FastTucker decomposition trained with stochastic gradient descent.
//!
//! A sparse `N`-order tensor is approximated by factor matrices `A(n)`
//! (`I_n x J_n`) and core matrices `B(n)` (`J_n x R`):
//!
//! ```text
//! x[i_1..i_N] ~ sum_r prod_n (a(n)[i_n,:] . b(n)[:,r])
//! ```
//!
//! Three training schemes are provided:
//!
//! * [`Variant::FastTucker`]: block-convex updates, one factor row per batch.
//! * [`Variant::FasterTucker`]: block-convex updates over fibers with a cached
//!   `C(n) = A(n) B(n)`.
//! * [`Variant::Plus`]: simultaneous non-convex updates of every mode from
//!   batches drawn anywhere in the tensor, computed on 16x16 tiles.
//!
//! Every batch kernel is instrumented with logical cost counters that can be
//! compared against closed-form read/multiply counts, see [`evaluation`].
//!
//! The runnable programs under `examples/` show each capability end to end.

pub mod decomposition;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod synthgen;
pub mod tensor_store;
pub mod tile;

#[doc(hidden)]
pub mod cli;

pub use decomposition::{train, EpochStats, History, TrainOptions, Variant};
pub use error::{Error, Result};
pub use evaluation::{CostCounters, Metrics};
pub use model::{Hyperparams, Model};
pub use tensor_store::{Batch, Keying, ModeIndex, SparseTensor};
