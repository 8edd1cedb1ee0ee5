//! Bounds on multiparameter estimation with noisy quantum channels: gauge
//! SDPs for the single-use, SQL, parallel and Markovian bounds, the RLD
//! bound, probe-incompatibility costs, optimal-probe recovery and channel
//! discrimination limits.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod discrimination;
pub mod error;
pub mod exec;
pub mod incompat;
pub mod linalg;
pub mod random;
pub mod recovery;
pub mod sdp;
pub mod state;
