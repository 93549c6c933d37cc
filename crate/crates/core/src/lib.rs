//! Byzantine-robust federated learning under label-distribution skew.
//!
//! The crate simulates honest workers training a shared classifier with
//! distributed heavy-ball SGD while a minority of Byzantine workers submit
//! adversarial updates. Honest workers can reweight their loss so that every
//! local gradient targets the same class mixture, which shrinks the spread
//! of honest updates that robust aggregators have to tolerate.
//!
//! Everything here is `no_std` + `alloc`; file formats and the command line
//! live in the companion `wola-sim` crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod aggregation;
pub mod attacks;
pub mod data;
mod error;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod preagg;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
