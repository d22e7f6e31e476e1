//! Cut order planning.
//!
//! An order lists garment demands per size; a plan is a sequence of
//! sections, each laying `plies` layers of fabric and cutting `counts[s]`
//! markers of size `s` from every layer. The crate provides the exact
//! sectioning environment, greedy/random/exact baselines, and an LSTM
//! policy trained with REINFORCE plus Ornstein–Uhlenbeck, epsilon and
//! amplitude exploration.

pub mod baselines;
pub mod config;
pub mod env;
pub mod error;
pub mod explore;
pub mod io;
pub mod neuro;
pub mod plan;
pub mod train;

pub use error::{Error, Result};
pub use plan::{CutPlan, Order, Section, SizeSpec};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/orders-and-plans.md")]
    mod orders_and_plans {}
    #[doc = include_str!("../../../book/src/environment.md")]
    mod environment {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/exploration.md")]
    mod exploration {}
    #[doc = include_str!("../../../book/src/policy.md")]
    mod policy {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
