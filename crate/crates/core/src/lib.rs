//! Sparse downlink precoding for multi-user massive MISO.
//!
//! The crate solves the box-constrained l1/l2-regularized least-squares
//! precoder, applies magnitude thresholding for antenna selection, and
//! predicts per-antenna power, sparsity, SINAD lower bound and BER from the
//! saddle point of a two-variable scalar max-min problem. A Monte Carlo
//! harness checks the predictions against simulated channels.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons also reject NaN

pub mod asymptotics;
pub mod cli;
pub mod error;
pub mod fixed_point;
pub mod montecarlo;
pub mod precoder;
pub mod roots;
pub mod scalar;
pub mod strategy;
pub mod tuner;

pub use error::{Error, Result};
pub use scalar::{
    expect_moreau_env, expect_prox_moment, moreau_env, phi, prox, q_func, q_inv, DomainParams,
    ProxMoment,
};
