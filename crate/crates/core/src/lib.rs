//! Multi-study causal EM for partially specified structural causal models.
//!
//! Fits the exogenous parameters of a discrete causal model to several
//! observational and interventional datasets at once, checks that the studies
//! are mutually compatible, and bounds counterfactual queries over the set of
//! fitted models.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canonical;
pub mod ccomponent;
pub mod compiled;
pub mod data;
pub mod emcc;
pub mod error;
pub mod exact_sum;
pub mod factor;
pub mod inference;
pub mod io;
pub mod model;
pub mod queries;
pub mod radix;
pub mod twin;

pub use data::{Dataset, Study};
pub use error::{Error, Result};
pub use model::{Dag, ExoParams, Pscm, StructuralEquation, VarId, VarKind, Variable};
