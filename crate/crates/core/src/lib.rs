#![allow(clippy::should_implement_trait, clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod distributions;
pub mod error;
pub mod io;
pub mod models;
pub mod rng;
pub mod tensor;
pub mod theory;
pub mod training;
pub mod uq;

pub use error::{Error, Result};
