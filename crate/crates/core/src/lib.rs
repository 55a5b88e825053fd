//! Transfer-entropy regularized policy synthesis for labeled MDPs with
//! co-safe LTL missions.

pub mod error;
pub mod io;
pub mod ltl;
pub mod mdp;
pub mod product;
pub mod scenarios;
pub mod solver;

pub use error::Error;
