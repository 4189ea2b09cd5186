//! Natural option-critic and option-critic agents for tabular MDPs, with an
//! exact linear-algebra oracle for the quantities they estimate.

pub mod agent;
pub mod checkpoint;
pub mod critic;
pub mod envs;
pub mod error;
pub mod experiment;
pub mod features;
pub mod mdp;
pub mod options;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mdps.md")]
    mod mdps {}
    #[doc = include_str!("../../../book/src/options.md")]
    mod options {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/fisher.md")]
    mod fisher {}
    #[doc = include_str!("../../../book/src/agents.md")]
    mod agents {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
