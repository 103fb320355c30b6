pub mod dataio;
pub mod embednet;
pub mod error;
pub mod evalkit;
pub mod losses;
pub mod pipeline;
pub mod seed;
pub mod sgt;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/sgt.md")]
    struct Sgt;
    #[doc = include_str!("../../../book/src/losses.md")]
    struct Losses;
    #[doc = include_str!("../../../book/src/head.md")]
    struct Head;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
    #[doc = include_str!("../../../book/src/evaluation.md")]
    struct Evaluation;
    #[doc = include_str!("../../../book/src/layout.md")]
    struct Layout;
    #[doc = include_str!("../../../book/src/pipeline.md")]
    struct Pipeline;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
