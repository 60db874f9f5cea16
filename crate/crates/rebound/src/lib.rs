//! Learning a contact model under expectation constraints, then steering
//! through it.
//!
//! A ball bounces on a controllable paddle. The library trains a small
//! network to predict post-contact velocity from pre-contact state and
//! paddle action, with a twist: ordinary least-squares-style training is
//! free to dump its error budget on slow rebounds, and a controller
//! planning through such a model then mishandles exactly the states where
//! recovery is hardest. Training here is a primal-dual loop that keeps the
//! mean error on the slow-rebound region under an explicit bound while
//! minimizing normalized error elsewhere.
//!
//! The crates's pieces, bottom up:
//!
//! - [`vec3`], [`rng`]: small support types (3-vectors, named
//!   deterministic RNG streams).
//! - [`nn`]: a dense network with per-channel PReLU activations and
//!   reverse-mode gradients for both parameters and inputs, plus Adam.
//! - [`learn`]: the constrained training loop: region-indicator losses,
//!   batch Lagrangian with gradients, dual ascent, validation splits.
//! - [`sim`]: the ball-paddle world: ballistic flight, contact detection,
//!   the reflection contact map, and an episode driver.
//! - [`control`]: gradient-based action selection through any model that
//!   implements [`control::Dynamics`], including multi-step rollouts.
//! - [`experiment`]: dataset collection, the model-training arms,
//!   paired-episode evaluation, and the model-error sweep.
//! - [`io`], [`config`], [`cli`]: file formats, run configuration, and the
//!   `rebound` binary's subcommands.

pub mod cli;
pub mod config;
pub mod control;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod io;
pub mod learn;
pub mod nn;
pub mod rng;
pub mod sim;
pub mod vec3;

pub use error::{Error, Result};

/// Keeps the book's code samples compiling: every chapter is also a doc
/// test.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(networks, "../../../book/src/networks.md");
    chapter!(constrained_learning, "../../../book/src/constrained-learning.md");
    chapter!(simulator, "../../../book/src/simulator.md");
    chapter!(controller, "../../../book/src/controller.md");
    chapter!(experiments, "../../../book/src/experiments.md");
    chapter!(formats, "../../../book/src/formats.md");
}
