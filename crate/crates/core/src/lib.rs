//! Mean exit times and exit-time distributions of diffusion processes on
//! boxes.
//!
//! A model is a drift vector `B` and diffusion matrix `A`, usually built
//! from a table of small-time transitions of a deterministic system. The
//! mean exit time solves `Lu = -1` with `u = 0` on the boundary; the
//! survival function `P[τ > t]` solves the matching parabolic problem.
//! Both are discretized with piecewise-linear finite elements and can be
//! cross-checked against an Euler-Maruyama simulator.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod exit;
pub mod expr;
pub mod fem;
pub mod linalg;
pub mod mc;
pub mod mesh;
pub mod model;

pub use exit::{mean_exit_time, survival_function, ScalarField, SurvivalCurve};
pub use expr::Expression;
pub use mesh::{BoxDomain, SimplicialMesh};
pub use model::{builtin_model, SdeModel, TransitionTable};

// The guide's chapters are compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/mean-exit-time.md")]
    mod mean_exit_time {}
    #[doc = include_str!("../../../book/src/survival.md")]
    mod survival {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
