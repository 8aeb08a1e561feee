//! Stochastic dual dynamic programming with inexactly solved subproblems.
//!
//! The building blocks, bottom up:
//!
//! - [`lp`]: a dense revised simplex whose primal and dual variants can stop
//!   after a pivot budget or once a target objective is reached.
//! - [`model`]: multistage models with stagewise-independent fans, the
//!   extensive form used as a reference, and a JSON file format.
//! - [`cuts`]: cuts built from stage duals, cut pools and the epigraph rows
//!   they add to a stage LP.
//! - [`sddp`]: forward and backward passes, accuracy schedules, bounds and the
//!   driver loop.
//! - [`convex`]: inexact cuts and dual-norm bounds for small convex programs,
//!   with grid references and documented fixtures.
//! - [`portfolio`]: generated rebalancing instances and a paired comparison
//!   of two schedules.
//! - [`cli`]: the `isddp` command.
//!
//! ```
//! use isddp::model::inventory_instance;
//! use isddp::sddp::{self, ErrorSchedule, RunOptions, StoppingRule, UpperBoundMode};
//!
//! let model = inventory_instance(3, 2, 5);
//! let options = RunOptions {
//!     stopping: StoppingRule { gap_tol: 1e-9, max_iters: 20, ub_every: 1 },
//!     upper_bound: UpperBoundMode::Enumerate,
//!     ..RunOptions::default()
//! };
//! let report = sddp::run(&model, &ErrorSchedule::VanishingAbsolute { c: 1.0, exponent: 1.0 }, &options, 0).unwrap();
//! assert!(report.final_lower_bound().unwrap() <= report.records.last().unwrap().ub_mean.unwrap() + 1e-9);
//! ```

pub mod lp;
pub mod model;
pub mod cuts;
pub mod sddp;
pub mod convex;
pub mod portfolio;
pub mod cli;
