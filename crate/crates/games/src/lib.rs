//! Max-min mutual-information games of collusion-resistant fingerprinting.
//!
//! The encoder picks a product-form law over time sharing and codeword
//! letters, the colluders pick a channel from a feasible class, and the
//! payoff is a conditional mutual information. [`inner`] solves the
//! colluders' convex problem, [`outer`] searches over encoder laws, [`psp`]
//! evaluates the constrained-divergence exponents and [`inequalities`]
//! checks the entropy inequalities of permutation-invariant laws.

pub mod functional;
pub mod inequalities;
pub mod inner;
pub mod outer;
pub mod polytope;
pub mod problem;
pub mod psp;

mod lbfgs;

pub use functional::{evaluate, objective_registry, GameObjective, MiFunctional, Part};
pub use inequalities::{check_fair_inequalities, symmetrize, FairReport, InequalityCheck};
pub use inner::{inner_min_channel, inner_min_from, InnerSolution};
pub use outer::{solve_capacity, solve_capacity_sequence, solve_capacity_simple, sweep_csv, SweepRow};
pub use polytope::{build_polytope, ChannelPolytope};
pub use problem::{
    ClassKind, Diagnostics, FeasibleClass, GameProblem, GameSolution, InputLaw, Objective, SolverOptions,
};
pub use psp::{memoryless_exponent_variant, pseudo_sphere_packing, psp_sweep, PspOptions, PspSolution, Target};
