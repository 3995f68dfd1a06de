//! Finite-difference solver and a-priori estimate harness for the singular
//! variable-exponent problem
//!
//! ```text
//! −div(a(x)|∇u|^{p(x)−2}∇u) + b(x)u|u|^{r(x)−1} = f/u^{γ(x)}  in Ω,   u = 0 on ∂Ω,
//! ```
//!
//! approximated by truncated sources f_n = T_n(f) and the regularized singular
//! term f_n/(u_n + 1/n)^{γ(x)}.

pub mod config;
pub mod error;
pub mod estimates;
pub mod expr;
pub mod grid;
pub mod lebesgue;
pub mod linalg;
pub mod operators;
pub mod problem;
pub mod report;
pub mod run;
pub mod scheme;
pub mod solver;

pub use error::{Error, Result};
pub use expr::{parse_field_expr, FieldExpr};
pub use grid::{Grid, ScalarField};
pub use problem::{Domain, ProblemSpec};
