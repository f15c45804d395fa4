//! Generators, variable environments and assertion predicates: the values
//! side of model execution.

pub mod assertion;
pub mod env;
pub mod generate;
pub mod preamble;

pub use assertion::{eval_assertion, eval_named, values_equal, AssertionError, AssertionSpec, Expr, Operand};
pub use env::{Env, EnvError};
pub use generate::{seeded_rng, GenerateError, Generator};
pub use preamble::{
    AliasTarget, AuthConfig, AuthLocation, FileStrategy, GeneratorDef, GeneratorSpec, InputDomain, OracleConfig,
    Preamble, PreambleError,
};
