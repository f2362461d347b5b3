//! Query language: parsing, compilation to program trees, execution.

pub mod ast;
pub mod catalog;
pub mod parser;
pub mod plan;

pub use ast::{JoinRhs, Query};
pub use catalog::{Catalog, Table};
pub use parser::{parse, ParseError};
pub use plan::{compile, evaluate, run, Execution, NodeReport, Plan};
