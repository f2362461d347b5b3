//! A simulated DNA test-tube database.
//!
//! Relations are encoded as multisets of symbolic strands, one block per
//! (field, bit, value). Relational operators are compiled into straight-line
//! tube programs, executed on a [`machine::Machine`] that counts every
//! instruction, and decoded back into rows. An in-memory [`oracle`] gives the
//! reference answers, and [`designer`] produces concrete 15-base sequences
//! for the blocks.

pub mod designer;
pub mod encoding;
pub mod machine;
pub mod oracle;
pub mod query;
pub mod relalg;

use thiserror::Error;

pub use encoding::{Row, Schema, SequenceLibrary};
pub use machine::{BitBlock, Counts, Machine, Opcode, Strand, Tube};
pub use oracle::Relation;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Machine(#[from] machine::MachineError),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("malformed strand: {0}")]
    Malformed(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("duplicate key at row {row}; input data are duplicated")]
    DuplicateKey { row: usize },
    #[error("no sequence for block {0}")]
    MissingSequence(BitBlock),
    #[error("generation exhausted: constraint {constraint} could not be met")]
    Exhausted { constraint: String },
    #[error(transparent)]
    Parse(#[from] query::ParseError),
    #[error("data error: {0}")]
    Data(String),
    #[error("in plan node {node}: {source}")]
    Node { node: String, source: Box<Error> },
}

impl Error {
    /// The innermost error, looking through plan-node wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Node { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
