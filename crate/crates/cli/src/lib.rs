//! Problem-file ingestion and result serialization for the `sensched`
//! binary. Exposed as a library so integration tests can parse the same
//! files the CLI does.

pub mod output;
pub mod problem;
