//! Model-based testing for REST services.
//!
//! Models are binary session types over OpenAPI operations: the client
//! sends requests (`!operationId(...)`) and branches on response codes
//! (`?C200(...)`). This crate parses models, binds them to an OpenAPI
//! document, runs seeded test campaigns against a live service, and
//! reports coverage, JSON Lines logs and curl reproduction scripts. A
//! bounded trace enumerator gives an independent reference semantics, and
//! a fault-injectable mock service serves as a test target.

pub mod ast;
pub mod binding;
pub mod driver;
pub mod mock;
pub mod openapi;
pub mod parser;
pub mod report;
pub mod runtime;
pub mod semantics;
