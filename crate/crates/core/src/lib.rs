pub mod model;
pub mod vault;
pub mod identity;
pub mod analytics;
pub mod anonymize;
pub mod extract;
pub mod synthgen;
pub mod cli;
