pub mod attribution;
pub mod cd;
pub mod cli;
pub mod corpus;
pub mod models;
pub mod report;
pub mod stats;
pub mod tensor;
