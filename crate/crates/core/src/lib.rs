pub mod corpus;
pub mod dsp;
pub mod evaluator;
pub mod exec;
pub mod net;
pub mod segment;
pub mod trainer;
