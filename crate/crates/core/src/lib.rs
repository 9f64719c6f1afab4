pub mod catalog;
pub mod engine;
pub mod expr;
pub mod pdelab;
pub mod reduction;
pub mod transforms;
