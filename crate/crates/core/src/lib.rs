pub mod abstraction;
pub mod cli;
pub mod expr;
pub mod linalg;
pub mod reach;
pub mod sim;
pub mod synthesis;
pub mod zonotope;
