pub mod bounds;
pub mod cli;
pub mod datamodel;
pub mod error;
pub mod mopr;
pub mod mpr;
pub mod similarity;
pub mod solver;
pub mod statclasses;
