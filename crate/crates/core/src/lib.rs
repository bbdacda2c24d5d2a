pub mod embed;
pub mod neural;
pub mod numeral;
pub mod probe;
pub mod runner;
pub mod seed;
pub mod taskgen;
