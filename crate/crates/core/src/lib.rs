pub mod cli;
pub mod estimator;
pub mod eval;
pub mod geo;
pub mod gnss;
pub mod graph;
pub mod io;
pub mod preint;
pub mod sim;
