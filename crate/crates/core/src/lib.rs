pub mod expr;
pub mod matrix;
pub mod rational;
pub mod solver;
pub mod problem;
pub mod trace;
pub mod taylor;
pub mod stationary;
pub mod lagrange;
pub mod io;
pub mod report;
pub mod plot;
pub mod run;
