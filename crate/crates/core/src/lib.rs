pub mod clearing;
pub mod cli;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod max_clearing;
pub mod min_clearing;
pub mod model;
pub mod rational;
pub mod state_space;
pub mod trade;
