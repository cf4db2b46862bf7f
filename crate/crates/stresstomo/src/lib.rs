pub mod cli;
pub mod config;
pub mod exec;
pub mod io;

pub use exec::RayonExecutor;
