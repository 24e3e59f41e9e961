pub mod cli;
pub mod config;
pub mod cost;
pub mod equilibrium;
pub mod error;
pub mod game;
pub mod market;
pub mod multi;
pub mod nash;
pub mod numeric;
pub mod profit;
pub mod report;
pub mod rollover;
pub mod shared;
pub mod sim;

pub use error::{Error, Result};
