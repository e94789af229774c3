pub mod agent;
pub mod distill;
pub mod encoder;
pub mod episode;
pub mod eval;
pub mod exec;
mod http;
pub mod io;
pub mod memory;
pub mod retrieval;
pub mod world;
