pub mod bbox;
pub mod cli;
pub mod clustering;
pub mod codec;
pub mod crypto;
pub mod evaluation;
pub mod features;
pub mod pipeline;
pub mod render;
pub mod synthgen;
pub mod tracking;
