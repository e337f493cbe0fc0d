//! IO, file formats, configuration and the pipeline driver around
//! `geoparam-core`: binary tensor checkpoints ("GPCK"), dataset packs
//! ("GPDS"), PGM/CSV exports, the flat key=value pipeline configuration,
//! and the stage implementations behind the `geoparam` CLI.

pub mod config;
pub mod gpck;
pub mod gpds;
pub mod pgm;
pub mod pipeline;
