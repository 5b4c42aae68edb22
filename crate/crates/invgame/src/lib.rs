//! File formats, reports and the command-line front end for `invgame-core`.

pub mod cli;
pub mod export;
pub mod report;
pub mod scenario;
pub mod verify;
