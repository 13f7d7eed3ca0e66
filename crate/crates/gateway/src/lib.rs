//! Control loop, wire protocol, network service and command line around the
//! `glovelink` core.

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod protocol;
pub mod scripts;
pub mod server;
pub mod trial;

pub use config::SessionConfig;
pub use pipeline::{simulate, Pipeline};
pub use protocol::{Message, Role};
pub use server::Server;
