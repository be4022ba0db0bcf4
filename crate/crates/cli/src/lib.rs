//! The `i3` command: broker and service processes, deployment, ad hoc calls,
//! fixture seeding and No-Dues verification from the terminal.

pub mod args;
pub mod config;
pub mod exec;
mod render;
pub mod seed;

pub use args::{parse_args, parse_args_with, Command, Invocation, OutputFormat, UsageError};
pub use exec::{execute, Io, EXIT_DOMAIN, EXIT_OK, EXIT_TRANSPORT, EXIT_USAGE};
