//! HTTP plumbing: the validation endpoint over a [`Simulator`], a client for it, and a chat-completion provider.
//!
//! [`Simulator`]: rulediff_core::sim::Simulator

mod chat;
mod client;
mod server;

pub use chat::{ChatProvider, ENV_API_KEY, ENV_BASE_URL, ENV_MODEL};
pub use client::ServiceClient;
pub use server::{router, serve, EmbeddedServer, HEALTH_PATH, VALIDATION_PATH};
