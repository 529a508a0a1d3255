//! HTTP transport for federated rounds.
//!
//! The server exposes three endpoints over JSON:
//!
//! | method | path      | body / reply                                             |
//! |--------|-----------|----------------------------------------------------------|
//! | GET    | `/round`  | `{"round": r}`                                           |
//! | GET    | `/weight` | `{"round": r, "weights": [...]}`                         |
//! | PUT    | `/weight` | `{"client_id", "round", "n_samples", "weights"}` → 200 `{"accepted": true}` or 409 `{"accepted": false, "reason"}` |

pub mod client;
pub mod error;
pub mod run;
pub mod server;
pub mod wire;

pub use client::{client_loop, Client, ClientOptions, ClientRoundLog, RetryPolicy};
pub use error::{Error, Result};
pub use run::{run_networked, NetworkOptions};
pub use server::{ServerHandle, ServerOptions};
