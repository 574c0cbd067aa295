//! Interactive session service: paces the simulator against the wall clock,
//! takes handle positions from a browser over a WebSocket, and streams back
//! only what the operator is allowed to see.

pub mod http;
pub mod runtime;
pub mod session;
pub mod wire;

pub use http::{router, serve};
pub use runtime::SessionHandle;
pub use session::{FinishedTrial, Session, SessionError};
pub use wire::{ClientMessage, ServerMessage, StartTrial};
