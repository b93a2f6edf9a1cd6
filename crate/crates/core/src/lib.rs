//! Broadcast consensus protocols: exact semantics, simulation, exhaustive
//! verification, and the counter-machine compilation pipeline.

pub mod bounding;
pub mod cm;
pub mod compile;
pub mod corpus;
pub mod format;
pub mod oracle;
pub mod protocol;
pub mod semantics;
pub mod sim;
mod syntax;
pub mod transforms;
pub mod verify;

pub use protocol::{BroadcastProtocol, Configuration, InputVector, ProtocolBuilder, StateId};
pub use semantics::{Consensus, Semantics, TransitionRef};
