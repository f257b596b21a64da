//! Leader/follower pipe navigation learned from demonstrations with
//! adversarial imitation and judge-approved self-imitation.

pub mod nn;
pub mod par;
pub mod world;
pub mod algo;
pub mod demos;
pub mod eval;
pub mod replay;
