//! Scale race-car simulation, reinforcement-learning environment, PPO
//! trainer, drive-log parameter identification and lap evaluation.

pub mod dynamics;
pub mod evalkit;
pub mod env;
pub mod error;
pub mod kv;
pub mod scalar;
pub mod sysid;
pub mod track;
pub mod trainer;

pub use error::{Error, Result};
