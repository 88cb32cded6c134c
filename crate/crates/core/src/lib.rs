//! Verification of programs that may exit while other threads wait forever.
//!
//! A program is accepted when it has a proof of `{obs(0)} c {obs(0)}`; every
//! accepted program terminates under every fair scheduler.

pub mod assertions;
pub mod ghost;
pub mod harness;
pub mod lang;
pub mod oracle;
pub mod pog;
pub mod proofs;
pub mod schedule;
pub mod semantics;

pub use lang::{parse, Command, Continuation, ThreadPool, Tid};
pub use proofs::{verify, Verdict};
