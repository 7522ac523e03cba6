//! Compiles the guide chapters as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/traffic.md")]
pub mod traffic {}
#[doc = include_str!("../../../book/src/sensing.md")]
pub mod sensing {}
#[doc = include_str!("../../../book/src/beliefs.md")]
pub mod beliefs {}
#[doc = include_str!("../../../book/src/dynamic-programming.md")]
pub mod dynamic_programming {}
#[doc = include_str!("../../../book/src/adaptive-durations.md")]
pub mod adaptive_durations {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/configuration.md")]
pub mod configuration {}
