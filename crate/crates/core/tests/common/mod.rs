//! Check suites shared between test targets.

#![allow(dead_code)]

pub mod buffer_suite;
pub mod wire_suite;

/// Fixed case count; regressions are reported inline rather than persisted,
/// since these runners have no source file to persist next to.
pub fn runner_config(cases: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases,
        failure_persistence: None,
        ..Default::default()
    }
}
