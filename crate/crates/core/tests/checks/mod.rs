//! Oracle and property checks shared by the core test targets and the
//! acceptance run. Each check returns a one-line detail on success.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

pub mod oracle;
pub mod property;

use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}
pub(crate) use ensure;

/// Seeded runner so that every run draws the same cases.
pub fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}
