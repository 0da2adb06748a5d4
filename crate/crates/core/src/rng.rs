//! Seeded random streams.
//!
//! Each consumer draws from its own ChaCha8 stream so that adding draws in one
//! stage never shifts the numbers another stage sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as TwinRng;

pub const DISTRICT: u64 = 1;
pub const SENSORS: u64 = 2;
pub const THERMAL: u64 = 3;
pub const SENSING: u64 = 4;
pub const CALIBRATION: u64 = 5;

/// Random stream `stream` of the generator family keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-item sub-stream, e.g. one per node.
pub fn substream(seed: u64, stream: u64, item: u64) -> ChaCha8Rng {
    self::stream(seed, (stream << 32) | (item & 0xffff_ffff))
}
