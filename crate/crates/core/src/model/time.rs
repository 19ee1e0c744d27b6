use serde::{Deserialize, Serialize};

use super::ModelError;

/// Largest tick (exclusive) for which millisecond conversion is guaranteed.
pub const MAX_TICK: u64 = 1 << 40;
/// Largest supported scan period.
pub const MAX_MS_PER_TICK: u64 = 10_000;
/// Default global scan period.
pub const DEFAULT_MS_PER_TICK: u64 = 100;

/// Simulator step index paired with the global scan period.
///
/// One tick is one scan cycle for every PLC; two events are simultaneous iff
/// they share a tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub tick: u64,
    pub ms_per_tick: u64,
}

impl Timestamp {
    pub fn new(tick: u64, ms_per_tick: u64) -> Self {
        Self { tick, ms_per_tick }
    }

    pub fn ms(&self) -> Result<u64, ModelError> {
        timestamp_ms(*self)
    }
}

/// Converts a timestamp to milliseconds, rejecting ticks at or beyond 2^40
/// and periods above 10 s.
pub fn timestamp_ms(ts: Timestamp) -> Result<u64, ModelError> {
    if ts.tick >= MAX_TICK || ts.ms_per_tick > MAX_MS_PER_TICK {
        return Err(ModelError::TimeBounds {
            tick: ts.tick,
            ms_per_tick: ts.ms_per_tick,
        });
    }
    ts.tick
        .checked_mul(ts.ms_per_tick)
        .ok_or(ModelError::TimeBounds {
            tick: ts.tick,
            ms_per_tick: ts.ms_per_tick,
        })
}
