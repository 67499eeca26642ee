//! Thread-local accounting of live matrix elements.
//!
//! Every [`Matrix`](super::Matrix) registers its element count on creation and
//! releases it on drop. A [`MemoryProbe`] snapshots the live count when it is
//! started and tracks the high-water mark above that baseline, which gives the
//! peak number of intermediate elements an operation held at once.

use std::cell::Cell;

thread_local! {
    static LIVE: Cell<i64> = const { Cell::new(0) };
    static PEAK: Cell<i64> = const { Cell::new(0) };
}

pub(crate) fn register(elements: usize) {
    LIVE.with(|live| {
        let now = live.get() + elements as i64;
        live.set(now);
        PEAK.with(|peak| {
            if now > peak.get() {
                peak.set(now);
            }
        });
    });
}

pub(crate) fn release(elements: usize) {
    LIVE.with(|live| live.set(live.get() - elements as i64));
}

/// Measures the peak number of matrix elements allocated on this thread
/// between [`MemoryProbe::start`] and [`MemoryProbe::peak_elements`].
#[derive(Debug)]
pub struct MemoryProbe {
    baseline: i64,
}

impl MemoryProbe {
    pub fn start() -> Self {
        let baseline = LIVE.with(Cell::get);
        PEAK.with(|peak| peak.set(baseline));
        Self { baseline }
    }

    /// High-water mark of live elements above the baseline. Probes do not
    /// nest; starting a new one resets the shared peak.
    pub fn peak_elements(&self) -> usize {
        let peak = PEAK.with(Cell::get);
        (peak - self.baseline).max(0) as usize
    }
}
