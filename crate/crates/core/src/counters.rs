//! Operation counters used as the compute proxy.
//!
//! Counters are thread-local so that concurrently running encodes (and
//! tests) never observe each other's work. They only ever increase until
//! [`reset`] is called.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

thread_local! {
    static SAD_EVALS: Cell<u64> = const { Cell::new(0) };
    static DCT_CALLS: Cell<u64> = const { Cell::new(0) };
    static QUANT_CALLS: Cell<u64> = const { Cell::new(0) };
    static MC_BLOCK_WARPS: Cell<u64> = const { Cell::new(0) };
    static CANDIDATE_WARPS: Cell<u64> = const { Cell::new(0) };
}

/// Point-in-time copy of all counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    /// Block SAD evaluations performed by motion searches.
    pub sad_evals: u64,
    /// Forward and inverse 8x8 transforms.
    pub dct_calls: u64,
    /// Quantize and dequantize calls (one per 8x8 block).
    pub quant_calls: u64,
    /// Motion-compensated block predictions built for reconstruction.
    pub mc_block_warps: u64,
    /// Block warps done only to compare B candidates during mode decision.
    pub candidate_warps: u64,
}

impl OpCounts {
    pub fn since(&self, earlier: &OpCounts) -> OpCounts {
        OpCounts {
            sad_evals: self.sad_evals - earlier.sad_evals,
            dct_calls: self.dct_calls - earlier.dct_calls,
            quant_calls: self.quant_calls - earlier.quant_calls,
            mc_block_warps: self.mc_block_warps - earlier.mc_block_warps,
            candidate_warps: self.candidate_warps - earlier.candidate_warps,
        }
    }

    /// sad + dct + quant, the figure compared between pipelines.
    pub fn compute_total(&self) -> u64 {
        self.sad_evals + self.dct_calls + self.quant_calls
    }
}

fn bump(cell: &'static std::thread::LocalKey<Cell<u64>>, n: u64) {
    cell.with(|c| c.set(c.get() + n));
}

pub(crate) fn add_sad(n: u64) {
    bump(&SAD_EVALS, n);
}

pub(crate) fn add_dct(n: u64) {
    bump(&DCT_CALLS, n);
}

pub(crate) fn add_quant(n: u64) {
    bump(&QUANT_CALLS, n);
}

pub(crate) fn add_mc_warp(n: u64) {
    bump(&MC_BLOCK_WARPS, n);
}

pub(crate) fn add_candidate_warp(n: u64) {
    bump(&CANDIDATE_WARPS, n);
}

pub fn snapshot() -> OpCounts {
    OpCounts {
        sad_evals: SAD_EVALS.with(Cell::get),
        dct_calls: DCT_CALLS.with(Cell::get),
        quant_calls: QUANT_CALLS.with(Cell::get),
        mc_block_warps: MC_BLOCK_WARPS.with(Cell::get),
        candidate_warps: CANDIDATE_WARPS.with(Cell::get),
    }
}

pub fn reset() {
    for c in [
        &SAD_EVALS,
        &DCT_CALLS,
        &QUANT_CALLS,
        &MC_BLOCK_WARPS,
        &CANDIDATE_WARPS,
    ] {
        c.with(|v| v.set(0));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_and_delta() {
        reset();
        add_sad(3);
        let a = snapshot();
        add_sad(2);
        add_dct(1);
        let d = snapshot().since(&a);
        assert_eq!(d.sad_evals, 2);
        assert_eq!(d.dct_calls, 1);
        assert_eq!(d.compute_total(), 3);
        reset();
        assert_eq!(snapshot(), OpCounts::default());
    }
}
