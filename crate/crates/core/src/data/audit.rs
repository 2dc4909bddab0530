//! Access audit for participants' raw data.
//!
//! Matrices loaded as a participant's private data carry an owner tag. Code
//! that must only see privatized shares (collaborator selection, sandbox
//! queries) runs inside [`deny_raw_access`]; touching an owned matrix there
//! panics. Reads outside such a scope are counted per thread so callers can
//! assert which stages touched raw data.

use std::cell::Cell;

thread_local! {
    static DENY_DEPTH: Cell<u32> = const { Cell::new(0) };
    static RAW_READS: Cell<u64> = const { Cell::new(0) };
}

struct DenyGuard;

impl Drop for DenyGuard {
    fn drop(&mut self) {
        DENY_DEPTH.with(|d| d.set(d.get() - 1));
    }
}

/// Run `f` with raw private data reads forbidden on this thread.
pub fn deny_raw_access<R>(f: impl FnOnce() -> R) -> R {
    DENY_DEPTH.with(|d| d.set(d.get() + 1));
    let _guard = DenyGuard;
    f()
}

pub fn raw_access_denied() -> bool {
    DENY_DEPTH.with(|d| d.get() > 0)
}

/// Number of raw private reads recorded on this thread.
pub fn raw_read_count() -> u64 {
    RAW_READS.with(|c| c.get())
}

pub(crate) fn record_raw_read(owner: &str) {
    if raw_access_denied() {
        panic!("raw data of participant {owner:?} accessed where only privatized shares are allowed");
    }
    RAW_READS.with(|c| c.set(c.get() + 1));
}
