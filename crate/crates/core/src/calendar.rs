//! Calendar queue for the saturated fast path.

const NONE: u32 = u32::MAX;

/// Stations bucketed by the absolute slot of their next attempt. Every
/// stored slot must lie within `horizon` slots of the current one, so a
/// ring of `horizon` buckets plus an occupancy bitmap is enough.
#[derive(Debug, Clone)]
pub(crate) struct Calendar {
    mask: u64,
    occupied: Vec<u64>,
    head: Vec<u32>,
    next: Vec<u32>,
}

impl Calendar {
    /// `horizon` must be a power of two.
    pub(crate) fn new(horizon: u64, stations: usize) -> Self {
        debug_assert!(horizon.is_power_of_two());
        Self {
            mask: horizon - 1,
            occupied: vec![0; (horizon as usize).div_ceil(64)],
            head: vec![NONE; horizon as usize],
            next: vec![NONE; stations],
        }
    }

    #[inline]
    pub(crate) fn insert(&mut self, slot: u64, station: usize) {
        let bucket = (slot & self.mask) as usize;
        self.next[station] = self.head[bucket];
        self.head[bucket] = station as u32;
        self.occupied[bucket / 64] |= 1 << (bucket % 64);
    }

    /// Earliest occupied slot at or after `now`.
    #[inline]
    pub(crate) fn next_slot(&self, now: u64) -> Option<u64> {
        let pos = (now & self.mask) as usize;
        let (w0, b0) = (pos / 64, pos % 64);
        let words = self.occupied.len();
        let mut found = None;
        let first = self.occupied[w0] & (!0u64 << b0);
        if first != 0 {
            found = Some(w0 * 64 + first.trailing_zeros() as usize);
        } else {
            for k in 1..=words {
                let w = (w0 + k) % words;
                let word = if k == words {
                    self.occupied[w0] & ((1u64 << b0) - 1)
                } else {
                    self.occupied[w]
                };
                if word != 0 {
                    found = Some(w * 64 + word.trailing_zeros() as usize);
                    break;
                }
            }
        }
        found.map(|bucket| now + ((bucket as u64).wrapping_sub(pos as u64) & self.mask))
    }

    /// Move every station waiting on `slot` into `out`, in ascending order.
    #[inline]
    pub(crate) fn drain(&mut self, slot: u64, out: &mut Vec<usize>) {
        let bucket = (slot & self.mask) as usize;
        let mut cursor = std::mem::replace(&mut self.head[bucket], NONE);
        self.occupied[bucket / 64] &= !(1 << (bucket % 64));
        let start = out.len();
        while cursor != NONE {
            out.push(cursor as usize);
            cursor = self.next[cursor as usize];
        }
        out[start..].sort_unstable();
    }
}
