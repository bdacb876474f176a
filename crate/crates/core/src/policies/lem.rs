//! Loop escape: detects repeated observation windows and overrides the policy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::world::NavAction;

/// Fingerprints of the observations seen while navigating, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationHistory {
    entries: Vec<u64>,
    capacity: usize,
}

impl ObservationHistory {
    /// Keeps at least `2 * window` entries.
    pub fn new(window: usize, capacity: usize) -> Self {
        ObservationHistory { entries: Vec::new(), capacity: capacity.max(2 * window).max(1) }
    }

    pub fn push(&mut self, fingerprint: u64) {
        if self.entries.len() == self.capacity {
            self.entries.remove(0);
        }
        self.entries.push(fingerprint);
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// True when the last `window` fingerprints repeat an earlier run of `window`
/// fingerprints, i.e. some shift `p >= 1` maps every entry of the latest window
/// onto an equal earlier entry.
pub fn detect_deadlock(history: &[u64], window: usize) -> bool {
    let n = history.len();
    if window == 0 || n < window + 1 {
        return false;
    }
    let start = n - window;
    (1..=start).any(|p| (start..n).all(|j| history[j] == history[j - p]))
}

/// Uniformly random navigation action.
pub fn escape_action<R: Rng>(rng: &mut R) -> NavAction {
    NavAction::ALL[rng.gen_range(0..NavAction::ALL.len())]
}
