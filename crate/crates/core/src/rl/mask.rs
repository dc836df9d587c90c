use serde::{Deserialize, Serialize};

/// Set of available actions, one bit per action index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionMask {
    bits: u64,
    len: usize,
}

impl ActionMask {
    pub const MAX_ACTIONS: usize = 64;

    pub fn empty(len: usize) -> Self {
        assert!(len <= Self::MAX_ACTIONS, "at most {} actions", Self::MAX_ACTIONS);
        ActionMask { bits: 0, len }
    }

    pub fn all(len: usize) -> Self {
        let mut mask = Self::empty(len);
        for a in 0..len {
            mask.insert(a);
        }
        mask
    }

    pub fn from_actions(len: usize, actions: impl IntoIterator<Item = usize>) -> Self {
        let mut mask = Self::empty(len);
        for a in actions {
            mask.insert(a);
        }
        mask
    }

    pub fn insert(&mut self, action: usize) {
        assert!(action < self.len, "action {action} out of range {}", self.len);
        self.bits |= 1 << action;
    }

    pub fn contains(&self, action: usize) -> bool {
        action < self.len && self.bits & (1 << action) != 0
    }

    /// Size of the complete action space.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(move |&a| self.contains(a))
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }
}
