use std::collections::VecDeque;

use nalgebra::DVector;

/// One chain state together with its log-target value and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub theta: DVector<f64>,
    pub gradient: DVector<f64>,
    pub log_target: f64,
    pub iteration: usize,
}

/// The last `M` chain states, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMemory {
    capacity: usize,
    entries: VecDeque<MemoryEntry>,
}

impl GradientMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "memory capacity must be positive");
        GradientMemory { capacity, entries: VecDeque::with_capacity(capacity + 1) }
    }

    pub fn from_entries<I: IntoIterator<Item = MemoryEntry>>(capacity: usize, entries: I) -> Self {
        let mut m = GradientMemory::new(capacity);
        for e in entries {
            m.push(e);
        }
        m
    }

    /// Appends `entry`, dropping the oldest one when full.
    pub fn push(&mut self, entry: MemoryEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Oldest entry, the proposal anchor `theta_{k-M}`.
    pub fn oldest(&self) -> Option<&MemoryEntry> {
        self.entries.front()
    }

    pub fn newest(&self) -> Option<&MemoryEntry> {
        self.entries.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    /// The memory after pushing `entry` into a full buffer, without mutating `self`.
    pub fn shifted(&self, entry: MemoryEntry) -> Self {
        let mut m = self.clone();
        m.push(entry);
        m
    }
}

/// Distinct parameter points sorted by ascending log-target.
///
/// Duplicates are detected by exact equality, since rejected proposals repeat
/// chain states bit for bit; the first occurrence is kept. The sort is stable.
pub fn extract_sorted_unique(memory: &GradientMemory) -> Vec<&MemoryEntry> {
    let mut unique: Vec<&MemoryEntry> = Vec::with_capacity(memory.len());
    for e in memory.iter() {
        if !unique.iter().any(|u| u.theta == e.theta) {
            unique.push(e);
        }
    }
    unique.sort_by(|a, b| a.log_target.total_cmp(&b.log_target));
    unique
}
