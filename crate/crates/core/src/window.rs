//! Tiling of a trace into consecutive, non-overlapping windows of length `T`
//! and the per-window interest sets of each consumer.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::SimilarityCriterion;
use crate::trace::{AccessRecord, Granularity};

/// Half-open interval `[start, start + length)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub index: u64,
    pub start: u64,
    pub length: u64,
    /// The trace ends before this window does.
    pub partial: bool,
}

impl Window {
    pub fn end(&self) -> u64 {
        self.start + self.length
    }
}

/// Each active consumer's set of distinct objects within one window.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowProfile {
    pub window: Window,
    /// Granularity the object ids were normalized to.
    pub granularity: Granularity,
    pub accesses: BTreeMap<String, BTreeSet<String>>,
}

impl WindowProfile {
    pub fn new(window: Window, granularity: Granularity) -> Self {
        WindowProfile { window, granularity, accesses: BTreeMap::new() }
    }

    pub fn insert(&mut self, consumer: &str, object: &str) {
        match self.accesses.get_mut(consumer) {
            Some(set) => {
                if !set.contains(object) {
                    set.insert(object.to_string());
                }
            }
            None => {
                self.accesses.insert(consumer.to_string(), BTreeSet::from([object.to_string()]));
            }
        }
    }

    pub fn consumer_count(&self) -> usize {
        self.accesses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accesses.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum WindowError {
    #[error("window length must be positive, got {0}")]
    InvalidT(u64),
}

/// Buckets `records` into windows of `length` seconds anchored at the earliest
/// timestamp.
///
/// Input order does not matter. Windows are returned in index order with no
/// gaps; a window without records has an empty profile. The last window is
/// flagged partial when the trace (last timestamp + 1) ends before it does.
pub fn partition_windows<'a, I>(
    records: I,
    length: u64,
    granularity: Granularity,
) -> Result<Vec<WindowProfile>, WindowError>
where
    I: IntoIterator<Item = &'a AccessRecord>,
    I::IntoIter: Clone,
{
    if length == 0 {
        return Err(WindowError::InvalidT(length));
    }
    let records = records.into_iter();
    let Some((first, last)) = records.clone().fold(None, |acc: Option<(u64, u64)>, r| {
        Some(match acc {
            None => (r.timestamp, r.timestamp),
            Some((lo, hi)) => (lo.min(r.timestamp), hi.max(r.timestamp)),
        })
    }) else {
        return Ok(Vec::new());
    };

    let trace_end = last + 1;
    let count = (last - first) / length + 1;
    let mut profiles: Vec<WindowProfile> = (0..count)
        .map(|index| {
            let start = first + index * length;
            let window = Window { index, start, length, partial: start + length > trace_end };
            WindowProfile::new(window, granularity)
        })
        .collect();
    for r in records {
        let index = ((r.timestamp - first) / length) as usize;
        profiles[index].insert(&r.consumer, &r.object);
    }
    Ok(profiles)
}

/// One `(T, criterion)` analysis job of a parameter sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SweepJob {
    pub window_seconds: u64,
    pub criterion: SimilarityCriterion,
}

/// Cartesian product of window lengths and criteria, deduplicated and sorted
/// by window length, then criterion.
pub fn sweep_plan(window_seconds: &[u64], criteria: &[SimilarityCriterion]) -> Vec<SweepJob> {
    let jobs: BTreeSet<SweepJob> = window_seconds
        .iter()
        .flat_map(|&t| criteria.iter().map(move |&criterion| SweepJob { window_seconds: t, criterion }))
        .collect();
    jobs.into_iter().collect()
}
