//! Synthetic access traces with planted interest groups.
//!
//! Consumers are dealt round-robin into `groups`. Each group owns a private
//! pool of objects and all consumers share one global pool. An access goes to
//! the consumer's group pool with probability `in_group_affinity`, otherwise
//! to the global pool; within a pool the object is drawn by Zipf rank.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trace::{write_canonical, AccessRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub consumers: usize,
    pub groups: usize,
    pub objects_per_group: usize,
    pub global_objects: usize,
    pub zipf_exponent: f64,
    pub in_group_affinity: f64,
    pub accesses_per_consumer: usize,
    /// Timestamps are uniform over `[0, duration)`.
    pub duration: u64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            consumers: 200,
            groups: 10,
            objects_per_group: 1000,
            global_objects: 1000,
            zipf_exponent: 0.8,
            in_group_affinity: 0.9,
            accesses_per_consumer: 50,
            duration: 10_800,
            seed: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic trace config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |msg: &str| Err(SynthError::InvalidConfig(msg.to_string()));
        if self.consumers == 0 {
            return fail("consumers must be at least 1");
        }
        if self.groups == 0 || self.groups > self.consumers {
            return fail("groups must be between 1 and consumers");
        }
        if !(0.0..=1.0).contains(&self.in_group_affinity) {
            return fail("in_group_affinity must lie in [0, 1]");
        }
        if !self.zipf_exponent.is_finite() || self.zipf_exponent < 0.0 {
            return fail("zipf_exponent must be finite and >= 0");
        }
        if self.duration == 0 {
            return fail("duration must be positive");
        }
        if self.in_group_affinity > 0.0 && self.objects_per_group == 0 {
            return fail("objects_per_group must be positive when in_group_affinity > 0");
        }
        if self.in_group_affinity < 1.0 && self.global_objects == 0 {
            return fail("global_objects must be positive when in_group_affinity < 1");
        }
        Ok(())
    }

    pub fn group_of(&self, consumer: usize) -> usize {
        consumer % self.groups
    }
}

/// Consumer id for index `i`, shaped like a private IPv4 address.
pub fn consumer_id(i: usize) -> String {
    format!("10.{}.{}.{}", (i >> 16) & 0xff, (i >> 8) & 0xff, i & 0xff)
}

fn group_server(g: usize) -> String {
    format!("g{g:03}.example")
}

const GLOBAL_SERVER: &str = "shared.example";

fn zipf(n: usize, s: f64) -> Option<Zipf<f64>> {
    (n > 0).then(|| Zipf::new(n as f64, s).expect("validated Zipf parameters"))
}

/// Generates the trace records, sorted by timestamp, then consumer, then object.
pub fn generate_records(config: &SynthConfig) -> Result<Vec<AccessRecord>, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let group_pool = zipf(config.objects_per_group, config.zipf_exponent);
    let global_pool = zipf(config.global_objects, config.zipf_exponent);
    let group_servers: Vec<String> = (0..config.groups).map(group_server).collect();

    let mut records = Vec::with_capacity(config.consumers * config.accesses_per_consumer);
    for c in 0..config.consumers {
        let consumer = consumer_id(c);
        let server = &group_servers[config.group_of(c)];
        for _ in 0..config.accesses_per_consumer {
            let in_group = rng.random_bool(config.in_group_affinity);
            let (pool, host) = if in_group { (&group_pool, server.as_str()) } else { (&global_pool, GLOBAL_SERVER) };
            let rank = pool.as_ref().expect("validated pool size").sample(&mut rng) as u64;
            let timestamp = rng.random_range(0..config.duration);
            records.push(AccessRecord::new(
                timestamp,
                consumer.clone(),
                format!("http://{host}/obj/{rank}"),
                Some(host.to_string()),
            ));
        }
    }
    records.sort();
    Ok(records)
}

/// Writes a canonical-CSV trace for `config`.
pub fn generate_trace<W: Write>(config: &SynthConfig, out: W) -> Result<(), SynthError> {
    let records = generate_records(config)?;
    write_canonical(&records, out)?;
    Ok(())
}
