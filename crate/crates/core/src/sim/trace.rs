//! Encounter traces and their discretization into sharing intervals.
//!
//! Wire format: CSV with header `t_sec,user_a,user_b` for instantaneous
//! contact events, or `t_sec,user_a,user_b,kind` with `kind` in
//! `begin|end` for contacts with duration. Timestamps are seconds from
//! the experiment start; contacts are undirected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::prob::ProbabilityMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ContactKind {
    /// Single-instant sighting.
    Point,
    Begin,
    End,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactEvent {
    pub t_sec: f64,
    pub a: usize,
    pub b: usize,
    pub kind: ContactKind,
}

/// Raw undirected contact records over a user universe.
#[derive(Clone, Debug)]
pub struct EncounterTrace {
    num_users: usize,
    /// Sorted by timestamp (stable).
    events: Vec<ContactEvent>,
}

impl EncounterTrace {
    pub fn new(num_users: usize, mut events: Vec<ContactEvent>) -> Result<Self> {
        for ev in &events {
            if ev.a == ev.b {
                return Err(Error::Trace(format!(
                    "self-contact for user {} at t={}",
                    ev.a, ev.t_sec
                )));
            }
            if ev.a >= num_users || ev.b >= num_users {
                return Err(Error::Trace(format!(
                    "user pair ({}, {}) outside universe of {num_users}",
                    ev.a, ev.b
                )));
            }
            if !ev.t_sec.is_finite() || ev.t_sec < 0.0 {
                return Err(Error::Trace(format!("bad timestamp {}", ev.t_sec)));
            }
        }
        events.sort_by(|x, y| x.t_sec.total_cmp(&y.t_sec));
        Ok(EncounterTrace { num_users, events })
    }

    /// Parses the CSV wire format. The universe size is one past the
    /// largest user id seen.
    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(s.as_bytes());
        let mut events = Vec::new();
        let mut max_user = 0usize;
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Trace(format!("row {}: {e}", line + 2)))?;
            if record.len() != 3 && record.len() != 4 {
                return Err(Error::Trace(format!(
                    "row {}: expected 3 or 4 fields, got {}",
                    line + 2,
                    record.len()
                )));
            }
            let t_sec: f64 = record[0]
                .trim()
                .parse()
                .map_err(|_| Error::Trace(format!("row {}: bad timestamp", line + 2)))?;
            let a: usize = record[1]
                .trim()
                .parse()
                .map_err(|_| Error::Trace(format!("row {}: bad user id", line + 2)))?;
            let b: usize = record[2]
                .trim()
                .parse()
                .map_err(|_| Error::Trace(format!("row {}: bad user id", line + 2)))?;
            let kind = if record.len() == 4 {
                match record[3].trim() {
                    "begin" => ContactKind::Begin,
                    "end" => ContactKind::End,
                    other => {
                        return Err(Error::Trace(format!(
                            "row {}: unknown contact kind '{other}'",
                            line + 2
                        )))
                    }
                }
            } else {
                ContactKind::Point
            };
            max_user = max_user.max(a).max(b);
            events.push(ContactEvent { t_sec, a, b, kind });
        }
        let num_users = if events.is_empty() { 0 } else { max_user + 1 };
        Self::new(num_users, events)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn events(&self) -> &[ContactEvent] {
        &self.events
    }
}

/// Per-interval contact sets: the discrete time base every estimation and
/// replay step runs on.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalizedTrace {
    interval_seconds: f64,
    num_users: usize,
    /// `intervals[k]` holds the unordered pairs `(min, max)` connected in
    /// interval `k`, sorted, each at most once.
    intervals: Vec<Vec<(usize, usize)>>,
}

impl IntervalizedTrace {
    pub fn new(
        interval_seconds: f64,
        num_users: usize,
        intervals: Vec<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        if !(interval_seconds > 0.0) || !interval_seconds.is_finite() {
            return Err(Error::invalid("interval length must be positive"));
        }
        let mut normalized = Vec::with_capacity(intervals.len());
        for contacts in intervals {
            let mut cleaned: Vec<(usize, usize)> = contacts
                .into_iter()
                .map(|(a, b)| (a.min(b), a.max(b)))
                .collect();
            cleaned.sort_unstable();
            cleaned.dedup();
            for &(a, b) in &cleaned {
                if a == b || b >= num_users {
                    return Err(Error::Trace(format!("bad pair ({a}, {b})")));
                }
            }
            normalized.push(cleaned);
        }
        Ok(IntervalizedTrace {
            interval_seconds,
            num_users,
            intervals: normalized,
        })
    }

    pub fn interval_seconds(&self) -> f64 {
        self.interval_seconds
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_intervals(&self) -> usize {
        self.intervals.len()
    }

    pub fn contacts(&self, k: usize) -> &[(usize, usize)] {
        &self.intervals[k]
    }

    pub fn pair_present(&self, k: usize, i: usize, j: usize) -> bool {
        let key = (i.min(j), i.max(j));
        self.intervals[k].binary_search(&key).is_ok()
    }
}

/// Discretizes a raw trace: a pair is connected in interval `k` iff its
/// cumulative contact time inside `[kL, (k+1)L)` is at least
/// `min_contact_fraction * L`. With fraction 0, any instant of contact
/// (point events included) counts. The trace ends after the last interval
/// containing any connection.
pub fn intervalize(
    trace: &EncounterTrace,
    interval_seconds: f64,
    min_contact_fraction: f64,
) -> Result<IntervalizedTrace> {
    if !(interval_seconds > 0.0) || !interval_seconds.is_finite() {
        return Err(Error::invalid("interval length must be positive"));
    }
    if !(0.0..=1.0).contains(&min_contact_fraction) {
        return Err(Error::invalid("contact fraction must be in [0, 1]"));
    }
    let ell = interval_seconds;

    // Collect per-pair contact spans and point touches.
    let mut spans: HashMap<(usize, usize), Vec<(f64, f64)>> = HashMap::new();
    let mut touches: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
    let mut open: HashMap<(usize, usize), f64> = HashMap::new();
    for ev in trace.events() {
        let key = (ev.a.min(ev.b), ev.a.max(ev.b));
        match ev.kind {
            ContactKind::Point => touches.entry(key).or_default().push(ev.t_sec),
            ContactKind::Begin => {
                if open.insert(key, ev.t_sec).is_some() {
                    return Err(Error::Trace(format!(
                        "pair ({}, {}) begins a contact at t={} while one is open",
                        key.0, key.1, ev.t_sec
                    )));
                }
            }
            ContactKind::End => {
                let Some(start) = open.remove(&key) else {
                    return Err(Error::Trace(format!(
                        "pair ({}, {}) ends a contact at t={} without a begin",
                        key.0, key.1, ev.t_sec
                    )));
                };
                if ev.t_sec > start {
                    spans.entry(key).or_default().push((start, ev.t_sec));
                } else {
                    touches.entry(key).or_default().push(start);
                }
            }
        }
    }
    if let Some((&(a, b), &t)) = open.iter().min_by(|x, y| x.1.total_cmp(y.1)) {
        return Err(Error::Trace(format!(
            "pair ({a}, {b}) contact beginning at t={t} never ends"
        )));
    }

    // Per-pair presence per interval.
    let mut presence: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
    let mut mark = |k: usize, pair: (usize, usize)| {
        presence.entry(k).or_default().push(pair);
    };
    let mut pairs: Vec<(usize, usize)> = spans.keys().chain(touches.keys()).copied().collect();
    pairs.sort_unstable();
    pairs.dedup();
    for pair in pairs {
        let mut coverage: HashMap<usize, f64> = HashMap::new();
        let mut touched: Vec<usize> = Vec::new();
        for &(s, e) in spans.get(&pair).map(Vec::as_slice).unwrap_or(&[]) {
            let mut k = (s / ell).floor() as usize;
            while (k as f64) * ell < e {
                let lo = (k as f64) * ell;
                let hi = lo + ell;
                let overlap = e.min(hi) - s.max(lo);
                if overlap > 0.0 {
                    *coverage.entry(k).or_insert(0.0) += overlap;
                }
                k += 1;
            }
        }
        for &t in touches.get(&pair).map(Vec::as_slice).unwrap_or(&[]) {
            touched.push((t / ell).floor() as usize);
        }
        if min_contact_fraction == 0.0 {
            for (&k, &c) in &coverage {
                if c > 0.0 {
                    mark(k, pair);
                }
            }
            for &k in &touched {
                mark(k, pair);
            }
        } else {
            let need = min_contact_fraction * ell;
            for (&k, &c) in &coverage {
                if c + 1e-9 >= need {
                    mark(k, pair);
                }
            }
        }
    }

    let num_intervals = presence.keys().max().map(|&k| k + 1).unwrap_or(0);
    let mut intervals = vec![Vec::new(); num_intervals];
    for (k, pairs) in presence {
        intervals[k] = pairs;
    }
    IntervalizedTrace::new(interval_seconds, trace.num_users(), intervals)
}

/// Synthesizes an intervalized trace by sampling each pair independently
/// per interval from `pm`. Interval length is 1 second, so deadlines in
/// intervals and in seconds coincide. Interval `k` draws from RNG stream
/// `k` of `seed`, so a prefix of the trace never depends on its length.
pub fn generate_bernoulli_trace(
    pm: &ProbabilityMatrix,
    intervals: usize,
    seed: u64,
) -> IntervalizedTrace {
    let n = pm.n();
    let all: Vec<Vec<(usize, usize)>> = crate::par::map_indexed(intervals, |k| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut contacts = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < pm.pair_probability(i, j) {
                    contacts.push((i, j));
                }
            }
        }
        contacts
    });
    IntervalizedTrace {
        interval_seconds: 1.0,
        num_users: n,
        intervals: all,
    }
}
