//! Multi-segment relay reachability.
//!
//! A deadline window splits into `T` segments; each segment has its own
//! pairwise meeting matrix, edges are drawn independently, and content
//! relays across segments: whoever holds a copy at the start of a segment
//! hands it to everyone she meets within that segment. Relaying *within* a
//! segment is not modeled: a user who first receives the content in
//! segment `l` starts forwarding it in segment `l + 1`.
//!
//! The exact reach distribution composes one-segment transitions. Writing
//! `P^(k)(S_I -> S_O; l)` for the probability that the set holding the
//! content grows from `S_I` to exactly `S_O` across segments
//! `l .. l+k-1`, the recursion peels the final segment:
//!
//! `P^(k)(S_I -> S_O; l) =
//!     sum_{W between S_I and S_O} P^(k-1)(S_I -> W; l) * P^(1)(W -> S_O; l+k-1)`
//!
//! where the two factors touch disjoint segments and are therefore
//! independent. The one-segment probability is in [`single_step`].

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::prob::ProbabilityMatrix;
use crate::set::UserSet;

/// Largest group for effective-model extraction (`4^n`-entry memo).
pub const MAX_REACH_USERS: usize = 12;
/// Largest expansion set `S_O \ S_I` a single recursion level may sum over.
pub const MAX_EXPANSION_USERS: usize = 20;

/// Per-segment meeting matrices over a fixed group.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredModel {
    n: usize,
    layers: Vec<ProbabilityMatrix>,
}

#[derive(Serialize, Deserialize)]
struct LayeredWire {
    n: usize,
    layers: Vec<Vec<Vec<f64>>>,
}

impl LayeredModel {
    pub fn new(layers: Vec<ProbabilityMatrix>) -> Result<Self> {
        let Some(first) = layers.first() else {
            return Err(Error::invalid("layered model needs at least one segment"));
        };
        let n = first.n();
        if n > 32 {
            return Err(Error::Capacity {
                what: "layered model (users)",
                limit: 32,
                requested: n,
            });
        }
        for layer in &layers {
            if layer.n() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: layer.n(),
                });
            }
        }
        Ok(LayeredModel { n, layers })
    }

    /// The same matrix for every one of `t` segments.
    pub fn homogeneous(pm: ProbabilityMatrix, t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::invalid("layered model needs at least one segment"));
        }
        Self::new(vec![pm; t])
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let wire: LayeredWire = serde_json::from_str(s)?;
        let layers = wire
            .layers
            .into_iter()
            .map(ProbabilityMatrix::from_entries)
            .collect::<Result<Vec<_>>>()?;
        let model = Self::new(layers)?;
        if model.n != wire.n {
            return Err(Error::DimensionMismatch {
                expected: wire.n,
                got: model.n,
            });
        }
        Ok(model)
    }

    pub fn to_json_string(&self) -> String {
        let wire = LayeredWire {
            n: self.n,
            layers: self
                .layers
                .iter()
                .map(|pm| {
                    (0..self.n)
                        .map(|i| (0..self.n).map(|j| pm.get(i, j)).collect())
                        .collect()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&wire).expect("layered model serializes")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn segments(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> &ProbabilityMatrix {
        &self.layers[l]
    }
}

/// Probability that one segment grows the holder set from exactly `s_in`
/// to exactly `s_out`:
/// `prod_{a not in s_out} prod_{b in s_in} (1 - p_{a,b})
///  * prod_{c in s_out \ s_in} (1 - prod_{d in s_in} (1 - p_{c,d}))`,
/// and 0 unless `s_in` is a subset of `s_out`.
pub fn single_step(
    model: &LayeredModel,
    s_in: UserSet,
    s_out: UserSet,
    segment: usize,
) -> Result<f64> {
    let n = model.n();
    check_sets(n, s_in, s_out)?;
    if segment >= model.segments() {
        return Err(Error::invalid(format!(
            "segment {segment} out of range (model has {})",
            model.segments()
        )));
    }
    if !s_in.is_subset_of(s_out) {
        return Ok(0.0);
    }
    let pm = model.layer(segment);
    let all = UserSet::full(n);
    let mut prob = 1.0;
    for a in all.minus(s_out).iter() {
        for b in s_in.iter() {
            prob *= 1.0 - pm.pair_probability(a, b);
        }
    }
    for c in s_out.minus(s_in).iter() {
        let mut miss_all = 1.0;
        for d in s_in.iter() {
            miss_all *= 1.0 - pm.pair_probability(c, d);
        }
        prob *= 1.0 - miss_all;
    }
    Ok(prob)
}

/// Exact reach distribution over a set of users, one entry per superset of
/// the source set. Probabilities sum to 1.
#[derive(Clone, Debug)]
pub struct ReachDistribution {
    pub source: UserSet,
    /// `(reached set, probability)` in increasing mask order.
    pub outcomes: Vec<(UserSet, f64)>,
}

/// Memoized multi-segment reach computation over one model.
pub struct ReachCalculator<'a> {
    model: &'a LayeredModel,
    memo: HashMap<(u32, u32, u32, u32), f64>,
}

impl<'a> ReachCalculator<'a> {
    pub fn new(model: &'a LayeredModel) -> Self {
        ReachCalculator {
            model,
            memo: HashMap::new(),
        }
    }

    /// `P^(steps)(s_in -> s_out)` starting at `segment`.
    pub fn multi_step(
        &mut self,
        s_in: UserSet,
        s_out: UserSet,
        segment: usize,
        steps: usize,
    ) -> Result<f64> {
        let n = self.model.n();
        check_sets(n, s_in, s_out)?;
        if steps == 0 {
            return Err(Error::invalid("multi_step needs steps >= 1"));
        }
        if segment + steps > self.model.segments() {
            return Err(Error::invalid(format!(
                "segments {segment}..{} out of range (model has {})",
                segment + steps,
                self.model.segments()
            )));
        }
        if !s_in.is_subset_of(s_out) {
            return Ok(0.0);
        }
        let expansion = s_out.minus(s_in).len();
        if expansion > MAX_EXPANSION_USERS {
            return Err(Error::Capacity {
                what: "reach expansion set (users)",
                limit: MAX_EXPANSION_USERS,
                requested: expansion,
            });
        }
        self.multi_step_inner(s_in, s_out, segment, steps)
    }

    fn multi_step_inner(
        &mut self,
        s_in: UserSet,
        s_out: UserSet,
        segment: usize,
        steps: usize,
    ) -> Result<f64> {
        if steps == 1 {
            return single_step(self.model, s_in, s_out, segment);
        }
        let key = (s_in.mask(), s_out.mask(), segment as u32, steps as u32);
        if let Some(&hit) = self.memo.get(&key) {
            return Ok(hit);
        }
        // Peel the last segment: the first steps-1 segments reach some
        // intermediate W, the final segment takes W to exactly s_out.
        let mut total = 0.0;
        for grow in s_out.minus(s_in).subsets() {
            let mid = s_in.union(grow);
            let head = self.multi_step_inner(s_in, mid, segment, steps - 1)?;
            if head == 0.0 {
                continue;
            }
            let tail = single_step(self.model, mid, s_out, segment + steps - 1)?;
            total += head * tail;
        }
        self.memo.insert(key, total);
        Ok(total)
    }

    /// Distribution of the exact holder set after `steps` segments.
    pub fn reach_distribution(
        &mut self,
        s_in: UserSet,
        segment: usize,
        steps: usize,
    ) -> Result<ReachDistribution> {
        let n = self.model.n();
        let complement = UserSet::full(n).minus(s_in);
        let mut outcomes = Vec::with_capacity(1 << complement.len());
        for grow in complement.subsets() {
            let s_out = s_in.union(grow);
            let p = self.multi_step(s_in, s_out, segment, steps)?;
            outcomes.push((s_out, p));
        }
        outcomes.sort_by_key(|(s, _)| s.mask());
        Ok(ReachDistribution {
            source: s_in,
            outcomes,
        })
    }
}

/// Convenience wrapper for one-off queries; batch callers should reuse a
/// [`ReachCalculator`].
pub fn multi_step(
    model: &LayeredModel,
    s_in: UserSet,
    s_out: UserSet,
    segment: usize,
    steps: usize,
) -> Result<f64> {
    ReachCalculator::new(model).multi_step(s_in, s_out, segment, steps)
}

/// Per-user reach probabilities for every user subset, for injection into
/// the reduced formulation.
#[derive(Clone, Debug)]
pub struct ReachWeights {
    n: usize,
    /// `per_user[u][mask]` = probability that `u`'s content reaches
    /// exactly the users in `mask`; 0 whenever `u` is not in `mask`.
    per_user: Vec<Vec<f64>>,
}

impl ReachWeights {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn user_weight(&self, u: usize, members: UserSet) -> f64 {
        self.per_user[u][members.mask() as usize]
    }

    /// Reduced-LP objective weight of a subset: `sum_{u in S} Pr(u -> S)`.
    pub fn subset_weight(&self, members: UserSet) -> f64 {
        members
            .iter()
            .map(|u| self.per_user[u][members.mask() as usize])
            .sum()
    }
}

/// Collapses a layered model over its whole horizon into (a) an effective
/// pairwise matrix whose entry `(i, j)` is the probability that a relay
/// path carries `i`'s content to `j`, and (b) the exact per-user reach
/// weights. The effective matrix need not be symmetric even when every
/// layer is.
pub fn effective_direct_model(model: &LayeredModel) -> Result<(ProbabilityMatrix, ReachWeights)> {
    let n = model.n();
    if n > MAX_REACH_USERS {
        return Err(Error::Capacity {
            what: "effective model extraction (users)",
            limit: MAX_REACH_USERS,
            requested: n,
        });
    }
    let t = model.segments();
    let mut calc = ReachCalculator::new(model);
    let mut per_user = vec![vec![0.0; 1usize << n]; n];
    let mut rows = vec![vec![0.0; n]; n];
    for u in 0..n {
        let dist = calc.reach_distribution(UserSet::singleton(u), 0, t)?;
        for (s_out, p) in &dist.outcomes {
            per_user[u][s_out.mask() as usize] = *p;
        }
        for j in 0..n {
            if j == u {
                rows[u][j] = 1.0;
                continue;
            }
            // 1 minus the mass of outcomes that miss j.
            let missed: f64 = dist
                .outcomes
                .iter()
                .filter(|(s, _)| !s.contains(j))
                .map(|(_, p)| p)
                .sum();
            rows[u][j] = (1.0 - missed).clamp(0.0, 1.0);
        }
    }
    let pm = ProbabilityMatrix::from_entries(rows)?;
    Ok((pm, ReachWeights { n, per_user }))
}

fn check_sets(n: usize, s_in: UserSet, s_out: UserSet) -> Result<()> {
    if s_in.is_empty() {
        return Err(Error::invalid("source set must be nonempty"));
    }
    let all = UserSet::full(n);
    if !s_in.is_subset_of(all) || !s_out.is_subset_of(all) {
        return Err(Error::invalid("set has members outside the group"));
    }
    Ok(())
}
