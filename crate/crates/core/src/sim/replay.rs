//! Window replay of caching strategies over recorded contact intervals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::CacheVector;
use crate::prob::ProbabilityMatrix;
use crate::set::UserSet;
use crate::sim::estimate::validate_group;
use crate::sim::trace::IntervalizedTrace;

/// Holdings within `SATISFIED_TOL` of the full item count as complete.
const SATISFIED_TOL: f64 = 1e-9;

/// What a user may pass on when relaying: only her own cached amount, or
/// everything she has come to hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SharingMode {
    Direct,
    Indirect,
}

impl SharingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SharingMode::Direct => "direct",
            SharingMode::Indirect => "indirect",
        }
    }
}

struct Window<'a> {
    itrace: &'a IntervalizedTrace,
    local: Vec<usize>,
    start: usize,
    deadline: usize,
}

impl<'a> Window<'a> {
    fn new(
        itrace: &'a IntervalizedTrace,
        group: &[usize],
        start_interval: usize,
        deadline_intervals: usize,
    ) -> Result<Self> {
        validate_group(itrace, group)?;
        if group.len() > 32 {
            return Err(Error::Capacity {
                what: "replay group",
                limit: 32,
                requested: group.len(),
            });
        }
        if deadline_intervals == 0 {
            return Err(Error::invalid("deadline must be at least one interval"));
        }
        let end = start_interval
            .checked_add(deadline_intervals)
            .ok_or_else(|| Error::invalid("replay window overflows"))?;
        if end > itrace.num_intervals() {
            return Err(Error::invalid(format!(
                "window [{start_interval}, {end}) exceeds trace of {} intervals",
                itrace.num_intervals()
            )));
        }
        Ok(Window {
            itrace,
            local: group.to_vec(),
            start: start_interval,
            deadline: deadline_intervals,
        })
    }

    fn n(&self) -> usize {
        self.local.len()
    }

    fn local_index(&self, user: usize) -> Option<usize> {
        self.local.iter().position(|&u| u == user)
    }

    /// Group-local contact edges per interval of the window.
    fn edges(&self) -> Vec<Vec<(usize, usize)>> {
        (self.start..self.start + self.deadline)
            .map(|k| {
                self.itrace
                    .contacts(k)
                    .iter()
                    .filter_map(|&(a, b)| Some((self.local_index(a)?, self.local_index(b)?)))
                    .collect()
            })
            .collect()
    }
}

/// Fraction of the item each group member holds at the deadline, given
/// per-member cached amounts `x`. Direct mode credits the caches of
/// users met in person; indirect mode lets source sets relay between
/// intervals (a contact absorbs the counterpart's set as it stood when
/// the interval began).
fn received_fractions(
    window: &Window<'_>,
    x: &CacheVector,
    mode: SharingMode,
) -> Vec<f64> {
    let n = window.n();
    let mut sources: Vec<UserSet> = (0..n).map(UserSet::singleton).collect();
    for interval in window.edges() {
        match mode {
            SharingMode::Direct => {
                for (i, j) in interval {
                    sources[i] = sources[i].union(UserSet::singleton(j));
                    sources[j] = sources[j].union(UserSet::singleton(i));
                }
            }
            SharingMode::Indirect => {
                let snapshot = sources.clone();
                for (i, j) in interval {
                    sources[i] = sources[i].union(snapshot[j]);
                    sources[j] = sources[j].union(snapshot[i]);
                }
            }
        }
    }
    sources
        .iter()
        .map(|s| s.iter().map(|j| x.get(j)).sum::<f64>().min(1.0))
        .collect()
}

/// Replays cached amounts `x` over one deadline window and returns the
/// realized total cost: everything cached up front plus whatever each
/// user still has to fetch at the deadline.
pub fn replay(
    itrace: &IntervalizedTrace,
    group: &[usize],
    x: &CacheVector,
    start_interval: usize,
    deadline_intervals: usize,
    mode: SharingMode,
) -> Result<f64> {
    let window = Window::new(itrace, group, start_interval, deadline_intervals)?;
    if x.n() != group.len() {
        return Err(Error::DimensionMismatch {
            expected: group.len(),
            got: x.n(),
        });
    }
    let received = received_fractions(&window, x, mode);
    Ok(x.total() + received.iter().map(|&r| (1.0 - r).max(0.0)).sum::<f64>())
}

/// Opportunistic cooperative downloading without pre-caching. Each
/// interval's contact graph splits the group into clusters; a cluster
/// with no satisfied member splits a fresh download `1/m` ways, then
/// members exchange holdings. `state[i][s]` tracks how much of user
/// `s`'s own download user `i` holds; exchanging by componentwise max
/// keeps repeated meetings from double counting the same fraction.
pub fn copcash(
    itrace: &IntervalizedTrace,
    group: &[usize],
    start_interval: usize,
    deadline_intervals: usize,
    mode: SharingMode,
) -> Result<f64> {
    let window = Window::new(itrace, group, start_interval, deadline_intervals)?;
    let n = window.n();
    let mut state = vec![vec![0.0f64; n]; n];
    let holdings = |state: &Vec<Vec<f64>>, i: usize| -> f64 {
        state[i].iter().sum::<f64>().min(1.0)
    };
    for interval in window.edges() {
        for cluster in components(n, &interval) {
            if cluster.len() < 2 {
                continue;
            }
            let any_satisfied = cluster
                .iter()
                .any(|&i| holdings(&state, i) >= 1.0 - SATISFIED_TOL);
            if !any_satisfied {
                let share = 1.0 / cluster.len() as f64;
                for &i in &cluster {
                    state[i][i] += share;
                }
            }
            let snapshot = state.clone();
            for &i in &cluster {
                match mode {
                    SharingMode::Direct => {
                        for &j in &cluster {
                            state[i][j] = state[i][j].max(snapshot[j][j]);
                        }
                    }
                    SharingMode::Indirect => {
                        for s in 0..n {
                            let best = cluster
                                .iter()
                                .map(|&j| snapshot[j][s])
                                .fold(0.0f64, f64::max);
                            state[i][s] = state[i][s].max(best);
                        }
                    }
                }
            }
        }
    }
    let downloaded: f64 = (0..n).map(|i| state[i][i]).sum();
    let missing: f64 = (0..n).map(|i| (1.0 - holdings(&state, i)).max(0.0)).sum();
    Ok(downloaded + missing)
}

/// Connected components of one interval's group-local contact graph.
fn components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for &(a, b) in edges {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let root = find(&mut parent, i);
        groups[root].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// The group-local index with the largest summed meeting probability;
/// ties resolve to the lowest index.
pub fn target_user(pm: &ProbabilityMatrix) -> usize {
    let n = pm.n();
    let mut best = 0usize;
    let mut best_sum = f64::NEG_INFINITY;
    for i in 0..n {
        let sum: f64 = (0..n).filter(|&j| j != i).map(|j| pm.get(i, j)).sum();
        if sum > best_sum {
            best_sum = sum;
            best = i;
        }
    }
    best
}

/// Target-set baseline with a single seed: the best-connected user
/// caches the whole item and the window replays from there.
pub fn target_set(
    itrace: &IntervalizedTrace,
    group: &[usize],
    pm: &ProbabilityMatrix,
    start_interval: usize,
    deadline_intervals: usize,
    mode: SharingMode,
) -> Result<f64> {
    if pm.n() != group.len() {
        return Err(Error::DimensionMismatch {
            expected: group.len(),
            got: pm.n(),
        });
    }
    let hub = target_user(pm);
    let mut x = vec![0.0; group.len()];
    x[hub] = 1.0;
    let x = CacheVector::new(x)?;
    replay(itrace, group, &x, start_interval, deadline_intervals, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{evaluate_cost, EvalMode};
    use crate::sim::trace::generate_bernoulli_trace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn itrace(intervals: Vec<Vec<(usize, usize)>>, users: usize) -> IntervalizedTrace {
        IntervalizedTrace::new(1.0, users, intervals).unwrap()
    }

    fn cv(values: &[f64]) -> CacheVector {
        CacheVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn full_coverage_costs_one() {
        let it = itrace(vec![vec![(0, 1), (0, 2), (1, 2)]], 3);
        let x = CacheVector::uniform(3, 1.0 / 3.0).unwrap();
        for mode in [SharingMode::Direct, SharingMode::Indirect] {
            let cost = replay(&it, &[0, 1, 2], &x, 0, 1, mode).unwrap();
            assert!((cost - 1.0).abs() < 1e-12, "{mode:?}: {cost}");
        }
    }

    #[test]
    fn empty_cache_costs_n() {
        let it = itrace(vec![vec![(0, 1)]], 4);
        let x = cv(&[0.0; 4]);
        let cost = replay(&it, &[0, 1, 2, 3], &x, 0, 1, SharingMode::Direct).unwrap();
        assert_eq!(cost, 4.0);
    }

    #[test]
    fn chain_relays_only_forward_and_only_indirect() {
        let x = cv(&[1.0, 0.0, 0.0]);
        let chain = itrace(vec![vec![(0, 1)], vec![(1, 2)]], 3);
        let ind = replay(&chain, &[0, 1, 2], &x, 0, 2, SharingMode::Indirect).unwrap();
        assert!((ind - 1.0).abs() < 1e-12);
        let dir = replay(&chain, &[0, 1, 2], &x, 0, 2, SharingMode::Direct).unwrap();
        assert!((dir - 2.0).abs() < 1e-12);

        // Reversed meeting order: user 1 holds the source only after its
        // meeting with user 2 already happened.
        let rev = itrace(vec![vec![(1, 2)], vec![(0, 1)]], 3);
        let ind = replay(&rev, &[0, 1, 2], &x, 0, 2, SharingMode::Indirect).unwrap();
        assert!((ind - 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_relaying_inside_one_interval() {
        // Both contacts share an interval: user 2 sees user 1's sources
        // as they stood when the interval began.
        let it = itrace(vec![vec![(0, 1), (1, 2)]], 3);
        let x = cv(&[1.0, 0.0, 0.0]);
        let cost = replay(&it, &[0, 1, 2], &x, 0, 1, SharingMode::Indirect).unwrap();
        assert!((cost - 2.0).abs() < 1e-12);
    }

    #[test]
    fn window_offsets_select_contacts() {
        let it = itrace(vec![vec![(0, 1)], vec![], vec![(0, 1)]], 2);
        let x = cv(&[1.0, 0.0]);
        let hit = replay(&it, &[0, 1], &x, 0, 1, SharingMode::Direct).unwrap();
        assert!((hit - 1.0).abs() < 1e-12);
        let miss = replay(&it, &[0, 1], &x, 1, 1, SharingMode::Direct).unwrap();
        assert!((miss - 2.0).abs() < 1e-12);
        assert!(replay(&it, &[0, 1], &x, 2, 2, SharingMode::Direct).is_err());
        assert!(replay(&it, &[0, 1], &x, 0, 0, SharingMode::Direct).is_err());
    }

    #[test]
    fn indirect_received_dominates_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..40 {
            let n = rng.gen_range(2..6);
            let intervals: Vec<Vec<(usize, usize)>> = (0..rng.gen_range(1..6))
                .map(|_| {
                    let mut edges = Vec::new();
                    for i in 0..n {
                        for j in i + 1..n {
                            if rng.gen_bool(0.3) {
                                edges.push((i, j));
                            }
                        }
                    }
                    edges
                })
                .collect();
            let steps = intervals.len();
            let it = itrace(intervals, n);
            let x = CacheVector::new((0..n).map(|_| rng.gen_range(0.0..0.8)).collect()).unwrap();
            let group: Vec<usize> = (0..n).collect();
            let window = Window::new(&it, &group, 0, steps).unwrap();
            let direct = received_fractions(&window, &x, SharingMode::Direct);
            let indirect = received_fractions(&window, &x, SharingMode::Indirect);
            for i in 0..n {
                assert!(
                    indirect[i] >= direct[i] - 1e-12,
                    "user {i}: indirect {} < direct {}",
                    indirect[i],
                    direct[i]
                );
            }
        }
    }

    #[test]
    fn bernoulli_replay_matches_analytic_expectation() {
        let pm = ProbabilityMatrix::symmetric(4, 0.45).unwrap();
        let x = CacheVector::uniform(4, 0.25).unwrap();
        let windows = 10_000;
        let it = generate_bernoulli_trace(&pm, windows, 17);
        let group = [0, 1, 2, 3];
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for w in 0..windows {
            let c = replay(&it, &group, &x, w, 1, SharingMode::Direct).unwrap();
            sum += c;
            sumsq += c * c;
        }
        let mean = sum / windows as f64;
        let var = (sumsq / windows as f64 - mean * mean).max(0.0);
        let stderr = (var / windows as f64).sqrt();
        let expected = evaluate_cost(&pm, &x, EvalMode::Exact).unwrap().total;
        assert!(
            (mean - expected).abs() <= 3.0 * stderr + 1e-9,
            "mean {mean} vs expected {expected} (stderr {stderr})"
        );
    }

    #[test]
    fn copcash_figure_scenario() {
        // Two users meet and split the download, then fan out to two
        // fresh pairs each. Indirect sharing finishes everyone; direct
        // sharing leaves the late joiners half short.
        let it = itrace(
            vec![vec![(0, 1)], vec![(0, 2), (0, 3), (1, 4), (1, 5)]],
            6,
        );
        let group = [0, 1, 2, 3, 4, 5];
        let ind = copcash(&it, &group, 0, 2, SharingMode::Indirect).unwrap();
        assert!((ind - 1.0).abs() < 1e-9, "indirect: {ind}");
        let dir = copcash(&it, &group, 0, 2, SharingMode::Direct).unwrap();
        assert!((dir - 3.0).abs() < 1e-9, "direct: {dir}");
    }

    #[test]
    fn copcash_no_meetings_costs_n() {
        let it = itrace(vec![vec![], vec![]], 5);
        let cost = copcash(&it, &[0, 1, 2, 3, 4], 0, 2, SharingMode::Direct).unwrap();
        assert_eq!(cost, 5.0);
    }

    #[test]
    fn copcash_single_cluster_completes() {
        // Path component of three: one cooperative instance satisfies
        // all members at total cost 1.
        let it = itrace(vec![vec![(0, 1), (1, 2)]], 3);
        for mode in [SharingMode::Direct, SharingMode::Indirect] {
            let cost = copcash(&it, &[0, 1, 2], 0, 1, mode).unwrap();
            assert!((cost - 1.0).abs() < 1e-9, "{mode:?}: {cost}");
        }
    }

    #[test]
    fn copcash_satisfied_member_blocks_downloads() {
        // After 0 and 1 complete, user 2 joins user 0: no new download
        // happens; direct sharing hands over only half.
        let it = itrace(vec![vec![(0, 1)], vec![(0, 2)]], 3);
        let dir = copcash(&it, &[0, 1, 2], 0, 2, SharingMode::Direct).unwrap();
        assert!((dir - 1.5).abs() < 1e-9, "direct: {dir}");
        let ind = copcash(&it, &[0, 1, 2], 0, 2, SharingMode::Indirect).unwrap();
        assert!((ind - 1.0).abs() < 1e-9, "indirect: {ind}");
    }

    #[test]
    fn target_picks_best_connected_with_low_tie() {
        let mut rows = vec![vec![0.0; 4]; 4];
        for i in 0..4 {
            rows[i][i] = 1.0;
        }
        for i in 1..4 {
            rows[0][i] = 0.9;
            rows[i][0] = 0.9;
        }
        let star = ProbabilityMatrix::from_entries(rows).unwrap();
        assert_eq!(target_user(&star), 0);
        let sym = ProbabilityMatrix::symmetric(4, 0.5).unwrap();
        assert_eq!(target_user(&sym), 0);
        let zero = ProbabilityMatrix::symmetric(3, 0.0).unwrap();
        assert_eq!(target_user(&zero), 0);
    }

    #[test]
    fn target_set_costs() {
        // Star trace: hub 0 meets everyone in the first interval.
        let it = itrace(vec![vec![(0, 1), (0, 2), (0, 3)]], 4);
        let mut rows = vec![vec![0.0; 4]; 4];
        for i in 0..4 {
            rows[i][i] = 1.0;
        }
        for i in 1..4 {
            rows[0][i] = 1.0;
            rows[i][0] = 1.0;
        }
        let star = ProbabilityMatrix::from_entries(rows).unwrap();
        let cost = target_set(&it, &[0, 1, 2, 3], &star, 0, 1, SharingMode::Direct).unwrap();
        assert!((cost - 1.0).abs() < 1e-12);

        // No meetings: the seeded user keeps the item to herself.
        let idle = itrace(vec![vec![]], 4);
        let zero = ProbabilityMatrix::symmetric(4, 0.0).unwrap();
        let cost = target_set(&idle, &[0, 1, 2, 3], &zero, 0, 1, SharingMode::Direct).unwrap();
        assert!((cost - 4.0).abs() < 1e-12);
    }

    #[test]
    fn component_partition() {
        let comps = components(6, &[(0, 1), (1, 2), (4, 5)]);
        assert_eq!(comps, vec![vec![0, 1, 2], vec![3], vec![4, 5]]);
    }
}
