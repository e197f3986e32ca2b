//! Probability estimation and group selection from intervalized traces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::prob::ProbabilityMatrix;
use crate::sim::experiment::{ExperimentConfig, GroupMode};
use crate::sim::trace::IntervalizedTrace;

/// RNG stream reserved for group sampling, far above any interval index.
const GROUP_SELECTION_STREAM: u64 = u64::MAX - 1;
/// Candidate draws allowed per requested group before giving up.
const SELECTION_ATTEMPTS_PER_GROUP: usize = 4000;

/// Empirical meeting probabilities for a group: `p[i][j]` is the fraction
/// of deadline-sized windows in which the pair shared at least one
/// interval contact. Indices are positions in `group`, not raw user ids.
pub fn estimate_probabilities(
    itrace: &IntervalizedTrace,
    group: &[usize],
    deadline_intervals: usize,
) -> Result<ProbabilityMatrix> {
    validate_group(itrace, group)?;
    if deadline_intervals == 0 {
        return Err(Error::invalid("deadline must be at least one interval"));
    }
    let windows = itrace.num_intervals() / deadline_intervals;
    if windows == 0 {
        return Err(Error::invalid(format!(
            "trace has {} intervals, shorter than one {deadline_intervals}-interval window",
            itrace.num_intervals()
        )));
    }
    let n = group.len();
    let local: HashMap<usize, usize> = group.iter().enumerate().map(|(l, &u)| (u, l)).collect();
    let mut counts = vec![vec![0u64; n]; n];
    for w in 0..windows {
        let mut met = vec![vec![false; n]; n];
        for k in w * deadline_intervals..(w + 1) * deadline_intervals {
            for &(a, b) in itrace.contacts(k) {
                if let (Some(&i), Some(&j)) = (local.get(&a), local.get(&b)) {
                    met[i][j] = true;
                    met[j][i] = true;
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if met[i][j] {
                    counts[i][j] += 1;
                    counts[j][i] += 1;
                }
            }
        }
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        1.0
                    } else {
                        counts[i][j] as f64 / windows as f64
                    }
                })
                .collect()
        })
        .collect();
    ProbabilityMatrix::from_entries(rows)
}

/// Spread of expected cluster sizes across the group:
/// `max_i E(C_i) - min_i E(C_i)`. Zero means a symmetric-looking group.
pub fn expectation_deviation(pm: &ProbabilityMatrix) -> f64 {
    let degrees: Vec<f64> = (0..pm.n()).map(|i| pm.expected_degree(i)).collect();
    let max = degrees.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = degrees.iter().cloned().fold(f64::INFINITY, f64::min);
    max - min
}

/// Draws up to `cfg.group_trials` distinct groups of `cfg.group_size`
/// users matching the configured mode:
/// asymmetric groups need `ED >= th_asym`; symmetric groups need
/// `ED <= th_sym` and `max_i E(C_i) >= th_max`. Estimation uses the
/// shortest configured deadline. Sampling is seeded and deterministic.
pub fn select_groups(
    itrace: &IntervalizedTrace,
    cfg: &ExperimentConfig,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let universe = itrace.num_users();
    let n = cfg.group_size;
    if universe < n {
        return Err(Error::invalid(format!(
            "universe of {universe} users cannot host groups of {n}"
        )));
    }
    let deadline = *cfg
        .deadlines_intervals
        .iter()
        .min()
        .expect("validated nonempty");
    let windows = itrace.num_intervals() / deadline;
    if windows == 0 {
        return Err(Error::invalid("trace shorter than one deadline window"));
    }

    // One pass over the trace; per-candidate work is then O(N^2).
    let mut pair_counts: HashMap<(usize, usize), u64> = HashMap::new();
    for w in 0..windows {
        let mut seen: BTreeSet<(usize, usize)> = BTreeSet::new();
        for k in w * deadline..(w + 1) * deadline {
            for &pair in itrace.contacts(k) {
                seen.insert(pair);
            }
        }
        for pair in seen {
            *pair_counts.entry(pair).or_insert(0) += 1;
        }
    }
    let p_hat = |a: usize, b: usize| -> f64 {
        let key = (a.min(b), a.max(b));
        pair_counts.get(&key).copied().unwrap_or(0) as f64 / windows as f64
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(GROUP_SELECTION_STREAM);
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut seen_groups: BTreeSet<Vec<usize>> = BTreeSet::new();
    let budget = cfg.group_trials.saturating_mul(SELECTION_ATTEMPTS_PER_GROUP);
    for _ in 0..budget {
        if found.len() == cfg.group_trials {
            break;
        }
        let mut group: Vec<usize> = rand::seq::index::sample(&mut rng, universe, n).into_vec();
        group.sort_unstable();
        if !seen_groups.insert(group.clone()) {
            continue;
        }
        let degrees: Vec<f64> = group
            .iter()
            .map(|&u| {
                1.0 + group
                    .iter()
                    .filter(|&&v| v != u)
                    .map(|&v| p_hat(u, v))
                    .sum::<f64>()
            })
            .collect();
        let max = degrees.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = degrees.iter().cloned().fold(f64::INFINITY, f64::min);
        let ed = max - min;
        let qualifies = match cfg.group_mode {
            GroupMode::Asymmetric => ed >= cfg.th_asym,
            GroupMode::Symmetric => ed <= cfg.th_sym && max >= cfg.th_max,
        };
        if qualifies {
            found.push(group);
        }
    }
    if found.len() < cfg.group_trials {
        return Err(Error::InsufficientGroups {
            found: found.len(),
            requested: cfg.group_trials,
        });
    }
    Ok(found)
}

pub(crate) fn validate_group(itrace: &IntervalizedTrace, group: &[usize]) -> Result<()> {
    if group.is_empty() {
        return Err(Error::invalid("group must be nonempty"));
    }
    let mut sorted = group.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != group.len() {
        return Err(Error::invalid("group has duplicate users"));
    }
    if let Some(&bad) = group.iter().find(|&&u| u >= itrace.num_users()) {
        return Err(Error::invalid(format!(
            "user {bad} outside universe of {}",
            itrace.num_users()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trace::generate_bernoulli_trace;
    use crate::sim::trace::IntervalizedTrace;

    fn fixed_trace(intervals: Vec<Vec<(usize, usize)>>, users: usize) -> IntervalizedTrace {
        IntervalizedTrace::new(1.0, users, intervals).unwrap()
    }

    #[test]
    fn estimates_extreme_pairs() {
        let it = fixed_trace(
            vec![vec![(0, 1)], vec![(0, 1)], vec![(0, 1)], vec![(0, 1)]],
            3,
        );
        let pm = estimate_probabilities(&it, &[0, 1, 2], 2).unwrap();
        assert_eq!(pm.get(0, 1), 1.0);
        assert_eq!(pm.get(0, 2), 0.0);
        assert_eq!(pm.get(1, 2), 0.0);
        assert_eq!(pm.get(1, 1), 1.0);
    }

    #[test]
    fn window_semantics_not_per_interval() {
        // Pair meets in one interval of each two-interval window: the
        // window-level probability is 1 even though interval-level is 1/2.
        let it = fixed_trace(vec![vec![(0, 1)], vec![], vec![(0, 1)], vec![]], 2);
        let pm = estimate_probabilities(&it, &[0, 1], 2).unwrap();
        assert_eq!(pm.get(0, 1), 1.0);
        let per_interval = estimate_probabilities(&it, &[0, 1], 1).unwrap();
        assert_eq!(per_interval.get(0, 1), 0.5);
    }

    #[test]
    fn generator_round_trip() {
        let q = 0.35;
        let pm = ProbabilityMatrix::symmetric(4, q).unwrap();
        let windows = 10_000;
        let it = generate_bernoulli_trace(&pm, windows, 5);
        let est = estimate_probabilities(&it, &[0, 1, 2, 3], 1).unwrap();
        let stderr = (q * (1.0 - q) / windows as f64).sqrt();
        for i in 0..4 {
            for j in i + 1..4 {
                assert!(
                    (est.get(i, j) - q).abs() <= 3.0 * stderr,
                    "pair ({i},{j}): {}",
                    est.get(i, j)
                );
            }
        }
    }

    #[test]
    fn deviation_examples() {
        let sym = ProbabilityMatrix::symmetric(5, 0.4).unwrap();
        assert_eq!(expectation_deviation(&sym), 0.0);

        let mut rows = vec![vec![0.0; 4]; 4];
        for i in 0..4 {
            rows[i][i] = 1.0;
        }
        for i in 1..4 {
            rows[0][i] = 1.0;
            rows[i][0] = 1.0;
        }
        let star = ProbabilityMatrix::from_entries(rows).unwrap();
        // Hub expects 4 encounters (incl. self), leaves expect 2.
        assert!((expectation_deviation(&star) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn selection_modes_and_failure() {
        let pm = ProbabilityMatrix::symmetric(10, 0.5).unwrap();
        let it = generate_bernoulli_trace(&pm, 400, 11);
        let mut cfg = ExperimentConfig::default();
        cfg.group_size = 4;
        cfg.group_trials = 5;
        cfg.deadlines_intervals = vec![1];
        cfg.seed = 3;

        // Uniform traffic: symmetric selection succeeds.
        cfg.group_mode = GroupMode::Symmetric;
        cfg.th_sym = 0.3;
        cfg.th_max = 1.5;
        let groups = select_groups(&it, &cfg).unwrap();
        assert_eq!(groups.len(), 5);
        let again = select_groups(&it, &cfg).unwrap();
        assert_eq!(groups, again);
        for g in &groups {
            assert_eq!(g.len(), 4);
            let mut sorted = g.clone();
            sorted.sort_unstable();
            assert_eq!(&sorted, g);
        }

        // No group of a uniform-traffic trace is strongly asymmetric.
        cfg.group_mode = GroupMode::Asymmetric;
        cfg.th_asym = 2.5;
        match select_groups(&it, &cfg) {
            Err(Error::InsufficientGroups { found, requested }) => {
                assert_eq!(requested, 5);
                assert_eq!(found, 0);
            }
            other => panic!("expected insufficient groups, got {other:?}"),
        }
    }

    #[test]
    fn empty_window_errors() {
        let it = fixed_trace(vec![vec![(0, 1)]], 2);
        assert!(estimate_probabilities(&it, &[0, 1], 5).is_err());
        assert!(estimate_probabilities(&it, &[0, 0], 1).is_err());
        assert!(estimate_probabilities(&it, &[], 1).is_err());
    }
}
