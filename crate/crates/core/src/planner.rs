//! Exact cost formulations and cache-vector evaluation.
//!
//! The expected total download cost of a cache allocation `x` is the
//! pre-caching cost `sum_i x_i` plus, for each user, the expected fraction
//! still missing after sharing. Three equivalent LP formulations compute
//! the optimum:
//!
//! - the *full* LP enumerates every encounter configuration (`2^C(n,2)`
//!   of them) with one post-sharing variable per user per configuration;
//! - the *reduced* LP groups configurations by each user's realized
//!   neighborhood, leaving one variable per nonempty user subset;
//! - the *symmetric* LP collapses the uniform-probability case to one
//!   variable per neighborhood size, and admits a closed-form solve over
//!   the breakpoints of its piecewise-linear objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indirect::ReachWeights;
use crate::lp::{LpProblem, LpSolution};
use crate::par;
use crate::prob::{
    exact_neighborhood_probability, pair_count, ProbabilityMatrix, SelectionVector,
    MAX_ENUM_USERS,
};
use crate::set::UserSet;

/// Largest group for the reduced formulation (`2^n - 1` subset variables).
pub const MAX_REDUCED_USERS: usize = 16;
/// Largest group for exact cost evaluation (`2^(n-1)` terms per user).
pub const MAX_EXACT_EVAL_USERS: usize = 20;
/// Dense-row ceiling for the full formulation (`n * 2^C(n,2)` coverage
/// rows); 5 users fit, 6 would need hundreds of GB.
pub const MAX_FULL_LP_ROWS: usize = 1 << 14;

/// Per-user cached fractions. Values above 1 are legal (a user may cache
/// padding for others) but usually wasteful; see [`CacheVector::overcached`].
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct CacheVector {
    x: Vec<f64>,
}

impl CacheVector {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("cache vector needs at least one user"));
        }
        for (i, &v) in x.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "cache fraction x[{i}] = {v} must be finite and nonnegative"
                )));
            }
        }
        Ok(CacheVector { x })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn get(&self, i: usize) -> f64 {
        self.x[i]
    }

    pub fn total(&self) -> f64 {
        self.x.iter().sum()
    }

    /// Users caching strictly more than the whole item; a lint, not an
    /// error.
    pub fn overcached(&self) -> Vec<usize> {
        self.x
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 1.0 + 1e-12)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Cost of a cache vector split into its two parts.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct EvaluatedCost {
    pub total: f64,
    pub caching: f64,
    pub postsharing: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_user_postsharing: Option<Vec<f64>>,
    /// Standard error of `total`; present only for Monte-Carlo evaluation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

impl EvaluatedCost {
    fn new(caching: f64, postsharing: f64) -> Self {
        EvaluatedCost {
            total: caching + postsharing,
            caching,
            postsharing,
            per_user_postsharing: None,
            stderr: None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
pub enum EvalMode {
    /// Exact expectation over the undirected encounter model.
    Exact,
    /// Closed-form expectation for uniform models and uniform vectors.
    Symmetric,
    /// Sampled expectation; trial `t` draws from RNG stream `t`.
    MonteCarlo { seed: u64, trials: u64 },
}

/// Full formulation: variables `x` then `y_{i,k}` grouped by configuration
/// (configuration-major, user-minor). One coverage row per (configuration,
/// user) pair.
pub fn build_full_lp(pm: &ProbabilityMatrix) -> Result<LpProblem> {
    let n = pm.n();
    if n > MAX_ENUM_USERS {
        return Err(Error::Capacity {
            what: "full formulation (users)",
            limit: MAX_ENUM_USERS,
            requested: n,
        });
    }
    let k_count = 1usize << pair_count(n);
    // Dense rows cost n * 2^C(n,2) coefficient vectors: fine through n = 5,
    // hundreds of GB at n = 6. Refuse rather than drown; the reduced
    // formulation reaches the same optimum at a sane size.
    let rows = n * k_count;
    if rows > MAX_FULL_LP_ROWS {
        return Err(Error::Capacity {
            what: "full formulation (dense constraint rows)",
            limit: MAX_FULL_LP_ROWS,
            requested: rows,
        });
    }
    let num_vars = n + n * k_count;
    let mut objective = vec![0.0; num_vars];
    objective[..n].fill(1.0);

    let probs: Vec<f64> = crate::prob::Configuration::enumerate(n)?
        .map(|cfg| crate::prob::config_probability(pm, &cfg))
        .collect::<Result<_>>()?;
    for (k, &pk) in probs.iter().enumerate() {
        for i in 0..n {
            objective[n + k * n + i] = pk;
        }
    }

    let mut lp = LpProblem::new(num_vars, objective)?;
    for (k, cfg) in crate::prob::Configuration::enumerate(n)?.enumerate() {
        for i in 0..n {
            let mut row = vec![0.0; num_vars];
            for j in 0..n {
                if cfg.has_pair(i, j) {
                    row[j] = 1.0;
                }
            }
            row[n + k * n + i] = 1.0;
            lp.add_constraint(row, 1.0)?;
        }
    }
    Ok(lp)
}

/// Reduced formulation: variables `x` then one `y_v` per nonempty user
/// subset `v` (mask order), with objective weight
/// `sum_{u in v} Pr(u -> v)` and row `sum_{j in v} x_j + y_v >= 1`.
pub fn build_reduced_lp(pm: &ProbabilityMatrix) -> Result<LpProblem> {
    let n = pm.n();
    let weights = |v: &SelectionVector| -> Result<f64> {
        let mut w = 0.0;
        for u in v.members().iter() {
            w += exact_neighborhood_probability(pm, u, v)?;
        }
        Ok(w)
    };
    build_reduced_common(n, weights)
}

/// Reduced formulation with externally supplied neighborhood weights, used
/// when reach probabilities come from a multi-segment relay model instead
/// of independent pairwise meetings.
pub fn build_reduced_lp_from_weights(weights: &ReachWeights) -> Result<LpProblem> {
    let n = weights.n();
    build_reduced_common(n, |v| Ok(weights.subset_weight(v.members())))
}

fn build_reduced_common(
    n: usize,
    weight: impl Fn(&SelectionVector) -> Result<f64>,
) -> Result<LpProblem> {
    if n > MAX_REDUCED_USERS {
        return Err(Error::Capacity {
            what: "reduced formulation (users)",
            limit: MAX_REDUCED_USERS,
            requested: n,
        });
    }
    let subsets = (1usize << n) - 1;
    let num_vars = n + subsets;
    let mut objective = vec![0.0; num_vars];
    objective[..n].fill(1.0);
    for sv in SelectionVector::enumerate(n) {
        objective[n + sv.index() as usize - 1] = weight(&sv)?;
    }
    let mut lp = LpProblem::new(num_vars, objective)?;
    for sv in SelectionVector::enumerate(n) {
        let mut row = vec![0.0; num_vars];
        for u in sv.members().iter() {
            row[u] = 1.0;
        }
        row[n + sv.index() as usize - 1] = 1.0;
        lp.add_constraint(row, 1.0)?;
    }
    Ok(lp)
}

/// Uniform-model formulation: variables `[x, y_1 .. y_n]` where `y_i` is
/// the post-sharing cost of a user whose realized neighborhood has size
/// `i`. Objective `N x + sum_i w_i y_i` with binomial weights
/// `w_i = C(N-1, i-1) N p^(i-1) (1-p)^(N-i)`; rows `i x + y_i >= 1`.
pub fn build_symmetric_lp(n: usize, p: f64) -> Result<LpProblem> {
    let weights = symmetric_weights(n, p)?;
    let num_vars = 1 + n;
    let mut objective = vec![0.0; num_vars];
    objective[0] = n as f64;
    objective[1..].copy_from_slice(&weights);
    let mut lp = LpProblem::new(num_vars, objective)?;
    for i in 1..=n {
        let mut row = vec![0.0; num_vars];
        row[0] = i as f64;
        row[i] = 1.0;
        lp.add_constraint(row, 1.0)?;
    }
    Ok(lp)
}

/// `w_i` for neighborhood sizes `1..=n` under the uniform model.
pub fn symmetric_weights(n: usize, p: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("need at least one user"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok((1..=n)
        .map(|i| binomial(n - 1, i - 1) * n as f64 * pow_prob(p, i - 1) * pow_prob(1.0 - p, n - i))
        .collect())
}

fn pow_prob(p: f64, e: usize) -> f64 {
    // 0^0 must be 1 so the p = 0 and p = 1 endpoints stay exact.
    if e == 0 {
        1.0
    } else {
        p.powi(e as i32)
    }
}

/// Exact binomial coefficient as f64 (exact for every size used here).
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round()
}

/// Minimizes the uniform-model cost `g(x) = sum_i w_i [1 - i x]^+ + N x`
/// by evaluating `g` at its breakpoints `x in {0} u {1/i : i = 1..N}`.
/// `g` is convex piecewise-linear, so the best breakpoint is optimal.
pub fn solve_symmetric_closed(n: usize, p: f64) -> Result<(CacheVector, EvaluatedCost)> {
    let weights = symmetric_weights(n, p)?;
    let mut best_x = 0.0;
    let mut best_cost = symmetric_cost_at(&weights, n, 0.0);
    for i in 1..=n {
        let x = 1.0 / i as f64;
        let cost = symmetric_cost_at(&weights, n, x);
        // Strict improvement only, so ties keep the earlier breakpoint.
        if cost < best_cost {
            best_cost = cost;
            best_x = x;
        }
    }
    let caching = n as f64 * best_x;
    let cv = CacheVector::uniform(n, best_x)?;
    Ok((cv, EvaluatedCost::new(caching, best_cost - caching)))
}

fn symmetric_cost_at(weights: &[f64], n: usize, x: f64) -> f64 {
    let post: f64 = weights
        .iter()
        .enumerate()
        .map(|(idx, w)| {
            let i = (idx + 1) as f64;
            w * (1.0 - i * x).max(0.0)
        })
        .sum();
    n as f64 * x + post
}

/// Expected total cost of `cv` under `pm`.
pub fn evaluate_cost(pm: &ProbabilityMatrix, cv: &CacheVector, mode: EvalMode) -> Result<EvaluatedCost> {
    if pm.n() != cv.n() {
        return Err(Error::DimensionMismatch {
            expected: pm.n(),
            got: cv.n(),
        });
    }
    match mode {
        EvalMode::Exact => evaluate_exact(pm, cv),
        EvalMode::Symmetric => evaluate_symmetric(pm, cv),
        EvalMode::MonteCarlo { seed, trials } => evaluate_monte_carlo(pm, cv, seed, trials),
    }
}

/// Per-user expectation over that user's neighborhood distribution:
/// `sum_{S contains u} Pr(u -> S) [1 - sum_{j in S} x_j]^+`.
fn evaluate_exact(pm: &ProbabilityMatrix, cv: &CacheVector) -> Result<EvaluatedCost> {
    let n = pm.n();
    if n > MAX_EXACT_EVAL_USERS {
        return Err(Error::Capacity {
            what: "exact cost evaluation (users)",
            limit: MAX_EXACT_EVAL_USERS,
            requested: n,
        });
    }
    let mut per_user = Vec::with_capacity(n);
    let all = UserSet::full(n);
    for u in 0..n {
        let others = all.minus(UserSet::singleton(u));
        let mut expected = 0.0;
        for rest in others.subsets() {
            let members = rest.insert(u);
            let sv = SelectionVector::new(n, members)?;
            let pr = exact_neighborhood_probability(pm, u, &sv)?;
            if pr == 0.0 {
                continue;
            }
            let covered: f64 = members.iter().map(|j| cv.get(j)).sum();
            expected += pr * (1.0 - covered).max(0.0);
        }
        per_user.push(expected);
    }
    let caching = cv.total();
    let postsharing = per_user.iter().sum();
    let mut out = EvaluatedCost::new(caching, postsharing);
    out.per_user_postsharing = Some(per_user);
    Ok(out)
}

fn evaluate_symmetric(pm: &ProbabilityMatrix, cv: &CacheVector) -> Result<EvaluatedCost> {
    let Some(p) = pm.uniform_p() else {
        return Err(Error::invalid(
            "symmetric evaluation needs a uniform probability matrix",
        ));
    };
    let x = cv.get(0);
    if cv.values().iter().any(|&v| (v - x).abs() > 1e-12) {
        return Err(Error::invalid(
            "symmetric evaluation needs a uniform cache vector",
        ));
    }
    let n = pm.n();
    let weights = symmetric_weights(n, p)?;
    let total = symmetric_cost_at(&weights, n, x);
    let caching = n as f64 * x;
    Ok(EvaluatedCost::new(caching, total - caching))
}

fn evaluate_monte_carlo(
    pm: &ProbabilityMatrix,
    cv: &CacheVector,
    seed: u64,
    trials: u64,
) -> Result<EvaluatedCost> {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    if trials == 0 {
        return Err(Error::invalid("Monte-Carlo evaluation needs trials >= 1"));
    }
    let n = pm.n();
    let caching = cv.total();
    // One RNG stream per trial keeps results independent of execution
    // order and thread count.
    let costs: Vec<f64> = par::map_indexed(trials as usize, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        let mut post = 0.0;
        let mut covered = vec![0.0f64; n];
        for i in 0..n {
            covered[i] += cv.get(i);
        }
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < pm.pair_probability(i, j) {
                    covered[i] += cv.get(j);
                    covered[j] += cv.get(i);
                }
            }
        }
        for i in 0..n {
            post += (1.0 - covered[i]).max(0.0);
        }
        post
    });
    let mean_post = costs.iter().sum::<f64>() / trials as f64;
    let var = if trials > 1 {
        costs
            .iter()
            .map(|c| (c - mean_post) * (c - mean_post))
            .sum::<f64>()
            / (trials as f64 - 1.0)
    } else {
        0.0
    };
    let mut out = EvaluatedCost::new(caching, mean_post);
    out.stderr = Some((var / trials as f64).sqrt());
    Ok(out)
}

/// First `n` coordinates of an optimal LP point as a cache vector, with
/// solver round-off clipped to zero.
pub fn extract_cache_vector(solution: &LpSolution, n: usize) -> Result<CacheVector> {
    let (_, point) = solution.optimal()?;
    if point.len() < n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: point.len(),
        });
    }
    CacheVector::new(point[..n].iter().map(|&v| v.max(0.0)).collect())
}
