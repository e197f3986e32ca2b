//! Configuration-weighted fractional set-cover lower bound.
//!
//! Every encounter configuration induces a bipartite covering instance:
//! users on one side, cached copies on the other, adjacency given by the
//! realized encounter graph plus self-loops. The weighted average of the
//! per-configuration LP relaxation optima lower-bounds the optimal
//! expected cost. Exact below the enumeration capacity, sampled (with a
//! reported standard error, never a certified bound) above it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::LpProblem;
use crate::par;
use crate::prob::{config_probability, Configuration, ProbabilityMatrix, MAX_ENUM_USERS};

/// Ceiling for the sampled estimator; per-sample LPs stay tiny.
pub const MAX_SAMPLED_USERS: usize = 20;

/// `min 1^T x  s.t.  A x >= 1, x >= 0` for one configuration's adjacency
/// (self-loops included). The optimum lies in `[1, N]`.
pub fn setcover_lp_value(cfg: &Configuration) -> Result<f64> {
    let n = cfg.n();
    let mut lp = LpProblem::new(n, vec![1.0; n])?;
    for i in 0..n {
        let row: Vec<f64> = (0..n)
            .map(|j| if cfg.has_pair(i, j) { 1.0 } else { 0.0 })
            .collect();
        lp.add_constraint(row, 1.0)?;
    }
    let (optimum, _) = lp.solve()?.optimal()?;
    Ok(optimum)
}

/// Exact weighted bound `sum_k p_k f(k)` over all `2^C(n,2)`
/// configurations.
pub fn weighted_setcover_bound(pm: &ProbabilityMatrix) -> Result<f64> {
    let n = pm.n();
    if n > MAX_ENUM_USERS {
        return Err(Error::Capacity {
            what: "configuration enumeration (users)",
            limit: MAX_ENUM_USERS,
            requested: n,
        });
    }
    let configs: Vec<Configuration> = Configuration::enumerate(n)?.collect();
    let terms = par::try_map_indexed(configs.len(), |k| -> Result<f64> {
        let cfg = &configs[k];
        let weight = config_probability(pm, cfg)?;
        if weight == 0.0 {
            return Ok(0.0);
        }
        Ok(weight * setcover_lp_value(cfg)?)
    })?;
    // Index-ordered sum keeps the value independent of worker count.
    Ok(terms.iter().sum())
}

/// Monte-Carlo estimate of the weighted bound for groups too large to
/// enumerate.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SampledBound {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
}

pub fn weighted_setcover_bound_sampled(
    pm: &ProbabilityMatrix,
    seed: u64,
    samples: u64,
) -> Result<SampledBound> {
    let n = pm.n();
    if n > MAX_SAMPLED_USERS {
        return Err(Error::Capacity {
            what: "sampled set-cover bound (users)",
            limit: MAX_SAMPLED_USERS,
            requested: n,
        });
    }
    if samples == 0 {
        return Err(Error::invalid("sampled bound needs at least one sample"));
    }
    let values = par::try_map_indexed(samples as usize, |s| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        // Draw one adjacency realization; row masks carry the self-loop.
        let mut adjacency: Vec<u32> = (0..n).map(|i| 1u32 << i).collect();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < pm.pair_probability(i, j) {
                    adjacency[i] |= 1 << j;
                    adjacency[j] |= 1 << i;
                }
            }
        }
        let mut lp = LpProblem::new(n, vec![1.0; n])?;
        for i in 0..n {
            let row: Vec<f64> = (0..n)
                .map(|j| if adjacency[i] >> j & 1 == 1 { 1.0 } else { 0.0 })
                .collect();
            lp.add_constraint(row, 1.0)?;
        }
        let (optimum, _) = lp.solve()?.optimal()?;
        Ok(optimum)
    })?;
    let mean = values.iter().sum::<f64>() / samples as f64;
    let var = values
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / (samples as f64 - 1.0).max(1.0);
    Ok(SampledBound {
        mean,
        stderr: (var / samples as f64).sqrt(),
        samples,
    })
}
