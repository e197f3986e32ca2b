//! Polynomial-time caching heuristics and their analytic guarantees.
//!
//! Both heuristics read the probability matrix row-wise, exactly as given:
//! row `i` lists the users whose caches user `i` can tap. On symmetric
//! models the two coincide (each returns the uniform vector
//! `1/(1+(N-1)p)`); on general models they differ and the combined
//! selector picks between them by comparing cheap lower bounds.

use serde::Serialize;

use crate::error::Result;
use crate::lp::LpProblem;
use crate::planner::{symmetric_weights, CacheVector};
use crate::prob::ProbabilityMatrix;

/// Slack allowed when testing the inverse-degree vector against the
/// covering constraints. Round-off from the LP must not flip the branch
/// on exactly-feasible symmetric inputs.
pub const COVER_FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Iad,
    Psc,
    AlgCov,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Iad => "iad",
            Method::Psc => "psc",
            Method::AlgCov => "algcov",
        }
    }
}

/// Which vector the combined selector kept, and why.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgCovBranch {
    /// The inverse-degree vector already covers every row; the covering
    /// optimum is at least as good, so it wins outright.
    IadFeasible,
    /// Inverse-degree bound strictly below the covering optimum.
    IadSmaller,
    /// Covering optimum no larger than the inverse-degree bound (ties
    /// land here).
    PscSmaller,
}

impl AlgCovBranch {
    pub fn summary(self) -> &'static str {
        match self {
            AlgCovBranch::IadFeasible => "PSC selected (IAD feasible in the covering LP)",
            AlgCovBranch::IadSmaller => "IAD selected (smaller lower bound)",
            AlgCovBranch::PscSmaller => "PSC selected (lower bound no larger than IAD's)",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HeuristicResult {
    pub x: CacheVector,
    pub method: Method,
    /// Cheap lower bound on the selected vector's realized cost: the
    /// covering optimum for the LP route, the plain element sum for the
    /// inverse-degree route.
    pub lower_bound_used: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch: Option<AlgCovBranch>,
}

/// Inverse average degree: `x_i = 1 / E(C_i)`.
pub fn iad(pm: &ProbabilityMatrix) -> HeuristicResult {
    let n = pm.n();
    let x: Vec<f64> = (0..n).map(|i| 1.0 / pm.expected_degree(i)).collect();
    let bound = x.iter().sum();
    HeuristicResult {
        x: CacheVector::new(x).expect("inverse degrees are in (0, 1]"),
        method: Method::Iad,
        lower_bound_used: bound,
        branch: None,
    }
}

/// Probabilistic set cover: `min 1^T x  s.t.  P x >= 1, x >= 0`.
///
/// Uniform models skip the solver and return the known optimum
/// `1/(1+(N-1)p)` per user. This is not only a shortcut: at `p = 1` the
/// optimal face is a whole simplex and a vertex solver would return a
/// corner of it, while the uniform point is the one the closed-form
/// analysis (and every downstream symmetric check) expects.
pub fn psc(pm: &ProbabilityMatrix) -> Result<HeuristicResult> {
    let n = pm.n();
    if let Some(p) = pm.uniform_p() {
        let per_user = 1.0 / (1.0 + (n as f64 - 1.0) * p);
        return Ok(HeuristicResult {
            x: CacheVector::uniform(n, per_user)?,
            method: Method::Psc,
            lower_bound_used: n as f64 * per_user,
            branch: None,
        });
    }
    let mut lp = LpProblem::new(n, vec![1.0; n])?;
    for i in 0..n {
        let row: Vec<f64> = (0..n).map(|j| pm.get(i, j)).collect();
        lp.add_constraint(row, 1.0)?;
    }
    let solution = lp.solve()?;
    let (optimum, point) = solution.optimal()?;
    let x: Vec<f64> = point.iter().map(|&v| v.max(0.0)).collect();
    Ok(HeuristicResult {
        x: CacheVector::new(x)?,
        method: Method::Psc,
        lower_bound_used: optimum,
        branch: None,
    })
}

/// Covering-or-inverse-degree selector.
///
/// Computes both candidate vectors; if the inverse-degree vector is
/// itself feasible for the covering constraints the covering optimum
/// cannot lose, so it is returned directly. Otherwise the two lower
/// bounds decide, ties going to the covering vector.
pub fn algcov(pm: &ProbabilityMatrix) -> Result<HeuristicResult> {
    let n = pm.n();
    let psc_result = psc(pm)?;
    let iad_result = iad(pm);

    let iad_feasible = (0..n).all(|i| {
        let coverage: f64 = (0..n)
            .map(|j| pm.get(i, j) * iad_result.x.values()[j])
            .sum();
        coverage >= 1.0 - COVER_FEASIBILITY_TOL
    });

    let (source, branch) = if iad_feasible {
        (psc_result, AlgCovBranch::IadFeasible)
    } else if iad_result.lower_bound_used < psc_result.lower_bound_used {
        (iad_result, AlgCovBranch::IadSmaller)
    } else {
        (psc_result, AlgCovBranch::PscSmaller)
    };
    Ok(HeuristicResult {
        x: source.x,
        method: Method::AlgCov,
        lower_bound_used: source.lower_bound_used,
        branch: Some(branch),
    })
}

/// Analytic lower bound on the optimal expected cost of a uniform model:
/// `N / (1 + (N-1)p)`.
pub fn lower_bound_flb(n: usize, p: f64) -> f64 {
    let nf = n as f64;
    nf / (1.0 + (nf - 1.0) * p)
}

/// Additive worst-case distance of the selector's cost from the optimum.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapReport {
    Symmetric {
        gap: f64,
        /// Probability maximizing the gap for this group size.
        p_star: f64,
        /// `0.25 N`, the cap the maximized gap stays under.
        worst_case: f64,
    },
    Asymmetric {
        gap: f64,
        p_min: f64,
        p_max: f64,
    },
}

impl GapReport {
    pub fn gap(&self) -> f64 {
        match self {
            GapReport::Symmetric { gap, .. } | GapReport::Asymmetric { gap, .. } => *gap,
        }
    }
}

/// `sum_i [1 - i/(1+(N-1)p)]^+ * w_i` with the cluster-size weights of
/// the uniform model.
fn gap_sum(n: usize, p: f64) -> Result<f64> {
    let denom = 1.0 + (n as f64 - 1.0) * p;
    Ok(symmetric_weights(n, p)?
        .iter()
        .enumerate()
        .map(|(idx, w)| {
            let i = (idx + 1) as f64;
            (1.0 - i / denom).max(0.0) * w
        })
        .sum())
}

/// Gap bound for a uniform model, with the maximizing probability and
/// the `0.25 N` cap for context.
pub fn gap_symmetric(n: usize, p: f64) -> Result<GapReport> {
    let nf = n as f64;
    let p_star = if n < 2 {
        0.0
    } else {
        (-nf + (5.0 * nf * nf - 8.0 * nf + 4.0).sqrt()) / (2.0 * (nf - 1.0) * (nf - 1.0))
    };
    Ok(GapReport::Symmetric {
        gap: gap_sum(n, p)?,
        p_star,
        worst_case: 0.25 * nf,
    })
}

/// Gap bound for a general model: the uniform gap at the smallest
/// off-diagonal probability, plus the spread penalty
/// `N(N-1)(p_M - p_m) / ([1+(N-1)p_m][1+(N-1)p_M])`.
pub fn gap_asymmetric(pm: &ProbabilityMatrix) -> Result<GapReport> {
    let n = pm.n();
    if n < 2 {
        return Err(crate::error::Error::invalid(
            "gap bound needs at least two users",
        ));
    }
    let mut p_min = f64::INFINITY;
    let mut p_max = f64::NEG_INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p_min = p_min.min(pm.get(i, j));
                p_max = p_max.max(pm.get(i, j));
            }
        }
    }
    let nf = n as f64;
    let spread = nf * (nf - 1.0) * (p_max - p_min)
        / ((1.0 + (nf - 1.0) * p_min) * (1.0 + (nf - 1.0) * p_max));
    Ok(GapReport::Asymmetric {
        gap: gap_sum(n, p_min)? + spread,
        p_min,
        p_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{
        build_full_lp, evaluate_cost, extract_cache_vector, EvalMode,
    };

    fn star(n: usize) -> ProbabilityMatrix {
        // User 0 meets everyone with certainty; leaves never meet each other.
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = 1.0;
            if i > 0 {
                rows[0][i] = 1.0;
                rows[i][0] = 1.0;
            }
        }
        ProbabilityMatrix::from_entries(rows).unwrap()
    }

    #[test]
    fn iad_uniform_and_star() {
        let unif = ProbabilityMatrix::symmetric(6, 0.2).unwrap();
        let r = iad(&unif);
        for &xi in r.x.values() {
            assert!((xi - 0.5).abs() < 1e-12);
        }
        assert!((r.lower_bound_used - 3.0).abs() < 1e-12);

        let s = iad(&star(5));
        assert!((s.x.values()[0] - 0.2).abs() < 1e-12);
        for i in 1..5 {
            assert!((s.x.values()[i] - 0.5).abs() < 1e-12);
        }
        assert!((s.lower_bound_used - 2.2).abs() < 1e-12);

        let zero = ProbabilityMatrix::symmetric(4, 0.0).unwrap();
        assert!(iad(&zero).x.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn psc_uniform_closed_form() {
        let pm = ProbabilityMatrix::symmetric(3, 0.5).unwrap();
        let r = psc(&pm).unwrap();
        for &xi in r.x.values() {
            assert!((xi - 0.5).abs() < 1e-12);
        }
        assert!((r.lower_bound_used - 1.5).abs() < 1e-12);

        // p = 1 must stay uniform even though the LP face is degenerate.
        let ones = ProbabilityMatrix::symmetric(4, 1.0).unwrap();
        let r1 = psc(&ones).unwrap();
        for &xi in r1.x.values() {
            assert!((xi - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn psc_closed_form_matches_lp_route() {
        // Solve the covering LP directly and compare against the uniform
        // shortcut; this is the oracle the shortcut must agree with.
        for &n in &[2usize, 4, 7] {
            for &p in &[0.1, 0.5, 0.9] {
                let mut lp = LpProblem::new(n, vec![1.0; n]).unwrap();
                for i in 0..n {
                    let row: Vec<f64> = (0..n)
                        .map(|j| if j == i { 1.0 } else { p })
                        .collect();
                    lp.add_constraint(row, 1.0).unwrap();
                }
                let sol = lp.solve().unwrap();
                let (opt, point) = sol.optimal().unwrap();
                let expected = 1.0 / (1.0 + (n as f64 - 1.0) * p);
                assert!(
                    (opt - n as f64 * expected).abs() < 1e-7,
                    "n={n} p={p}: optimum {opt}"
                );
                for &xi in point {
                    assert!((xi - expected).abs() < 1e-7, "n={n} p={p}");
                }
            }
        }
    }

    #[test]
    fn psc_star_concentrates_on_hub() {
        let r = psc(&star(4)).unwrap();
        assert!((r.lower_bound_used - 1.0).abs() < 1e-9);
        assert!((r.x.values()[0] - 1.0).abs() < 1e-9);
        for i in 1..4 {
            assert!(r.x.values()[i].abs() < 1e-9);
        }
        // Covering rows hold at the returned point.
        let pm = star(4);
        for i in 0..4 {
            let cover: f64 = (0..4).map(|j| pm.get(i, j) * r.x.values()[j]).sum();
            assert!(cover >= 1.0 - COVER_FEASIBILITY_TOL);
        }
    }

    #[test]
    fn algcov_branches() {
        let unif = ProbabilityMatrix::symmetric(5, 0.3).unwrap();
        let r = algcov(&unif).unwrap();
        assert_eq!(r.branch, Some(AlgCovBranch::IadFeasible));
        assert_eq!(r.method, Method::AlgCov);
        let expected = 1.0 / (1.0 + 4.0 * 0.3);
        for &xi in r.x.values() {
            assert!((xi - expected).abs() < 1e-12);
        }

        let s = algcov(&star(6)).unwrap();
        assert_eq!(s.branch, Some(AlgCovBranch::PscSmaller));
        assert!((s.x.values()[0] - 1.0).abs() < 1e-9);
        assert!((s.lower_bound_used - 1.0).abs() < 1e-9);

        let single = ProbabilityMatrix::symmetric(1, 0.0).unwrap();
        let one = algcov(&single).unwrap();
        assert!((one.x.values()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn algcov_beats_iad_on_star() {
        let pm = star(4);
        let alg = algcov(&pm).unwrap();
        let naive = iad(&pm);
        let alg_cost = evaluate_cost(&pm, &alg.x, EvalMode::Exact).unwrap();
        let iad_cost = evaluate_cost(&pm, &naive.x, EvalMode::Exact).unwrap();
        assert!(alg_cost.total < iad_cost.total);
        assert!((alg_cost.total - 1.0).abs() < 1e-9);
        assert!((iad_cost.total - 2.5).abs() < 1e-9);
    }

    #[test]
    fn covering_bound_stays_below_optimum() {
        // Random uniform-pair models, where the planner oracle is cheap.
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for n in 2..=4 {
            for _ in 0..25 {
                let mut rows = vec![vec![0.0; n]; n];
                for i in 0..n {
                    rows[i][i] = 1.0;
                    for j in i + 1..n {
                        let p = next();
                        rows[i][j] = p;
                        rows[j][i] = p;
                    }
                }
                let pm = ProbabilityMatrix::from_entries(rows).unwrap();
                let bound = psc(&pm).unwrap().lower_bound_used;
                let lp = build_full_lp(&pm).unwrap();
                let (opt, _) = lp.solve().unwrap().optimal().unwrap();
                assert!(bound <= opt + 1e-6, "n={n}: {bound} > {opt}");
            }
        }
    }

    #[test]
    fn flb_examples() {
        assert!((lower_bound_flb(6, 0.2) - 3.0).abs() < 1e-12);
        assert!((lower_bound_flb(5, 0.0) - 5.0).abs() < 1e-12);
        let flb = lower_bound_flb(4, 0.5);
        assert!((flb - 1.6).abs() < 1e-12);
        let pm = ProbabilityMatrix::symmetric(4, 0.5).unwrap();
        let lp = build_full_lp(&pm).unwrap();
        let (opt, _) = lp.solve().unwrap().optimal().unwrap();
        assert!(flb <= opt + 1e-9);
    }

    #[test]
    fn symmetric_gap_endpoints_and_cap() {
        for n in [2usize, 6, 17] {
            let GapReport::Symmetric { gap: g0, .. } = gap_symmetric(n, 0.0).unwrap() else {
                panic!("wrong variant")
            };
            assert!(g0.abs() < 1e-12);
            let GapReport::Symmetric { gap: g1, .. } = gap_symmetric(n, 1.0).unwrap() else {
                panic!("wrong variant")
            };
            assert!(g1.abs() < 1e-12);

            // Sweep p; the maximum stays under 0.25 N and lands near p_star.
            let mut best = (0.0, 0.0);
            let mut p = 0.0;
            while p <= 1.0 {
                let g = gap_sum(n, p).unwrap();
                if g > best.1 {
                    best = (p, g);
                }
                p += 1e-3;
            }
            let GapReport::Symmetric {
                p_star, worst_case, ..
            } = gap_symmetric(n, best.0).unwrap()
            else {
                panic!("wrong variant")
            };
            assert!(best.1 <= worst_case + 1e-9, "n={n}: {} > {worst_case}", best.1);
            assert!(
                (p_star - best.0).abs() <= 2e-3,
                "n={n}: p_star {p_star} vs sweep argmax {}",
                best.0
            );
        }
    }

    #[test]
    fn symmetric_gap_bounds_realized_gap() {
        for &n in &[2usize, 3, 4] {
            for &p in &[0.15, 0.4, 0.7] {
                let pm = ProbabilityMatrix::symmetric(n, p).unwrap();
                let alg = algcov(&pm).unwrap();
                let cost = evaluate_cost(&pm, &alg.x, EvalMode::Exact).unwrap();
                let lp = build_full_lp(&pm).unwrap();
                let sol = lp.solve().unwrap();
                let (opt, _) = sol.optimal().unwrap();
                let realized = cost.total - opt;
                assert!(realized >= -1e-9);
                assert!(
                    realized <= gap_symmetric(n, p).unwrap().gap() + 1e-6,
                    "n={n} p={p}: {realized}"
                );
            }
        }
    }

    #[test]
    fn asymmetric_gap_reduces_to_symmetric_and_bounds() {
        let pm = ProbabilityMatrix::symmetric(4, 0.3).unwrap();
        let a = gap_asymmetric(&pm).unwrap();
        assert!((a.gap() - gap_symmetric(4, 0.3).unwrap().gap()).abs() < 1e-12);

        // Extreme spread stays finite.
        let extreme = ProbabilityMatrix::from_entries(vec![
            vec![1.0, 0.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let GapReport::Asymmetric { gap, p_min, p_max } = gap_asymmetric(&extreme).unwrap()
        else {
            panic!("wrong variant")
        };
        assert_eq!((p_min, p_max), (0.0, 1.0));
        assert!((gap - 1.0).abs() < 1e-12);

        // Random models: realized gap below the bound, optimum from the
        // full formulation.
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..40 {
            let n = 3;
            let mut rows = vec![vec![0.0; n]; n];
            for i in 0..n {
                rows[i][i] = 1.0;
                for j in 0..n {
                    if i != j {
                        rows[i][j] = next();
                    }
                }
            }
            let pm = ProbabilityMatrix::from_entries(rows).unwrap();
            let alg = algcov(&pm).unwrap();
            let cost = evaluate_cost(&pm, &alg.x, EvalMode::Exact).unwrap();
            let lp = build_full_lp(&pm).unwrap();
            let (opt, _) = lp.solve().unwrap().optimal().unwrap();
            let bound = gap_asymmetric(&pm).unwrap().gap();
            assert!(
                cost.total - opt <= bound + 1e-6,
                "realized {} vs bound {bound}",
                cost.total - opt
            );
        }
    }

    #[test]
    fn extract_helper_round_trip() {
        // extract_cache_vector clips solver round-off below zero.
        let pm = star(4);
        let mut lp = LpProblem::new(4, vec![1.0; 4]).unwrap();
        for i in 0..4 {
            let row: Vec<f64> = (0..4).map(|j| pm.get(i, j)).collect();
            lp.add_constraint(row, 1.0).unwrap();
        }
        let sol = lp.solve().unwrap();
        let cv = extract_cache_vector(&sol, 4).unwrap();
        assert!(cv.values().iter().all(|&v| v >= 0.0));
    }
}
