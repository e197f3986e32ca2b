//! Pairwise encounter model.
//!
//! A group of `n` users meets pairwise within a deadline window. The model
//! is a matrix of meeting probabilities with unit diagonal; a *meeting
//! configuration* is one realization of the undirected encounter graph, and
//! a *selection vector* names the subset of users a given user ends up
//! connected to.
//!
//! Undirected semantics: the probability that the pair `{i, j}` meets is
//! read from the upper triangle (`entries[min][max]`). Symmetric matrices
//! are unaffected; for asymmetric matrices (which arise as effective relay
//! models, see [`crate::indirect`]) this convention keeps configuration
//! probabilities, neighborhood probabilities, and every formulation built
//! on them mutually consistent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::set::UserSet;

/// Largest group for which full configuration enumeration (`2^C(n,2)`
/// graphs) is supported.
pub const MAX_ENUM_USERS: usize = 6;

/// Pairwise meeting probabilities with unit diagonal, row-major.
#[derive(Clone, PartialEq)]
pub struct ProbabilityMatrix {
    n: usize,
    entries: Vec<f64>,
    symmetric: bool,
}

#[derive(Serialize, Deserialize)]
struct MatrixWire {
    n: usize,
    p: Vec<Vec<f64>>,
}

impl ProbabilityMatrix {
    /// Uniform model: every pair meets with the same probability `p`.
    pub fn symmetric(n: usize, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("matrix needs at least one user"));
        }
        check_probability(p)?;
        let mut entries = vec![p; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Ok(ProbabilityMatrix {
            n,
            entries,
            symmetric: true,
        })
    }

    /// General model from explicit rows. The diagonal must be exactly 1 and
    /// every entry a probability. Asymmetric rows are accepted and recorded
    /// in the symmetry flag.
    pub fn from_entries(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("matrix needs at least one user"));
        }
        let mut entries = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &p) in row.iter().enumerate() {
                check_probability(p)?;
                if i == j && p != 1.0 {
                    return Err(Error::invalid(format!(
                        "diagonal entry ({i},{i}) must be 1, got {p}"
                    )));
                }
                entries[i * n + j] = p;
            }
        }
        let symmetric = (0..n)
            .all(|i| (i + 1..n).all(|j| entries[i * n + j] == entries[j * n + i]));
        Ok(ProbabilityMatrix {
            n,
            entries,
            symmetric,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let wire: MatrixWire = serde_json::from_str(s)?;
        if wire.p.len() != wire.n {
            return Err(Error::DimensionMismatch {
                expected: wire.n,
                got: wire.p.len(),
            });
        }
        Self::from_entries(wire.p)
    }

    pub fn to_json_string(&self) -> String {
        let wire = MatrixWire {
            n: self.n,
            p: (0..self.n)
                .map(|i| self.entries[i * self.n..(i + 1) * self.n].to_vec())
                .collect(),
        };
        serde_json::to_string_pretty(&wire).expect("matrix serializes")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Probability that the undirected pair `{i, j}` meets: the entry at
    /// `(min, max)`. This is the value every configuration-based operation
    /// uses.
    pub fn pair_probability(&self, i: usize, j: usize) -> f64 {
        debug_assert_ne!(i, j);
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.entries[a * self.n + b]
    }

    /// `Some(p)` when the model is uniform: symmetric with every
    /// off-diagonal entry equal.
    pub fn uniform_p(&self) -> Option<f64> {
        if self.n == 1 {
            return Some(0.0);
        }
        if !self.symmetric {
            return None;
        }
        let p = self.entries[1];
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.entries[i * self.n + j] != p {
                    return None;
                }
            }
        }
        Some(p)
    }

    /// Expected deadline-window cluster size seen by user `i`:
    /// `E(C_i) = 1 + sum_{j != i} p_{i,j}` (row sums; for effective relay
    /// models row `i` holds the users `i` reaches).
    pub fn expected_degree(&self, i: usize) -> f64 {
        let row = &self.entries[i * self.n..(i + 1) * self.n];
        1.0 + row
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| p)
            .sum::<f64>()
    }

    /// Submatrix over `users` (order preserved).
    pub fn restricted(&self, users: &[usize]) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::invalid("restriction needs at least one user"));
        }
        for &u in users {
            if u >= self.n {
                return Err(Error::invalid(format!("user {u} out of range")));
            }
        }
        let rows = users
            .iter()
            .map(|&i| users.iter().map(|&j| self.get(i, j)).collect())
            .collect();
        Self::from_entries(rows)
    }

    /// Symmetric copy with both triangles read from the upper one, i.e. the
    /// expected adjacency of the undirected configuration model.
    pub fn symmetrized(&self) -> Self {
        let mut entries = self.entries.clone();
        for i in 0..self.n {
            for j in i + 1..self.n {
                entries[j * self.n + i] = entries[i * self.n + j];
            }
        }
        ProbabilityMatrix {
            n: self.n,
            entries,
            symmetric: true,
        }
    }
}

impl std::fmt::Debug for ProbabilityMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ProbabilityMatrix(n={}", self.n)?;
        for i in 0..self.n {
            write!(f, "; {:?}", &self.entries[i * self.n..(i + 1) * self.n])?;
        }
        write!(f, ")")
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Number of unordered pairs among `n` users.
pub fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Bit slot of pair `{i, j}` (`i < j`) in lexicographic order:
/// `(0,1), (0,2), ..., (0,n-1), (1,2), ...`
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// One realization of the undirected encounter graph, as a bitmask over the
/// `C(n,2)` pair slots. The induced adjacency matrix is symmetric 0/1 with
/// unit diagonal.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Configuration {
    n: usize,
    mask: u32,
}

impl Configuration {
    pub fn from_mask(n: usize, mask: u32) -> Result<Self> {
        if n == 0 || n > MAX_ENUM_USERS {
            return Err(Error::Capacity {
                what: "configuration enumeration (users)",
                limit: MAX_ENUM_USERS,
                requested: n,
            });
        }
        let bits = pair_count(n);
        if bits < 32 && mask >> bits != 0 {
            return Err(Error::invalid(format!(
                "configuration mask {mask:#x} has bits beyond the {bits} pair slots"
            )));
        }
        Ok(Configuration { n, mask })
    }

    /// All `2^C(n,2)` configurations in mask order.
    pub fn enumerate(n: usize) -> Result<impl Iterator<Item = Configuration>> {
        // Validate the cap once; masks below the limit are then well formed.
        Self::from_mask(n, 0)?;
        let count = 1u32 << pair_count(n);
        Ok((0..count).map(move |mask| Configuration { n, mask }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn has_pair(&self, i: usize, j: usize) -> bool {
        if i == j {
            return true;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.mask & (1 << pair_index(self.n, a, b)) != 0
    }

    /// Closed neighborhood of `u` in this graph.
    pub fn neighborhood(&self, u: usize) -> UserSet {
        let mut s = UserSet::singleton(u);
        for j in 0..self.n {
            if j != u && self.has_pair(u, j) {
                s = s.insert(j);
            }
        }
        s
    }
}

/// Nonempty subset of users a given user may end up connected to. Indexed
/// by its membership bitmask, so indices run over `[1 : 2^n - 1]`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct SelectionVector {
    n: usize,
    members: UserSet,
}

impl SelectionVector {
    pub fn new(n: usize, members: UserSet) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("selection vector must be nonempty"));
        }
        if !members.is_subset_of(UserSet::full(n)) {
            return Err(Error::invalid("selection vector has members outside the group"));
        }
        Ok(SelectionVector { n, members })
    }

    /// All `2^n - 1` nonempty selection vectors in mask order.
    pub fn enumerate(n: usize) -> impl Iterator<Item = SelectionVector> {
        debug_assert!(n >= 1 && n <= 32);
        (1..(1u64 << n)).map(move |mask| SelectionVector {
            n,
            members: UserSet(mask as u32),
        })
    }

    pub fn members(&self) -> UserSet {
        self.members
    }

    pub fn index(&self) -> u32 {
        self.members.mask()
    }

    pub fn contains(&self, u: usize) -> bool {
        self.members.contains(u)
    }
}

/// Probability of one exact encounter graph: product over pairs present of
/// `p_{i,j}` times product over pairs absent of `1 - p_{i,j}`.
pub fn config_probability(pm: &ProbabilityMatrix, cfg: &Configuration) -> Result<f64> {
    if pm.n() != cfg.n() {
        return Err(Error::DimensionMismatch {
            expected: pm.n(),
            got: cfg.n(),
        });
    }
    let n = pm.n();
    let mut prob = 1.0;
    for i in 0..n {
        for j in i + 1..n {
            let p = pm.pair_probability(i, j);
            prob *= if cfg.has_pair(i, j) { p } else { 1.0 - p };
        }
    }
    Ok(prob)
}

/// Probability that user `u` is connected to all and only the users in
/// `sv`: `prod_{j in sv \ {u}} p_{u,j} * prod_{j not in sv} (1 - p_{u,j})`.
/// Returns 0 when `u` is not a member of `sv`.
pub fn exact_neighborhood_probability(
    pm: &ProbabilityMatrix,
    u: usize,
    sv: &SelectionVector,
) -> Result<f64> {
    if pm.n() != sv.n {
        return Err(Error::DimensionMismatch {
            expected: pm.n(),
            got: sv.n,
        });
    }
    if u >= pm.n() {
        return Err(Error::invalid(format!("user {u} out of range")));
    }
    if !sv.contains(u) {
        return Ok(0.0);
    }
    let mut prob = 1.0;
    for j in 0..pm.n() {
        if j == u {
            continue;
        }
        let p = pm.pair_probability(u, j);
        prob *= if sv.contains(j) { p } else { 1.0 - p };
    }
    Ok(prob)
}
