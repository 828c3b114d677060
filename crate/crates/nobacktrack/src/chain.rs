//! Finite Markov chains: representation, validation, stationary distributions,
//! invariance and detailed-balance checks, irreducibility, and
//! Metropolis-Hastings construction.
//!
//! All types are immutable after construction and safe to share across
//! threads.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::{TOL_LINEAR, TOL_STOCHASTIC};

/// A finite state space with row-stochastic transition probabilities.
///
/// States carry opaque string labels so that derived chains (for example,
/// chains over pairs of states) can embed the labels of their components.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    states: Vec<String>,
    t: DMatrix<f64>,
}

impl FiniteChain {
    /// Validate `t` as a transition matrix and attach state labels.
    ///
    /// Entries within `tol` of the `[0, 1]` bounds are clipped onto the
    /// bounds; rows are **not** renormalized. Row sums must equal 1 within
    /// `tol`.
    pub fn validate(states: Vec<String>, t: DMatrix<f64>, tol: f64) -> Result<Self> {
        if t.nrows() != t.ncols() {
            return Err(Error::NotSquare {
                rows: t.nrows(),
                cols: t.ncols(),
            });
        }
        if t.nrows() == 0 {
            return Err(Error::NotSquare { rows: 0, cols: 0 });
        }
        if states.len() != t.nrows() {
            return Err(Error::DimensionMismatch {
                left: states.len(),
                right: t.nrows(),
            });
        }
        let mut t = t;
        for i in 0..t.nrows() {
            for j in 0..t.ncols() {
                let v = t[(i, j)];
                if !v.is_finite() || v < -tol {
                    return Err(Error::NegativeEntry { row: i, col: j });
                }
            }
            let sum: f64 = t.row(i).iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(Error::RowSumViolation { row: i, sum });
            }
            for j in 0..t.ncols() {
                t[(i, j)] = t[(i, j)].clamp(0.0, 1.0);
            }
        }
        Ok(FiniteChain { states, t })
    }

    /// Validate with default labels `"1"`, `"2"`, ... and tolerance
    /// [`TOL_STOCHASTIC`].
    pub fn from_matrix(t: DMatrix<f64>) -> Result<Self> {
        let states = (1..=t.nrows()).map(|i| i.to_string()).collect();
        Self::validate(states, t, TOL_STOCHASTIC)
    }

    /// Validate a row-major nested array with default labels.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_matrix(DMatrix::from_row_slice(n, n, &flat))
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn label(&self, i: usize) -> &str {
        &self.states[i]
    }

    /// Index of a state label, if present.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.t
    }

    /// Transition probability from state `x` to state `y`.
    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.t[(x, y)]
    }

    /// Indices of states reachable from `x` in one step, ascending.
    pub fn successors(&self, x: usize) -> Vec<usize> {
        (0..self.n_states())
            .filter(|&y| self.t[(x, y)] > 0.0)
            .collect()
    }
}

/// A probability vector aligned with a chain's state ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    p: Vec<f64>,
}

impl Distribution {
    /// Validate `p` as a probability vector: nonnegative entries summing to 1
    /// within `tol`. Entries within `tol` below zero are clipped to zero.
    pub fn validate(p: Vec<f64>, tol: f64) -> Result<Self> {
        let mut p = p;
        let mut sum = 0.0;
        for (i, v) in p.iter_mut().enumerate() {
            if !v.is_finite() || *v < -tol {
                return Err(Error::NegativeEntry { row: 0, col: i });
            }
            *v = v.max(0.0);
            sum += *v;
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::RowSumViolation { row: 0, sum });
        }
        Ok(Distribution { p })
    }

    pub fn from_vec(p: Vec<f64>) -> Result<Self> {
        Self::validate(p, TOL_STOCHASTIC)
    }

    pub fn uniform(n: usize) -> Self {
        Distribution {
            p: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut p = vec![0.0; n];
        p[at] = 1.0;
        Distribution { p }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.p[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    /// Expectation of `f` under this distribution.
    pub fn expectation(&self, f: &StateFunction) -> f64 {
        assert_eq!(self.p.len(), f.len(), "dimension mismatch");
        self.p.iter().zip(f.values()).map(|(p, v)| p * v).sum()
    }
}

/// A real-valued function of state, aligned with a chain's state ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct StateFunction {
    values: Vec<f64>,
}

impl StateFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(
                "state function has non-finite values".into(),
            ));
        }
        Ok(StateFunction { values })
    }

    pub fn constant(n: usize, c: f64) -> Self {
        StateFunction { values: vec![c; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Stationary distribution of `chain`: the probability vector `p` with
/// `pT = p`, computed from the singular linear system with the normalization
/// constraint appended (an SVD solve; no aperiodicity assumption).
///
/// Returns [`Error::NonUniqueStationary`] when the system's null space has
/// dimension greater than one (for example, a chain with two closed
/// communicating classes).
pub fn stationary_distribution(chain: &FiniteChain) -> Result<Distribution> {
    let n = chain.n_states();
    if n == 1 {
        return Ok(Distribution { p: vec![1.0] });
    }
    // A = T^t - I; the stationary vector spans its null space.
    let mut a = chain.t.transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::NumericalFailure("SVD failed to converge".into()))?;
    let sigma_max = svd.singular_values.max();
    let cutoff = TOL_LINEAR * sigma_max.max(1.0);
    let nullity = svd.singular_values.iter().filter(|&&s| s <= cutoff).count();
    if nullity == 0 {
        return Err(Error::NumericalFailure(
            "no stationary vector found within tolerance".into(),
        ));
    }
    if nullity > 1 {
        return Err(Error::NonUniqueStationary { nullity });
    }
    // Null vector = right singular vector of the smallest singular value.
    let mut p: Vec<f64> = v_t.row(n - 1).iter().copied().collect();
    let total: f64 = p.iter().sum();
    if total.abs() < 1e-300 {
        return Err(Error::NumericalFailure(
            "stationary vector sums to zero".into(),
        ));
    }
    for v in p.iter_mut() {
        *v /= total;
        if *v < 0.0 {
            if *v < -TOL_STOCHASTIC {
                return Err(Error::NumericalFailure(
                    "stationary vector has negative entries".into(),
                ));
            }
            *v = 0.0;
        }
    }
    let sum: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= sum;
    }
    let dist = Distribution { p };
    if !check_invariant(chain, &dist, TOL_LINEAR.max(1e-12 * n as f64))? {
        return Err(Error::NumericalFailure(
            "solved vector fails the invariance identity".into(),
        ));
    }
    Ok(dist)
}

/// True iff `max_y |(pT - p)_y| <= tol`.
pub fn check_invariant(chain: &FiniteChain, dist: &Distribution, tol: f64) -> Result<bool> {
    let n = chain.n_states();
    if dist.len() != n {
        return Err(Error::DimensionMismatch {
            left: dist.len(),
            right: n,
        });
    }
    let p = DVector::from_column_slice(dist.as_slice());
    let pt = chain.t.transpose() * &p;
    let max_dev = (pt - p).amax();
    Ok(max_dev <= tol)
}

/// True iff `max_{x,y} |p(x)T(x,y) - p(y)T(y,x)| <= tol` (detailed balance).
pub fn check_detailed_balance(chain: &FiniteChain, dist: &Distribution, tol: f64) -> Result<bool> {
    let n = chain.n_states();
    if dist.len() != n {
        return Err(Error::DimensionMismatch {
            left: dist.len(),
            right: n,
        });
    }
    for x in 0..n {
        for y in (x + 1)..n {
            let flow_xy = dist.prob(x) * chain.prob(x, y);
            let flow_yx = dist.prob(y) * chain.prob(y, x);
            if (flow_xy - flow_yx).abs() > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// True iff the directed graph of positive transition probabilities is
/// strongly connected.
pub fn check_irreducible(chain: &FiniteChain) -> bool {
    let n = chain.n_states();
    let reach = |forward: bool| -> usize {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = stack.pop() {
            for (y, visited) in seen.iter_mut().enumerate() {
                let p = if forward {
                    chain.prob(x, y)
                } else {
                    chain.prob(y, x)
                };
                if p > 0.0 && !*visited {
                    *visited = true;
                    count += 1;
                    stack.push(y);
                }
            }
        }
        count
    };
    reach(true) == n && reach(false) == n
}

/// Metropolis-Hastings chain for `target` from proposal probabilities
/// `proposal`: off-diagonal `T(x,y) = S(x,y) min[1, p(y)S(y,x) / (p(x)S(x,y))]`,
/// with rejected mass absorbed into the diagonal.
///
/// Asymmetric proposal support is allowed: `S(y,x) = 0` forces acceptance 0.
pub fn metropolize(proposal: &FiniteChain, target: &Distribution) -> Result<FiniteChain> {
    let n = proposal.n_states();
    if target.len() != n {
        return Err(Error::DimensionMismatch {
            left: target.len(),
            right: n,
        });
    }
    for x in 0..n {
        if target.prob(x) <= 0.0 {
            return Err(Error::ZeroTargetProbability { state: x });
        }
    }
    let mut t = DMatrix::zeros(n, n);
    for x in 0..n {
        let mut off_diagonal = 0.0;
        for y in 0..n {
            if y == x {
                continue;
            }
            let s_xy = proposal.prob(x, y);
            if s_xy == 0.0 {
                continue;
            }
            let ratio = target.prob(y) * proposal.prob(y, x) / (target.prob(x) * s_xy);
            let p = s_xy * ratio.min(1.0);
            t[(x, y)] = p;
            off_diagonal += p;
        }
        t[(x, x)] = (1.0 - off_diagonal).max(0.0);
    }
    FiniteChain::validate(proposal.states().to_vec(), t, TOL_STOCHASTIC)
}
