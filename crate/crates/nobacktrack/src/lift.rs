//! Lifting a reversible chain to the space of directed pairs and suppressing
//! backtracking.
//!
//! The pair space is `{(x, y) : T(x, y) > 0}` with lifted distribution
//! `lp(x, y) = pi(x) T(x, y)`. A lifted transition swaps the two components
//! and then redraws the second with an update kernel `U'_x(y, .)` satisfying,
//! for all `y != z`,
//!
//! ```text
//! T(x, y) U'_x(y, z) = T(x, z) U'_x(z, y)      (pair balance)
//! U'_x(y, z) >= T(x, z)                        (off-current domination)
//! ```
//!
//! With the plain Gibbs kernel `U_x(y, z) = T(x, z)` the lifted chain
//! replicates the base chain; with the modified Gibbs kernel the probability
//! of returning to the previous state drops as far as the two conditions
//! allow, the lifted chain becomes non-reversible (for three or more base
//! states), and the asymptotic variance of second-component averages never
//! exceeds that of the base chain.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::chain::{
    check_detailed_balance, stationary_distribution, Distribution, FiniteChain, StateFunction,
};
use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::variance::sample_index;
use crate::{TOL_LINEAR, TOL_STOCHASTIC};

/// A chain over directed pairs of base states.
#[derive(Debug, Clone)]
pub struct ExpandedChain {
    pairs: Vec<(usize, usize)>,
    chain: FiniteChain,
    lifted_dist: Distribution,
    base_states: Vec<String>,
}

impl ExpandedChain {
    /// The pair states `(previous, current)` in lexicographic order.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair(&self, i: usize) -> (usize, usize) {
        self.pairs[i]
    }

    /// Index of pair `(x, y)`, if it exists.
    pub fn index_of(&self, x: usize, y: usize) -> Option<usize> {
        self.pairs.binary_search(&(x, y)).ok()
    }

    /// The lifted chain over pair states.
    pub fn chain(&self) -> &FiniteChain {
        &self.chain
    }

    /// The lifted stationary distribution `lp(x, y) = pi(x) T(x, y)`.
    pub fn lifted_dist(&self) -> &Distribution {
        &self.lifted_dist
    }

    pub fn base_states(&self) -> &[String] {
        &self.base_states
    }
}

/// Enumerate `{(x, y) : T(x, y) > 0}` in lexicographic index order.
pub fn expand_states(chain: &FiniteChain) -> Vec<(usize, usize)> {
    let n = chain.n_states();
    let mut pairs = Vec::new();
    for x in 0..n {
        for y in 0..n {
            if chain.prob(x, y) > 0.0 {
                pairs.push((x, y));
            }
        }
    }
    pairs
}

/// Lift `dist` to the pair space: probabilities `dist(x) T(x, y)` for each
/// pair, in [`expand_states`] order. Requires the chain to be reversible
/// with respect to `dist`, which makes both pair marginals equal `dist`.
pub fn lift_distribution(chain: &FiniteChain, dist: &Distribution) -> Result<Distribution> {
    if !check_detailed_balance(chain, dist, TOL_LINEAR)? {
        return Err(Error::NotReversible);
    }
    let pairs = expand_states(chain);
    let p = pairs
        .iter()
        .map(|&(x, y)| dist.prob(x) * chain.prob(x, y))
        .collect();
    Distribution::validate(p, TOL_STOCHASTIC)
}

/// Per-anchor update rows for the second component of a pair state.
///
/// For each anchor `x`, a row-stochastic map `U'_x(y, .)` is stored for
/// every `y` with `T(x, y) > 0`, supported on the successors of `x`.
#[derive(Debug, Clone)]
pub struct UpdateKernel {
    succ: Vec<Vec<usize>>,
    rows: Vec<DMatrix<f64>>,
}

impl UpdateKernel {
    /// Build a kernel by evaluating `prob(x, y, z)` on every anchor `x` and
    /// every `y, z` in the successor set of `x`.
    pub fn from_fn(chain: &FiniteChain, prob: impl Fn(usize, usize, usize) -> f64) -> Self {
        let n = chain.n_states();
        let mut succ = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for x in 0..n {
            let s = chain.successors(x);
            let k = s.len();
            let m = DMatrix::from_fn(k, k, |yi, zi| prob(x, s[yi], s[zi]));
            succ.push(s);
            rows.push(m);
        }
        UpdateKernel { succ, rows }
    }

    /// Successor states of anchor `x` (the support of every row of `x`).
    pub fn successors(&self, x: usize) -> &[usize] {
        &self.succ[x]
    }

    /// `U'_x(y, z)`; zero when `z` is outside the support. Panics if `y` is
    /// not a successor of `x`.
    pub fn prob(&self, x: usize, y: usize, z: usize) -> f64 {
        let yi = self.succ[x]
            .binary_search(&y)
            .unwrap_or_else(|_| panic!("no update row for ({x}, {y})"));
        match self.succ[x].binary_search(&z) {
            Ok(zi) => self.rows[x][(yi, zi)],
            Err(_) => 0.0,
        }
    }
}

/// The plain Gibbs update of the second component: `U_x(y, z) = T(x, z)`.
/// Lifting with this kernel replicates the base chain exactly.
pub fn gibbs_kernel(chain: &FiniteChain) -> UpdateKernel {
    UpdateKernel::from_fn(chain, |x, _y, z| chain.prob(x, z))
}

/// The modified Gibbs update that avoids re-drawing the current value:
/// for `z != y`,
///
/// ```text
/// U'_x(y, z) = min[ T(x, z) / (1 - T(x, y)),  T(x, z) / (1 - T(x, z)) ]
/// ```
///
/// with the diagonal completing the row to one. When `T(x, y) = 1` the
/// proposal is never accepted and the row is a point mass at `y`.
pub fn liu_kernel(chain: &FiniteChain) -> UpdateKernel {
    UpdateKernel::from_fn(chain, |x, y, z| {
        let t_xy = chain.prob(x, y);
        if t_xy >= 1.0 {
            return if z == y { 1.0 } else { 0.0 };
        }
        if z != y {
            let t_xz = chain.prob(x, z);
            (t_xz / (1.0 - t_xy)).min(t_xz / (1.0 - t_xz))
        } else {
            // Diagonal: whatever the off-current entries leave over.
            let leftover: f64 = chain
                .successors(x)
                .into_iter()
                .filter(|&w| w != y)
                .map(|w| {
                    let t_xw = chain.prob(x, w);
                    (t_xw / (1.0 - t_xy)).min(t_xw / (1.0 - t_xw))
                })
                .sum();
            (1.0 - leftover).max(0.0)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConditionKind {
    /// Pair balance `T(x,y) U'_x(y,z) = T(x,z) U'_x(z,y)` violated.
    Balance,
    /// Off-current domination `U'_x(y,z) >= T(x,z)` violated.
    Domination,
    /// A kernel row does not sum to one.
    RowSum,
    /// A kernel entry is negative.
    Negative,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionViolation {
    pub anchor: usize,
    pub from: usize,
    pub to: usize,
    pub kind: ConditionKind,
    pub amount: f64,
}

/// Outcome of checking an update kernel against the two kernel conditions
/// plus row stochasticity.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub violations: Vec<ConditionViolation>,
}

impl ConditionReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// List every `(x, y, z)` where `kernel` violates pair balance, off-current
/// domination, nonnegativity, or row stochasticity beyond `tol`.
pub fn verify_update_conditions(
    chain: &FiniteChain,
    kernel: &UpdateKernel,
    tol: f64,
) -> ConditionReport {
    let mut violations = Vec::new();
    for x in 0..chain.n_states() {
        let succ = kernel.successors(x);
        for &y in succ {
            let mut row_sum = 0.0;
            for &z in succ {
                let u = kernel.prob(x, y, z);
                row_sum += u;
                if u < -tol {
                    violations.push(ConditionViolation {
                        anchor: x,
                        from: y,
                        to: z,
                        kind: ConditionKind::Negative,
                        amount: -u,
                    });
                }
                if z == y {
                    continue;
                }
                let balance = chain.prob(x, y) * u - chain.prob(x, z) * kernel.prob(x, z, y);
                if balance.abs() > tol {
                    violations.push(ConditionViolation {
                        anchor: x,
                        from: y,
                        to: z,
                        kind: ConditionKind::Balance,
                        amount: balance.abs(),
                    });
                }
                let deficit = chain.prob(x, z) - u;
                if deficit > tol {
                    violations.push(ConditionViolation {
                        anchor: x,
                        from: y,
                        to: z,
                        kind: ConditionKind::Domination,
                        amount: deficit,
                    });
                }
            }
            if (row_sum - 1.0).abs() > tol {
                violations.push(ConditionViolation {
                    anchor: x,
                    from: y,
                    to: y,
                    kind: ConditionKind::RowSum,
                    amount: (row_sum - 1.0).abs(),
                });
            }
        }
    }
    ConditionReport { violations }
}

fn lift_with(
    chain: &FiniteChain,
    transition: impl Fn(usize, usize, usize) -> f64,
) -> Result<ExpandedChain> {
    let dist = stationary_distribution(chain)?;
    if !check_detailed_balance(chain, &dist, TOL_LINEAR)? {
        return Err(Error::NotReversible);
    }
    let pairs = expand_states(chain);
    let m = pairs.len();
    let index_of = |x: usize, y: usize| pairs.binary_search(&(x, y)).ok();
    let mut t = DMatrix::zeros(m, m);
    for (i, &(x0, x1)) in pairs.iter().enumerate() {
        // Reversibility within tolerance can still leave a one-directional
        // entry of tolerance size; the update row for it does not exist.
        if chain.prob(x1, x0) == 0.0 {
            return Err(Error::NotReversible);
        }
        for z in chain.successors(x1) {
            let j = index_of(x1, z).expect("successor pair exists");
            t[(i, j)] = transition(x1, x0, z);
        }
    }
    let labels = pairs
        .iter()
        .map(|&(x, y)| format!("({}|{})", chain.label(x), chain.label(y)))
        .collect();
    let lifted = FiniteChain::validate(labels, t, TOL_STOCHASTIC)?;
    let lifted_dist = lift_distribution(chain, &dist)?;
    Ok(ExpandedChain {
        pairs,
        chain: lifted,
        lifted_dist,
        base_states: chain.states().to_vec(),
    })
}

/// Lift a reversible chain to the pair space without modifying it:
/// `LT((x0, y0), (x1, y1)) = [x1 = y0] T(x1, y1)`. Second components of the
/// lifted chain are distributed exactly as the base chain's trajectory.
pub fn lift_chain(chain: &FiniteChain) -> Result<ExpandedChain> {
    lift_with(chain, |x1, _x0, y1| chain.prob(x1, y1))
}

/// Lift a reversible chain using an update kernel:
/// `LT'((x0, x1), (y0, y1)) = [x1 = y0] U'_{x1}(x0, y1)`.
///
/// The kernel must satisfy the balance and domination conditions; the
/// resulting chain is irreducible, leaves the lifted distribution invariant,
/// and (with three or more base states and a kernel other than the plain
/// Gibbs one) is non-reversible.
pub fn build_nobacktrack(chain: &FiniteChain, kernel: &UpdateKernel) -> Result<ExpandedChain> {
    let report = verify_update_conditions(chain, kernel, TOL_LINEAR);
    if !report.is_pass() {
        let v = &report.violations[0];
        return Err(Error::KernelConditionViolation(format!(
            "{} violation(s); first: {:?} at anchor {} for ({} -> {}), amount {:.3e}",
            report.violations.len(),
            v.kind,
            v.anchor,
            v.from,
            v.to,
            v.amount
        )));
    }
    lift_with(chain, |x1, x0, y1| kernel.prob(x1, x0, y1))
}

/// Draw the next second-component value from `U'_x(y, .)` of the modified
/// Gibbs kernel without materializing the kernel row.
///
/// Both procedure branches draw proposals `z* ~ T(x, .)` conditioned on
/// `z* != y` and accept with probability `(1 - T(x,y)) / (1 - T(x,z*))`;
/// when `T(x, y) < 1/2` that ratio can exceed one and is clamped, while for
/// `T(x, y) >= 1/2` it never does, so the branches coincide at the 1/2
/// threshold. A rejected proposal keeps the current value `y`.
pub fn sample_update_with(chain: &FiniteChain, x: usize, y: usize, rng: &mut impl Rng) -> usize {
    let t_xy = chain.prob(x, y);
    assert!(
        t_xy > 0.0,
        "current value must be a successor of the anchor"
    );
    if t_xy >= 1.0 - 1e-15 {
        // The proposal is never accepted.
        return y;
    }
    let n = chain.n_states();
    loop {
        let u: f64 = rng.random();
        let z = sample_index((0..n).map(|w| chain.prob(x, w)), u);
        if z == y {
            continue;
        }
        let t_xz = chain.prob(x, z);
        let ratio = (1.0 - t_xy) / (1.0 - t_xz);
        let accept = if t_xy >= 0.5 { ratio } else { ratio.min(1.0) };
        let v: f64 = rng.random();
        return if v < accept { z } else { y };
    }
}

/// Seeded wrapper around [`sample_update_with`].
pub fn sample_update(chain: &FiniteChain, x: usize, y: usize, seed: u64) -> usize {
    let mut rng = derive_rng(seed, 0);
    sample_update_with(chain, x, y, &mut rng)
}

/// Lift a function of base state to pair states by reading the second
/// component: `lf(x, y) = f(y)`.
pub fn lift_function(f: &StateFunction, expanded: &ExpandedChain) -> StateFunction {
    StateFunction::new(expanded.pairs().iter().map(|&(_, y)| f.value(y)).collect())
        .expect("lifted values stay finite")
}
