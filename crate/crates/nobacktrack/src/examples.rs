//! Built-in chains: the line walk, the rectangle walk, the four-state
//! counterexample to Peskun ordering for non-reversible chains, the 3x3
//! decomposition matrices, and seeded random reversible chains for property
//! suites.

use nalgebra::DMatrix;
use rand::Rng;

use crate::chain::{Distribution, FiniteChain, StateFunction};
use crate::error::{Error, Result};
use crate::rng::derive_rng;
use crate::TOL_STOCHASTIC;

/// A named chain together with its stationary distribution and a default
/// function of state.
#[derive(Debug, Clone)]
pub struct ExampleSpec {
    pub name: String,
    pub chain: FiniteChain,
    pub dist: Distribution,
    pub f: StateFunction,
}

/// Random walk on `{1, ..., n}`: probability 1/2 to each neighbour, with
/// probability-1/2 self-loops at both endpoint states. Reversible with
/// respect to the uniform distribution; `f(x) = x`.
pub fn line_walk(n: usize) -> ExampleSpec {
    assert!(n >= 2, "line walk needs at least 2 states");
    let mut t = DMatrix::zeros(n, n);
    for x in 0..n {
        if x > 0 {
            t[(x, x - 1)] = 0.5;
        } else {
            t[(x, x)] = 0.5;
        }
        if x + 1 < n {
            t[(x, x + 1)] = 0.5;
        } else {
            t[(x, x)] = 0.5;
        }
    }
    let chain = FiniteChain::from_matrix(t).expect("line walk matrix is stochastic");
    let f = StateFunction::new((1..=n).map(|x| x as f64).collect()).unwrap();
    ExampleSpec {
        name: format!("line_walk_{n}"),
        chain,
        dist: Distribution::uniform(n),
        f,
    }
}

/// Random walk on an `n` by `m` grid: up, down, left, right each with
/// probability 1/4; moves that would leave the grid stay put instead, so edge
/// states hold self-loops of 1/4 per blocked direction. Reversible with
/// respect to the uniform distribution; `f` is the column index.
pub fn rectangle(n: usize, m: usize) -> ExampleSpec {
    assert!(n >= 2 && m >= 2, "rectangle needs at least 2x2 states");
    let total = n * m;
    let idx = |i: usize, j: usize| i * m + j;
    let mut t = DMatrix::zeros(total, total);
    let mut labels = Vec::with_capacity(total);
    let mut f = Vec::with_capacity(total);
    for i in 0..n {
        for j in 0..m {
            labels.push(format!("({},{})", i + 1, j + 1));
            f.push((i + 1) as f64);
            let x = idx(i, j);
            let moves = [
                (i.checked_sub(1).map(|i2| idx(i2, j))),
                (if i + 1 < n { Some(idx(i + 1, j)) } else { None }),
                (j.checked_sub(1).map(|j2| idx(i, j2))),
                (if j + 1 < m { Some(idx(i, j + 1)) } else { None }),
            ];
            for mv in moves {
                match mv {
                    Some(y) => t[(x, y)] += 0.25,
                    None => t[(x, x)] += 0.25,
                }
            }
        }
    }
    let chain =
        FiniteChain::validate(labels, t, TOL_STOCHASTIC).expect("rectangle matrix is stochastic");
    ExampleSpec {
        name: format!("rectangle_{n}x{m}"),
        chain,
        dist: Distribution::uniform(total),
        f: StateFunction::new(f).unwrap(),
    }
}

/// The four-state counterexample showing that Peskun's ordering fails for
/// non-reversible chains.
///
/// States `(A, top, B, bottom)` with `f = (0, 1, 0, -1)` and stationary
/// probabilities `(1/3, 1/6, 1/3, 1/6)`. The old chain cycles clockwise
/// (`A -> top -> B -> bottom -> A`) with probability-1/2 self-loops at `A`
/// and `B`, so its asymptotic variance is zero. The new chain moves
/// self-loop mass `delta` at `A` to `A -> B` and at `B` to `B -> A`,
/// dominating the old chain off-diagonal yet increasing asymptotic variance.
pub fn peskun_counterexample(delta: f64) -> Result<(ExampleSpec, ExampleSpec)> {
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::DeltaOutOfRange(format!(
            "counterexample delta must be in (0, 1/2], got {delta}"
        )));
    }
    let labels = ["A", "top", "B", "bottom"].map(String::from).to_vec();
    let dist = Distribution::from_vec(vec![1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0, 1.0 / 6.0])?;
    let f = StateFunction::new(vec![0.0, 1.0, 0.0, -1.0])?;
    let old = FiniteChain::validate(
        labels.clone(),
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.5, 0.5, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.5, 0.5, //
                1.0, 0.0, 0.0, 0.0,
            ],
        ),
        TOL_STOCHASTIC,
    )?;
    let new = FiniteChain::validate(
        labels,
        DMatrix::from_row_slice(
            4,
            4,
            &[
                0.5 - delta,
                0.5,
                delta,
                0.0, //
                0.0,
                0.0,
                1.0,
                0.0, //
                delta,
                0.0,
                0.5 - delta,
                0.5, //
                1.0,
                0.0,
                0.0,
                0.0,
            ],
        ),
        TOL_STOCHASTIC,
    )?;
    let old_spec = ExampleSpec {
        name: "counterexample_old".into(),
        chain: old,
        dist: dist.clone(),
        f: f.clone(),
    };
    let new_spec = ExampleSpec {
        name: "counterexample_new".into(),
        chain: new,
        dist,
        f,
    };
    Ok((old_spec, new_spec))
}

/// The printed 3x3 matrices illustrating pairwise decomposition of a
/// dominated reversible pair, all reversible with respect to
/// `pi = (0.4, 0.4, 0.2)`.
#[derive(Debug, Clone)]
pub struct PeskunMatrices {
    pub t: FiniteChain,
    pub middle: FiniteChain,
    pub t_prime: FiniteChain,
    pub pi: Distribution,
}

pub fn peskun_matrices() -> PeskunMatrices {
    let chain = |rows: &[f64]| {
        FiniteChain::from_matrix(DMatrix::from_row_slice(3, 3, rows)).expect("printed matrix")
    };
    PeskunMatrices {
        t: chain(&[0.4, 0.4, 0.2, 0.4, 0.4, 0.2, 0.4, 0.4, 0.2]),
        middle: chain(&[0.3, 0.5, 0.2, 0.5, 0.3, 0.2, 0.4, 0.4, 0.2]),
        t_prime: chain(&[0.3, 0.5, 0.2, 0.5, 0.2, 0.3, 0.4, 0.6, 0.0]),
        pi: Distribution::from_vec(vec![0.4, 0.4, 0.2]).unwrap(),
    }
}

/// Random walk on a weighted undirected graph: `T(x,y) = w(x,y) / sum_z w(x,z)`,
/// reversible with respect to `pi(x)` proportional to the row sums of `w`.
///
/// `weights` must be square, symmetric, nonnegative, with positive row sums.
pub fn weighted_graph_walk(name: &str, weights: &DMatrix<f64>) -> Result<ExampleSpec> {
    let n = weights.nrows();
    if weights.ncols() != n || n == 0 {
        return Err(Error::NotSquare {
            rows: n,
            cols: weights.ncols(),
        });
    }
    let mut strengths = vec![0.0; n];
    for x in 0..n {
        for y in 0..n {
            let w = weights[(x, y)];
            if !w.is_finite() || w < 0.0 {
                return Err(Error::NegativeEntry { row: x, col: y });
            }
            if (w - weights[(y, x)]).abs() > 0.0 {
                return Err(Error::NumericalFailure(format!(
                    "weight matrix is not symmetric at ({x}, {y})"
                )));
            }
            strengths[x] += w;
        }
        if strengths[x] <= 0.0 {
            return Err(Error::NumericalFailure(format!(
                "state {x} has zero total weight"
            )));
        }
    }
    let total: f64 = strengths.iter().sum();
    let mut t = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            t[(x, y)] = weights[(x, y)] / strengths[x];
        }
    }
    let chain = FiniteChain::from_matrix(t)?;
    let dist = Distribution::validate(strengths.iter().map(|s| s / total).collect(), 1e-12)?;
    let f = StateFunction::new((1..=n).map(|x| x as f64).collect())?;
    Ok(ExampleSpec {
        name: name.to_string(),
        chain,
        dist,
        f,
    })
}

/// Seeded random reversible chain on `n_states` states.
///
/// Draws a symmetric weight matrix over a connected random graph (a random
/// spanning tree guarantees connectivity; each remaining edge, self-loops
/// included, appears with probability `density`) and normalizes rows. The
/// result is irreducible and reversible with respect to the reported
/// distribution.
pub fn random_reversible(n_states: usize, density: f64, seed: u64) -> ExampleSpec {
    assert!(n_states >= 2, "need at least 2 states");
    assert!(density > 0.0 && density <= 1.0, "density must be in (0, 1]");
    let mut rng = derive_rng(seed, 0);
    let mut w = DMatrix::zeros(n_states, n_states);
    for i in 1..n_states {
        let j = rng.random_range(0..i);
        let weight = 0.5 + rng.random::<f64>();
        w[(i, j)] = weight;
        w[(j, i)] = weight;
    }
    for x in 0..n_states {
        for y in x..n_states {
            let coin: f64 = rng.random();
            let weight = 0.5 + rng.random::<f64>();
            if w[(x, y)] == 0.0 && coin < density {
                w[(x, y)] = weight;
                w[(y, x)] = weight;
            }
        }
    }
    weighted_graph_walk(&format!("random_reversible_{n_states}_seed{seed}"), &w)
        .expect("construction yields a valid reversible chain")
}

/// Seeded integer-valued function of state with values in `[-5, 5]`.
pub fn random_state_function(n_states: usize, seed: u64) -> StateFunction {
    let mut rng = derive_rng(seed, 1);
    StateFunction::new(
        (0..n_states)
            .map(|_| rng.random_range(-5i32..=5) as f64)
            .collect(),
    )
    .unwrap()
}
