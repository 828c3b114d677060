//! Asymptotic variance of Markov chain time-average estimators.
//!
//! The exact route solves the Poisson equation `(I - T) g = f - mu` with
//! `pi . g = 0`, giving `V = sum_x pi(x) f_c(x) (2 g(x) - f_c(x))`. This is
//! valid for reversible and non-reversible chains, periodic and aperiodic,
//! as long as the chain is irreducible. The empirical route replicates
//! seeded simulations started exactly from the stationary distribution.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{
    check_invariant, check_irreducible, stationary_distribution, Distribution, FiniteChain,
    StateFunction,
};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, derive_seed};
use crate::TOL_LINEAR;

/// A realized path of state indices, with the seed that produced it and
/// optional per-transition delta marks.
#[derive(Debug, Clone)]
pub struct Trajectory {
    states: Vec<usize>,
    seed: u64,
    marks: Option<Vec<bool>>,
}

impl Trajectory {
    pub(crate) fn new(states: Vec<usize>, seed: u64, marks: Option<Vec<bool>>) -> Self {
        if let Some(m) = &marks {
            assert_eq!(m.len() + 1, states.len(), "one mark per transition");
        }
        Trajectory {
            states,
            seed,
            marks,
        }
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-transition delta marks, when the trajectory came from a coupled
    /// simulation.
    pub fn marks(&self) -> Option<&[bool]> {
        self.marks.as_deref()
    }
}

/// Exact and empirical asymptotic variance side by side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceReport {
    pub exact: f64,
    pub empirical: f64,
    #[serde(rename = "stderr")]
    pub empirical_stderr: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

/// Initial condition for a simulated trajectory.
#[derive(Debug, Clone)]
pub enum InitialState {
    State(usize),
    Draw(Distribution),
}

/// Pick the state whose interval of `[0, 1)` contains `u`, with intervals
/// laid out in state order.
pub(crate) fn sample_index(probs: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, p) in probs.enumerate() {
        if p > 0.0 {
            last_positive = j;
        }
        acc += p;
        if u < acc {
            return j;
        }
    }
    // u landed at or beyond the accumulated total (rounding); use the last
    // state with positive probability.
    last_positive
}

fn sample_row(chain: &FiniteChain, x: usize, u: f64) -> usize {
    let n = chain.n_states();
    sample_index((0..n).map(|y| chain.prob(x, y)), u)
}

/// Simulate `n` states of `chain`, reproducibly for a given
/// `(chain, n, seed, init)`. Transitions are drawn by inverse CDF over the
/// interval partition of `[0, 1)` in state order.
pub fn simulate(
    chain: &FiniteChain,
    n: usize,
    seed: u64,
    init: &InitialState,
) -> Result<Trajectory> {
    assert!(n >= 1, "need at least one state");
    let mut rng = derive_rng(seed, 0);
    let first = match init {
        InitialState::State(i) => {
            if *i >= chain.n_states() {
                return Err(Error::InvalidInit);
            }
            *i
        }
        InitialState::Draw(dist) => {
            if dist.len() != chain.n_states() {
                return Err(Error::InvalidInit);
            }
            let u: f64 = rng.random();
            sample_index(dist.as_slice().iter().copied(), u)
        }
    };
    let mut states = Vec::with_capacity(n);
    states.push(first);
    let mut x = first;
    for _ in 1..n {
        let u: f64 = rng.random();
        x = sample_row(chain, x, u);
        states.push(x);
    }
    Ok(Trajectory::new(states, seed, None))
}

/// Arithmetic mean of `f` over the visited states.
pub fn empirical_estimate(traj: &Trajectory, f: &StateFunction) -> f64 {
    assert!(!traj.is_empty(), "trajectory must be non-empty");
    let sum: f64 = traj.states().iter().map(|&x| f.value(x)).sum();
    sum / traj.len() as f64
}

/// Solve the Poisson equation: returns `g` with `(I - T) g = f_c` and
/// `pi . g = 0`, where `f_c = f - (pi . f) 1`.
///
/// Implemented through the fundamental-matrix system
/// `(I - T + 1 pi^t) g = f_c`, which is nonsingular for irreducible chains
/// and pins `pi . g = 0` automatically; one step of iterative refinement
/// keeps the residual below [`TOL_LINEAR`].
pub fn solve_poisson(
    chain: &FiniteChain,
    dist: &Distribution,
    f: &StateFunction,
) -> Result<StateFunction> {
    let n = chain.n_states();
    if dist.len() != n || f.len() != n {
        return Err(Error::DimensionMismatch {
            left: dist.len().max(f.len()),
            right: n,
        });
    }
    let pi = DVector::from_column_slice(dist.as_slice());
    let fv = DVector::from_column_slice(f.values());
    let mu = pi.dot(&fv);
    let f_c = fv.map(|v| v - mu);

    let ones = DVector::from_element(n, 1.0);
    let a = DMatrix::identity(n, n) - chain.matrix() + &ones * pi.transpose();
    let lu = a.clone().lu();
    let mut g = lu.solve(&f_c).ok_or(Error::SingularSystem)?;

    let residual_of = |g: &DVector<f64>| -> f64 {
        let r = (g - chain.matrix() * g) - &f_c;
        r.amax().max(pi.dot(g).abs())
    };
    for _ in 0..2 {
        if residual_of(&g) <= TOL_LINEAR {
            break;
        }
        let r = &a * &g - &f_c;
        if let Some(correction) = lu.solve(&r) {
            g -= correction;
        }
    }
    if residual_of(&g) > TOL_LINEAR {
        return Err(Error::NumericalFailure(format!(
            "Poisson residual {} exceeds tolerance",
            residual_of(&g)
        )));
    }
    StateFunction::new(g.iter().copied().collect())
}

/// Exact asymptotic variance of the time-average estimator of `f` for an
/// irreducible chain, via the Poisson equation and the stationary
/// distribution computed from `chain`.
pub fn exact_asymptotic_variance(chain: &FiniteChain, f: &StateFunction) -> Result<f64> {
    if !check_irreducible(chain) {
        return Err(Error::NotIrreducible);
    }
    let dist = stationary_distribution(chain)?;
    asymptotic_variance_with(chain, &dist, f)
}

/// Exact asymptotic variance with an already-known stationary distribution.
pub fn asymptotic_variance_with(
    chain: &FiniteChain,
    dist: &Distribution,
    f: &StateFunction,
) -> Result<f64> {
    if !check_invariant(chain, dist, 1e-9)? {
        return Err(Error::NotStationary);
    }
    let g = solve_poisson(chain, dist, f)?;
    let mu = dist.expectation(f);
    let mut v = 0.0;
    for x in 0..chain.n_states() {
        let fc = f.value(x) - mu;
        v += dist.prob(x) * fc * (2.0 * g.value(x) - fc);
    }
    if v < -TOL_LINEAR {
        return Err(Error::NumericalFailure(format!(
            "asymptotic variance came out negative: {v}"
        )));
    }
    Ok(v.max(0.0))
}

/// Estimate the asymptotic variance empirically: `reps` independent seeded
/// replicates of `n` states each, started exactly from the stationary
/// distribution, reporting `n` times the sample variance of the replicate
/// means alongside the exact value.
pub fn replicated_variance(
    chain: &FiniteChain,
    f: &StateFunction,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<VarianceReport> {
    assert!(reps >= 2, "need at least two replicates");
    if !check_irreducible(chain) {
        return Err(Error::NotIrreducible);
    }
    let dist = stationary_distribution(chain)?;
    let exact = asymptotic_variance_with(chain, &dist, f)?;
    let init = InitialState::Draw(dist);
    let means: Vec<f64> = (0..reps)
        .map(|i| {
            let traj = simulate(chain, n, derive_seed(seed, i as u64), &init)?;
            Ok(empirical_estimate(&traj, f))
        })
        .collect::<Result<_>>()?;
    let empirical = n as f64 * sample_variance(&means);
    let empirical_stderr = empirical * (2.0 / (reps as f64 - 1.0)).sqrt();
    Ok(VarianceReport {
        exact,
        empirical,
        empirical_stderr,
        n,
        reps,
        seed,
    })
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use nalgebra::DMatrix;

    #[test]
    fn poisson_constant_f_gives_zero() {
        let spec = examples::line_walk(5);
        let g = solve_poisson(&spec.chain, &spec.dist, &StateFunction::constant(5, 3.0)).unwrap();
        for x in 0..5 {
            assert!(g.value(x).abs() <= 1e-12);
        }
    }

    #[test]
    fn poisson_iid_chain_gives_centered_f() {
        // Every row equals pi, so T g = 1 (pi . g) = 0 and g = f_c.
        let pi = vec![0.5, 0.3, 0.2];
        let t = DMatrix::from_fn(3, 3, |_, j| pi[j]);
        let chain = FiniteChain::from_matrix(t).unwrap();
        let dist = Distribution::from_vec(pi).unwrap();
        let f = StateFunction::new(vec![2.0, -1.0, 4.0]).unwrap();
        let mu = dist.expectation(&f);
        let g = solve_poisson(&chain, &dist, &f).unwrap();
        for x in 0..3 {
            assert!((g.value(x) - (f.value(x) - mu)).abs() <= 1e-12);
        }
    }

    #[test]
    fn poisson_line_walk_matches_hand_solution() {
        // For f(x) = x on the 5-state line walk, the centered solution is
        // g = (-10, -6, 0, 6, 10).
        let spec = examples::line_walk(5);
        let g = solve_poisson(&spec.chain, &spec.dist, &spec.f).unwrap();
        let expected = [-10.0, -6.0, 0.0, 6.0, 10.0];
        for (x, e) in expected.iter().enumerate() {
            assert!((g.value(x) - e).abs() <= 1e-10);
        }
    }

    #[test]
    fn exact_variance_line_walk_frozen_values() {
        // Hand-solved: V = 2 for N = 3 and V = 94/5 for N = 5 with f(x) = x.
        let v3 =
            exact_asymptotic_variance(&examples::line_walk(3).chain, &examples::line_walk(3).f)
                .unwrap();
        assert!((v3 - 2.0).abs() <= 1e-10);
        let v5 =
            exact_asymptotic_variance(&examples::line_walk(5).chain, &examples::line_walk(5).f)
                .unwrap();
        assert!((v5 - 18.8).abs() <= 1e-10);
    }

    #[test]
    fn exact_variance_constant_f_is_zero() {
        let spec = examples::random_reversible(6, 0.5, 3);
        let v = exact_asymptotic_variance(&spec.chain, &StateFunction::constant(6, 7.0)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn exact_variance_shift_invariant_and_nonnegative() {
        for seed in 0..10 {
            let spec = examples::random_reversible(5, 0.6, seed);
            let f = examples::random_state_function(5, seed);
            let v = exact_asymptotic_variance(&spec.chain, &f).unwrap();
            assert!(v >= 0.0);
            let shifted =
                StateFunction::new(f.values().iter().map(|v| v + 11.5).collect()).unwrap();
            let v2 = exact_asymptotic_variance(&spec.chain, &shifted).unwrap();
            assert!((v - v2).abs() <= 1e-10);
        }
    }

    #[test]
    fn exact_variance_rejects_reducible_chain() {
        let chain = FiniteChain::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let f = StateFunction::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            exact_asymptotic_variance(&chain, &f),
            Err(Error::NotIrreducible)
        ));
    }

    #[test]
    fn simulate_is_reproducible() {
        let spec = examples::line_walk(5);
        let a = simulate(&spec.chain, 1000, 42, &InitialState::State(2)).unwrap();
        let b = simulate(&spec.chain, 1000, 42, &InitialState::State(2)).unwrap();
        assert_eq!(a.states(), b.states());
        let c = simulate(&spec.chain, 1000, 43, &InitialState::State(2)).unwrap();
        assert_ne!(a.states(), c.states());
    }

    #[test]
    fn simulate_rejects_bad_init() {
        let spec = examples::line_walk(3);
        assert!(matches!(
            simulate(&spec.chain, 10, 0, &InitialState::State(3)),
            Err(Error::InvalidInit)
        ));
        assert!(matches!(
            simulate(
                &spec.chain,
                10,
                0,
                &InitialState::Draw(Distribution::uniform(4))
            ),
            Err(Error::InvalidInit)
        ));
    }

    #[test]
    fn simulate_frequencies_near_uniform() {
        let spec = examples::line_walk(5);
        let n = 1_000_000;
        let traj = simulate(&spec.chain, n, 7, &InitialState::Draw(spec.dist.clone())).unwrap();
        let mut counts = [0usize; 5];
        for &x in traj.states() {
            counts[x] += 1;
        }
        // Effective sample size is reduced by autocorrelation (integrated
        // time of order N^2); allow 3 standard errors at that scale.
        let stderr = (0.2 * 0.8 / (n as f64 / 50.0)).sqrt();
        for c in counts {
            let freq = c as f64 / n as f64;
            assert!(
                (freq - 0.2).abs() <= 3.0 * stderr,
                "frequency {freq} too far from 0.2"
            );
        }
    }

    #[test]
    fn empirical_estimate_basics() {
        let spec = examples::line_walk(3);
        let traj = simulate(&spec.chain, 100, 0, &InitialState::State(1)).unwrap();
        let c = empirical_estimate(&traj, &StateFunction::constant(3, 2.5));
        assert_eq!(c, 2.5);
        let single = simulate(&spec.chain, 1, 0, &InitialState::State(2)).unwrap();
        assert_eq!(empirical_estimate(&single, &spec.f), 3.0);
    }

    #[test]
    fn counterexample_partial_means_bounded_by_one_over_n() {
        let (old, _) = examples::peskun_counterexample(0.5).unwrap();
        let traj = simulate(&old.chain, 10_000, 11, &InitialState::State(0)).unwrap();
        let mut sum = 0.0;
        for (t, &x) in traj.states().iter().enumerate() {
            sum += old.f.value(x);
            let n = (t + 1) as f64;
            assert!(
                (sum / n).abs() <= 1.0 / n + 1e-12,
                "bound violated at step {t}"
            );
        }
    }

    #[test]
    fn replicated_variance_iid_chain_matches_var_pi() {
        // Rows all equal to pi: the estimator is an i.i.d. average, so the
        // asymptotic variance is Var_pi(f).
        let pi = vec![0.5, 0.3, 0.2];
        let t = DMatrix::from_fn(3, 3, |_, j| pi[j]);
        let chain = FiniteChain::from_matrix(t).unwrap();
        let f = StateFunction::new(vec![1.0, 2.0, 5.0]).unwrap();
        let report = replicated_variance(&chain, &f, 20_000, 200, 5).unwrap();
        let dist = Distribution::from_vec(pi).unwrap();
        let mu = dist.expectation(&f);
        let var_pi: f64 = (0..3)
            .map(|x| dist.prob(x) * (f.value(x) - mu).powi(2))
            .sum();
        assert!((report.exact - var_pi).abs() <= 1e-10);
        assert!((report.empirical - report.exact).abs() <= 3.0 * report.empirical_stderr);
    }

    #[test]
    fn replicated_variance_line_walk_matches_exact() {
        let spec = examples::line_walk(5);
        let report = replicated_variance(&spec.chain, &spec.f, 100_000, 200, 1).unwrap();
        assert!((report.exact - 18.8).abs() <= 1e-10);
        assert!(
            (report.empirical - report.exact).abs() <= 3.0 * report.empirical_stderr,
            "empirical {} vs exact {} (stderr {})",
            report.empirical,
            report.exact,
            report.empirical_stderr
        );
    }

    #[test]
    fn replicated_variance_converges_when_doubling_n() {
        let spec = examples::line_walk(4);
        let mut within = 0;
        let runs = 20;
        for seed in 0..runs {
            let a = replicated_variance(&spec.chain, &spec.f, 5_000, 100, seed).unwrap();
            let b = replicated_variance(&spec.chain, &spec.f, 10_000, 100, seed + 1000).unwrap();
            let spread = (a.empirical_stderr.powi(2) + b.empirical_stderr.powi(2)).sqrt();
            if (a.empirical - b.empirical).abs() <= 4.0 * spread {
                within += 1;
            }
        }
        assert!(
            within * 100 >= runs * 95,
            "only {within}/{runs} runs stable"
        );
    }

    #[test]
    fn variance_report_serializes_with_stderr_field() {
        let report = VarianceReport {
            exact: 1.0,
            empirical: 1.1,
            empirical_stderr: 0.2,
            n: 10,
            reps: 5,
            seed: 3,
        };
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"stderr\":0.2"));
        assert!(json.contains("\"seed\":3"));
    }
}
