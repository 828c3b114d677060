//! Shared test support: an autocovariance oracle for asymptotic variance
//! that is independent of the Poisson-equation route, and a seeded generator
//! of elementary dominated reversible pairs.

use nalgebra::DVector;
use nobacktrack::blocks::PeskunPair;
use nobacktrack::chain::{Distribution, FiniteChain, StateFunction};
use nobacktrack::examples::random_reversible;
use nobacktrack::rng::derive_seed;

/// Truncated-autocovariance route to the asymptotic variance:
/// `Var_pi(f) + 2 sum_{k>=1} f_c' diag(pi) T^k f_c`, summed until three
/// consecutive increments fall below 1e-12. Diverges on periodic chains;
/// callers must feed aperiodic ones.
#[allow(dead_code)]
pub fn autocovariance_oracle(chain: &FiniteChain, dist: &Distribution, f: &StateFunction) -> f64 {
    let n = chain.n_states();
    let mu: f64 = (0..n).map(|x| dist.prob(x) * f.value(x)).sum();
    let fc = DVector::from_iterator(n, (0..n).map(|x| f.value(x) - mu));
    let weighted = DVector::from_iterator(n, (0..n).map(|x| dist.prob(x) * fc[x]));
    let mut v: f64 = weighted.dot(&fc);
    let mut tk_fc = fc;
    let mut consecutive_small = 0;
    for _ in 1..200_000 {
        tk_fc = chain.matrix() * tk_fc;
        let increment = 2.0 * weighted.dot(&tk_fc);
        v += increment;
        if increment.abs() < 1e-12 {
            consecutive_small += 1;
            if consecutive_small >= 3 {
                return v;
            }
        } else {
            consecutive_small = 0;
        }
    }
    panic!("autocovariance series did not settle; chain is likely periodic");
}

/// Deterministically derive an elementary dominated reversible pair from
/// `attempt_seed`: a random reversible chain plus one elementary step that
/// moves 90% of the feasible diagonal mass between the first state pair that
/// can absorb it. Returns the pair and the two differing states.
#[allow(dead_code)]
pub fn random_dominated_pair(attempt_seed: u64) -> Option<(PeskunPair, usize, usize)> {
    let spec = random_reversible(
        3 + (attempt_seed % 4) as usize,
        0.8,
        derive_seed(1234, attempt_seed),
    );
    let n = spec.chain.n_states();
    let pi = &spec.dist;
    for x in 0..n {
        for y in (x + 1)..n {
            let cap = spec
                .chain
                .prob(x, x)
                .min(spec.chain.prob(y, y) * pi.prob(y) / pi.prob(x));
            if cap > 0.05 {
                let delta_x = 0.9 * cap;
                let delta_y = pi.prob(x) * delta_x / pi.prob(y);
                let mut t = spec.chain.matrix().clone();
                t[(x, x)] -= delta_x;
                t[(x, y)] += delta_x;
                t[(y, y)] -= delta_y;
                t[(y, x)] += delta_y;
                let new = FiniteChain::validate(spec.chain.states().to_vec(), t, 1e-9)
                    .expect("dominated modification stays stochastic");
                let pair = PeskunPair::new(spec.chain.clone(), new, spec.dist.clone())
                    .expect("constructed pair is elementary");
                return Some((pair, x, y));
            }
        }
    }
    None
}

/// First `count` dominated pairs produced by consecutive attempt seeds.
#[allow(dead_code)]
pub fn dominated_pairs(count: usize) -> Vec<(PeskunPair, usize, usize)> {
    let mut out = Vec::with_capacity(count);
    let mut attempt = 0u64;
    while out.len() < count {
        if let Some(p) = random_dominated_pair(attempt) {
            out.push(p);
        }
        attempt += 1;
        assert!(attempt < 10_000, "pair generation stalled");
    }
    out
}
