//! Block machinery for comparing a reversible chain against an off-diagonal
//! dominating modification.
//!
//! Two chains that differ on a single elementary step (probability mass
//! `delta_a` moved within one row, mirrored in a second row) can be simulated
//! from one uniform stream, with the differing "delta" transitions marked.
//! Marks cut a trajectory into blocks typed by their boundary states; the
//! modified chain differs from the original only in that its homogeneous
//! block types alternate, i.e. their sampling is stratified. The harnesses
//! here measure block-type frequencies, content laws, and the two
//! asymptotic-variance equivalences that justify the comparison
//! (fixed-block-count versus fixed-length runs, and stratified versus
//! unstratified block streams).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{
    check_invariant, check_irreducible, stationary_distribution, Distribution, FiniteChain,
    StateFunction,
};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, derive_seed};
use crate::stats::z_statistic;
use crate::variance::{sample_index, sample_variance, Trajectory};
use crate::TOL_LINEAR;

/// Block type by boundary roles: first letter is the start role, second the
/// end role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockType {
    AA,
    AB,
    BA,
    BB,
}

impl BlockType {
    fn from_roles(start_a: bool, end_a: bool) -> Self {
        match (start_a, end_a) {
            (true, true) => BlockType::AA,
            (true, false) => BlockType::AB,
            (false, true) => BlockType::BA,
            (false, false) => BlockType::BB,
        }
    }

    pub fn is_homogeneous(self) -> bool {
        matches!(self, BlockType::AA | BlockType::BB)
    }

    pub fn index(self) -> usize {
        match self {
            BlockType::AA => 0,
            BlockType::AB => 1,
            BlockType::BA => 2,
            BlockType::BB => 3,
        }
    }

    pub const ALL: [BlockType; 4] = [BlockType::AA, BlockType::AB, BlockType::BA, BlockType::BB];
}

impl std::fmt::Display for BlockType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BlockType::AA => "AA",
            BlockType::AB => "AB",
            BlockType::BA => "BA",
            BlockType::BB => "BB",
        };
        f.write_str(s)
    }
}

/// Which of the coupled chains a trace came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainSide {
    Old,
    New,
}

/// One complete block: type, content sum `H`, length `L`, and optionally the
/// visited states.
#[derive(Debug, Clone)]
pub struct Block {
    pub block_type: BlockType,
    pub content_sum: f64,
    pub len: usize,
    pub states: Option<Vec<usize>>,
}

/// A trajectory segmented at marked delta transitions. The trailing partial
/// block (after the last mark) is kept separately and excluded from
/// statistics.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    pub blocks: Vec<Block>,
    pub trailing_len: usize,
    pub trailing_sum: f64,
    pub side: ChainSide,
}

/// The four entries on which an elementary pair of chains differs:
/// row `source_a` moves mass `delta_a` from column `target_a` to column
/// `target_b`, and row `source_b` moves `delta_b` from `target_b` to
/// `target_a`.
///
/// In the plain two-state setting sources and targets coincide
/// (`source_a == target_a == A`); for pair-space chains the four states are
/// distinct pair states.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ElementaryDelta {
    pub source_a: usize,
    pub source_b: usize,
    pub target_a: usize,
    pub target_b: usize,
    pub delta_a: f64,
    pub delta_b: f64,
}

/// A dominated pair of chains sharing an invariant distribution and
/// differing by one elementary step.
#[derive(Debug, Clone)]
pub struct PeskunPair {
    old: FiniteChain,
    new: FiniteChain,
    dist: Distribution,
    delta: ElementaryDelta,
}

impl PeskunPair {
    /// Extract the elementary difference between `old` and `new` and verify
    /// that both chains leave `dist` invariant. Entry differences below
    /// [`TOL_LINEAR`] are treated as unchanged.
    pub fn new(old: FiniteChain, new: FiniteChain, dist: Distribution) -> Result<Self> {
        let n = old.n_states();
        if new.n_states() != n || dist.len() != n {
            return Err(Error::DimensionMismatch {
                left: new.n_states(),
                right: n,
            });
        }
        if !check_invariant(&old, &dist, 1e-9)? || !check_invariant(&new, &dist, 1e-9)? {
            return Err(Error::NotStationary);
        }
        let mut rows: Vec<usize> = Vec::new();
        for x in 0..n {
            if (0..n).any(|y| (new.prob(x, y) - old.prob(x, y)).abs() > TOL_LINEAR) {
                rows.push(x);
            }
        }
        if rows.len() != 2 {
            return Err(Error::NotElementaryPair(format!(
                "{} rows differ, expected 2",
                rows.len()
            )));
        }
        let mut decomposed = Vec::new();
        for &r in &rows {
            let mut down = None;
            let mut up = None;
            for y in 0..n {
                let d = new.prob(r, y) - old.prob(r, y);
                if d.abs() <= TOL_LINEAR {
                    continue;
                }
                if d < 0.0 {
                    if down.replace((y, -d)).is_some() {
                        return Err(Error::NotElementaryPair(format!(
                            "row {r} decreases more than one column"
                        )));
                    }
                } else if up.replace((y, d)).is_some() {
                    return Err(Error::NotElementaryPair(format!(
                        "row {r} increases more than one column"
                    )));
                }
            }
            match (down, up) {
                (Some(d), Some(u)) if (d.1 - u.1).abs() <= 1e-9 => {
                    decomposed.push((r, d.0, u.0, d.1))
                }
                _ => {
                    return Err(Error::NotElementaryPair(format!(
                        "row {r} does not move a single mass between two columns"
                    )))
                }
            }
        }
        let (row_a, down_a, up_a, delta_a) = decomposed[0];
        let (row_b, down_b, up_b, delta_b) = decomposed[1];
        if up_a != down_b || up_b != down_a {
            return Err(Error::NotElementaryPair(
                "the two rows do not exchange the same pair of columns".into(),
            ));
        }
        let delta = ElementaryDelta {
            source_a: row_a,
            source_b: row_b,
            target_a: down_a,
            target_b: down_b,
            delta_a,
            delta_b,
        };
        // Invariance of dist under both chains forces the block-start rates
        // to match: dist(source_a) delta_a = dist(source_b) delta_b.
        let lhs = dist.prob(delta.source_a) * delta.delta_a;
        let rhs = dist.prob(delta.source_b) * delta.delta_b;
        if (lhs - rhs).abs() > 1e-9 {
            return Err(Error::NotElementaryPair(format!(
                "block-start rates differ: {lhs} vs {rhs}"
            )));
        }
        Ok(PeskunPair {
            old,
            new,
            dist,
            delta,
        })
    }

    pub fn old(&self) -> &FiniteChain {
        &self.old
    }

    pub fn new_chain(&self) -> &FiniteChain {
        &self.new
    }

    pub fn dist(&self) -> &Distribution {
        &self.dist
    }

    pub fn delta(&self) -> &ElementaryDelta {
        &self.delta
    }

    /// True when the elementary step moves diagonal mass, i.e. the classic
    /// setting where `new` dominates `old` off-diagonal.
    pub fn is_classic(&self) -> bool {
        self.delta.source_a == self.delta.target_a && self.delta.source_b == self.delta.target_b
    }
}

/// Decompose a dominated reversible pair into elementary steps: a sequence
/// `C_1, ..., C_m` (ending at `new`) in which consecutive chains differ on
/// one unordered state pair, every intermediate reversible with respect to
/// `dist`. Pairs are processed in lexicographic order; equal chains give an
/// empty sequence.
pub fn pairwise_decomposition(
    old: &FiniteChain,
    new: &FiniteChain,
    dist: &Distribution,
) -> Result<Vec<FiniteChain>> {
    let n = old.n_states();
    if new.n_states() != n || dist.len() != n {
        return Err(Error::DimensionMismatch {
            left: new.n_states(),
            right: n,
        });
    }
    if !crate::chain::check_detailed_balance(old, dist, TOL_LINEAR)?
        || !crate::chain::check_detailed_balance(new, dist, TOL_LINEAR)?
    {
        return Err(Error::NotReversible);
    }
    for x in 0..n {
        for y in 0..n {
            if x != y && new.prob(x, y) < old.prob(x, y) - TOL_LINEAR {
                return Err(Error::DominationViolation { row: x, col: y });
            }
        }
    }
    let mut steps = Vec::new();
    let mut current = old.matrix().clone();
    for x in 0..n {
        for y in (x + 1)..n {
            let inc_xy = new.prob(x, y) - old.prob(x, y);
            let inc_yx = new.prob(y, x) - old.prob(y, x);
            if inc_xy <= TOL_LINEAR && inc_yx <= TOL_LINEAR {
                continue;
            }
            current[(x, x)] += current[(x, y)] - new.prob(x, y);
            current[(x, y)] = new.prob(x, y);
            current[(y, y)] += current[(y, x)] - new.prob(y, x);
            current[(y, x)] = new.prob(y, x);
            steps.push(FiniteChain::validate(
                old.states().to_vec(),
                current.clone(),
                1e-9,
            )?);
        }
    }
    Ok(steps)
}

/// Interval layout for one row of the coupled simulation: the column that
/// loses delta mass comes first (its interval starts at zero), everything
/// else follows in state order.
struct RowPartition {
    order: Vec<usize>,
    probs: Vec<f64>,
}

impl RowPartition {
    fn natural(chain: &FiniteChain, x: usize) -> Self {
        let order: Vec<usize> = (0..chain.n_states()).collect();
        let probs = order.iter().map(|&y| chain.prob(x, y)).collect();
        RowPartition { order, probs }
    }

    fn delta_first(chain: &FiniteChain, x: usize, first: usize) -> Self {
        let mut order = vec![first];
        order.extend((0..chain.n_states()).filter(|&y| y != first));
        let probs = order.iter().map(|&y| chain.prob(x, y)).collect();
        RowPartition { order, probs }
    }

    fn pick(&self, u: f64) -> usize {
        self.order[sample_index(self.probs.iter().copied(), u)]
    }
}

struct CoupledStepper<'a> {
    pair: &'a PeskunPair,
    partitions: Vec<RowPartition>,
}

impl<'a> CoupledStepper<'a> {
    fn new(pair: &'a PeskunPair) -> Self {
        let d = pair.delta();
        let old = pair.old();
        let partitions = (0..old.n_states())
            .map(|x| {
                if x == d.source_a {
                    RowPartition::delta_first(old, x, d.target_a)
                } else if x == d.source_b {
                    RowPartition::delta_first(old, x, d.target_b)
                } else {
                    RowPartition::natural(old, x)
                }
            })
            .collect();
        CoupledStepper { pair, partitions }
    }

    /// Next state and mark flag for the old chain.
    fn step_old(&self, x: usize, u: f64) -> (usize, bool) {
        let d = self.pair.delta();
        if x == d.source_a && u < d.delta_a {
            (d.target_a, true)
        } else if x == d.source_b && u < d.delta_b {
            (d.target_b, true)
        } else {
            (self.partitions[x].pick(u), false)
        }
    }

    /// Next state and mark flag for the new chain: identical to the old
    /// chain except that the delta zones send the chain to the opposite
    /// target.
    fn step_new(&self, x: usize, u: f64) -> (usize, bool) {
        let d = self.pair.delta();
        if x == d.source_a && u < d.delta_a {
            (d.target_b, true)
        } else if x == d.source_b && u < d.delta_b {
            (d.target_a, true)
        } else {
            (self.partitions[x].pick(u), false)
        }
    }
}

/// Simulate the old and new chain of an elementary pair from one shared
/// uniform stream, marking delta transitions in each.
///
/// `a` and `b` name the two states whose rows differ (role A and role B);
/// both trajectories start from the same block-start state, role A's or role
/// B's target with probability 1/2 each. At any time where the two chains
/// occupy the same state, their transitions agree except on the marked delta
/// zone, where the old chain moves to the same-role target and the new chain
/// to the opposite one.
pub fn delta_coupled_simulate(
    pair: &PeskunPair,
    a: usize,
    b: usize,
    n: usize,
    seed: u64,
) -> Result<(Trajectory, Trajectory)> {
    assert!(n >= 2, "need at least one transition");
    let d = *pair.delta();
    if (a, b) != (d.source_a, d.source_b) {
        return Err(Error::NotElementaryPair(format!(
            "chains differ on rows ({}, {}), not ({a}, {b})",
            d.source_a, d.source_b
        )));
    }
    let stepper = CoupledStepper::new(pair);
    let mut rng = derive_rng(seed, 0);
    let u0: f64 = rng.random();
    let start = if u0 < 0.5 { d.target_a } else { d.target_b };
    let mut old_states = Vec::with_capacity(n);
    let mut new_states = Vec::with_capacity(n);
    let mut old_marks = Vec::with_capacity(n - 1);
    let mut new_marks = Vec::with_capacity(n - 1);
    old_states.push(start);
    new_states.push(start);
    let (mut x_old, mut x_new) = (start, start);
    for _ in 1..n {
        let u: f64 = rng.random();
        let (next_old, mark_old) = stepper.step_old(x_old, u);
        let (next_new, mark_new) = stepper.step_new(x_new, u);
        old_states.push(next_old);
        new_states.push(next_new);
        old_marks.push(mark_old);
        new_marks.push(mark_new);
        x_old = next_old;
        x_new = next_new;
    }
    Ok((
        Trajectory::new(old_states, seed, Some(old_marks)),
        Trajectory::new(new_states, seed, Some(new_marks)),
    ))
}

/// Boundary states delimiting blocks: blocks start at `start_a`/`start_b`
/// and end (at a mark) at `end_a`/`end_b`. In the plain two-state setting
/// all four coincide with the states A and B.
#[derive(Debug, Clone, Copy)]
pub struct BlockRoles {
    pub start_a: usize,
    pub start_b: usize,
    pub end_a: usize,
    pub end_b: usize,
}

impl BlockRoles {
    pub fn classic(a: usize, b: usize) -> Self {
        BlockRoles {
            start_a: a,
            start_b: b,
            end_a: a,
            end_b: b,
        }
    }

    /// Roles for a pair-space elementary difference: blocks start at the
    /// delta targets and end at the delta sources.
    pub fn from_delta(delta: &ElementaryDelta) -> Self {
        BlockRoles {
            start_a: delta.target_a,
            start_b: delta.target_b,
            end_a: delta.source_a,
            end_b: delta.source_b,
        }
    }
}

/// Cut a marked trajectory into typed blocks at its delta transitions, in
/// the plain framing where blocks start and end at states `a` and `b`.
///
/// With no marks at all the whole trajectory is one open block, reported as
/// trailing content.
pub fn segment_blocks(
    traj: &Trajectory,
    f: &StateFunction,
    a: usize,
    b: usize,
    side: ChainSide,
) -> Result<BlockTrace> {
    segment_blocks_roles(traj, f, &BlockRoles::classic(a, b), side)
}

/// [`segment_blocks`] generalized to distinct start and end boundary states
/// (the pair-space framing).
pub fn segment_blocks_roles(
    traj: &Trajectory,
    f: &StateFunction,
    roles: &BlockRoles,
    side: ChainSide,
) -> Result<BlockTrace> {
    let marks = traj.marks().ok_or(Error::NoMarks)?;
    let states = traj.states();
    let mut blocks = Vec::new();
    let mut start = 0usize;
    for (t, &marked) in marks.iter().enumerate() {
        if !marked {
            continue;
        }
        let first = states[start];
        let last = states[t];
        let start_a = if first == roles.start_a {
            true
        } else if first == roles.start_b {
            false
        } else {
            return Err(Error::BoundaryMismatch { at: start });
        };
        let end_a = if last == roles.end_a {
            true
        } else if last == roles.end_b {
            false
        } else {
            return Err(Error::BoundaryMismatch { at: t });
        };
        let content_sum = states[start..=t].iter().map(|&x| f.value(x)).sum();
        blocks.push(Block {
            block_type: BlockType::from_roles(start_a, end_a),
            content_sum,
            len: t - start + 1,
            states: None,
        });
        start = t + 1;
    }
    let trailing_len = states.len() - start;
    let trailing_sum = states[start..].iter().map(|&x| f.value(x)).sum();
    Ok(BlockTrace {
        blocks,
        trailing_len,
        trailing_sum,
        side,
    })
}

/// Per-type counts and first two moments of block content and length.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct TypeStats {
    pub count: usize,
    pub h_mean: f64,
    pub h_var: f64,
    pub l_mean: f64,
    pub l_var: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockStatistics {
    pub total: usize,
    pub by_type: [TypeStats; 4],
    /// Fraction of homogeneous blocks (types AA and BB).
    pub homogeneous_fraction: f64,
}

impl BlockStatistics {
    pub fn count(&self, t: BlockType) -> usize {
        self.by_type[t.index()].count
    }
}

/// Counts and moments by block type. Requires at least one complete block.
pub fn block_statistics(trace: &BlockTrace) -> Result<BlockStatistics> {
    if trace.blocks.is_empty() {
        return Err(Error::NoMarks);
    }
    let mut by_type = [TypeStats::default(); 4];
    let mut hs: [Vec<f64>; 4] = Default::default();
    let mut ls: [Vec<f64>; 4] = Default::default();
    for block in &trace.blocks {
        let i = block.block_type.index();
        hs[i].push(block.content_sum);
        ls[i].push(block.len as f64);
    }
    let mut homogeneous = 0usize;
    for (i, stats) in by_type.iter_mut().enumerate() {
        stats.count = hs[i].len();
        if stats.count > 0 {
            stats.h_mean = hs[i].iter().sum::<f64>() / stats.count as f64;
            stats.l_mean = ls[i].iter().sum::<f64>() / stats.count as f64;
            stats.h_var = sample_variance(&hs[i]);
            stats.l_var = sample_variance(&ls[i]);
        }
        if i == BlockType::AA.index() || i == BlockType::BB.index() {
            homogeneous += stats.count;
        }
    }
    Ok(BlockStatistics {
        total: trace.blocks.len(),
        by_type,
        homogeneous_fraction: homogeneous as f64 / trace.blocks.len() as f64,
    })
}

/// A finite-support law for block content pairs `(H, L)`.
#[derive(Debug, Clone)]
pub struct PairLaw {
    items: Vec<(f64, usize)>,
    probs: Vec<f64>,
}

impl PairLaw {
    pub fn new(items: Vec<(f64, usize)>, probs: Vec<f64>) -> Result<Self> {
        if items.len() != probs.len() || items.is_empty() {
            return Err(Error::DimensionMismatch {
                left: items.len(),
                right: probs.len(),
            });
        }
        if items.iter().any(|&(h, l)| !h.is_finite() || l == 0) {
            return Err(Error::NumericalFailure(
                "content laws need finite H and positive L".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::RowSumViolation { row: 0, sum });
        }
        Ok(PairLaw { items, probs })
    }

    pub fn point_mass(h: f64, l: usize) -> Self {
        PairLaw {
            items: vec![(h, l)],
            probs: vec![1.0],
        }
    }

    fn sample(&self, u: f64) -> (f64, usize) {
        self.items[sample_index(self.probs.iter().copied(), u)]
    }
}

/// Block-law description: homogeneity probability `h` and content laws for
/// AA blocks, BB blocks, and non-homogeneous blocks (AB; BA is its reversal
/// and shares the same `(H, L)` law).
#[derive(Debug, Clone)]
pub struct BlockLawSpec {
    pub h: f64,
    pub q_aa: PairLaw,
    pub q_bb: PairLaw,
    pub q_cross: PairLaw,
}

impl BlockLawSpec {
    pub fn law(&self, t: BlockType) -> &PairLaw {
        match t {
            BlockType::AA => &self.q_aa,
            BlockType::BB => &self.q_bb,
            BlockType::AB | BlockType::BA => &self.q_cross,
        }
    }
}

/// Simulate a block stream directly from its law.
///
/// Old mode: a homogeneous block repeats the previous endpoint's letter; a
/// non-homogeneous block starting at B is an AB block reversed. New mode:
/// the block starts at the opposite of the previous endpoint, so homogeneous
/// blocks alternate between AA and BB. The homogeneity stream depends only
/// on `seed`, so old and new runs with the same seed share it; content draws
/// use side-specific streams.
pub fn stratified_block_simulate(
    law: &BlockLawSpec,
    n_blocks: usize,
    side: ChainSide,
    seed: u64,
) -> BlockTrace {
    assert!(n_blocks >= 1);
    assert!((0.0..=1.0).contains(&law.h), "h must be a probability");
    let mut rng_init = derive_rng(seed, 0);
    let mut rng_hom = derive_rng(seed, 1);
    let mut rng_content = derive_rng(
        seed,
        match side {
            ChainSide::Old => 2,
            ChainSide::New => 3,
        },
    );
    let mut prev_end_a = rng_init.random::<f64>() < 0.5;
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let homogeneous = rng_hom.random::<f64>() < law.h;
        let block_type = match (side, homogeneous, prev_end_a) {
            (ChainSide::Old, true, true) => BlockType::AA,
            (ChainSide::Old, true, false) => BlockType::BB,
            (ChainSide::Old, false, true) => BlockType::AB,
            (ChainSide::Old, false, false) => BlockType::BA,
            (ChainSide::New, true, true) => BlockType::BB,
            (ChainSide::New, true, false) => BlockType::AA,
            (ChainSide::New, false, true) => BlockType::BA,
            (ChainSide::New, false, false) => BlockType::AB,
        };
        let (h, l) = law.law(block_type).sample(rng_content.random());
        prev_end_a = matches!(block_type, BlockType::AA | BlockType::BA);
        blocks.push(Block {
            block_type,
            content_sum: h,
            len: l,
            states: None,
        });
    }
    BlockTrace {
        blocks,
        trailing_len: 0,
        trailing_sum: 0.0,
        side,
    }
}

/// An estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Estimate {
    pub est: f64,
    pub stderr: f64,
}

/// Two scaled-variance estimates side by side with the z statistic of their
/// difference. `pass` is set by the harness that produced the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub old: Estimate,
    pub new: Estimate,
    pub z: f64,
    pub pass: bool,
}

fn scaled_variance_estimate(samples: &[f64], scale: f64) -> Estimate {
    let est = scale * sample_variance(samples);
    Estimate {
        est,
        stderr: est * (2.0 / (samples.len() as f64 - 1.0)).sqrt(),
    }
}

/// Compare the fixed-length estimator (mean of `f` over `n` states) against
/// the fixed-visit-count estimator (mean up to the `ceil(n pi(S))`-th visit
/// to `S`) by replication. The two scaled variances should agree; `pass`
/// requires `|z| < 4`.
pub fn lemma1_check(
    chain: &FiniteChain,
    subset: &[usize],
    f: &StateFunction,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    if !check_irreducible(chain) {
        return Err(Error::NotIrreducible);
    }
    let n_states = chain.n_states();
    let mut in_subset = vec![false; n_states];
    for &s in subset {
        if s >= n_states {
            return Err(Error::InvalidInit);
        }
        in_subset[s] = true;
    }
    let dist = stationary_distribution(chain)?;
    let pi_s: f64 = (0..n_states)
        .filter(|&x| in_subset[x])
        .map(|x| dist.prob(x))
        .sum();
    let k = (n as f64 * pi_s).ceil() as usize;
    let k = k.max(1);

    let mut fixed_time = Vec::with_capacity(reps);
    let mut fixed_count = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut rng = derive_rng(derive_seed(seed, rep as u64), 0);
        let u: f64 = rng.random();
        let mut x = sample_index(dist.as_slice().iter().copied(), u);
        let mut t = 1usize;
        let mut sum = f.value(x);
        let mut visits = usize::from(in_subset[x]);
        let mut sum_at_n = if n == 1 { Some(sum) } else { None };
        let mut tilde = if visits >= k {
            Some(sum / t as f64)
        } else {
            None
        };
        while sum_at_n.is_none() || tilde.is_none() {
            let u: f64 = rng.random();
            x = sample_index((0..n_states).map(|y| chain.prob(x, y)), u);
            t += 1;
            sum += f.value(x);
            if in_subset[x] {
                visits += 1;
            }
            if t == n {
                sum_at_n = Some(sum);
            }
            if tilde.is_none() && visits == k {
                tilde = Some(sum / t as f64);
            }
        }
        fixed_time.push(sum_at_n.unwrap() / n as f64);
        fixed_count.push(tilde.unwrap());
    }
    let old = scaled_variance_estimate(&fixed_time, n as f64);
    let new = scaled_variance_estimate(&fixed_count, n as f64);
    let z = z_statistic(old.est, old.stderr, new.est, new.stderr);
    Ok(ComparisonReport {
        old,
        new,
        z,
        pass: z.abs() < 4.0,
    })
}

/// Compare the ratio estimator over a block-type stream `Z` against the
/// stratified stream `Z'` in which the homogeneous types alternate.
///
/// The `pass` field flags the one-sided check: the stratified variance must
/// not exceed the unstratified one by more than 4 combined standard errors.
pub fn lemma2_check(
    law: &BlockLawSpec,
    rho: &Distribution,
    z_chain: &FiniteChain,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<ComparisonReport> {
    if z_chain.n_states() != 3 || rho.len() != 3 {
        return Err(Error::DimensionMismatch {
            left: z_chain.n_states(),
            right: 3,
        });
    }
    if (rho.prob(0) - rho.prob(1)).abs() > 1e-9 {
        return Err(Error::RhoAsymmetric);
    }
    if !check_irreducible(z_chain) {
        return Err(Error::NotIrreducible);
    }
    if !check_invariant(z_chain, rho, 1e-9)? {
        return Err(Error::NotStationary);
    }
    let law_of = |z: usize| match z {
        0 => &law.q_aa,
        1 => &law.q_bb,
        _ => &law.q_cross,
    };
    let mut plain = Vec::with_capacity(reps);
    let mut stratified = Vec::with_capacity(reps);
    for rep in 0..reps {
        let rep_seed = derive_seed(seed, rep as u64);
        let mut rng_z = derive_rng(rep_seed, 0);
        let mut rng_q = derive_rng(rep_seed, 1);
        let mut rng_q_strat = derive_rng(rep_seed, 2);
        let u: f64 = rng_z.random();
        let mut z = sample_index(rho.as_slice().iter().copied(), u);
        let mut parity: Option<usize> = None;
        let (mut h_sum, mut l_sum) = (0.0, 0.0);
        let (mut h_sum_s, mut l_sum_s) = (0.0, 0.0);
        for i in 0..n {
            if i > 0 {
                let u: f64 = rng_z.random();
                z = sample_index((0..3).map(|y| z_chain.prob(z, y)), u);
            }
            let (h, l) = law_of(z).sample(rng_q.random());
            h_sum += h;
            l_sum += l as f64;
            let z_strat = if z == 2 {
                2
            } else {
                let p = match parity {
                    None => z,
                    Some(prev) => 1 - prev,
                };
                parity = Some(p);
                p
            };
            let (h2, l2) = law_of(z_strat).sample(rng_q_strat.random());
            h_sum_s += h2;
            l_sum_s += l2 as f64;
        }
        plain.push(h_sum / l_sum);
        stratified.push(h_sum_s / l_sum_s);
    }
    let old = scaled_variance_estimate(&plain, n as f64);
    let new = scaled_variance_estimate(&stratified, n as f64);
    let z = z_statistic(old.est, old.stderr, new.est, new.stderr);
    let spread = (old.stderr.powi(2) + new.stderr.powi(2)).sqrt();
    Ok(ComparisonReport {
        old,
        new,
        z,
        pass: new.est <= old.est + 4.0 * spread,
    })
}
