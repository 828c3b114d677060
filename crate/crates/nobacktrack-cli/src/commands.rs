//! The analyze / lift / compare / blocks subcommands.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};

use nobacktrack::blocks::{
    block_statistics, delta_coupled_simulate, segment_blocks_roles, BlockRoles, BlockStatistics,
    BlockTrace, BlockType, ChainSide, PeskunPair,
};
use nobacktrack::chain::{
    check_detailed_balance, check_invariant, check_irreducible, stationary_distribution,
    StateFunction,
};
use nobacktrack::error::Error;
use nobacktrack::examples::peskun_counterexample;
use nobacktrack::io::{expanded_chain_file, ChainFile, LoadedChain, PairMapFile};
use nobacktrack::lift::{build_nobacktrack, gibbs_kernel, lift_function, liu_kernel};
use nobacktrack::variance::{replicated_variance, VarianceReport};
use nobacktrack::{TOL_LINEAR, TOL_STOCHASTIC};

use crate::output::{num, write_json, Csv};
use crate::{KernelChoice, OutputFormat};

fn load_chain(path: &Path, tol: f64) -> Result<LoadedChain> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ChainFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    file.validate(tol)
        .map_err(|e| anyhow!("{}: {e}", path.display()))
}

#[derive(Debug, Serialize)]
struct AnalyzeReport {
    states: usize,
    stochastic: bool,
    tol: f64,
    irreducible: bool,
    stationary: Option<Vec<f64>>,
    stationary_unique: bool,
    reversible: Option<bool>,
}

pub fn analyze(path: &Path, tol: Option<f64>, out: Option<&Path>) -> Result<bool> {
    let tol = tol.unwrap_or(TOL_STOCHASTIC);
    let loaded = load_chain(path, tol)?;
    let chain = &loaded.chain;
    let irreducible = check_irreducible(chain);
    let (stationary, unique) = match stationary_distribution(chain) {
        Ok(pi) => (Some(pi), true),
        Err(Error::NonUniqueStationary { .. }) => (None, false),
        Err(e) => return Err(e.into()),
    };
    let reversible = match &stationary {
        Some(pi) => Some(check_detailed_balance(chain, pi, TOL_LINEAR)?),
        None => None,
    };
    println!("states: {}", chain.n_states());
    println!("stochastic: true (tol {tol:e})");
    println!("irreducible: {irreducible}");
    match &stationary {
        Some(pi) => {
            let entries: Vec<String> = pi.as_slice().iter().map(|p| format!("{p:.6}")).collect();
            println!("stationary: [{}]", entries.join(", "));
        }
        None => println!("stationary: not unique (multiple closed classes)"),
    }
    match reversible {
        Some(r) => println!("reversible: {r}"),
        None => println!("reversible: n/a"),
    }
    if let Some(out) = out {
        write_json(
            out,
            &AnalyzeReport {
                states: chain.n_states(),
                stochastic: true,
                tol,
                irreducible,
                stationary: stationary.as_ref().map(|p| p.as_slice().to_vec()),
                stationary_unique: unique,
                reversible,
            },
        )?;
    }
    Ok(true)
}

#[derive(Debug, Serialize)]
struct LiftReport {
    kernel: String,
    pairs: usize,
    conditions_pass: bool,
    irreducible: bool,
    leaves_lifted_dist_invariant: bool,
    reversible: bool,
    note: Option<String>,
}

pub fn lift(path: &Path, kernel: KernelChoice, out: Option<&Path>) -> Result<bool> {
    let loaded = load_chain(path, TOL_STOCHASTIC)?;
    let chain = &loaded.chain;
    let (kernel_name, kernel) = match kernel {
        KernelChoice::Liu => ("liu", liu_kernel(chain)),
        KernelChoice::Identity => ("identity", gibbs_kernel(chain)),
    };
    let expanded = match build_nobacktrack(chain, &kernel) {
        Ok(e) => e,
        Err(e @ (Error::NotReversible | Error::KernelConditionViolation(_))) => {
            eprintln!("check failed: {e}");
            return Ok(false);
        }
        Err(e) => return Err(e.into()),
    };
    let irreducible = check_irreducible(expanded.chain());
    let invariant = check_invariant(expanded.chain(), expanded.lifted_dist(), 1e-10)?;
    let reversible = check_detailed_balance(expanded.chain(), expanded.lifted_dist(), 1e-10)?;
    let note = (chain.n_states() == 2 && reversible)
        .then(|| "reversible (two-state exemption)".to_string());

    let out_path = out.map(PathBuf::from).unwrap_or_else(|| {
        let mut name = path.as_os_str().to_owned();
        name.push(".lifted.json");
        PathBuf::from(name)
    });
    let lifted_f = loaded.f.as_ref().map(|f| lift_function(f, &expanded));
    write_json(
        &out_path,
        &expanded_chain_file(&expanded, lifted_f.as_ref()),
    )?;
    let mut pairs_path = out_path.as_os_str().to_owned();
    pairs_path.push(".pairs.json");
    write_json(
        Path::new(&pairs_path),
        &PairMapFile::from_expanded(&expanded),
    )?;

    println!("kernel: {kernel_name}");
    println!("pairs: {}", expanded.n_pairs());
    println!("conditions: pass");
    println!("irreducible: {irreducible}");
    println!("invariant: {invariant}");
    match &note {
        Some(n) => println!("reversible: {n}"),
        None => println!("reversible: {reversible}"),
    }
    println!("wrote {}", out_path.display());
    if let Some(out) = out {
        let mut report_path = out.as_os_str().to_owned();
        report_path.push(".report.json");
        write_json(
            Path::new(&report_path),
            &LiftReport {
                kernel: kernel_name.into(),
                pairs: expanded.n_pairs(),
                conditions_pass: true,
                irreducible,
                leaves_lifted_dist_invariant: invariant,
                reversible,
                note,
            },
        )?;
    }
    Ok(irreducible && invariant)
}

#[derive(Debug, Serialize)]
struct CompareReport {
    seed: u64,
    n: usize,
    reps: usize,
    base: VarianceReport,
    modified: VarianceReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_ratio: Option<f64>,
    ordering_holds: bool,
}

pub fn compare(
    path: &Path,
    f_override: Option<Vec<f64>>,
    n: usize,
    reps: usize,
    seed: u64,
    format: OutputFormat,
    out: Option<&Path>,
) -> Result<bool> {
    let loaded = load_chain(path, TOL_STOCHASTIC)?;
    let chain = &loaded.chain;
    let f = match f_override {
        Some(values) => StateFunction::new(values).map_err(|e| anyhow!("{e}"))?,
        None => loaded.f.clone().unwrap_or_else(|| {
            StateFunction::new((1..=chain.n_states()).map(|x| x as f64).collect()).unwrap()
        }),
    };
    if f.len() != chain.n_states() {
        return Err(anyhow!(
            "f has {} values for {} states",
            f.len(),
            chain.n_states()
        ));
    }
    let expanded = match build_nobacktrack(chain, &liu_kernel(chain)) {
        Ok(e) => e,
        Err(e @ Error::NotReversible) => {
            eprintln!("check failed: {e}");
            return Ok(false);
        }
        Err(e) => return Err(e.into()),
    };
    let base = replicated_variance(chain, &f, n, reps, seed)?;
    let lifted_f = lift_function(&f, &expanded);
    let modified = replicated_variance(expanded.chain(), &lifted_f, n, reps, seed + 1)?;
    // A modified variance at solver-noise scale reads as zero; the ratio is
    // infinite there and omitted from the report.
    let exact_ratio = (modified.exact > 1e-12).then(|| base.exact / modified.exact);
    let ordering_holds = modified.exact <= base.exact + 1e-9;

    println!(
        "          {:>16} {:>16} {:>12}",
        "exact", "empirical", "stderr"
    );
    println!(
        "base      {:>16.8} {:>16.8} {:>12.4}",
        base.exact, base.empirical, base.empirical_stderr
    );
    println!(
        "modified  {:>16.8} {:>16.8} {:>12.4}",
        modified.exact, modified.empirical, modified.empirical_stderr
    );
    match exact_ratio {
        Some(r) => println!("ratio (base/modified exact): {r:.4}"),
        None => println!("ratio (base/modified exact): infinite (modified variance is zero)"),
    }
    println!("ordering holds: {ordering_holds}");
    if let Some(out) = out {
        match format {
            OutputFormat::Json => write_json(
                out,
                &CompareReport {
                    seed,
                    n,
                    reps,
                    base,
                    modified,
                    exact_ratio,
                    ordering_holds,
                },
            )?,
            OutputFormat::Csv => {
                let mut csv =
                    Csv::new(&["chain", "exact", "empirical", "stderr", "n", "reps", "seed"]);
                for (name, r) in [("base", &base), ("modified", &modified)] {
                    csv.row(&[
                        name.into(),
                        num(r.exact),
                        num(r.empirical),
                        num(r.empirical_stderr),
                        r.n.to_string(),
                        r.reps.to_string(),
                        r.seed.to_string(),
                    ]);
                }
                csv.write(out)?;
            }
        }
    }
    Ok(ordering_holds)
}

#[derive(Debug, Deserialize)]
struct PairSpecFile {
    old: ChainFile,
    new: ChainFile,
    a: String,
    b: String,
}

#[derive(Debug, Serialize)]
struct SideSummary {
    blocks: usize,
    trailing_len: usize,
    homogeneous_fraction: f64,
    counts: [usize; 4],
    h_mean: [f64; 4],
    l_mean: [f64; 4],
}

fn side_summary(stats: &BlockStatistics, trace: &BlockTrace) -> SideSummary {
    let mut counts = [0usize; 4];
    let mut h_mean = [0.0; 4];
    let mut l_mean = [0.0; 4];
    for t in BlockType::ALL {
        counts[t.index()] = stats.by_type[t.index()].count;
        h_mean[t.index()] = stats.by_type[t.index()].h_mean;
        l_mean[t.index()] = stats.by_type[t.index()].l_mean;
    }
    SideSummary {
        blocks: stats.total,
        trailing_len: trace.trailing_len,
        homogeneous_fraction: stats.homogeneous_fraction,
        counts,
        h_mean,
        l_mean,
    }
}

#[derive(Debug, Serialize)]
struct BlocksReport {
    seed: u64,
    n: usize,
    classic: bool,
    old: SideSummary,
    new: SideSummary,
    stratification_bound_holds: bool,
    old_boundaries_keep_state: Option<bool>,
    new_boundaries_flip_state: Option<bool>,
    pass: bool,
}

fn trace_csv(trace: &BlockTrace, path: &Path) -> Result<()> {
    let mut csv = Csv::new(&["type", "H", "L"]);
    for b in &trace.blocks {
        csv.row(&[
            b.block_type.to_string(),
            num(b.content_sum),
            b.len.to_string(),
        ]);
    }
    csv.write(path)
}

pub fn blocks(pair_spec: &str, n: usize, seed: u64, out: &Path) -> Result<bool> {
    let (pair, f) = if pair_spec == "counterexample" {
        let (old, new) = peskun_counterexample(0.5)?;
        let f = old.f.clone();
        (PeskunPair::new(old.chain, new.chain, old.dist)?, f)
    } else {
        let text =
            std::fs::read_to_string(pair_spec).with_context(|| format!("reading {pair_spec}"))?;
        let spec: PairSpecFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {pair_spec}"))?;
        let old = spec.old.validate(TOL_STOCHASTIC)?;
        let new = spec.new.validate(TOL_STOCHASTIC)?;
        let a = old
            .chain
            .index_of(&spec.a)
            .ok_or_else(|| anyhow!("state {:?} not found", spec.a))?;
        let b = old
            .chain
            .index_of(&spec.b)
            .ok_or_else(|| anyhow!("state {:?} not found", spec.b))?;
        let dist = match old.pi.clone() {
            Some(pi) => pi,
            None => stationary_distribution(&old.chain)?,
        };
        let f = old.f.clone().unwrap_or_else(|| {
            StateFunction::new((1..=old.chain.n_states()).map(|x| x as f64).collect()).unwrap()
        });
        let pair = PeskunPair::new(old.chain, new.chain, dist)?;
        let d = pair.delta();
        if !(d.source_a == a && d.source_b == b || d.source_a == b && d.source_b == a) {
            return Err(anyhow!(
                "chains differ on rows {} and {}, not on the given states",
                d.source_a,
                d.source_b
            ));
        }
        (pair, f)
    };

    let d = *pair.delta();
    let (old_traj, new_traj) = delta_coupled_simulate(&pair, d.source_a, d.source_b, n, seed)?;
    let roles = BlockRoles::from_delta(&d);
    let old_trace = segment_blocks_roles(&old_traj, &f, &roles, ChainSide::Old)?;
    let new_trace = segment_blocks_roles(&new_traj, &f, &roles, ChainSide::New)?;
    let old_stats = block_statistics(&old_trace)?;
    let new_stats = block_statistics(&new_trace)?;

    let diff = new_stats.count(BlockType::AA) as i64 - new_stats.count(BlockType::BB) as i64;
    let stratification_bound_holds = diff.abs() <= 1;
    // Boundary-state rules are only meaningful state-by-state in the classic
    // framing where sources and targets coincide.
    let (old_keep, new_flip) = if pair.is_classic() {
        let keep = old_traj
            .marks()
            .unwrap()
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m)
            .all(|(t, _)| old_traj.states()[t] == old_traj.states()[t + 1]);
        let flip = new_traj
            .marks()
            .unwrap()
            .iter()
            .enumerate()
            .filter(|&(_, &m)| m)
            .all(|(t, _)| new_traj.states()[t] != new_traj.states()[t + 1]);
        (Some(keep), Some(flip))
    } else {
        (None, None)
    };
    let pass = stratification_bound_holds && old_keep.unwrap_or(true) && new_flip.unwrap_or(true);

    let stem = out.as_os_str().to_owned();
    let with_suffix = |suffix: &str| {
        let mut s = stem.clone();
        s.push(suffix);
        PathBuf::from(s)
    };
    trace_csv(&old_trace, &with_suffix(".old.csv"))?;
    trace_csv(&new_trace, &with_suffix(".new.csv"))?;
    let report = BlocksReport {
        seed,
        n,
        classic: pair.is_classic(),
        old: side_summary(&old_stats, &old_trace),
        new: side_summary(&new_stats, &new_trace),
        stratification_bound_holds,
        old_boundaries_keep_state: old_keep,
        new_boundaries_flip_state: new_flip,
        pass,
    };
    write_json(&with_suffix(".json"), &report)?;

    println!(
        "old: {} blocks (AA {}, AB {}, BA {}, BB {}), h = {:.4}",
        old_stats.total,
        old_stats.count(BlockType::AA),
        old_stats.count(BlockType::AB),
        old_stats.count(BlockType::BA),
        old_stats.count(BlockType::BB),
        old_stats.homogeneous_fraction
    );
    println!(
        "new: {} blocks (AA {}, AB {}, BA {}, BB {}), h = {:.4}",
        new_stats.total,
        new_stats.count(BlockType::AA),
        new_stats.count(BlockType::AB),
        new_stats.count(BlockType::BA),
        new_stats.count(BlockType::BB),
        new_stats.homogeneous_fraction
    );
    println!("|N_AA - N_BB| <= 1 on the new trace: {stratification_bound_holds}");
    if let (Some(keep), Some(flip)) = (old_keep, new_flip) {
        println!("old boundaries keep the state: {keep}");
        println!("new boundaries flip the state: {flip}");
    }
    Ok(pass)
}

/// Shared by the counterexample targets.
pub fn counterexample_pair() -> Result<(PeskunPair, StateFunction)> {
    let (old, new) = peskun_counterexample(0.5)?;
    let f = old.f.clone();
    Ok((PeskunPair::new(old.chain, new.chain, old.dist)?, f))
}

fn parse_example(spec: &str, seed: u64) -> Result<nobacktrack::examples::ExampleSpec> {
    use nobacktrack::examples;
    let m = examples::peskun_matrices();
    let f3 = StateFunction::new(vec![1.0, 2.0, 3.0]).unwrap();
    let matrix_spec =
        |name: &str, chain: nobacktrack::chain::FiniteChain| nobacktrack::examples::ExampleSpec {
            name: name.to_string(),
            dist: m.pi.clone(),
            f: f3.clone(),
            chain,
        };
    let parts: Vec<&str> = spec.split(':').collect();
    Ok(match parts.as_slice() {
        ["line", n] => examples::line_walk(n.parse()?),
        ["rectangle", dims] => {
            let (n, m) = dims
                .split_once('x')
                .ok_or_else(|| anyhow!("rectangle size must look like 6x3"))?;
            examples::rectangle(n.parse()?, m.parse()?)
        }
        ["counterexample-old"] => examples::peskun_counterexample(0.5)?.0,
        ["counterexample-old", delta] => examples::peskun_counterexample(delta.parse()?)?.0,
        ["counterexample-new"] => examples::peskun_counterexample(0.5)?.1,
        ["counterexample-new", delta] => examples::peskun_counterexample(delta.parse()?)?.1,
        ["peskun-t"] => matrix_spec("peskun_t", m.t.clone()),
        ["peskun-middle"] => matrix_spec("peskun_middle", m.middle.clone()),
        ["peskun-t-prime"] => matrix_spec("peskun_t_prime", m.t_prime.clone()),
        ["random", states, density] => {
            examples::random_reversible(states.parse()?, density.parse()?, seed)
        }
        _ => return Err(anyhow!("unknown example {spec:?}")),
    })
}

pub fn export(spec: &str, seed: u64, out: Option<&Path>) -> Result<bool> {
    let example = parse_example(spec, seed)?;
    let file = ChainFile::from_parts(&example.chain, Some(&example.dist), Some(&example.f));
    let path = out
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(format!("{}.json", spec.replace([':', 'x'], "_"))));
    write_json(&path, &file)?;
    println!(
        "wrote {} ({} states)",
        path.display(),
        example.chain.n_states()
    );
    Ok(true)
}
