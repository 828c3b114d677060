//! The chain JSON format read and written by every CLI command, plus the
//! pair-provenance map emitted next to lifted chains.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::chain::{Distribution, FiniteChain, StateFunction};
use crate::error::{Error, Result};
use crate::lift::ExpandedChain;
use crate::TOL_STOCHASTIC;

/// On-disk chain description:
/// `{"states": [...], "T": [[...]], "pi": [...], "f": [...]}` with matrix
/// rows in state-label order and `pi`/`f` optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainFile {
    pub states: Vec<String>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<f64>>,
}

/// A validated chain file.
#[derive(Debug, Clone)]
pub struct LoadedChain {
    pub chain: FiniteChain,
    pub pi: Option<Distribution>,
    pub f: Option<StateFunction>,
}

impl ChainFile {
    pub fn from_parts(
        chain: &FiniteChain,
        pi: Option<&Distribution>,
        f: Option<&StateFunction>,
    ) -> Self {
        let n = chain.n_states();
        ChainFile {
            states: chain.states().to_vec(),
            t: (0..n)
                .map(|x| (0..n).map(|y| chain.prob(x, y)).collect())
                .collect(),
            pi: pi.map(|p| p.as_slice().to_vec()),
            f: f.map(|f| f.values().to_vec()),
        }
    }

    /// Validate the file contents at tolerance `tol`.
    pub fn validate(self, tol: f64) -> Result<LoadedChain> {
        let n = self.states.len();
        if self.t.len() != n || self.t.iter().any(|row| row.len() != n) {
            return Err(Error::NotSquare {
                rows: self.t.len(),
                cols: self.t.first().map_or(0, Vec::len),
            });
        }
        let flat: Vec<f64> = self.t.iter().flatten().copied().collect();
        let chain = FiniteChain::validate(self.states, DMatrix::from_row_slice(n, n, &flat), tol)?;
        let pi = self
            .pi
            .map(|p| Distribution::validate(p, tol))
            .transpose()?;
        let f = self.f.map(StateFunction::new).transpose()?;
        if let Some(p) = &pi {
            if p.len() != n {
                return Err(Error::DimensionMismatch {
                    left: p.len(),
                    right: n,
                });
            }
        }
        if let Some(f) = &f {
            if f.len() != n {
                return Err(Error::DimensionMismatch {
                    left: f.len(),
                    right: n,
                });
            }
        }
        Ok(LoadedChain { chain, pi, f })
    }
}

/// Provenance of one pair state of a lifted chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEntry {
    pub index: usize,
    pub first: String,
    pub second: String,
}

/// Map from pair-state indices of a lifted chain back to base states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairMapFile {
    pub base_states: Vec<String>,
    pub pairs: Vec<PairEntry>,
}

impl PairMapFile {
    pub fn from_expanded(expanded: &ExpandedChain) -> Self {
        let base = expanded.base_states();
        PairMapFile {
            base_states: base.to_vec(),
            pairs: expanded
                .pairs()
                .iter()
                .enumerate()
                .map(|(index, &(x, y))| PairEntry {
                    index,
                    first: base[x].clone(),
                    second: base[y].clone(),
                })
                .collect(),
        }
    }
}

/// Serialize an expanded chain into the chain JSON format, labels `"(x|y)"`,
/// with the lifted distribution as `pi`.
pub fn expanded_chain_file(expanded: &ExpandedChain, f: Option<&StateFunction>) -> ChainFile {
    ChainFile::from_parts(expanded.chain(), Some(expanded.lifted_dist()), f)
}

/// Read and validate a chain JSON file.
pub fn read_chain_file(path: &std::path::Path) -> Result<LoadedChain> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::NumericalFailure(format!("cannot read {}: {e}", path.display())))?;
    let file: ChainFile = serde_json::from_str(&text)
        .map_err(|e| Error::NumericalFailure(format!("cannot parse {}: {e}", path.display())))?;
    file.validate(TOL_STOCHASTIC)
}
