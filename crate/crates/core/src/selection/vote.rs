use serde::{Deserialize, Serialize};

use super::{SelectionMethod, SelectionResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    /// Selected column indices, ascending.
    pub indices: Vec<usize>,
    /// Votes received by each column.
    pub tally: Vec<usize>,
    pub quorum: usize,
    pub active_methods: usize,
    /// Nothing reached the quorum; the correlation result was used instead.
    pub fell_back_to_correlation: bool,
}

/// Keeps every column chosen by at least `ceil(active / 2)` of the results.
pub fn ensemble_vote(results: &[SelectionResult], ncols: usize) -> Result<VoteOutcome> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no selection results to vote on".into()));
    }
    let mut tally = vec![0usize; ncols];
    for r in results {
        let mut seen = vec![false; ncols];
        for &i in &r.indices {
            if i >= ncols {
                return Err(Error::param(format!(
                    "{} selected column {i} of {ncols}",
                    r.method.name()
                )));
            }
            if !std::mem::replace(&mut seen[i], true) {
                tally[i] += 1;
            }
        }
    }
    let active = results.len();
    let quorum = active.div_ceil(2);
    let indices: Vec<usize> = (0..ncols).filter(|&i| tally[i] >= quorum).collect();
    if !indices.is_empty() {
        return Ok(VoteOutcome {
            indices,
            tally,
            quorum,
            active_methods: active,
            fell_back_to_correlation: false,
        });
    }
    log::warn!("no feature reached the quorum of {quorum}; using the correlation selection");
    let fc = results
        .iter()
        .find(|r| r.method == SelectionMethod::Correlation)
        .ok_or_else(|| Error::EmptyInput("empty vote and no correlation result".into()))?;
    let mut indices = fc.indices.clone();
    indices.sort_unstable();
    indices.dedup();
    Ok(VoteOutcome {
        indices,
        tally,
        quorum,
        active_methods: active,
        fell_back_to_correlation: true,
    })
}
