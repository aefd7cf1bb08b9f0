use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Injective partial map from treated indices to control indices, stored as
/// sorted `(i, j)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct MatchAssignment {
    pairs: Vec<(usize, usize)>,
}

impl MatchAssignment {
    pub fn new(mut pairs: Vec<(usize, usize)>, n_treated: usize, n_control: usize) -> Result<Self> {
        pairs.sort_unstable();
        let mut used_c = vec![false; n_control];
        let mut last_i = None;
        for &(i, j) in &pairs {
            if i >= n_treated {
                return Err(Error::IndexOutOfRange(format!("treated index {i} (N^t={n_treated})")));
            }
            if j >= n_control {
                return Err(Error::IndexOutOfRange(format!("control index {j} (N^c={n_control})")));
            }
            if last_i == Some(i) {
                return Err(Error::DuplicateUse(format!("treated {i}")));
            }
            if std::mem::replace(&mut used_c[j], true) {
                return Err(Error::DuplicateUse(format!("control {j}")));
            }
            last_i = Some(i);
        }
        Ok(MatchAssignment { pairs })
    }

    pub fn empty() -> Self {
        MatchAssignment { pairs: Vec::new() }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn size(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.pairs.binary_search(&(i, j)).is_ok()
    }

    pub fn control_of(&self, i: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == i).map(|p| p.1)
    }
}
