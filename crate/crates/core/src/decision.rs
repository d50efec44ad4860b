use serde::Serialize;

/// The outcome of a multiple-testing procedure over `p` hypotheses.
///
/// `rejected` is sorted. `theta_hat[j] == 1` exactly when `j` is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecisionSet {
    pub rejected: Vec<usize>,
    pub theta_hat: Vec<u8>,
}

impl DecisionSet {
    pub fn empty(p: usize) -> Self {
        Self {
            rejected: Vec::new(),
            theta_hat: vec![0; p],
        }
    }

    pub fn from_indices(p: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut theta_hat = vec![0u8; p];
        for j in indices {
            theta_hat[j] = 1;
        }
        let rejected = theta_hat
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == 1)
            .map(|(j, _)| j)
            .collect();
        Self {
            rejected,
            theta_hat,
        }
    }

    pub fn p(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn len(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.theta_hat.get(j).is_some_and(|&t| t == 1)
    }

    pub fn is_subset_of(&self, other: &DecisionSet) -> bool {
        self.rejected.iter().all(|&j| other.contains(j))
    }
}
