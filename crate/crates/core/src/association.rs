use crate::error::{Error, Result};

/// One serving cell per user, with per-cell loads and weight sums kept in
/// step with the serving vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    serving: Vec<usize>,
    loads: Vec<usize>,
    weight_sums: Vec<f64>,
}

impl Association {
    pub fn new(serving: Vec<usize>, cells: usize, weights: &[f64]) -> Result<Self> {
        if serving.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} serving cells for {} weights",
                serving.len(),
                weights.len()
            )));
        }
        let mut loads = vec![0; cells];
        let mut weight_sums = vec![0.0; cells];
        for (k, &b) in serving.iter().enumerate() {
            if b >= cells {
                return Err(Error::Dimension(format!("user {k} served by cell {b} of {cells}")));
            }
            loads[b] += 1;
            weight_sums[b] += weights[k];
        }
        Ok(Self {
            serving,
            loads,
            weight_sums,
        })
    }

    pub fn serving(&self) -> &[usize] {
        &self.serving
    }

    pub fn serving_cell(&self, user: usize) -> usize {
        self.serving[user]
    }

    pub fn loads(&self) -> &[usize] {
        &self.loads
    }

    pub fn load(&self, cell: usize) -> usize {
        self.loads[cell]
    }

    pub fn weight_sums(&self) -> &[f64] {
        &self.weight_sums
    }

    pub fn user_count(&self) -> usize {
        self.serving.len()
    }

    pub fn cell_count(&self) -> usize {
        self.loads.len()
    }

    /// Moves `user` to `to`, returning the previous serving cell.
    pub fn reassign(&mut self, user: usize, to: usize, weight: f64) -> usize {
        let from = self.serving[user];
        if from != to {
            self.loads[from] -= 1;
            self.weight_sums[from] -= weight;
            self.loads[to] += 1;
            self.weight_sums[to] += weight;
            self.serving[user] = to;
        }
        from
    }

    /// Number of users whose serving cell differs.
    pub fn hamming(&self, other: &Association) -> usize {
        self.serving
            .iter()
            .zip(&other.serving)
            .filter(|(a, b)| a != b)
            .count()
    }
}
