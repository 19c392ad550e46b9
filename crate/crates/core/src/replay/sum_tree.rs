//! Array-backed segment tree keeping sums, minima and maxima of leaf values.

#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    sum: Vec<f64>,
    min: Vec<f64>,
    max: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            sum: vec![0.0; 2 * leaves],
            min: vec![f64::INFINITY; 2 * leaves],
            max: vec![0.0; 2 * leaves],
        }
    }

    /// Sets leaf `index` to `weight` (used for sums and minima) and `raw`
    /// (used for the maximum).
    pub fn set(&mut self, index: usize, weight: f64, raw: f64) {
        let mut i = index + self.leaves;
        self.sum[i] = weight;
        self.min[i] = weight;
        self.max[i] = raw;
        while i > 1 {
            i /= 2;
            let (l, r) = (2 * i, 2 * i + 1);
            self.sum[i] = self.sum[l] + self.sum[r];
            self.min[i] = self.min[l].min(self.min[r]);
            self.max[i] = self.max[l].max(self.max[r]);
        }
    }

    pub fn get(&self, index: usize) -> f64 {
        self.sum[index + self.leaves]
    }

    pub fn total(&self) -> f64 {
        self.sum[1]
    }

    pub fn min_weight(&self) -> f64 {
        self.min[1]
    }

    pub fn max_raw(&self) -> f64 {
        self.max[1]
    }

    /// Leaf whose cumulative-weight interval contains `mass`.
    ///
    /// Never returns a zero-weight leaf while the total is positive, even when
    /// rounding pushes `mass` to or past the total.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut i = 1;
        while i < self.leaves {
            let (l, r) = (2 * i, 2 * i + 1);
            if mass < self.sum[l] || self.sum[r] <= 0.0 {
                i = l;
            } else {
                mass -= self.sum[l];
                i = r;
            }
        }
        i - self.leaves
    }

    /// True when every internal node equals the combination of its children.
    pub fn is_consistent(&self) -> bool {
        (1..self.leaves).all(|i| {
            let (l, r) = (2 * i, 2 * i + 1);
            self.sum[i] == self.sum[l] + self.sum[r]
                && self.min[i] == self.min[l].min(self.min[r])
                && self.max[i] == self.max[l].max(self.max[r])
        })
    }

    pub fn leaf_weights(&self) -> &[f64] {
        &self.sum[self.leaves..]
    }
}
