//! Binary indexed tree over f64 weights: point update, prefix sum and
//! cumulative-sum search in O(log n), append in O(log n). Backs the
//! weighted parent sampling of the growth process.

#[derive(Clone, Debug, Default)]
pub struct FenwickTree {
    // 1-indexed; tree[0] unused.
    tree: Vec<f64>,
}

impl FenwickTree {
    pub fn new() -> Self {
        FenwickTree { tree: vec![0.0] }
    }

    pub fn with_capacity(n: usize) -> Self {
        let mut tree = Vec::with_capacity(n + 1);
        tree.push(0.0);
        FenwickTree { tree }
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a new element with the given weight.
    pub fn push(&mut self, weight: f64) {
        let j = self.tree.len(); // 1-based index of the new element
        let lsb = j & j.wrapping_neg();
        // The new cell covers (j − lsb, j]; fold in the already-stored part.
        let covered = if lsb == 1 {
            0.0
        } else {
            self.sum_first(j - 1) - self.sum_first(j - lsb)
        };
        self.tree.push(weight + covered);
    }

    /// Sum of the first `count` elements (1-based count).
    fn sum_first(&self, count: usize) -> f64 {
        let mut j = count.min(self.len());
        let mut sum = 0.0;
        while j > 0 {
            sum += self.tree[j];
            j -= j & j.wrapping_neg();
        }
        sum
    }

    /// Adds `delta` to element `i` (0-based).
    pub fn add(&mut self, i: usize, delta: f64) {
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] += delta;
            j += j & j.wrapping_neg();
        }
    }

    /// Sum of elements 0..=i.
    pub fn prefix_sum(&self, i: usize) -> f64 {
        self.sum_first(i + 1)
    }

    pub fn total(&self) -> f64 {
        self.sum_first(self.len())
    }

    /// Smallest index whose cumulative sum exceeds `target`; clamped to the
    /// last element so that boundary targets (e.g. exactly the total) stay
    /// in range.
    pub fn search(&self, target: f64) -> usize {
        let n = self.len();
        debug_assert!(n > 0);
        let mut pos = 0usize; // number of elements whose cumulative sum ≤ target
        let mut rem = target;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                rem -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }

    /// Rebuilds the structure exactly from per-element weights, cancelling
    /// accumulated floating-point drift.
    pub fn rebuild(&mut self, weights: &[f64]) {
        debug_assert_eq!(weights.len(), self.len());
        self.tree[1..].copy_from_slice(weights);
        for j in 1..self.tree.len() {
            let parent = j + (j & j.wrapping_neg());
            if parent < self.tree.len() {
                self.tree[parent] += self.tree[j];
            }
        }
    }
}
