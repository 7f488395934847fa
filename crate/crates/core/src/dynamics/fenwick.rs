//! Prefix-sum tree over nonnegative site weights, for sampling a site with
//! probability proportional to its weight.

#[derive(Clone, Debug)]
pub(crate) struct Fenwick {
    tree: Vec<f64>,
    weights: Vec<f64>,
    updates: u64,
}

/// Point updates between full rebuilds; bounds accumulated rounding drift.
const REBUILD_EVERY: u64 = 1 << 20;

impl Fenwick {
    pub(crate) fn new(weights: Vec<f64>) -> Self {
        let mut f = Fenwick { tree: vec![0.0; weights.len() + 1], weights, updates: 0 };
        f.rebuild();
        f
    }

    fn rebuild(&mut self) {
        let n = self.weights.len();
        self.tree.iter_mut().for_each(|t| *t = 0.0);
        for i in 0..n {
            self.tree[i + 1] += self.weights[i];
            let j = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if j <= n {
                let v = self.tree[i + 1];
                self.tree[j] += v;
            }
        }
        self.updates = 0;
    }

    pub(crate) fn set(&mut self, i: usize, w: f64) {
        let delta = w - self.weights[i];
        if delta == 0.0 {
            return;
        }
        self.weights[i] = w;
        self.updates += 1;
        if self.updates >= REBUILD_EVERY {
            self.rebuild();
            return;
        }
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    pub(crate) fn total(&self) -> f64 {
        let mut k = self.weights.len();
        let mut s = 0.0;
        while k > 0 {
            s += self.tree[k];
            k &= k - 1;
        }
        s
    }

    /// Index `i` with `prefix(i) <= target < prefix(i + 1)`, skipping
    /// zero-weight entries.
    pub(crate) fn find(&self, target: f64) -> usize {
        let n = self.weights.len();
        let mut pos = 0;
        let mut rem = target;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        // Rounding can land on a zero-weight entry or past the end.
        let mut i = pos.min(n - 1);
        while self.weights[i] == 0.0 && i > 0 {
            i -= 1;
        }
        while self.weights[i] == 0.0 && i + 1 < n {
            i += 1;
        }
        i
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_search_matches_linear_scan() {
        let w = vec![0.0, 2.0, 0.0, 1.0, 3.0, 0.0, 0.5];
        let mut f = Fenwick::new(w.clone());
        assert_eq!(f.total(), 6.5);
        for (t, expect) in [(0.0, 1), (1.99, 1), (2.0, 3), (2.5, 3), (3.0, 4), (5.99, 4), (6.0, 6), (6.49, 6)] {
            assert_eq!(f.find(t), expect, "target {t}");
        }
        f.set(4, 0.0);
        f.set(0, 1.0);
        assert_eq!(f.total(), 4.5);
        assert_eq!(f.find(0.5), 0);
        assert_eq!(f.find(3.2), 3);
        assert_eq!(f.find(4.0), 6);
    }
}
