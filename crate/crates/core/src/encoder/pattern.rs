use std::sync::Arc;

/// Allowed-pair predicate: `|i - j| <= window / 2`, or either side global.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionPattern {
    window: usize,
    global: Vec<bool>,
}

impl AttentionPattern {
    pub fn new(window: usize, global_mask: &[bool]) -> Self {
        Self {
            window,
            global: global_mask.to_vec(),
        }
    }

    /// Pattern with no global positions.
    pub fn local(n: usize, window: usize) -> Self {
        Self::new(window, &vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn is_global(&self, i: usize) -> bool {
        self.global[i]
    }

    pub fn global_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.global[i]).collect()
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) <= self.window / 2 || self.global[i] || self.global[j]
    }

    /// Allowed key positions for query row `i`, ascending.
    pub fn row(&self, i: usize) -> Vec<usize> {
        let n = self.len();
        if self.global[i] {
            return (0..n).collect();
        }
        let half = self.window / 2;
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let mut cols: Vec<usize> = (0..lo).filter(|&j| self.global[j]).collect();
        cols.extend(lo..=hi);
        cols.extend((hi + 1..n).filter(|&j| self.global[j]));
        cols
    }

    pub fn rows(&self) -> Arc<Vec<Vec<usize>>> {
        Arc::new((0..self.len()).map(|i| self.row(i)).collect())
    }

    pub fn pair_count(&self) -> u64 {
        pair_count(self.len(), self.window, &self.global_positions())
    }
}

/// Number of allowed `(i, j)` pairs, counted row by row without
/// materializing the pattern.
pub fn pair_count(n: usize, window: usize, globals: &[usize]) -> u64 {
    let half = window / 2;
    let mut is_global = vec![false; n];
    for &g in globals.iter().filter(|&&g| g < n) {
        is_global[g] = true;
    }
    let n_global = is_global.iter().filter(|&&g| g).count();
    let mut total = 0u64;
    for (i, &global) in is_global.iter().enumerate() {
        if global {
            total += n as u64;
            continue;
        }
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        let in_band = is_global[lo..=hi].iter().filter(|&&g| g).count();
        total += (hi - lo + 1 + n_global - in_band) as u64;
    }
    total
}
