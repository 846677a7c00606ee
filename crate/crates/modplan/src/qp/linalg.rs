//! Sparse symmetric linear algebra for the interior-point engine.
//!
//! The KKT systems solved at every interior-point iteration are sparse,
//! symmetric quasi-definite matrices. They are reordered once with reverse
//! Cuthill-McKee to concentrate the profile near the diagonal and factored
//! with an unpivoted skyline LDL'. Quasi-definiteness (strictly positive
//! diagonal on the primal block, strictly negative on the dual block after
//! regularization) makes the unpivoted factorization well defined; a sign
//! guard bumps pivots that collapse numerically.

/// A sparse vector as sorted `(index, value)` pairs.
pub type SparseVec = Vec<(usize, f64)>;

/// Dot product of a sparse row with a dense vector.
pub fn sparse_dot(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|&(j, v)| v * x[j]).sum()
}

/// Reverse Cuthill-McKee ordering of an undirected graph given as adjacency
/// lists. Returns `order` such that `order[k]` is the original index placed
/// at position `k`. Deterministic: ties break on the lowest index.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(|a| a.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    loop {
        // Lowest-degree unvisited node seeds the next component.
        let mut seed = None;
        for i in 0..n {
            if !visited[i] && seed.map_or(true, |s: usize| degree[i] < degree[s]) {
                seed = Some(i);
            }
        }
        let Some(seed) = seed else { break };

        let mut queue = std::collections::VecDeque::new();
        visited[seed] = true;
        queue.push_back(seed);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adjacency[u]
                .iter()
                .copied()
                .filter(|&v| !visited[v])
                .collect();
            next.sort_by_key(|&v| (degree[v], v));
            for v in next {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Skyline (profile) storage of a symmetric matrix with an LDL'
/// factorization that overwrites the stored values.
pub struct SkylineLdl {
    n: usize,
    /// First stored column of each row.
    first: Vec<usize>,
    /// Start of each row's value run; row `i` spans `first[i]..=i`.
    offsets: Vec<usize>,
    /// Row-major profile values; after `factor`, the strict lower profile
    /// holds L and `diag` holds D.
    values: Vec<f64>,
    diag: Vec<f64>,
    /// Expected pivot sign per row: +1 primal, -1 dual.
    signs: Vec<i8>,
    /// Pivots clamped during the last factorization.
    pub bumped_pivots: usize,
}

impl SkylineLdl {
    /// Allocate the profile for the given structural entries (pairs of
    /// permuted indices; order within a pair does not matter).
    pub fn new(n: usize, entries: impl Iterator<Item = (usize, usize)>, signs: Vec<i8>) -> Self {
        let mut first: Vec<usize> = (0..n).collect();
        for (a, b) in entries {
            let (row, col) = if a >= b { (a, b) } else { (b, a) };
            if col < first[row] {
                first[row] = col;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            offsets.push(total);
            total += i - first[i] + 1;
        }
        offsets.push(total);
        SkylineLdl {
            n,
            first,
            offsets,
            values: vec![0.0; total],
            diag: vec![0.0; n],
            signs,
            bumped_pivots: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Flat slot of entry `(row, col)`, `col <= row`, inside the profile.
    #[inline]
    pub fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col >= self.first[row] && col <= row);
        self.offsets[row] + (col - self.first[row])
    }

    pub fn reset(&mut self) {
        self.values.fill(0.0);
    }

    #[inline]
    pub fn add(&mut self, slot: usize, value: f64) {
        self.values[slot] += value;
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn first_col(&self, i: usize) -> usize {
        self.first[i]
    }

    pub fn row_offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Multiply the (symmetric) stored matrix by `x`. Only valid before
    /// `factor` overwrites the values.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for i in 0..self.n {
            let base = self.offsets[i];
            let f = self.first[i];
            let mut acc = 0.0;
            for (k, j) in (f..i).enumerate() {
                let v = self.values[base + k];
                acc += v * x[j];
                y[j] += v * x[i];
            }
            acc += self.values[base + (i - f)] * x[i];
            y[i] += acc;
        }
    }

    /// In-place LDL' factorization. Pivots whose sign-adjusted value drops
    /// below `pivot_floor` are clamped to the expected sign.
    pub fn factor(&mut self, pivot_floor: f64) {
        self.factor_reporting_min(pivot_floor);
    }

    /// [`factor`](Self::factor) that also returns the smallest sign-adjusted
    /// pivot seen before clamping; negative values witness indefiniteness.
    pub fn factor_reporting_min(&mut self, pivot_floor: f64) -> f64 {
        self.bumped_pivots = 0;
        let mut min_signed = f64::INFINITY;
        for i in 0..self.n {
            let fi = self.first[i];
            // Row i of L.
            for j in fi..i {
                let fj = self.first[j];
                let lo = fi.max(fj);
                let mut sum = self.values[self.offsets[i] + (j - fi)];
                let row_i = self.offsets[i] + (lo - fi);
                let row_j = self.offsets[j] + (lo - fj);
                for k in 0..j - lo {
                    sum -= self.values[row_i + k] * self.diag[lo + k] * self.values[row_j + k];
                }
                self.values[self.offsets[i] + (j - fi)] = sum / self.diag[j];
            }
            // Pivot.
            let mut d = self.values[self.offsets[i] + (i - fi)];
            for (k, j) in (fi..i).enumerate() {
                let l = self.values[self.offsets[i] + k];
                d -= l * l * self.diag[j];
            }
            let sign = f64::from(self.signs[i]);
            if d * sign < min_signed {
                min_signed = d * sign;
            }
            if d * sign < pivot_floor {
                d = sign * pivot_floor;
                self.bumped_pivots += 1;
            }
            self.diag[i] = d;
        }
        min_signed
    }

    /// Solve `K x = b` in place using the factorization.
    pub fn solve(&self, b: &mut [f64]) {
        // Forward: L y = b.
        for i in 0..self.n {
            let base = self.offsets[i];
            let fi = self.first[i];
            let mut acc = b[i];
            for (k, j) in (fi..i).enumerate() {
                acc -= self.values[base + k] * b[j];
            }
            b[i] = acc;
        }
        // Diagonal.
        for i in 0..self.n {
            b[i] /= self.diag[i];
        }
        // Backward: L' x = y.
        for i in (0..self.n).rev() {
            let base = self.offsets[i];
            let fi = self.first[i];
            let xi = b[i];
            for (k, j) in (fi..i).enumerate() {
                b[j] -= self.values[base + k] * xi;
            }
        }
    }
}

/// Multiply the symmetric matrix whose profile values are `vals` (laid out
/// like `ldl`'s storage) by `x`.
pub fn skyline_matvec(ldl: &SkylineLdl, vals: &[f64], x: &[f64], y: &mut [f64]) {
    y.fill(0.0);
    for i in 0..ldl.n() {
        let f = ldl.first_col(i);
        let base = ldl.row_offset(i);
        let mut acc = 0.0;
        for (k, j) in (f..i).enumerate() {
            let v = vals[base + k];
            acc += v * x[j];
            y[j] += v * x[i];
        }
        acc += vals[base + (i - f)] * x[i];
        y[i] += acc;
    }
}

/// Build adjacency lists from structural entry pairs.
pub fn adjacency_from_entries(n: usize, entries: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in entries {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rcm_orders_a_path_graph_contiguously() {
        // 0-2-4-1-3 path given with scrambled labels.
        let adj = adjacency_from_entries(5, &[(0, 2), (2, 4), (4, 1), (1, 3)]);
        let order = reverse_cuthill_mckee(&adj);
        let mut pos = vec![0; 5];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        // Each edge spans adjacent positions after ordering.
        for (a, b) in [(0, 2), (2, 4), (4, 1), (1, 3)] {
            assert_eq!(pos[a].abs_diff(pos[b]), 1);
        }
    }

    #[test]
    fn ldl_factors_and_solves_a_quasi_definite_system() {
        // K = [2 1 0; 1 3 1; 0 1 -2]: signs (+, +, -).
        let entries = vec![(0, 0), (1, 1), (2, 2), (1, 0), (2, 1)];
        let mut ldl = SkylineLdl::new(3, entries.iter().copied(), vec![1, 1, -1]);
        for (r, c, v) in [
            (0, 0, 2.0),
            (1, 1, 3.0),
            (2, 2, -2.0),
            (1, 0, 1.0),
            (2, 1, 1.0),
        ] {
            let s = ldl.slot(r, c);
            ldl.add(s, v);
        }
        let x_true = [1.0, -2.0, 0.5];
        let mut b = [0.0; 3];
        ldl.matvec(&x_true, &mut b);
        ldl.factor(1e-12);
        assert_eq!(ldl.bumped_pivots, 0);
        ldl.solve(&mut b);
        for (got, want) in b.iter().zip(x_true.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn ldl_solves_with_permuted_profile() {
        // Random-ish 6x6 SPD matrix A = B'B + I assembled into the skyline
        // with an RCM ordering, solved against a dense reference.
        let n = 6;
        let b_rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| ((i * 7 + j * 3) % 5) as f64 / 5.0)
                    .collect()
            })
            .collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                for (k, row) in b_rows.iter().enumerate() {
                    let _ = k;
                    a[i][j] += row[i] * row[j];
                }
                if i == j {
                    a[i][j] += 1.0;
                }
            }
        }
        let mut entries = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                if a[i][j] != 0.0 {
                    entries.push((i, j));
                }
            }
        }
        let mut ldl = SkylineLdl::new(n, entries.iter().copied(), vec![1; n]);
        for i in 0..n {
            for j in 0..=i {
                if a[i][j] != 0.0 {
                    let s = ldl.slot(i, j);
                    ldl.add(s, a[i][j]);
                }
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64) - 2.5).collect();
        let mut rhs = vec![0.0; n];
        ldl.matvec(&x_true, &mut rhs);
        ldl.factor(1e-12);
        ldl.solve(&mut rhs);
        for (got, want) in rhs.iter().zip(x_true.iter()) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }
}
