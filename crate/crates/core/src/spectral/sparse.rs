//! Sparse symmetric matrices in CSR form plus a profile (skyline) Cholesky
//! factorization with reverse Cuthill-McKee ordering. The meshes this crate
//! produces are long and thin, so after RCM the profile is narrow and a
//! banded direct solve beats anything iterative at these sizes.

/// Compressed sparse row matrix; symmetric matrices store both triangles.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> Csr {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut col = Vec::with_capacity(triplets.len());
        let mut val = Vec::with_capacity(triplets.len());
        let mut counts = vec![0usize; n];
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in triplets.iter() {
            if last == Some((r, c)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(c);
                val.push(v);
                counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + counts[i];
        }
        Csr {
            n,
            row_ptr,
            col,
            val,
        }
    }

    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            y[i] = s;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            if self.col[k] == c {
                return self.val[k];
            }
        }
        0.0
    }

    /// Restrict to the rows/columns where `keep[i]` is true.
    pub fn restrict(&self, keep: &[bool]) -> (Csr, Vec<usize>) {
        let mut new_id = vec![usize::MAX; self.n];
        let mut old_id = Vec::new();
        for i in 0..self.n {
            if keep[i] {
                new_id[i] = old_id.len();
                old_id.push(i);
            }
        }
        let m = old_id.len();
        let mut row_ptr = vec![0usize; m + 1];
        let mut col = Vec::new();
        let mut val = Vec::new();
        for (nr, &i) in old_id.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col[k];
                if keep[j] {
                    col.push(new_id[j]);
                    val.push(self.val[k]);
                }
            }
            row_ptr[nr + 1] = col.len();
        }
        (
            Csr {
                n: m,
                row_ptr,
                col,
                val,
            },
            old_id,
        )
    }

    /// `self - shift * other`, requiring `other`'s pattern to be a subset.
    pub fn shifted(&self, other: &Csr, shift: f64) -> Csr {
        let mut out = self.clone();
        for r in 0..self.n {
            for k in other.row_ptr[r]..other.row_ptr[r + 1] {
                let c = other.col[k];
                let mut hit = false;
                for kk in out.row_ptr[r]..out.row_ptr[r + 1] {
                    if out.col[kk] == c {
                        out.val[kk] -= shift * other.val[k];
                        hit = true;
                        break;
                    }
                }
                assert!(hit, "pattern mismatch at ({r},{c})");
            }
        }
        out
    }
}

/// Reverse Cuthill-McKee ordering of the adjacency implied by a CSR pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_order(a: &Csr) -> Vec<usize> {
    let n = a.n;
    let degree = |i: usize| a.row_ptr[i + 1] - a.row_ptr[i];
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut component = Vec::new();
    while order.len() < n {
        // lowest-degree unvisited seed, then a BFS sweep to find a
        // pseudo-peripheral start
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree(i))
            .unwrap();
        let start = pseudo_peripheral(a, seed);
        component.clear();
        component.push(start);
        visited[start] = true;
        let mut head = 0;
        while head < component.len() {
            let u = component[head];
            head += 1;
            let mut nb: Vec<usize> = (a.row_ptr[u]..a.row_ptr[u + 1])
                .map(|k| a.col[k])
                .filter(|&v| !visited[v])
                .collect();
            nb.sort_unstable_by_key(|&v| degree(v));
            for v in nb {
                if !visited[v] {
                    visited[v] = true;
                    component.push(v);
                }
            }
        }
        order.extend(component.iter().rev());
    }
    order
}

fn pseudo_peripheral(a: &Csr, seed: usize) -> usize {
    let mut start = seed;
    let mut last_ecc = 0usize;
    for _ in 0..8 {
        let (far, ecc) = bfs_far(a, start);
        if ecc <= last_ecc {
            break;
        }
        last_ecc = ecc;
        start = far;
    }
    start
}

fn bfs_far(a: &Csr, s: usize) -> (usize, usize) {
    let mut depth = vec![usize::MAX; a.n];
    depth[s] = 0;
    let mut queue = std::collections::VecDeque::from([s]);
    let mut far = (s, 0usize);
    while let Some(u) = queue.pop_front() {
        for k in a.row_ptr[u]..a.row_ptr[u + 1] {
            let v = a.col[k];
            if depth[v] == usize::MAX {
                depth[v] = depth[u] + 1;
                if depth[v] > far.1 {
                    far = (v, depth[v]);
                }
                queue.push_back(v);
            }
        }
    }
    far
}

/// Profile (variable-band) Cholesky `A = L L^T` for SPD `A`, stored row-wise
/// from the first nonzero column of each row to the diagonal.
pub struct ProfileChol {
    n: usize,
    first: Vec<usize>,
    /// Row i holds columns `first[i]..=i`; the last entry is the diagonal.
    rows: Vec<Vec<f64>>,
}

impl ProfileChol {
    /// Factor the SPD matrix given by `a` under the permutation `perm`
    /// (`perm[new] = old`). Panics on a non-positive pivot.
    pub fn factor(a: &Csr, perm: &[usize]) -> ProfileChol {
        let n = a.n;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        // profile per permuted row
        let mut first: Vec<usize> = (0..n).collect();
        for old_r in 0..n {
            let r = inv[old_r];
            for k in a.row_ptr[old_r]..a.row_ptr[old_r + 1] {
                let c = inv[a.col[k]];
                if c < r {
                    first[r] = first[r].min(c);
                }
            }
        }
        let mut rows: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; i - first[i] + 1]).collect();
        for old_r in 0..n {
            let r = inv[old_r];
            for k in a.row_ptr[old_r]..a.row_ptr[old_r + 1] {
                let c = inv[a.col[k]];
                if c <= r {
                    rows[r][c - first[r]] = a.val[k];
                }
            }
        }
        // in-place row Cholesky within the profile
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = rows[i][j - fi];
                for k in lo..j {
                    s -= rows[i][k - fi] * rows[j][k - fj];
                }
                rows[i][j - fi] = s / rows[j][j - fj];
            }
            let mut d = rows[i][i - fi];
            for k in fi..i {
                let l = rows[i][k - fi];
                d -= l * l;
            }
            assert!(d > 0.0, "matrix not positive definite at pivot {i} ({d})");
            rows[i][i - fi] = d.sqrt();
        }
        ProfileChol { n, first, rows }
    }

    /// Solve `A x = b` in the original (unpermuted) indexing.
    pub fn solve(&self, b: &[f64], perm: &[usize], x: &mut [f64]) {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = b[perm[i]];
        }
        // forward: L z = y
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.rows[i][k - fi] * y[k];
            }
            y[i] = s / self.rows[i][i - fi];
        }
        // backward: L^T x = z
        for i in (0..n).rev() {
            let fi = self.first[i];
            y[i] /= self.rows[i][i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.rows[i][k - fi] * yi;
            }
        }
        for i in 0..n {
            x[perm[i]] = y[i];
        }
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_csr(d: &[&[f64]]) -> Csr {
        let n = d.len();
        let mut t = Vec::new();
        for (i, row) in d.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push((i, j, v));
                }
            }
        }
        Csr::from_triplets(n, &mut t)
    }

    #[test]
    fn triplet_assembly_sums_duplicates() {
        let mut t = vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0), (0, 1, 1.5)];
        let a = Csr::from_triplets(2, &mut t);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(0, 1), 1.5);
        assert_eq!(a.get(1, 1), 2.0);
        assert_eq!(a.get(1, 0), 0.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn profile_cholesky_solves_spd_system() {
        // SPD: diagonally dominant symmetric
        let d: &[&[f64]] = &[
            &[4.0, 1.0, 0.0, 0.5],
            &[1.0, 5.0, 2.0, 0.0],
            &[0.0, 2.0, 6.0, 1.0],
            &[0.5, 0.0, 1.0, 3.0],
        ];
        let a = dense_to_csr(d);
        let perm = rcm_order(&a);
        let chol = ProfileChol::factor(&a, &perm);
        let b = vec![1.0, -2.0, 3.0, 0.25];
        let mut x = vec![0.0; 4];
        chol.solve(&b, &perm, &mut x);
        let mut ax = vec![0.0; 4];
        a.matvec(&x, &mut ax);
        for i in 0..4 {
            assert!((ax[i] - b[i]).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn rcm_is_a_permutation_and_shrinks_bandwidth() {
        // path graph 0-1-2-...-9 entered in scrambled order
        let n = 10;
        let mut t = Vec::new();
        let scramble = [3usize, 7, 1, 9, 0, 5, 8, 2, 6, 4];
        for w in scramble.windows(2) {
            t.push((w[0], w[1], -1.0));
            t.push((w[1], w[0], -1.0));
        }
        for i in 0..n {
            t.push((i, i, 4.0));
        }
        let a = Csr::from_triplets(n, &mut t);
        let perm = rcm_order(&a);
        let mut seen = vec![false; n];
        for &p in &perm {
            assert!(!seen[p]);
            seen[p] = true;
        }
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut bw = 0i64;
        for i in 0..n {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                bw = bw.max((inv[i] as i64 - inv[a.col[k]] as i64).abs());
            }
        }
        assert!(bw <= 2, "path graph should reorder to bandwidth 1, got {bw}");
    }

    #[test]
    fn restriction_drops_rows_and_columns() {
        let d: &[&[f64]] = &[
            &[2.0, 1.0, 0.0],
            &[1.0, 2.0, 1.0],
            &[0.0, 1.0, 2.0],
        ];
        let a = dense_to_csr(d);
        let (r, old) = a.restrict(&[true, false, true]);
        assert_eq!(r.n, 2);
        assert_eq!(old, vec![0, 2]);
        assert_eq!(r.get(0, 0), 2.0);
        assert_eq!(r.get(0, 1), 0.0);
        assert_eq!(r.get(1, 1), 2.0);
    }
}
