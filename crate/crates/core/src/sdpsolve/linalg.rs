//! Envelope (skyline) Cholesky for the Schur complement system and a
//! reverse Cuthill–McKee style ordering to keep the envelope small.

use std::collections::VecDeque;

/// Lower triangle of a symmetric matrix stored row by row from the first
/// structurally nonzero column `first[i]` up to the diagonal.
#[derive(Debug, Clone)]
pub struct Envelope {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl Envelope {
    pub fn new(first: Vec<usize>) -> Self {
        let mut start = Vec::with_capacity(first.len() + 1);
        let mut off = 0;
        for (i, &f) in first.iter().enumerate() {
            assert!(f <= i, "envelope start beyond diagonal");
            start.push(off);
            off += i - f + 1;
        }
        start.push(off);
        Envelope {
            first,
            start,
            data: vec![0.0; off],
        }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    /// Stored entries.
    pub fn profile(&self) -> usize {
        self.data.len()
    }

    pub fn clear(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && j >= self.first[i]);
        self.start[i] + j - self.first[i]
    }

    /// Adds `v` at `(i, j)` (either triangle).
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let p = self.pos(i, j);
        self.data[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if j < self.first[i] {
            0.0
        } else {
            self.data[self.pos(i, j)]
        }
    }

    /// In-place `L Lᵀ` factorization. Pivots that collapse below
    /// `rel_pivot` times the original diagonal are replaced by a huge value,
    /// which zeroes the corresponding solution component. Returns the number
    /// of such pivots.
    pub fn factor(&mut self, rel_pivot: f64) -> usize {
        let n = self.dim();
        let mut replaced = 0;
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..=i {
                let fj = self.first[j];
                let sj = self.start[j];
                let k0 = fi.max(fj);
                let a = &self.data[si + (k0 - fi)..si + (j - fi)];
                let b = &self.data[sj + (k0 - fj)..sj + (j - fj)];
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let p = si + (j - fi);
                if j < i {
                    self.data[p] = (self.data[p] - dot) / diag[j];
                } else {
                    let orig = self.data[p];
                    let s = orig - dot;
                    let d = if s > rel_pivot * orig.abs().max(f64::MIN_POSITIVE) && s.is_finite() {
                        s.sqrt()
                    } else {
                        replaced += 1;
                        1e64
                    };
                    diag[i] = d;
                    self.data[p] = d;
                }
            }
        }
        replaced
    }

    /// Solves `L Lᵀ x = b` after [`Envelope::factor`].
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x = b.to_vec();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&x[fi..i]).map(|(l, v)| l * v).sum();
            x[i] = (x[i] - dot) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (k, l) in (fi..i).zip(row) {
                x[k] -= l * xi;
            }
        }
        x
    }
}

/// Envelope of the Schur pattern when each group (block) couples all its
/// variables, under the ordering `perm` (old index → new index).
pub fn envelope_first(groups: &[Vec<usize>], n: usize, perm: &[usize]) -> Vec<usize> {
    let mut first: Vec<usize> = (0..n).collect();
    for g in groups {
        if let Some(lo) = g.iter().map(|&v| perm[v]).min() {
            for &v in g {
                let p = perm[v];
                first[p] = first[p].min(lo);
            }
        }
    }
    first
}

pub fn profile_size(first: &[usize]) -> usize {
    first.iter().enumerate().map(|(i, f)| i - f + 1).sum()
}

/// Reverse Cuthill–McKee ordering of the graph in which each group is a
/// clique. Returns `perm` with `perm[old] = new`.
pub fn rcm_ordering(groups: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut member: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (g, vars) in groups.iter().enumerate() {
        for &v in vars {
            member[v].push(g);
        }
    }
    let weight: Vec<usize> = (0..n).map(|v| member[v].iter().map(|&g| groups[g].len()).sum()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let bfs = |start: usize, visited: &mut Vec<bool>, out: &mut Vec<usize>| {
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            out.push(v);
            let mut next = Vec::new();
            for &g in &member[v] {
                for &w in &groups[g] {
                    if !visited[w] {
                        visited[w] = true;
                        next.push(w);
                    }
                }
            }
            next.sort_by_key(|&w| (weight[w], w));
            queue.extend(next);
        }
    };
    for s in 0..n {
        if visited[s] {
            continue;
        }
        // Pseudo-peripheral start: last vertex reached from s.
        let mut probe_visited = visited.clone();
        let mut probe = Vec::new();
        bfs(s, &mut probe_visited, &mut probe);
        let start = *probe.last().unwrap_or(&s);
        bfs(start, &mut visited, &mut order);
    }
    order.reverse();
    let mut perm = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    perm
}
