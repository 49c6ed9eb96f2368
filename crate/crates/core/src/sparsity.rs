//! Correlative sparsity: co-occurrence graph of POP variables, chordal
//! extension, maximal cliques and the running intersection property.

use std::collections::{BTreeSet, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::discretize::Pop;
use crate::error::{Error, Result};

/// Undirected simple graph on `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<BTreeSet<usize>>,
}

impl Graph {
    pub fn new(n: usize) -> Self {
        Graph {
            adj: vec![BTreeSet::new(); n],
        }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Graph::new(n);
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn n_vertices(&self) -> usize {
        self.adj.len()
    }

    /// Adds `{a, b}`; self-loops are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a].insert(b);
            self.adj[b].insert(a);
        }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(&b)
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn n_edges(&self) -> usize {
        self.adj.iter().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.adj.len())
            .flat_map(|a| self.adj[a].range(a + 1..).map(move |&b| (a, b)))
            .collect()
    }

    /// True when `order` is a perfect elimination ordering: the neighbors of
    /// each vertex that come later in `order` are pairwise adjacent.
    pub fn is_perfect_elimination_ordering(&self, order: &[usize]) -> bool {
        let pos = positions(order, self.n_vertices());
        order.iter().all(|&v| {
            let later: Vec<usize> = self.adj[v].iter().copied().filter(|&w| pos[w] > pos[v]).collect();
            later
                .iter()
                .enumerate()
                .all(|(i, &a)| later[i + 1..].iter().all(|&b| self.has_edge(a, b)))
        })
    }
}

fn positions(order: &[usize], n: usize) -> Vec<usize> {
    let mut pos = vec![usize::MAX; n];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    pos
}

/// Correlative sparsity graph of Φ: `i ~ j` iff ξᵢ, ξⱼ share an element.
pub fn csp_graph(pop: &Pop) -> Graph {
    let mut g = Graph::new(pop.n_vars);
    for o in &pop.objectives {
        for (a, &i) in o.dofs.iter().enumerate() {
            for &j in &o.dofs[a + 1..] {
                g.add_edge(i, j);
            }
        }
    }
    g
}

/// Chordal supergraph by minimum-degree elimination with symbolic fill.
/// Degree ties go to the lowest vertex index. Returns the extension and the
/// elimination order, which is a perfect elimination ordering of it.
pub fn chordal_extend(g: &Graph) -> (Graph, Vec<usize>) {
    let n = g.n_vertices();
    let mut work = g.adj.clone();
    let mut out = g.clone();
    let mut eliminated = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !eliminated[v])
            .min_by_key(|&v| (work[v].len(), v))
            .expect("vertex left");
        let nbrs: Vec<usize> = work[v].iter().copied().collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                if work[a].insert(b) {
                    work[b].insert(a);
                    out.add_edge(a, b);
                }
            }
        }
        for &a in &nbrs {
            work[a].remove(&v);
        }
        work[v].clear();
        eliminated[v] = true;
        order.push(v);
    }
    (out, order)
}

/// Family of variable cliques covering every element's DOF set.
#[derive(Debug, Clone, PartialEq)]
pub struct CliqueSet {
    /// Sorted variable indices of each clique.
    pub cliques: Vec<Vec<usize>>,
    /// Clique holding each element's DOFs; `None` for elements without free DOFs.
    pub element_assignment: Vec<Option<usize>>,
    /// Clique order under which the running intersection property holds.
    pub rip_ordering: Option<Vec<usize>>,
}

/// Count, largest and mean clique size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CliqueStats {
    pub count: usize,
    pub max_size: usize,
    pub avg_size: f64,
}

impl CliqueSet {
    pub fn stats(&self) -> CliqueStats {
        let count = self.cliques.len();
        let total: usize = self.cliques.iter().map(Vec::len).sum();
        CliqueStats {
            count,
            max_size: self.cliques.iter().map(Vec::len).max().unwrap_or(0),
            avg_size: if count == 0 { 0.0 } else { total as f64 / count as f64 },
        }
    }

    /// Cliques containing each variable.
    pub fn membership(&self, n_vars: usize) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); n_vars];
        for (k, c) in self.cliques.iter().enumerate() {
            for &v in c {
                m[v].push(k);
            }
        }
        m
    }

    /// All cliques that contain every variable of `set` (which must be non-empty).
    pub fn containing(&self, membership: &[Vec<usize>], set: &[usize]) -> Vec<usize> {
        membership[set[0]]
            .iter()
            .copied()
            .filter(|&k| set.iter().all(|v| self.cliques[k].binary_search(v).is_ok()))
            .collect()
    }

    /// Checks that every variable is covered and every element fits in its
    /// assigned clique.
    pub fn verify_cover(&self, pop: &Pop) -> bool {
        let mut seen = vec![false; pop.n_vars];
        for c in &self.cliques {
            for &v in c {
                seen[v] = true;
            }
        }
        let used: BTreeSet<usize> = pop.objectives.iter().flat_map(|o| o.dofs.iter().copied()).collect();
        used.iter().all(|&v| seen[v])
            && pop.objectives.iter().zip(&self.element_assignment).all(|(o, a)| match a {
                None => o.dofs.is_empty(),
                Some(k) => o.dofs.iter().all(|v| self.cliques[*k].binary_search(v).is_ok()),
            })
    }
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.dedup();
    s
}

fn assign(cliques: Vec<Vec<usize>>, pop: &Pop) -> CliqueSet {
    let mut cs = CliqueSet {
        cliques,
        element_assignment: Vec::new(),
        rip_ordering: None,
    };
    let membership = cs.membership(pop.n_vars);
    cs.element_assignment = pop
        .objectives
        .iter()
        .map(|o| {
            if o.dofs.is_empty() {
                None
            } else {
                cs.containing(&membership, &sorted(&o.dofs)).first().copied()
            }
        })
        .collect();
    cs
}

/// Removes duplicate sets and sets contained in another, keeping first
/// occurrence order.
pub fn absorb_subsets(sets: &[Vec<usize>], n_vars: usize) -> Vec<Vec<usize>> {
    let mut distinct: Vec<Vec<usize>> = Vec::new();
    let mut seen = BTreeSet::new();
    for s in sets {
        let s = sorted(s);
        if !s.is_empty() && seen.insert(s.clone()) {
            distinct.push(s);
        }
    }
    let mut membership = vec![Vec::new(); n_vars];
    for (k, c) in distinct.iter().enumerate() {
        for &v in c {
            membership[v].push(k);
        }
    }
    distinct
        .iter()
        .enumerate()
        .filter(|(k, c)| {
            !membership[c[0]].iter().any(|&o| {
                o != *k && distinct[o].len() > c.len() && c.iter().all(|v| distinct[o].binary_search(v).is_ok())
            })
        })
        .map(|(_, c)| c.clone())
        .collect()
}

/// The element DOF sets themselves, with subsets absorbed.
pub fn element_cliques(pop: &Pop) -> CliqueSet {
    let sets: Vec<Vec<usize>> = pop.objectives.iter().map(|o| o.dofs.clone()).collect();
    let mut cs = assign(absorb_subsets(&sets, pop.n_vars), pop);
    cs.rip_ordering = check_rip(&cs.cliques);
    cs
}

/// Maximal cliques of a chordal graph from a perfect elimination ordering,
/// listed in a running-intersection order.
pub fn maximal_cliques(chordal: &Graph, peo: &[usize]) -> Result<Vec<Vec<usize>>> {
    let n = chordal.n_vertices();
    if peo.len() != n || !chordal.is_perfect_elimination_ordering(peo) {
        return Err(Error::NotChordal);
    }
    let pos = positions(peo, n);
    let later: Vec<Vec<usize>> = (0..n)
        .map(|v| chordal.adj[v].iter().copied().filter(|&w| pos[w] > pos[v]).collect())
        .collect();
    // C_v = {v} ∪ later(v) is non-maximal iff some u with parent v has
    // |later(u)| = |later(v)| + 1.
    let mut absorbed = vec![false; n];
    for u in 0..n {
        if let Some(&p) = later[u].iter().min_by_key(|&&w| pos[w]) {
            if later[u].len() == later[p].len() + 1 {
                absorbed[p] = true;
            }
        }
    }
    let cliques: Vec<Vec<usize>> = peo
        .iter()
        .rev()
        .filter(|&&v| !absorbed[v])
        .map(|&v| {
            let mut c = later[v].clone();
            c.push(v);
            c.sort_unstable();
            c
        })
        .collect();
    let order = check_rip(&cliques).ok_or(Error::NotChordal)?;
    Ok(order.into_iter().map(|k| cliques[k].clone()).collect())
}

/// Chordal-extension cliques: maximal cliques of the minimum-degree
/// extension of the correlative sparsity graph, which satisfy the RIP.
pub fn chordal_cliques(pop: &Pop) -> Result<CliqueSet> {
    let g = csp_graph(pop);
    let (ext, peo) = chordal_extend(&g);
    let used: BTreeSet<usize> = pop.objectives.iter().flat_map(|o| o.dofs.iter().copied()).collect();
    let cliques: Vec<Vec<usize>> = maximal_cliques(&ext, &peo)?
        .into_iter()
        .filter(|c| c.len() > 1 || used.contains(&c[0]))
        .collect();
    let mut cs = assign(cliques, pop);
    cs.rip_ordering = Some((0..cs.cliques.len()).collect());
    Ok(cs)
}

/// Checks the running intersection property for the cliques taken in `order`.
pub fn rip_holds(cliques: &[Vec<usize>], order: &[usize]) -> bool {
    let mut union: BTreeSet<usize> = BTreeSet::new();
    for (i, &k) in order.iter().enumerate() {
        if i > 0 {
            let shared: Vec<usize> = cliques[k].iter().copied().filter(|v| union.contains(v)).collect();
            let covered = order[..i]
                .iter()
                .any(|&l| shared.iter().all(|v| cliques[l].binary_search(v).is_ok()));
            if !covered {
                return false;
            }
        }
        union.extend(cliques[k].iter().copied());
    }
    true
}

fn permutations_rip(cliques: &[Vec<usize>]) -> Option<Vec<usize>> {
    fn rec(cliques: &[Vec<usize>], cur: &mut Vec<usize>, used: &mut [bool]) -> bool {
        if !rip_holds(cliques, cur) {
            return false;
        }
        if cur.len() == cliques.len() {
            return true;
        }
        for k in 0..cliques.len() {
            if !used[k] {
                used[k] = true;
                cur.push(k);
                if rec(cliques, cur, used) {
                    return true;
                }
                cur.pop();
                used[k] = false;
            }
        }
        false
    }
    let mut cur = Vec::new();
    let mut used = vec![false; cliques.len()];
    rec(cliques, &mut cur, &mut used).then_some(cur)
}

/// Looks for a clique ordering satisfying the running intersection
/// property: a maximum-weight spanning forest of the clique intersection
/// graph is traversed breadth-first and the result verified. Families of at
/// most eight cliques fall back to exhaustive search when that fails.
pub fn check_rip(cliques: &[Vec<usize>]) -> Option<Vec<usize>> {
    let k = cliques.len();
    if k == 0 {
        return Some(Vec::new());
    }
    let n = cliques.iter().flatten().copied().max().map_or(0, |m| m + 1);
    let mut membership = vec![Vec::new(); n];
    for (i, c) in cliques.iter().enumerate() {
        for &v in c {
            membership[v].push(i);
        }
    }
    let mut weights: Vec<HashMap<usize, usize>> = vec![HashMap::new(); k];
    for m in &membership {
        for (a, &i) in m.iter().enumerate() {
            for &j in &m[a + 1..] {
                *weights[i].entry(j).or_insert(0) += 1;
                *weights[j].entry(i).or_insert(0) += 1;
            }
        }
    }
    // Prim per component; heap keyed on (weight, lowest index first).
    let mut in_tree = vec![false; k];
    let mut order = Vec::with_capacity(k);
    for root in 0..k {
        if in_tree[root] {
            continue;
        }
        let mut heap = BinaryHeap::new();
        heap.push((usize::MAX, std::cmp::Reverse(root)));
        while let Some((_, std::cmp::Reverse(v))) = heap.pop() {
            if in_tree[v] {
                continue;
            }
            in_tree[v] = true;
            order.push(v);
            let mut nb: Vec<(&usize, &usize)> = weights[v].iter().collect();
            nb.sort_unstable();
            for (&u, &w) in nb {
                if !in_tree[u] {
                    heap.push((w, std::cmp::Reverse(u)));
                }
            }
        }
    }
    if rip_holds(cliques, &order) {
        Some(order)
    } else if k <= 8 {
        permutations_rip(cliques)
    } else {
        None
    }
}

/// Which family of cliques to build the relaxation on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CliqueStrategy {
    /// Element DOF sets.
    Element,
    /// Maximal cliques of a chordal extension (RIP guaranteed).
    ChordalRip,
}

pub fn build_cliques(pop: &Pop, strategy: CliqueStrategy) -> Result<CliqueSet> {
    match strategy {
        CliqueStrategy::Element => Ok(element_cliques(pop)),
        CliqueStrategy::ChordalRip => chordal_cliques(pop),
    }
}
