//! Isomorphism-free enumeration of small connected graphs.
//!
//! Canonical forms come from colour refinement plus individualization, with
//! twin vertices pruned (swapping twins is an automorphism).

use std::collections::HashSet;

/// Adjacency rows as bitmasks; at most 16 vertices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SmallGraph {
    pub n: usize,
    pub adj: Vec<u16>,
}

impl SmallGraph {
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.adj[i] >> j & 1 == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    fn permuted(&self, order: &[usize]) -> SmallGraph {
        let mut pos = vec![0; self.n];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        let mut adj = vec![0u16; self.n];
        for (i, j) in self.edges() {
            adj[pos[i]] |= 1 << pos[j];
            adj[pos[j]] |= 1 << pos[i];
        }
        SmallGraph { n: self.n, adj }
    }

    fn code(&self, order: &[usize]) -> u128 {
        let mut c = 0u128;
        for a in 0..self.n {
            for b in a + 1..self.n {
                c = c << 1 | (self.adj[order[a]] >> order[b] & 1) as u128;
            }
        }
        c
    }

    pub fn canonical(&self) -> SmallGraph {
        let colours = refine(self, vec![0; self.n]);
        let mut best: Option<(u128, Vec<usize>)> = None;
        search(self, colours, &mut best);
        self.permuted(&best.unwrap().1)
    }
}

fn refine(g: &SmallGraph, mut colour: Vec<usize>) -> Vec<usize> {
    let mut classes = count(&colour);
    loop {
        let keys: Vec<(usize, Vec<usize>)> = (0..g.n)
            .map(|v| {
                let mut nb: Vec<usize> = (0..g.n)
                    .filter(|&u| g.adj[v] >> u & 1 == 1)
                    .map(|u| colour[u])
                    .collect();
                nb.sort_unstable();
                (colour[v], nb)
            })
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        sorted.dedup();
        colour = keys
            .iter()
            .map(|k| sorted.binary_search(k).unwrap())
            .collect();
        let c = count(&colour);
        if c == classes {
            return colour;
        }
        classes = c;
    }
}

fn count(colour: &[usize]) -> usize {
    colour.iter().collect::<HashSet<_>>().len()
}

fn search(g: &SmallGraph, colour: Vec<usize>, best: &mut Option<(u128, Vec<usize>)>) {
    let n = g.n;
    if count(&colour) == n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| colour[v]);
        let code = g.code(&order);
        if best.as_ref().is_none_or(|(b, _)| code > *b) {
            *best = Some((code, order));
        }
        return;
    }
    // first smallest non-singleton cell
    let mut sizes = vec![0; n];
    colour.iter().for_each(|&c| sizes[c] += 1);
    let target = (0..n)
        .filter(|&c| sizes[c] > 1)
        .min_by_key(|&c| (sizes[c], c))
        .unwrap();
    let cell: Vec<usize> = (0..n).filter(|&v| colour[v] == target).collect();
    let mut tried: Vec<usize> = Vec::new();
    for &v in &cell {
        let twin = |u: usize| {
            let mask = !((1u16 << u) | (1u16 << v));
            g.adj[u] & mask == g.adj[v] & mask
        };
        if tried.iter().any(|&u| twin(u)) {
            continue;
        }
        tried.push(v);
        let mut c: Vec<usize> = colour.iter().map(|&x| 2 * x + 1).collect();
        c[v] = 2 * target;
        search(g, refine(g, c), best);
    }
}

pub fn is_connected(g: &SmallGraph) -> bool {
    if g.n == 0 {
        return true;
    }
    let mut seen = 1u16;
    let mut frontier = 1u16;
    while frontier != 0 {
        let mut next = 0u16;
        for v in 0..g.n {
            if frontier >> v & 1 == 1 {
                next |= g.adj[v];
            }
        }
        frontier = next & !seen;
        seen |= next;
    }
    seen.count_ones() as usize == g.n
}

/// All connected graphs on `1..=max_n` vertices up to isomorphism, by size.
///
/// Every connected graph has a vertex whose removal keeps it connected, so
/// extending each connected graph by one vertex with a nonempty neighbor set
/// reaches every connected graph one size up.
pub fn connected_graphs(max_n: usize) -> Vec<Vec<SmallGraph>> {
    let mut out = vec![vec![SmallGraph { n: 1, adj: vec![0] }]];
    for n in 2..=max_n {
        let mut seen = HashSet::new();
        let mut level = Vec::new();
        for g in &out[n - 2] {
            for mask in 1u16..(1 << (n - 1)) {
                let mut adj = g.adj.clone();
                adj.push(mask);
                for (v, row) in adj.iter_mut().enumerate().take(n - 1) {
                    if mask >> v & 1 == 1 {
                        *row |= 1 << (n - 1);
                    }
                }
                let c = SmallGraph { n, adj }.canonical();
                if seen.insert(c.clone()) {
                    level.push(c);
                }
            }
        }
        out.push(level);
    }
    out
}
