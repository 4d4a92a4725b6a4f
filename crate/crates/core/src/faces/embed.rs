//! Planarity testing and embedding.
//!
//! The graph is split into biconnected blocks. Each block is embedded by
//! path addition (Demoucron, Malgrange and Pertuiset): start from a cycle,
//! then repeatedly pick the fragment with the fewest admissible faces and
//! route a path through it, splitting that face in two. Block rotations are
//! spliced at cut vertices, which always yields a planar rotation system.

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("graph is not planar")]
pub struct NonPlanar;

/// Rotation system: for each vertex, its neighbors in cyclic order.
///
/// Walking a face, the half-edge after `u → v` is `v → next(v, u)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanarEmbedding {
    rotation: Vec<Vec<usize>>,
}

impl PlanarEmbedding {
    /// Wraps a rotation system; every neighbor relation must be symmetric.
    pub fn from_rotation(rotation: Vec<Vec<usize>>) -> Self {
        debug_assert!(rotation
            .iter()
            .enumerate()
            .all(|(v, r)| r.iter().all(|&u| rotation[u].contains(&v))));
        Self { rotation }
    }

    pub fn vertex_count(&self) -> usize {
        self.rotation.len()
    }

    pub fn edge_count(&self) -> usize {
        self.rotation.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn rotation(&self, v: usize) -> &[usize] {
        &self.rotation[v]
    }

    /// Successor of `u` in the cyclic order around `v`.
    pub fn next(&self, v: usize, u: usize) -> usize {
        let r = &self.rotation[v];
        let k = r
            .iter()
            .position(|&x| x == u)
            .expect("u is a neighbor of v");
        r[(k + 1) % r.len()]
    }

    /// Boundary walks, one per face, each listed by the tails of its half-edges.
    ///
    /// An isolated vertex contributes the single-vertex walk `[v]`.
    pub fn face_walks(&self) -> Vec<Vec<usize>> {
        let n = self.rotation.len();
        let mut used: Vec<Vec<bool>> = self.rotation.iter().map(|r| vec![false; r.len()]).collect();
        let mut out = Vec::new();
        for s in 0..n {
            if self.rotation[s].is_empty() {
                out.push(vec![s]);
                continue;
            }
            for k in 0..self.rotation[s].len() {
                if used[s][k] {
                    continue;
                }
                let mut walk = Vec::new();
                let (mut u, mut v) = (s, self.rotation[s][k]);
                loop {
                    let slot = self.rotation[u].iter().position(|&x| x == v).unwrap();
                    if used[u][slot] {
                        break;
                    }
                    used[u][slot] = true;
                    walk.push(u);
                    let w = self.next(v, u);
                    u = v;
                    v = w;
                }
                out.push(walk);
            }
        }
        out
    }
}

/// Embeds a simple undirected graph on `n` vertices.
pub fn embed_graph(n: usize, edges: &[(usize, usize)]) -> Result<PlanarEmbedding, NonPlanar> {
    let mut adj = vec![Vec::new(); n];
    for (id, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, id));
        adj[b].push((a, id));
    }
    let mut rotation = vec![Vec::new(); n];
    for block in blocks(n, &adj) {
        let block_edges: Vec<(usize, usize)> = block.iter().map(|&e| edges[e]).collect();
        for (v, seq) in embed_block(&block_edges)? {
            rotation[v].extend(seq);
        }
    }
    Ok(PlanarEmbedding { rotation })
}

/// Biconnected components as edge-id lists; bridges come out as single edges.
fn blocks(n: usize, adj: &[Vec<(usize, usize)>]) -> Vec<Vec<usize>> {
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut time = 0;
    let mut edge_stack: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        disc[root] = time;
        low[root] = time;
        time += 1;
        // (vertex, parent edge, next neighbor index)
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        while let Some(&mut (u, pe, ref mut next)) = stack.last_mut() {
            if *next < adj[u].len() {
                let (v, id) = adj[u][*next];
                *next += 1;
                if Some(id) == pe {
                    continue;
                }
                if disc[v] == usize::MAX {
                    edge_stack.push(id);
                    disc[v] = time;
                    low[v] = time;
                    time += 1;
                    stack.push((v, Some(id), 0));
                } else if disc[v] < disc[u] {
                    edge_stack.push(id);
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[u]);
                    if low[u] >= disc[p] {
                        let pe = pe.unwrap();
                        let mut block = Vec::new();
                        while let Some(e) = edge_stack.pop() {
                            block.push(e);
                            if e == pe {
                                break;
                            }
                        }
                        block.sort_unstable();
                        out.push(block);
                    }
                }
            }
        }
    }
    out.sort();
    out
}

/// Embeds one biconnected block; returns each vertex's rotation within it.
fn embed_block(edges: &[(usize, usize)]) -> Result<Vec<(usize, Vec<usize>)>, NonPlanar> {
    if edges.len() == 1 {
        let (a, b) = edges[0];
        return Ok(vec![(a, vec![b]), (b, vec![a])]);
    }
    // local vertex numbering
    let mut verts: Vec<usize> = edges.iter().flat_map(|&(a, b)| [a, b]).collect();
    verts.sort_unstable();
    verts.dedup();
    let local = |v: usize| verts.binary_search(&v).unwrap();
    let n = verts.len();
    let e: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (local(a), local(b))).collect();
    let mut adj = vec![Vec::new(); n];
    for (id, &(a, b)) in e.iter().enumerate() {
        adj[a].push((b, id));
        adj[b].push((a, id));
    }
    // Euler bound for simple planar graphs
    if e.len() > 3 * n - 6 {
        return Err(NonPlanar);
    }

    let mut in_h = vec![false; n];
    let mut edge_in = vec![false; e.len()];
    let cycle = initial_cycle(&e, &adj);
    for k in 0..cycle.len() {
        let (a, b) = (cycle[k], cycle[(k + 1) % cycle.len()]);
        in_h[a] = true;
        edge_in[adj[a].iter().find(|&&(x, _)| x == b).unwrap().1] = true;
    }
    let mut faces: Vec<Vec<usize>> = vec![cycle.clone(), cycle.iter().rev().copied().collect()];

    while edge_in.iter().any(|&x| !x) {
        let frags = fragments(&e, &adj, &in_h, &edge_in);
        let mut best: Option<(usize, Vec<usize>)> = None;
        for (fi, frag) in frags.iter().enumerate() {
            let admissible: Vec<usize> = (0..faces.len())
                .filter(|&f| frag.attachments.iter().all(|a| faces[f].contains(a)))
                .collect();
            if admissible.is_empty() {
                return Err(NonPlanar);
            }
            if best
                .as_ref()
                .is_none_or(|(_, b)| admissible.len() < b.len())
            {
                best = Some((fi, admissible));
            }
        }
        let (fi, admissible) = best.expect("at least one fragment");
        let path = frag_path(&frags[fi], &adj, &in_h);
        let f = admissible[0];
        let (a, b) = (path[0], *path.last().unwrap());
        let face = &faces[f];
        let i = face.iter().position(|&x| x == a).unwrap();
        let j = face.iter().position(|&x| x == b).unwrap();
        let inner = &path[1..path.len() - 1];
        let arc = |from: usize, to: usize| {
            let mut out = Vec::new();
            let mut k = from;
            loop {
                out.push(face[k]);
                if k == to {
                    break;
                }
                k = (k + 1) % face.len();
            }
            out
        };
        let mut f1 = arc(i, j);
        f1.extend(inner.iter().rev());
        let mut f2 = arc(j, i);
        f2.extend(inner.iter());
        faces[f] = f1;
        faces.push(f2);
        for w in path.windows(2) {
            in_h[w[0]] = true;
            in_h[w[1]] = true;
            edge_in[adj[w[0]].iter().find(|&&(x, _)| x == w[1]).unwrap().1] = true;
        }
    }

    // rotations from consistently oriented faces: u → v → w gives next(v, u) = w
    let mut succ: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for face in &faces {
        let k = face.len();
        for p in 0..k {
            let (u, v, w) = (face[p], face[(p + 1) % k], face[(p + 2) % k]);
            succ[v].push((u, w));
        }
    }
    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        let start = succ[v].iter().map(|&(u, _)| u).min().unwrap();
        let mut seq = vec![start];
        let mut cur = start;
        loop {
            cur = succ[v].iter().find(|&&(u, _)| u == cur).unwrap().1;
            if cur == start {
                break;
            }
            seq.push(cur);
        }
        debug_assert_eq!(seq.len(), adj[v].len());
        out.push((verts[v], seq.into_iter().map(|u| verts[u]).collect()));
    }
    Ok(out)
}

/// A cycle through the first edge of a biconnected block.
fn initial_cycle(e: &[(usize, usize)], adj: &[Vec<(usize, usize)>]) -> Vec<usize> {
    let (u, v) = e[0];
    // shortest path from v back to u avoiding edge 0
    let mut parent = vec![usize::MAX; adj.len()];
    parent[v] = v;
    let mut queue = std::collections::VecDeque::from([v]);
    while let Some(x) = queue.pop_front() {
        if x == u {
            break;
        }
        for &(y, id) in &adj[x] {
            if id != 0 && parent[y] == usize::MAX {
                parent[y] = x;
                queue.push_back(y);
            }
        }
    }
    let mut cycle = vec![u];
    let mut x = u;
    while x != v {
        x = parent[x];
        cycle.push(x);
    }
    // cycle is u ← ... ← v read backwards from u; any orientation will do
    cycle
}

struct Fragment {
    /// Sorted, deduplicated attachment vertices in the embedded subgraph.
    attachments: Vec<usize>,
    /// A chord `(a, b)`, or component vertices outside the embedded subgraph.
    chord: Option<(usize, usize)>,
    vertices: Vec<usize>,
}

fn fragments(
    e: &[(usize, usize)],
    adj: &[Vec<(usize, usize)>],
    in_h: &[bool],
    edge_in: &[bool],
) -> Vec<Fragment> {
    let mut out = Vec::new();
    for (id, &(a, b)) in e.iter().enumerate() {
        if !edge_in[id] && in_h[a] && in_h[b] {
            out.push(Fragment {
                attachments: vec![a.min(b), a.max(b)],
                chord: Some((a, b)),
                vertices: Vec::new(),
            });
        }
    }
    let n = adj.len();
    let mut seen = vec![false; n];
    for s in 0..n {
        if in_h[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut att = Vec::new();
        let mut k = 0;
        while k < comp.len() {
            let x = comp[k];
            k += 1;
            for &(y, _) in &adj[x] {
                if in_h[y] {
                    att.push(y);
                } else if !seen[y] {
                    seen[y] = true;
                    comp.push(y);
                }
            }
        }
        att.sort_unstable();
        att.dedup();
        comp.sort_unstable();
        out.push(Fragment {
            attachments: att,
            chord: None,
            vertices: comp,
        });
    }
    out
}

/// Path through a fragment between two distinct attachments.
fn frag_path(frag: &Fragment, adj: &[Vec<(usize, usize)>], in_h: &[bool]) -> Vec<usize> {
    if let Some((a, b)) = frag.chord {
        return vec![a, b];
    }
    let a = frag.attachments[0];
    let mut parent = vec![usize::MAX; adj.len()];
    let mut queue = std::collections::VecDeque::new();
    for &(c, _) in &adj[a] {
        if !in_h[c] && frag.vertices.binary_search(&c).is_ok() && parent[c] == usize::MAX {
            parent[c] = a;
            queue.push_back(c);
        }
    }
    while let Some(x) = queue.pop_front() {
        for &(y, _) in &adj[x] {
            if in_h[y] && y != a {
                let mut path = vec![y, x];
                let mut z = x;
                while parent[z] != a {
                    z = parent[z];
                    path.push(z);
                }
                path.push(a);
                path.reverse();
                return path;
            }
            if !in_h[y] && parent[y] == usize::MAX {
                parent[y] = x;
                queue.push_back(y);
            }
        }
    }
    unreachable!("fragment of a biconnected block has two attachments")
}
