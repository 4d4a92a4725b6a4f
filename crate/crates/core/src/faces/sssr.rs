//! Smallest set of smallest rings via Horton candidates and GF(2) elimination.

use std::collections::VecDeque;

/// Rings as vertex cycles, each starting at its smallest vertex and heading
/// to the smaller of that vertex's two ring neighbors.
pub fn sssr(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let m = edges.len();
    let mut adj = vec![Vec::new(); n];
    for (id, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, id));
        adj[b].push((a, id));
    }
    let components = {
        let mut comp = vec![usize::MAX; n];
        let mut c = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = c;
            let mut stack = vec![s];
            while let Some(x) = stack.pop() {
                for &(y, _) in &adj[x] {
                    if comp[y] == usize::MAX {
                        comp[y] = c;
                        stack.push(y);
                    }
                }
            }
            c += 1;
        }
        c
    };
    let want = m + components - n;
    if want == 0 {
        return Vec::new();
    }

    let words = m.div_ceil(64);
    let mut candidates: Vec<(usize, Vec<u64>)> = Vec::new();
    for v in 0..n {
        // BFS tree from v with edge-id parents
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];
        let mut dist = vec![usize::MAX; n];
        dist[v] = 0;
        let mut q = VecDeque::from([v]);
        while let Some(x) = q.pop_front() {
            for &(y, id) in &adj[x] {
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    parent[y] = Some((x, id));
                    q.push_back(y);
                }
            }
        }
        let path = |mut x: usize| {
            let mut verts = vec![x];
            let mut ids = Vec::new();
            while let Some((p, id)) = parent[x] {
                ids.push(id);
                verts.push(p);
                x = p;
            }
            (verts, ids)
        };
        for (id, &(a, b)) in edges.iter().enumerate() {
            if dist[a] == usize::MAX
                || parent[a].map(|p| p.1) == Some(id)
                || parent[b].map(|p| p.1) == Some(id)
            {
                continue;
            }
            let (va, ea) = path(a);
            let (vb, eb) = path(b);
            // simple only if the two tree paths meet at v alone
            if va[..va.len() - 1]
                .iter()
                .any(|x| vb[..vb.len() - 1].contains(x))
            {
                continue;
            }
            let mut bits = vec![0u64; words];
            for e in ea.iter().chain(&eb).chain([&id]) {
                bits[e / 64] ^= 1 << (e % 64);
            }
            candidates.push((ea.len() + eb.len() + 1, bits));
        }
    }
    candidates.sort();
    candidates.dedup();

    // greedy independence over GF(2), reduced basis keyed by pivot bit
    let mut basis: Vec<(usize, Vec<u64>)> = Vec::new();
    let mut rings = Vec::new();
    for (_, bits) in candidates {
        let mut r = bits.clone();
        for (pivot, row) in &basis {
            if r[pivot / 64] >> (pivot % 64) & 1 == 1 {
                r.iter_mut().zip(row).for_each(|(x, y)| *x ^= y);
            }
        }
        let Some(pivot) = (0..m).find(|&e| r[e / 64] >> (e % 64) & 1 == 1) else {
            continue;
        };
        basis.push((pivot, r));
        rings.push(cycle_from_bits(&bits, edges, n));
        if rings.len() == want {
            break;
        }
    }
    rings
}

fn cycle_from_bits(bits: &[u64], edges: &[(usize, usize)], n: usize) -> Vec<usize> {
    let mut nb = vec![Vec::new(); n];
    for (e, &(a, b)) in edges.iter().enumerate() {
        if bits[e / 64] >> (e % 64) & 1 == 1 {
            nb[a].push(b);
            nb[b].push(a);
        }
    }
    let start = (0..n).find(|&v| !nb[v].is_empty()).unwrap();
    let mut cycle = vec![start];
    let mut prev = start;
    let mut cur = *nb[start].iter().min().unwrap();
    while cur != start {
        cycle.push(cur);
        let next = if nb[cur][0] == prev {
            nb[cur][1]
        } else {
            nb[cur][0]
        };
        prev = cur;
        cur = next;
    }
    cycle
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naphthalene_like() {
        // two fused hexagons sharing edge 0-5
        let mut e: Vec<_> = (0..6).map(|i| (i, (i + 1) % 6)).collect();
        e.extend([(5, 6), (6, 7), (7, 8), (8, 9), (9, 0)]);
        let r = sssr(10, &e);
        assert_eq!(r.len(), 2);
        assert!(r.iter().all(|c| c.len() == 6));
        assert_eq!(r[0], vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn k5_has_six_triangles() {
        let e: Vec<_> = (0..5)
            .flat_map(|i| (i + 1..5).map(move |j| (i, j)))
            .collect();
        let r = sssr(5, &e);
        assert_eq!(r.len(), 6);
        assert!(r.iter().all(|c| c.len() == 3));
    }

    #[test]
    fn trees_have_none() {
        assert!(sssr(3, &[(0, 1), (1, 2)]).is_empty());
    }
}
