//! Geometric check of a combinatorial face enumeration.
//!
//! The embedding is turned into a straight-line drawing: every face is
//! triangulated with fresh vertices, giving a maximal planar (hence
//! 3-connected) graph whose Tutte barycentric drawing is crossing-free.
//! After deleting the added vertices, the drawing's regions are traced by
//! angular order and compared with the enumerated faces.

use std::collections::HashSet;

use gdiffretro::faces::{embed_graph, enumerate_faces, normalize_walk, Face};
use gdiffretro::numerics::Rng;

pub type Point = [f64; 2];

/// Face walks of a straight-line drawing, by angular order at each vertex.
pub fn drawing_faces(n: usize, edges: &[(usize, usize)], pos: &[Point]) -> Vec<Vec<usize>> {
    let mut rot: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in edges {
        rot[a].push(b);
        rot[b].push(a);
    }
    for (v, r) in rot.iter_mut().enumerate() {
        r.sort_by(|&x, &y| {
            let ax = (pos[x][1] - pos[v][1]).atan2(pos[x][0] - pos[v][0]);
            let ay = (pos[y][1] - pos[v][1]).atan2(pos[y][0] - pos[v][0]);
            ax.total_cmp(&ay)
        });
    }
    let mut used = HashSet::new();
    let mut out = Vec::new();
    for s in 0..n {
        if rot[s].is_empty() {
            out.push(vec![s]);
        }
        for &t in &rot[s].clone() {
            if used.contains(&(s, t)) {
                continue;
            }
            let mut walk = Vec::new();
            let (mut u, mut v) = (s, t);
            while used.insert((u, v)) {
                walk.push(u);
                // next edge clockwise from the reverse half-edge
                let r = &rot[v];
                let k = r.iter().position(|&x| x == u).unwrap();
                let w = r[(k + r.len() - 1) % r.len()];
                u = v;
                v = w;
            }
            out.push(walk);
        }
    }
    out
}

fn signed_area(walk: &[usize], pos: &[Point]) -> f64 {
    let k = walk.len();
    (0..k)
        .map(|i| {
            let (p, q) = (pos[walk[i]], pos[walk[(i + 1) % k]]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        / 2.0
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Segments cross or touch at a point other than a shared endpoint.
///
/// Tolerances are relative to segment lengths, since barycentric drawings
/// can pack vertices very tightly.
pub fn segments_clash(p: [Point; 2], q: [Point; 2], shared: bool) -> bool {
    let len = |s: [Point; 2]| (s[1][0] - s[0][0]).hypot(s[1][1] - s[0][1]);
    if shared {
        // only collinear overlap matters when an endpoint is shared
        let (o, a, b) = if p[0] == q[0] || p[0] == q[1] {
            (p[0], p[1], if p[0] == q[0] { q[1] } else { q[0] })
        } else {
            (p[1], p[0], if p[1] == q[0] { q[1] } else { q[0] })
        };
        let sin = orient(o, a, b) / (len([o, a]) * len([o, b]));
        let dot = (a[0] - o[0]) * (b[0] - o[0]) + (a[1] - o[1]) * (b[1] - o[1]);
        return sin.abs() <= 1e-12 && dot > 0.0;
    }
    let (lp, lq) = (len(p), len(q));
    let (ep, eq) = (1e-12 * lp * lp.max(lq), 1e-12 * lq * lp.max(lq));
    let d1 = orient(q[0], q[1], p[0]);
    let d2 = orient(q[0], q[1], p[1]);
    let d3 = orient(p[0], p[1], q[0]);
    let d4 = orient(p[0], p[1], q[1]);
    let opposite = |x: f64, y: f64, e: f64| (x > e && y < -e) || (x < -e && y > e);
    if opposite(d1, d2, eq) && opposite(d3, d4, ep) {
        return true;
    }
    let within = |a: Point, b: Point, c: Point| {
        let t = ((c[0] - a[0]) * (b[0] - a[0]) + (c[1] - a[1]) * (b[1] - a[1]))
            / ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2));
        (0.0..=1.0).contains(&t)
    };
    (d1.abs() <= eq && within(q[0], q[1], p[0]))
        || (d2.abs() <= eq && within(q[0], q[1], p[1]))
        || (d3.abs() <= ep && within(p[0], p[1], q[0]))
        || (d4.abs() <= ep && within(p[0], p[1], q[1]))
}

fn point_segment_distance(c: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let t = (((c[0] - a[0]) * dx + (c[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
    (a[0] + t * dx - c[0]).hypot(a[1] + t * dy - c[1])
}

pub fn first_clash(
    edges: &[(usize, usize)],
    pos: &[Point],
) -> Option<((usize, usize), (usize, usize))> {
    for (k, &(a, b)) in edges.iter().enumerate() {
        for &(c, d) in &edges[k + 1..] {
            let shared = a == c || a == d || b == c || b == d;
            if segments_clash([pos[a], pos[b]], [pos[c], pos[d]], shared) {
                return Some(((a, b), (c, d)));
            }
        }
    }
    None
}

/// Tutte drawing of the face-triangulated graph, original vertices only.
fn draw(n: usize, edges: &[(usize, usize)], faces: &[Face]) -> Result<Vec<Point>, String> {
    let mut aug: Vec<(usize, usize)> = edges.to_vec();
    let mut next = n;
    let mut outer_triangle = None;
    for f in faces {
        let w = &f.boundary;
        let k = w.len();
        let x = next;
        let ys: Vec<usize> = (0..k).map(|i| x + 1 + i).collect();
        next += k + 1;
        for i in 0..k {
            let j = (i + 1) % k;
            aug.extend([(w[i], ys[i]), (ys[i], ys[j]), (x, ys[i]), (w[i], ys[j])]);
        }
        outer_triangle.get_or_insert([x, ys[0], ys[1]]);
    }
    let total = next;
    let mut seen = HashSet::new();
    for &(a, b) in &aug {
        if a == b || !seen.insert((a.min(b), a.max(b))) {
            return Err(format!("augmented graph not simple at {a}-{b}"));
        }
    }
    if aug.len() != 3 * total - 6 {
        return Err(format!(
            "augmented graph has {} edges, not 3V-6 = {}",
            aug.len(),
            3 * total - 6
        ));
    }
    let fixed = outer_triangle.unwrap();
    let corners = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.75f64.sqrt()]];
    let mut nb = vec![Vec::new(); total];
    for &(a, b) in &aug {
        nb[a].push(b);
        nb[b].push(a);
    }
    // free vertices: deg·p_v − Σ_free p_u = Σ_fixed p_u
    let free: Vec<usize> = (0..total).filter(|v| !fixed.contains(v)).collect();
    let mut index = vec![usize::MAX; total];
    for (k, &v) in free.iter().enumerate() {
        index[v] = k;
    }
    let m = free.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut rhs = vec![[0.0; 2]; m];
    for (k, &v) in free.iter().enumerate() {
        a[k][k] = nb[v].len() as f64;
        for &u in &nb[v] {
            if let Some(c) = fixed.iter().position(|&f| f == u) {
                rhs[k][0] += corners[c][0];
                rhs[k][1] += corners[c][1];
            } else {
                a[k][index[u]] -= 1.0;
            }
        }
    }
    let sol = solve(a, rhs)?;
    let mut pos = vec![[0.0; 2]; n];
    for (v, p) in pos.iter_mut().enumerate() {
        *p = match fixed.iter().position(|&f| f == v) {
            Some(c) => corners[c],
            None => sol[index[v]],
        };
    }
    Ok(pos)
}

fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<Point>) -> Result<Vec<Point>, String> {
    let m = a.len();
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[piv][col].abs() < 1e-12 {
            return Err("singular Tutte system".into());
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..m {
            let f = a[r][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..m {
                a[r][c] -= f * a[col][c];
            }
            b[r][0] -= f * b[col][0];
            b[r][1] -= f * b[col][1];
        }
    }
    let mut x = vec![[0.0; 2]; m];
    for r in (0..m).rev() {
        let mut s = b[r];
        for c in r + 1..m {
            s[0] -= a[r][c] * x[c][0];
            s[1] -= a[r][c] * x[c][1];
        }
        x[r] = [s[0] / a[r][r], s[1] / a[r][r]];
    }
    Ok(x)
}

fn walk_multiset(walks: impl IntoIterator<Item = Vec<usize>>) -> Vec<Vec<usize>> {
    let mut v: Vec<Vec<usize>> = walks.into_iter().map(|w| normalize_walk(&w)).collect();
    v.sort();
    v
}

/// Checks a connected planar graph: Euler count, half-edge conservation and
/// agreement with the regions of a straight-line drawing.
pub fn check_planar_graph(n: usize, edges: &[(usize, usize)]) -> Result<(), String> {
    let emb = embed_graph(n, edges).map_err(|_| "reported non-planar".to_string())?;
    let faces = enumerate_faces(&emb);
    let (v, e, f) = (n as i64, edges.len() as i64, faces.len() as i64);
    if v - e + f != 2 {
        return Err(format!("Euler fails: V={v} E={e} F={f}"));
    }
    if n > 1 && faces.iter().map(|f| f.boundary.len()).sum::<usize>() != 2 * edges.len() {
        return Err("boundary half-edges differ from 2E".into());
    }
    if faces.iter().filter(|f| f.is_outer()).count() != 1 {
        return Err("not exactly one outer face".into());
    }
    if n <= 2 {
        // a point or a single edge: one face, nothing to draw
        return if f == 1 {
            Ok(())
        } else {
            Err("expected one face".into())
        };
    }
    let pos = draw(n, edges, &faces)?;
    if let Some((p, q)) = first_clash(edges, &pos) {
        let at = |e: (usize, usize)| (pos[e.0], pos[e.1]);
        return Err(format!(
            "drawing has crossing edges {p:?} {:?} and {q:?} {:?}",
            at(p),
            at(q)
        ));
    }
    let drawn = drawing_faces(n, edges, &pos);
    let areas: Vec<f64> = drawn.iter().map(|w| signed_area(w, &pos)).collect();
    let negative = areas.iter().filter(|&&a| a < 0.0).count();
    let total: f64 = areas.iter().sum();
    let scale: f64 = areas.iter().map(|a| a.abs()).sum();
    if negative != 1 && negative != areas.len() - 1 {
        return Err(format!("region areas have wrong signs: {areas:?}"));
    }
    if total.abs() > 1e-9 * scale.max(1.0) {
        return Err(format!("region areas do not cancel: {total}"));
    }
    let ours = walk_multiset(faces.iter().map(|f| f.boundary.clone()));
    let theirs = walk_multiset(drawn.iter().cloned());
    let mirrored = walk_multiset(drawn.iter().map(|w| w.iter().rev().copied().collect()));
    if ours != theirs && ours != mirrored {
        return Err(format!(
            "face walks differ: ours {ours:?} drawing {theirs:?}"
        ));
    }
    Ok(())
}

/// Random connected plane graph: random points joined by non-crossing
/// segments in order of increasing length, up to a random edge budget.
pub fn random_plane_graph(rng: &mut Rng, max_n: usize) -> (usize, Vec<(usize, usize)>, Vec<Point>) {
    loop {
        let n = 1 + rng.below(max_n);
        let pos: Vec<Point> = (0..n).map(|_| [rng.uniform(), rng.uniform()]).collect();
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        let len = |&(a, b): &(usize, usize)| (pos[a][0] - pos[b][0]).hypot(pos[a][1] - pos[b][1]);
        pairs.sort_by(|p, q| len(p).total_cmp(&len(q)));
        let max_e = if n < 3 { n - 1 } else { 3 * n - 6 };
        let budget = if n < 2 {
            0
        } else {
            n - 1 + rng.below(max_e - (n - 1) + 1)
        };
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (a, b) in pairs {
            if edges.len() == budget {
                break;
            }
            let clash = edges.iter().any(|&(c, d)| {
                let shared = a == c || a == d || b == c || b == d;
                segments_clash([pos[a], pos[b]], [pos[c], pos[d]], shared)
            }) || (0..n)
                .any(|v| v != a && v != b && point_segment_distance(pos[v], pos[a], pos[b]) < 1e-6);
            if !clash {
                edges.push((a, b));
            }
        }
        let mut comp: Vec<usize> = (0..n).collect();
        fn find(c: &mut [usize], x: usize) -> usize {
            if c[x] != x {
                c[x] = find(c, c[x]);
            }
            c[x]
        }
        for &(a, b) in &edges {
            let (ra, rb) = (find(&mut comp, a), find(&mut comp, b));
            comp[ra] = rb;
        }
        let roots: HashSet<usize> = (0..n).map(|v| find(&mut comp, v)).collect();
        if roots.len() == 1 {
            return (n, edges, pos);
        }
    }
}
