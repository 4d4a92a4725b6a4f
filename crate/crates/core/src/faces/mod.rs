//! Faces of a molecular graph and its dual.
//!
//! Planar molecules are embedded combinatorially and their faces traced from
//! the rotation system. The dual graph has a node per face (the unbounded
//! one included) and an edge per non-bridge bond, typed by the bond it
//! crosses. Non-planar molecules fall back to ring perception plus a single
//! catch-all face.

mod embed;
mod sssr;

use std::fmt;

use crate::chem::{BondType, Molecule};
use crate::numerics::Tensor;

pub use embed::{embed_graph, NonPlanar, PlanarEmbedding};
pub use sssr::sssr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum FaceKind {
    Inner,
    Outer,
    /// Fallback face holding every atom of a non-planar graph.
    CatchAll,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Face {
    /// Closed boundary walk; vertices repeat where the walk passes a cut vertex
    /// twice. For the catch-all face, the sorted atom list.
    pub boundary: Vec<usize>,
    pub kind: FaceKind,
}

impl Face {
    pub fn is_outer(&self) -> bool {
        self.kind != FaceKind::Inner
    }

    /// Distinct boundary vertices, sorted.
    pub fn vertices(&self) -> Vec<usize> {
        let mut v = self.boundary.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn is_walk(&self) -> bool {
        self.kind != FaceKind::CatchAll
    }
}

/// Rotates a closed walk to its lexicographically smallest starting point.
pub fn normalize_walk(walk: &[usize]) -> Vec<usize> {
    (0..walk.len().max(1))
        .map(|k| {
            walk[k..]
                .iter()
                .chain(&walk[..k])
                .copied()
                .collect::<Vec<_>>()
        })
        .min()
        .unwrap_or_default()
}

pub fn planar_embed(mol: &Molecule) -> Result<PlanarEmbedding, NonPlanar> {
    embed_graph(mol.atom_count(), &bond_pairs(mol))
}

fn bond_pairs(mol: &Molecule) -> Vec<(usize, usize)> {
    mol.bonds().iter().map(|b| (b.a, b.b)).collect()
}

/// Faces of an embedding, sorted by normalized boundary.
///
/// In each connected component, the face with the longest boundary is the
/// outer one; ties go to the lexicographically smallest boundary.
pub fn enumerate_faces(emb: &PlanarEmbedding) -> Vec<Face> {
    let n = emb.vertex_count();
    let mut comp = vec![usize::MAX; n];
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = s;
        let mut stack = vec![s];
        while let Some(x) = stack.pop() {
            for &y in emb.rotation(x) {
                if comp[y] == usize::MAX {
                    comp[y] = s;
                    stack.push(y);
                }
            }
        }
    }
    let mut faces: Vec<Face> = emb
        .face_walks()
        .iter()
        .map(|w| Face {
            boundary: normalize_walk(w),
            kind: FaceKind::Inner,
        })
        .collect();
    faces.sort_by(|a, b| a.boundary.cmp(&b.boundary));
    let mut best: Vec<Option<usize>> = vec![None; n];
    for (k, f) in faces.iter().enumerate() {
        let c = comp[f.boundary[0]];
        // faces are sorted, so the first longest boundary wins ties
        if best[c].is_none_or(|b| f.boundary.len() > faces[b].boundary.len()) {
            best[c] = Some(k);
        }
    }
    for k in best.into_iter().flatten() {
        faces[k].kind = FaceKind::Outer;
    }
    faces
}

/// Ring faces plus one catch-all face, for molecules without a planar embedding.
pub fn fallback_faces(mol: &Molecule) -> Vec<Face> {
    assert!(
        planar_embed(mol).is_err(),
        "fallback faces requested for a planar graph"
    );
    let rings = sssr(mol.atom_count(), &bond_pairs(mol));
    assert!(!rings.is_empty(), "a non-planar graph has rings");
    let mut faces: Vec<Face> = rings
        .into_iter()
        .map(|boundary| Face {
            boundary,
            kind: FaceKind::Inner,
        })
        .collect();
    faces.push(Face {
        boundary: (0..mol.atom_count()).collect(),
        kind: FaceKind::CatchAll,
    });
    faces
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DualEdge {
    pub a: usize,
    pub b: usize,
    pub kind: BondType,
    /// The crossed bond.
    pub bond: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualGraph {
    pub faces: Vec<Face>,
    pub edges: Vec<DualEdge>,
    /// Face feature rows: mean atom features over each face.
    pub features: Tensor,
    /// `membership[i]`: sorted faces containing atom `i`.
    pub membership: Vec<Vec<usize>>,
    pub planar: bool,
}

impl DualGraph {
    pub fn node_count(&self) -> usize {
        self.faces.len()
    }

    /// Per-relation dual adjacency matrices, parallel edges counted.
    pub fn relation_matrices(&self) -> Vec<Tensor> {
        let f = self.faces.len();
        let mut out = vec![Tensor::zeros(&[f, f]); BondType::ALL.len()];
        for e in &self.edges {
            let m = &mut out[e.kind.index()];
            m.set2(e.a, e.b, m.get2(e.a, e.b) + 1.0);
            m.set2(e.b, e.a, m.get2(e.b, e.a) + 1.0);
        }
        out
    }

    /// Atom-by-face incidence matrix `M[i, f] = 1` iff `f ∈ F_i`.
    pub fn membership_matrix(&self) -> Tensor {
        let mut m = Tensor::zeros(&[self.membership.len(), self.faces.len()]);
        for (i, fs) in self.membership.iter().enumerate() {
            for &f in fs {
                m.set2(i, f, 1.0);
            }
        }
        m
    }
}

/// Dual graph over precomputed faces.
///
/// Each bond is crossed by one dual edge between the two faces on its sides.
/// A bond with the same face on both sides (a bridge) gets none. Against
/// fallback faces, a ring bond lying in a single ring links that ring to the
/// catch-all face.
pub fn build_dual(mol: &Molecule, faces: Vec<Face>) -> DualGraph {
    let n = mol.atom_count();
    let mut sides: Vec<Vec<usize>> = vec![Vec::new(); mol.bond_count()];
    for (f, face) in faces.iter().enumerate().filter(|(_, f)| f.is_walk()) {
        let k = face.boundary.len();
        if k < 2 {
            continue;
        }
        for p in 0..k {
            let (u, v) = (face.boundary[p], face.boundary[(p + 1) % k]);
            if let Some(id) = mol.bond_between(u, v) {
                sides[id].push(f);
            }
        }
    }
    let catch_all = faces.iter().position(|f| f.kind == FaceKind::CatchAll);
    let mut edges = Vec::new();
    for (id, s) in sides.iter_mut().enumerate() {
        if let (Some(c), 1) = (catch_all, s.len()) {
            s.push(c);
        }
        if s.len() >= 2 && s[0] != s[1] {
            edges.push(DualEdge {
                a: s[0].min(s[1]),
                b: s[0].max(s[1]),
                kind: mol.bond(id).kind,
                bond: id,
            });
        }
    }
    let mut membership = vec![Vec::new(); n];
    for (f, face) in faces.iter().enumerate() {
        for v in face.vertices() {
            membership[v].push(f);
        }
    }
    let mut dual = DualGraph {
        planar: catch_all.is_none(),
        features: Tensor::zeros(&[faces.len(), crate::chem::FEATURE_DIM]),
        faces,
        edges,
        membership,
    };
    dual.features = dual_node_features(mol, &dual);
    dual
}

/// `X_d[f] = mean of X[i]` over the distinct atoms of face `f`.
pub fn dual_node_features(mol: &Molecule, dual: &DualGraph) -> Tensor {
    let x = mol.feature_matrix();
    let d = x.cols();
    let mut out = Tensor::zeros(&[dual.faces.len(), d]);
    for (f, face) in dual.faces.iter().enumerate() {
        let verts = face.vertices();
        let count = verts.len() as f64;
        let row = out.row_mut(f);
        for v in verts {
            for (o, xv) in row.iter_mut().zip(x.row(v)) {
                *o += xv;
            }
        }
        row.iter_mut().for_each(|o| *o /= count);
    }
    out
}

/// Faces and dual graph, falling back to ring perception when non-planar.
pub fn dual_graph(mol: &Molecule) -> DualGraph {
    let faces = match planar_embed(mol) {
        Ok(emb) => enumerate_faces(&emb),
        Err(NonPlanar) => fallback_faces(mol),
    };
    build_dual(mol, faces)
}

const BOND_NAMES: [&str; 4] = ["single", "double", "triple", "aromatic"];

impl fmt::Display for DualGraph {
    /// Stable listing: one `face` line per dual node, then one `edge` line per dual edge.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "faces {} edges {} planar {}",
            self.faces.len(),
            self.edges.len(),
            self.planar
        )?;
        for (k, face) in self.faces.iter().enumerate() {
            let kind = match face.kind {
                FaceKind::Inner => "inner",
                FaceKind::Outer => "outer",
                FaceKind::CatchAll => "catch-all",
            };
            let atoms: Vec<String> = face.boundary.iter().map(usize::to_string).collect();
            writeln!(f, "face {k} {kind} [{}]", atoms.join(" "))?;
        }
        for e in &self.edges {
            writeln!(
                f,
                "edge {} {} {} bond {}",
                e.a,
                e.b,
                BOND_NAMES[e.kind.index()],
                e.bond
            )?;
        }
        Ok(())
    }
}
