//! Crude distance-geometry layout.
//!
//! Gradient descent on a quadratic strain energy: bonded pairs are pulled to
//! an order-dependent length, 1-3 pairs to the 120° distance, and every other
//! pair is pushed apart until it is at least `clearance` away.

use super::molecule::{BondType, Molecule};
use crate::numerics::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConformerParams {
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
    pub clearance: f64,
}

impl Default for ConformerParams {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.02,
            momentum: 0.9,
            clearance: 3.0,
        }
    }
}

/// Target bond length in Å. Orders are spread apart so that perception can read them back.
pub fn bond_length(kind: BondType) -> f64 {
    match kind {
        BondType::Single => 1.5,
        BondType::Double => 1.3,
        BondType::Triple => 1.15,
        BondType::Aromatic => 1.42,
    }
}

struct Term {
    i: usize,
    j: usize,
    target: f64,
    weight: f64,
    /// Only penalize distances shorter than the target.
    repulsive: bool,
}

fn terms(mol: &Molecule, clearance: f64) -> Vec<Term> {
    let n = mol.atom_count();
    let mut seen = vec![false; n * n];
    let mut out = Vec::new();
    for b in mol.bonds() {
        let l = bond_length(b.kind);
        seen[b.a * n + b.b] = true;
        seen[b.b * n + b.a] = true;
        out.push(Term {
            i: b.a,
            j: b.b,
            target: l,
            weight: 1.0,
            repulsive: false,
        });
    }
    for c in 0..n {
        let nb = mol.neighbors(c);
        for x in 0..nb.len() {
            for y in x + 1..nb.len() {
                let (a, ba) = nb[x];
                let (b, bb) = nb[y];
                if seen[a * n + b] {
                    continue;
                }
                seen[a * n + b] = true;
                seen[b * n + a] = true;
                let la = bond_length(mol.bond(ba).kind);
                let lb = bond_length(mol.bond(bb).kind);
                out.push(Term {
                    i: a,
                    j: b,
                    target: (la * la + lb * lb + la * lb).sqrt(),
                    weight: 0.5,
                    repulsive: false,
                });
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if !seen[i * n + j] {
                out.push(Term {
                    i,
                    j,
                    target: clearance,
                    weight: 0.2,
                    repulsive: true,
                });
            }
        }
    }
    out
}

fn relax(mol: &Molecule, x: &mut [[f64; 3]], fixed: &[bool], p: &ConformerParams) {
    let terms = terms(mol, p.clearance);
    let mut vel = vec![[0.0; 3]; x.len()];
    let mut grad = vec![[0.0; 3]; x.len()];
    for _ in 0..p.steps {
        grad.iter_mut().for_each(|g| *g = [0.0; 3]);
        for t in &terms {
            let d = [
                x[t.i][0] - x[t.j][0],
                x[t.i][1] - x[t.j][1],
                x[t.i][2] - x[t.j][2],
            ];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-9);
            let diff = r - t.target;
            if t.repulsive && diff >= 0.0 {
                continue;
            }
            let s = 2.0 * t.weight * diff / r;
            for k in 0..3 {
                grad[t.i][k] += s * d[k];
                grad[t.j][k] -= s * d[k];
            }
        }
        for a in 0..x.len() {
            if fixed[a] {
                continue;
            }
            for k in 0..3 {
                vel[a][k] = p.momentum * vel[a][k] - p.lr * grad[a][k];
                x[a][k] += vel[a][k];
            }
        }
    }
}

/// Lays out a molecule from a random start.
pub fn embed(mol: &Molecule, rng: &mut Rng, params: &ConformerParams) -> Vec<[f64; 3]> {
    let n = mol.atom_count();
    let box_size = 1.5 * (n as f64).cbrt().max(1.0);
    let mut x: Vec<[f64; 3]> = (0..n)
        .map(|_| [0; 3].map(|_| box_size * (2.0 * rng.uniform() - 1.0)))
        .collect();
    relax(mol, &mut x, &vec![false; n], params);
    centre(&mut x);
    x
}

/// Relaxes only the atoms not marked `fixed`, starting from `init`.
///
/// Fixed atoms keep their coordinates bit-for-bit. Free atoms without a
/// meaningful start should be seeded near a fixed neighbor by the caller.
pub fn relax_with_fixed(
    mol: &Molecule,
    init: &[[f64; 3]],
    fixed: &[bool],
    params: &ConformerParams,
) -> Vec<[f64; 3]> {
    assert_eq!(init.len(), mol.atom_count());
    assert_eq!(fixed.len(), mol.atom_count());
    let mut x = init.to_vec();
    relax(mol, &mut x, fixed, params);
    x
}

fn centre(x: &mut [[f64; 3]]) {
    if x.is_empty() {
        return;
    }
    let mut c = [0.0; 3];
    for p in x.iter() {
        for k in 0..3 {
            c[k] += p[k] / x.len() as f64;
        }
    }
    for p in x.iter_mut() {
        for k in 0..3 {
            p[k] -= c[k];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn bonds_reach_their_targets() {
        for s in [
            "CCOC(=O)c1ccccc1",
            "CC#N",
            "O=S(=O)(Cl)c1ccccc1",
            "CC(C)(C)OC(=O)N",
        ] {
            let m = parse_smiles(s).unwrap();
            let x = embed(&m, &mut Rng::new(7), &ConformerParams::default());
            for b in m.bonds() {
                let d = dist(x[b.a], x[b.b]);
                assert!(
                    (d - bond_length(b.kind)).abs() < 0.08,
                    "{s}: bond {b:?} at {d}"
                );
            }
            // non-bonded atoms stay clear of the bonding cutoff for carbon
            for i in 0..m.atom_count() {
                for j in i + 1..m.atom_count() {
                    if m.bond_between(i, j).is_none() {
                        assert!(dist(x[i], x[j]) > 1.9, "{s}: {i}-{j} too close");
                    }
                }
            }
        }
    }

    #[test]
    fn fixed_atoms_do_not_move() {
        let m = parse_smiles("CCO").unwrap();
        let init = vec![[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [2.0, 0.3, 0.1]];
        let x = relax_with_fixed(&m, &init, &[true, true, false], &ConformerParams::default());
        assert_eq!(x[0], init[0]);
        assert_eq!(x[1], init[1]);
        assert!((dist(x[1], x[2]) - 1.5).abs() < 1e-3);
        assert!((dist(x[0], x[2]) - 1.5 * 3f64.sqrt()).abs() < 1e-2);
    }

    #[test]
    fn deterministic() {
        let m = parse_smiles("c1ccccc1O").unwrap();
        let p = ConformerParams::default();
        assert_eq!(
            embed(&m, &mut Rng::new(3), &p),
            embed(&m, &mut Rng::new(3), &p)
        );
    }
}
