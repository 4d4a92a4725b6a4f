//! Canonical SMILES output.
//!
//! Atoms are ranked by iterative neighborhood refinement seeded with
//! `(element, charge, degree, aromatic, hydrogens)`. Remaining ties are
//! broken by individualizing each candidate of the first tied class and
//! keeping the lexicographically smallest string, so isomorphic inputs
//! always produce the same bytes.

use std::collections::BTreeSet;

use super::molecule::{BondType, Molecule};

/// Upper bound on explored tie-break leaves; past it the first branch wins.
const LEAF_CAP: usize = 4096;

pub fn write_smiles(mol: &Molecule) -> String {
    canonical_smiles(mol).0
}

/// Canonical string plus the output order: `order[k]` is the atom written
/// at position `k`. Re-parsing the string yields atoms in that order.
pub fn canonical_smiles(mol: &Molecule) -> (String, Vec<usize>) {
    if mol.atom_count() == 0 {
        return (String::new(), Vec::new());
    }
    let ranks = refine(mol, initial_ranks(mol));
    let mut search = Search {
        mol,
        leaves: 0,
        best: None,
    };
    search.explore(ranks);
    search.best.expect("at least one leaf")
}

/// Canonical ranks (0 = written first among ties) for every atom.
pub fn canonical_ranks(mol: &Molecule) -> Vec<usize> {
    let (_, order) = canonical_smiles(mol);
    let mut ranks = vec![0; order.len()];
    for (k, &a) in order.iter().enumerate() {
        ranks[a] = k;
    }
    ranks
}

fn initial_ranks(mol: &Molecule) -> Vec<usize> {
    let keys: Vec<_> = (0..mol.atom_count())
        .map(|i| {
            let a = mol.atom(i);
            (
                a.element.atomic_number(),
                a.charge,
                mol.degree(i),
                a.aromatic,
                mol.hydrogens(i),
            )
        })
        .collect();
    dense_rank(&keys)
}

fn dense_rank<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let sorted: BTreeSet<K> = keys.iter().cloned().collect();
    let sorted: Vec<K> = sorted.into_iter().collect();
    keys.iter()
        .map(|k| sorted.binary_search(k).unwrap())
        .collect()
}

fn class_count(ranks: &[usize]) -> usize {
    ranks.iter().collect::<BTreeSet<_>>().len()
}

fn refine(mol: &Molecule, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, usize)>)> = (0..mol.atom_count())
            .map(|i| {
                let mut nb: Vec<(usize, usize)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(j, id)| (ranks[j], mol.bond(id).kind.index()))
                    .collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let next = dense_rank(&keys);
        let c = class_count(&next);
        ranks = next;
        if c == classes {
            return ranks;
        }
        classes = c;
    }
}

/// Atoms `a` and `b` are interchangeable by swapping just the two of them.
fn twins(mol: &Molecule, a: usize, b: usize) -> bool {
    if mol.atom(a) != mol.atom(b) {
        return false;
    }
    let side = |x: usize, other: usize| {
        let mut v: Vec<(usize, BondType)> = mol
            .neighbors(x)
            .iter()
            .filter(|&&(j, _)| j != other)
            .map(|&(j, id)| (j, mol.bond(id).kind))
            .collect();
        v.sort_unstable();
        v
    };
    side(a, b) == side(b, a)
}

struct Search<'a> {
    mol: &'a Molecule,
    leaves: usize,
    best: Option<(String, Vec<usize>)>,
}

impl Search<'_> {
    fn explore(&mut self, ranks: Vec<usize>) {
        let n = ranks.len();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, &r) in ranks.iter().enumerate() {
            members[r].push(i);
        }
        let Some(tied) = members.iter().find(|m| m.len() > 1) else {
            self.leaves += 1;
            let candidate = write_ranked(self.mol, &ranks);
            if self.best.as_ref().is_none_or(|(s, _)| candidate.0 < *s) {
                self.best = Some(candidate);
            }
            return;
        };
        let mut candidates: Vec<usize> = Vec::new();
        for &c in tied {
            if !candidates.iter().any(|&p| twins(self.mol, p, c)) {
                candidates.push(c);
            }
        }
        for (k, &c) in candidates.iter().enumerate() {
            if k > 0 && self.leaves >= LEAF_CAP {
                break;
            }
            let keys: Vec<(usize, bool)> = (0..n).map(|i| (ranks[i], i != c)).collect();
            let next = refine(self.mol, dense_rank(&keys));
            self.explore(next);
        }
    }
}

fn atom_token(mol: &Molecule, i: usize) -> String {
    let a = mol.atom(i);
    let sym = a.element.symbol();
    let lower = a.aromatic && a.element.can_be_aromatic();
    let sym = if lower {
        sym.to_ascii_lowercase()
    } else {
        sym.to_string()
    };
    let h = mol.hydrogens(i);
    let bare = a.element.is_organic_subset() && a.charge == 0 && h == mol.implicit_hydrogens(i);
    if bare {
        return sym;
    }
    let mut s = format!("[{sym}");
    match h {
        0 => {}
        1 => s.push('H'),
        h => s.push_str(&format!("H{h}")),
    }
    match a.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}

fn bond_token(mol: &Molecule, a: usize, b: usize, kind: BondType) -> &'static str {
    let both = mol.atom(a).aromatic && mol.atom(b).aromatic;
    match kind {
        BondType::Single if both => "-",
        BondType::Single => "",
        BondType::Aromatic if both => "",
        BondType::Aromatic => ":",
        BondType::Double => "=",
        BondType::Triple => "#",
    }
}

struct Layout {
    children: Vec<Vec<usize>>,
    /// (partner, bond id) closures opened at each atom.
    opens: Vec<Vec<(usize, usize)>>,
    /// bond ids of closures that end at each atom.
    closes: Vec<Vec<usize>>,
}

fn write_ranked(mol: &Molecule, ranks: &[usize]) -> (String, Vec<usize>) {
    let n = mol.atom_count();
    let sorted_nb: Vec<Vec<(usize, usize)>> = (0..n)
        .map(|i| {
            let mut v = mol.neighbors(i).to_vec();
            v.sort_by_key(|&(j, _)| ranks[j]);
            v
        })
        .collect();
    let mut layout = Layout {
        children: vec![Vec::new(); n],
        opens: vec![Vec::new(); n],
        closes: vec![Vec::new(); n],
    };
    let mut visited = vec![false; n];
    let mut closure_seen = vec![false; mol.bond_count()];
    let mut roots: Vec<usize> = (0..n).collect();
    roots.sort_by_key(|&i| ranks[i]);

    let mut order = Vec::with_capacity(n);
    let mut out = String::new();
    for &root in &roots {
        if visited[root] {
            continue;
        }
        // first pass: spanning tree and ring closures
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        visited[root] = true;
        while let Some(&mut (u, pb, ref mut k)) = stack.last_mut() {
            if *k >= sorted_nb[u].len() {
                stack.pop();
                continue;
            }
            let (v, id) = sorted_nb[u][*k];
            *k += 1;
            if Some(id) == pb {
                continue;
            }
            if visited[v] {
                if !closure_seen[id] {
                    closure_seen[id] = true;
                    layout.opens[v].push((u, id));
                    layout.closes[u].push(id);
                }
            } else {
                visited[v] = true;
                layout.children[u].push(v);
                stack.push((v, Some(id), 0));
            }
        }
        if !out.is_empty() {
            out.push('.');
        }
        let mut digits: Vec<Option<usize>> = vec![None; mol.bond_count()];
        let mut in_use = [false; 100];
        emit(
            mol,
            ranks,
            &layout,
            root,
            None,
            &mut digits,
            &mut in_use,
            &mut out,
            &mut order,
        );
    }
    (out, order)
}

#[allow(clippy::too_many_arguments)]
fn emit(
    mol: &Molecule,
    ranks: &[usize],
    layout: &Layout,
    root: usize,
    root_bond: Option<&'static str>,
    digits: &mut [Option<usize>],
    in_use: &mut [bool; 100],
    out: &mut String,
    order: &mut Vec<usize>,
) {
    // explicit stack of (atom, incoming bond token, phase) to avoid deep recursion
    enum Step {
        Enter(usize, &'static str),
        Open,
        Close,
    }
    let mut stack = vec![Step::Enter(root, root_bond.unwrap_or(""))];
    while let Some(step) = stack.pop() {
        match step {
            Step::Open => out.push('('),
            Step::Close => out.push(')'),
            Step::Enter(u, bond) => {
                out.push_str(bond);
                out.push_str(&atom_token(mol, u));
                order.push(u);
                let mut freed = Vec::new();
                for &id in &layout.closes[u] {
                    let d = digits[id].expect("closure opened before closing");
                    push_digit(out, d);
                    freed.push(d);
                }
                let mut opens = layout.opens[u].clone();
                opens.sort_by_key(|&(p, _)| ranks[p]);
                for (p, id) in opens {
                    let d = (1..100)
                        .find(|&d| !in_use[d] && !freed.contains(&d))
                        .expect("ring digits exhausted");
                    in_use[d] = true;
                    digits[id] = Some(d);
                    out.push_str(bond_token(mol, u, p, mol.bond(id).kind));
                    push_digit(out, d);
                }
                for d in freed {
                    in_use[d] = false;
                }
                let kids = &layout.children[u];
                // push in reverse so the first child is emitted first
                for (k, &c) in kids.iter().enumerate().rev() {
                    let id = mol.bond_between(u, c).unwrap();
                    let tok = bond_token(mol, u, c, mol.bond(id).kind);
                    if k + 1 < kids.len() {
                        stack.push(Step::Close);
                        stack.push(Step::Enter(c, tok));
                        stack.push(Step::Open);
                    } else {
                        stack.push(Step::Enter(c, tok));
                    }
                }
            }
        }
    }
}

fn push_digit(out: &mut String, d: usize) {
    if d < 10 {
        out.push(char::from(b'0' + d as u8));
    } else {
        out.push_str(&format!("%{d:02}"));
    }
}
