use std::fmt;

use serde::{Deserialize, Serialize};

use super::ChemError;
use crate::numerics::Tensor;

/// Element vocabulary: the nine organic-subset heavy atoms plus a bucket for
/// everything else (carried by atomic number).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    C,
    N,
    O,
    F,
    P,
    S,
    Cl,
    Br,
    I,
    Other(u8),
}

/// Width of the element one-hot block (9 organic elements + other).
pub const ELEMENT_SLOTS: usize = 10;
/// Width of the atom feature row: element one-hot, formal charge, aromatic flag.
pub const FEATURE_DIM: usize = ELEMENT_SLOTS + 2;
/// Number of bond relations.
pub const BOND_TYPES: usize = 4;

const PERIODIC: [&str; 55] = [
    "", "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S",
    "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge",
    "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd",
    "In", "Sn", "Sb", "Te", "I", "Xe",
];

impl Element {
    pub const ORGANIC: [Element; 9] = [
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::Br => 35,
            Element::I => 53,
            Element::Other(z) => z,
        }
    }

    pub fn from_atomic_number(z: u8) -> Option<Element> {
        Some(match z {
            6 => Element::C,
            7 => Element::N,
            8 => Element::O,
            9 => Element::F,
            15 => Element::P,
            16 => Element::S,
            17 => Element::Cl,
            35 => Element::Br,
            53 => Element::I,
            z if (1..PERIODIC.len() as u8).contains(&z) => Element::Other(z),
            _ => return None,
        })
    }

    pub fn from_symbol(sym: &str) -> Option<Element> {
        let z = PERIODIC.iter().position(|s| *s == sym)?;
        if z == 0 {
            return None;
        }
        Element::from_atomic_number(z as u8)
    }

    pub fn symbol(self) -> &'static str {
        PERIODIC[self.atomic_number() as usize]
    }

    /// Slot in the element one-hot block.
    pub fn slot(self) -> usize {
        match self {
            Element::Other(_) => ELEMENT_SLOTS - 1,
            e => Element::ORGANIC.iter().position(|&o| o == e).unwrap(),
        }
    }

    /// Inverse of [`Element::slot`] for the organic slots.
    pub fn from_slot(slot: usize) -> Option<Element> {
        Element::ORGANIC.get(slot).copied()
    }

    pub fn is_organic_subset(self) -> bool {
        !matches!(self, Element::Other(_))
    }

    /// Allowed valences, smallest first; empty for elements without defaults.
    pub fn default_valences(self) -> &'static [u8] {
        match self {
            Element::C => &[4],
            Element::N => &[3, 5],
            Element::O => &[2],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::Other(5) => &[3],
            Element::Other(_) => &[],
        }
    }

    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondType {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondType {
    pub const ALL: [BondType; 4] = [
        BondType::Single,
        BondType::Double,
        BondType::Triple,
        BondType::Aromatic,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Bond order with aromatic counted as 1.5.
    pub fn order(self) -> f64 {
        match self {
            BondType::Single => 1.0,
            BondType::Double => 2.0,
            BondType::Triple => 3.0,
            BondType::Aromatic => 1.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub charge: i8,
    pub aromatic: bool,
    /// Hydrogen count fixed by a bracket atom; `None` means derive it from
    /// the default valence.
    pub explicit_h: Option<u8>,
}

impl Atom {
    pub fn new(element: Element) -> Self {
        Self {
            element,
            charge: 0,
            aromatic: false,
            explicit_h: None,
        }
    }

    pub fn aromatic(element: Element) -> Self {
        Self {
            aromatic: true,
            ..Self::new(element)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub kind: BondType,
}

impl Bond {
    pub fn other(&self, i: usize) -> usize {
        if self.a == i {
            self.b
        } else {
            self.a
        }
    }

    pub fn joins(&self, i: usize, j: usize) -> bool {
        (self.a == i && self.b == j) || (self.a == j && self.b == i)
    }
}

/// Heavy-atom molecular graph with optional 3D coordinates (Å).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, usize)>>,
    coords: Option<Vec<[f64; 3]>>,
}

impl Molecule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(
        atoms: Vec<Atom>,
        bonds: &[(usize, usize, BondType)],
    ) -> Result<Self, ChemError> {
        let mut m = Molecule::new();
        for a in atoms {
            m.add_atom(a);
        }
        for &(i, j, k) in bonds {
            m.add_bond(i, j, k)?;
        }
        Ok(m)
    }

    pub fn add_atom(&mut self, atom: Atom) -> usize {
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        if let Some(c) = &mut self.coords {
            c.push([0.0; 3]);
        }
        self.atoms.len() - 1
    }

    pub fn add_bond(&mut self, i: usize, j: usize, kind: BondType) -> Result<usize, ChemError> {
        let n = self.atoms.len();
        if i >= n || j >= n {
            return Err(ChemError::BondOutOfRange { i, j, n });
        }
        if i == j {
            return Err(ChemError::SelfBond(i));
        }
        if self.bond_between(i, j).is_some() {
            return Err(ChemError::DuplicateBond(i.min(j), i.max(j)));
        }
        self.bonds.push(Bond { a: i, b: j, kind });
        let id = self.bonds.len() - 1;
        self.adjacency[i].push((j, id));
        self.adjacency[j].push((i, id));
        Ok(id)
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn atom_mut(&mut self, i: usize) -> &mut Atom {
        &mut self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond(&self, id: usize) -> &Bond {
        &self.bonds[id]
    }

    /// `(neighbor, bond id)` pairs of atom `i`, in insertion order.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond_between(&self, i: usize, j: usize) -> Option<usize> {
        self.adjacency
            .get(i)?
            .iter()
            .find(|&&(k, _)| k == j)
            .map(|&(_, id)| id)
    }

    pub fn bond_type(&self, i: usize, j: usize) -> Option<BondType> {
        self.bond_between(i, j).map(|id| self.bonds[id].kind)
    }

    pub fn coords(&self) -> Option<&[[f64; 3]]> {
        self.coords.as_deref()
    }

    pub fn set_coords(&mut self, coords: Vec<[f64; 3]>) -> Result<(), ChemError> {
        if coords.len() != self.atoms.len() {
            return Err(ChemError::CoordinateCount {
                expected: self.atoms.len(),
                got: coords.len(),
            });
        }
        self.coords = Some(coords);
        Ok(())
    }

    pub fn clear_coords(&mut self) {
        self.coords = None;
    }

    /// Sum of bond orders at atom `i`, aromatic bonds counting 1.5.
    pub fn bond_order_sum(&self, i: usize) -> f64 {
        self.adjacency[i]
            .iter()
            .map(|&(_, id)| self.bonds[id].kind.order())
            .sum()
    }

    /// Valence consumed by heavy-atom bonds when deriving implicit hydrogens.
    /// Aromatic atoms count each aromatic bond once plus one for the pi system.
    pub fn used_valence(&self, i: usize) -> u32 {
        let mut aromatic = 0u32;
        let mut other = 0u32;
        for &(_, id) in &self.adjacency[i] {
            match self.bonds[id].kind {
                BondType::Aromatic => aromatic += 1,
                k => other += k.order() as u32,
            }
        }
        if aromatic > 0 || self.atoms[i].aromatic {
            other + aromatic + 1
        } else {
            other
        }
    }

    /// Hydrogen count implied by the default valence table.
    pub fn implicit_hydrogens(&self, i: usize) -> u8 {
        let used = self.used_valence(i);
        let atom = &self.atoms[i];
        let valences = atom.element.default_valences();
        if atom.charge != 0 {
            return 0;
        }
        for &v in valences {
            if used <= v as u32 {
                return (v as u32 - used) as u8;
            }
        }
        0
    }

    pub fn hydrogens(&self, i: usize) -> u8 {
        self.atoms[i]
            .explicit_h
            .unwrap_or_else(|| self.implicit_hydrogens(i))
    }

    /// Connected components as sorted atom lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        self.components_without(None)
    }

    pub(crate) fn components_without(&self, skip_bond: Option<usize>) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut k = 0;
            while k < comp.len() {
                let u = comp[k];
                k += 1;
                for &(v, id) in &self.adjacency[u] {
                    if Some(id) != skip_bond && !seen[v] {
                        seen[v] = true;
                        comp.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.atoms.len() <= 1 || self.components().len() == 1
    }

    /// Number of independent rings (E − V + components).
    pub fn ring_count(&self) -> usize {
        self.bonds.len() + self.components().len() - self.atoms.len()
    }

    /// Bridges: bonds whose removal disconnects their endpoints.
    pub fn bridges(&self) -> Vec<usize> {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0; n];
        let mut out = Vec::new();
        let mut time = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // (vertex, parent bond, next neighbor index)
            let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
            disc[root] = time;
            low[root] = time;
            time += 1;
            while let Some(&mut (u, pb, ref mut next)) = stack.last_mut() {
                if *next < self.adjacency[u].len() {
                    let (v, id) = self.adjacency[u][*next];
                    *next += 1;
                    if Some(id) == pb {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = time;
                        low[v] = time;
                        time += 1;
                        stack.push((v, Some(id), 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            out.push(pb.unwrap());
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Subgraph induced on `atoms` minus `skip_bond`; atom order follows `atoms`.
    pub fn subgraph(&self, atoms: &[usize], skip_bond: Option<usize>) -> Molecule {
        let mut index = vec![usize::MAX; self.atoms.len()];
        let mut m = Molecule::new();
        for (k, &a) in atoms.iter().enumerate() {
            index[a] = k;
            m.add_atom(self.atoms[a]);
        }
        for (id, b) in self.bonds.iter().enumerate() {
            if Some(id) == skip_bond {
                continue;
            }
            if index[b.a] != usize::MAX && index[b.b] != usize::MAX {
                m.add_bond(index[b.a], index[b.b], b.kind)
                    .expect("subgraph bond");
            }
        }
        if let Some(c) = &self.coords {
            m.coords = Some(atoms.iter().map(|&a| c[a]).collect());
        }
        m
    }

    /// Disjoint union; atoms of `other` are appended after those of `self`.
    pub fn union(&self, other: &Molecule) -> Molecule {
        let mut m = self.clone();
        let off = m.atoms.len();
        let keep_coords = self.coords.is_some() && other.coords.is_some();
        for a in &other.atoms {
            m.add_atom(*a);
        }
        for b in &other.bonds {
            m.add_bond(b.a + off, b.b + off, b.kind)
                .expect("union bond");
        }
        if keep_coords {
            let mut c = self.coords.clone().unwrap();
            c.extend_from_slice(other.coords.as_ref().unwrap());
            m.coords = Some(c);
        } else {
            m.coords = None;
        }
        m
    }

    /// Adjacency tensor `A[i, j, k] = 1` iff atoms `i, j` share a bond of type `k`.
    pub fn adjacency_tensor(&self) -> Tensor {
        let n = self.atoms.len();
        let mut a = Tensor::zeros(&[n, n, BOND_TYPES]);
        for b in &self.bonds {
            a.set3(b.a, b.b, b.kind.index(), 1.0);
            a.set3(b.b, b.a, b.kind.index(), 1.0);
        }
        a
    }

    /// Per-relation `n × n` adjacency matrices.
    pub fn relation_matrices(&self) -> Vec<Tensor> {
        let n = self.atoms.len();
        let mut out = vec![Tensor::zeros(&[n, n]); BOND_TYPES];
        for b in &self.bonds {
            let k = b.kind.index();
            out[k].set2(b.a, b.b, 1.0);
            out[k].set2(b.b, b.a, 1.0);
        }
        out
    }

    /// Node feature matrix `X` (`n × FEATURE_DIM`).
    pub fn feature_matrix(&self) -> Tensor {
        let n = self.atoms.len();
        let mut x = Tensor::zeros(&[n, FEATURE_DIM]);
        for (i, a) in self.atoms.iter().enumerate() {
            x.set2(i, a.element.slot(), 1.0);
            x.set2(i, ELEMENT_SLOTS, a.charge as f64);
            x.set2(i, ELEMENT_SLOTS + 1, if a.aromatic { 1.0 } else { 0.0 });
        }
        x
    }

    /// Checks the structural invariants of the graph.
    pub fn validate(&self) -> Result<(), ChemError> {
        let n = self.atoms.len();
        for (id, b) in self.bonds.iter().enumerate() {
            if b.a >= n || b.b >= n {
                return Err(ChemError::BondOutOfRange { i: b.a, j: b.b, n });
            }
            if self.bonds[..id].iter().any(|o| o.joins(b.a, b.b)) {
                return Err(ChemError::DuplicateBond(b.a.min(b.b), b.a.max(b.b)));
            }
        }
        for a in &self.atoms {
            if a.charge.abs() > 2 {
                return Err(ChemError::UnsupportedCharge(a.charge));
            }
        }
        Ok(())
    }
}

/// `(A, X)` views of a molecule.
pub fn featurize(mol: &Molecule) -> (Tensor, Tensor) {
    (mol.adjacency_tensor(), mol.feature_matrix())
}
