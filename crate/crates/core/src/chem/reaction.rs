use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::canon::{canonical_smiles, write_smiles};
use super::molecule::Molecule;
use super::smiles::parse_smiles;
use super::ChemError;

/// A molecule whose atoms carry atom-map numbers (`0` = unmapped).
#[derive(Clone, Debug, PartialEq)]
pub struct MappedMolecule {
    pub mol: Molecule,
    pub maps: Vec<u32>,
}

impl MappedMolecule {
    pub fn new(mol: Molecule, maps: Vec<u32>) -> Result<Self, ChemError> {
        if maps.len() != mol.atom_count() {
            return Err(ChemError::MapCount {
                atoms: mol.atom_count(),
                maps: maps.len(),
            });
        }
        Ok(Self { mol, maps })
    }

    pub fn unmapped(mol: Molecule) -> Self {
        let n = mol.atom_count();
        Self {
            mol,
            maps: vec![0; n],
        }
    }

    pub fn atom_with_map(&self, map: u32) -> Option<usize> {
        self.maps.iter().position(|&m| m == map)
    }
}

/// Single-product reaction with atom maps on both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct Reaction {
    pub product: MappedMolecule,
    pub reactants: Vec<MappedMolecule>,
    pub class_id: Option<u8>,
}

impl Reaction {
    pub fn new(
        product: MappedMolecule,
        reactants: Vec<MappedMolecule>,
        class_id: Option<u8>,
    ) -> Result<Self, ChemError> {
        if !product.mol.is_connected() {
            return Err(ChemError::MultiProduct);
        }
        let r = Self {
            product,
            reactants,
            class_id,
        };
        r.check_maps()?;
        Ok(r)
    }

    /// Every product atom is mapped and its map occurs exactly once on the reactant side.
    pub fn check_maps(&self) -> Result<(), ChemError> {
        let mut seen: HashMap<u32, usize> = HashMap::new();
        for r in &self.reactants {
            for &m in r.maps.iter().filter(|&&m| m != 0) {
                *seen.entry(m).or_default() += 1;
            }
        }
        for (i, &m) in self.product.maps.iter().enumerate() {
            if m == 0 {
                return Err(ChemError::MissingAtomMap { atom: i });
            }
            match seen.get(&m) {
                Some(1) => {}
                Some(_) => return Err(ChemError::DuplicateAtomMap(m)),
                None => return Err(ChemError::MissingAtomMap { atom: i }),
            }
        }
        Ok(())
    }

    /// `(reactant index, atom index)` holding each map number.
    fn reactant_lookup(&self) -> HashMap<u32, (usize, usize)> {
        let mut out = HashMap::new();
        for (r, m) in self.reactants.iter().enumerate() {
            for (a, &map) in m.maps.iter().enumerate() {
                if map != 0 {
                    out.insert(map, (r, a));
                }
            }
        }
        out
    }

    /// Order-insensitive canonical string of the reactant set.
    pub fn reactant_set_key(&self) -> String {
        reactant_set_key(self.reactants.iter().map(|r| &r.mol))
    }

    /// Product bonds absent between the mapped reactant atoms (`i < j`).
    pub fn broken_bonds(&self) -> Result<Vec<(usize, usize)>, ChemError> {
        self.check_maps()?;
        let lookup = self.reactant_lookup();
        let p = &self.product;
        let mut out = Vec::new();
        for b in p.mol.bonds() {
            let (ra, ia) = lookup[&p.maps[b.a]];
            let (rb, ib) = lookup[&p.maps[b.b]];
            let present = ra == rb && self.reactants[ra].mol.bond_between(ia, ib).is_some();
            if !present {
                out.push((b.a.min(b.b), b.a.max(b.b)));
            }
        }
        out.sort_unstable();
        Ok(out)
    }
}

/// Sorted canonical strings joined by `.`.
pub fn reactant_set_key<'a>(mols: impl IntoIterator<Item = &'a Molecule>) -> String {
    let mut parts: Vec<String> = mols.into_iter().map(write_smiles).collect();
    parts.sort();
    parts.join(".")
}

/// Binary `n × n` reaction-center label matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMatrix {
    n: usize,
    data: Vec<u8>,
}

impl LabelMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0; n * n],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.n + j]
    }

    fn set_pair(&mut self, i: usize, j: usize) {
        self.data[i * self.n + j] = 1;
        self.data[j * self.n + i] = 1;
    }

    /// Positive pairs with `i < j`.
    pub fn positives(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.get(i, j) == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn total(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }
}

pub fn derive_center_labels(rxn: &Reaction) -> Result<LabelMatrix, ChemError> {
    let mut y = LabelMatrix::zeros(rxn.product.mol.atom_count());
    for (i, j) in rxn.broken_bonds()? {
        y.set_pair(i, j);
    }
    Ok(y)
}

/// Product fragment left after cutting the reaction-center bond.
#[derive(Clone, Debug, PartialEq)]
pub struct Synthon {
    pub parent: Molecule,
    /// Sorted parent atom indices.
    pub atom_ids: Vec<usize>,
    pub broken_bond: (usize, usize),
}

impl Synthon {
    /// The fragment as a standalone molecule; atom `k` is `atom_ids[k]`.
    pub fn to_molecule(&self) -> Molecule {
        let id = self
            .parent
            .bond_between(self.broken_bond.0, self.broken_bond.1);
        self.parent.subgraph(&self.atom_ids, id)
    }

    /// Local indices of the fragment atoms that lost the cut bond.
    pub fn anchors(&self) -> Vec<usize> {
        self.atom_ids
            .iter()
            .enumerate()
            .filter(|&(_, &a)| a == self.broken_bond.0 || a == self.broken_bond.1)
            .map(|(k, _)| k)
            .collect()
    }
}

pub fn extract_synthons(
    product: &Molecule,
    bond: (usize, usize),
) -> Result<Vec<Synthon>, ChemError> {
    let (i, j) = bond;
    let id = product
        .bond_between(i, j)
        .ok_or(ChemError::NotABond(i, j))?;
    let comps = product.components_without(Some(id));
    let find = |a: usize| comps.iter().position(|c| c.contains(&a)).unwrap();
    let (ci, cj) = (find(i), find(j));
    let mut picked = vec![ci];
    if cj != ci {
        picked.push(cj);
    }
    picked.sort_by_key(|&c| comps[c][0]);
    Ok(picked
        .into_iter()
        .map(|c| Synthon {
            parent: product.clone(),
            atom_ids: comps[c].clone(),
            broken_bond: (i.min(j), i.max(j)),
        })
        .collect())
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ProductField {
    One(String),
    Many(Vec<String>),
}

#[derive(Serialize, Deserialize, Default)]
struct MapsField {
    product: Vec<u32>,
    reactants: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize, Default)]
struct CoordsField {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    product: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reactants: Option<Vec<Vec<[f64; 3]>>>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    product: ProductField,
    reactants: Vec<String>,
    maps: MapsField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coords: Option<CoordsField>,
}

/// Parses one corpus line.
pub fn parse_record(line: &str) -> Result<Reaction, ChemError> {
    let rec: RecordLine =
        serde_json::from_str(line).map_err(|e| ChemError::Record(e.to_string()))?;
    let product_smiles = match rec.product {
        ProductField::One(s) => s,
        ProductField::Many(v) if v.len() == 1 => v.into_iter().next().unwrap(),
        ProductField::Many(_) => return Err(ChemError::MultiProduct),
    };
    let mut product = parse_smiles(&product_smiles)?;
    if !product.is_connected() {
        return Err(ChemError::MultiProduct);
    }
    if rec.maps.reactants.len() != rec.reactants.len() {
        return Err(ChemError::Record(format!(
            "{} reactants but {} reactant map lists",
            rec.reactants.len(),
            rec.maps.reactants.len()
        )));
    }
    let coords = rec.coords.unwrap_or_default();
    if let Some(c) = coords.product {
        product.set_coords(c)?;
    }
    let product = MappedMolecule::new(product, rec.maps.product)?;
    let mut reactants = Vec::with_capacity(rec.reactants.len());
    for (k, (s, maps)) in rec.reactants.iter().zip(rec.maps.reactants).enumerate() {
        let mut mol = parse_smiles(s)?;
        if let Some(c) = coords.reactants.as_ref().and_then(|r| r.get(k)) {
            mol.set_coords(c.clone())?;
        }
        reactants.push(MappedMolecule::new(mol, maps)?);
    }
    if let Some(c) = rec.class {
        if !(1..=10).contains(&c) {
            return Err(ChemError::Record(format!("class {c} outside 1..=10")));
        }
    }
    Reaction::new(product, reactants, rec.class)
}

/// Serializes a reaction as one corpus line (no trailing newline).
///
/// Molecules are written canonically and their maps permuted to match.
pub fn format_record(rxn: &Reaction) -> String {
    let write = |m: &MappedMolecule| {
        let (s, order) = canonical_smiles(&m.mol);
        let maps: Vec<u32> = order.iter().map(|&a| m.maps[a]).collect();
        let coords = m
            .mol
            .coords()
            .map(|c| order.iter().map(|&a| c[a]).collect::<Vec<_>>());
        (s, maps, coords)
    };
    let (ps, pm, pc) = write(&rxn.product);
    let mut rs = Vec::new();
    let mut rm = Vec::new();
    let mut rc = Vec::new();
    for r in &rxn.reactants {
        let (s, m, c) = write(r);
        rs.push(s);
        rm.push(m);
        rc.push(c);
    }
    let coords = if pc.is_some() || rc.iter().any(Option::is_some) {
        Some(CoordsField {
            product: pc,
            reactants: if rc.iter().all(Option::is_some) {
                Some(rc.into_iter().map(Option::unwrap).collect())
            } else {
                None
            },
        })
    } else {
        None
    };
    let line = RecordLine {
        product: ProductField::One(ps),
        reactants: rs,
        maps: MapsField {
            product: pm,
            reactants: rm,
        },
        class: rxn.class_id,
        coords,
    };
    serde_json::to_string(&line).expect("record serializes")
}

/// Reads a line-delimited corpus; blank lines are skipped.
pub fn load_reactions(path: impl AsRef<Path>) -> Result<Vec<Reaction>, ChemError> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| ChemError::Io(e.to_string()))?;
    parse_reactions(&text)
}

pub fn parse_reactions(text: &str) -> Result<Vec<Reaction>, ChemError> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(line) {
            Ok(r) => out.push(r),
            Err(ChemError::MultiProduct) => {
                return Err(ChemError::MultiProductRecord { line: k + 1 })
            }
            Err(e) => {
                return Err(ChemError::MalformedRecord {
                    line: k + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_reactions(path: impl AsRef<Path>, reactions: &[Reaction]) -> Result<(), ChemError> {
    let mut f = fs::File::create(path.as_ref()).map_err(|e| ChemError::Io(e.to_string()))?;
    for r in reactions {
        writeln!(f, "{}", format_record(r)).map_err(|e| ChemError::Io(e.to_string()))?;
    }
    Ok(())
}

/// Distinct canonical product strings, for splitting corpora without leakage.
pub fn distinct_products(reactions: &[Reaction]) -> BTreeSet<String> {
    reactions
        .iter()
        .map(|r| write_smiles(&r.product.mol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(product: &str, pm: &[u32], reactants: &[(&str, &[u32])]) -> Reaction {
        let product = MappedMolecule::new(parse_smiles(product).unwrap(), pm.to_vec()).unwrap();
        let reactants = reactants
            .iter()
            .map(|(s, m)| MappedMolecule::new(parse_smiles(s).unwrap(), m.to_vec()).unwrap())
            .collect();
        Reaction::new(product, reactants, None).unwrap()
    }

    #[test]
    fn identical_product_and_reactant() {
        let r = record("CCO", &[1, 2, 3], &[("CCO", &[1, 2, 3])]);
        assert_eq!(derive_center_labels(&r).unwrap().total(), 0);
    }

    #[test]
    fn ethanol_from_ethane_and_water() {
        let r = record("CCO", &[1, 2, 3], &[("CC", &[1, 2]), ("O", &[3])]);
        let y = derive_center_labels(&r).unwrap();
        // atoms mapped 2 and 3 are indices 1 and 2
        assert_eq!(y.positives(), vec![(1, 2)]);
        assert_eq!(y.get(1, 2), 1);
        assert_eq!(y.get(2, 1), 1);
        assert_eq!(y.total(), 2);
    }

    #[test]
    fn missing_map_is_an_error() {
        let product = MappedMolecule::new(parse_smiles("CC").unwrap(), vec![1, 0]).unwrap();
        let reactant = MappedMolecule::new(parse_smiles("CC").unwrap(), vec![1, 2]).unwrap();
        assert!(matches!(
            Reaction::new(product, vec![reactant], None),
            Err(ChemError::MissingAtomMap { atom: 1 })
        ));
    }

    #[test]
    fn bridge_gives_two_synthons() {
        let m = parse_smiles("CCO").unwrap();
        let s = extract_synthons(&m, (1, 2)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].atom_ids, vec![0, 1]);
        assert_eq!(s[1].atom_ids, vec![2]);
        assert_eq!(s[0].anchors(), vec![1]);
    }

    #[test]
    fn ring_bond_gives_one_synthon() {
        let m = parse_smiles("c1ccccc1").unwrap();
        let s = extract_synthons(&m, (0, 5)).unwrap();
        assert_eq!(s.len(), 1);
        let frag = s[0].to_molecule();
        assert_eq!((frag.atom_count(), frag.bond_count()), (6, 5));
    }

    #[test]
    fn not_a_bond() {
        let m = parse_smiles("CCO").unwrap();
        assert!(matches!(
            extract_synthons(&m, (0, 2)),
            Err(ChemError::NotABond(0, 2))
        ));
    }

    #[test]
    fn record_lines() {
        assert!(parse_reactions("").unwrap().is_empty());
        let line = r#"{"product":"CCO","reactants":["CC","O"],"maps":{"product":[1,2,3],"reactants":[[1,2],[3]]},"class":1}"#;
        let r = parse_reactions(line).unwrap();
        assert_eq!(r.len(), 1);
        let again = parse_record(&format_record(&r[0])).unwrap();
        assert_eq!(derive_center_labels(&again).unwrap().total(), 2);

        let two = r#"{"product":["CCO","C"],"reactants":["CC","O"],"maps":{"product":[1,2,3],"reactants":[[1,2],[3]]}}"#;
        assert!(matches!(
            parse_reactions(two),
            Err(ChemError::MultiProductRecord { line: 1 })
        ));
        let dotted = r#"{"product":"CCO.C","reactants":["CC","O"],"maps":{"product":[1,2,3,4],"reactants":[[1,2],[3]]}}"#;
        assert!(matches!(
            parse_reactions(dotted),
            Err(ChemError::MultiProductRecord { line: 1 })
        ));
        let bad = format!("{line}\n\nnot json");
        assert!(matches!(
            parse_reactions(&bad),
            Err(ChemError::MalformedRecord { line: 3, .. })
        ));
    }
}
