//! Completion examples: a synthon in product geometry plus the reactant atoms
//! it is missing, placed by relaxing them against the fixed synthon.

use super::{DiffusionError, Result};
use crate::chem::{
    extract_synthons, relax_with_fixed, ConformerParams, Element, Molecule, Reaction, ELEMENT_SLOTS,
};
use crate::egnn::Cloud;
use crate::numerics::Rng;

#[derive(Clone, Debug)]
pub struct CompletionExample {
    /// Synthon with product coordinates.
    pub synthon: Molecule,
    /// Local indices of the atoms that lost the cut bond.
    pub anchors: Vec<usize>,
    /// Reactant with synthon atoms first in synthon order, then the missing atoms.
    pub reactant: Molecule,
    /// Number of missing atoms.
    pub extra: usize,
}

impl CompletionExample {
    /// The synthon as a fixed cloud, ready for sampling.
    pub fn synthon_cloud(&self) -> Result<Cloud> {
        molecule_cloud(&self.synthon, &self.anchors, self.synthon.atom_count())
    }

    /// Ground-truth `z_0`: synthon atoms fixed, missing atoms free.
    pub fn target_cloud(&self) -> Result<Cloud> {
        molecule_cloud(&self.reactant, &self.anchors, self.synthon.atom_count())
    }
}

/// Cloud of a molecule whose first `fixed` atoms are context.
pub fn molecule_cloud(mol: &Molecule, anchors: &[usize], fixed: usize) -> Result<Cloud> {
    let coords = mol
        .coords()
        .ok_or_else(|| DiffusionError::Example("molecule has no coordinates".into()))?;
    let n = mol.atom_count();
    let h = mol
        .atoms()
        .iter()
        .map(|a| {
            let mut r = [0.0; ELEMENT_SLOTS];
            r[a.element.slot()] = 1.0;
            r
        })
        .collect();
    let mut anchor = vec![false; n];
    for &a in anchors {
        anchor[a] = true;
    }
    Ok(Cloud {
        x: coords.to_vec(),
        h,
        fixed: (0..n).map(|i| i < fixed).collect(),
        anchor,
    })
}

/// Element of the largest slot, `None` for the catch-all slot.
pub fn decode_element(h: &[f64; ELEMENT_SLOTS]) -> Option<Element> {
    let k = (0..ELEMENT_SLOTS).fold(0, |b, k| if h[k] > h[b] { k } else { b });
    Element::from_slot(k)
}

/// One example per synthon of the reaction's broken bonds.
///
/// `product_coords` is a conformer of the product. Missing atoms start one
/// bond length from their attachment point, pointing away from the synthon,
/// and are relaxed with the synthon held fixed.
pub fn completion_examples(
    rxn: &Reaction,
    product_coords: &[[f64; 3]],
    rng: &mut Rng,
    params: &ConformerParams,
) -> Result<Vec<CompletionExample>> {
    let bad = |m: String| DiffusionError::Example(m);
    let mut product = rxn.product.mol.clone();
    product
        .set_coords(product_coords.to_vec())
        .map_err(|e| bad(e.to_string()))?;
    let broken = rxn.broken_bonds().map_err(|e| bad(e.to_string()))?;
    let mut out = Vec::new();
    for &(i, j) in &broken {
        for syn in extract_synthons(&product, (i, j)).map_err(|e| bad(e.to_string()))? {
            out.push(one_example(
                rxn,
                &product,
                &syn.atom_ids,
                syn.to_molecule(),
                syn.anchors(),
                rng,
                params,
            )?);
        }
    }
    Ok(out)
}

fn one_example(
    rxn: &Reaction,
    product: &Molecule,
    atom_ids: &[usize],
    synthon: Molecule,
    anchors: Vec<usize>,
    rng: &mut Rng,
    params: &ConformerParams,
) -> Result<CompletionExample> {
    let bad = |m: &str| DiffusionError::Example(m.to_string());
    // locate each synthon atom in the reactants through its map number
    let mut home: Option<usize> = None;
    let mut local = Vec::with_capacity(atom_ids.len());
    for &p in atom_ids {
        let map = rxn.product.maps[p];
        let (r, a) = rxn
            .reactants
            .iter()
            .enumerate()
            .find_map(|(r, m)| m.atom_with_map(map).map(|a| (r, a)))
            .ok_or_else(|| bad("product atom missing from reactants"))?;
        if *home.get_or_insert(r) != r {
            return Err(bad("synthon spans several reactants"));
        }
        local.push(a);
    }
    let r = home.ok_or_else(|| bad("empty synthon"))?;
    let src = &rxn.reactants[r];
    let in_product: Vec<u32> = atom_ids.iter().map(|&p| rxn.product.maps[p]).collect();
    for (a, &m) in src.maps.iter().enumerate() {
        if m != 0 && !in_product.contains(&m) && rxn.product.atom_with_map(m).is_some() {
            return Err(bad(&format!(
                "reactant atom {a} belongs to another synthon"
            )));
        }
    }
    let extra_atoms: Vec<usize> = (0..src.mol.atom_count())
        .filter(|a| !local.contains(a))
        .collect();
    let order: Vec<usize> = local
        .iter()
        .copied()
        .chain(extra_atoms.iter().copied())
        .collect();
    let pos = |a: usize| {
        order
            .iter()
            .position(|&o| o == a)
            .expect("every atom ordered")
    };
    let mut reactant = Molecule::new();
    for &a in &order {
        reactant.add_atom(*src.mol.atom(a));
    }
    for b in src.mol.bonds() {
        reactant
            .add_bond(pos(b.a), pos(b.b), b.kind)
            .map_err(|e| bad(&e.to_string()))?;
    }

    let m = local.len();
    let syn_xyz: Vec<[f64; 3]> = atom_ids
        .iter()
        .map(|&p| product.coords().expect("coords set")[p])
        .collect();
    let center = mean(&syn_xyz);
    let mut init = syn_xyz.clone();
    let mut placed = vec![false; order.len()];
    placed[..m].iter_mut().for_each(|p| *p = true);
    init.resize(order.len(), center);
    // breadth-first from placed atoms so each new atom hangs off a placed neighbour
    let mut progress = true;
    while progress && placed.iter().any(|p| !p) {
        progress = false;
        for k in m..order.len() {
            if placed[k] {
                continue;
            }
            let Some(&(nb, _)) = reactant.neighbors(k).iter().find(|(nb, _)| placed[*nb]) else {
                continue;
            };
            let base = init[nb];
            let mut dir = [0, 1, 2].map(|c| base[c] - center[c] + 0.3 * rng.normal());
            let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-6);
            dir = dir.map(|v| v / len);
            init[k] = [0, 1, 2].map(|c| base[c] + 1.5 * dir[c]);
            placed[k] = true;
            progress = true;
        }
    }
    for k in m..order.len() {
        if !placed[k] {
            init[k] = [0, 1, 2].map(|c| center[c] + 3.0 * rng.normal());
        }
    }
    let fixed: Vec<bool> = (0..order.len()).map(|k| k < m).collect();
    let xyz = relax_with_fixed(&reactant, &init, &fixed, params);
    reactant.set_coords(xyz).map_err(|e| bad(&e.to_string()))?;
    Ok(CompletionExample {
        synthon,
        anchors,
        extra: order.len() - m,
        reactant,
    })
}

fn mean(pts: &[[f64; 3]]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for p in pts {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    c.map(|v| v / pts.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{bond_length, embed, parse_record, BondType};

    fn ester() -> Reaction {
        parse_record(r#"{"product":"CC(=O)OCC","reactants":["CC(=O)Cl","OCC"],"maps":{"product":[1,2,3,4,5,6],"reactants":[[1,2,3,0],[4,5,6]]}}"#).unwrap()
    }

    #[test]
    fn ester_splits_into_acyl_and_alcohol() {
        let rxn = ester();
        let xyz = embed(
            &rxn.product.mol,
            &mut Rng::new(1),
            &ConformerParams::default(),
        );
        let ex =
            completion_examples(&rxn, &xyz, &mut Rng::new(2), &ConformerParams::default()).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].extra, 1);
        assert_eq!(ex[1].extra, 0);
        let acyl = &ex[0];
        assert_eq!(acyl.reactant.atom(3).element, Element::Cl);
        let rc = acyl.reactant.coords().unwrap();
        let sc = acyl.synthon.coords().unwrap();
        assert_eq!(&rc[..3], sc);
        let d = (0..3)
            .map(|k| (rc[3][k] - rc[1][k]).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((d - bond_length(BondType::Single)).abs() < 0.1, "{d}");

        let cloud = acyl.target_cloud().unwrap();
        assert_eq!(cloud.fixed, vec![true, true, true, false]);
        assert_eq!(cloud.anchor, vec![false, true, false, false]);
        assert_eq!(decode_element(&cloud.h[3]), Some(Element::Cl));
        let syn = acyl.synthon_cloud().unwrap();
        assert_eq!(syn.len(), 3);
        assert!(syn.fixed.iter().all(|&f| f));
    }

    #[test]
    fn catch_all_slot_decodes_to_none() {
        let mut h = [0.0; ELEMENT_SLOTS];
        h[ELEMENT_SLOTS - 1] = 1.0;
        assert_eq!(decode_element(&h), None);
        h[2] = 2.0;
        assert_eq!(decode_element(&h), Some(Element::O));
    }
}
