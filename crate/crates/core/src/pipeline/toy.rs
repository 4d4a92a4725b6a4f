//! Template corpus: four bond-forming reactions whose centers and leaving
//! groups are known by construction.

use std::collections::HashSet;
use std::str::FromStr;

use super::{PipelineError, Result};
use crate::chem::{
    format_record, parse_record, parse_smiles, BondType, MappedMolecule, Molecule, Reaction,
};
use crate::numerics::Rng;

/// A bond-forming template: electrophile + nucleophile, one leaving atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ToyRule {
    /// Acid chloride + alcohol -> ester.
    Ester,
    /// Acid chloride + amine -> amide.
    Amide,
    /// Phenol + alkyl bromide -> aryl ether.
    Ether,
    /// Sulfonyl chloride + amine -> sulfonamide.
    Sulfonamide,
}

impl ToyRule {
    pub const ALL: [ToyRule; 4] = [
        ToyRule::Ester,
        ToyRule::Amide,
        ToyRule::Ether,
        ToyRule::Sulfonamide,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ToyRule::Ester => "ester",
            ToyRule::Amide => "amide",
            ToyRule::Ether => "ether",
            ToyRule::Sulfonamide => "sulfonamide",
        }
    }

    /// Reaction class: 1 heteroatom alkylation, 2 acylation.
    pub fn class_id(self) -> u8 {
        match self {
            ToyRule::Ether => 1,
            _ => 2,
        }
    }

    /// Electrophile substituents; the template appends the reactive group.
    fn electrophile_pool(self) -> &'static [&'static str] {
        match self {
            ToyRule::Ester | ToyRule::Amide => &[
                "C",
                "CC",
                "CCC",
                "CC(C)",
                "c1ccccc1",
                "Cc1ccccc1",
                "C1CCCCC1",
                "COc1ccccc1",
            ],
            ToyRule::Sulfonamide => &[
                "C",
                "CC",
                "c1ccccc1",
                "Cc1ccccc1",
                "c1ccc(C)cc1",
                "c1ccc(F)cc1",
            ],
            ToyRule::Ether => &[
                "C",
                "CC",
                "CCC",
                "c1ccccc1",
                "C=C",
                "CC(C)",
                "C1CC1",
                "c1ccc(F)cc1",
            ],
        }
    }

    /// Nucleophiles written with the attacking atom first.
    fn nucleophile_pool(self) -> &'static [&'static str] {
        match self {
            ToyRule::Ester => &[
                "OC",
                "OCC",
                "OCCC",
                "OC(C)C",
                "OCc1ccccc1",
                "OCC(C)C",
                "OC1CCCC1",
                "OCCOC",
            ],
            ToyRule::Amide | ToyRule::Sulfonamide => &[
                "NC",
                "NCC",
                "N(C)C",
                "N1CCCC1",
                "NCc1ccccc1",
                "NC1CCCCC1",
                "N1CCOCC1",
                "NCCC",
            ],
            ToyRule::Ether => &[
                "Oc1ccccc1",
                "Oc1ccc(C)cc1",
                "Oc1ccc(F)cc1",
                "Oc1ccc(OC)cc1",
                "Oc1cccc(C)c1",
                "Oc1ccccc1C",
            ],
        }
    }

    /// Electrophile SMILES plus `(attach, leaving)` offsets counted from its last atom.
    fn electrophile(self, r: &str) -> (String, usize, usize) {
        match self {
            ToyRule::Ester | ToyRule::Amide => (format!("{r}C(=O)Cl"), 3, 1),
            ToyRule::Sulfonamide => (format!("{r}S(=O)(=O)Cl"), 4, 1),
            ToyRule::Ether => (format!("{r}CBr"), 2, 1),
        }
    }
}

impl FromStr for ToyRule {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        ToyRule::ALL
            .into_iter()
            .find(|r| r.name() == s.trim())
            .ok_or_else(|| PipelineError::Config(format!("unknown toy rule {s:?}")))
    }
}

/// Builds one mapped reaction; the result is in canonical atom order.
pub fn toy_reaction(rule: ToyRule, electrophile: &str, nucleophile: &str) -> Result<Reaction> {
    let chem = |e: crate::chem::ChemError| PipelineError::Data(e.to_string());
    let (e_smiles, attach_off, leave_off) = rule.electrophile(electrophile);
    let elec = parse_smiles(&e_smiles).map_err(chem)?;
    let nuc = parse_smiles(nucleophile).map_err(chem)?;
    let ne = elec.atom_count();
    let (attach, leave) = (ne - attach_off, ne - leave_off);

    // product = electrophile without its leaving atom, joined to the nucleophile
    let kept: Vec<usize> = (0..ne).filter(|&a| a != leave).collect();
    let mut product = Molecule::new();
    for &a in &kept {
        product.add_atom(*elec.atom(a));
    }
    let pos = |a: usize| kept.iter().position(|&k| k == a).expect("kept atom");
    for b in elec.bonds() {
        if b.a != leave && b.b != leave {
            product.add_bond(pos(b.a), pos(b.b), b.kind).map_err(chem)?;
        }
    }
    let off = product.atom_count();
    for a in nuc.atoms() {
        product.add_atom(*a);
    }
    for b in nuc.bonds() {
        product
            .add_bond(off + b.a, off + b.b, b.kind)
            .map_err(chem)?;
    }
    product
        .add_bond(pos(attach), off, BondType::Single)
        .map_err(chem)?;

    let n = product.atom_count() as u32;
    let e_maps: Vec<u32> = (0..ne)
        .map(|a| if a == leave { 0 } else { pos(a) as u32 + 1 })
        .collect();
    let n_maps: Vec<u32> = (0..nuc.atom_count())
        .map(|a| (off + a) as u32 + 1)
        .collect();
    let rxn = Reaction::new(
        MappedMolecule::new(product, (1..=n).collect()).map_err(chem)?,
        vec![
            MappedMolecule::new(elec, e_maps).map_err(chem)?,
            MappedMolecule::new(nuc, n_maps).map_err(chem)?,
        ],
        Some(rule.class_id()),
    )
    .map_err(chem)?;
    parse_record(&format_record(&rxn)).map_err(chem)
}

/// `n` reactions drawn from `rules`; repeats are avoided while unused
/// combinations remain.
pub fn gen_toy_corpus(rules: &[ToyRule], n: usize, rng: &mut Rng) -> Result<Vec<Reaction>> {
    if rules.is_empty() {
        return Err(PipelineError::Config(
            "toy corpus needs at least one rule".into(),
        ));
    }
    let total: usize = rules
        .iter()
        .map(|r| r.electrophile_pool().len() * r.nucleophile_pool().len())
        .sum();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut pick = || {
            let rule = rules[rng.below(rules.len())];
            let e = rule.electrophile_pool()[rng.below(rule.electrophile_pool().len())];
            let u = rule.nucleophile_pool()[rng.below(rule.nucleophile_pool().len())];
            (rule, e, u)
        };
        let mut choice = pick();
        if seen.len() < total {
            while seen.contains(&choice) {
                choice = pick();
            }
        }
        seen.insert(choice);
        out.push(toy_reaction(choice.0, choice.1, choice.2)?);
    }
    Ok(out)
}
