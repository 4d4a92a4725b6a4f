//! Turns sampled point clouds back into bonded molecules.
//!
//! Synthon atoms keep their original bonds. Bonds touching a generated atom
//! are read from interatomic distances against covalent radii, and the bond
//! order from how short the bond is.

use thiserror::Error;

use crate::chem::{BondType, Element, Molecule};
use crate::diffusion::decode_element;
use crate::egnn::Cloud;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssembleError {
    #[error("generated atom {0} decodes to no supported element")]
    UnknownElement(usize),
    #[error("sample has {sample} atoms, fewer than the synthon's {synthon}")]
    SampleTooSmall { sample: usize, synthon: usize },
    #[error("element and coordinate lists differ in length")]
    LengthMismatch,
}

pub type Result<T, E = AssembleError> = std::result::Result<T, E>;

/// Two atoms are bonded when closer than the radii sum times this factor.
pub const TOLERANCE: f64 = 1.2;
/// Bonds shorter than this are read as triple.
pub const TRIPLE_BELOW: f64 = 1.225;
/// Bonds shorter than this (and not triple) are read as double.
pub const DOUBLE_BELOW: f64 = 1.40;

/// Single-bond covalent radii in Å (Cordero et al., Dalton Trans. 2008).
pub fn covalent_radius(e: Element) -> f64 {
    match e {
        Element::C => 0.76,
        Element::N => 0.71,
        Element::O => 0.66,
        Element::F => 0.57,
        Element::P => 1.07,
        Element::S => 1.05,
        Element::Cl => 1.02,
        Element::Br => 1.20,
        Element::I => 1.39,
        Element::Other(_) => 1.50,
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

/// Bond type implied by a distance, or `None` beyond the cutoff.
pub fn perceive(a: Element, b: Element, d: f64) -> Option<BondType> {
    if d > (covalent_radius(a) + covalent_radius(b)) * TOLERANCE {
        None
    } else if d < TRIPLE_BELOW {
        Some(BondType::Triple)
    } else if d < DOUBLE_BELOW {
        Some(BondType::Double)
    } else {
        Some(BondType::Single)
    }
}

/// Distance-perceived bonds among all pairs where `free(i) || free(j)`.
pub fn infer_bonds(
    elements: &[Element],
    coords: &[[f64; 3]],
    free: impl Fn(usize) -> bool,
) -> Result<Vec<(usize, usize, BondType)>> {
    if elements.len() != coords.len() {
        return Err(AssembleError::LengthMismatch);
    }
    let mut out = Vec::new();
    for i in 0..elements.len() {
        for j in i + 1..elements.len() {
            if !(free(i) || free(j)) {
                continue;
            }
            if let Some(kind) = perceive(elements[i], elements[j], distance(coords[i], coords[j])) {
                out.push((i, j, kind));
            }
        }
    }
    Ok(out)
}

/// A reactant built from a synthon and a sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub mol: Molecule,
    /// False when the generated atoms did not attach into one piece.
    pub connected: bool,
}

/// Merges a synthon with the generated rows of `sample`.
///
/// `sample` holds the synthon atoms first, as produced by the sampler.
pub fn complete_reactant(synthon: &Molecule, sample: &Cloud) -> Result<Completion> {
    let m = synthon.atom_count();
    if sample.len() < m {
        return Err(AssembleError::SampleTooSmall {
            sample: sample.len(),
            synthon: m,
        });
    }
    let mut mol = synthon.clone();
    mol.clear_coords();
    let mut elements: Vec<Element> = synthon.atoms().iter().map(|a| a.element).collect();
    for k in m..sample.len() {
        let e = decode_element(&sample.h[k]).ok_or(AssembleError::UnknownElement(k))?;
        elements.push(e);
        mol.add_atom(crate::chem::Atom::new(e));
    }
    for (i, j, kind) in infer_bonds(&elements, &sample.x, |i| i >= m)? {
        mol.add_bond(i, j, kind).expect("fresh pair");
    }
    mol.set_coords(sample.x.clone()).expect("one row per atom");
    let connected = mol.is_connected();
    Ok(Completion { mol, connected })
}

/// An atom whose bonds exceed its allowed valence.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub atom: usize,
    pub element: Element,
    pub valence: u32,
    pub limit: u32,
}

/// Largest total valence allowed for an atom, `None` when unrestricted.
pub fn max_valence(e: Element, charge: i8) -> Option<u32> {
    let base: i32 = match e {
        Element::C => 4,
        Element::N => 3,
        Element::O => 2,
        Element::F | Element::Cl | Element::Br | Element::I => 1,
        Element::S => 6,
        Element::P => 5,
        Element::Other(_) => return None,
    };
    // N+ and O+ gain a bond, anions lose one
    let shift = match e {
        Element::N | Element::O => i32::from(charge),
        _ => 0,
    };
    Some((base + shift).max(0) as u32)
}

/// Checks heavy-atom bonds plus fixed hydrogens against [`max_valence`].
pub fn valence_check(mol: &Molecule) -> Result<(), Vec<Violation>> {
    let mut bad = Vec::new();
    for (i, atom) in mol.atoms().iter().enumerate() {
        let Some(limit) = max_valence(atom.element, atom.charge) else {
            continue;
        };
        let valence = mol.used_valence(i) + u32::from(atom.explicit_h.unwrap_or(0));
        if valence > limit {
            bad.push(Violation {
                atom: i,
                element: atom.element,
                valence,
                limit,
            });
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad)
    }
}
