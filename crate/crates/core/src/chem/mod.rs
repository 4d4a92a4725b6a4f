//! Molecular graphs, a SMILES subset, canonical strings, mapped reactions and
//! simple 3D layouts.

mod canon;
mod conformer;
mod molecule;
mod reaction;
mod smiles;

pub use canon::{canonical_ranks, canonical_smiles, write_smiles};
pub use conformer::{bond_length, embed, relax_with_fixed, ConformerParams};
pub use molecule::{
    featurize, Atom, Bond, BondType, Element, Molecule, BOND_TYPES, ELEMENT_SLOTS, FEATURE_DIM,
};
pub use reaction::{
    derive_center_labels, distinct_products, extract_synthons, format_record, load_reactions,
    parse_reactions, parse_record, reactant_set_key, write_reactions, LabelMatrix, MappedMolecule,
    Reaction, Synthon,
};
pub use smiles::parse_smiles;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChemError {
    #[error("bond ({i}, {j}) out of range for {n} atoms")]
    BondOutOfRange { i: usize, j: usize, n: usize },
    #[error("atom {0} bonded to itself")]
    SelfBond(usize),
    #[error("duplicate bond ({0}, {1})")]
    DuplicateBond(usize, usize),
    #[error("expected {expected} coordinates, got {got}")]
    CoordinateCount { expected: usize, got: usize },
    #[error("unsupported formal charge {0}")]
    UnsupportedCharge(i8),
    #[error("unsupported token {token:?} at {pos}")]
    UnsupportedToken { pos: usize, token: String },
    #[error("ring closure {digit} opened at {pos} never closed")]
    UnclosedRing { digit: usize, pos: usize },
    #[error("unbalanced parenthesis at {pos}")]
    UnbalancedParenthesis { pos: usize },
    #[error("syntax error at {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("empty SMILES")]
    EmptySmiles,
    #[error("{maps} atom maps for {atoms} atoms")]
    MapCount { atoms: usize, maps: usize },
    #[error("product atom {atom} has no reactant counterpart")]
    MissingAtomMap { atom: usize },
    #[error("atom map {0} used more than once")]
    DuplicateAtomMap(u32),
    #[error("record has more than one product")]
    MultiProduct,
    #[error("atoms {0} and {1} are not bonded")]
    NotABond(usize, usize),
    #[error("{0}")]
    Record(String),
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: record has more than one product")]
    MultiProductRecord { line: usize },
    #[error("i/o: {0}")]
    Io(String),
}
