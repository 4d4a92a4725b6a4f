//! SMILES subset reader.
//!
//! Supported: organic-subset atoms `C N O F P S Cl Br I`, aromatic
//! `c n o p s`, bracket atoms with element, hydrogen count and charge (no
//! isotopes, chirality or atom classes), bonds `- = # :`, branches, ring
//! closures `0-9` and `%nn`, and `.` component separators.

use super::molecule::{Atom, BondType, Element, Molecule};
use super::ChemError;

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

#[derive(Clone, Copy)]
struct OpenRing {
    atom: usize,
    bond: Option<BondType>,
    at: usize,
}

pub fn parse_smiles(text: &str) -> Result<Molecule, ChemError> {
    Parser {
        text,
        bytes: text.as_bytes(),
        pos: 0,
    }
    .run()
}

impl Parser<'_> {
    fn unsupported(&self, start: usize, end: usize) -> ChemError {
        ChemError::UnsupportedToken {
            pos: start,
            token: self.text[start..end.min(self.text.len())].to_string(),
        }
    }

    fn syntax(&self, msg: &str) -> ChemError {
        ChemError::Syntax {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn run(mut self) -> Result<Molecule, ChemError> {
        if self.text.trim().is_empty() {
            return Err(ChemError::EmptySmiles);
        }
        let mut mol = Molecule::new();
        let mut prev: Option<usize> = None;
        let mut branch_stack: Vec<(Option<usize>, usize)> = Vec::new();
        let mut pending_bond: Option<BondType> = None;
        let mut rings: [Option<OpenRing>; 100] = [None; 100];

        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos] as char;
            match c {
                '(' => {
                    if prev.is_none() || pending_bond.is_some() {
                        return Err(self.syntax("branch without preceding atom"));
                    }
                    branch_stack.push((prev, self.pos));
                    self.pos += 1;
                }
                ')' => {
                    let Some((p, _)) = branch_stack.pop() else {
                        return Err(ChemError::UnbalancedParenthesis { pos: self.pos });
                    };
                    if pending_bond.is_some() {
                        return Err(self.syntax("bond symbol before ')'"));
                    }
                    prev = p;
                    self.pos += 1;
                }
                '-' | '=' | '#' | ':' => {
                    if pending_bond.is_some() || prev.is_none() {
                        return Err(self.syntax("misplaced bond symbol"));
                    }
                    pending_bond = Some(match c {
                        '-' => BondType::Single,
                        '=' => BondType::Double,
                        '#' => BondType::Triple,
                        _ => BondType::Aromatic,
                    });
                    self.pos += 1;
                }
                '.' => {
                    if pending_bond.is_some() || prev.is_none() {
                        return Err(self.syntax("misplaced '.'"));
                    }
                    prev = None;
                    self.pos += 1;
                }
                '0'..='9' | '%' => {
                    let start = self.pos;
                    let digit = if c == '%' {
                        let d = self
                            .text
                            .get(self.pos + 1..self.pos + 3)
                            .ok_or_else(|| self.unsupported(start, start + 1))?;
                        if !d.bytes().all(|b| b.is_ascii_digit()) {
                            return Err(self.unsupported(start, start + 3));
                        }
                        self.pos += 3;
                        d.parse::<usize>().unwrap()
                    } else {
                        self.pos += 1;
                        (c as u8 - b'0') as usize
                    };
                    let Some(atom) = prev else {
                        return Err(self.syntax("ring closure without atom"));
                    };
                    match rings[digit].take() {
                        None => {
                            rings[digit] = Some(OpenRing {
                                atom,
                                bond: pending_bond.take(),
                                at: start,
                            })
                        }
                        Some(open) => {
                            let bond = match (open.bond, pending_bond.take()) {
                                (Some(a), Some(b)) if a != b => {
                                    return Err(self.syntax("conflicting ring-closure bonds"));
                                }
                                (Some(a), _) | (None, Some(a)) => a,
                                (None, None) => default_bond(&mol, open.atom, atom),
                            };
                            if open.atom == atom || mol.bond_between(open.atom, atom).is_some() {
                                return Err(self.syntax("ring closure duplicates a bond"));
                            }
                            mol.add_bond(open.atom, atom, bond)?;
                        }
                    }
                }
                _ => {
                    let atom = self.atom()?;
                    let idx = mol.add_atom(atom);
                    if let Some(p) = prev {
                        let bond = pending_bond
                            .take()
                            .unwrap_or_else(|| default_bond(&mol, p, idx));
                        mol.add_bond(p, idx, bond)?;
                    } else if pending_bond.is_some() {
                        return Err(self.syntax("bond without preceding atom"));
                    }
                    prev = Some(idx);
                }
            }
        }
        if let Some((_, at)) = branch_stack.pop() {
            return Err(ChemError::UnbalancedParenthesis { pos: at });
        }
        if pending_bond.is_some() {
            return Err(self.syntax("dangling bond symbol"));
        }
        if let Some((digit, open)) = rings
            .iter()
            .enumerate()
            .find_map(|(d, r)| r.map(|r| (d, r)))
        {
            return Err(ChemError::UnclosedRing {
                digit,
                pos: open.at,
            });
        }
        Ok(mol)
    }

    fn atom(&mut self) -> Result<Atom, ChemError> {
        let start = self.pos;
        let rest = &self.text[self.pos..];
        if rest.starts_with('[') {
            return self.bracket_atom();
        }
        for (sym, el) in [("Cl", Element::Cl), ("Br", Element::Br)] {
            if rest.starts_with(sym) {
                self.pos += 2;
                return Ok(Atom::new(el));
            }
        }
        let c = rest.chars().next().expect("non-empty");
        self.pos += c.len_utf8();
        let atom = match c {
            'C' => Atom::new(Element::C),
            'N' => Atom::new(Element::N),
            'O' => Atom::new(Element::O),
            'F' => Atom::new(Element::F),
            'P' => Atom::new(Element::P),
            'S' => Atom::new(Element::S),
            'I' => Atom::new(Element::I),
            'c' => Atom::aromatic(Element::C),
            'n' => Atom::aromatic(Element::N),
            'o' => Atom::aromatic(Element::O),
            'p' => Atom::aromatic(Element::P),
            's' => Atom::aromatic(Element::S),
            _ => return Err(self.unsupported(start, self.pos)),
        };
        Ok(atom)
    }

    fn bracket_atom(&mut self) -> Result<Atom, ChemError> {
        let start = self.pos;
        let close = self.text[start..]
            .find(']')
            .map(|k| start + k)
            .ok_or_else(|| self.syntax("unterminated bracket atom"))?;
        let body = &self.text[start + 1..close];
        let unsupported = || ChemError::UnsupportedToken {
            pos: start,
            token: self.text[start..=close].to_string(),
        };
        let b = body.as_bytes();
        let mut k;
        if b.first().is_some_and(u8::is_ascii_digit) {
            return Err(unsupported()); // isotope
        }
        // element symbol: uppercase + optional lowercase, or aromatic lowercase
        let (element, aromatic) = if b.first().is_some_and(u8::is_ascii_lowercase) {
            let sym2 = body.get(0..2);
            if sym2 == Some("se") || sym2 == Some("as") {
                return Err(unsupported());
            }
            let el = match b[0] {
                b'c' => Element::C,
                b'n' => Element::N,
                b'o' => Element::O,
                b'p' => Element::P,
                b's' => Element::S,
                _ => return Err(unsupported()),
            };
            k = 1;
            (el, true)
        } else if b.first().is_some_and(u8::is_ascii_uppercase) {
            let two = body
                .get(0..2)
                .filter(|s| s.as_bytes()[1].is_ascii_lowercase());
            let el = match two.and_then(Element::from_symbol) {
                Some(e) => {
                    k = 2;
                    e
                }
                None => {
                    k = 1;
                    Element::from_symbol(&body[0..1]).ok_or_else(unsupported)?
                }
            };
            (el, false)
        } else {
            return Err(unsupported());
        };
        if element == Element::Other(1) {
            return Err(unsupported());
        }
        let mut h = 0u8;
        if b.get(k) == Some(&b'H') {
            k += 1;
            h = 1;
            if let Some(d) = b.get(k).filter(|d| d.is_ascii_digit()) {
                h = d - b'0';
                k += 1;
            }
        }
        let mut charge: i8 = 0;
        if let Some(&sign) = b.get(k).filter(|&&s| s == b'+' || s == b'-') {
            let unit: i8 = if sign == b'+' { 1 } else { -1 };
            k += 1;
            let mut mag = 1;
            if let Some(d) = b.get(k).filter(|d| d.is_ascii_digit()) {
                mag = (d - b'0') as i8;
                k += 1;
            } else {
                while b.get(k) == Some(&sign) {
                    mag += 1;
                    k += 1;
                }
            }
            charge = unit * mag;
        }
        if k != b.len() || charge.abs() > 2 {
            return Err(unsupported()); // chirality, atom class, large charge, ...
        }
        self.pos = close + 1;
        Ok(Atom {
            element,
            charge,
            aromatic,
            explicit_h: Some(h),
        })
    }
}

fn default_bond(mol: &Molecule, a: usize, b: usize) -> BondType {
    if mol.atom(a).aromatic && mol.atom(b).aromatic {
        BondType::Aromatic
    } else {
        BondType::Single
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ethane() {
        let m = parse_smiles("CC").unwrap();
        assert_eq!((m.atom_count(), m.bond_count()), (2, 1));
        assert_eq!(m.bonds()[0].kind, BondType::Single);
    }

    #[test]
    fn benzene() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.atom_count(), 6);
        assert_eq!(m.bond_count(), 6);
        assert!(m.bonds().iter().all(|b| b.kind == BondType::Aromatic));
        assert!(m.atoms().iter().all(|a| a.aromatic));
        assert_eq!(m.ring_count(), 1);
        assert!((0..6).all(|i| m.hydrogens(i) == 1));
    }

    #[test]
    fn ethyl_benzoate() {
        // C C O C(=O) c1ccccc1: 5 chain atoms + 6 ring atoms; 5 chain bonds + 6 ring bonds.
        let m = parse_smiles("CCOC(=O)c1ccccc1").unwrap();
        assert_eq!(m.atom_count(), 11);
        assert_eq!(m.bond_count(), 11);
        assert_eq!(m.ring_count(), 1);
        assert_eq!(m.bond_type(3, 4), Some(BondType::Double));
    }

    #[test]
    fn two_letter_halogens_and_brackets() {
        let m = parse_smiles("ClC(Br)[NH3+]").unwrap();
        assert_eq!(m.atom(0).element, Element::Cl);
        assert_eq!(m.atom(2).element, Element::Br);
        assert_eq!(m.atom(3).charge, 1);
        assert_eq!(m.hydrogens(3), 3);
        let p = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(p.hydrogens(3), 1);
        assert_eq!(parse_smiles("[O-]C").unwrap().atom(0).charge, -1);
        assert_eq!(
            parse_smiles("[Si](C)(C)(C)C").unwrap().atom(0).element,
            Element::Other(14)
        );
    }

    #[test]
    fn errors() {
        assert!(matches!(
            parse_smiles("C1CC"),
            Err(ChemError::UnclosedRing { digit: 1, .. })
        ));
        assert!(matches!(
            parse_smiles("CC(C"),
            Err(ChemError::UnbalancedParenthesis { .. })
        ));
        assert!(matches!(
            parse_smiles("CC)C"),
            Err(ChemError::UnbalancedParenthesis { .. })
        ));
        assert!(matches!(
            parse_smiles("C[C@H](N)O"),
            Err(ChemError::UnsupportedToken { .. })
        ));
        assert!(matches!(
            parse_smiles("[13CH4]"),
            Err(ChemError::UnsupportedToken { .. })
        ));
        assert!(matches!(
            parse_smiles("C/C=C/C"),
            Err(ChemError::UnsupportedToken { .. })
        ));
        assert!(matches!(
            parse_smiles("BC"),
            Err(ChemError::UnsupportedToken { .. })
        ));
        assert!(matches!(
            parse_smiles("[CH3:1]C"),
            Err(ChemError::UnsupportedToken { .. })
        ));
        assert!(matches!(parse_smiles(""), Err(ChemError::EmptySmiles)));
        assert!(parse_smiles("C=").is_err());
        assert!(parse_smiles("C11").is_err());
    }

    #[test]
    fn ring_closure_bond_and_percent() {
        let m = parse_smiles("C=1CCCCC1").unwrap();
        assert_eq!(m.bond_type(0, 5), Some(BondType::Double));
        let m = parse_smiles("C%12CC%12").unwrap();
        assert_eq!(m.bond_count(), 3);
    }

    #[test]
    fn dot_separates_components() {
        let m = parse_smiles("CC.O").unwrap();
        assert_eq!(m.components().len(), 2);
    }
}
