use std::collections::BTreeMap;

use super::graph::{AtomNode, BondOrder, MolecularGraph};
use super::token::{tokenize, Token, TokenKind};
use super::SmilesError;

const ELEMENTS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce",
    "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc",
    "Lv", "Ts", "Og",
];

const AROMATIC_BRACKET: &[&str] = &["se", "as", "te", "b", "c", "n", "o", "p", "s"];

fn bond_order(text: &str) -> BondOrder {
    match text {
        "=" => BondOrder::Double,
        "#" => BondOrder::Triple,
        ":" => BondOrder::Aromatic,
        // `-`, `/` and `\` all map to single; stereo is discarded.
        _ => BondOrder::Single,
    }
}

fn organic_atom(text: &str) -> AtomNode {
    let aromatic = text.chars().next().is_some_and(|c| c.is_ascii_lowercase());
    let element = if aromatic {
        text.to_ascii_uppercase()
    } else {
        text.to_string()
    };
    AtomNode {
        element,
        aromatic,
        formal_charge: 0,
        explicit_h: None,
        isotope: None,
        index: 0,
    }
}

/// Parses `[isotope? symbol chirality? hcount? charge? class?]`.
fn bracket_atom(token: &Token) -> Result<AtomNode, SmilesError> {
    let err = || SmilesError::InvalidBracketAtom {
        position: token.position,
    };
    let inner = &token.text[1..token.text.len() - 1];
    let b = inner.as_bytes();
    let mut i = 0;

    let digits = |i: &mut usize| {
        let s = *i;
        while *i < b.len() && b[*i].is_ascii_digit() {
            *i += 1;
        }
        (s < *i).then(|| inner[s..*i].parse::<u32>().ok()).flatten()
    };

    let isotope = digits(&mut i).map(|v| v as u16);

    // Symbol: aromatic forms first, then the longest matching element.
    let rest = &inner[i..];
    let (element, aromatic, len) = if let Some(sym) = AROMATIC_BRACKET.iter().find(|s| rest.starts_with(*s)) {
        let mut e = sym.to_string();
        e[..1].make_ascii_uppercase();
        (e, true, sym.len())
    } else {
        let two = rest.get(..2).filter(|s| ELEMENTS.contains(s));
        let one = rest.get(..1).filter(|s| ELEMENTS.contains(s));
        match two.or(one) {
            Some(sym) => (sym.to_string(), false, sym.len()),
            None => return Err(err()),
        }
    };
    i += len;

    // Chirality: @, @@ or @TH1-style tags; parsed and discarded.
    if i < b.len() && b[i] == b'@' {
        i += 1;
        if i < b.len() && b[i] == b'@' {
            i += 1;
        } else {
            while i < b.len() && b[i].is_ascii_uppercase() && b[i] != b'H' {
                i += 1;
            }
            digits(&mut i);
        }
    }

    let mut explicit_h = None;
    if i < b.len() && b[i] == b'H' {
        i += 1;
        explicit_h = Some(digits(&mut i).unwrap_or(1) as u8);
    }

    let mut formal_charge = 0i32;
    if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
        let sign = if b[i] == b'+' { 1 } else { -1 };
        let sym = b[i];
        i += 1;
        if let Some(n) = digits(&mut i) {
            formal_charge = sign * n as i32;
        } else {
            let mut n = 1;
            while i < b.len() && b[i] == sym {
                n += 1;
                i += 1;
            }
            formal_charge = sign * n;
        }
    }

    if i < b.len() && b[i] == b':' {
        i += 1;
        if digits(&mut i).is_none() {
            return Err(err());
        }
    }

    if i != b.len() {
        return Err(err());
    }

    Ok(AtomNode {
        element,
        aromatic,
        formal_charge,
        explicit_h,
        isotope,
        index: 0,
    })
}

struct RingOpen {
    atom: usize,
    bond: Option<BondOrder>,
    position: usize,
}

/// Parse a SMILES string into a heavy-atom molecular graph.
pub fn parse(smiles: &str) -> Result<MolecularGraph, SmilesError> {
    let tokens = tokenize(smiles)?;
    let mut graph = MolecularGraph::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondOrder, usize)> = None;
    let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
    let mut rings: BTreeMap<u32, RingOpen> = BTreeMap::new();

    let default_order = |g: &MolecularGraph, a: usize, b: usize| {
        if g.atoms()[a].aromatic && g.atoms()[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    };

    for token in &tokens {
        let position = token.position;
        match token.kind {
            TokenKind::Atom => {
                let atom = if token.is_bracket_atom() {
                    bracket_atom(token)?
                } else {
                    organic_atom(&token.text)
                };
                let idx = graph.add_atom(atom);
                if let Some(p) = prev {
                    let order = pending
                        .take()
                        .map(|(o, _)| o)
                        .unwrap_or_else(|| default_order(&graph, p, idx));
                    graph.add_bond(p, idx, order);
                }
                prev = Some(idx);
            }
            TokenKind::Bond => {
                if prev.is_none() {
                    return Err(SmilesError::BondAtStart { position });
                }
                if pending.is_some() {
                    return Err(SmilesError::UnexpectedToken { position });
                }
                pending = Some((bond_order(&token.text), position));
            }
            TokenKind::BranchOpen => {
                if prev.is_none() || pending.is_some() {
                    return Err(SmilesError::UnexpectedToken { position });
                }
                branches.push((prev, position));
            }
            TokenKind::BranchClose => {
                if pending.is_some() {
                    return Err(SmilesError::UnexpectedToken { position });
                }
                let (atom, _) = branches.pop().ok_or(SmilesError::UnmatchedParenthesis { position })?;
                prev = atom;
            }
            TokenKind::RingClosure => {
                let Some(cur) = prev else {
                    return Err(SmilesError::UnexpectedToken { position });
                };
                let label = token.ring_label().ok_or(SmilesError::UnknownCharacter { position })?;
                let bond = pending.take().map(|(o, _)| o);
                if let Some(open) = rings.remove(&label) {
                    let order = match (open.bond, bond) {
                        (Some(a), Some(b)) if a != b => return Err(SmilesError::RingBondMismatch { position }),
                        (Some(a), _) | (None, Some(a)) => a,
                        (None, None) => default_order(&graph, open.atom, cur),
                    };
                    if !graph.add_bond(open.atom, cur, order) {
                        return Err(SmilesError::DuplicateBond { position });
                    }
                } else {
                    rings.insert(
                        label,
                        RingOpen {
                            atom: cur,
                            bond,
                            position,
                        },
                    );
                }
            }
            TokenKind::Dot => {
                if pending.is_some() {
                    return Err(SmilesError::UnexpectedToken { position });
                }
                prev = None;
            }
        }
    }

    if let Some((_, position)) = pending {
        return Err(SmilesError::TrailingBond { position });
    }
    if let Some((_, position)) = branches.pop() {
        return Err(SmilesError::UnmatchedParenthesis { position });
    }
    if let Some(open) = rings.values().next() {
        return Err(SmilesError::UnmatchedRingClosure {
            position: open.position,
        });
    }
    Ok(strip_hydrogens(graph))
}

/// Drops plain `[H]` atoms singly bonded to a heavy atom. Charged, isotopic
/// or bridging hydrogens and `[H][H]` stay as nodes.
fn strip_hydrogens(mut graph: MolecularGraph) -> MolecularGraph {
    let removable = |g: &MolecularGraph, v: usize| {
        let a = &g.atoms()[v];
        let mut nb = g.neighbor_bonds(v);
        a.element == "H"
            && a.formal_charge == 0
            && a.isotope.is_none()
            && a.explicit_h.unwrap_or(0) == 0
            && matches!(
                (nb.next(), nb.next()),
                (Some((u, BondOrder::Single)), None) if g.atoms()[u].element != "H"
            )
    };
    let drop: Vec<usize> = (0..graph.atom_count()).filter(|&v| removable(&graph, v)).collect();
    if drop.is_empty() {
        return graph;
    }
    let parents: Vec<usize> = drop
        .iter()
        .map(|&v| graph.neighbors(v).next().expect("one neighbor"))
        .collect();
    for p in parents {
        let atom = &mut graph.atoms_mut()[p];
        if let Some(h) = atom.explicit_h.as_mut() {
            *h += 1;
        }
    }
    let keep: Vec<usize> = (0..graph.atom_count())
        .filter(|v| drop.binary_search(v).is_err())
        .collect();
    graph.subgraph(&keep)
}
