use std::fmt::{self, Write as _};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn symbol(self) -> &'static str {
        match self {
            BondOrder::Single => "-",
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
            BondOrder::Aromatic => ":",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BondOrder::Single => "single",
            BondOrder::Double => "double",
            BondOrder::Triple => "triple",
            BondOrder::Aromatic => "aromatic",
        }
    }
}

impl fmt::Display for BondOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Heavy atom. Implicit hydrogens are not represented as nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomNode {
    /// Capitalised element symbol (`C` for both `C` and `c`).
    pub element: String,
    pub aromatic: bool,
    pub formal_charge: i32,
    pub explicit_h: Option<u8>,
    /// Parsed from bracket atoms but not used downstream.
    pub isotope: Option<u16>,
    pub index: usize,
}

impl AtomNode {
    /// Element plus aromatic flag, e.g. `C` or `c`, `Se` or `se`.
    pub fn label(&self) -> String {
        if self.aromatic {
            self.element.to_ascii_lowercase()
        } else {
            self.element.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub from: usize,
    pub to: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.from == atom {
            self.to
        } else {
            self.from
        }
    }
}

/// Molecule graph with typed bonds. Dot-separated components share one graph.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MolecularGraph {
    atoms: Vec<AtomNode>,
    bonds: Vec<Bond>,
    /// Per node: (neighbor, bond index), in bond insertion order.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolecularGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_atom(&mut self, mut atom: AtomNode) -> usize {
        let index = self.atoms.len();
        atom.index = index;
        self.atoms.push(atom);
        self.adjacency.push(Vec::new());
        index
    }

    /// Adds a bond. Returns false for self-loops, duplicate pairs and unknown atoms.
    pub fn add_bond(&mut self, from: usize, to: usize, order: BondOrder) -> bool {
        if from == to || from >= self.atoms.len() || to >= self.atoms.len() {
            return false;
        }
        if self.bond_between(from, to).is_some() {
            return false;
        }
        let idx = self.bonds.len();
        self.bonds.push(Bond { from, to, order });
        self.adjacency[from].push((to, idx));
        self.adjacency[to].push((from, idx));
        true
    }

    pub fn atoms(&self) -> &[AtomNode] {
        &self.atoms
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut [AtomNode] {
        &mut self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn neighbors(&self, atom: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[atom].iter().map(|&(n, _)| n)
    }

    /// Neighbors together with the order of the connecting bond.
    pub fn neighbor_bonds(&self, atom: usize) -> impl Iterator<Item = (usize, BondOrder)> + '_ {
        self.adjacency[atom].iter().map(|&(n, b)| (n, self.bonds[b].order))
    }

    /// Neighbor index lists, one per node.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        (0..self.atoms.len()).map(|i| self.neighbors(i).collect()).collect()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, idx)| &self.bonds[idx])
    }

    /// Connected components as sorted node lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut comp = Vec::new();
            while let Some(v) = stack.pop() {
                comp.push(v);
                for u in self.neighbors(v) {
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Induced subgraph on `nodes`, reindexed in the given order.
    pub fn subgraph(&self, nodes: &[usize]) -> MolecularGraph {
        let mut map = vec![usize::MAX; self.atoms.len()];
        let mut g = MolecularGraph::new();
        for &v in nodes {
            map[v] = g.add_atom(self.atoms[v].clone());
        }
        for b in &self.bonds {
            if map[b.from] != usize::MAX && map[b.to] != usize::MAX {
                g.add_bond(map[b.from], map[b.to], b.order);
            }
        }
        g
    }

    /// Graph with node `i` moved to position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length");
        let mut order = vec![0; perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            order[new] = old;
        }
        let mut g = MolecularGraph::new();
        for &old in &order {
            g.add_atom(self.atoms[old].clone());
        }
        for b in &self.bonds {
            g.add_bond(perm[b.from], perm[b.to], b.order);
        }
        g
    }

    /// Text dump: `atoms n`, one `idx element aromatic charge` line per atom,
    /// then `bonds m` and one `i j order` line per bond.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "atoms {}", self.atoms.len());
        for a in &self.atoms {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                a.index,
                a.element,
                u8::from(a.aromatic),
                a.formal_charge
            );
        }
        let _ = writeln!(out, "bonds {}", self.bonds.len());
        for b in &self.bonds {
            let _ = writeln!(out, "{} {} {}", b.from, b.to, b.order);
        }
        out
    }
}
