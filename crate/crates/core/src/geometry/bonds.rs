//! Distance-based bond perception, clash counting, and connectivity checks.

use serde::{Deserialize, Serialize};

use super::{dist, BondTable, Element};

/// An element at a position (Å).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub position: [f64; 3],
}

impl Atom {
    pub fn new(element: Element, position: [f64; 3]) -> Self {
        Self { element, position }
    }
}

/// Bonds `(i, j)` with `i < j` wherever the distance is below the covalent
/// radius sum plus tolerance.
pub fn infer_bonds(atoms: &[Atom]) -> Vec<(usize, usize)> {
    let table = BondTable::STANDARD;
    let mut bonds = Vec::new();
    for i in 0..atoms.len() {
        for j in i + 1..atoms.len() {
            let d = dist(&atoms[i].position, &atoms[j].position);
            if d < table.bond_threshold(atoms[i].element, atoms[j].element) {
                bonds.push((i, j));
            }
        }
    }
    bonds
}

/// Number of ligand–pocket pairs closer than the vdW sum minus 0.5 Å.
pub fn count_clashes(ligand: &[Atom], pocket: &[Atom]) -> usize {
    let table = BondTable::STANDARD;
    ligand
        .iter()
        .map(|l| {
            pocket
                .iter()
                .filter(|p| dist(&l.position, &p.position) < table.clash_threshold(l.element, p.element))
                .count()
        })
        .sum()
}

/// Element-labelled undirected graph over perceived bonds.
#[derive(Clone, Debug, PartialEq)]
pub struct MolGraph {
    pub elements: Vec<Element>,
    pub neighbors: Vec<Vec<usize>>,
}

impl MolGraph {
    pub fn from_bonds(elements: Vec<Element>, bonds: &[(usize, usize)]) -> Self {
        let mut neighbors = vec![Vec::new(); elements.len()];
        for &(i, j) in bonds {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Self { elements, neighbors }
    }

    pub fn from_atoms(atoms: &[Atom]) -> Self {
        let bonds = infer_bonds(atoms);
        Self::from_bonds(atoms.iter().map(|a| a.element).collect(), &bonds)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn bond_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Connected-component label per atom, labels in first-visit order.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.len()];
        let mut next = 0;
        for start in 0..self.len() {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(u) = stack.pop() {
                for &v in &self.neighbors[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() <= 1
    }

    /// Fraction of atoms whose bond count does not exceed their max valence.
    pub fn valence_ok_fraction(&self) -> f64 {
        if self.is_empty() {
            return 1.0;
        }
        let ok = (0..self.len())
            .filter(|&i| self.degree(i) <= self.elements[i].max_valence())
            .count();
        ok as f64 / self.len() as f64
    }
}

/// `(single component?, fraction of atoms within max valence)`.
pub fn connectivity_and_valence(atoms: &[Atom]) -> (bool, f64) {
    let g = MolGraph::from_atoms(atoms);
    (g.is_connected(), g.valence_ok_fraction())
}
