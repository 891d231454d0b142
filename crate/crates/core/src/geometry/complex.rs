use log::warn;
use serde::{Deserialize, Serialize};

use super::{dist, Atom, Element, Role, ELEMENT_KINDS, LIGAND_ELEMENTS};
use crate::autodiff::Tensor;
use crate::Error;

/// Pocket atoms further than this from every ligand atom are dropped (Å).
pub const POCKET_CUTOFF: f64 = 8.0;
/// Atom pairs within this distance share an edge (Å).
pub const EDGE_CUTOFF: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomRecord {
    pub element: Element,
    pub position: [f64; 3],
    pub role: Role,
}

impl AtomRecord {
    pub fn atom(&self) -> Atom {
        Atom::new(self.element, self.position)
    }
}

/// A protein–ligand complex plus the mask of scaffold (diffusable) atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct Complex {
    pub atoms: Vec<AtomRecord>,
    pub scaffold_mask: Vec<bool>,
}

impl Complex {
    pub fn graph(&self) -> ComplexGraph {
        ComplexGraph::build(&self.atoms, EDGE_CUTOFF)
    }

    /// Ligand atoms (scaffold and functional groups) in file order.
    pub fn ligand(&self) -> Vec<Atom> {
        self.atoms
            .iter()
            .filter(|a| a.role != Role::Pocket)
            .map(AtomRecord::atom)
            .collect()
    }

    pub fn pocket(&self) -> Vec<Atom> {
        self.atoms
            .iter()
            .filter(|a| a.role == Role::Pocket)
            .map(AtomRecord::atom)
            .collect()
    }

    pub fn scaffold(&self) -> Vec<Atom> {
        self.atoms
            .iter()
            .zip(&self.scaffold_mask)
            .filter(|(_, &m)| m)
            .map(|(a, _)| a.atom())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub distance: f64,
    /// `(x_source - x_target) / distance`.
    pub direction: [f64; 3],
}

/// Node features, coordinates, and the radius graph of a complex.
#[derive(Clone, Debug)]
pub struct ComplexGraph {
    pub atoms: Vec<AtomRecord>,
    /// One-hot kind followed by three role flags.
    pub features: Tensor,
    pub coordinates: Tensor,
    pub edges: Vec<Edge>,
}

pub const GRAPH_FEATURES: usize = ELEMENT_KINDS + 3;

impl ComplexGraph {
    /// Directed edges for every ordered pair within `cutoff`; coincident
    /// atoms get no edge.
    pub fn build(atoms: &[AtomRecord], cutoff: f64) -> Self {
        let n = atoms.len();
        let mut features = Tensor::zeros(n, GRAPH_FEATURES);
        for (i, a) in atoms.iter().enumerate() {
            features.set(i, a.element.kind_index(), 1.0);
            features.set(i, ELEMENT_KINDS + a.role.index(), 1.0);
        }
        let coordinates = Tensor::from_points(&atoms.iter().map(|a| a.position).collect::<Vec<_>>());
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (pi, pj) = (atoms[i].position, atoms[j].position);
                let d = dist(&pi, &pj);
                if d > cutoff {
                    continue;
                }
                if d == 0.0 {
                    warn!("atoms {i} and {j} coincide; no edge");
                    continue;
                }
                edges.push(Edge {
                    source: i,
                    target: j,
                    distance: d,
                    direction: [(pi[0] - pj[0]) / d, (pi[1] - pj[1]) / d, (pi[2] - pj[2]) / d],
                });
            }
        }
        Self {
            atoms: atoms.to_vec(),
            features,
            coordinates,
            edges,
        }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Fixed conditioning atoms: pocket Cα points and retained functional groups.
#[derive(Clone, Debug, PartialEq)]
pub struct MolecularContext {
    pub pocket: Vec<Atom>,
    pub groups: Vec<Atom>,
}

impl MolecularContext {
    pub fn len(&self) -> usize {
        self.pocket.len() + self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Full ligand for scoring: scaffold atoms followed by the functional groups.
    pub fn ligand_with(&self, scaffold: &[Atom]) -> Vec<Atom> {
        scaffold.iter().chain(&self.groups).copied().collect()
    }
}

/// Coordinates and per-atom class features of the diffused subsystem.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaffoldState {
    /// `[n, 3]`, Å.
    pub x: Tensor,
    /// `[n, LIGAND_ELEMENTS]`.
    pub h: Tensor,
}

impl ScaffoldState {
    pub fn new(x: Tensor, h: Tensor) -> Result<Self, Error> {
        if x.cols() != 3 || h.cols() != LIGAND_ELEMENTS || x.rows() != h.rows() {
            return Err(Error::Invalid(format!(
                "scaffold state needs x [n,3] and h [n,{LIGAND_ELEMENTS}], got {:?} and {:?}",
                x.shape(),
                h.shape()
            )));
        }
        Ok(Self { x, h })
    }

    pub fn from_atoms(atoms: &[Atom]) -> Result<Self, Error> {
        let x = Tensor::from_points(&atoms.iter().map(|a| a.position).collect::<Vec<_>>());
        let mut h = Tensor::zeros(atoms.len(), LIGAND_ELEMENTS);
        for (i, a) in atoms.iter().enumerate() {
            let slot = a
                .element
                .ligand_index()
                .ok_or_else(|| Error::Invalid(format!("scaffold atom {i} is a pocket residue")))?;
            h.set(i, slot, 1.0);
        }
        Self::new(x, h)
    }

    pub fn atom_count(&self) -> usize {
        self.x.rows()
    }

    /// Decodes atoms: element = argmax of the class features.
    pub fn to_atoms(&self) -> Vec<Atom> {
        (0..self.atom_count())
            .map(|i| {
                let row = self.h.row(i);
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                Atom::new(Element::from_ligand_index(best).unwrap_or(Element::C), self.x.point(i))
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.x.all_finite() && self.h.all_finite()
    }

    pub fn center_of_mass(&self) -> [f64; 3] {
        centroid(&self.x)
    }
}

fn centroid(x: &Tensor) -> [f64; 3] {
    let n = x.rows().max(1) as f64;
    let mut c = [0.0; 3];
    for i in 0..x.rows() {
        for (k, v) in x.row(i).iter().enumerate() {
            c[k] += v;
        }
    }
    c.map(|v| v / n)
}

/// Subtracts the mean of the masked rows from the masked rows.
pub fn subtract_com(coords: &Tensor, mask: &[bool]) -> Tensor {
    let mut out = coords.clone();
    subtract_com_in_place(&mut out, mask);
    out
}

pub fn subtract_com_in_place(coords: &mut Tensor, mask: &[bool]) {
    assert_eq!(mask.len(), coords.rows(), "mask length must match row count");
    let count = mask.iter().filter(|&&m| m).count();
    assert!(count > 0, "subtract_com needs a nonempty mask");
    let mut c = [0.0; 3];
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (k, v) in coords.row(i).iter().enumerate() {
            c[k] += v;
        }
    }
    let c = c.map(|v| v / count as f64);
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (k, v) in coords.row_mut(i).iter_mut().enumerate() {
            *v -= c[k];
        }
    }
}

/// Centers every row.
pub fn center_all(coords: &mut Tensor) {
    if coords.rows() > 0 {
        let mask = vec![true; coords.rows()];
        subtract_com_in_place(coords, &mask);
    }
}

/// Splits a complex into conditioning context and the scaffold, in a frame
/// whose origin is the scaffold's center of mass.
pub fn build_context(complex: &Complex) -> Result<(MolecularContext, ScaffoldState), Error> {
    if complex.scaffold_mask.len() != complex.atoms.len() {
        return Err(Error::Invalid(format!(
            "scaffold mask has {} entries for {} atoms",
            complex.scaffold_mask.len(),
            complex.atoms.len()
        )));
    }
    for (i, (a, &m)) in complex.atoms.iter().zip(&complex.scaffold_mask).enumerate() {
        if m && a.role == Role::Pocket {
            return Err(Error::Invalid(format!("scaffold mask selects pocket atom {i}")));
        }
    }
    let scaffold = complex.scaffold();
    if scaffold.is_empty() {
        return Err(Error::EmptyScaffold);
    }
    let ligand = complex.ligand();
    let n = scaffold.len() as f64;
    let mut com = [0.0; 3];
    for a in &scaffold {
        for (c, p) in com.iter_mut().zip(a.position) {
            *c += p / n;
        }
    }
    let shift = |a: &Atom| Atom::new(a.element, [
        a.position[0] - com[0],
        a.position[1] - com[1],
        a.position[2] - com[2],
    ]);

    let pocket: Vec<Atom> = complex
        .pocket()
        .iter()
        .filter(|p| ligand.iter().any(|l| dist(&l.position, &p.position) <= POCKET_CUTOFF))
        .map(shift)
        .collect();
    if pocket.is_empty() {
        return Err(Error::EmptyPocket { cutoff: POCKET_CUTOFF });
    }
    let groups: Vec<Atom> = complex
        .atoms
        .iter()
        .zip(&complex.scaffold_mask)
        .filter(|(a, &m)| !m && a.role != Role::Pocket)
        .map(|(a, _)| shift(&a.atom()))
        .collect();
    let shifted: Vec<Atom> = scaffold.iter().map(shift).collect();
    let mut state = ScaffoldState::from_atoms(&shifted)?;
    center_all(&mut state.x);
    Ok((MolecularContext { pocket, groups }, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ResidueClass;
    use crate::rng;

    fn rec(e: Element, p: [f64; 3], role: Role) -> AtomRecord {
        AtomRecord { element: e, position: p, role }
    }

    #[test]
    fn com_examples() {
        let t = Tensor::from_points(&[[1., 0., 0.], [-1., 0., 0.]]);
        assert_eq!(subtract_com(&t, &[true, true]), t);
        let t = Tensor::from_points(&[[2., 2., 2.]]);
        assert_eq!(subtract_com(&t, &[true]).data(), &[0., 0., 0.]);

        let mut r = rng::substream(11, "com");
        let pts: Vec<[f64; 3]> = (0..10)
            .map(|_| [rng::normal(&mut r) * 5.0, rng::normal(&mut r), rng::normal(&mut r) + 3.0])
            .collect();
        let c = subtract_com(&Tensor::from_points(&pts), &[true; 10]);
        let m = centroid(&c);
        assert!((m[0].powi(2) + m[1].powi(2) + m[2].powi(2)).sqrt() < 1e-12);
    }

    #[test]
    fn masked_com_leaves_other_rows() {
        let t = Tensor::from_points(&[[2., 0., 0.], [4., 0., 0.], [9., 9., 9.]]);
        let c = subtract_com(&t, &[true, true, false]);
        assert_eq!(c.data(), &[-1., 0., 0., 1., 0., 0., 9., 9., 9.]);
    }

    #[test]
    fn edge_cutoff_is_inclusive_at_five_angstrom() {
        let atoms = [
            rec(Element::C, [0., 0., 0.], Role::Scaffold),
            rec(Element::C, [4.9, 0., 0.], Role::Scaffold),
            rec(Element::C, [0., 5.1, 0.], Role::Scaffold),
        ];
        let g = ComplexGraph::build(&atoms, EDGE_CUTOFF);
        let has = |a, b| g.edges.iter().any(|e| e.source == a && e.target == b);
        assert!(has(0, 1) && has(1, 0));
        assert!(!has(0, 2) && !has(2, 0));
        for e in &g.edges {
            assert!(e.distance <= EDGE_CUTOFF);
            let n: f64 = e.direction.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-9);
            let (pi, pj) = (atoms[e.source].position, atoms[e.target].position);
            assert!(((pi[0] - pj[0]) / e.distance - e.direction[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn far_pocket_atoms_are_filtered() {
        let ca = Element::Residue(ResidueClass::Aromatic);
        let complex = Complex {
            atoms: vec![
                rec(Element::C, [0., 0., 0.], Role::Scaffold),
                rec(Element::C, [1.5, 0., 0.], Role::Scaffold),
                rec(Element::O, [2.5, 1.0, 0.], Role::FunctionalGroup),
                rec(ca, [0., 6.0, 0.], Role::Pocket),
                rec(ca, [0., -9.0, 0.], Role::Pocket),
                rec(ca, [-9.0, 0., 0.], Role::Pocket),
            ],
            scaffold_mask: vec![true, true, false, false, false, false],
        };
        let (ctx, state) = build_context(&complex).unwrap();
        assert_eq!(ctx.pocket.len(), 1);
        assert_eq!(ctx.groups.len(), 1);
        assert_eq!(state.atom_count(), 2);
        assert!(state.center_of_mass().iter().all(|v| v.abs() < 1e-12));
        // Relative geometry survives the frame shift.
        assert!((dist(&ctx.pocket[0].position, &state.x.point(0)) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn build_context_errors() {
        let ca = Element::Residue(ResidueClass::Polar);
        let mut complex = Complex {
            atoms: vec![
                rec(Element::C, [0., 0., 0.], Role::Scaffold),
                rec(ca, [20., 0., 0.], Role::Pocket),
            ],
            scaffold_mask: vec![true, false],
        };
        assert!(matches!(build_context(&complex), Err(Error::EmptyPocket { .. })));
        complex.scaffold_mask = vec![false, false];
        assert!(matches!(build_context(&complex), Err(Error::EmptyScaffold)));
    }
}
