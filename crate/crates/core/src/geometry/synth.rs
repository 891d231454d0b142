//! Procedural protein-pocket / ligand complexes.
//!
//! A scaffold is grown from an optional 5- or 6-ring, functional groups are
//! attached at its periphery, and Cα points are scattered on a partial shell
//! around the ligand. Every candidate is rejection-checked against bond
//! perception, valence, and the clash rule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    add, count_clashes, dist, infer_bonds, norm, scale, sub, Atom, AtomRecord, BondTable, Complex,
    Element, MolGraph, ResidueClass, Role,
};
use crate::rng::{self, StreamRng};
use crate::Error;

pub const MAX_ATTEMPTS: usize = 1000;

/// Inclusive size ranges for generated complexes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub scaffold_atoms: (usize, usize),
    pub groups: (usize, usize),
    pub group_atoms: (usize, usize),
    pub pocket_points: (usize, usize),
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            scaffold_atoms: (6, 14),
            groups: (1, 3),
            group_atoms: (1, 4),
            pocket_points: (8, 24),
        }
    }
}

impl SynthParams {
    /// A compact setting for quick tests.
    pub fn small() -> Self {
        Self {
            scaffold_atoms: (6, 7),
            groups: (1, 1),
            group_atoms: (1, 2),
            pocket_points: (8, 10),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let check = |name: &str, (lo, hi): (usize, usize), min: usize, max: usize| {
            if lo > hi || lo < min || hi > max {
                Err(Error::Invalid(format!(
                    "{name} range {lo}..={hi} outside {min}..={max}"
                )))
            } else {
                Ok(())
            }
        };
        check("scaffold_atoms", self.scaffold_atoms, 6, 14)?;
        check("groups", self.groups, 1, 3)?;
        check("group_atoms", self.group_atoms, 1, 4)?;
        check("pocket_points", self.pocket_points, 8, 24)
    }
}

const BOND_MIN: f64 = 1.2;
const BOND_MAX: f64 = 1.6;
/// Extra clearance over the bond threshold for non-bonded ligand pairs.
const NONBOND_MARGIN: f64 = 0.08;
/// Cα points keep at least this distance to every ligand atom (clash-free for all elements).
const SHELL_INNER: f64 = 3.2;
const SHELL_OUTER: f64 = 8.0;
const CA_SPACING: f64 = 3.5;
/// Half-angle of the cone of directions the pocket shell covers.
const SHELL_HALF_ANGLE_DEG: f64 = 115.0;

struct Draft {
    positions: Vec<[f64; 3]>,
    elements: Vec<Element>,
    bonds: Vec<(usize, usize)>,
}

impl Draft {
    fn degree(&self, i: usize) -> usize {
        self.bonds.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    fn centroid(&self) -> [f64; 3] {
        let n = self.positions.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            c = add(&c, p);
        }
        scale(&c, 1.0 / n)
    }

    /// True when `p` keeps clear of every atom except `anchor`.
    fn clear(&self, p: &[f64; 3], element: Element, anchor: usize) -> bool {
        let t = BondTable::STANDARD;
        self.positions
            .iter()
            .zip(&self.elements)
            .enumerate()
            .all(|(k, (q, &e))| k == anchor || dist(p, q) > t.bond_threshold(element, e) + NONBOND_MARGIN)
    }

    /// Places a new atom bonded to `anchor`, preferring `hint` as direction.
    fn attach(
        &mut self,
        rng: &mut StreamRng,
        anchor: usize,
        element: Element,
        hint: Option<[f64; 3]>,
    ) -> bool {
        for _ in 0..60 {
            let mut dir = rng::unit_vector(rng);
            if let Some(h) = hint {
                let mixed = add(&scale(&h, 1.5), &dir);
                let n = norm(&mixed);
                if n > 1e-9 {
                    dir = scale(&mixed, 1.0 / n);
                }
            }
            let len = rng.random_range(BOND_MIN..=BOND_MAX);
            let p = add(&self.positions[anchor], &scale(&dir, len));
            if self.clear(&p, element, anchor) {
                self.positions.push(p);
                self.elements.push(element);
                self.bonds.push((anchor, self.positions.len() - 1));
                return true;
            }
        }
        false
    }
}

fn ring(rng: &mut StreamRng, size: usize) -> Draft {
    let bond = rng.random_range(1.36..=1.46);
    let radius = bond / (2.0 * (std::f64::consts::PI / size as f64).sin());
    let positions = (0..size)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / size as f64;
            [radius * a.cos(), radius * a.sin(), 0.0]
        })
        .collect();
    Draft {
        positions,
        elements: vec![Element::C; size],
        bonds: (0..size).map(|k| (k, (k + 1) % size)).collect(),
    }
}

fn try_build(
    rng: &mut StreamRng,
    n_scaffold: usize,
    group_sizes: &[usize],
    n_pocket: usize,
) -> Result<Complex, &'static str> {
    // Scaffold.
    let ring_size = if rng.random_bool(0.65) { Some(if rng.random_bool(0.5) { 6 } else { 5 }) } else { None };
    let mut d = match ring_size {
        Some(s) if s <= n_scaffold => ring(rng, s),
        _ => Draft {
            positions: vec![[0.0; 3]],
            elements: vec![Element::C],
            bonds: vec![],
        },
    };
    while d.positions.len() < n_scaffold {
        let candidates: Vec<usize> = (0..d.positions.len()).filter(|&i| d.degree(i) < 3).collect();
        if candidates.is_empty() {
            return Err("scaffold growth: no free valence");
        }
        let anchor = candidates[rng.random_range(0..candidates.len())];
        let outward = sub(&d.positions[anchor], &d.centroid());
        let hint = (norm(&outward) > 1e-6).then(|| scale(&outward, 1.0 / norm(&outward)));
        if !d.attach(rng, anchor, Element::C, hint) {
            return Err("scaffold growth: no clear placement");
        }
    }
    let scaffold_len = d.positions.len();

    // Functional groups on peripheral atoms.
    let mut used = vec![false; scaffold_len];
    for &size in group_sizes {
        let centroid = d.centroid();
        let mut candidates: Vec<usize> =
            (0..scaffold_len).filter(|&i| !used[i] && d.degree(i) <= 2).collect();
        if candidates.is_empty() {
            return Err("functional groups: no free attachment atom");
        }
        candidates.sort_by(|&a, &b| {
            dist(&d.positions[b], &centroid).total_cmp(&dist(&d.positions[a], &centroid))
        });
        let top = candidates.len().min(3);
        let anchor = candidates[rng.random_range(0..top)];
        used[anchor] = true;
        let mut prev = anchor;
        for k in 0..size {
            let terminal = k + 1 == size;
            let element = if terminal {
                [Element::O, Element::N, Element::F, Element::S, Element::C][rng.random_range(0..5)]
            } else {
                [Element::C, Element::N, Element::O, Element::S][rng.random_range(0..4)]
            };
            let out = sub(&d.positions[prev], &centroid);
            let hint = scale(&out, 1.0 / norm(&out).max(1e-9));
            if !d.attach(rng, prev, element, Some(hint)) {
                return Err("functional groups: no clear placement");
            }
            prev = d.positions.len() - 1;
        }
    }

    // Heteroatoms in the scaffold where the final degree allows.
    for i in 0..scaffold_len {
        let deg = d.degree(i);
        let roll: f64 = rng.random();
        if roll < 0.08 && deg <= 2 {
            d.elements[i] = Element::O;
        } else if roll < 0.25 && deg <= 3 {
            d.elements[i] = Element::N;
        }
    }

    // Center and orient the ligand.
    let c = d.centroid();
    let rot = rng::rotation(rng);
    let ligand: Vec<Atom> = d
        .positions
        .iter()
        .zip(&d.elements)
        .map(|(p, &e)| Atom::new(e, apply(&rot, &sub(p, &c))))
        .collect();

    let graph = MolGraph::from_atoms(&ligand);
    if graph.bond_count() != d.bonds.len() {
        return Err("ligand: perceived bonds differ from construction");
    }
    if !graph.is_connected() || graph.valence_ok_fraction() < 1.0 {
        return Err("ligand: connectivity or valence");
    }
    let scaffold_graph = MolGraph::from_atoms(&ligand[..scaffold_len]);
    if !scaffold_graph.is_connected() {
        return Err("scaffold: not connected");
    }

    // Pocket shell.
    let axis = rng::unit_vector(rng);
    let cos_limit = SHELL_HALF_ANGLE_DEG.to_radians().cos();
    let mut pocket: Vec<Atom> = Vec::new();
    let mut tries = 0;
    while pocket.len() < n_pocket {
        tries += 1;
        if tries > 400 * n_pocket {
            return Err("pocket: shell placement");
        }
        let base = ligand[rng.random_range(0..ligand.len())].position;
        let p = add(&base, &scale(&rng::unit_vector(rng), rng.random_range(SHELL_INNER..=6.0)));
        let radial = norm(&p);
        if radial < 1e-9 || dot(&p, &axis) / radial < cos_limit {
            continue;
        }
        let nearest = ligand.iter().map(|l| dist(&l.position, &p)).fold(f64::INFINITY, f64::min);
        if !(SHELL_INNER..=SHELL_OUTER).contains(&nearest) {
            continue;
        }
        if pocket.iter().any(|q| dist(&q.position, &p) < CA_SPACING) {
            continue;
        }
        let class = ResidueClass::ALL[rng.random_range(0..ResidueClass::ALL.len())];
        pocket.push(Atom::new(Element::Residue(class), p));
    }
    if count_clashes(&ligand, &pocket) != 0 {
        return Err("pocket: clash with ligand");
    }

    let mut atoms = Vec::with_capacity(ligand.len() + pocket.len());
    let mut mask = Vec::with_capacity(atoms.capacity());
    for (i, a) in ligand.iter().enumerate() {
        let role = if i < scaffold_len { Role::Scaffold } else { Role::FunctionalGroup };
        atoms.push(AtomRecord { element: a.element, position: a.position, role });
        mask.push(role == Role::Scaffold);
    }
    for a in &pocket {
        atoms.push(AtomRecord { element: a.element, position: a.position, role: Role::Pocket });
        mask.push(false);
    }
    debug_assert_eq!(infer_bonds(&ligand).len(), d.bonds.len());
    Ok(Complex { atoms, scaffold_mask: mask })
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn apply(r: &[[f64; 3]; 3], p: &[f64; 3]) -> [f64; 3] {
    [dot(&r[0], p), dot(&r[1], p), dot(&r[2], p)]
}

/// Deterministic complex for `seed`.
pub fn synthesize_complex(seed: u64, params: &SynthParams) -> Result<Complex, Error> {
    params.validate()?;
    let mut rng = rng::substream(seed, "complex");
    let n_scaffold = rng.random_range(params.scaffold_atoms.0..=params.scaffold_atoms.1);
    let n_groups = rng.random_range(params.groups.0..=params.groups.1);
    let group_sizes: Vec<usize> = (0..n_groups)
        .map(|_| rng.random_range(params.group_atoms.0..=params.group_atoms.1))
        .collect();
    let n_pocket = rng.random_range(params.pocket_points.0..=params.pocket_points.1);
    let mut last = "none";
    for _ in 0..MAX_ATTEMPTS {
        match try_build(&mut rng, n_scaffold, &group_sizes, n_pocket) {
            Ok(c) => return Ok(c),
            Err(constraint) => last = constraint,
        }
    }
    Err(Error::Synthesis {
        constraint: last.to_string(),
        attempts: MAX_ATTEMPTS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let p = SynthParams::default();
        assert_eq!(synthesize_complex(42, &p).unwrap(), synthesize_complex(42, &p).unwrap());
        assert_ne!(synthesize_complex(42, &p).unwrap(), synthesize_complex(43, &p).unwrap());
    }

    #[test]
    fn out_of_range_params_rejected() {
        let p = SynthParams { scaffold_atoms: (4, 8), ..SynthParams::default() };
        assert!(synthesize_complex(1, &p).is_err());
    }

    #[test]
    fn generated_complexes_meet_construction_constraints() {
        let p = SynthParams::default();
        for seed in 0..1000 {
            let c = synthesize_complex(seed, &p).unwrap();
            let ligand = c.ligand();
            let pocket = c.pocket();
            let scaffold = c.scaffold();
            assert!((6..=14).contains(&scaffold.len()));
            assert!((8..=24).contains(&pocket.len()));
            assert_eq!(count_clashes(&ligand, &pocket), 0, "seed {seed}");
            assert!(MolGraph::from_atoms(&scaffold).is_connected(), "seed {seed}");
            let g = MolGraph::from_atoms(&ligand);
            assert!(g.is_connected() && g.valence_ok_fraction() == 1.0, "seed {seed}");
            for (a, b) in infer_bonds(&ligand) {
                let d = dist(&ligand[a].position, &ligand[b].position);
                assert!((BOND_MIN..=BOND_MAX).contains(&d), "seed {seed}: bond {d}");
            }
            for p in &pocket {
                let nearest = ligand
                    .iter()
                    .map(|l| dist(&l.position, &p.position))
                    .fold(f64::INFINITY, f64::min);
                assert!((3.0..=8.0).contains(&nearest), "seed {seed}: shell {nearest}");
            }
        }
    }
}
