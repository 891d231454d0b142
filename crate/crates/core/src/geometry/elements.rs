use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Coarse residue classes for Cα-level pocket nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResidueClass {
    Hydrophobic,
    Aromatic,
    Polar,
    Positive,
    Negative,
}

impl ResidueClass {
    pub const ALL: [ResidueClass; 5] = [
        ResidueClass::Hydrophobic,
        ResidueClass::Aromatic,
        ResidueClass::Polar,
        ResidueClass::Positive,
        ResidueClass::Negative,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Atom kinds: ligand heavy elements plus pocket residue classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    C,
    N,
    O,
    F,
    S,
    Residue(ResidueClass),
}

/// Number of ligand element classes (the scaffold feature width).
pub const LIGAND_ELEMENTS: usize = 5;
/// Number of residue classes (the pocket feature width).
pub const RESIDUE_CLASSES: usize = 5;
/// Width of the complex-level one-hot (all kinds).
pub const ELEMENT_KINDS: usize = LIGAND_ELEMENTS + RESIDUE_CLASSES;

impl Element {
    pub const LIGAND: [Element; LIGAND_ELEMENTS] =
        [Element::C, Element::N, Element::O, Element::F, Element::S];

    pub fn is_ligand(self) -> bool {
        !matches!(self, Element::Residue(_))
    }

    /// One-hot slot among the ligand elements; `None` for residues.
    pub fn ligand_index(self) -> Option<usize> {
        match self {
            Element::C => Some(0),
            Element::N => Some(1),
            Element::O => Some(2),
            Element::F => Some(3),
            Element::S => Some(4),
            Element::Residue(_) => None,
        }
    }

    pub fn from_ligand_index(i: usize) -> Option<Element> {
        Self::LIGAND.get(i).copied()
    }

    /// Slot in the combined one-hot over all kinds.
    pub fn kind_index(self) -> usize {
        match self {
            Element::Residue(r) => LIGAND_ELEMENTS + r.index(),
            e => e.ligand_index().unwrap_or(0),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::S => "S",
            Element::Residue(ResidueClass::Hydrophobic) => "CA_HYD",
            Element::Residue(ResidueClass::Aromatic) => "CA_ARO",
            Element::Residue(ResidueClass::Polar) => "CA_POL",
            Element::Residue(ResidueClass::Positive) => "CA_POS",
            Element::Residue(ResidueClass::Negative) => "CA_NEG",
        }
    }

    /// Radii lookup key: Cα points are treated as carbon.
    fn radius_class(self) -> Element {
        match self {
            Element::Residue(_) => Element::C,
            e => e,
        }
    }

    pub fn covalent_radius(self) -> f64 {
        BondTable::STANDARD.covalent(self)
    }

    pub fn vdw_radius(self) -> f64 {
        BondTable::STANDARD.vdw(self)
    }

    /// Maximum bond count accepted by the valence check.
    pub fn max_valence(self) -> usize {
        match self.radius_class() {
            Element::C => 4,
            Element::N => 3,
            Element::O => 2,
            Element::F => 1,
            Element::S => 6,
            Element::Residue(_) => unreachable!(),
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown element {0:?}")]
pub struct UnknownElement(pub String);

impl FromStr for Element {
    type Err = UnknownElement;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "F" => Element::F,
            "S" => Element::S,
            "CA_HYD" => Element::Residue(ResidueClass::Hydrophobic),
            "CA_ARO" => Element::Residue(ResidueClass::Aromatic),
            "CA_POL" => Element::Residue(ResidueClass::Polar),
            "CA_POS" => Element::Residue(ResidueClass::Positive),
            "CA_NEG" => Element::Residue(ResidueClass::Negative),
            other => return Err(UnknownElement(other.to_string())),
        })
    }
}

impl Serialize for Element {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.symbol())
    }
}

impl<'de> Deserialize<'de> for Element {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Radii (Å) and tolerances for bond perception and clash detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BondTable {
    /// Covalent radii in ligand element order C, N, O, F, S.
    pub covalent: [f64; LIGAND_ELEMENTS],
    /// Van der Waals radii, same order.
    pub vdw: [f64; LIGAND_ELEMENTS],
    /// Added to the covalent radius sum when perceiving bonds.
    pub bond_tolerance: f64,
    /// Subtracted from the vdW radius sum when counting clashes.
    pub clash_tolerance: f64,
}

impl BondTable {
    pub const STANDARD: BondTable = BondTable {
        covalent: [0.77, 0.75, 0.73, 0.71, 1.02],
        vdw: [1.70, 1.55, 1.52, 1.47, 1.80],
        bond_tolerance: 0.4,
        clash_tolerance: 0.5,
    };

    pub fn covalent(&self, e: Element) -> f64 {
        self.covalent[e.radius_class().ligand_index().unwrap_or(0)]
    }

    pub fn vdw(&self, e: Element) -> f64 {
        self.vdw[e.radius_class().ligand_index().unwrap_or(0)]
    }

    /// Bonded iff the distance is strictly below this.
    pub fn bond_threshold(&self, a: Element, b: Element) -> f64 {
        self.covalent(a) + self.covalent(b) + self.bond_tolerance
    }

    /// Clash iff the distance is strictly below this.
    pub fn clash_threshold(&self, a: Element, b: Element) -> f64 {
        self.vdw(a) + self.vdw(b) - self.clash_tolerance
    }
}

/// Role of an atom in a complex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Pocket,
    FunctionalGroup,
    Scaffold,
}

impl Role {
    pub fn index(self) -> usize {
        match self {
            Role::Pocket => 0,
            Role::FunctionalGroup => 1,
            Role::Scaffold => 2,
        }
    }
}
