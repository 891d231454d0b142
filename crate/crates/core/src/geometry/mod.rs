//! Molecular data model, synthetic complexes, graph construction, and
//! chemistry-adjacent measurements.

mod bonds;
mod complex;
mod elements;
mod fingerprint;
mod synth;

pub use bonds::{connectivity_and_valence, count_clashes, infer_bonds, Atom, MolGraph};
pub use complex::{
    build_context, center_all, subtract_com, subtract_com_in_place, AtomRecord, Complex,
    ComplexGraph, Edge, MolecularContext, ScaffoldState, EDGE_CUTOFF, GRAPH_FEATURES,
    POCKET_CUTOFF,
};
pub use elements::{
    BondTable, Element, ResidueClass, Role, UnknownElement, ELEMENT_KINDS, LIGAND_ELEMENTS,
    RESIDUE_CLASSES,
};
pub use fingerprint::{
    canonical_hash, fingerprint_tanimoto, tanimoto_dissimilarity, Fingerprint,
    EMPTY_GRAPH_DIGEST, FINGERPRINT_BITS,
};
pub use synth::{synthesize_complex, SynthParams};

pub fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    norm(&sub(a, b))
}

pub(crate) fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn norm(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// `r * p` for a 3×3 matrix `r`.
pub fn rotate(r: &[[f64; 3]; 3], p: &[f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2])
}
