//! Hashed circular fingerprints, Tanimoto dissimilarity, and a
//! Weisfeiler–Lehman canonical digest.

use super::{Element, MolGraph};

pub const FINGERPRINT_BITS: usize = 2048;
pub const FINGERPRINT_RADIUS: usize = 2;
pub const WL_ROUNDS: usize = 3;

/// Digest returned for a graph without atoms.
pub const EMPTY_GRAPH_DIGEST: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn combine(seed: u64, v: u64) -> u64 {
    mix64(seed ^ v.wrapping_mul(0xff51_afd7_ed55_8ccd).rotate_left(17))
}

fn element_seed(e: Element) -> u64 {
    mix64(1 + e.kind_index() as u64)
}

/// One refinement round: each label becomes a hash of itself and the
/// sorted multiset of neighbour labels.
fn refine(graph: &MolGraph, labels: &[u64]) -> Vec<u64> {
    (0..graph.len())
        .map(|i| {
            let mut nb: Vec<u64> = graph.neighbors[i].iter().map(|&j| labels[j]).collect();
            nb.sort_unstable();
            nb.into_iter()
                .fold(combine(labels[i], nb_len_tag(graph.degree(i))), combine)
        })
        .collect()
}

fn nb_len_tag(deg: usize) -> u64 {
    0x51_7cc1_b727_220a ^ deg as u64
}

/// Set bits of a radius-2 hashed atom-environment fingerprint.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fingerprint {
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn of(graph: &MolGraph) -> Self {
        let mut words = vec![0u64; FINGERPRINT_BITS / 64];
        let mut set = |h: u64| {
            let bit = (h % FINGERPRINT_BITS as u64) as usize;
            words[bit / 64] |= 1 << (bit % 64);
        };
        let mut labels: Vec<u64> = (0..graph.len())
            .map(|i| combine(element_seed(graph.elements[i]), graph.degree(i) as u64))
            .collect();
        labels.iter().for_each(|&l| set(l));
        for _ in 0..FINGERPRINT_RADIUS {
            labels = refine(graph, &labels);
            labels.iter().for_each(|&l| set(l));
        }
        Self { words }
    }

    pub fn count(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// `1 - |A ∩ B| / |A ∪ B|`; 0 when both are empty.
pub fn tanimoto_dissimilarity(a: &Fingerprint, b: &Fingerprint) -> f64 {
    let inter: u32 = a.words.iter().zip(&b.words).map(|(x, y)| (x & y).count_ones()).sum();
    let union: u32 = a.words.iter().zip(&b.words).map(|(x, y)| (x | y).count_ones()).sum();
    if union == 0 {
        0.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

pub fn fingerprint_tanimoto(a: &MolGraph, b: &MolGraph) -> f64 {
    tanimoto_dissimilarity(&Fingerprint::of(a), &Fingerprint::of(b))
}

/// Permutation-invariant 64-bit digest from three element-seeded WL rounds.
pub fn canonical_hash(graph: &MolGraph) -> u64 {
    if graph.is_empty() {
        return EMPTY_GRAPH_DIGEST;
    }
    let mut labels: Vec<u64> = graph.elements.iter().map(|&e| element_seed(e)).collect();
    let mut digest = combine(0x6a09_e667_f3bc_c909, graph.len() as u64);
    for round in 0..=WL_ROUNDS {
        if round > 0 {
            labels = refine(graph, &labels);
        }
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        digest = sorted.into_iter().fold(combine(digest, round as u64), combine);
    }
    digest
}
