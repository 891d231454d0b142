use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geometry::{dist, infer_bonds, sub, Atom, Element, MolGraph};
use crate::Error;

/// Element pairs whose bond lengths are histogrammed.
pub const BOND_PAIRS: [(Element, Element); 3] = [(Element::C, Element::C), (Element::C, Element::N), (Element::C, Element::O)];
const BOND_RANGE: (f64, f64, f64) = (1.0, 2.0, 0.05);
const ANGLE_RANGE: (f64, f64, f64) = (60.0, 180.0, 5.0);
const RING_MIN: usize = 3;
const RING_MAX: usize = 9;
/// Values within this many bins below an edge are counted in the upper bin.
const EDGE_SLACK: f64 = 1e-9;

/// Fixed-width histogram over `[lo, lo + width·bins]`; values outside are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<f64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, width: f64) -> Self {
        let bins = ((hi - lo) / width).round() as usize;
        Self { lo, width, counts: vec![0.0; bins] }
    }

    pub fn bin(&self, value: f64) -> Option<usize> {
        let pos = (value - self.lo) / self.width + EDGE_SLACK;
        if !(pos >= 0.0) {
            return None;
        }
        let i = pos.floor() as usize;
        let hi = self.counts.len();
        if i < hi {
            Some(i)
        } else if (value - (self.lo + self.width * hi as f64)).abs() <= EDGE_SLACK * self.width {
            Some(hi - 1)
        } else {
            None
        }
    }

    pub fn add(&mut self, value: f64) {
        if let Some(i) = self.bin(value) {
            self.counts[i] += 1.0;
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Counts scaled to unit mass; all zeros if empty.
    pub fn normalized(&self) -> Vec<f64> {
        let t = self.total();
        if t > 0.0 {
            self.counts.iter().map(|c| c / t).collect()
        } else {
            self.counts.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryHistograms {
    /// Keyed `"C-C"`, `"C-N"`, `"C-O"`.
    pub bonds: BTreeMap<String, Histogram>,
    pub angles: Histogram,
    /// Counts of rings with 3..=9 members, index 0 = size 3.
    pub rings: [usize; RING_MAX - RING_MIN + 1],
}

fn pair_key(a: Element, b: Element) -> Option<String> {
    BOND_PAIRS
        .iter()
        .find(|&&(x, y)| (x, y) == (a, b) || (y, x) == (a, b))
        .map(|(x, y)| format!("{}-{}", x.symbol(), y.symbol()))
}

/// Bond-length, bond-angle and ring-size statistics over perceived bonds.
pub fn bond_geometry_histograms(molecules: &[Vec<Atom>]) -> GeometryHistograms {
    let (lo, hi, w) = BOND_RANGE;
    let mut bonds: BTreeMap<String, Histogram> = BOND_PAIRS
        .iter()
        .map(|&(a, b)| (pair_key(a, b).unwrap_or_default(), Histogram::new(lo, hi, w)))
        .collect();
    let (alo, ahi, aw) = ANGLE_RANGE;
    let mut angles = Histogram::new(alo, ahi, aw);
    let mut rings = [0usize; RING_MAX - RING_MIN + 1];
    for atoms in molecules {
        let pairs = infer_bonds(atoms);
        for &(i, j) in &pairs {
            if let Some(h) = pair_key(atoms[i].element, atoms[j].element).and_then(|k| bonds.get_mut(&k)) {
                h.add(dist(&atoms[i].position, &atoms[j].position));
            }
        }
        let graph = MolGraph::from_bonds(atoms.iter().map(|a| a.element).collect(), &pairs);
        for (c, nbrs) in graph.neighbors.iter().enumerate() {
            for a in 0..nbrs.len() {
                for b in a + 1..nbrs.len() {
                    let u = sub(&atoms[nbrs[a]].position, &atoms[c].position);
                    let v = sub(&atoms[nbrs[b]].position, &atoms[c].position);
                    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
                    let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                    let nv = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if nu > 0.0 && nv > 0.0 {
                        angles.add((dot / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees());
                    }
                }
            }
        }
        for size in ring_sizes(&graph) {
            if (RING_MIN..=RING_MAX).contains(&size) {
                rings[size - RING_MIN] += 1;
            }
        }
    }
    GeometryHistograms { bonds, angles, rings }
}

/// Ring sizes of a minimum cycle basis: shortest cycles through each bond,
/// kept greedily by length while independent over GF(2).
pub fn ring_sizes(graph: &MolGraph) -> Vec<usize> {
    let mut edges = Vec::new();
    for (u, nbrs) in graph.neighbors.iter().enumerate() {
        for &v in nbrs {
            if u < v {
                edges.push((u, v));
            }
        }
    }
    let rank = edges.len() + graph.component_count() - graph.len();
    if rank == 0 {
        return Vec::new();
    }
    let edge_index = |a: usize, b: usize| edges.iter().position(|&e| e == (a.min(b), a.max(b)));
    let words = edges.len().div_ceil(64);
    let mut candidates: Vec<(usize, Vec<u64>)> = Vec::new();
    for (k, &(u, v)) in edges.iter().enumerate() {
        // shortest u→v path avoiding the edge itself
        let mut prev = vec![usize::MAX; graph.len()];
        prev[u] = u;
        let mut queue = VecDeque::from([u]);
        while let Some(x) = queue.pop_front() {
            if x == v {
                break;
            }
            for &y in &graph.neighbors[x] {
                if prev[y] == usize::MAX && !(x == u && y == v) {
                    prev[y] = x;
                    queue.push_back(y);
                }
            }
        }
        if prev[v] == usize::MAX {
            continue;
        }
        let mut bits = vec![0u64; words];
        bits[k / 64] |= 1 << (k % 64);
        let mut len = 1;
        let mut x = v;
        while x != u {
            let e = edge_index(x, prev[x]).unwrap_or(k);
            bits[e / 64] |= 1 << (e % 64);
            len += 1;
            x = prev[x];
        }
        candidates.push((len, bits));
    }
    candidates.sort_by_key(|c| c.0);
    let mut basis: Vec<Vec<u64>> = Vec::new();
    let mut sizes = Vec::new();
    for (len, bits) in candidates {
        let mut r = bits;
        for b in &basis {
            let pivot = lowest_bit(b);
            if r[pivot / 64] >> (pivot % 64) & 1 == 1 {
                for (x, y) in r.iter_mut().zip(b) {
                    *x ^= y;
                }
            }
        }
        if r.iter().any(|&w| w != 0) {
            // keep the basis in reduced form so pivots stay unique
            let pivot = lowest_bit(&r);
            for b in basis.iter_mut() {
                if b[pivot / 64] >> (pivot % 64) & 1 == 1 {
                    for (x, y) in b.iter_mut().zip(&r) {
                        *x ^= y;
                    }
                }
            }
            basis.push(r);
            sizes.push(len);
            if sizes.len() == rank {
                break;
            }
        }
    }
    sizes
}

fn lowest_bit(bits: &[u64]) -> usize {
    bits.iter()
        .enumerate()
        .find(|(_, w)| **w != 0)
        .map_or(usize::MAX, |(i, w)| i * 64 + w.trailing_zeros() as usize)
}

/// Jensen–Shannon divergence (natural log) between two histograms with the
/// same binning. Inputs are normalised first.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64, Error> {
    if p.len() != q.len() {
        return Err(Error::Invalid(format!("histograms have {} and {} bins", p.len(), q.len())));
    }
    let norm = |h: &[f64], name: &str| -> Result<Vec<f64>, Error> {
        if h.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Invalid(format!("histogram {name} has negative or non-finite mass")));
        }
        let s: f64 = h.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Invalid(format!("histogram {name} is empty")));
        }
        Ok(h.iter().map(|v| v / s).collect())
    };
    let (p, q) = (norm(p, "p")?, norm(q, "q")?);
    let kl = |a: &[f64], m: &[f64]| -> f64 {
        a.iter().zip(m).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * (x / y).ln()).sum()
    };
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)).max(0.0))
}
