use crate::autodiff::Tensor;
use crate::geometry::{dist, Element, MolecularContext, LIGAND_ELEMENTS, RESIDUE_CLASSES};
use crate::Error;

/// A [`MolecularContext`] with node features and context–context edges
/// precomputed, so repeated denoiser calls only rebuild scaffold edges.
#[derive(Clone, Debug)]
pub struct PreparedContext {
    context: MolecularContext,
    pub(crate) group_features: Tensor,
    pub(crate) pocket_features: Tensor,
    /// Groups first, then pocket atoms.
    pub(crate) positions: Vec<[f64; 3]>,
    /// Directed edges `(receiver, sender, quantized distance)` in context-local indices.
    pub(crate) edges: Vec<(usize, usize, f64)>,
}

pub(crate) fn quantize(d: f64, quantum: f64) -> f64 {
    (d / quantum).round() * quantum
}

impl PreparedContext {
    pub fn new(context: MolecularContext, cutoff: f64, quantum: f64) -> Result<Self, Error> {
        let mut group_features = Tensor::zeros(context.groups.len(), LIGAND_ELEMENTS);
        for (i, a) in context.groups.iter().enumerate() {
            let k = a.element.ligand_index().ok_or_else(|| {
                Error::Invalid(format!("functional-group atom {i} is a pocket residue"))
            })?;
            group_features.set(i, k, 1.0);
        }
        let mut pocket_features = Tensor::zeros(context.pocket.len(), RESIDUE_CLASSES);
        for (i, a) in context.pocket.iter().enumerate() {
            match a.element {
                Element::Residue(c) => pocket_features.set(i, c.index(), 1.0),
                other => {
                    return Err(Error::Invalid(format!(
                        "pocket atom {i} has ligand element {}",
                        other.symbol()
                    )))
                }
            }
        }
        let positions: Vec<[f64; 3]> =
            context.groups.iter().chain(&context.pocket).map(|a| a.position).collect();
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("context has non-finite coordinates".into()));
        }
        let mut edges = Vec::new();
        for i in 0..positions.len() {
            for j in 0..positions.len() {
                if i == j {
                    continue;
                }
                let d = quantize(dist(&positions[i], &positions[j]), quantum);
                if d > 0.0 && d <= cutoff {
                    edges.push((i, j, d));
                }
            }
        }
        Ok(Self { context, group_features, pocket_features, positions, edges })
    }

    pub fn context(&self) -> &MolecularContext {
        &self.context
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}
