use serde::{Deserialize, Serialize};

use crate::geometry::{connectivity_and_valence, count_clashes, dist, Atom, BondTable};

/// Interaction shell for the proxy energy (Å).
const ENERGY_CUTOFF: f64 = 8.0;
/// Distances are floored at this fraction of the contact distance.
const DISTANCE_FLOOR: f64 = 0.8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    #[default]
    Affinity,
    Clash,
}

/// Components of a terminal reward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub generated_energy: f64,
    pub reference_energy: f64,
    /// Valence-satisfied atom fraction of the generated ligand.
    pub validity: f64,
    /// 1 if the generated ligand is one connected component.
    pub connectivity: f64,
    pub clashes: usize,
    pub reference_clashes: usize,
    pub reward: f64,
}

/// Lennard-Jones style contact energy summed over ligand–pocket pairs
/// within 8 Å, with contact distance `vdW_i + vdW_j − 0.5`.
pub fn proxy_pocket_energy(ligand: &[Atom], pocket: &[Atom]) -> f64 {
    let table = BondTable::STANDARD;
    let mut e = 0.0;
    for l in ligand {
        for p in pocket {
            let d = dist(&l.position, &p.position);
            if d > ENERGY_CUTOFF {
                continue;
            }
            let r0 = table.clash_threshold(l.element, p.element);
            let s6 = (r0 / d.max(DISTANCE_FLOOR * r0)).powi(6);
            e += 4.0 * (s6 * s6 - s6);
        }
    }
    e
}

fn terms(molecule: &[Atom], reference: &[Atom], pocket: &[Atom]) -> RewardTerms {
    let (connected, validity) = connectivity_and_valence(molecule);
    RewardTerms {
        generated_energy: proxy_pocket_energy(molecule, pocket),
        reference_energy: proxy_pocket_energy(reference, pocket),
        validity,
        connectivity: f64::from(u8::from(connected)),
        clashes: count_clashes(molecule, pocket),
        reference_clashes: count_clashes(reference, pocket),
        reward: 0.0,
    }
}

/// `−2·(DS − RS) + V + C` with DS, RS the proxy energies of the generated
/// and reference ligands.
pub fn reward_affinity(molecule: &[Atom], reference: &[Atom], pocket: &[Atom]) -> RewardTerms {
    let mut t = terms(molecule, reference, pocket);
    t.reward = -2.0 * (t.generated_energy - t.reference_energy) + t.validity + t.connectivity;
    t
}

/// `C + V − (SC − RSC)` with SC, RSC the clash counts of the generated and
/// reference ligands.
pub fn reward_clash(molecule: &[Atom], reference: &[Atom], pocket: &[Atom]) -> RewardTerms {
    let mut t = terms(molecule, reference, pocket);
    t.reward = t.connectivity + t.validity - (t.clashes as f64 - t.reference_clashes as f64);
    t
}

impl RewardKind {
    pub fn evaluate(self, molecule: &[Atom], reference: &[Atom], pocket: &[Atom]) -> RewardTerms {
        match self {
            RewardKind::Affinity => reward_affinity(molecule, reference, pocket),
            RewardKind::Clash => reward_clash(molecule, reference, pocket),
        }
    }
}
