use std::time::Instant;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{frobenius, prior_sample, ConsistencyFn, Counted, SampleResult};
use crate::consistency::{sample_noise, NoiseSchedule};
use crate::geometry::{ScaffoldState, LIGAND_ELEMENTS};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InpaintPlan {
    pub steps: usize,
    /// Passes over each block (`U`); passes after the first start from a re-noised state.
    pub resample: usize,
    /// Block length in steps between jumps back.
    pub jump: usize,
}

impl InpaintPlan {
    pub fn validate(&self) -> Result<(), Error> {
        if self.steps == 0 || self.resample == 0 || self.jump == 0 {
            return Err(Error::Invalid(format!(
                "inpainting needs steps, resample and jump >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn evaluations(&self) -> usize {
        self.steps * self.resample
    }
}

/// Overwrites masked rows with `src` and shifts the free rows so the whole
/// state has zero centre of mass.
fn merge(z: &mut ScaffoldState, src: &ScaffoldState, mask: &[bool]) {
    for (i, &known) in mask.iter().enumerate() {
        if known {
            z.x.row_mut(i).copy_from_slice(src.x.row(i));
            z.h.row_mut(i).copy_from_slice(src.h.row(i));
        }
    }
    let free = mask.iter().filter(|k| !**k).count();
    if free == 0 {
        return;
    }
    let com = z.center_of_mass();
    let n = mask.len() as f64;
    for (i, &known) in mask.iter().enumerate() {
        if !known {
            for (k, v) in z.x.row_mut(i).iter_mut().enumerate() {
                *v -= com[k] * n / free as f64;
            }
        }
    }
}

/// Generates the unmasked atoms while holding the masked atoms to `known`,
/// re-noised to the current time at every step and exact at the end.
pub fn inpaint_sample<F, R>(
    f: &F,
    schedule: &NoiseSchedule,
    known: &ScaffoldState,
    mask: &[bool],
    plan: InpaintPlan,
    rng: &mut R,
) -> Result<SampleResult, Error>
where
    F: ConsistencyFn + ?Sized,
    R: Rng + ?Sized,
{
    plan.validate()?;
    let atoms = known.atom_count();
    if mask.len() != atoms {
        return Err(Error::Invalid(format!("mask has {} entries for {atoms} atoms", mask.len())));
    }
    if atoms == 0 {
        return Err(Error::EmptyScaffold);
    }
    if mask.iter().all(|k| *k) {
        warn!("inpainting mask covers every atom; output is the known structure");
    }
    let start = Instant::now();
    let f = Counted::new(f);
    let grid = schedule.karras_grid(plan.steps + 1)?;
    let noised_known = |rng: &mut R, t: f64| {
        let noise = sample_noise(rng, atoms, LIGAND_ELEMENTS);
        let mut k = known.clone();
        k.x.axpy(t, &noise.0);
        k.h.axpy(t, &noise.1);
        k
    };

    let mut z = prior_sample(rng, atoms, grid[0]);
    let k0 = noised_known(rng, grid[0]);
    merge(&mut z, &k0, mask);

    let mut block = 0;
    while block < plan.steps {
        let end = (block + plan.jump).min(plan.steps);
        for pass in 1..=plan.resample {
            for k in block..end {
                let (t, t_next) = (grid[k], grid[k + 1]);
                let d = f.apply(&z, t)?;
                let dt = t_next - t;
                let mut next = z.clone();
                next.x.axpy(-dt / t, &d.x);
                next.x.axpy(dt / t, &z.x);
                next.h.axpy(-dt / t, &d.h);
                next.h.axpy(dt / t, &z.h);
                let src = if k + 1 == plan.steps { known.clone() } else { noised_known(rng, t_next) };
                merge(&mut next, &src, mask);
                if !next.all_finite() || frobenius(&next) > super::ode::DIVERGENCE_NORM {
                    return Err(Error::Diverged { step: k + 1 });
                }
                z = next;
            }
            if pass < plan.resample {
                let (hi, lo) = (grid[block], grid[end]);
                let noise = sample_noise(rng, atoms, LIGAND_ELEMENTS);
                let s = (hi * hi - lo * lo).sqrt();
                z.x.axpy(s, &noise.0);
                z.h.axpy(s, &noise.1);
            }
        }
        block = end;
    }
    Ok(SampleResult {
        best: z.clone(),
        final_state: z,
        best_step: plan.steps,
        scores: Vec::new(),
        evaluations: f.calls.get(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
