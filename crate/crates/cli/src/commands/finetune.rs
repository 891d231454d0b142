use std::path::PathBuf;

use clap::{Args, ValueEnum};
use log::info;
use serde::Serialize;

use cmhop_core::consistency::EmaPair;
use cmhop_core::eval::spearman;
use cmhop_core::geometry::{count_clashes, ScaffoldState};
use cmhop_core::io::{save_checkpoint, Checkpoint};
use cmhop_core::rl::{proxy_pocket_energy, IterationRecord, RewardKind, RlTrainer, RolloutContext};
use cmhop_core::sampling::{multistep_metric_sample, ModelFn, SamplingPlan};
use cmhop_core::{Denoiser, Error, NoiseSchedule, Params};

use super::{data_dir, load_model, run_file, sample_rng, Dataset, CHECKPOINT_FILE};
use crate::rundir::RunDir;
use crate::Common;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RewardArg {
    Affinity,
    Clash,
}

impl From<RewardArg> for RewardKind {
    fn from(r: RewardArg) -> Self {
        match r {
            RewardArg::Affinity => RewardKind::Affinity,
            RewardArg::Clash => RewardKind::Clash,
        }
    }
}

#[derive(Args, Debug)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint to start from (defaults to the train run's); its EMA parameters are fine-tuned.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory of complex files; the first contexts are used.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub reward: Option<RewardArg>,
    /// Policy steps per trajectory.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Policy updates.
    #[arg(long)]
    pub iterations: Option<u64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Clip range of the surrogate ratio.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Contexts to fine-tune on.
    #[arg(long)]
    pub contexts: Option<usize>,
    /// Trajectories per context per iteration.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SamplerStats {
    pub mean_clashes: f64,
    pub mean_proxy_energy: f64,
    pub samples: usize,
}

#[derive(Serialize)]
struct FinetuneSummary {
    reward: RewardKind,
    iterations: u64,
    horizon: usize,
    contexts: usize,
    before: SamplerStats,
    after: SamplerStats,
    clash_reduction: f64,
    /// Rank correlation of per-iteration mean reward with the iteration index.
    reward_trend_spearman: Option<f64>,
    first_mean_reward: Option<f64>,
    last_mean_reward: Option<f64>,
    dropped_trajectories: usize,
}

/// Mean clash count and proxy energy of the plain multistep sampler over
/// fixed seeds, using the same plan as the policy.
#[allow(clippy::too_many_arguments)]
pub fn sampler_stats(
    net: &Denoiser,
    params: &Params,
    schedule: &NoiseSchedule,
    plan: &SamplingPlan,
    contexts: &[RolloutContext],
    samples: usize,
    seed: u64,
) -> anyhow::Result<SamplerStats> {
    let (mut clashes, mut energy) = (0.0, 0.0);
    for (c, rc) in contexts.iter().enumerate() {
        let f = ModelFn { net, params, context: &rc.context, schedule };
        for k in 0..samples {
            let mut rng = sample_rng(seed, "rl-eval", c, k);
            let r = multistep_metric_sample(&f, plan, rc.atoms, None::<fn(&ScaffoldState) -> Result<f64, Error>>, &mut rng)?;
            let mol = rc.context.context();
            let ligand = mol.ligand_with(&r.final_state.to_atoms());
            clashes += count_clashes(&ligand, &mol.pocket) as f64;
            energy += proxy_pocket_energy(&ligand, &mol.pocket);
        }
    }
    let n = (contexts.len() * samples) as f64;
    Ok(SamplerStats { mean_clashes: clashes / n, mean_proxy_energy: energy / n, samples: contexts.len() * samples })
}

pub fn run(args: FinetuneArgs) -> anyhow::Result<()> {
    let mut config = args.common.load()?;
    let rl = &mut config.rl;
    if let Some(v) = args.reward {
        rl.reward = v.into();
    }
    if let Some(v) = args.horizon {
        rl.policy.horizon = v;
    }
    if let Some(v) = args.iterations {
        rl.iterations = v;
    }
    if let Some(v) = args.lr {
        rl.policy.adam.lr = v;
    }
    if let Some(v) = args.clip {
        rl.policy.clip_range = v;
    }
    if let Some(v) = args.contexts {
        rl.contexts = v;
    }
    if let Some(v) = args.samples {
        rl.policy.samples_per_context = v;
    }
    config.validate()?;
    let rl = config.rl;
    let ckpt_path = run_file(args.checkpoint.as_deref(), &config, "train", CHECKPOINT_FILE);
    let dir = data_dir(args.data.as_deref(), &config);
    let (ckpt, net) = load_model(&ckpt_path)?;
    let data = Dataset::load(&dir)?;
    let n = data.take(rl.contexts, "fine-tuning")?;
    let run = RunDir::create(&config, "finetune", args.common.run.as_deref(), &[ckpt_path.as_path(), dir.as_path()])?;

    let contexts = data.contexts[..n]
        .iter()
        .zip(&data.references)
        .map(|(ctx, clean)| {
            Ok(RolloutContext { context: net.prepare(ctx.clone())?, reference: clean.to_atoms(), atoms: clean.atom_count() })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let schedule = ckpt.schedule;
    let plan = SamplingPlan::karras(&schedule, rl.policy.horizon + 1, 1, rl.policy.renoise)?;
    let before = sampler_stats(&net, &ckpt.params.target, &schedule, &plan, &contexts, rl.eval_samples, config.seed)?;
    info!("before: {:.3} clashes, proxy energy {:.3}", before.mean_clashes, before.mean_proxy_energy);

    let mut trainer = RlTrainer::new(net.clone(), ckpt.params.target.clone(), schedule, rl.policy, rl.reward, contexts, config.seed)?;
    let mut records: Vec<IterationRecord> = Vec::new();
    for _ in 0..rl.iterations {
        let r = trainer.iterate()?;
        if r.iteration % 10 == 0 {
            info!("iteration {}: reward {:.4}, clashes {:.3}", r.iteration, r.mean_reward, r.mean_clashes);
        }
        records.push(r);
    }
    let after = sampler_stats(&net, &trainer.params, &schedule, &plan, &trainer.contexts, rl.eval_samples, config.seed)?;
    info!("after: {:.3} clashes, proxy energy {:.3}", after.mean_clashes, after.mean_proxy_energy);

    let rows: Vec<String> = records.iter().map(IterationRecord::csv_row).collect();
    run.write_csv("rl.csv", IterationRecord::CSV_HEADER, &rows)?;
    let rewards: Vec<f64> = records.iter().map(|r| r.mean_reward).collect();
    let index: Vec<f64> = (0..rewards.len()).map(|i| i as f64).collect();
    run.write_json(
        "summary.json",
        &FinetuneSummary {
            reward: rl.reward,
            iterations: rl.iterations,
            horizon: rl.policy.horizon,
            contexts: n,
            before,
            after,
            clash_reduction: if before.mean_clashes > 0.0 { 1.0 - after.mean_clashes / before.mean_clashes } else { 0.0 },
            reward_trend_spearman: spearman(&index, &rewards),
            first_mean_reward: rewards.first().copied(),
            last_mean_reward: rewards.last().copied(),
            dropped_trajectories: records.iter().map(|r| r.update.dropped).sum(),
        },
    )?;
    let tuned = trainer.params.clone();
    let out = Checkpoint {
        model: ckpt.model.clone(),
        schedule,
        step: ckpt.step,
        params: EmaPair::from_parts(tuned.clone(), tuned)?,
    };
    save_checkpoint(&run.file(CHECKPOINT_FILE), &out)?;
    Ok(())
}
