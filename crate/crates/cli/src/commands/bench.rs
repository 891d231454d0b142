use std::path::PathBuf;

use clap::Args;
use log::info;
use serde::Serialize;

use cmhop_core::eval::{timing_report, TimingRun};
use cmhop_core::geometry::ScaffoldState;
use cmhop_core::sampling::{custom_score, multistep_metric_sample, pf_ode_sample, ModelFn, OdeSolver, SamplingPlan, ScoreMode};
use cmhop_core::Error;

use super::{data_dir, load_model, run_file, sample_rng, Dataset, CHECKPOINT_FILE};
use crate::rundir::RunDir;
use crate::Common;

pub const CM_METHOD: &str = "consistency";
pub const ODE_METHOD: &str = "heun";

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trained checkpoint (defaults to the train run's).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Consistency sampling steps.
    #[arg(long)]
    pub cm_steps: Option<usize>,
    /// Heun integration steps.
    #[arg(long)]
    pub ode_steps: Option<usize>,
    #[arg(long)]
    pub contexts: Option<usize>,
    /// Samples per context and method.
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Serialize)]
struct MethodCounts {
    method: &'static str,
    steps: usize,
    evaluations_per_sample: usize,
}

#[derive(Serialize)]
struct BenchCounts {
    contexts: usize,
    repeats: usize,
    consistency: MethodCounts,
    ode: MethodCounts,
    evaluation_ratio: f64,
}

pub fn run(args: BenchArgs) -> anyhow::Result<()> {
    let mut config = args.common.load()?;
    let b = &mut config.bench;
    if let Some(v) = args.cm_steps {
        b.cm_steps = v;
    }
    if let Some(v) = args.ode_steps {
        b.ode_steps = v;
    }
    if let Some(v) = args.contexts {
        b.contexts = v;
    }
    if let Some(v) = args.repeats {
        b.repeats = v;
    }
    config.validate()?;
    let b = config.bench;
    let ckpt_path = run_file(args.checkpoint.as_deref(), &config, "train", CHECKPOINT_FILE);
    let dir = data_dir(args.data.as_deref(), &config);
    let (ckpt, net) = load_model(&ckpt_path)?;
    let data = Dataset::load(&dir)?;
    let n = data.take(b.contexts, "bench")?;
    let run = RunDir::create(&config, "bench", args.common.run.as_deref(), &[ckpt_path.as_path(), dir.as_path()])?;

    let plan = SamplingPlan::karras(&ckpt.schedule, b.cm_steps, 1, config.sample.renoise)?;
    let params = &ckpt.params.target;
    let mut runs = Vec::new();
    let (mut cm_evals, mut ode_evals) = (0, 0);
    for r in 0..b.repeats {
        for (c, ctx) in data.contexts[..n].iter().enumerate() {
            let prepared = net.prepare(ctx.clone())?;
            let f = ModelFn { net: &net, params, context: &prepared, schedule: &ckpt.schedule };
            let atoms = data.references[c].atom_count();

            let mut rng = sample_rng(config.seed, "bench-cm", c, r);
            let cm = match config.sample.score {
                ScoreMode::Default => {
                    let score = |z: &ScaffoldState| -> Result<f64, Error> { Ok(custom_score(z, ctx)) };
                    multistep_metric_sample(&f, &plan, atoms, Some(score), &mut rng)?
                }
                ScoreMode::Off => multistep_metric_sample(&f, &plan, atoms, None::<fn(&ScaffoldState) -> Result<f64, Error>>, &mut rng)?,
            };
            cm_evals = cm.evaluations;
            runs.push(TimingRun { method: CM_METHOD.into(), wall_clock_secs: cm.wall_clock_secs, evaluations: cm.evaluations, steps: b.cm_steps });

            let mut rng = sample_rng(config.seed, "bench-ode", c, r);
            let ode = pf_ode_sample(&f, &ckpt.schedule, atoms, b.ode_steps, OdeSolver::Heun, &mut rng)?;
            ode_evals = ode.evaluations;
            runs.push(TimingRun { method: ODE_METHOD.into(), wall_clock_secs: ode.wall_clock_secs, evaluations: ode.evaluations, steps: b.ode_steps });
            info!(
                "context {c} repeat {r}: consistency {:.3}s ({} evals), heun {:.3}s ({} evals)",
                cm.wall_clock_secs, cm.evaluations, ode.wall_clock_secs, ode.evaluations
            );
        }
    }
    run.write_json(
        "bench.json",
        &BenchCounts {
            contexts: n,
            repeats: b.repeats,
            consistency: MethodCounts { method: CM_METHOD, steps: b.cm_steps, evaluations_per_sample: cm_evals },
            ode: MethodCounts { method: ODE_METHOD, steps: b.ode_steps, evaluations_per_sample: ode_evals },
            evaluation_ratio: ode_evals as f64 / cm_evals as f64,
        },
    )?;
    let rows = timing_report(&runs, ODE_METHOD);
    for row in &rows {
        info!("{}: mean {:.3}s, speedup {:?}", row.method, row.wall_clock.mean, row.speedup);
    }
    run.write_json("timing.json", &rows)?;
    Ok(())
}
