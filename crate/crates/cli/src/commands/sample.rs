use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use log::info;
use serde::Serialize;

use cmhop_core::geometry::ScaffoldState;
use cmhop_core::sampling::{custom_score, multistep_metric_sample, ModelFn, SamplingPlan, ScoreMode};
use cmhop_core::Error;

use super::{data_dir, load_model, run_file, sample_rng, Dataset, SampleFile, SampleRecord, CHECKPOINT_FILE, SAMPLES_FILE};
use crate::rundir::RunDir;
use crate::Common;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScoreArg {
    Off,
    Default,
}

impl From<ScoreArg> for ScoreMode {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::Off => ScoreMode::Off,
            ScoreArg::Default => ScoreMode::Default,
        }
    }
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trained checkpoint (defaults to the train run's).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory of complex files providing the pockets.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Consistency steps per sample.
    #[arg(long)]
    pub steps: Option<usize>,
    /// First step whose output is scored.
    #[arg(long)]
    pub metric_start: Option<usize>,
    /// Candidate selection score.
    #[arg(long, value_enum)]
    pub score: Option<ScoreArg>,
    /// Contexts to sample for, taken from the start of the dataset.
    #[arg(long)]
    pub contexts: Option<usize>,
    /// Samples per context.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Serialize)]
struct SampleTiming {
    samples: usize,
    wall_clock_secs: f64,
    mean_secs_per_sample: f64,
    evaluations: usize,
}

pub fn run(args: SampleArgs) -> anyhow::Result<()> {
    let mut config = args.common.load()?;
    let s = &mut config.sample;
    if let Some(v) = args.steps {
        s.steps = v;
        if args.metric_start.is_none() {
            s.metric_start = s.metric_start.min(v.saturating_sub(1).max(1));
        }
    }
    if let Some(v) = args.metric_start {
        s.metric_start = v;
    }
    if let Some(v) = args.score {
        s.score = v.into();
    }
    if let Some(v) = args.contexts {
        s.contexts = v;
    }
    if let Some(v) = args.samples {
        s.samples_per_context = v;
    }
    config.validate()?;
    let s = config.sample;
    let ckpt_path = run_file(args.checkpoint.as_deref(), &config, "train", CHECKPOINT_FILE);
    let dir = data_dir(args.data.as_deref(), &config);
    let (ckpt, net) = load_model(&ckpt_path)?;
    let data = Dataset::load(&dir)?;
    let n = data.take(s.contexts, "sampling")?;
    let run = RunDir::create(&config, "sample", args.common.run.as_deref(), &[ckpt_path.as_path(), dir.as_path()])?;

    let plan = SamplingPlan::karras(&ckpt.schedule, s.steps, s.metric_start, s.renoise)?;
    let params = &ckpt.params.target;
    let mut records = Vec::new();
    let mut evaluations = 0;
    let start = Instant::now();
    for (c, ctx) in data.contexts[..n].iter().enumerate() {
        let prepared = net.prepare(ctx.clone())?;
        let f = ModelFn { net: &net, params, context: &prepared, schedule: &ckpt.schedule };
        let atoms = data.references[c].atom_count();
        let score = |z: &ScaffoldState| -> Result<f64, Error> { Ok(custom_score(z, ctx)) };
        for k in 0..s.samples_per_context {
            let mut rng = sample_rng(config.seed, "sample", c, k);
            let r = match s.score {
                ScoreMode::Default => multistep_metric_sample(&f, &plan, atoms, Some(score), &mut rng),
                ScoreMode::Off => multistep_metric_sample(&f, &plan, atoms, None::<fn(&ScaffoldState) -> Result<f64, Error>>, &mut rng),
            };
            let (best_step, evals, atoms) = match r {
                Ok(r) => (r.best_step, r.evaluations, r.best.all_finite().then(|| r.best.to_atoms())),
                Err(Error::Diverged { step }) => {
                    log::warn!("context {c} sample {k} diverged at step {step}");
                    (step, 0, None)
                }
                Err(e) => return Err(e.into()),
            };
            evaluations += evals;
            records.push(SampleRecord { context: c, sample: k, best_step, evaluations: evals, atoms });
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let file = SampleFile {
        data: dir.display().to_string(),
        steps: s.steps,
        metric_start: s.metric_start,
        score: s.score,
        samples: records,
    };
    run.write_json(SAMPLES_FILE, &file)?;
    let count = file.samples.len();
    run.write_json(
        "timing.json",
        &SampleTiming { samples: count, wall_clock_secs: secs, mean_secs_per_sample: secs / count as f64, evaluations },
    )?;
    info!("wrote {count} samples ({} steps each) in {secs:.2}s", s.steps);
    Ok(())
}
