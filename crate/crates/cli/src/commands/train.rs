use std::path::PathBuf;

use clap::Args;
use log::info;
use serde::Serialize;

use cmhop_core::consistency::{EmaPair, LossTerms, Trainer};
use cmhop_core::io::{save_checkpoint, Checkpoint};
use cmhop_core::rng::substream;
use cmhop_core::Denoiser;

use super::{data_dir, Dataset, CHECKPOINT_FILE};
use crate::rundir::RunDir;
use crate::Common;

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory of complex files.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Optimiser updates.
    #[arg(long)]
    pub iterations: Option<u64>,
}

pub const LOSS_HEADER: &str = "step,loss,coord_loss,feature_loss,grad_norm,eval_loss,eval_coord_loss,eval_feature_loss";

#[derive(Serialize)]
struct TrainSummary {
    examples: usize,
    steps: u64,
    eval_draws: usize,
    initial_eval_loss: f64,
    final_eval_loss: f64,
    loss_ratio: f64,
    skipped_updates: u64,
}

fn eval_columns(l: &LossTerms) -> String {
    format!("{},{},{}", l.total, l.coord, l.feature)
}

pub fn run(args: TrainArgs) -> anyhow::Result<()> {
    let mut config = args.common.load()?;
    if let Some(n) = args.iterations {
        config.train.iterations = n;
    }
    config.validate()?;
    let dir = data_dir(args.data.as_deref(), &config);
    let data = Dataset::load(&dir)?;
    let run = RunDir::create(&config, "train", args.common.run.as_deref(), &[dir.as_path()])?;

    let net = Denoiser::new(config.model.clone())?;
    let examples = data.training_examples(&net, data.len())?;
    let params = net.init_params(&mut substream(config.seed, "init"));
    let mut trainer = Trainer::new(net, EmaPair::new(params), config.schedule, config.train.trainer, config.seed)?;
    let draws = trainer.evaluation_draws(&examples, config.train.eval_draws, config.seed)?;

    let initial = trainer.evaluate(&examples, &draws)?;
    let mut rows = vec![format!("0,,,,,{}", eval_columns(&initial))];
    let mut last = initial;
    let mut skipped = 0;
    info!("training on {} complexes for {} steps; initial eval loss {:.5}", examples.len(), config.train.iterations, initial.total);
    for k in 1..=config.train.iterations {
        let m = trainer.train_step(&examples)?;
        skipped += u64::from(!m.applied);
        let eval = if k % config.train.log_every == 0 || k == config.train.iterations {
            last = trainer.evaluate(&examples, &draws)?;
            info!("step {k}: train loss {:.5}, eval loss {:.5}", m.loss.total, last.total);
            eval_columns(&last)
        } else {
            ",,".to_string()
        };
        rows.push(format!("{k},{},{},{},{},{eval}", m.loss.total, m.loss.coord, m.loss.feature, m.grad_norm));
    }
    run.write_csv("loss.csv", LOSS_HEADER, &rows)?;
    run.write_json(
        "summary.json",
        &TrainSummary {
            examples: examples.len(),
            steps: trainer.step_count(),
            eval_draws: draws.len(),
            initial_eval_loss: initial.total,
            final_eval_loss: last.total,
            loss_ratio: last.total / initial.total,
            skipped_updates: skipped,
        },
    )?;
    let ckpt = Checkpoint {
        model: config.model.clone(),
        schedule: config.schedule,
        step: trainer.step_count(),
        params: trainer.pair.clone(),
    };
    save_checkpoint(&run.file(CHECKPOINT_FILE), &ckpt)?;
    info!("final eval loss {:.5} ({:.3} of initial)", last.total, last.total / initial.total);
    Ok(())
}
