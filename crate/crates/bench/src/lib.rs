//! Shared fixtures for the benchmarks.

use cmhop_core::consistency::TrainingExample;
use cmhop_core::geometry::{build_context, synthesize_complex, SynthParams};
use cmhop_core::model::{Denoiser, DenoiserConfig};
use cmhop_core::rng::substream;
use cmhop_core::Params;

pub struct Fixture {
    pub net: Denoiser,
    pub params: Params,
    pub examples: Vec<TrainingExample>,
}

/// Default-size network with freshly initialised parameters and `count`
/// synthetic complexes.
pub fn fixture(count: usize) -> Fixture {
    let net = Denoiser::new(DenoiserConfig::default()).expect("default config is valid");
    let params = net.init_params(&mut substream(0, "init"));
    let examples = (0..count as u64)
        .map(|seed| {
            let complex = synthesize_complex(seed, &SynthParams::default()).expect("synthesis succeeds");
            let (ctx, clean) = build_context(&complex).expect("context builds");
            TrainingExample { context: net.prepare(ctx).expect("context prepares"), clean }
        })
        .collect();
    Fixture { net, params, examples }
}
