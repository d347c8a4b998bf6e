//! Minimal library walkthrough: build the default configuration, run the
//! grouped frontend over a batch, and print the output shape. The same
//! code appears in the workspace README.

use eleaf::compression::BnMode;
use eleaf::config::run_pipeline;
use eleaf::pipeline::AudioBatch;
use eleaf::RunConfig;

fn main() -> eleaf::Result<()> {
    let config = RunConfig::default();
    let (mut params, plan) = config.build()?;
    let samples = vec![0.0f32; 16_000]; // 1 s of silence
    let audio = AudioBatch::from_mono(samples, config.sample_rate)?;
    // Train mode normalizes with this batch's statistics; Eval reuses the
    // running statistics and requires at least one prior training batch.
    let features = run_pipeline(&audio, &config, &mut params, &plan, BnMode::Train)?;
    println!(
        "{} channel(s) x {} bands x {} frames",
        features.channels, features.bands, features.frames
    );
    Ok(())
}
