//! Measures the dense-vs-grouped relative RMS across a corpus of synthetic
//! signals so `harness::EQUIV_TOLERANCE` is pinned to data instead of a guess.
//!
//! Run with:
//!
//! ```text
//! cargo run --release -p eleaf --example calibrate_tau
//! ```
//!
//! Prints one line per (signal, geometry) pair plus a summary with the
//! worst case at the default geometry and a suggested pinned tolerance
//! (worst case rounded up with ~2x headroom).

use std::f64::consts::PI;

use eleaf::harness::equivalence;
use eleaf::{Frontend, Head, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RATE: u32 = 16000;
const SECONDS: usize = 1;

fn noise(seed: u64, amplitude: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..RATE as usize * SECONDS)
        .map(|_| rng.gen_range(-amplitude..amplitude))
        .collect()
}

fn tone(freq: f64, amplitude: f64) -> Vec<f64> {
    (0..RATE as usize * SECONDS)
        .map(|t| amplitude * (2.0 * PI * freq * t as f64 / RATE as f64).sin())
        .collect()
}

fn chirp(f0: f64, f1: f64, amplitude: f64) -> Vec<f64> {
    let n = RATE as usize * SECONDS;
    (0..n)
        .map(|t| {
            let u = t as f64 / n as f64;
            let phase = 2.0 * PI * (f0 * u + 0.5 * (f1 - f0) * u * u) * n as f64 / RATE as f64;
            amplitude * phase.sin()
        })
        .collect()
}

fn am_tone(carrier: f64, mod_rate: f64, amplitude: f64) -> Vec<f64> {
    (0..RATE as usize * SECONDS)
        .map(|t| {
            let s = t as f64 / RATE as f64;
            let env = 0.5 * (1.0 + (2.0 * PI * mod_rate * s).sin());
            amplitude * env * (2.0 * PI * carrier * s).sin()
        })
        .collect()
}

fn mix(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn measure(name: &str, samples: Vec<f64>, size_factor: f64) -> f64 {
    let config = RunConfig {
        pipeline: Frontend::Eleaf,
        compression: Head::None,
        size_factor,
        ..RunConfig::default()
    };
    let (params, plan) = config.build().expect("default geometry builds");
    let audio = eleaf::pipeline::AudioBatch::from_mono(samples, RATE).expect("valid audio");
    let report = equivalence(&audio, &params.bank, &plan, 1.0).expect("non-degenerate input");
    println!(
        "  b={size_factor:<5} {name:<26} rel_rms={:<12.6e} max_abs={:.3e}",
        report.relative_rms, report.max_abs
    );
    report.relative_rms
}

fn main() {
    let corpus: Vec<(&str, Vec<f64>)> = vec![
        ("noise seed 0", noise(0, 0.5)),
        ("noise seed 1", noise(1, 0.5)),
        ("noise seed 2", noise(2, 0.5)),
        ("noise seed 3", noise(3, 0.5)),
        ("noise seed 4 quiet", noise(4, 0.01)),
        ("noise seed 5 loud", noise(5, 0.99)),
        ("tone 100 Hz", tone(100.0, 0.5)),
        ("tone 440 Hz", tone(440.0, 0.5)),
        ("tone 1 kHz", tone(1000.0, 0.5)),
        ("tone 3 kHz", tone(3000.0, 0.5)),
        ("tone 7 kHz", tone(7000.0, 0.5)),
        ("chirp 60-7800 Hz", chirp(60.0, 7800.0, 0.5)),
        ("am 800 Hz @ 4 Hz", am_tone(800.0, 4.0, 0.7)),
        ("tone+noise mix", mix(&tone(520.0, 0.4), &noise(6, 0.1))),
    ];

    println!("default geometry (40 filters, 4 groups, hop 160):");
    let mut worst_default = 0.0f64;
    let mut worst_name = "";
    for (name, samples) in &corpus {
        let rel = measure(name, samples.clone(), 4.75);
        if rel > worst_default {
            worst_default = rel;
            worst_name = name;
        }
    }

    println!("\nkernel size factor sweep (noise seed 0, tone 1 kHz):");
    for b in [2.0, 4.75, 6.0] {
        measure("noise seed 0", noise(0, 0.5), b);
        measure("tone 1 kHz", tone(1000.0, 0.5), b);
    }

    println!("\nworst case at default geometry: {worst_name} rel_rms={worst_default:.6e}");
    let suggested = (worst_default * 2.0 * 1000.0).ceil() / 1000.0;
    println!("suggested pinned tolerance (2x headroom, ceil to 1e-3): {suggested}");
}
