//! Runs BalanceMix and the plain BCE baseline on the standard synthetic
//! benchmark and prints final-epoch metrics.
//!
//! Usage: `cargo run --release --example benchmark -- [flip|mislabel|clean] [tau] [seeds]`

use std::time::Instant;

use balancemix::benchmark::{splits, train_config};
use balancemix::datagen::NoiseSpec;
use balancemix::trainer::{train, Mode};

fn main() -> balancemix::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = args.first().map(String::as_str).unwrap_or("flip");
    let tau: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.4);
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3);
    let noise = match kind {
        "flip" => NoiseSpec::flip(tau),
        "mislabel" => NoiseSpec::mislabel(tau),
        _ => NoiseSpec::none(),
    };
    for seed in 0..seeds {
        let (train_set, val_set) = splits::<f32>(seed, noise)?;
        for mode in [Mode::Balancemix, Mode::BceBaseline] {
            let start = Instant::now();
            let out = train(&train_config(seed, mode), &train_set, &val_set)?;
            let last = out.reports.last().expect("at least one epoch");
            let v = &last.validation;
            print!(
                "seed {seed} {mode:?}: all {:.4} many {:.4} medium {:.4} few {:.4} ({:.1}s)",
                v.map_all.unwrap_or(f64::NAN),
                v.map_many.unwrap_or(f64::NAN),
                v.map_medium.unwrap_or(f64::NAN),
                v.map_few.unwrap_or(f64::NAN),
                start.elapsed().as_secs_f64()
            );
            if let Some(d) = &last.diagnostics {
                print!(
                    " precision {:.4} relabel-acc {:?} tags C/R/U {}/{}/{}",
                    d.label_precision.unwrap_or(f64::NAN),
                    d.relabel_accuracy,
                    d.clean_selected,
                    d.relabeled,
                    d.ambiguous
                );
            }
            println!();
        }
    }
    Ok(())
}
