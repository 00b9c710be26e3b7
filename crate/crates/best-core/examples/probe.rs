//! Ad-hoc experiment probe: prints the loss-curve and accuracy-sweep numbers
//! at default scale so hyperparameters can be tuned quickly.

use std::time::Instant;

use best_core::scenario::{
    reproduce_accuracy_sweep, reproduce_loss_curves, ExperimentConfig, ALL_SCHEMES,
};

fn main() {
    let mut base = ExperimentConfig::default();
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("fig5");
    if let Some(seed) = args.get(2) {
        base.seed = seed.parse().unwrap();
    }
    if let Some(iters) = args.get(3) {
        base.train.iterations = iters.parse().unwrap();
    }
    if let Some(batch) = args.get(4) {
        base.train.batch = batch.parse().unwrap();
    }
    if let Some(lr) = args.get(5) {
        base.train.lr = lr.parse().unwrap();
    }
    if let Some(dropout) = args.get(6) {
        base.dropout = dropout.parse().unwrap();
    }

    match mode {
        "fig5" => {
            base.malicious_count = 50;
            base.train.iterations = base.train.iterations.max(50);
            let t0 = Instant::now();
            let curves = reproduce_loss_curves(&base).unwrap();
            for run in &curves.runs {
                let trace = &run.loss_trace;
                println!(
                    "{:<16} final_batch={:.4} final_train={:.4} acc={:.4} forged_in_train={} at10={:.4} at25={:.4} at50={:.4}",
                    run.scheme.name(),
                    trace.last().unwrap(),
                    run.final_train_loss,
                    run.accuracy,
                    run.forged_in_train,
                    trace.get(9).unwrap_or(&f64::NAN),
                    trace.get(24).unwrap_or(&f64::NAN),
                    trace.get(49).unwrap_or(&f64::NAN),
                );
            }
            println!("elapsed: {:.1}s", t0.elapsed().as_secs_f64());
        }
        "fig6" => {
            let t0 = Instant::now();
            let grid = reproduce_accuracy_sweep(&base, &[0, 25, 50, 75, 100]).unwrap();
            print!("{:>8}", "count");
            for s in ALL_SCHEMES {
                print!(" {:>16}", s.name());
            }
            println!();
            for (count, row) in grid.counts.iter().zip(&grid.rows) {
                print!("{count:>8}");
                for acc in row {
                    print!(" {acc:>16.4}");
                }
                println!();
            }
            println!("elapsed: {:.1}s", t0.elapsed().as_secs_f64());
        }
        other => panic!("unknown mode {other}"),
    }
}
