//! Calibration run behind the benchmark acceptance thresholds.
//!
//! Runs the synthetic benchmark once per constrained metric and prints the
//! aggregates the acceptance tests quote (success fractions against their
//! floors, mean ratios, mean accuracy), so the frozen thresholds can be
//! re-derived from a committed artifact:
//!
//! ```text
//! cargo run --release -p denfair --example calibrate > calibration/benchmark.json
//! ```

use denfair::{run_experiment, ExperimentConfig, Method, MetricKind, RepRow, Stat};

/// Fraction of repetitions whose true-attribute ratio cleared the floor,
/// over all repetitions (failed or undefined runs count as misses).
fn success_fraction(rows: &[&RepRow], repetitions: usize, floor: f64) -> f64 {
    let hits = rows
        .iter()
        .filter(|r| r.omega_true.is_some_and(|v| v >= floor))
        .count();
    hits as f64 / repetitions as f64
}

fn stat_json(stat: &Option<Stat>) -> serde_json::Value {
    match stat {
        Some(s) => serde_json::json!({ "mean": s.mean, "stderr": s.stderr }),
        None => serde_json::Value::Null,
    }
}

fn main() -> denfair::Result<()> {
    let cases = [
        (MetricKind::StatisticalRate, 0.8, 0.65),
        (MetricKind::FalsePositiveRate, 0.8, 0.6),
        (MetricKind::FalseDiscoveryRate, 0.8, 0.6),
    ];
    let mut out = Vec::new();
    for (metric, tau, floor) in cases {
        let config = ExperimentConfig::benchmark(metric, vec![tau]);
        let report = run_experiment(&config)?;
        let mut methods = Vec::new();
        for cell in &report.cells {
            let rows: Vec<&RepRow> = report
                .rows
                .iter()
                .filter(|r| r.method == cell.method && r.metric == cell.metric)
                .collect();
            methods.push(serde_json::json!({
                "method": match cell.method {
                    Method::Unconstrained => "unconstrained",
                    Method::Naive => "naive",
                    Method::Denoised => "denoised",
                    Method::Randomized => "randomized",
                },
                "tau": cell.tau,
                "accuracy": stat_json(&cell.accuracy),
                "omega_noisy": stat_json(&cell.omega_noisy),
                "omega_true": stat_json(&cell.omega_true),
                "fraction_at_floor": success_fraction(&rows, config.repetitions, floor),
                "infeasible": cell.infeasible,
                "failed": cell.failed,
            }));
        }
        out.push(serde_json::json!({
            "metric": metric.name(),
            "tau": tau,
            "floor": floor,
            "repetitions": config.repetitions,
            "seed": config.seed,
            "methods": methods,
        }));
    }
    let value = serde_json::json!({ "benchmark": out });
    println!(
        "{}",
        serde_json::to_string_pretty(&value).expect("calibration JSON")
    );
    Ok(())
}
