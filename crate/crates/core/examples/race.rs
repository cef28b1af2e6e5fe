//! Races the three optimizers on a benchmark objective and prints the summary.
//!
//! Usage: race [plateau_grid|deceptive_flat|quadratic_mixed] [dims] [levels] [flat_fraction] [steps]

use kmtpe_core::driver::{run_race, Optimizer};
use kmtpe_core::evalsim::{BenchKind, BenchObjective};
use kmtpe_core::tpe::TpeParams;

fn main() -> kmtpe_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let kind = match args.get(1).map(String::as_str) {
        Some("deceptive_flat") => BenchKind::DeceptiveFlat,
        Some("quadratic_mixed") => BenchKind::QuadraticMixed,
        _ => BenchKind::PlateauGrid,
    };
    let mut objective = BenchObjective {
        kind,
        ..BenchObjective::default()
    };
    if let Some(d) = args.get(2) {
        objective.dims = d.parse().expect("dims");
    }
    if let Some(l) = args.get(3) {
        objective.levels = l.parse().expect("levels");
    }
    if let Some(f) = args.get(4) {
        objective.flat_fraction = f.parse().expect("flat_fraction");
    }
    if let Some(s) = args.get(5) {
        objective.steps = s.parse().expect("steps");
    }
    let seeds: Vec<u64> = (0..40).collect();
    let report = run_race(&objective, &Optimizer::ALL, &seeds, &TpeParams::default())?;
    for s in &report.summaries {
        println!(
            "{:<12} reached {:>2}/{} median evals {:>6.1} median final {:.4} mean final {:.4}",
            s.optimizer.name(),
            s.reached,
            s.runs,
            s.median_evaluations_to_target,
            s.median_final_best,
            s.mean_final_best
        );
    }
    println!(
        "kmeans/classic ratio {:?}, kmeans win fraction {:?}",
        report.kmeans_to_classic_ratio, report.kmeans_win_fraction
    );
    Ok(())
}
