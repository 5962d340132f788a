//! Choose query points from a candidate set, exhaustively and by local
//! search, starting from a scenario file.

use std::path::Path;

use esw::optimizer::{solve_candidates, SearchStrategy};
use esw::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/line_candidates.toml");
    let scenario = Scenario::load(&path)?;

    let exact = solve_candidates(&scenario.problem, SearchStrategy::Exhaustive)?;
    let heuristic = solve_candidates(&scenario.problem, SearchStrategy::LocalSearch { restarts: 4, seed: 1 })?;

    for (name, plan) in [("exhaustive", &exact), ("local search", &heuristic)] {
        println!("{name}: objective {:.6}", plan.objective);
        for a in &plan.assignments {
            println!("  {:>7} at x = {:.2}, effort {:.4}", a.worker_id, a.point.coords()[0], a.effort);
        }
    }
    println!("local-search trace: {:?}", heuristic.search_trace);
    Ok(())
}
