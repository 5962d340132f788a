//! Trade error against a hard cap on total effort instead of an effort price.

use std::path::Path;

use esw::mechanism::EffortCurve;
use esw::optimizer::{budget_efforts, solve_budget, OptimizeError, SearchStrategy};
use esw::Scenario;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Two workers splitting a budget; the multiplier is the marginal error
    // reduction per unit of effort.
    let curves = [EffortCurve::power_decay(1.0, 0.5, 0.0, 4.0), EffortCurve::power_decay(2.0, 0.5, 0.0, 4.0)];
    for budget in [0.5, 2.0, 8.0, 20.0] {
        let sol = budget_efforts(&curves, &[0.25, 0.25], budget)?;
        println!("budget {budget:>5}: efforts {:.4?}, multiplier {:.5}", sol.efforts, sol.multiplier);
    }

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/line_budget.toml");
    let scenario = Scenario::load(&path)?;
    for budget in [0.05, 1.0, 3.0, 6.0] {
        match solve_budget(&scenario.problem, budget, SearchStrategy::Exhaustive) {
            Ok(plan) => println!(
                "scenario budget {budget}: mse {:.5}, spent {:.4}, efforts {:.3?}",
                plan.mse,
                plan.total_effort(),
                plan.efforts()
            ),
            Err(OptimizeError::InfeasibleBudget { minimal, .. }) => {
                println!("scenario budget {budget}: infeasible, needs at least {minimal}")
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
