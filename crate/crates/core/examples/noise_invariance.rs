//! The closed-form error depends on the noise only through its variance.
//! Compare it with Monte Carlo under three noise laws.

use esw::estimator::{
    build_design, monte_carlo_mse, mse_g, sensitivity_h, EstimatorSpec, FeatureMap, McConfig, Point,
    TestPointDistribution,
};
use esw::noise::{GroundTruth, NoiseModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = EstimatorSpec::ordinary(FeatureMap::polynomial(2, 1));
    let points: Vec<Point> = [0.0, 0.2, 0.5, 0.7, 1.0].map(Point::scalar).to_vec();
    let dist = TestPointDistribution::uniform([0.1, 0.4, 0.9].map(Point::scalar).to_vec())?;
    let sigmas = [0.5, 1.0, 0.3, 0.8, 1.2];

    let bundle = build_design(&spec, &points, &dist)?;
    let g = mse_g(&spec, &bundle, &sigmas)?;
    let h = sensitivity_h(&spec, &bundle)?;
    println!("closed form {g:.5}; per-point sensitivities {h:.4?}");

    // The truth does not enter the closed form either.
    let truth = GroundTruth::new(vec![1.0, -3.0, 2.0]);
    for noise in NoiseModel::ALL {
        let est = monte_carlo_mse(&spec, &points, &dist, &sigmas, &truth, McConfig::new(200_000, 5, noise))?;
        println!("{:>20}: {:.5} +/- {:.5} (z = {:.2})", noise.name(), est.mean, est.std_error, est.z_score(g));
    }
    Ok(())
}
