//! Ground truth, report noise, and the seeded random streams behind every
//! Monte Carlo routine.
//!
//! Only the simulation side of the crate touches these types. Contract
//! synthesis and verification never see a [`GroundTruth`].

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::estimator::{FeatureMap, Point};

/// The unknown function, given by coefficients in the estimator's feature
/// basis so that it lies in the hypothesis class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub coefficients: Vec<f64>,
}

impl GroundTruth {
    pub fn new(coefficients: Vec<f64>) -> Self {
        Self { coefficients }
    }

    pub fn eval(&self, map: &FeatureMap, x: &Point) -> f64 {
        let phi = map.feature_vector(x).expect("ground truth evaluated on a point of the wrong dimension");
        assert_eq!(phi.len(), self.coefficients.len(), "ground truth dimension does not match the feature map");
        phi.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }
}

/// Mean-zero report noise family. Every family is scaled to unit variance
/// before multiplying by the worker's standard deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    #[default]
    Gaussian,
    CenteredUniform,
    SymmetricTwoPoint,
}

impl NoiseModel {
    pub const ALL: [NoiseModel; 3] = [NoiseModel::Gaussian, NoiseModel::CenteredUniform, NoiseModel::SymmetricTwoPoint];

    /// One unit-variance draw.
    pub fn standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            NoiseModel::Gaussian => rng.sample(StandardNormal),
            NoiseModel::CenteredUniform => {
                let u: f64 = rng.random();
                (2.0 * u - 1.0) * 3f64.sqrt()
            }
            NoiseModel::SymmetricTwoPoint => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, sigma: f64, rng: &mut R) -> f64 {
        sigma * self.standard(rng)
    }

    pub fn name(&self) -> &'static str {
        match self {
            NoiseModel::Gaussian => "gaussian",
            NoiseModel::CenteredUniform => "centered-uniform",
            NoiseModel::SymmetricTwoPoint => "symmetric-two-point",
        }
    }
}

/// Random stream for `(seed, episode, slot)`.
///
/// Each episode owns a ChaCha stream; each consumer inside the episode (test
/// point draw, one noise draw per worker, random efforts) starts at its own
/// word offset. Draws therefore never depend on evaluation order.
pub(crate) fn stream(seed: u64, episode: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode);
    rng.set_word_pos(u128::from(slot) << 32);
    rng
}

/// Stream slots used inside an episode.
pub(crate) mod slot {
    pub const TEST_POINT: u64 = 0;

    pub fn noise(worker: usize) -> u64 {
        1 + 2 * worker as u64
    }

    pub fn effort(worker: usize) -> u64 {
        2 + 2 * worker as u64
    }
}
