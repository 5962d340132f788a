//! Running means and standard errors with an order-stable merge.

use serde::{Deserialize, Serialize};

/// A Monte Carlo estimate: sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: u64,
}

impl Estimate {
    /// Number of standard errors separating the estimate from `value`.
    /// Zero-width estimates report 0 on exact agreement and infinity otherwise.
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = (self.mean - value).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }

    pub fn within(&self, value: f64, n_se: f64) -> bool {
        self.z_score(value) <= n_se
    }

    pub fn interval(&self, n_se: f64) -> (f64, f64) {
        (self.mean - n_se * self.std_error, self.mean + n_se * self.std_error)
    }
}

/// Welford accumulator. Merging uses Chan's update so chunked, parallel
/// accumulation reduced in a fixed order is reproducible.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let nf = n as f64;
        self.mean += delta * other.n as f64 / nf;
        self.m2 += other.m2 + delta * delta * (self.n as f64) * (other.n as f64) / nf;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    pub fn estimate(&self) -> Estimate {
        let std_error = if self.n < 2 { f64::INFINITY } else { (self.variance() / self.n as f64).sqrt() };
        Estimate { mean: self.mean, std_error, n: self.n }
    }
}

/// Episodes per independently seeded chunk.
pub(crate) const CHUNK: u64 = 1024;

/// Split `0..n` into fixed-size chunks; the chunking depends only on `n`.
pub(crate) fn chunks(n: u64) -> Vec<std::ops::Range<u64>> {
    (0..n.div_ceil(CHUNK)).map(|c| c * CHUNK..((c + 1) * CHUNK).min(n)).collect()
}

/// Merge per-chunk accumulator rows in chunk order.
pub(crate) fn merge_rows(rows: Vec<Vec<Accumulator>>, width: usize) -> Vec<Accumulator> {
    let mut out = vec![Accumulator::new(); width];
    for row in rows {
        for (acc, part) in out.iter_mut().zip(row.iter()) {
            acc.merge(part);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut whole = Accumulator::new();
        xs.iter().for_each(|&x| whole.push(x));
        let mut merged = Accumulator::new();
        for part in xs.chunks(77) {
            let mut acc = Accumulator::new();
            part.iter().for_each(|&x| acc.push(x));
            merged.merge(&acc);
        }
        assert!((whole.mean() - merged.mean()).abs() < 1e-12);
        assert!((whole.variance() - merged.variance()).abs() < 1e-10);
    }

    #[test]
    fn two_samples_give_finite_error() {
        let mut acc = Accumulator::new();
        acc.push(1.0);
        acc.push(3.0);
        let e = acc.estimate();
        assert_eq!(e.mean, 2.0);
        assert!(e.std_error.is_finite());
        assert!((e.std_error - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chunking_covers_range() {
        let cs = chunks(2500);
        assert_eq!(cs.len(), 3);
        assert_eq!(cs[2], 2048..2500);
        assert!(chunks(0).is_empty());
    }
}
