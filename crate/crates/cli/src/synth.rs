//! Synthetic datasets for trying the commands without external data.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use cate_jma::sim::{Dgp, ErrorDesign, SimError};
use cate_jma::Dataset;

pub const JOB_TRAINING_N: usize = 722;
pub const JOB_TRAINING_TREATED: usize = 297;

/// A stand-in for a job-training evaluation sample: 722 people, 297 treated.
///
/// Columns: `u1` square root of prior earnings, `u2` age, `u3` years of
/// education, `u4` married (0/1). The response is the change in square-root
/// earnings, with a training effect that grows with education and shrinks
/// with prior earnings.
pub fn job_training<R: Rng + ?Sized>(rng: &mut R) -> Dataset {
    let n = JOB_TRAINING_N;
    let mut t = vec![false; n];
    t[..JOB_TRAINING_TREATED].iter_mut().for_each(|v| *v = true);
    t.shuffle(rng);

    let age_dist = Normal::new(24.5f64, 6.5).expect("valid normal");
    let edu_dist = Normal::new(10.2f64, 1.8).expect("valid normal");
    let mut x = DMatrix::zeros(n, 4);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let age = age_dist.sample(rng).clamp(17.0, 55.0).round();
        let edu = edu_dist.sample(rng).clamp(3.0, 16.0).round();
        let married = if rng.random_bool(0.16) { 1.0 } else { 0.0 };
        let earns = if rng.random_bool(0.6) {
            0.0
        } else {
            (rng.random_range(0.0..1.0f64).powf(1.6) * 25_000.0).sqrt()
        };
        x[(i, 0)] = earns;
        x[(i, 1)] = age;
        x[(i, 2)] = edu;
        x[(i, 3)] = married;
        let z: f64 = rng.sample(StandardNormal);
        let base = 25.0 - 0.45 * earns + 0.8 * (age - 25.0) - 0.02 * (age - 25.0).powi(2) + 2.5 * (edu - 10.0) + 6.0 * married;
        let effect = 8.0 + 1.5 * (edu - 10.0) - 0.06 * earns;
        let sd = 18.0 + 0.25 * earns;
        y.push(base + if t[i] { effect } else { 0.0 } + sd * z);
    }
    Dataset::new(x, t, y).expect("both arms present and finite")
}

/// One Monte Carlo sample as a dataset.
pub fn example_sample<R: Rng + ?Sized>(
    n: usize,
    rho: f64,
    design: ErrorDesign,
    c: f64,
    rng: &mut R,
) -> Result<Dataset, SimError> {
    Ok(Dgp::new(rho, design, c)?.sample(n, rng)?.0)
}
