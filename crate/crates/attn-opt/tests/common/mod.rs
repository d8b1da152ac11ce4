#![allow(dead_code)]

use attn_opt::gaussian::mat;
use attn_opt::Problem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn problem(rows: &[&[f64]], alpha: &[f64]) -> Problem {
    Problem::new(mat(rows), DVector::from_column_slice(alpha), None).unwrap()
}

pub fn example1() -> Problem {
    problem(&[&[6.0, 0.0], &[0.0, 1.0]], &[1.0, 1.0])
}

pub fn example2() -> Problem {
    problem(&[&[6.0, 2.0], &[2.0, 1.0]], &[1.0, 1.0])
}

pub fn example3() -> Problem {
    problem(&[&[6.0, 2.0], &[2.0, 1.0]], &[1.0, 2.0])
}

pub fn k2_counterexample() -> Problem {
    problem(&[&[10.0, -3.0], &[-3.0, 1.0]], &[1.0, 4.0])
}

pub fn k3_counterexample() -> Problem {
    problem(&[&[19.0, 3.0, 0.0], &[3.0, 5.0, 3.0], &[0.0, 3.0, 2.0]], &[1.0, 1.0, 20.0])
}

pub fn manipulation_example() -> Problem {
    problem(&[&[3.0, -2.0, 0.0], &[-2.0, 3.0, 0.0], &[0.0, 0.0, 2.0]], &[1.0, 1.0, 1.0])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_alpha(rng: &mut impl Rng, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |_, _| rng.random_range(0.3..2.0))
}

/// Random SPD matrix `A A′ + εI` with entries of order one.
pub fn random_spd(rng: &mut impl Rng, k: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(k, k) * 0.2
}

fn from_precision(prec: DMatrix<f64>, alpha: DVector<f64>) -> Option<Problem> {
    let sigma = prec.cholesky()?.inverse();
    Problem::new(sigma, alpha, None).ok()
}

/// Prior whose precision matrix has non-positive off-diagonals.
pub fn random_substitutes(rng: &mut impl Rng, k: usize) -> Problem {
    loop {
        let mut m: DMatrix<f64> = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in (i + 1)..k {
                let x = if rng.random_bool(0.7) { -rng.random_range(0.0..1.0) } else { 0.0 };
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        for i in 0..k {
            let off: f64 = (0..k).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            m[(i, i)] = off * rng.random_range(0.6..1.6) + rng.random_range(0.05..1.0);
        }
        if let Some(p) = from_precision(m, random_alpha(rng, k)) {
            if attn_opt::assumptions::perpetual_substitutes(&p) {
                return p;
            }
        }
    }
}

/// Prior with non-positive covariances and `Σα ≥ 0`.
pub fn random_complements(rng: &mut impl Rng, k: usize) -> Problem {
    loop {
        let mut s: DMatrix<f64> = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in (i + 1)..k {
                let x = -rng.random_range(0.0..1.0);
                s[(i, j)] = x;
                s[(j, i)] = x;
            }
        }
        for i in 0..k {
            let off: f64 = (0..k).filter(|&j| j != i).map(|j| s[(i, j)].abs()).sum();
            s[(i, i)] = off * rng.random_range(0.8..2.5) + rng.random_range(0.05..1.0);
        }
        let alpha = random_alpha(rng, k);
        if let Ok(p) = Problem::new(s, alpha, None) {
            if attn_opt::assumptions::perpetual_complements(&p) {
                return p;
            }
        }
    }
}

/// Prior whose precision matrix is diagonally dominant with mixed signs.
pub fn random_dominant(rng: &mut impl Rng, k: usize) -> Problem {
    loop {
        let mut m: DMatrix<f64> = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in (i + 1)..k {
                let x = rng.random_range(-1.0..1.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        for i in 0..k {
            let off: f64 = (0..k).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
            m[(i, i)] = off * rng.random_range(1.0..1.4) + rng.random_range(0.0..0.5);
        }
        if let Some(p) = from_precision(m, random_alpha(rng, k)) {
            if attn_opt::assumptions::diagonal_dominance(&p) {
                return p;
            }
        }
    }
}

pub fn random_problem(rng: &mut impl Rng, k: usize) -> Problem {
    Problem::new(random_spd(rng, k), random_alpha(rng, k), None).unwrap()
}

pub fn random_attention(rng: &mut impl Rng, k: usize, scale: f64) -> Vec<f64> {
    (0..k).map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..scale) }).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn t_grid() -> Vec<f64> {
    (1..=100).map(|i| i as f64 / 10.0).collect()
}
