mod common;

use approx::assert_relative_eq;
use attn_opt::binary_choice::{
    choice_accuracy, solve_stopping_boundary, variance_dominates, BinaryChoiceProblem, DpGrid, StoppingSolution,
};
use attn_opt::gaussian::mat;
use attn_opt::Error;
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn bc(rows: &[&[f64]], alpha: [f64; 2], cost: f64) -> BinaryChoiceProblem {
    BinaryChoiceProblem::new(mat(rows), alpha, cost).unwrap()
}

/// Largest rise of `p(t)` beyond the change caused by moving the boundary
/// by one lattice cell.
pub fn worst_accuracy_rise(sol: &StoppingSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for n in 1..sol.accuracy.len() {
        let sd = sol.variance[n].sqrt();
        let z = sol.boundary[n] / sd;
        let cell = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() * sol.dy / sd;
        let rise = sol.accuracy[n] - sol.accuracy[n - 1];
        worst = worst.max(rise - cell.max(1e-3));
    }
    worst
}

#[test]
fn switch_time_golden() {
    assert_relative_eq!(bc(&[&[6.0, 2.0], &[2.0, 1.0]], [1.0, 1.0], 1.0).switch_time(), 2.5, epsilon = 1e-12);
    assert_relative_eq!(bc(&[&[6.0, 2.0], &[2.0, 1.0]], [1.0, 2.0], 1.0).switch_time(), 1.5, epsilon = 1e-12);
    assert_eq!(bc(&[&[3.0, 0.0], &[0.0, 3.0]], [1.0, 1.0], 1.0).switch_time(), 0.0);
    let b = bc(&[&[6.0, 2.0], &[2.0, 1.0]], [1.0, 2.0], 1.0);
    assert_relative_eq!(b.stage_path().unwrap().switch_times()[0], b.switch_time(), epsilon = 1e-12);
}

#[test]
fn variance_path_golden() {
    let b = bc(&[&[6.0, 2.0], &[2.0, 1.0]], [1.0, 1.0], 1.0);
    assert_relative_eq!(b.posterior_variance_path(0.0), 11.0, epsilon = 1e-12);
    let t = 2.5;
    assert_relative_eq!((11.0 + 2.0 * t) / (1.0 + 6.0 * t), 1.0, epsilon = 1e-12);
    assert_relative_eq!(b.posterior_variance_path(t), 1.0, epsilon = 1e-12);
    assert_relative_eq!(b.posterior_variance_path(t - 1e-13), 1.0, epsilon = 1e-10);
    let s2 = 1.7;
    let iid = bc(&[&[s2, 0.0], &[0.0, s2]], [1.0, 1.0], 1.0);
    for t in t_grid() {
        assert_relative_eq!(iid.posterior_variance_path(t), 2.0 * s2 / (1.0 + s2 * t / 2.0), max_relative = 1e-12);
    }
}

#[test]
fn variance_path_matches_core() {
    let mut r = rng(31);
    let mut n = 0;
    while n < 30 {
        let s = random_spd(&mut r, 2);
        let a = [r.random_range(0.3..2.0), r.random_range(0.3..2.0)];
        let Ok(b) = BinaryChoiceProblem::new(s, a, 1.0) else { continue };
        n += 1;
        let path = b.stage_path().unwrap();
        for t in t_grid() {
            let core = b.problem().posterior_variance(path.n_of_t(t).as_slice()).unwrap();
            assert!((core - b.posterior_variance_path(t)).abs() <= 1e-10 * (1.0 + core));
        }
    }
}

#[test]
fn branch_continuity_at_switch() {
    let mut r = rng(32);
    let mut n = 0;
    while n < 50 {
        let s = random_spd(&mut r, 2);
        let a = [r.random_range(0.3..2.0), r.random_range(0.3..2.0)];
        let Ok(b) = BinaryChoiceProblem::new(s, a, 1.0) else { continue };
        if b.switch_time() == 0.0 {
            continue;
        }
        n += 1;
        let (s11, s22, s12) = (b.problem().sigma()[(0, 0)], b.problem().sigma()[(1, 1)], b.problem().sigma()[(0, 1)]);
        let (a1, a2) = (b.problem().alpha()[0], b.problem().alpha()[1]);
        let det = s11 * s22 - s12 * s12;
        let t = b.switch_time();
        let first = (a1 * a1 * s11 + a2 * a2 * s22 + 2.0 * a1 * a2 * s12 + a2 * a2 * det * t) / (1.0 + s11 * t);
        let second = (a1 + a2).powi(2) * det / (s11 + s22 - 2.0 * s12 + det * t);
        assert!((first - second).abs() <= 1e-10 * first, "{first} vs {second}");
        let (_, d1) = b.hitting_time(b.v_star() * (1.0 - 1e-12)).unwrap();
        let (_, d2) = b.hitting_time(b.v_star() * (1.0 + 1e-12)).unwrap();
        assert!((d1 - d2).abs() <= 1e-8 * d1);
    }
}

#[test]
fn hitting_time_golden_and_round_trip() {
    let b = bc(&[&[6.0, 2.0], &[2.0, 1.0]], [1.0, 1.0], 1.0);
    assert_eq!(b.hitting_time(0.0).unwrap().0, 0.0);
    assert_relative_eq!(b.hitting_time(10.0).unwrap().0, 2.5, epsilon = 1e-12);
    assert!(matches!(b.hitting_time(11.0), Err(Error::Domain(_))));
    let mut r = rng(33);
    for _ in 0..500 {
        let v = r.random_range(0.0..11.0);
        let (t, dt) = b.hitting_time(v).unwrap();
        assert!((11.0 - b.posterior_variance_path(t) - v).abs() <= 1e-9);
        let h = 1e-6;
        let fd = (b.hitting_time((v + h).min(10.999999)).unwrap().0 - b.hitting_time((v - h).max(0.0)).unwrap().0)
            / ((v + h).min(10.999999) - (v - h).max(0.0));
        assert!((fd - dt).abs() <= 1e-4 * dt, "{fd} vs {dt}");
    }
}

#[test]
fn comparison_of_variance_paths() {
    let mut r = rng(34);
    let mut found = 0;
    for _ in 0..20000 {
        let Ok(hat) = BinaryChoiceProblem::new(random_spd(&mut r, 2), [1.0, r.random_range(0.5..1.5)], 1.0) else {
            continue;
        };
        let a = hat.problem().alpha();
        let raw = BinaryChoiceProblem::new(random_spd(&mut r, 2), [a[0], a[1]], 1.0);
        let Ok(raw) = raw else { continue };
        let scale = (hat.prior_variance() / raw.prior_variance()).sqrt();
        let Ok(tilde) = raw.rescaled(scale, 1.0) else { continue };
        if !variance_dominates(&tilde, &hat) {
            continue;
        }
        found += 1;
        for t in t_grid() {
            assert!(tilde.posterior_variance_path(t) <= hat.posterior_variance_path(t) + 1e-10);
        }
        if found >= 30 {
            break;
        }
    }
    assert!(found >= 30, "only {found} dominating pairs");
}

#[test]
fn relabelling_is_transparent() {
    let a = bc(&[&[6.0, 2.0], &[2.0, 1.0]], [1.0, 2.0], 0.5);
    let b = bc(&[&[1.0, 2.0], &[2.0, 6.0]], [2.0, 1.0], 0.5);
    assert!(b.swapped() && !a.swapped());
    assert_eq!(a.problem(), b.problem());
    assert!(BinaryChoiceProblem::new(mat(&[&[10.0, -3.0], &[-3.0, 1.0]]), [1.0, 4.0], 1.0).is_err());
}

#[test]
fn expensive_sampling_stops_at_once() {
    let b = bc(&[&[1.0, 0.0], &[0.0, 1.0]], [1.0, 1.0], 1e6);
    let sol = solve_stopping_boundary(&b, DpGrid::with_n_half(100)).unwrap();
    assert!(sol.boundary[0] <= sol.dy);
    assert!((choice_accuracy(&sol, 0.0).unwrap() - 0.5).abs() <= 0.05);
}

#[test]
fn cheap_sampling_needs_wider_grid() {
    let b = bc(&[&[1.0, 0.0], &[0.0, 1.0]], [1.0, 1.0], 1e-6);
    let grid = DpGrid { y_range: 0.5, ..DpGrid::with_n_half(50) };
    assert!(matches!(solve_stopping_boundary(&b, grid), Err(Error::GridTooCoarse(_))));
}

#[test]
fn accuracy_interpolation() {
    let b = bc(&[&[2.0, 0.3], &[0.3, 1.0]], [1.0, 1.0], 0.2);
    let sol = solve_stopping_boundary(&b, DpGrid::with_n_half(120)).unwrap();
    assert_eq!(choice_accuracy(&sol, sol.time_grid[3]).unwrap(), sol.accuracy[3]);
    assert!(choice_accuracy(&sol, sol.t_max + 1.0).is_err());
    assert!(sol.accuracy.iter().all(|&p| (0.5..=1.0).contains(&p)));
    assert!(sol.boundary.iter().all(|&k| k >= 0.0));
}

fn accuracy_family() -> Vec<BinaryChoiceProblem> {
    vec![
        bc(&[&[1.0, 0.0], &[0.0, 1.0]], [1.0, 1.0], 0.05),
        bc(&[&[2.0, 0.0], &[0.0, 2.0]], [1.0, 1.0], 0.2),
        bc(&[&[6.0, 0.0], &[0.0, 1.0]], [1.0, 1.0], 0.1),
        bc(&[&[6.0, 2.0], &[2.0, 1.0]], [1.0, 1.0], 0.1),
        bc(&[&[6.0, 2.0], &[2.0, 1.0]], [1.0, 2.0], 0.3),
        bc(&[&[3.0, -1.0], &[-1.0, 2.0]], [1.0, 1.0], 0.05),
        bc(&[&[1.0, 0.8], &[0.8, 1.0]], [1.0, 1.0], 0.02),
        bc(&[&[4.0, 1.0], &[1.0, 1.0]], [0.5, 1.5], 0.1),
        bc(&[&[2.0, -0.5], &[-0.5, 1.5]], [1.2, 0.8], 0.5),
        bc(&[&[5.0, 0.5], &[0.5, 0.5]], [1.0, 1.0], 0.01),
    ]
}

#[test]
fn accuracy_is_nonincreasing() {
    for b in accuracy_family() {
        let sol = solve_stopping_boundary(&b, DpGrid::default()).unwrap();
        let rise = worst_accuracy_rise(&sol);
        assert!(rise <= 0.0, "{:?}: rise {rise}", b.problem().sigma());
    }
}

#[test]
fn scaling_identity() {
    let b = bc(&[&[6.0, 2.0], &[2.0, 1.0]], [1.0, 1.0], 0.1);
    let base = DpGrid::with_n_half(200);
    for &lam in &[0.5, 0.8, 1.25] {
        let big = solve_stopping_boundary(&b.rescaled(lam, 0.1).unwrap(), base).unwrap();
        let small = solve_stopping_boundary(&b.rescaled(1.0, 0.1 * lam.powi(-3)).unwrap(), base).unwrap();
        assert!((big.boundary[0] - lam * small.boundary[0]).abs() <= 2.0 * big.dy, "λ = {lam}");
    }
}

#[test]
fn grid_halving_is_stable() {
    let b = bc(&[&[6.0, 2.0], &[2.0, 1.0]], [1.0, 1.0], 0.1);
    let coarse = solve_stopping_boundary(&b, DpGrid::with_n_half(200)).unwrap();
    let fine = solve_stopping_boundary(&b, DpGrid::with_n_half(400)).unwrap();
    let rel = (coarse.boundary[0] - fine.boundary[0]).abs() / fine.boundary[0];
    assert!(rel < 0.02, "{} vs {}", coarse.boundary[0], fine.boundary[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variance_path_decreases(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s: DMatrix<f64> = random_spd(&mut r, 2);
        let b = BinaryChoiceProblem::new(s, [r.random_range(0.3..2.0), r.random_range(0.3..2.0)], 1.0);
        prop_assume!(b.is_ok());
        let b = b.unwrap();
        let mut prev = b.prior_variance();
        for t in t_grid() {
            let v = b.posterior_variance_path(t);
            prop_assert!(v < prev);
            prev = v;
        }
    }
}
