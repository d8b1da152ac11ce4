mod common;

use approx::assert_relative_eq;
use attn_opt::gaussian::mat;
use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

#[test]
fn posterior_covariance_golden() {
    let c = example2().posterior_covariance(&[2.5, 0.0]).unwrap();
    assert_relative_eq!(c, mat(&[&[3.0 / 8.0, 1.0 / 8.0], &[1.0 / 8.0, 3.0 / 8.0]]), epsilon = 1e-12);
    let p = k3_counterexample();
    assert_relative_eq!(p.posterior_covariance(&[0.0; 3]).unwrap(), p.sigma().clone(), epsilon = 1e-12);
}

#[test]
fn posterior_variance_golden() {
    let p = k2_counterexample();
    let closed = |q1: f64, q2: f64| (2.0 + 16.0 * q1 + q2) / ((1.0 + q1) * (10.0 + q2) - 9.0);
    assert_relative_eq!(p.posterior_variance(&[1.0, 0.0]).unwrap(), 18.0 / 11.0, epsilon = 1e-12);
    for &(a, b) in &[(0.0, 0.0), (0.3, 2.0), (5.0, 0.1), (1.5, 1.5)] {
        assert_relative_eq!(p.posterior_variance(&[a, b]).unwrap(), closed(a, b), max_relative = 1e-12);
    }
    assert_relative_eq!(example3().posterior_variance(&[1.5, 0.0]).unwrap(), 3.0, epsilon = 1e-12);
}

#[test]
fn gamma_golden() {
    let p = k3_counterexample();
    let g = p.gamma(&[1.0, 14.0, 0.0]).unwrap();
    assert_relative_eq!(g.as_slice(), &[-1.0, 1.0, 1.0][..], epsilon = 1e-10);
    let g = p.gamma(&[0.0, 15.0, 20.0]).unwrap();
    assert_relative_eq!(g.as_slice(), &[-0.5, 0.5, 0.5][..], epsilon = 1e-10);
    let g = example3().gamma(&[0.0, 0.0]).unwrap();
    assert_relative_eq!(g.as_slice(), &[10.0, 4.0][..], epsilon = 1e-12);
}

#[test]
fn gradient_golden_and_diagonal_hessian() {
    let (grad, _) = k3_counterexample().grad_hessian(&[1.0, 14.0, 0.0]).unwrap();
    assert_relative_eq!(grad.as_slice(), &[-1.0, -1.0, -1.0][..], epsilon = 1e-9);
    let p = problem(&[&[2.0, 0.0, 0.0], &[0.0, 3.0, 0.0], &[0.0, 0.0, 0.5]], &[1.0, 2.0, 0.7]);
    let (_, h) = p.grad_hessian(&[0.4, 1.1, 0.0]).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                assert_eq!(h[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn posterior_state_is_consistent() {
    let p = example3();
    let s = p.posterior_state(&[0.7, 0.2]).unwrap();
    assert_relative_eq!(s.gamma.clone(), &s.cov * p.alpha(), epsilon = 1e-12);
    assert_relative_eq!(s.state_variance, p.alpha().dot(&s.gamma), max_relative = 1e-12);
    let prior = p.prior_state();
    assert_eq!(prior.cov, p.sigma().clone());
}

fn fd_gradient(p: &attn_opt::Problem, q: &[f64], h: f64) -> Vec<f64> {
    (0..q.len())
        .map(|i| {
            let mut a = q.to_vec();
            let mut b = q.to_vec();
            a[i] += h;
            b[i] -= h;
            (p.posterior_variance(&a).unwrap() - p.posterior_variance(&b).unwrap()) / (2.0 * h)
        })
        .collect()
}

#[test]
fn derivatives_match_finite_differences() {
    let mut rng = rng(11);
    let h = 1e-5;
    for n in 0..100 {
        let k = 2 + n % 5;
        let p = random_problem(&mut rng, k);
        let q: Vec<f64> = (0..k).map(|_| rand::Rng::random_range(&mut rng, 0.05..3.0)).collect();
        let (grad, hess) = p.grad_hessian(&q).unwrap();
        let fd = fd_gradient(&p, &q, h);
        let scale = grad.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for i in 0..k {
            assert!((grad[i] - fd[i]).abs() <= 1e-4 * scale.max(1e-8), "gradient {i} on instance {n}");
        }
        let hscale = hess.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for j in 0..k {
            let mut a = q.clone();
            let mut b = q.clone();
            a[j] += h;
            b[j] -= h;
            let ga = p.grad_hessian(&a).unwrap().0;
            let gb = p.grad_hessian(&b).unwrap().0;
            for i in 0..k {
                let fdh = (ga[i] - gb[i]) / (2.0 * h);
                assert!((hess[(i, j)] - fdh).abs() <= 1e-4 * hscale.max(1e-8), "hessian ({i},{j}) on instance {n}");
            }
        }
        assert_relative_eq!(hess.clone(), hess.transpose(), epsilon = 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn two_forms_agree(seed in any::<u64>(), k in 2usize..=6) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, k);
        let q: Vec<f64> = (0..k).map(|_| rand::Rng::random_range(&mut r, 0.01..10.0)).collect();
        let info = p.posterior_covariance(&q).unwrap();
        let dual = p.posterior_covariance_dual(&q).unwrap();
        let scale = info.iter().map(|x| x.abs()).fold(0.0, f64::max);
        prop_assert!((info - dual).amax() <= 1e-9 * scale);
    }

    #[test]
    fn variance_is_convex(seed in any::<u64>(), k in 2usize..=6, lam in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, k);
        let a = random_attention(&mut r, k, 5.0);
        let b = random_attention(&mut r, k, 5.0);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lam * x + (1.0 - lam) * y).collect();
        let lhs = p.posterior_variance(&mid).unwrap();
        let rhs = lam * p.posterior_variance(&a).unwrap() + (1.0 - lam) * p.posterior_variance(&b).unwrap();
        prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn more_information_never_hurts(seed in any::<u64>(), k in 2usize..=6) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, k);
        let a = random_attention(&mut r, k, 5.0);
        let extra = random_attention(&mut r, k, 2.0);
        let b: Vec<f64> = a.iter().zip(&extra).map(|(x, y)| x + y).collect();
        prop_assert!(p.posterior_variance(&b).unwrap() <= p.posterior_variance(&a).unwrap() + 1e-12);
    }

    #[test]
    fn hessian_is_psd(seed in any::<u64>(), k in 2usize..=6) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, k);
        let q = random_attention(&mut r, k, 5.0);
        let (grad, h) = p.grad_hessian(&q).unwrap();
        prop_assert!(grad.iter().all(|&x| x <= 0.0));
        let eig = h.symmetric_eigenvalues();
        let scale = h.amax().max(1e-300);
        prop_assert!(eig.iter().all(|&e| e >= -1e-10 * scale));
    }

    #[test]
    fn zero_attention_returns_prior(seed in any::<u64>(), k in 2usize..=6) {
        let mut r = rng(seed);
        let p = random_problem(&mut r, k);
        let c = p.posterior_covariance(&vec![0.0; k]).unwrap();
        let diff: DMatrix<f64> = c - p.sigma();
        prop_assert!(diff.amax() <= 1e-9 * p.sigma().amax());
    }
}
