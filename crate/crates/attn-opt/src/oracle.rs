//! Direct minimization of `V(q)` over `{q ≥ floor, Σqᵢ = t}`.
//!
//! Independent of the stage recursion: it knows nothing about supports or
//! switch times and only uses `V` and its derivatives.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{AttentionVector, Problem};

pub const PG_TOL: f64 = 1e-10;
pub const KKT_TOL: f64 = 1e-8;
/// Coordinates closer than this to their lower bound are treated as active.
const ACTIVE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub t: f64,
    pub q_star: Vec<f64>,
    pub value: f64,
    pub kkt_residual: f64,
    pub pg_norm: f64,
    pub iterations: usize,
}

impl OracleResult {
    pub fn attention(&self) -> AttentionVector {
        AttentionVector::new(self.q_star.clone()).expect("oracle output is feasible")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub max_gradient_iters: usize,
    pub max_newton_iters: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { max_gradient_iters: 400, max_newton_iters: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub source: usize,
    pub t: f64,
    pub t_next: f64,
    pub drop: f64,
}

/// Euclidean projection onto `{r ≥ 0, Σrᵢ = s}`.
pub fn project_simplex(v: &[f64], s: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cum += ui;
        let th = (cum - s) / (i as f64 + 1.0);
        if ui - th > 0.0 {
            theta = th;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Objective evaluated in shifted coordinates `q = floor + r`.
struct Shifted<'a> {
    p: &'a Problem,
    floor: &'a [f64],
}

impl Shifted<'_> {
    fn q(&self, r: &[f64]) -> Vec<f64> {
        self.floor.iter().zip(r).map(|(f, x)| f + x).collect()
    }

    fn value(&self, r: &[f64]) -> Result<f64> {
        self.p.posterior_variance(&self.q(r))
    }

    fn value_grad(&self, r: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.p.variance_and_gamma(&self.q(r))?;
        Ok((v, g.iter().map(|x| -x * x).collect()))
    }

    /// Spread of `γᵢ²` over `sup`; zero exactly at a face optimum.
    fn face_gap(&self, r: &[f64], sup: &[usize]) -> Result<f64> {
        let (_, g) = self.value_grad(r)?;
        let level = sup.iter().map(|&i| g[i]).sum::<f64>() / sup.len() as f64;
        Ok(sup.iter().map(|&i| (g[i] - level).abs()).fold(0.0_f64, f64::max))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pg_norm(r: &[f64], g: &[f64], s: f64) -> f64 {
    let step: Vec<f64> = r.iter().zip(g).map(|(x, gi)| x - gi).collect();
    let pr = project_simplex(&step, s);
    r.iter().zip(&pr).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Relative KKT residual: `γᵢ²` equal on the support, no larger off it.
pub fn kkt_residual(p: &Problem, q: &[f64], floor: &[f64]) -> Result<f64> {
    let g = p.gamma(q)?;
    let g2: Vec<f64> = g.iter().map(|x| x * x).collect();
    let scale = g2.iter().cloned().fold(0.0_f64, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let active: Vec<usize> = (0..q.len()).filter(|&i| q[i] - floor[i] > ACTIVE_TOL * (1.0 + q[i])).collect();
    if active.is_empty() {
        return Ok(0.0);
    }
    let level = active.iter().map(|&i| g2[i]).sum::<f64>() / active.len() as f64;
    let mut res = 0.0_f64;
    for i in 0..q.len() {
        let dev = if active.contains(&i) { (g2[i] - level).abs() } else { (g2[i] - level).max(0.0) };
        res = res.max(dev);
    }
    Ok(res / scale)
}

/// `n(t)`: the unique minimizer of `V` on the budget simplex.
pub fn t_optimal(p: &Problem, t: f64) -> Result<OracleResult> {
    constrained_t_optimal(p, t, &vec![0.0; p.dim()])
}

/// Minimizer of `V` subject to `q ≥ floor` and `Σqᵢ = t`.
pub fn constrained_t_optimal(p: &Problem, t: f64, floor: &[f64]) -> Result<OracleResult> {
    constrained_t_optimal_from(p, t, floor, None, OracleOptions::default())
}

/// As [`constrained_t_optimal`] with an explicit starting point.
pub fn constrained_t_optimal_from(
    p: &Problem,
    t: f64,
    floor: &[f64],
    start: Option<&[f64]>,
    opts: OracleOptions,
) -> Result<OracleResult> {
    let k = p.dim();
    if floor.len() != k {
        return Err(Error::WrongDimension("floor length".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("budget must be positive, got {t}")));
    }
    if floor.iter().any(|&f| f < 0.0 || !f.is_finite()) {
        return Err(Error::Invalid("floor must be non-negative".into()));
    }
    let s = t - floor.iter().sum::<f64>();
    if s < -1e-12 * (1.0 + t) {
        return Err(Error::InfeasibleFloor);
    }
    let f = Shifted { p, floor };
    if s <= 0.0 {
        let q = floor.to_vec();
        return Ok(OracleResult {
            t,
            value: p.posterior_variance(&q)?,
            kkt_residual: 0.0,
            pg_norm: 0.0,
            iterations: 0,
            q_star: q,
        });
    }

    let mut r = match start {
        Some(x) => {
            let shifted: Vec<f64> = x.iter().zip(floor).map(|(a, b)| a - b).collect();
            project_simplex(&shifted, s)
        }
        None => vec![s / k as f64; k],
    };

    // Projected gradient with backtracking until the support settles.
    let (mut v, mut g) = f.value_grad(&r)?;
    let mut eta = s / g.iter().map(|x| x.abs()).fold(f64::MIN_POSITIVE, f64::max);
    let mut iters = 0;
    let mut pg = pg_norm(&r, &g, s);
    while iters < opts.max_gradient_iters && pg > PG_TOL {
        iters += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = r.iter().zip(&g).map(|(x, gi)| x - eta * gi).collect();
            let rn = project_simplex(&trial, s);
            let d: Vec<f64> = rn.iter().zip(&r).map(|(a, b)| a - b).collect();
            let vn = f.value(&rn)?;
            if vn <= v + dot(&g, &d) + dot(&d, &d) / (2.0 * eta) {
                r = rn;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
        (v, g) = f.value_grad(&r)?;
        pg = pg_norm(&r, &g, s);
        eta *= 1.5;
        if pg < 1e-6 * (1.0 + v.abs()) {
            break;
        }
    }

    // Active-set Newton on the face spanned by the support.
    let mut active: Vec<bool> = r.iter().map(|&x| x > 0.0).collect();
    let mut stall = 0;
    for _ in 0..opts.max_newton_iters {
        iters += 1;
        let (vv, gg) = f.value_grad(&r)?;
        v = vv;
        g = gg;
        let sup: Vec<usize> = (0..k).filter(|&i| active[i]).collect();
        let level = sup.iter().map(|&i| g[i]).sum::<f64>() / sup.len() as f64;
        let face_gap = sup.iter().map(|&i| (g[i] - level).abs()).fold(0.0_f64, f64::max);
        let scale = g.iter().map(|x| x.abs()).fold(f64::MIN_POSITIVE, f64::max);
        let d = newton_direction(p, floor, &r, &g, &sup)?;
        let dmax = d.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if face_gap <= 1e-14 * scale || dmax <= 1e-13 * (1.0 + s) {
            // Face solved to rounding; release the most attractive inactive coordinate.
            let entering = (0..k)
                .filter(|&j| !active[j] && g[j] < level - 1e-12 * scale)
                .min_by(|&a, &b| g[a].partial_cmp(&g[b]).unwrap());
            match entering {
                Some(j) => {
                    active[j] = true;
                    continue;
                }
                None => break,
            }
        }
        let mut amax = 1.0_f64;
        let mut blocking = None;
        for &i in &sup {
            if d[i] < 0.0 {
                let a = -r[i] / d[i];
                if a < amax {
                    amax = a;
                    blocking = Some(i);
                }
            }
        }
        let mut a = amax;
        let slope = dot(&g, &d);
        let mut moved = false;
        for _ in 0..60 {
            let rn: Vec<f64> = r.iter().zip(&d).map(|(x, di)| (x + a * di).max(0.0)).collect();
            let vn = f.value(&rn)?;
            if vn <= v + 1e-4 * a * slope || (vn <= v + 1e-13 * v.abs() && f.face_gap(&rn, &sup)? < 0.5 * face_gap) {
                if a == amax {
                    if let Some(i) = blocking {
                        active[i] = false;
                    }
                }
                r = renormalize(rn, &active, s);
                moved = true;
                break;
            }
            a *= 0.5;
        }
        if !moved {
            stall += 1;
            if stall > 2 {
                break;
            }
        }
    }

    let q = f.q(&r);
    let (v, g) = f.value_grad(&r)?;
    let pg = pg_norm(&r, &g, s);
    let kkt = kkt_residual(p, &q, floor)?;
    if kkt > KKT_TOL && pg > PG_TOL {
        return Err(Error::NoConvergence(format!("kkt residual {kkt:e}, projected gradient {pg:e}")));
    }
    Ok(OracleResult { t, q_star: q, value: v, kkt_residual: kkt, pg_norm: pg, iterations: iters })
}

/// Zero inactive coordinates and restore the budget exactly.
fn renormalize(mut r: Vec<f64>, active: &[bool], s: f64) -> Vec<f64> {
    for (x, &a) in r.iter_mut().zip(active) {
        if !a {
            *x = 0.0;
        }
    }
    let total: f64 = r.iter().sum();
    if total > 0.0 {
        let excess = total - s;
        let n = active.iter().filter(|&&a| a).count().max(1) as f64;
        for (x, &a) in r.iter_mut().zip(active) {
            if a {
                *x = (*x - excess / n).max(0.0);
            }
        }
    }
    r
}

/// Equality-constrained Newton step on the coordinates in `sup`.
fn newton_direction(p: &Problem, floor: &[f64], r: &[f64], g: &[f64], sup: &[usize]) -> Result<Vec<f64>> {
    let k = p.dim();
    let q: Vec<f64> = floor.iter().zip(r).map(|(a, b)| a + b).collect();
    let (_, h) = p.grad_hessian(&q)?;
    let m = sup.len();
    let mut kkt = DMatrix::zeros(m + 1, m + 1);
    let mut rhs = DVector::zeros(m + 1);
    let reg = 1e-14 * (0..k).map(|i| h[(i, i)].abs()).fold(f64::MIN_POSITIVE, f64::max);
    for (a, &i) in sup.iter().enumerate() {
        for (b, &j) in sup.iter().enumerate() {
            kkt[(a, b)] = h[(i, j)];
        }
        kkt[(a, a)] += reg;
        kkt[(a, m)] = 1.0;
        kkt[(m, a)] = 1.0;
        rhs[a] = -g[i];
    }
    let sol = kkt.lu().solve(&rhs).ok_or_else(|| Error::NoConvergence("singular Newton system".into()))?;
    let mut d = vec![0.0; k];
    for (a, &i) in sup.iter().enumerate() {
        d[i] = sol[a];
    }
    Ok(d)
}

/// Exact active-set enumeration: solve the equal-`γ²` conditions on every
/// support and keep the best candidate that also satisfies them off-support.
pub fn t_optimal_enumerate(p: &Problem, t: f64, floor: &[f64]) -> Result<OracleResult> {
    let k = p.dim();
    if k > 12 {
        return Err(Error::Invalid("enumeration limited to K ≤ 12".into()));
    }
    let s = t - floor.iter().sum::<f64>();
    if s < -1e-12 * (1.0 + t) {
        return Err(Error::InfeasibleFloor);
    }
    let f = Shifted { p, floor };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << k) {
        let sup: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let Some(r) = face_minimizer(p, floor, s, &sup)? else { continue };
        let q = f.q(&r);
        if kkt_residual(p, &q, floor)? > 1e-7 {
            continue;
        }
        let v = f.value(&r)?;
        if best.as_ref().map_or(true, |(bv, _)| v < *bv) {
            best = Some((v, r));
        }
    }
    let (value, r) = best.ok_or_else(|| Error::NoConvergence("no support satisfies the optimality conditions".into()))?;
    let q = f.q(&r);
    let (_, g) = f.value_grad(&r)?;
    Ok(OracleResult {
        t,
        kkt_residual: kkt_residual(p, &q, floor)?,
        pg_norm: pg_norm(&r, &g, s),
        q_star: q,
        value,
        iterations: 1 << k,
    })
}

/// Minimizer of `V` on the affine face `{Σ_{i∈sup} rᵢ = s, rⱼ = 0 off sup}`,
/// returned only when it lies strictly inside the non-negative orthant.
/// Iterates may leave the orthant as long as the information matrix stays
/// positive definite, so the search never stalls on a boundary.
fn face_minimizer(p: &Problem, floor: &[f64], s: f64, sup: &[usize]) -> Result<Option<Vec<f64>>> {
    let k = p.dim();
    let f = Shifted { p, floor };
    let mut r = vec![0.0; k];
    for &i in sup {
        r[i] = s / sup.len() as f64;
    }
    if sup.len() == 1 {
        return Ok(Some(r));
    }
    let value = |x: &[f64]| f.value(x).unwrap_or(f64::INFINITY);
    let gap = |x: &[f64]| f.face_gap(x, sup).unwrap_or(f64::INFINITY);
    let on_face = |x: &[f64]| {
        let sub: Vec<f64> = sup.iter().map(|&i| x[i]).collect();
        let pr = project_simplex(&sub, s);
        let mut out = vec![0.0; k];
        for (&i, v) in sup.iter().zip(pr) {
            out[i] = v;
        }
        out
    };
    let mut converged = false;
    let mut h: f64 = 1.0;
    for _ in 0..5000 {
        let (v, g) = f.value_grad(&r)?;
        let level = sup.iter().map(|&i| g[i]).sum::<f64>() / sup.len() as f64;
        let scale = g.iter().map(|x| x.abs()).fold(f64::MIN_POSITIVE, f64::max);
        let gap0 = sup.iter().map(|&i| (g[i] - level).abs()).fold(0.0_f64, f64::max);
        let interior = sup.iter().all(|&i| r[i] > 0.0);
        if interior && gap0 <= 1e-13 * scale {
            converged = true;
            break;
        }
        // Newton on the affine face, kept only while it stays feasible.
        let d = newton_direction(p, floor, &r, &g, sup)?;
        if interior && d.iter().fold(0.0_f64, |m, x| m.max(x.abs())) <= 1e-12 * (1.0 + s) {
            converged = true;
            break;
        }
        if sup.iter().all(|&i| r[i] + d[i] > 0.0) {
            let slope = dot(&g, &d);
            let mut a = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let rn: Vec<f64> = r.iter().zip(&d).map(|(x, di)| x + a * di).collect();
                let vn = value(&rn);
                if vn <= v + 1e-4 * a * slope || (vn <= v + 1e-13 * v.abs() && gap(&rn) < 0.5 * gap0) {
                    r = rn;
                    moved = true;
                    break;
                }
                a *= 0.5;
            }
            if moved {
                continue;
            }
        }
        // Projected gradient on the face otherwise.
        h = (4.0 * h).min(1e6);
        let mut moved = false;
        for _ in 0..80 {
            let step: Vec<f64> = r.iter().zip(&g).map(|(x, gi)| x - h * gi).collect();
            let rn = on_face(&step);
            let delta: Vec<f64> = rn.iter().zip(&r).map(|(a, b)| a - b).collect();
            if delta.iter().all(|x| x.abs() <= 1e-15 * (1.0 + s)) {
                break;
            }
            if value(&rn) <= v + 1e-4 * dot(&g, &delta) {
                r = rn;
                moved = true;
                break;
            }
            h *= 0.5;
        }
        if !moved {
            converged = interior && gap0 <= 1e-9 * scale;
            break;
        }
    }
    let interior = sup.iter().all(|&i| r[i] > 0.0);
    Ok((converged && interior).then_some(r))
}

/// Coordinate decreases of `n(t)` between consecutive grid points.
pub fn monotonicity_scan(p: &Problem, grid: &[f64]) -> Result<Vec<Violation>> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("grid must be strictly increasing".into()));
    }
    let mut out = Vec::new();
    let mut prev: Option<OracleResult> = None;
    for &t in grid {
        let cur = t_optimal(p, t)?;
        if let Some(pr) = &prev {
            for i in 0..p.dim() {
                let drop = pr.q_star[i] - cur.q_star[i];
                if drop > 1e-7 {
                    out.push(Violation { source: i, t: pr.t, t_next: t, drop });
                }
            }
        }
        prev = Some(cur);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_simplex() {
        let r = project_simplex(&[0.3, -1.0, 2.0, 0.1], 1.5);
        assert!((r.iter().sum::<f64>() - 1.5).abs() < 1e-12);
        assert!(r.iter().all(|&x| x >= 0.0));
        assert_eq!(project_simplex(&[0.5, 0.5], 1.0), vec![0.5, 0.5]);
    }
}
