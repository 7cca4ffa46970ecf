//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the library's numerics for the
//! quantity being checked.

#![allow(dead_code)]

use mixdp_core::problems::{GlmProblem, Link};

/// 5-point Gauss-Legendre nodes and weights on [-1, 1].
const GL5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_47),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_08),
    (0.906_179_845_938_664, 0.236_926_885_056_189_08),
];

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Lower normal tail for x ≤ 0 as ∫₀^∞ φ(x − s) ds, composite Gauss-Legendre
/// on panels of width 1/8 out to s = 40.
fn lower_tail(x: f64) -> f64 {
    debug_assert!(x <= 0.0);
    let width = 0.125;
    let panels = 320;
    let mut total = 0.0;
    for k in 0..panels {
        let a = k as f64 * width;
        let mid = a + 0.5 * width;
        let mut panel = 0.0;
        for (node, weight) in GL5 {
            panel += weight * std_normal_pdf(x - (mid + 0.5 * width * node));
        }
        total += 0.5 * width * panel;
    }
    total
}

/// Φ(x) by quadrature.
pub fn phi_quad(x: f64) -> f64 {
    if x <= 0.0 {
        lower_tail(x)
    } else {
        1.0 - lower_tail(-x)
    }
}

/// δ(ε) of a μ-GDP mechanism using the quadrature Φ.
pub fn delta_quad(mu: f64, eps: f64) -> f64 {
    phi_quad(mu / 2.0 - eps / mu) - eps.exp() * phi_quad(-mu / 2.0 - eps / mu)
}

/// Largest T with δ(√T·Δ/σ, ε) ≤ δ_target, by scanning T = 1, 2, ...
pub fn scan_calibrate(eps: f64, delta: f64, sensitivity: f64, noise: f64) -> u64 {
    let mut t = 0u64;
    loop {
        let mu = ((t + 1) as f64).sqrt() * sensitivity / noise;
        if delta_quad(mu, eps) > delta {
            return t;
        }
        t += 1;
    }
}

/// Loss and residual of one example written out directly from the link
/// definitions.
fn example_residual(p: &GlmProblem, w: &[f64], i: usize) -> Vec<f64> {
    let x = p.x().row(i);
    let y = p.y()[i];
    let c = p.outputs();
    let z: Vec<f64> = (0..c)
        .map(|k| x.iter().enumerate().map(|(j, xj)| xj * w[j * c + k]).sum())
        .collect();
    match p.link() {
        Link::Logistic => vec![1.0 / (1.0 + (-z[0]).exp()) - y],
        Link::Squared => vec![z[0] - y],
        Link::Softmax { .. } => {
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            let mut r: Vec<f64> = e.iter().map(|v| v / s).collect();
            r[y as usize] -= 1.0;
            r
        }
    }
}

pub fn example_loss(p: &GlmProblem, w: &[f64], i: usize) -> f64 {
    let x = p.x().row(i);
    let y = p.y()[i];
    let c = p.outputs();
    let z: Vec<f64> = (0..c)
        .map(|k| x.iter().enumerate().map(|(j, xj)| xj * w[j * c + k]).sum())
        .collect();
    match p.link() {
        Link::Logistic => (1.0 + z[0].exp()).ln() - y * z[0],
        Link::Squared => 0.5 * (z[0] - y).powi(2),
        Link::Softmax { .. } => {
            let s: f64 = z.iter().map(|v| v.exp()).sum();
            s.ln() - z[y as usize]
        }
    }
}

pub fn example_gradient(p: &GlmProblem, w: &[f64], i: usize) -> Vec<f64> {
    let r = example_residual(p, w, i);
    let x = p.x().row(i);
    let c = p.outputs();
    let mut g = vec![0.0; p.dim()];
    for (j, xj) in x.iter().enumerate() {
        for (k, rk) in r.iter().enumerate() {
            g[j * c + k] = xj * rk;
        }
    }
    g
}

/// ∇[Σᵢ ℓᵢ(w) + λ/2‖w − w_ref‖²].
pub fn objective_gradient(p: &GlmProblem, lambda: f64, w_ref: &[f64], w: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = w.iter().zip(w_ref).map(|(a, b)| lambda * (a - b)).collect();
    for i in 0..p.n() {
        for (gk, ek) in g.iter_mut().zip(example_gradient(p, w, i)) {
            *gk += ek;
        }
    }
    g
}

pub fn objective_value(p: &GlmProblem, lambda: f64, w_ref: &[f64], w: &[f64]) -> f64 {
    let reg: f64 = w.iter().zip(w_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    (0..p.n()).map(|i| example_loss(p, w, i)).sum::<f64>() + 0.5 * lambda * reg
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn project(w: &mut [f64], radius: f64) {
    let n = l2(w);
    if n > radius {
        w.iter_mut().for_each(|v| *v *= radius / n);
    }
}

/// Plain projected GD; returns w_1, ..., w_{T+1}.
pub fn plain_pgd(
    p: &GlmProblem,
    lambda: f64,
    w_ref: &[f64],
    init: &[f64],
    radius: f64,
    steps: usize,
    eta: impl Fn(usize) -> f64,
) -> Vec<Vec<f64>> {
    let mut w = init.to_vec();
    let mut out = vec![w.clone()];
    for t in 1..=steps {
        let g = objective_gradient(p, lambda, w_ref, &w);
        let e = eta(t);
        for (wi, gi) in w.iter_mut().zip(&g) {
            *wi -= e * gi;
        }
        project(&mut w, radius);
        out.push(w.clone());
    }
    out
}

/// Minimizer of the regularized objective over the ball, by projected GD with
/// step 1/M until successive iterates agree to `tol`.
pub fn solve_oracle(
    p: &GlmProblem,
    lambda: f64,
    w_ref: &[f64],
    radius: f64,
    tol: f64,
) -> (Vec<f64>, f64) {
    let m = p.n() as f64 * p.smooth_beta() + lambda;
    let mut w = vec![0.0; p.dim()];
    for _ in 0..2_000_000 {
        let g = objective_gradient(p, lambda, w_ref, &w);
        let mut next: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - b / m).collect();
        project(&mut next, radius);
        let step: f64 = l2(&w.iter().zip(&next).map(|(a, b)| a - b).collect::<Vec<_>>());
        w = next;
        if step * m <= tol {
            break;
        }
    }
    let v = objective_value(p, lambda, w_ref, &w);
    (w, v)
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, w: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    let mut probe = w.to_vec();
    for k in 0..w.len() {
        probe[k] = w[k] + h;
        let up = f(&probe);
        probe[k] = w[k] - h;
        let down = f(&probe);
        probe[k] = w[k];
        g[k] = (up - down) / (2.0 * h);
    }
    g
}

/// Sample mean and standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
