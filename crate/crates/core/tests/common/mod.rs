//! Independent oracles shared by the integration tests and the acceptance suite.
//!
//! Nothing here calls the closed-form updates under test: likelihoods are
//! enumerated, maximizers are found numerically from bound evaluations only.

#![allow(dead_code)]

pub mod checks;

use nalgebra::DMatrix;
use rand::Rng;
use sbm_sampling::{DyadState, ObservedNetwork, SbmParameters};

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Calls `f` with every label vector in `{0..q}^n`.
pub fn for_each_labelling(n: usize, q: usize, f: &mut dyn FnMut(&[usize])) {
    let mut z = vec![0usize; n];
    loop {
        f(&z);
        let mut k = 0;
        while k < n {
            z[k] += 1;
            if z[k] < q {
                break;
            }
            z[k] = 0;
            k += 1;
        }
        if k == n {
            return;
        }
    }
}

fn log_b(y: f64, p: f64) -> f64 {
    if y == 1.0 {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

/// `log p(Y^o)` by summing over all label vectors.
pub fn exact_mar_loglik(net: &ObservedNetwork, params: &SbmParameters) -> f64 {
    let n = net.n();
    let q = params.q();
    let mut terms = Vec::new();
    for_each_labelling(n, q, &mut |z| {
        let mut t: f64 = z.iter().map(|&k| params.alpha()[k].ln()).sum();
        for (i, j, s) in net.dyads() {
            if let Some(y) = s.value() {
                t += log_b(y, params.pi()[(z[i], z[j])]);
            }
        }
        terms.push(t);
    });
    log_sum_exp(&terms)
}

/// `log p(Y^o, R)` under double standard sampling, summing over every label
/// vector and every completion of the missing dyads.
pub fn exact_double_standard_loglik(net: &ObservedNetwork, params: &SbmParameters, rho0: f64, rho1: f64) -> f64 {
    let n = net.n();
    let q = params.q();
    let missing = net.missing_dyads();
    let m = missing.len();
    assert!(m <= 16, "enumeration over 2^{m} completions is too large");
    let mut terms = Vec::new();
    for_each_labelling(n, q, &mut |z| {
        let mut base: f64 = z.iter().map(|&k| params.alpha()[k].ln()).sum();
        for (i, j, s) in net.dyads() {
            if let Some(y) = s.value() {
                base += log_b(y, params.pi()[(z[i], z[j])]);
                base += if y == 1.0 { rho1.ln() } else { rho0.ln() };
            }
        }
        for mask in 0..(1u32 << m) {
            let mut t = base;
            for (k, &(i, j)) in missing.iter().enumerate() {
                let y = ((mask >> k) & 1) as f64;
                t += log_b(y, params.pi()[(z[i], z[j])]);
                t += if y == 1.0 { (1.0 - rho1).ln() } else { (1.0 - rho0).ln() };
            }
            terms.push(t);
        }
    });
    log_sum_exp(&terms)
}

/// Monte-Carlo estimate (mean, standard error) of `E[log p_psi(R | Y)]` under
/// star-degree sampling when each missing dyad is drawn from `Bernoulli(nu)`.
pub fn mc_star_degree_expectation<R: Rng>(
    net: &ObservedNetwork,
    missing: &[(usize, usize)],
    nu: &[f64],
    sampled: &[bool],
    a: f64,
    b: f64,
    draws: usize,
    rng: &mut R,
) -> (f64, f64) {
    let n = net.n();
    let mut base = vec![0.0; n];
    for (i, j, s) in net.dyads() {
        if s == DyadState::Present {
            base[i] += 1.0;
            base[j] += 1.0;
        }
    }
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..draws {
        let mut deg = base.clone();
        for (&(i, j), &v) in missing.iter().zip(nu) {
            if rng.random::<f64>() < v {
                deg[i] += 1.0;
                deg[j] += 1.0;
            }
        }
        let mut l = 0.0;
        for i in 0..n {
            let p = logistic(a + b * deg[i]);
            l += if sampled[i] { p.ln() } else { (1.0 - p).ln() };
        }
        sum += l;
        sum2 += l * l;
    }
    let mean = sum / draws as f64;
    let var = (sum2 / draws as f64 - mean * mean).max(0.0);
    (mean, (var / draws as f64).sqrt())
}

/// Maximizer of a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_max(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Maximizer of a smooth concave `f` on the plane: coarse grid search over the
/// box, then Newton steps with central finite-difference derivatives.
pub fn grid_newton_max_2d(f: &dyn Fn(f64, f64) -> f64, box_x: (f64, f64), box_y: (f64, f64)) -> (f64, f64) {
    let steps = 40;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for ix in 0..=steps {
        for iy in 0..=steps {
            let x = box_x.0 + (box_x.1 - box_x.0) * ix as f64 / steps as f64;
            let y = box_y.0 + (box_y.1 - box_y.0) * iy as f64 / steps as f64;
            let v = f(x, y);
            if v > best.0 {
                best = (v, x, y);
            }
        }
    }
    let (mut x, mut y) = (best.1, best.2);
    for _ in 0..50 {
        let hx = 1e-3 * (1.0 + x.abs());
        let hy = 1e-3 * (1.0 + y.abs());
        let f0 = f(x, y);
        let fxp = f(x + hx, y);
        let fxm = f(x - hx, y);
        let fyp = f(x, y + hy);
        let fym = f(x, y - hy);
        let gx = (fxp - fxm) / (2.0 * hx);
        let gy = (fyp - fym) / (2.0 * hy);
        let hxx = (fxp - 2.0 * f0 + fxm) / (hx * hx);
        let hyy = (fyp - 2.0 * f0 + fym) / (hy * hy);
        let hxy = (f(x + hx, y + hy) - f(x + hx, y - hy) - f(x - hx, y + hy) + f(x - hx, y - hy)) / (4.0 * hx * hy);
        let det = hxx * hyy - hxy * hxy;
        if det.abs() < 1e-300 {
            break;
        }
        let dx = -(hyy * gx - hxy * gy) / det;
        let dy = -(hxx * gy - hxy * gx) / det;
        x += dx;
        y += dy;
        if dx.abs() < 1e-13 * (1.0 + x.abs()) && dy.abs() < 1e-13 * (1.0 + y.abs()) {
            break;
        }
    }
    (x, y)
}

/// Dirichlet(1) rows.
pub fn random_tau<R: Rng>(n: usize, q: usize, rng: &mut R) -> DMatrix<f64> {
    let mut tau = DMatrix::from_fn(n, q, |_, _| -rng.random::<f64>().max(1e-300).ln());
    for i in 0..n {
        let s: f64 = tau.row(i).sum();
        for k in 0..q {
            tau[(i, k)] /= s;
        }
    }
    tau
}

/// Random Q-block parameters with entries of `pi` in `[0.05, 0.95]`.
pub fn random_params<R: Rng>(q: usize, rng: &mut R) -> SbmParameters {
    let w: Vec<f64> = (0..q).map(|_| 0.2 + rng.random::<f64>()).collect();
    let s: f64 = w.iter().sum();
    let mut alpha: Vec<f64> = w.iter().map(|x| x / s).collect();
    let last: f64 = 1.0 - alpha[..q - 1].iter().sum::<f64>();
    alpha[q - 1] = last;
    let mut pi = DMatrix::zeros(q, q);
    for a in 0..q {
        for b in a..q {
            let p = 0.05 + 0.9 * rng.random::<f64>();
            pi[(a, b)] = p;
            pi[(b, a)] = p;
        }
    }
    SbmParameters::new(alpha, pi).unwrap()
}
