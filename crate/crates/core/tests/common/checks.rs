//! Oracle checks parameterized by instance count, shared by the integration
//! tests (small counts) and the acceptance suite (full counts). Each returns a
//! one-line summary on success and the first counterexample on failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbm_sampling::designs::design_log_likelihood;
use sbm_sampling::nmar::star_degree_term;
use sbm_sampling::*;

use super::*;

pub type Check = std::result::Result<String, String>;

pub fn sampled_network(design: &SamplingDesign, n: usize, q: usize, rng: &mut ChaCha8Rng) -> (ObservedNetwork, SbmParameters) {
    let params = random_params(q, rng);
    loop {
        let (full, z) = sample_sbm_network(&params, n, rng).unwrap();
        let net = apply_design(&full, &z, design, rng).unwrap();
        if net.missing_count() > 0 && net.observed_count() > 0 {
            return (net, params);
        }
    }
}

/// Random responsibilities, `nu` and (for star-degree) `zeta`.
pub fn random_state(net: &ObservedNetwork, q: usize, star: bool, rng: &mut ChaCha8Rng) -> NmarState {
    let missing = net.missing_dyads();
    let nu = missing.iter().map(|_| 0.05 + 0.9 * rng.random::<f64>()).collect();
    let zeta = star.then(|| (0..net.n()).map(|_| 0.1 + 3.0 * rng.random::<f64>()).collect());
    NmarState {
        tau: random_tau(net.n(), q, rng),
        missing,
        nu,
        zeta,
    }
}

/// Rejection-samples parameters whose recovery roots are at least 0.02 apart.
pub fn separated_params(q: usize, rng: &mut ChaCha8Rng, roots: impl Fn(&SbmParameters) -> Vec<Vec<f64>>) -> SbmParameters {
    loop {
        let p = random_params(q, rng);
        let ok = roots(&p).into_iter().all(|mut r| {
            r.sort_by(|a, b| a.total_cmp(b));
            r.windows(2).all(|w| w[1] - w[0] > 0.02)
        });
        if ok && p.alpha().iter().all(|&a| a > 0.05) {
            return p;
        }
    }
}

pub fn design_for(method: Method, q: usize, rng: &mut ChaCha8Rng) -> SamplingDesign {
    match method {
        Method::Mar => SamplingDesign::RandomDyad { rho: 0.3 + 0.6 * rng.random::<f64>() },
        Method::DoubleStandard => SamplingDesign::DoubleStandard {
            rho0: 0.2 + 0.7 * rng.random::<f64>(),
            rho1: 0.2 + 0.7 * rng.random::<f64>(),
        },
        Method::Class => SamplingDesign::Class {
            rho: (0..q).map(|_| 0.2 + 0.7 * rng.random::<f64>()).collect(),
        },
        Method::StarDegree => SamplingDesign::StarDegree {
            a: rng.random::<f64>() - 0.5,
            b: 0.2 * rng.random::<f64>() - 0.1,
        },
    }
}

/// Every recorded bound step is non-decreasing within `1e-8`.
pub fn check_bound_monotone(method: Method, instances: usize, seed: u64) -> Check {
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for k in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let q = 2 + k % 2;
        let params = random_params(q, &mut rng);
        let n = rng.random_range(15..40);
        let (full, z) = sample_sbm_network(&params, n, &mut rng).unwrap();
        let net = apply_design(&full, &z, &design_for(method, q, &mut rng), &mut rng).unwrap();
        let init = random_tau(n, q, &mut rng);
        let fit = fit(&net, q, method, &init, StopRule::default()).map_err(|e| format!("instance {k}: {e}"))?;
        for w in fit.bound_trace.windows(2) {
            steps += 1;
            let drop = w[0] - w[1];
            worst = worst.max(drop);
            if drop > 1e-8 {
                return Err(format!("{method} instance {k}: bound fell from {} to {}", w[0], w[1]));
            }
        }
    }
    Ok(format!("{steps} steps, largest decrease {worst:.1e}"))
}

/// Final MAR bound at most the enumerated `log p(Y^o; theta-hat)`, `n = 6`, `Q = 2`.
pub fn check_enumeration_mar(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = f64::INFINITY;
    for k in 0..instances {
        let (net, _) = sampled_network(&SamplingDesign::RandomDyad { rho: 0.7 }, 6, 2, &mut rng);
        let fit = fit_with_restarts(&net, 2, Method::Mar, 4, StopRule::default(), &mut rng).map_err(|e| e.to_string())?;
        let exact = exact_mar_loglik(&net, &fit.theta);
        if fit.final_bound() > exact + 1e-9 {
            return Err(format!("instance {k}: bound {} > log-likelihood {exact}", fit.final_bound()));
        }
        gap = gap.min(exact - fit.final_bound());
    }
    Ok(format!("smallest gap {gap:.2e}"))
}

/// Final double-standard bound at most the log-likelihood enumerated over
/// labels and completions of `D^m`, `n = 6`, `Q = 2`, `|D^m| <= 6`.
pub fn check_enumeration_double_standard(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let design = SamplingDesign::DoubleStandard { rho0: 0.8, rho1: 0.6 };
    let mut gap = f64::INFINITY;
    let mut done = 0;
    while done < instances {
        let (net, _) = sampled_network(&design, 6, 2, &mut rng);
        if net.missing_count() > 6 {
            continue;
        }
        let init = random_tau(6, 2, &mut rng);
        let fit = fit_nmar(&net, 2, NmarFamily::DoubleStandard, &init, StopRule::default()).map_err(|e| e.to_string())?;
        let Some(SamplingDesign::DoubleStandard { rho0, rho1 }) = fit.psi else {
            return Err("double-standard fit without design parameters".into());
        };
        let exact = exact_double_standard_loglik(&net, &fit.theta, rho0, rho1);
        if fit.final_bound() > exact + 1e-9 {
            return Err(format!("instance {done}: bound {} > log-likelihood {exact}", fit.final_bound()));
        }
        gap = gap.min(exact - fit.final_bound());
        done += 1;
    }
    Ok(format!("smallest gap {gap:.2e}"))
}

/// Random-dyad (even instances) and star (odd) recovery from exact moments.
pub fn check_round_trip_mar(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..instances {
        let q = 2 + (case / 2) % 2;
        let star = case % 2 == 1;
        let rho = 0.2 + 0.8 * rng.random::<f64>();
        let scale = if star { 1.0 } else { rho };
        let p = separated_params(q, &mut rng, |p| vec![p.pi_alpha().iter().map(|x| scale * x).collect()]);
        let design = if star { SamplingDesign::Star { rho } } else { SamplingDesign::RandomDyad { rho } };
        let m = exact_moments(&p, &design).map_err(|e| e.to_string())?;
        let r = recover_mar(&m, rho, q).map_err(|e| format!("case {case}: {e}"))?;
        let mut order: Vec<usize> = (0..q).collect();
        let pa = p.pi_alpha();
        order.sort_by(|&a, &b| pa[a].total_cmp(&pa[b]));
        let err = r.max_abs_diff(&p.permuted(&order));
        worst = worst.max(err);
        if err >= 1e-6 {
            return Err(format!("case {case} ({}): error {err:.2e}", design.name()));
        }
    }
    Ok(format!("max-abs error {worst:.1e}"))
}

pub fn check_round_trip_class(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for case in 0..instances {
        let q = 2 + case % 2;
        let rho: Vec<f64> = (0..q).map(|_| 0.2 + 0.8 * rng.random::<f64>()).collect();
        let t_of = |p: &SbmParameters, rho: &[f64]| -> Vec<f64> {
            (0..p.q()).map(|k| (0..p.q()).map(|l| p.pi()[(k, l)] * rho[l] * p.alpha()[l]).sum()).collect()
        };
        let p = separated_params(q, &mut rng, |p| vec![p.pi_alpha(), t_of(p, &rho)]);
        let m = exact_moments(&p, &SamplingDesign::Class { rho: rho.clone() }).map_err(|e| e.to_string())?;
        let (r, rho_hat) = recover_class(&m, q).map_err(|e| format!("case {case}: {e}"))?;
        let t = t_of(&p, &rho);
        let mut order: Vec<usize> = (0..q).collect();
        order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
        let err = r.max_abs_diff(&p.permuted(&order));
        let rho_err = order.iter().zip(&rho_hat).map(|(&k, r)| (rho[k] - r).abs()).fold(0.0, f64::max);
        worst = worst.max(err).max(rho_err);
        if err >= 1e-6 || rho_err >= 1e-6 {
            return Err(format!("case {case}: parameter error {err:.2e}, rate error {rho_err:.2e}"));
        }
    }
    Ok(format!("max-abs error {worst:.1e}"))
}

/// Instances built with two equal roots are rejected as degenerate.
pub fn check_repeated_roots(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tested = 0;
    while tested < instances {
        let case = tested;
        // pi_12 is solved so that both rows of pi alpha coincide
        let a1 = 0.2 + 0.6 * rng.random::<f64>();
        let alpha = vec![a1, 1.0 - a1];
        let (p11, p22) = (0.3 + 0.6 * rng.random::<f64>(), 0.3 + 0.6 * rng.random::<f64>());
        let p12 = (p11 * alpha[0] - p22 * alpha[1]) / (alpha[0] - alpha[1]);
        if !(0.0..=1.0).contains(&p12) || (alpha[0] - alpha[1]).abs() < 0.05 {
            continue;
        }
        let p = SbmParameters::from_rows(alpha.clone(), &[vec![p11, p12], vec![p12, p22]]).unwrap();
        let rho = 0.3 + 0.6 * rng.random::<f64>();
        for design in [SamplingDesign::RandomDyad { rho }, SamplingDesign::Star { rho }] {
            let m = exact_moments(&p, &design).unwrap();
            match recover_mar(&m, rho, 2) {
                Err(SbmError::RepeatedRoots) => {}
                other => return Err(format!("case {case} ({}): expected RepeatedRoots, got {other:?}", design.name())),
            }
        }
        let class = exact_moments(&p, &SamplingDesign::Class { rho: vec![rho, rho] }).unwrap();
        match recover_class(&class, 2) {
            Err(SbmError::RepeatedRoots) => {}
            other => return Err(format!("case {case} (class): expected RepeatedRoots, got {other:?}")),
        }
        tested += 1;
    }
    Ok(format!("{tested} designed instances rejected"))
}

/// `log sigma(x) >= log sigma(z) + (x - z)/2 + h(z)(x^2 - z^2)`.
pub fn check_jaakkola_inequality(count: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slack = f64::INFINITY;
    for _ in 0..count {
        let x = 20.0 * rng.random::<f64>() - 10.0;
        let z = 1e-6 + 10.0 * rng.random::<f64>();
        let lhs = -(-x).exp().ln_1p();
        let rhs = -(-z).exp().ln_1p() + 0.5 * (x - z) + jaakkola_h(z) * (x * x - z * z);
        if lhs < rhs - 1e-12 {
            return Err(format!("x = {x}, zeta = {z}: {lhs} < {rhs}"));
        }
        slack = slack.min(lhs - rhs);
    }
    Ok(format!("smallest slack {slack:.1e}"))
}

/// The `zeta`-bound of the star-degree term is below a Monte-Carlo estimate
/// of the exact expectation (mean + 4 standard errors), `n = 8`.
pub fn check_zeta_bound_monte_carlo(instances: usize, draws: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margin = f64::INFINITY;
    for k in 0..instances {
        let (net, _) = sampled_network(&SamplingDesign::StarDegree { a: 0.0, b: -0.1 }, 8, 2, &mut rng);
        let state = random_state(&net, 2, true, &mut rng);
        let (a, b) = (rng.random::<f64>() - 0.5, 0.8 * rng.random::<f64>() - 0.4);
        let sampled = net.sampled_nodes();
        let stats = degree_stats(&net, &state.missing, &state.nu);
        let zeta = state.zeta.as_ref().unwrap();
        let bound = star_degree_term(a, b, zeta, &stats, &sampled).map_err(|e| e.to_string())?;
        let (mean, se) = mc_star_degree_expectation(&net, &state.missing, &state.nu, &sampled, a, b, draws, &mut rng);
        if bound > mean + 4.0 * se {
            return Err(format!("instance {k}: bound {bound} > {mean} + 4 * {se}"));
        }
        margin = margin.min((mean - bound) / se.max(1e-300));
    }
    Ok(format!("closest approach {margin:.1} standard errors below"))
}

/// With `D^m` empty and `zeta_i = |a + b D_i|` the bound equals the exact term.
pub fn check_jaakkola_tightness(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let n = rng.random_range(3..10);
        let p = rng.random::<f64>();
        let full = ObservedNetwork::from_fn(n, |_, _| DyadState::from_edge(rng.random::<f64>() < p));
        let selected: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.5).collect();
        let net = full.clone().with_selection(selected).unwrap();
        let (a, b) = (4.0 * rng.random::<f64>() - 2.0, rng.random::<f64>() - 0.5);
        let stats = degree_stats(&net, &[], &[]);
        let zeta = update_zeta(a, b, &stats);
        let bound = star_degree_term(a, b, &zeta, &stats, &net.sampled_nodes()).map_err(|e| e.to_string())?;
        let z = BlockAssignment::new(vec![0; n], 1).unwrap();
        let exact = design_log_likelihood(&SamplingDesign::StarDegree { a, b }, &net, &full, &z).map_err(|e| e.to_string())?;
        worst = worst.max((bound - exact).abs());
        if (bound - exact).abs() >= 1e-12 {
            return Err(format!("bound {bound} vs exact {exact}"));
        }
    }
    Ok(format!("max difference {worst:.1e}"))
}

fn family_design(family: NmarFamily) -> SamplingDesign {
    match family {
        NmarFamily::DoubleStandard => SamplingDesign::DoubleStandard { rho0: 0.6, rho1: 0.3 },
        NmarFamily::Class => SamplingDesign::Class { rho: vec![0.6, 0.3] },
        NmarFamily::StarDegree => SamplingDesign::StarDegree { a: 0.2, b: -0.2 },
    }
}

fn random_psi(family: NmarFamily, rng: &mut ChaCha8Rng) -> SamplingDesign {
    match family {
        NmarFamily::DoubleStandard => SamplingDesign::DoubleStandard {
            rho0: 0.3 + 0.5 * rng.random::<f64>(),
            rho1: 0.1 + 0.8 * rng.random::<f64>(),
        },
        NmarFamily::Class => SamplingDesign::Class {
            rho: vec![0.05 + 0.9 * rng.random::<f64>(), 0.05 + 0.9 * rng.random::<f64>()],
        },
        NmarFamily::StarDegree => SamplingDesign::StarDegree {
            a: rng.random::<f64>() - 0.5,
            b: 0.6 * rng.random::<f64>() - 0.3,
        },
    }
}

/// Every closed-form `nu_ij` matches golden-section maximization of the full
/// bound over that coordinate, `n = 8`, `Q = 2`.
pub fn check_nu_optimality(family: NmarFamily, instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let star = family == NmarFamily::StarDegree;
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for k in 0..instances {
        let (net, params) = sampled_network(&family_design(family), 8, 2, &mut rng);
        let mut state = random_state(&net, 2, star, &mut rng);
        let psi = random_psi(family, &mut rng);
        state.nu = match &psi {
            SamplingDesign::DoubleStandard { rho0, rho1 } => {
                update_nu_double_standard(&params, *rho0, *rho1, &state.tau, &state.missing)
            }
            SamplingDesign::Class { .. } => update_nu_class(&params, &state.tau, &state.missing),
            SamplingDesign::StarDegree { a, b } => {
                update_nu_star_degree(&net, &params, *a, *b, &state).map_err(|e| e.to_string())?
            }
            _ => unreachable!(),
        };
        for d in 0..state.missing.len() {
            let f = |x: f64| {
                let mut s = state.clone();
                s.nu[d] = x;
                lower_bound_nmar(&net, &params, &psi, &s).unwrap()
            };
            let x = golden_max(&f, 1e-9, 1.0 - 1e-9, 1e-12);
            let err = (x - state.nu[d]).abs();
            worst = worst.max(err);
            coords += 1;
            if err >= 1e-6 {
                return Err(format!("{family:?} state {k} dyad {d}: numeric {x} vs closed form {}", state.nu[d]));
            }
        }
    }
    Ok(format!("{coords} coordinates, max deviation {worst:.1e}"))
}

/// Closed-form design parameters match numerical maximization of the bound:
/// golden section per coordinate (double standard, class), grid plus Newton in
/// `(a, b)` (star-degree).
pub fn check_psi_optimality(family: NmarFamily, instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let (net, params) = sampled_network(&family_design(family), 8, 2, &mut rng);
        let state = random_state(&net, 2, family == NmarFamily::StarDegree, &mut rng);
        let bound = |psi: SamplingDesign| lower_bound_nmar(&net, &params, &psi, &state).unwrap();
        let pairs: Vec<(f64, f64)> = match family {
            NmarFamily::DoubleStandard => {
                let u = update_psi_double_standard(&DyadStats::new(&net, &state.nu));
                let SamplingDesign::DoubleStandard { rho0, rho1 } = u.psi else { unreachable!() };
                let n0 = golden_max(&|x| bound(SamplingDesign::DoubleStandard { rho0: x, rho1 }), 1e-9, 1.0 - 1e-9, 1e-12);
                let n1 = golden_max(&|x| bound(SamplingDesign::DoubleStandard { rho0, rho1: x }), 1e-9, 1.0 - 1e-9, 1e-12);
                vec![(n0, rho0), (n1, rho1)]
            }
            NmarFamily::Class => {
                let u = update_psi_class(&state.tau, &net.sampled_nodes());
                let SamplingDesign::Class { rho } = u.psi else { unreachable!() };
                (0..2)
                    .map(|q| {
                        let f = |x: f64| {
                            let mut r = rho.clone();
                            r[q] = x;
                            bound(SamplingDesign::Class { rho: r })
                        };
                        (golden_max(&f, 1e-9, 1.0 - 1e-9, 1e-12), rho[q])
                    })
                    .collect()
            }
            NmarFamily::StarDegree => {
                let stats = degree_stats(&net, &state.missing, &state.nu);
                let u = update_psi_star_degree(&stats, state.zeta.as_ref().unwrap(), &net.sampled_nodes(), (0.0, 0.0));
                if u.degenerate {
                    return Err(format!("state {k}: degenerate star-degree update"));
                }
                let SamplingDesign::StarDegree { a, b } = u.psi else { unreachable!() };
                let f = |x: f64, y: f64| bound(SamplingDesign::StarDegree { a: x, b: y });
                let (na, nb) = grid_newton_max_2d(&f, (-5.0, 5.0), (-2.0, 2.0));
                vec![(na, a), (nb, b)]
            }
        };
        for (numeric, closed) in pairs {
            let err = (numeric - closed).abs();
            worst = worst.max(err);
            if err >= 1e-6 {
                return Err(format!("{family:?} state {k}: numeric {numeric} vs closed form {closed}"));
            }
        }
    }
    Ok(format!("max deviation {worst:.1e}"))
}

/// Each `zeta_i` maximizes its own Jaakkola term, coded here from scratch.
pub fn check_zeta_optimality(instances: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let (net, _) = sampled_network(&family_design(NmarFamily::StarDegree), 8, 2, &mut rng);
        let state = random_state(&net, 2, true, &mut rng);
        let (a, b) = (2.0 * rng.random::<f64>() - 1.0, 0.6 * rng.random::<f64>() - 0.3);
        let stats = degree_stats(&net, &state.missing, &state.nu);
        let zeta = update_zeta(a, b, &stats);
        for i in 0..net.n() {
            let second = a * a + 2.0 * a * b * stats.d_tilde[i] + b * b * stats.d2_tilde(i);
            // log sigma(z) + (m - z)/2 = m/2 - log 2 - log cosh(z/2) and h(z) = -tanh(z/2)/(4z);
            // dropping the constants leaves a form free of cancellation near z = 0,
            // where the objective is flat to fourth order
            let f = |z: f64| {
                let s = (0.25 * z).sinh();
                -(2.0 * s * s).ln_1p() - (0.5 * z).tanh() / (4.0 * z) * (second - z * z)
            };
            let x = golden_max(&f, 1e-9, 30.0, 1e-13);
            let err = (x - zeta[i]).abs();
            worst = worst.max(err);
            if err >= 1e-6 {
                return Err(format!("state {k} node {i}: numeric {x} vs closed form {}", zeta[i]));
            }
        }
    }
    Ok(format!("max deviation {worst:.1e}"))
}
