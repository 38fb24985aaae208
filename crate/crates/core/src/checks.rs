//! Numerical oracles and invariant checks shared by the `selftest` experiment
//! and the acceptance suite. Every check takes its problem sizes explicitly so
//! the self-test can run a reduced version of the same code.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::channel::los_matrix;
use crate::config::Config;
use crate::error::Result;
use crate::experiments::{run_experiment, Experiment};
use crate::geometry::SceneGeometry;
use crate::metrics::{PhaseShifts, PowerAllocation, SystemModel};
use crate::montecarlo::{simulate_ber, BerEstimate, MonteCarloConfig};
use crate::oam::{binomial, ModePlan, OamBasis, PlanParams};
use crate::pipeline::{run_baseline, Scenario, Scheme, SchemeConfig, ThetaInit};
use crate::power::{PowerSolverOptions, PowerSubproblem};
use crate::ris::{optimize_theta, CgOptions, ManifoldObjective, SecrecyObjective};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            pass,
            detail,
        }
    }

    fn failed(name: &str, err: crate::Error) -> Self {
        Self::new(name, false, format!("error: {err}"))
    }
}

fn catch(name: &str, f: impl FnOnce() -> Result<Check>) -> Check {
    f().unwrap_or_else(|e| Check::failed(name, e))
}

/// Moves Eve to a random position and orientation: distance 6..14 m, azimuth
/// anywhere, polar angle within ±30° of the array axis, tilts in [0, π/2].
pub fn random_eve_placement<R: Rng + ?Sized>(scene: &SceneGeometry, rng: &mut R) -> SceneGeometry {
    SceneGeometry {
        d: rng.random_range(6.0..14.0),
        eve_theta: rng.random_range(0.0..2.0 * PI),
        eve_phi: rng.random_range(-PI / 6.0..PI / 6.0),
        eve_rot_x: rng.random_range(0.0..FRAC_PI_2),
        eve_rot_y: rng.random_range(0.0..FRAC_PI_2),
        ..scene.clone()
    }
}

/// Random feasible split of `budget` over `n` modes with every entry above `floor`.
pub fn random_powers<R: Rng + ?Sized>(rng: &mut R, n: usize, budget: f64, floor: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum::<f64>() / rng.random_range(0.5..1.0);
    w.iter()
        .map(|x| floor + (budget - n as f64 * floor) * x / total)
        .collect()
}

/// P4 instance with log-uniform channel gains and random AN terms.
pub fn random_p4_instance<R: Rng + ?Sized>(rng: &mut R, n: usize) -> PowerSubproblem {
    let mut m = || -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..n)
                    .map(|_| 10f64.powf(rng.random_range(-2.0..1.5)))
                    .collect()
            })
            .collect()
    };
    let a = m();
    let b = m();
    let c = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
    PowerSubproblem::new(a, b, c, 0.9, 3e-4).expect("valid instance")
}

fn small_scenario(q_y: usize, q_z: usize) -> Scenario {
    let mut s = Scenario::default();
    s.scene.q_y = q_y;
    s.scene.q_z = q_z;
    s
}

/// Random Eve placement, phases and powers on a `q_y × q_z` RIS.
fn random_instance(
    rng: &mut ChaCha8Rng,
    q_y: usize,
    q_z: usize,
) -> Result<(SystemModel, PowerAllocation, PhaseShifts)> {
    let mut s = small_scenario(q_y, q_z);
    s.scene = random_eve_placement(&s.scene, rng);
    let (model, budget) = s.build(Scheme::Proposed)?;
    let base = PowerAllocation::equal(budget, &model.plan);
    let p = random_powers(
        rng,
        model.plan.n_signal(),
        budget.signal_budget(),
        budget.p_th,
    );
    let theta = PhaseShifts::random(model.q(), rng);
    Ok((model, base.with_powers(p), theta))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn dft_unitarity(ns: &[usize]) -> Check {
    const NAME: &str = "DFT unitarity";
    catch(NAME, || {
        let mut worst: f64 = 0.0;
        for &n in ns {
            let f = OamBasis::new(n, 0.3)?.f;
            let e = f.adjoint() * &f - DMatrix::<Complex64>::identity(n, n);
            worst = worst.max(e.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        Ok(Check::new(
            NAME,
            worst < 1e-12,
            format!("max|F^H F - I| = {worst:.2e} over N = {ns:?}"),
        ))
    })
}

pub fn circulant_diagonalization(ns: &[usize]) -> Check {
    const NAME: &str = "circulant diagonalization";
    catch(NAME, || {
        let mut worst: f64 = 0.0;
        for &n in ns {
            let g = SceneGeometry {
                n,
                alpha_a: 0.2,
                alpha_b: 0.2,
                ..Default::default()
            };
            let h = los_matrix(&g.alice_elements(), &g.bob_elements(), &Default::default())?;
            let f = OamBasis::from_scene(&g)?.f;
            let d = f.adjoint() * h * &f;
            let (mut diag, mut off) = (0.0, 0.0);
            for ((r, c), z) in d.iter().enumerate().map(|(i, z)| ((i % n, i / n), z)) {
                if r == c {
                    diag += z.norm_sqr();
                } else {
                    off += z.norm_sqr();
                }
            }
            worst = worst.max(off / diag);
        }
        Ok(Check::new(
            NAME,
            worst < 1e-10,
            format!("off/diag mass = {worst:.2e} over N = {ns:?}"),
        ))
    })
}

pub fn dual_sinr(instances: usize, seed: u64) -> Check {
    const NAME: &str = "dual SINR formulations";
    catch(NAME, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for i in 0..instances {
            let (qy, qz) = if i % 2 == 0 { (2, 2) } else { (4, 4) };
            let (model, pw, theta) = random_instance(&mut rng, qy, qz)?;
            let lin = model.linearize();
            let gb = model.sinr_bob(&pw, &theta)?;
            let ge = model.sinr_eve(&pw, &theta)?;
            let lb = lin.sinr_bob(&pw.p, &model.noise, &theta.0);
            let le = lin.sinr_eve(&pw.p, pw.sigma_zz, &model.noise, &theta.0);
            for (a, b) in gb.iter().zip(&lb).chain(ge.iter().zip(&le)) {
                worst = worst.max(rel(*a, *b));
            }
        }
        Ok(Check::new(
            NAME,
            worst < 1e-10,
            format!("max relative gap {worst:.2e} over {instances} instances, Q in {{4, 16}}"),
        ))
    })
}

/// Central differences of the matrix-route objective along the real and
/// imaginary axis of every phase entry.
pub fn finite_difference_gradient(
    model: &SystemModel,
    pw: &PowerAllocation,
    theta: &PhaseShifts,
    h: f64,
) -> Result<Vec<Complex64>> {
    let f = |t: &PhaseShifts| -> Result<f64> {
        let r = model.evaluate(pw, t)?.rates;
        Ok(r.r_e - r.r_b_tilde)
    };
    let mut g = Vec::with_capacity(theta.len());
    for q in 0..theta.len() {
        let mut parts = [0.0; 2];
        for (k, dir) in [Complex64::new(h, 0.0), Complex64::new(0.0, h)]
            .into_iter()
            .enumerate()
        {
            let mut plus = theta.clone();
            plus.0[q] += dir;
            let mut minus = theta.clone();
            minus.0[q] -= dir;
            parts[k] = (f(&plus)? - f(&minus)?) / (2.0 * h);
        }
        g.push(Complex64::new(parts[0], parts[1]));
    }
    Ok(g)
}

pub fn gradient_vs_finite_differences(instances: usize, seed: u64) -> Check {
    const NAME: &str = "Euclidean gradient vs finite differences";
    catch(NAME, || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let (model, pw, theta) = random_instance(&mut rng, 4, 2)?;
            let lin = model.linearize();
            let obj = SecrecyObjective {
                lin: &lin,
                p: &pw.p,
                sigma_zz: pw.sigma_zz,
                noise: model.noise,
            };
            let g = obj.euclidean_gradient(&theta.0);
            let fd = finite_difference_gradient(&model, &pw, &theta, 1e-6)?;
            let num: f64 = g
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            worst = worst.max(num / g.norm());
        }
        Ok(Check::new(
            NAME,
            worst < 1e-5,
            format!("max relative error {worst:.2e} over {instances} instances, Q = 8"),
        ))
    })
}

pub fn manifold_invariants(runs: usize, q_y: usize, q_z: usize, seed: u64) -> Check {
    const NAME: &str = "manifold invariants";
    catch(NAME, || {
        let results: Vec<Result<(f64, f64)>> = (0..runs)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                let (model, pw, theta) = random_instance(&mut rng, q_y, q_z)?;
                let lin = model.linearize();
                let obj = SecrecyObjective {
                    lin: &lin,
                    p: &pw.p,
                    sigma_zz: pw.sigma_zz,
                    noise: model.noise,
                };
                let r = optimize_theta(&obj, &theta.0, &CgOptions::default())?;
                Ok((r.max_modulus_error, r.max_tangent_residual))
            })
            .collect();
        let (mut modulus, mut tangent) = (0.0f64, 0.0f64);
        for r in results {
            let (m, t) = r?;
            modulus = modulus.max(m);
            tangent = tangent.max(t);
        }
        Ok(Check::new(
            NAME,
            modulus < 1e-12 && tangent < 1e-9,
            format!("max ||theta|-1| = {modulus:.2e}, max tangent residual = {tangent:.2e} over {runs} runs, Q = {}", q_y * q_z),
        ))
    })
}

/// Best surrogate value of a two-mode instance on a grid of `steps` points
/// per budget.
pub fn p4_grid_oracle(
    sub: &PowerSubproblem,
    t: &crate::power::AuxMultipliers,
    steps: usize,
) -> f64 {
    let step = sub.budget / steps as f64;
    let mut best = f64::NEG_INFINITY;
    let mut p1 = sub.floor;
    while p1 <= sub.budget - sub.floor + 1e-15 {
        let mut p2 = sub.floor;
        while p1 + p2 <= sub.budget + 1e-15 {
            best = best.max(sub.surrogate(&[p1, p2], t));
            p2 += step;
        }
        p1 += step;
    }
    best
}

pub fn p4_vs_grid(seeds: usize, steps: usize) -> Check {
    const NAME: &str = "P4 solver vs grid oracle";
    catch(NAME, || {
        let gaps: Vec<Result<f64>> = (0..seeds as u64)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let sub = random_p4_instance(&mut rng, 2);
                let p0 = random_powers(&mut rng, 2, sub.budget, sub.floor);
                let t = sub.update_multipliers(&p0);
                let p = sub.solve_p4(&t, &p0, &PowerSolverOptions::default())?;
                let got = sub.surrogate(&p, &t);
                let grid = p4_grid_oracle(&sub, &t, steps);
                Ok((grid - got) / grid.abs().max(1e-12))
            })
            .collect();
        let mut worst = f64::NEG_INFINITY;
        for g in gaps {
            worst = worst.max(g?);
        }
        Ok(Check::new(
            NAME,
            worst < 1e-3,
            format!("max relative gap {worst:.2e} (negative: solver beats grid) over {seeds} seeds, step budget/{steps}"),
        ))
    })
}

pub fn ao_monotonicity(runs: usize, q_y: usize, q_z: usize, seed: u64) -> Check {
    const NAME: &str = "AO monotonicity and convergence";
    catch(NAME, || {
        let results: Vec<Result<(f64, bool)>> = (0..runs)
            .into_par_iter()
            .map(|i| {
                let s = seed.wrapping_add(i as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let mut sc = small_scenario(q_y, q_z);
                sc.scene = random_eve_placement(&sc.scene, &mut rng);
                let (model, budget) = sc.build(Scheme::Proposed)?;
                let cfg = SchemeConfig {
                    seed: s,
                    theta_init: ThetaInit::Random,
                    ..Default::default()
                };
                let r = run_baseline(&model, budget, &cfg)?;
                let drop = r
                    .sr_trace
                    .windows(2)
                    .map(|w| w[0] - w[1])
                    .fold(f64::NEG_INFINITY, f64::max);
                Ok((drop, r.converged))
            })
            .collect();
        let mut worst_drop = f64::NEG_INFINITY;
        let mut converged = 0;
        for r in results {
            let (d, c) = r?;
            worst_drop = worst_drop.max(d);
            converged += c as usize;
        }
        let frac = converged as f64 / runs as f64;
        Ok(Check::new(
            NAME,
            worst_drop <= 1e-6 && frac >= 0.95,
            format!("largest SR decrease {worst_drop:.2e}, converged {converged}/{runs} within 50 iterations, Q = {}", q_y * q_z),
        ))
    })
}

fn scheme_sr(sc: &Scenario, scheme: Scheme, seed: u64) -> Result<f64> {
    let (model, budget) = sc.build(scheme)?;
    let cfg = SchemeConfig {
        scheme,
        seed,
        ..Default::default()
    };
    Ok(run_baseline(&model, budget, &cfg)?.sr())
}

pub fn scheme_ordering(placements: usize, seed: u64) -> Check {
    const NAME: &str = "scheme ordering over Eve placements";
    catch(NAME, || {
        let wins: Vec<Result<(bool, bool)>> = (0..placements)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
                let mut sc = Scenario::default();
                sc.scene = random_eve_placement(&sc.scene, &mut rng);
                let prop = scheme_sr(&sc, Scheme::Proposed, 0)?;
                let ep = scheme_sr(&sc, Scheme::EqualPower, 0)?;
                let no_an = scheme_sr(&sc, Scheme::NoAn, 0)?;
                Ok((prop >= ep - 1e-9, prop >= no_an - 1e-9))
            })
            .collect();
        let (mut ep, mut an) = (0, 0);
        for w in wins {
            let (a, b) = w?;
            ep += a as usize;
            an += b as usize;
        }
        let need = (0.9 * placements as f64).ceil() as usize;
        Ok(Check::new(
            NAME,
            ep >= need && an >= need,
            format!("proposed >= equal-power on {ep}/{placements}, >= no-AN on {an}/{placements}"),
        ))
    })
}

pub fn zr_dip() -> Check {
    const NAME: &str = "SR dips at intermediate RIS height";
    catch(NAME, || {
        let sr: Vec<Result<f64>> = [2.0, 10.0, 20.0]
            .into_par_iter()
            .map(|z| {
                let mut sc = Scenario::default();
                sc.scene.u_r[2] = z;
                scheme_sr(&sc, Scheme::Proposed, 0)
            })
            .collect();
        let (a, b, c) = (sr[0].clone()?, sr[1].clone()?, sr[2].clone()?);
        Ok(Check::new(
            NAME,
            b < a.max(c),
            format!("SR(z_R = 2, 10, 20) = {a:.4}, {b:.4}, {c:.4}"),
        ))
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0 + 1.0;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Seed-averaged SR over RIS sizes `q` (with `q_y` columns), each seed drawing
/// its own random initial phases.
pub fn q_trend(q: &[usize], q_y: usize, seeds: usize) -> Check {
    const NAME: &str = "SR increases with RIS size";
    catch(NAME, || {
        let jobs: Vec<(usize, u64)> = q
            .iter()
            .flat_map(|&qq| (0..seeds as u64).map(move |s| (qq, s)))
            .collect();
        let sr: Vec<Result<f64>> = jobs
            .par_iter()
            .map(|&(qq, s)| {
                let sc = small_scenario(q_y, qq / q_y);
                let (model, budget) = sc.build(Scheme::Proposed)?;
                let cfg = SchemeConfig {
                    seed: s,
                    theta_init: ThetaInit::Random,
                    ..Default::default()
                };
                Ok(run_baseline(&model, budget, &cfg)?.sr())
            })
            .collect();
        let mut mean = vec![0.0; q.len()];
        for (k, r) in sr.into_iter().enumerate() {
            mean[k / seeds] += r? / seeds as f64;
        }
        let qs: Vec<f64> = q.iter().map(|&v| v as f64).collect();
        let rho = spearman(&qs, &mean);
        let shown: Vec<String> = mean.iter().map(|v| format!("{v:.4}")).collect();
        Ok(Check::new(
            NAME,
            rho > 0.9,
            format!(
                "Spearman {rho:.3}; mean SR over {seeds} seeds at Q = {q:?}: [{}]",
                shown.join(", ")
            ),
        ))
    })
}

fn disjoint_above(hi: &BerEstimate, lo: &BerEstimate) -> bool {
    hi.ci().0 > lo.ci().1
}

pub fn ber_directions(trials: usize) -> Check {
    const NAME: &str = "BER directions";
    catch(NAME, || {
        let sc = Scenario::default();
        let (model, budget) = sc.build(Scheme::Proposed)?;
        let run = run_baseline(&model, budget, &SchemeConfig::default())?;
        let grid = vec![0.0, 5.0, 10.0, 15.0, 20.0];
        let mc = |include_an| MonteCarloConfig {
            trials,
            snr_grid_db: grid.clone(),
            include_an,
            ..Default::default()
        };
        let with = simulate_ber(&model, &run.power, &run.theta, &mc(true))?;
        let without = simulate_ber(&model, &run.power, &run.theta, &mc(false))?;
        let eve_above_bob = with.iter().all(|p| disjoint_above(&p.eve, &p.bob));
        let at10 = with
            .iter()
            .position(|p| p.snr_db == 10.0)
            .expect("grid has 10 dB");
        let an_helps = disjoint_above(&with[at10].eve, &without[at10].eve);
        let curve: Vec<String> = with
            .iter()
            .map(|p| {
                format!(
                    "{}dB bob {:.4} eve {:.4}",
                    p.snr_db,
                    p.bob.ber(),
                    p.eve.ber()
                )
            })
            .collect();
        Ok(Check::new(
            NAME,
            eve_above_bob && an_helps,
            format!(
                "eve > bob at every point: {eve_above_bob} [{}]; at 10 dB eve with AN {:.4} ± {:.4} vs without {:.4} ± {:.4}: {an_helps}",
                curve.join("; "),
                with[at10].eve.ber(),
                with[at10].eve.half_width(),
                without[at10].eve.ber(),
                without[at10].eve.half_width(),
            ),
        ))
    })
}

/// Counts admissible (signal, AN) splits by scanning every subset of the
/// low and high mode groups.
pub fn brute_force_combinations(n_low: usize, n_high: usize, n_signal: usize, n_an: usize) -> u128 {
    let count = |size: usize, pick: usize, must_include_first: bool| -> u128 {
        (0u32..1 << size)
            .filter(|m| m.count_ones() as usize == pick && (!must_include_first || m & 1 == 1))
            .count() as u128
    };
    count(n_low, n_signal, true) * count(n_high, n_an, false)
}

pub fn k_formula() -> Check {
    const NAME: &str = "index-modulation combination count";
    catch(NAME, || {
        let params = PlanParams::default();
        let plan = ModePlan::new(8, &params)?;
        let raw = brute_force_combinations(
            params.low_modes.len(),
            params.high_modes.len(),
            params.n_signal,
            params.n_an,
        );
        let k_brute = 1u128 << (127 - raw.leading_zeros());
        let closed = binomial(3, 2) * binomial(4, 3);
        let listed = params.enumerate_combinations(8)?.len() as u128;
        Ok(Check::new(
            NAME,
            plan.k == 8
                && plan.index_bits() == 3.0
                && k_brute == 8
                && closed == raw
                && listed == plan.k,
            format!(
                "K = {}, log2 K = {}, exhaustive count {raw} -> {k_brute}, enumerated {listed}",
                plan.k,
                plan.index_bits()
            ),
        ))
    })
}

/// Runs every experiment twice on `cfg` and compares the CSV bodies.
pub fn determinism(cfg: &Config, experiments: &[Experiment]) -> Check {
    const NAME: &str = "deterministic experiment output";
    catch(NAME, || {
        let mut compared = 0;
        for &e in experiments {
            let a = run_experiment(cfg, e)?;
            let b = rayon::ThreadPoolBuilder::new()
                .num_threads(1)
                .build()
                .expect("thread pool")
                .install(|| run_experiment(cfg, e))?;
            if a.artifacts != b.artifacts {
                return Ok(Check::new(
                    NAME,
                    false,
                    format!("{} differs between runs", e.name()),
                ));
            }
            compared += a.artifacts.len();
        }
        Ok(Check::new(
            NAME,
            true,
            format!(
                "{compared} CSV files byte-identical across two runs (multi- and single-threaded)"
            ),
        ))
    })
}

/// Reduced-size version of every check, used by the `selftest` experiment.
pub fn selftest_suite() -> Vec<Check> {
    let mut cfg = Config::default();
    cfg.sweep.z_r = vec![5.0, 20.0];
    cfg.sweep.schemes = vec![Scheme::Proposed, Scheme::EqualPower];
    cfg.scene.q_y = 4;
    cfg.scene.q_z = 4;
    cfg.mc.trials = 2000;
    cfg.mc.snr_grid_db = vec![0.0, 10.0];
    vec![
        dft_unitarity(&[4, 8, 16]),
        circulant_diagonalization(&[4, 8, 16]),
        dual_sinr(20, 11),
        gradient_vs_finite_differences(5, 12),
        manifold_invariants(5, 4, 4, 13),
        p4_vs_grid(5, 400),
        ao_monotonicity(5, 4, 4, 14),
        k_formula(),
        determinism(&cfg, &[Experiment::SweepZr, Experiment::Ber]),
    ]
}
