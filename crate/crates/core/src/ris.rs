//! Phase-shift optimization on the complex circle manifold
//! `{θ ∈ C^Q : |θ_q| = 1}` by Riemannian conjugate gradient.
//!
//! Tangent vectors at θ satisfy `Re(v ∘ θ*) = 0`. The Riemannian gradient is the
//! orthogonal projection of the Euclidean gradient, vector transport is the
//! projection onto the new tangent space, directions use the Polak-Ribiere
//! coefficient and steps are accepted by Armijo backtracking followed by the
//! element-wise normalization retraction.

use num_complex::Complex64;
use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::metrics::{NoiseConfig, RisLinearization};
use crate::oam::CVector;

/// Smooth cost on the manifold, minimized.
pub trait ManifoldObjective {
    fn value(&self, theta: &CVector) -> f64;
    /// Euclidean gradient `∂f/∂Re θ + j ∂f/∂Im θ`.
    fn euclidean_gradient(&self, theta: &CVector) -> CVector;
}

/// `f = -(R̃_B - R_E)` in bits, for fixed powers.
#[derive(Debug, Clone, Copy)]
pub struct SecrecyObjective<'a> {
    pub lin: &'a RisLinearization,
    pub p: &'a [f64],
    pub sigma_zz: f64,
    pub noise: NoiseConfig,
}

struct RowTerms {
    total: f64,
    partial: f64,
    d_total: CVector,
    d_partial: CVector,
}

/// For one row: `Σ_k w_k |c_k|² + σ²` with and without the own-mode term and the
/// Wirtinger derivatives `Σ_k w_k v_k conj(c_k)` of both.
fn row_terms(
    base: &[Complex64],
    lin: &[CVector],
    weights: impl Iterator<Item = f64>,
    own: usize,
    sigma2: f64,
    theta: &CVector,
    with_grad: bool,
) -> RowTerms {
    let q = theta.len();
    let mut total = sigma2;
    let mut own_power = 0.0;
    let mut d_total = CVector::zeros(if with_grad { q } else { 0 });
    let mut d_own = CVector::zeros(if with_grad { q } else { 0 });
    for (k, ((b, v), w)) in base.iter().zip(lin).zip(weights).enumerate() {
        let c = b + crate::metrics::herm_dot(theta, v);
        let pw = w * c.norm_sqr();
        total += pw;
        if k == own {
            own_power = pw;
        }
        if with_grad && w != 0.0 {
            let coef = c.conj() * w;
            if k == own {
                d_own.axpy(coef, v, Complex64::new(0.0, 0.0));
            }
            d_total.axpy(coef, v, Complex64::new(1.0, 0.0));
        }
    }
    let d_partial = if with_grad { &d_total - &d_own } else { d_own };
    RowTerms {
        total,
        partial: total - own_power,
        d_total,
        d_partial,
    }
}

impl SecrecyObjective<'_> {
    fn rows(&self, theta: &CVector, with_grad: bool) -> Vec<(RowTerms, RowTerms)> {
        let ns = self.lin.n_signal;
        let p = self.p;
        let zz = self.sigma_zz;
        (0..ns)
            .map(|i| {
                let bob = row_terms(
                    &self.lin.omega[i],
                    &self.lin.mu[i],
                    p.iter().copied(),
                    i,
                    self.noise.sigma_b2,
                    theta,
                    with_grad,
                );
                let n_cols = self.lin.zeta[i].len();
                let eve = row_terms(
                    &self.lin.zeta[i],
                    &self.lin.eta[i],
                    (0..n_cols).map(|k| if k < ns { p[k] } else { zz }),
                    i,
                    self.noise.sigma_e2,
                    theta,
                    with_grad,
                );
                (bob, eve)
            })
            .collect()
    }
}

impl ManifoldObjective for SecrecyObjective<'_> {
    fn value(&self, theta: &CVector) -> f64 {
        -self
            .rows(theta, false)
            .iter()
            .map(|(b, e)| (b.total / b.partial).log2() - (e.total / e.partial).log2())
            .sum::<f64>()
    }

    fn euclidean_gradient(&self, theta: &CVector) -> CVector {
        let mut g = CVector::zeros(theta.len());
        for (b, e) in self.rows(theta, true) {
            g -= &b.d_total / Complex64::from(b.total);
            g += &b.d_partial / Complex64::from(b.partial);
            g += &e.d_total / Complex64::from(e.total);
            g -= &e.d_partial / Complex64::from(e.partial);
        }
        g * Complex64::from(2.0 / LN_2)
    }
}

/// `v - Re(v ∘ θ*) ∘ θ`.
pub fn project_tangent(theta: &CVector, v: &CVector) -> CVector {
    CVector::from_fn(theta.len(), |q, _| {
        let t = theta[q];
        v[q] - t * (v[q] * t.conj()).re
    })
}

/// Element-wise normalization `θ_q / |θ_q|`.
pub fn retract(v: &CVector) -> CVector {
    v.map(|x| x / x.norm())
}

/// Largest `|Re(v_q θ_q*)|`; zero for tangent vectors.
pub fn tangent_residual(theta: &CVector, v: &CVector) -> f64 {
    theta
        .iter()
        .zip(v.iter())
        .map(|(t, x)| (x * t.conj()).re.abs())
        .fold(0.0, f64::max)
}

pub fn riemannian_gradient<O: ManifoldObjective + ?Sized>(obj: &O, theta: &CVector) -> CVector {
    project_tangent(theta, &obj.euclidean_gradient(theta))
}

/// Real inner product `Re(uᴴv)`.
fn inner(u: &CVector, v: &CVector) -> f64 {
    u.iter().zip(v.iter()).map(|(a, b)| (a.conj() * b).re).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialStep {
    Fixed(f64),
    /// First trial moves the largest gradient entry by one unit.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant ι.
    pub armijo: f64,
    /// Backtracking factor ν.
    pub shrink: f64,
    pub initial_step: InitialStep,
    pub max_backtracks: usize,
    /// Restart with steepest descent every this many iterations; `None` uses Q.
    pub restart_every: Option<usize>,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 200,
            armijo: 1e-4,
            shrink: 0.5,
            initial_step: InitialStep::Auto,
            max_backtracks: 50,
            restart_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldState {
    pub theta: CVector,
    pub value: f64,
    pub grad: CVector,
    pub xi: CVector,
    /// Last accepted Armijo step.
    pub step: f64,
    pub iter: usize,
}

impl ManifoldState {
    pub fn new<O: ManifoldObjective + ?Sized>(obj: &O, theta: CVector, opts: &CgOptions) -> Self {
        let grad = riemannian_gradient(obj, &theta);
        let step = match opts.initial_step {
            InitialStep::Fixed(b) => b,
            InitialStep::Auto => {
                let m = grad.iter().map(|g| g.norm()).fold(0.0, f64::max);
                if m > 0.0 {
                    1.0 / m
                } else {
                    1.0
                }
            }
        };
        Self {
            value: obj.value(&theta),
            xi: -&grad,
            theta,
            grad,
            step,
            iter: 0,
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad.norm()
    }
}

/// Outcome of one accepted line search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: f64,
    pub decrease: f64,
    pub grad_norm_sq: f64,
    pub steepest_fallback: bool,
}

fn armijo_search<O: ManifoldObjective + ?Sized>(
    obj: &O,
    state: &ManifoldState,
    dir: &CVector,
    opts: &CgOptions,
) -> Option<(CVector, f64, f64)> {
    let g2 = state.grad.norm_squared();
    let mut beta = state.step;
    for _ in 0..=opts.max_backtracks {
        let cand = retract(&(&state.theta + dir * Complex64::from(beta)));
        let val = obj.value(&cand);
        if state.value - val >= opts.armijo * beta * g2 {
            return Some((cand, val, beta));
        }
        beta *= opts.shrink;
    }
    None
}

/// One conjugate-gradient iteration: line search along `state.xi`, retraction,
/// new gradient and new Polak-Ribiere direction.
pub fn cg_step<O: ManifoldObjective + ?Sized>(
    obj: &O,
    state: &ManifoldState,
    opts: &CgOptions,
) -> Result<(ManifoldState, StepRecord)> {
    let steepest = -&state.grad;
    let mut dir = state.xi.clone();
    let mut fallback = false;
    if inner(&state.grad, &dir) >= 0.0 {
        dir = steepest.clone();
        fallback = true;
    }
    let found = match armijo_search(obj, state, &dir, opts) {
        Some(hit) => Some(hit),
        None if !fallback => {
            fallback = true;
            armijo_search(obj, state, &steepest, opts)
        }
        None => None,
    };
    let Some((theta, value, step)) = found else {
        return Err(Error::Stagnation(format!(
            "Armijo search failed after {} backtracks at iteration {}",
            opts.max_backtracks, state.iter
        )));
    };
    let record = StepRecord {
        step,
        decrease: state.value - value,
        grad_norm_sq: state.grad.norm_squared(),
        steepest_fallback: fallback,
    };

    let grad = riemannian_gradient(obj, &theta);
    let prev_grad = project_tangent(&theta, &state.grad);
    let prev_dir = project_tangent(&theta, &dir);
    let denom = state.grad.norm_squared();
    let alpha = if denom > 0.0 {
        inner(&grad, &(&grad - &prev_grad)) / denom
    } else {
        0.0
    };
    let iter = state.iter + 1;
    let period = opts.restart_every.unwrap_or(theta.len()).max(1);
    let xi = if alpha <= 0.0 || iter.is_multiple_of(period) {
        -&grad
    } else {
        -&grad + prev_dir * Complex64::from(alpha)
    };
    Ok((
        ManifoldState {
            theta,
            value,
            grad,
            xi,
            step,
            iter,
        },
        record,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaResult {
    pub theta: CVector,
    /// Objective after every accepted iteration, starting with the initial value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub stagnated: bool,
    /// Largest `||θ_q| - 1|` over all iterates.
    pub max_modulus_error: f64,
    /// Largest `|Re(grad ∘ θ*)|` over all iterates.
    pub max_tangent_residual: f64,
    /// Smallest `decrease - ι β ‖grad‖²` over accepted steps.
    pub min_armijo_margin: f64,
}

pub fn optimize_theta<O: ManifoldObjective + ?Sized>(
    obj: &O,
    theta0: &CVector,
    opts: &CgOptions,
) -> Result<ThetaResult> {
    if theta0.iter().any(|t| (t.norm() - 1.0).abs() > 1e-9) {
        return Err(Error::param(
            "theta",
            "initial phases must have unit modulus",
        ));
    }
    let mut state = ManifoldState::new(obj, theta0.clone(), opts);
    let mut trace = vec![state.value];
    let mut stagnated = false;
    let mut max_modulus_error: f64 = 0.0;
    let mut max_tangent_residual = tangent_residual(&state.theta, &state.grad);
    let mut min_armijo_margin = f64::INFINITY;
    while state.grad_norm() >= opts.grad_tol && state.iter < opts.max_iter {
        match cg_step(obj, &state, opts) {
            Ok((next, rec)) => {
                min_armijo_margin =
                    min_armijo_margin.min(rec.decrease - opts.armijo * rec.step * rec.grad_norm_sq);
                state = next;
                trace.push(state.value);
                max_modulus_error = state
                    .theta
                    .iter()
                    .map(|t| (t.norm() - 1.0).abs())
                    .fold(max_modulus_error, f64::max);
                max_tangent_residual =
                    max_tangent_residual.max(tangent_residual(&state.theta, &state.grad));
            }
            Err(Error::Stagnation(_)) => {
                stagnated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ThetaResult {
        grad_norm: state.grad_norm(),
        iterations: state.iter,
        theta: state.theta,
        trace,
        stagnated,
        max_modulus_error,
        max_tangent_residual,
        min_armijo_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channels, ChannelParams};
    use crate::geometry::SceneGeometry;
    use crate::metrics::{PhaseShifts, PowerAllocation, PowerBudget, SystemModel};
    use crate::oam::{ModePlan, OamBasis, PlanParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn model(q_y: usize, q_z: usize) -> SystemModel {
        let g = SceneGeometry {
            q_y,
            q_z,
            ..Default::default()
        };
        let ch = build_channels(&g, &ChannelParams::default()).unwrap();
        let basis = OamBasis::from_scene(&g).unwrap();
        let plan = ModePlan::new(g.n, &PlanParams::default()).unwrap();
        SystemModel::new(ch, basis, plan, Default::default()).unwrap()
    }

    #[test]
    fn tangent_projection_examples() {
        let theta = CVector::from_vec(vec![c(1.0, 0.0), c(0.6, 0.8), c(0.0, -1.0)]);
        let jt = &theta * c(0.0, 1.0);
        assert!((project_tangent(&theta, &jt) - &jt).norm() < 1e-15);
        assert!(project_tangent(&theta, &theta).norm() < 1e-15);
        let v = CVector::from_vec(vec![c(0.3, -2.0), c(1.5, 0.2), c(-0.7, 0.9)]);
        let once = project_tangent(&theta, &v);
        assert!((project_tangent(&theta, &once) - &once).norm() < 1e-12);
        assert!(tangent_residual(&theta, &once) < 1e-15);
    }

    #[test]
    fn retraction_normalizes() {
        let v = CVector::from_vec(vec![c(2.0, 0.0), c(0.0, 3.0)]);
        let r = retract(&v);
        assert_eq!(r[0], c(1.0, 0.0));
        assert_eq!(r[1], c(0.0, 1.0));
        let theta = PhaseShifts::from_angles(&[0.3, -1.2, 2.5]).0;
        assert!((retract(&theta) - &theta).norm() < 1e-15);
    }

    #[test]
    fn gradient_vanishes_without_ris_paths() {
        let m = model(3, 3);
        let mut lin = m.linearize();
        for row in lin.mu.iter_mut().chain(lin.eta.iter_mut()) {
            for v in row.iter_mut() {
                v.fill(c(0.0, 0.0));
            }
        }
        let p = [0.3, 0.3, 0.3];
        let obj = SecrecyObjective {
            lin: &lin,
            p: &p,
            sigma_zz: 0.1 / 3.0,
            noise: m.noise,
        };
        let theta = PhaseShifts::from_angles(&[0.1; 9]).0;
        assert_eq!(obj.euclidean_gradient(&theta).norm(), 0.0);
    }

    #[test]
    fn objective_matches_matrix_route() {
        let m = model(4, 2);
        let lin = m.linearize();
        let pw = PowerAllocation::equal(PowerBudget::new(1.0, 0.9, None, 3).unwrap(), &m.plan)
            .with_powers(vec![0.5, 0.3, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let theta = PhaseShifts::random(m.q(), &mut rng);
        let obj = SecrecyObjective {
            lin: &lin,
            p: &pw.p,
            sigma_zz: pw.sigma_zz,
            noise: m.noise,
        };
        let r = m.evaluate(&pw, &theta).unwrap().rates;
        assert!((obj.value(&theta.0) + r.r_b_tilde - r.r_e).abs() < 1e-10);
    }

    /// Single Bob quotient: f = -log2(1 + p|ω + θ*μ|²/σ²) + const, whose
    /// gradient is -(2/ln2) p μ conj(ω + θ*μ) / (σ² + p|ω + θ*μ|²).
    #[test]
    fn scalar_symbolic_gradient() {
        let omega = c(0.4, -0.2);
        let mu = c(-0.3, 0.5);
        let lin = RisLinearization {
            omega: vec![vec![omega]],
            mu: vec![vec![CVector::from_element(1, mu)]],
            zeta: vec![vec![c(0.2, 0.1)]],
            eta: vec![vec![CVector::zeros(1)]],
            n_signal: 1,
            q: 1,
        };
        let p = [0.7];
        let noise = NoiseConfig {
            sigma_b2: 0.05,
            sigma_e2: 0.02,
        };
        let obj = SecrecyObjective {
            lin: &lin,
            p: &p,
            sigma_zz: 0.0,
            noise,
        };
        for ang in [0.0, 1.0, 2.5, -2.0] {
            let theta = Complex64::from_polar(1.0, ang);
            let cc = omega + theta.conj() * mu;
            let want = -(2.0 / LN_2) * 0.7 * mu * cc.conj() / (0.05 + 0.7 * cc.norm_sqr());
            let got = obj.euclidean_gradient(&CVector::from_element(1, theta))[0];
            assert!((got - want).norm() < 1e-13 * want.norm());
        }
    }

    fn random_lin(rng: &mut ChaCha8Rng, q: usize) -> RisLinearization {
        let mut cplx = || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let mut block = |cols: usize| -> (Vec<Vec<Complex64>>, Vec<Vec<CVector>>) {
            let base = (0..2)
                .map(|_| (0..cols).map(|_| cplx()).collect())
                .collect();
            let lin = (0..2)
                .map(|_| {
                    (0..cols)
                        .map(|_| CVector::from_fn(q, |_, _| cplx() * 0.6))
                        .collect()
                })
                .collect();
            (base, lin)
        };
        let (omega, mu) = block(2);
        let (zeta, eta) = block(3);
        RisLinearization {
            omega,
            mu,
            zeta,
            eta,
            n_signal: 2,
            q,
        }
    }

    #[test]
    fn q2_matches_phase_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let noise = NoiseConfig {
            sigma_b2: 0.1,
            sigma_e2: 0.1,
        };
        let p = [0.6, 0.3];
        for _ in 0..3 {
            let lin = random_lin(&mut rng, 2);
            let obj = SecrecyObjective {
                lin: &lin,
                p: &p,
                sigma_zz: 0.2,
                noise,
            };
            let steps = 2000;
            let h = std::f64::consts::TAU / steps as f64;
            let mut best_grid = f64::INFINITY;
            for i in 0..steps {
                for j in 0..steps {
                    let th = PhaseShifts::from_angles(&[i as f64 * h, j as f64 * h]).0;
                    best_grid = best_grid.min(obj.value(&th));
                }
            }
            let mut best = f64::INFINITY;
            for _ in 0..8 {
                let t0 = PhaseShifts::random(2, &mut rng).0;
                let res = optimize_theta(&obj, &t0, &CgOptions::default()).unwrap();
                best = best.min(*res.trace.last().unwrap());
            }
            assert!(best <= best_grid + 1e-3, "cg {best} grid {best_grid}");
        }
    }

    #[test]
    fn trace_is_nonincreasing_and_on_manifold() {
        let m = model(4, 4);
        let lin = m.linearize();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let p: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..0.3)).collect();
            let obj = SecrecyObjective {
                lin: &lin,
                p: &p,
                sigma_zz: 0.1 / 3.0,
                noise: m.noise,
            };
            let t0 = PhaseShifts::random(m.q(), &mut rng).0;
            let res = optimize_theta(&obj, &t0, &CgOptions::default()).unwrap();
            for w in res.trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-10);
            }
            assert!(res.max_modulus_error < 1e-12);
            assert!(res.max_tangent_residual < 1e-9);
            assert!(res.min_armijo_margin >= 0.0);
        }
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let lin = RisLinearization {
            omega: vec![vec![c(1.0, 0.0)]],
            mu: vec![vec![CVector::zeros(3)]],
            zeta: vec![vec![c(0.5, 0.0)]],
            eta: vec![vec![CVector::zeros(3)]],
            n_signal: 1,
            q: 3,
        };
        let p = [1.0];
        let obj = SecrecyObjective {
            lin: &lin,
            p: &p,
            sigma_zz: 0.0,
            noise: NoiseConfig::default(),
        };
        let t0 = PhaseShifts::ones(3).0;
        let res = optimize_theta(&obj, &t0, &CgOptions::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.theta, t0);
        assert_eq!(res.trace.len(), 1);
    }

    #[test]
    fn first_direction_is_steepest_descent() {
        let m = model(3, 3);
        let lin = m.linearize();
        let p = [0.3, 0.3, 0.3];
        let obj = SecrecyObjective {
            lin: &lin,
            p: &p,
            sigma_zz: 0.1 / 3.0,
            noise: m.noise,
        };
        let st = ManifoldState::new(&obj, PhaseShifts::ones(9).0, &CgOptions::default());
        assert_eq!(st.xi, -&st.grad);
        let zero_step = retract(&(&st.theta + &st.xi * c(0.0, 0.0)));
        assert_eq!(zero_step, st.theta);
    }

    #[test]
    fn rejects_off_manifold_start() {
        let m = model(2, 1);
        let lin = m.linearize();
        let p = [0.3, 0.3, 0.3];
        let obj = SecrecyObjective {
            lin: &lin,
            p: &p,
            sigma_zz: 0.0,
            noise: m.noise,
        };
        let t0 = CVector::from_element(2, c(2.0, 0.0));
        assert!(optimize_theta(&obj, &t0, &CgOptions::default()).is_err());
    }
}
