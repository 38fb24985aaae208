//! Power allocation for fixed RIS phases.
//!
//! The difference-of-logs objective is minorized with the auxiliary
//! multipliers of `-ln x = max_t (-t x + ln t + 1)`: fixing the multipliers at
//! their closed-form optimum leaves a concave program in the powers, which is
//! solved by projected gradient ascent. Alternating the two updates never
//! decreases the secrecy objective.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::metrics::{PhaseShifts, PowerAllocation, SystemModel};

/// Auxiliary multipliers for Bob's and Eve's log terms.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxMultipliers {
    pub t_b: Vec<f64>,
    pub t_e: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSolverOptions {
    /// Stop the inner ascent when `‖p - P(p + ∇)‖` drops below this.
    pub pg_tol: f64,
    pub max_pg_iter: usize,
    /// Stop alternating when the objective (bits) changes less than this.
    pub outer_tol: f64,
    pub max_rounds: usize,
}

impl Default for PowerSolverOptions {
    fn default() -> Self {
        Self {
            pg_tol: 1e-7,
            max_pg_iter: 100_000,
            outer_tol: 1e-6,
            max_rounds: 100,
        }
    }
}

/// Squared channel magnitudes for one phase configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSubproblem {
    /// `a[l][k] = |a_{l,k}|²` over signal modes.
    pub a: Vec<Vec<f64>>,
    /// `b[l][k] = |b_{l,k}|²` over signal modes.
    pub b: Vec<Vec<f64>>,
    /// AN leakage `σ_z² Σ_z |b_{l,z}|²` per signal row.
    pub c: Vec<f64>,
    pub budget: f64,
    pub floor: f64,
}

fn dot(a: &[f64], p: &[f64]) -> f64 {
    a.iter().zip(p).map(|(x, y)| x * y).sum()
}

/// `a·p` with entry `skip` left out.
fn dot_without(a: &[f64], p: &[f64], skip: usize) -> f64 {
    dot(a, p) - a[skip] * p[skip]
}

impl PowerSubproblem {
    pub fn new(
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<f64>,
        budget: f64,
        floor: f64,
    ) -> Result<Self> {
        let ns = a.len();
        let square = |m: &Vec<Vec<f64>>| m.len() == ns && m.iter().all(|r| r.len() == ns);
        if ns == 0 || !square(&a) || !square(&b) || c.len() != ns {
            return Err(Error::DimensionMismatch("power subproblem blocks".into()));
        }
        if ns as f64 * floor > budget + 1e-12 || floor <= 0.0 {
            return Err(Error::Infeasible(format!(
                "{ns} modes at floor {floor} do not fit budget {budget}"
            )));
        }
        Ok(Self {
            a,
            b,
            c,
            budget,
            floor,
        })
    }

    pub fn from_model(
        model: &SystemModel,
        power: &PowerAllocation,
        theta: &PhaseShifts,
    ) -> Result<Self> {
        let ns = model.plan.n_signal();
        let a: Vec<Vec<f64>> = model
            .bob_gains(theta)
            .iter()
            .map(|r| r.iter().map(|x| x.norm_sqr()).collect())
            .collect();
        let eve = model.eve_gains(theta);
        let b = eve
            .iter()
            .map(|r| r[..ns].iter().map(|x| x.norm_sqr()).collect())
            .collect();
        let c = eve
            .iter()
            .map(|r| power.sigma_zz * r[ns..].iter().map(|x| x.norm_sqr()).sum::<f64>())
            .collect();
        Self::new(a, b, c, power.budget.signal_budget(), power.budget.p_th)
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `ln 2 · (R̃_B - R_E)` at `p`.
    pub fn objective_nats(&self, p: &[f64]) -> f64 {
        (0..self.len())
            .map(|l| {
                let c = self.c[l];
                (1.0 + dot(&self.a[l], p)).ln()
                    - (1.0 + dot_without(&self.a[l], p, l)).ln()
                    - (1.0 + dot(&self.b[l], p) + c).ln()
                    + (1.0 + dot_without(&self.b[l], p, l) + c).ln()
            })
            .sum()
    }

    pub fn objective_bits(&self, p: &[f64]) -> f64 {
        self.objective_nats(p) / LN_2
    }

    pub fn update_multipliers(&self, p: &[f64]) -> AuxMultipliers {
        let n = self.len();
        AuxMultipliers {
            t_b: (0..n)
                .map(|l| 1.0 / (1.0 + dot_without(&self.a[l], p, l)))
                .collect(),
            t_e: (0..n)
                .map(|l| 1.0 / (1.0 + dot(&self.b[l], p) + self.c[l]))
                .collect(),
        }
    }

    pub fn phi_b(&self, l: usize, p: &[f64], t: f64) -> f64 {
        (1.0 + dot(&self.a[l], p)).ln() - t * (1.0 + dot_without(&self.a[l], p, l)) + t.ln() + 1.0
    }

    pub fn phi_e(&self, l: usize, p: &[f64], t: f64) -> f64 {
        let c = self.c[l];
        t * (1.0 + dot(&self.b[l], p) + c)
            - (1.0 + dot_without(&self.b[l], p, l) + c).ln()
            - t.ln()
            - 1.0
    }

    /// Concave surrogate maximized in the power step.
    pub fn surrogate(&self, p: &[f64], t: &AuxMultipliers) -> f64 {
        (0..self.len())
            .map(|l| self.phi_b(l, p, t.t_b[l]) - self.phi_e(l, p, t.t_e[l]))
            .sum()
    }

    pub fn surrogate_gradient(&self, p: &[f64], t: &AuxMultipliers) -> Vec<f64> {
        let n = self.len();
        let mut g = vec![0.0; n];
        for l in 0..n {
            let sb = 1.0 / (1.0 + dot(&self.a[l], p));
            let se = 1.0 / (1.0 + dot_without(&self.b[l], p, l) + self.c[l]);
            for k in 0..n {
                let a_minus = if k == l { 0.0 } else { self.a[l][k] };
                let b_minus = if k == l { 0.0 } else { self.b[l][k] };
                g[k] +=
                    self.a[l][k] * sb - t.t_b[l] * a_minus - t.t_e[l] * self.b[l][k] + b_minus * se;
            }
        }
        g
    }

    /// Euclidean projection onto `{Σp ≤ budget, p ≥ floor}`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        project_capped_simplex(v, self.budget, self.floor)
    }

    /// `‖p - P(p + ∇)‖` for the surrogate.
    pub fn projected_gradient_norm(&self, p: &[f64], t: &AuxMultipliers) -> f64 {
        let g = self.surrogate_gradient(p, t);
        let moved: Vec<f64> = p.iter().zip(&g).map(|(x, d)| x + d).collect();
        let proj = self.project(&moved);
        p.iter()
            .zip(&proj)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Maximizes the surrogate by projected gradient ascent with
    /// Barzilai-Borwein trial steps and Armijo backtracking, starting at `start`.
    pub fn solve_p4(
        &self,
        t: &AuxMultipliers,
        start: &[f64],
        opts: &PowerSolverOptions,
    ) -> Result<Vec<f64>> {
        if start.len() != self.len() {
            return Err(Error::DimensionMismatch("start point length".into()));
        }
        let mut p = self.project(start);
        let mut val = self.surrogate(&p, t);
        let mut grad = self.surrogate_gradient(&p, t);
        let mut step = 1.0;
        for _ in 0..opts.max_pg_iter {
            if self.projected_gradient_norm(&p, t) < opts.pg_tol {
                break;
            }
            let mut trial = step;
            let (cand, cand_val) = loop {
                let moved: Vec<f64> = p.iter().zip(&grad).map(|(x, d)| x + trial * d).collect();
                let cand = self.project(&moved);
                let cand_val = self.surrogate(&cand, t);
                let ascent: f64 = grad
                    .iter()
                    .zip(cand.iter().zip(&p))
                    .map(|(g, (c, x))| g * (c - x))
                    .sum();
                if cand_val >= val + 1e-4 * ascent {
                    break (cand, cand_val);
                }
                trial *= 0.5;
                if trial < 1e-18 {
                    return Ok(p);
                }
            };
            let new_grad = self.surrogate_gradient(&cand, t);
            let s: Vec<f64> = cand.iter().zip(&p).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| b - a).collect();
            let sy = dot(&s, &y);
            step = if sy > 0.0 {
                (dot(&s, &s) / sy).clamp(1e-12, 1e12)
            } else {
                (trial * 2.0).min(1e12)
            };
            p = cand;
            val = cand_val;
            grad = new_grad;
        }
        Ok(p)
    }

    /// Alternates multiplier updates and power solves from `p0`.
    /// Returns the final powers and the objective trace in bits.
    pub fn optimize_power(
        &self,
        p0: &[f64],
        opts: &PowerSolverOptions,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut p = self.project(p0);
        let mut trace = vec![self.objective_bits(&p)];
        for _ in 0..opts.max_rounds {
            let t = self.update_multipliers(&p);
            p = self.solve_p4(&t, &p, opts)?;
            let obj = self.objective_bits(&p);
            let prev = *trace.last().unwrap();
            trace.push(obj);
            if (obj - prev).abs() < opts.outer_tol {
                break;
            }
        }
        Ok((p, trace))
    }
}

/// Projection onto `{x : Σx ≤ cap, x ≥ floor}` by bisection on the shift.
pub fn project_capped_simplex(v: &[f64], cap: f64, floor: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|&x| x.max(floor)).collect();
    if clipped.iter().sum::<f64>() <= cap {
        return clipped;
    }
    let total = |tau: f64| v.iter().map(|&x| (x - tau).max(floor)).sum::<f64>();
    let mut lo = 0.0;
    let mut hi = v.iter().fold(f64::MIN, |m, &x| m.max(x)) - floor;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    v.iter().map(|&x| (x - hi).max(floor)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> PowerSubproblem {
        crate::checks::random_p4_instance(rng, n)
    }

    #[test]
    fn lemma_identity() {
        for x in [0.1, 1.0, 10.0] {
            let phi = |t: f64| -t * x + t.ln() + 1.0;
            let best = phi(1.0 / x);
            assert!((best + f64::ln(x)).abs() < 1e-14);
            for i in 1..2000 {
                let t = i as f64 * 0.01 / x;
                assert!(phi(t) <= best + 1e-15);
            }
        }
    }

    #[test]
    fn multiplier_examples() {
        let sub = PowerSubproblem::new(
            vec![vec![5.0, 1.0], vec![2.0, 4.0]],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0],
            1.0,
            0.01,
        )
        .unwrap();
        // a_{-0}·p = 1 * p1
        let t = sub.update_multipliers(&[0.5, 0.0]);
        assert_eq!(t.t_b[0], 1.0);
        let t = sub.update_multipliers(&[0.5, 3.0]);
        assert_eq!(t.t_b[0], 0.25);
        // multipliers are local maximizers of φ_B
        let p = [0.3, 0.4];
        let t = sub.update_multipliers(&p);
        for l in 0..2 {
            let base = sub.phi_b(l, &p, t.t_b[l]);
            assert!(sub.phi_b(l, &p, t.t_b[l] + 0.01) < base);
            assert!(sub.phi_b(l, &p, t.t_b[l] - 0.01) < base);
            let base = sub.phi_e(l, &p, t.t_e[l]);
            assert!(sub.phi_e(l, &p, t.t_e[l] + 0.01) > base);
            assert!(sub.phi_e(l, &p, t.t_e[l] - 0.01) > base);
        }
    }

    #[test]
    fn surrogate_is_tight_at_multiplier_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let sub = random_instance(&mut rng, 3);
            let p = sub.project(&[0.2, 0.3, 0.1]);
            let t = sub.update_multipliers(&p);
            let lhs = sub.surrogate(&p, &t);
            assert!((lhs - sub.objective_nats(&p)).abs() < 1e-9);
            // minorizer elsewhere
            let q = sub.project(&[0.5, 0.01, 0.2]);
            assert!(sub.surrogate(&q, &t) <= sub.objective_nats(&q) + 1e-12);
        }
    }

    #[test]
    fn surrogate_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sub = random_instance(&mut rng, 4);
        let p = vec![0.1, 0.2, 0.15, 0.3];
        let t = sub.update_multipliers(&[0.2, 0.1, 0.1, 0.1]);
        let g = sub.surrogate_gradient(&p, &t);
        for k in 0..4 {
            let h = 1e-6;
            let mut up = p.clone();
            let mut dn = p.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (sub.surrogate(&up, &t) - sub.surrogate(&dn, &t)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * g[k].abs().max(1.0));
        }
    }

    #[test]
    fn projection_feasible_and_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let v: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..2.0)).collect();
            let p = project_capped_simplex(&v, 1.0, 0.01);
            assert!(p.iter().sum::<f64>() <= 1.0 + 1e-9);
            assert!(p.iter().all(|&x| x >= 0.01));
            let again = project_capped_simplex(&p, 1.0, 0.01);
            for (a, b) in p.iter().zip(&again) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert_eq!(
            project_capped_simplex(&[0.2, 0.3], 1.0, 0.1),
            vec![0.2, 0.3]
        );
    }

    #[test]
    fn symmetric_instance_splits_evenly() {
        let sub = PowerSubproblem::new(
            vec![vec![4.0, 0.5], vec![0.5, 4.0]],
            vec![vec![0.3, 0.2], vec![0.2, 0.3]],
            vec![0.1, 0.1],
            0.9,
            1e-3,
        )
        .unwrap();
        let opts = PowerSolverOptions::default();
        let t = sub.update_multipliers(&[0.2, 0.2]);
        let p = sub.solve_p4(&t, &[0.1, 0.7], &opts).unwrap();
        assert!(
            (p[0] - 0.45).abs() < 1e-7 && (p[1] - 0.45).abs() < 1e-7,
            "{p:?}"
        );
        assert!(sub.projected_gradient_norm(&p, &t) < 1e-7);
        let (p, _) = sub.optimize_power(&[0.2, 0.2], &opts).unwrap();
        assert!(
            (p[0] - 0.45).abs() < 1e-9 && (p[1] - 0.45).abs() < 1e-9,
            "{p:?}"
        );
    }

    #[test]
    fn single_mode_uses_full_budget() {
        let sub =
            PowerSubproblem::new(vec![vec![3.0]], vec![vec![0.5]], vec![0.2], 0.9, 1e-3).unwrap();
        // net slope 3/(1+3p) - 0.5/(1.2+0.5p) > 0 on the whole interval
        let (p, _) = sub
            .optimize_power(&[0.1], &PowerSolverOptions::default())
            .unwrap();
        assert!((p[0] - 0.9).abs() < 1e-9);
    }

    #[test]
    fn outer_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let sub = random_instance(&mut rng, 3);
            let (p, trace) = sub
                .optimize_power(&[0.3, 0.3, 0.3], &PowerSolverOptions::default())
                .unwrap();
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "{trace:?}");
            }
            assert!(p.iter().sum::<f64>() <= 0.9 + 1e-9);
            assert!(p.iter().all(|&x| x >= 3e-4 - 1e-9));
        }
    }

    #[test]
    fn infeasible_floor_rejected() {
        let r = PowerSubproblem::new(
            vec![vec![1.0; 2]; 2],
            vec![vec![1.0; 2]; 2],
            vec![0.0; 2],
            0.1,
            0.1,
        );
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }
}
