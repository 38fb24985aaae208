//! SINRs, achievable rates and the secrecy rate.
//!
//! Two independent evaluation routes are provided. The matrix route builds the
//! effective channels `H_AB + H_RB Θ H_AR` and `H_AE + H_RE Θ H_AR` explicitly
//! and normalizes by the noise standard deviation. The linearized route
//! precomputes `ω, μ, ζ, η` once per channel realization so that every channel
//! coefficient becomes an affine function `ω + θᴴμ` of the phase vector; the
//! phase optimizer works exclusively on this form.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::channel::{CMatrix, ChannelSet};
use crate::error::{Error, Result};
use crate::oam::{CVector, ModePlan, OamBasis};

pub fn dbm_to_watt(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub sigma_b2: f64,
    pub sigma_e2: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma_b2: dbm_to_watt(-20.0),
            sigma_e2: dbm_to_watt(-20.0),
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_b2 > 0.0 && self.sigma_e2 > 0.0) {
            return Err(Error::param(
                "noise.sigma_b/sigma_e",
                "variances must be positive",
            ));
        }
        Ok(())
    }
}

/// Total power, signal fraction and per-mode floor, all in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBudget {
    pub p_total: f64,
    pub rho: f64,
    pub p_th: f64,
}

impl PowerBudget {
    /// Floor defaults to `1e-3 * ρP_T / N_s`.
    pub fn new(p_total: f64, rho: f64, p_th: Option<f64>, n_signal: usize) -> Result<Self> {
        if !(p_total > 0.0 && p_total.is_finite()) {
            return Err(Error::param(
                "power.total_dbm",
                "total power must be positive",
            ));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::param("power.rho", "must lie in (0, 1]"));
        }
        let p_th = p_th.unwrap_or(1e-3 * rho * p_total / n_signal as f64);
        if !(p_th > 0.0) {
            return Err(Error::param("power.p_th", "must be positive"));
        }
        if n_signal as f64 * p_th > rho * p_total {
            return Err(Error::Infeasible(format!(
                "{n_signal} modes at floor {p_th} W exceed budget {} W",
                rho * p_total
            )));
        }
        Ok(Self { p_total, rho, p_th })
    }

    pub fn signal_budget(&self) -> f64 {
        self.rho * self.p_total
    }

    /// Per-mode AN variance `(1-ρ)P_T / N_z`; zero without AN modes.
    pub fn an_variance(&self, n_an: usize) -> f64 {
        if n_an == 0 {
            0.0
        } else {
            (1.0 - self.rho) * self.p_total / n_an as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    /// Power per signal mode, aligned with `ModePlan::signal_modes`.
    pub p: Vec<f64>,
    pub budget: PowerBudget,
    pub sigma_zz: f64,
}

impl PowerAllocation {
    pub fn new(p: Vec<f64>, budget: PowerBudget, n_an: usize) -> Result<Self> {
        let total: f64 = p.iter().sum();
        if total > budget.signal_budget() + 1e-9 {
            return Err(Error::Infeasible(format!(
                "allocated {total} W exceeds budget {} W",
                budget.signal_budget()
            )));
        }
        if p.iter().any(|&x| x < budget.p_th - 1e-12) {
            return Err(Error::Infeasible("power below floor".into()));
        }
        Ok(Self {
            p,
            budget,
            sigma_zz: budget.an_variance(n_an),
        })
    }

    pub fn equal(budget: PowerBudget, plan: &ModePlan) -> Self {
        let ns = plan.n_signal();
        Self {
            p: vec![budget.signal_budget() / ns as f64; ns],
            budget,
            sigma_zz: budget.an_variance(plan.n_an()),
        }
    }

    /// Same allocation with every signal power replaced.
    pub fn with_powers(&self, p: Vec<f64>) -> Self {
        Self { p, ..self.clone() }
    }
}

/// Unit-modulus RIS phase vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShifts(pub CVector);

impl PhaseShifts {
    pub fn ones(q: usize) -> Self {
        Self(CVector::from_element(q, Complex64::new(1.0, 0.0)))
    }

    pub fn random<R: Rng + ?Sized>(q: usize, rng: &mut R) -> Self {
        Self(CVector::from_fn(q, |_, _| {
            Complex64::from_polar(1.0, rng.random::<f64>() * TAU)
        }))
    }

    pub fn from_angles(angles: &[f64]) -> Self {
        Self(CVector::from_iterator(
            angles.len(),
            angles.iter().map(|&a| Complex64::from_polar(1.0, a)),
        ))
    }

    pub fn new(theta: CVector) -> Result<Self> {
        if theta.iter().any(|t| (t.norm() - 1.0).abs() > 1e-9) {
            return Err(Error::param("theta", "entries must have unit modulus"));
        }
        Ok(Self(theta))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_modulus_error(&self) -> f64 {
        self.0
            .iter()
            .map(|t| (t.norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// `θᴴv` without allocating.
pub fn herm_dot(theta: &CVector, v: &CVector) -> Complex64 {
    theta.iter().zip(v.iter()).map(|(t, x)| t.conj() * x).sum()
}

fn scaled_diag_product(left: &CMatrix, theta: &CVector, right: &CMatrix) -> CMatrix {
    // left * diag(conj θ) * right
    let mut scaled = right.clone();
    for (q, mut row) in scaled.row_iter_mut().enumerate() {
        row *= theta[q].conj();
    }
    left * scaled
}

/// Channels, basis, mode plan and receiver noise of one scenario.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub channels: ChannelSet,
    pub basis: OamBasis,
    pub plan: ModePlan,
    pub noise: NoiseConfig,
}

impl SystemModel {
    pub fn new(
        channels: ChannelSet,
        basis: OamBasis,
        plan: ModePlan,
        noise: NoiseConfig,
    ) -> Result<Self> {
        channels.check_dims()?;
        noise.validate()?;
        if channels.n() != basis.n() || plan.n != basis.n() {
            return Err(Error::DimensionMismatch(format!(
                "channels have N = {}, basis N = {}, plan N = {}",
                channels.n(),
                basis.n(),
                plan.n
            )));
        }
        Ok(Self {
            channels,
            basis,
            plan,
            noise,
        })
    }

    pub fn q(&self) -> usize {
        self.channels.q()
    }

    fn check(&self, power: &PowerAllocation, theta: &PhaseShifts) -> Result<()> {
        if power.p.len() != self.plan.n_signal() {
            return Err(Error::DimensionMismatch(format!(
                "{} powers for {} signal modes",
                power.p.len(),
                self.plan.n_signal()
            )));
        }
        if theta.len() != self.q() {
            return Err(Error::DimensionMismatch(format!(
                "{} phases for {} RIS elements",
                theta.len(),
                self.q()
            )));
        }
        Ok(())
    }

    /// `H_AB + H_RB Θ H_AR` with `Θ = diag(θᴴ)`.
    pub fn effective_bob(&self, theta: &PhaseShifts) -> CMatrix {
        &self.channels.ab + scaled_diag_product(&self.channels.rb, &theta.0, &self.channels.ar)
    }

    pub fn effective_eve(&self, theta: &PhaseShifts) -> CMatrix {
        &self.channels.ae + scaled_diag_product(&self.channels.re, &theta.0, &self.channels.ar)
    }

    fn columns(&self, modes: &[i32]) -> Vec<CVector> {
        modes
            .iter()
            .map(|&l| self.basis.column(l).unwrap())
            .collect()
    }

    /// Noise-normalized post-DFT gains `a[l][k]` over the signal modes.
    pub fn bob_gains(&self, theta: &PhaseShifts) -> Vec<Vec<Complex64>> {
        let g = self.effective_bob(theta);
        let cols = self.columns(&self.plan.signal_modes);
        let scale = 1.0 / self.noise.sigma_b2.sqrt();
        cols.iter()
            .map(|fl| {
                let row = fl.adjoint() * &g;
                cols.iter().map(|fk| (&row * fk)[(0, 0)] * scale).collect()
            })
            .collect()
    }

    /// Noise-normalized Eve gains: row `l` of the effective antenna-domain
    /// channel against `f_k` for every signal mode, then every AN mode.
    pub fn eve_gains(&self, theta: &PhaseShifts) -> Vec<Vec<Complex64>> {
        let g = self.effective_eve(theta);
        let mut modes = self.plan.signal_modes.clone();
        modes.extend(self.plan.an_modes.iter().copied());
        let cols = self.columns(&modes);
        let scale = 1.0 / self.noise.sigma_e2.sqrt();
        self.plan
            .signal_modes
            .iter()
            .map(|&l| {
                let row = g.row(self.basis.index_of(l).unwrap());
                cols.iter().map(|fk| (row * fk)[(0, 0)] * scale).collect()
            })
            .collect()
    }

    pub fn sinr_bob(&self, power: &PowerAllocation, theta: &PhaseShifts) -> Result<Vec<f64>> {
        self.check(power, theta)?;
        let a = self.bob_gains(theta);
        Ok(sinr_from_gains(&a, &power.p, 0, 0.0))
    }

    pub fn sinr_eve(&self, power: &PowerAllocation, theta: &PhaseShifts) -> Result<Vec<f64>> {
        self.check(power, theta)?;
        let b = self.eve_gains(theta);
        Ok(sinr_from_gains(
            &b,
            &power.p,
            self.plan.n_signal(),
            power.sigma_zz,
        ))
    }

    pub fn evaluate(&self, power: &PowerAllocation, theta: &PhaseShifts) -> Result<Evaluation> {
        let gamma_b = self.sinr_bob(power, theta)?;
        let gamma_e = self.sinr_eve(power, theta)?;
        let rates = Rates::new(&gamma_b, &gamma_e, self.plan.k);
        Ok(Evaluation {
            gamma_b,
            gamma_e,
            rates,
        })
    }

    pub fn linearize(&self) -> RisLinearization {
        RisLinearization::new(self)
    }
}

/// Per-row SINR from normalized gains. Columns `0..n_sig` are signal modes
/// (all of them when `n_sig == 0`), the remaining columns are AN modes
/// weighted by `sigma_zz`.
fn sinr_from_gains(g: &[Vec<Complex64>], p: &[f64], n_sig: usize, sigma_zz: f64) -> Vec<f64> {
    let ns = if n_sig == 0 { p.len() } else { n_sig };
    g.iter()
        .enumerate()
        .map(|(i, row)| {
            let interference: f64 = (0..ns)
                .filter(|&k| k != i)
                .map(|k| p[k] * row[k].norm_sqr())
                .sum();
            let an: f64 = row[ns..].iter().map(|b| b.norm_sqr()).sum::<f64>() * sigma_zz;
            p[i] * row[i].norm_sqr() / (interference + an + 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// Signal information at Bob, bits.
    pub r_b_tilde: f64,
    /// Signal plus index information at Bob.
    pub r_b: f64,
    pub r_e: f64,
    pub sr: f64,
    pub sr_clamped: f64,
}

impl Rates {
    pub fn new(gamma_b: &[f64], gamma_e: &[f64], k: u128) -> Self {
        let r_b_tilde: f64 = gamma_b.iter().map(|g| (1.0 + g).log2()).sum();
        let r_e: f64 = gamma_e.iter().map(|g| (1.0 + g).log2()).sum();
        let r_b = r_b_tilde + (k as f64).log2();
        let sr = r_b - r_e;
        Self {
            r_b_tilde,
            r_b,
            r_e,
            sr,
            sr_clamped: sr.max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub gamma_b: Vec<f64>,
    pub gamma_e: Vec<f64>,
    pub rates: Rates,
}

/// Affine-in-θ decomposition of every Bob and Eve coefficient.
///
/// Rows are indexed by signal mode; Bob columns by signal mode, Eve columns by
/// signal mode followed by AN mode. Coefficients are not noise-normalized.
#[derive(Debug, Clone)]
pub struct RisLinearization {
    pub omega: Vec<Vec<Complex64>>,
    pub mu: Vec<Vec<CVector>>,
    pub zeta: Vec<Vec<Complex64>>,
    pub eta: Vec<Vec<CVector>>,
    pub n_signal: usize,
    pub q: usize,
}

impl RisLinearization {
    pub fn new(model: &SystemModel) -> Self {
        let ch = &model.channels;
        let plan = &model.plan;
        let sig = model.columns(&plan.signal_modes);
        let mut eve_modes = plan.signal_modes.clone();
        eve_modes.extend(plan.an_modes.iter().copied());
        let eve_cols = model.columns(&eve_modes);
        // H_AR f_k for each needed column
        let ar_sig: Vec<CVector> = sig.iter().map(|f| &ch.ar * f).collect();
        let ar_eve: Vec<CVector> = eve_cols.iter().map(|f| &ch.ar * f).collect();

        let mut omega = Vec::new();
        let mut mu = Vec::new();
        for fl in &sig {
            let ab_row = fl.adjoint() * &ch.ab;
            let rb_row = fl.adjoint() * &ch.rb;
            omega.push(sig.iter().map(|fk| (&ab_row * fk)[(0, 0)]).collect());
            mu.push(
                ar_sig
                    .iter()
                    .map(|h| CVector::from_fn(h.len(), |q, _| rb_row[(0, q)] * h[q]))
                    .collect(),
            );
        }

        let mut zeta = Vec::new();
        let mut eta = Vec::new();
        for &l in &plan.signal_modes {
            let r = model.basis.index_of(l).unwrap();
            let ae_row = ch.ae.row(r);
            let re_row = ch.re.row(r);
            zeta.push(eve_cols.iter().map(|fk| (ae_row * fk)[(0, 0)]).collect());
            eta.push(
                ar_eve
                    .iter()
                    .map(|h| CVector::from_fn(h.len(), |q, _| re_row[q] * h[q]))
                    .collect(),
            );
        }
        Self {
            omega,
            mu,
            zeta,
            eta,
            n_signal: plan.n_signal(),
            q: ch.q(),
        }
    }

    /// `|ω + θᴴμ|²` for every Bob pair.
    pub fn bob_power_gains(&self, theta: &CVector) -> Vec<Vec<f64>> {
        pair_gains(&self.omega, &self.mu, theta)
    }

    pub fn eve_power_gains(&self, theta: &CVector) -> Vec<Vec<f64>> {
        pair_gains(&self.zeta, &self.eta, theta)
    }

    pub fn bob_coefficients(&self, theta: &CVector) -> Vec<Vec<Complex64>> {
        pair_coefficients(&self.omega, &self.mu, theta)
    }

    pub fn eve_coefficients(&self, theta: &CVector) -> Vec<Vec<Complex64>> {
        pair_coefficients(&self.zeta, &self.eta, theta)
    }

    /// Bob SINRs with explicit `σ_B²` in the denominator.
    pub fn sinr_bob(&self, p: &[f64], noise: &NoiseConfig, theta: &CVector) -> Vec<f64> {
        let g = self.bob_power_gains(theta);
        (0..self.n_signal)
            .map(|i| {
                let interference: f64 = (0..self.n_signal)
                    .filter(|&k| k != i)
                    .map(|k| p[k] * g[i][k])
                    .sum();
                p[i] * g[i][i] / (interference + noise.sigma_b2)
            })
            .collect()
    }

    pub fn sinr_eve(
        &self,
        p: &[f64],
        sigma_zz: f64,
        noise: &NoiseConfig,
        theta: &CVector,
    ) -> Vec<f64> {
        let g = self.eve_power_gains(theta);
        let ns = self.n_signal;
        (0..ns)
            .map(|i| {
                let interference: f64 = (0..ns).filter(|&k| k != i).map(|k| p[k] * g[i][k]).sum();
                let an: f64 = sigma_zz * g[i][ns..].iter().sum::<f64>();
                p[i] * g[i][i] / (interference + an + noise.sigma_e2)
            })
            .collect()
    }
}

fn pair_coefficients(
    base: &[Vec<Complex64>],
    lin: &[Vec<CVector>],
    theta: &CVector,
) -> Vec<Vec<Complex64>> {
    base.iter()
        .zip(lin)
        .map(|(b_row, l_row)| {
            b_row
                .iter()
                .zip(l_row)
                .map(|(b, v)| b + herm_dot(theta, v))
                .collect()
        })
        .collect()
}

fn pair_gains(base: &[Vec<Complex64>], lin: &[Vec<CVector>], theta: &CVector) -> Vec<Vec<f64>> {
    pair_coefficients(base, lin, theta)
        .into_iter()
        .map(|row| row.into_iter().map(|c| c.norm_sqr()).collect())
        .collect()
}
