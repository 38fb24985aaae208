//! Symbol-level Monte Carlo BER of QPSK over the OAM link.
//!
//! Bob decomposes the received vector with the DFT, removes the known AN,
//! compensates each mode by its direct gain and slices. Eve has no knowledge of
//! the OAM basis: she applies a linear MIMO equalizer to her antenna-domain
//! channel, treats each antenna-domain stream as a symbol stream and is scored
//! on the stream whose index matches the mode label.
//!
//! Trials run in fixed-size chunks, each with its own ChaCha stream derived
//! from the master seed, so results do not depend on the thread count.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::channel::CMatrix;
use crate::error::{Error, Result};
use crate::metrics::{PhaseShifts, PowerAllocation, SystemModel};
use crate::oam::CVector;

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EveReceiver {
    Lmmse,
    Zf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    /// Channel uses per SNR point.
    pub trials: usize,
    pub snr_grid_db: Vec<f64>,
    pub seed: u64,
    pub eve_receiver: EveReceiver,
    pub include_an: bool,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            trials: 100_000,
            snr_grid_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            seed: 1,
            eve_receiver: EveReceiver::Lmmse,
            include_an: true,
        }
    }
}

impl MonteCarloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::param("mc.trials", "must be at least 1"));
        }
        if self.snr_grid_db.is_empty() {
            return Err(Error::param("mc.snr_grid_db", "grid must not be empty"));
        }
        Ok(())
    }
}

/// Bit-error count with a normal-approximation binomial interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BerEstimate {
    pub errors: u64,
    pub bits: u64,
}

impl BerEstimate {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    /// Half-width of the 95% interval.
    pub fn half_width(&self) -> f64 {
        if self.bits == 0 {
            return 0.0;
        }
        let p = self.ber();
        1.96 * (p * (1.0 - p) / self.bits as f64).sqrt()
    }

    pub fn ci(&self) -> (f64, f64) {
        let (p, h) = (self.ber(), self.half_width());
        ((p - h).max(0.0), (p + h).min(1.0))
    }

    fn add(self, other: Self) -> Self {
        Self {
            errors: self.errors + other.errors,
            bits: self.bits + other.bits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerPoint {
    pub snr_db: f64,
    pub bob: BerEstimate,
    pub eve: BerEstimate,
    pub trials: usize,
}

/// Gray-mapped unit-energy QPSK.
pub fn qpsk_modulate(b0: bool, b1: bool) -> Complex64 {
    let re = if b0 { -1.0 } else { 1.0 };
    let im = if b1 { -1.0 } else { 1.0 };
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Minimum-distance QPSK decision.
pub fn qpsk_detect(y: Complex64) -> (bool, bool) {
    (y.re < 0.0, y.im < 0.0)
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// One channel use: signal bits per active mode, the mode-domain signal and AN
/// vectors and the antenna excitation `x = F(s + z)`.
#[derive(Debug, Clone)]
pub struct TransmitSample {
    pub bits: Vec<(bool, bool)>,
    pub s: CVector,
    pub z: CVector,
    pub x: CVector,
}

pub fn sample_transmit<R: Rng + ?Sized>(
    model: &SystemModel,
    power: &PowerAllocation,
    include_an: bool,
    rng: &mut R,
) -> TransmitSample {
    let n = model.basis.n();
    let mut s = CVector::zeros(n);
    let mut z = CVector::zeros(n);
    let mut bits = Vec::with_capacity(model.plan.n_signal());
    for (i, &l) in model.plan.signal_modes.iter().enumerate() {
        let b = (rng.random::<bool>(), rng.random::<bool>());
        s[model.basis.index_of(l).unwrap()] = qpsk_modulate(b.0, b.1) * power.p[i].sqrt();
        bits.push(b);
    }
    for &l in &model.plan.an_modes {
        let sample = complex_gaussian(rng, power.sigma_zz);
        if include_an {
            z[model.basis.index_of(l).unwrap()] = sample;
        }
    }
    let x = &model.basis.f * (&s + &z);
    TransmitSample { bits, s, z, x }
}

fn received_signal_power(g: &CMatrix, model: &SystemModel, power: &PowerAllocation) -> f64 {
    model
        .plan
        .signal_modes
        .iter()
        .zip(&power.p)
        .map(|(&l, &p)| p * (g * model.basis.column(l).unwrap()).norm_squared())
        .sum()
}

fn eve_equalizer(g: &CMatrix, kind: EveReceiver, noise: f64, input_power: f64) -> Result<CMatrix> {
    let n = g.ncols();
    match kind {
        EveReceiver::Zf => g
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Infeasible("Eve's channel is singular; ZF undefined".into())),
        EveReceiver::Lmmse => {
            let gh = g.adjoint();
            let reg = CMatrix::identity(n, n) * Complex64::from(noise / input_power);
            let gram = &gh * g + reg;
            gram.try_inverse()
                .map(|inv| inv * gh)
                .ok_or_else(|| Error::Infeasible("LMMSE Gram matrix is singular".into()))
        }
    }
}

struct Receivers {
    g_b: CMatrix,
    g_e: CMatrix,
    /// `F^H G_B F`, used to cancel the known AN.
    mode_b: CMatrix,
    bob_gain: Vec<Complex64>,
    eve_eq: CMatrix,
    sigma_b2: f64,
    sigma_e2: f64,
    bob_rows: Vec<usize>,
    eve_rows: Vec<usize>,
}

impl Receivers {
    fn run_chunk(
        &self,
        model: &SystemModel,
        power: &PowerAllocation,
        include_an: bool,
        rng: &mut ChaCha8Rng,
        trials: usize,
    ) -> (BerEstimate, BerEstimate) {
        let n = model.basis.n();
        let mut bob = BerEstimate::default();
        let mut eve = BerEstimate::default();
        let fh = model.basis.f.adjoint();
        for _ in 0..trials {
            let tx = sample_transmit(model, power, include_an, rng);
            let n_b = DVector::from_fn(n, |_, _| complex_gaussian(rng, self.sigma_b2));
            let n_e = DVector::from_fn(n, |_, _| complex_gaussian(rng, self.sigma_e2));

            let y_b = &self.g_b * &tx.x + n_b;
            let mut y_tilde = &fh * y_b;
            if include_an {
                y_tilde -= &self.mode_b * &tx.z;
            }
            let y_e = &self.g_e * &tx.x + n_e;
            let x_hat = &self.eve_eq * y_e;

            for (i, &(b0, b1)) in tx.bits.iter().enumerate() {
                let (d0, d1) = qpsk_detect(y_tilde[self.bob_rows[i]] / self.bob_gain[i]);
                bob.errors += (d0 != b0) as u64 + (d1 != b1) as u64;
                let (e0, e1) = qpsk_detect(x_hat[self.eve_rows[i]]);
                eve.errors += (e0 != b0) as u64 + (e1 != b1) as u64;
            }
            bob.bits += 2 * tx.bits.len() as u64;
            eve.bits += 2 * tx.bits.len() as u64;
        }
        (bob, eve)
    }
}

/// BER of Bob and Eve at every grid SNR. The SNR of each receiver is its total
/// received desired-signal power over the total noise power of its array; the
/// noise variances are scaled to hit each grid point.
pub fn simulate_ber(
    model: &SystemModel,
    power: &PowerAllocation,
    theta: &PhaseShifts,
    mc: &MonteCarloConfig,
) -> Result<Vec<BerPoint>> {
    mc.validate()?;
    if theta.len() != model.q() || power.p.len() != model.plan.n_signal() {
        return Err(Error::DimensionMismatch("power or phase vector".into()));
    }
    let n = model.basis.n();
    let g_b = model.effective_bob(theta);
    let g_e = model.effective_eve(theta);
    let p_sig_b = received_signal_power(&g_b, model, power);
    let p_sig_e = received_signal_power(&g_e, model, power);
    let mode_b = model.basis.f.adjoint() * &g_b * &model.basis.f;
    let bob_rows: Vec<usize> = model
        .plan
        .signal_modes
        .iter()
        .map(|&l| model.basis.index_of(l).unwrap())
        .collect();
    let bob_gain: Vec<Complex64> = bob_rows.iter().map(|&r| mode_b[(r, r)]).collect();
    let input_power = power.budget.p_total / n as f64;

    mc.snr_grid_db
        .iter()
        .enumerate()
        .map(|(point, &snr_db)| {
            let snr = 10f64.powf(snr_db / 10.0);
            let sigma_b2 = p_sig_b / (n as f64 * snr);
            let sigma_e2 = p_sig_e / (n as f64 * snr);
            let rx = Receivers {
                g_b: g_b.clone(),
                g_e: g_e.clone(),
                mode_b: mode_b.clone(),
                bob_gain: bob_gain.clone(),
                eve_eq: eve_equalizer(&g_e, mc.eve_receiver, sigma_e2, input_power)?,
                sigma_b2,
                sigma_e2,
                eve_rows: bob_rows.clone(),
                bob_rows: bob_rows.clone(),
            };
            let chunks = mc.trials.div_ceil(CHUNK);
            let (bob, eve) = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
                    rng.set_stream(((point as u64) << 32) | c as u64);
                    let len = CHUNK.min(mc.trials - c * CHUNK);
                    rx.run_chunk(model, power, mc.include_an, &mut rng, len)
                })
                .reduce(
                    || (BerEstimate::default(), BerEstimate::default()),
                    |a, b| (a.0.add(b.0), a.1.add(b.1)),
                );
            Ok(BerPoint {
                snr_db,
                bob,
                eve,
                trials: mc.trials,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channels, ChannelParams};
    use crate::geometry::SceneGeometry;
    use crate::metrics::{NoiseConfig, PowerBudget};
    use crate::oam::{ModePlan, OamBasis, PlanParams};

    fn model(plan: PlanParams) -> SystemModel {
        let g = SceneGeometry {
            q_y: 3,
            q_z: 3,
            ..Default::default()
        };
        let ch = build_channels(&g, &ChannelParams::default()).unwrap();
        let basis = OamBasis::from_scene(&g).unwrap();
        let plan = ModePlan::new(g.n, &plan).unwrap();
        SystemModel::new(ch, basis, plan, NoiseConfig::default()).unwrap()
    }

    #[test]
    fn qpsk_round_trip_and_gray() {
        for b0 in [false, true] {
            for b1 in [false, true] {
                let s = qpsk_modulate(b0, b1);
                assert!((s.norm() - 1.0).abs() < 1e-15);
                assert_eq!(qpsk_detect(s), (b0, b1));
                // rotating by 90 degrees flips exactly one bit
                let (r0, r1) = qpsk_detect(s * Complex64::i());
                assert_eq!((r0 != b0) as u8 + (r1 != b1) as u8, 1);
            }
        }
    }

    #[test]
    fn interval_math() {
        let e = BerEstimate {
            errors: 500,
            bits: 1000,
        };
        assert_eq!(e.ber(), 0.5);
        assert!((e.half_width() - 1.96 * 0.5 / 1000f64.sqrt()).abs() < 1e-15);
        assert_eq!(BerEstimate::default().ber(), 0.0);
    }

    #[test]
    fn random_guessing_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut est = BerEstimate::default();
        for _ in 0..100_000 {
            let truth: bool = rng.random();
            let guess: bool = rng.random();
            est.errors += (truth != guess) as u64;
            est.bits += 1;
        }
        let sigma = (0.25 / est.bits as f64).sqrt();
        assert!((est.ber() - 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn transmit_energy_matches_allocation() {
        let m = model(PlanParams::default());
        let pw = PowerAllocation::equal(PowerBudget::new(1.0, 0.9, None, 3).unwrap(), &m.plan)
            .with_powers(vec![0.5, 0.3, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials = 20_000;
        let mean: f64 = (0..trials)
            .map(|_| sample_transmit(&m, &pw, true, &mut rng).x.norm_squared())
            .sum::<f64>()
            / trials as f64;
        let want = 0.9 + 3.0 * pw.sigma_zz;
        assert!((mean - want).abs() < 0.01 * want, "{mean} vs {want}");
    }

    #[test]
    fn noiseless_single_mode_is_error_free() {
        let m = model(PlanParams {
            n_signal: 1,
            ..Default::default()
        });
        let pw = PowerAllocation::equal(PowerBudget::new(1.0, 1.0, None, 1).unwrap(), &m.plan);
        let mc = MonteCarloConfig {
            trials: 2000,
            snr_grid_db: vec![300.0],
            include_an: false,
            ..Default::default()
        };
        let pts = simulate_ber(&m, &pw, &PhaseShifts::ones(9), &mc).unwrap();
        assert_eq!(pts[0].bob.errors, 0);
        assert_eq!(pts[0].bob.bits, 4000);
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let m = model(PlanParams::default());
        let pw = PowerAllocation::equal(PowerBudget::new(1.0, 0.9, None, 3).unwrap(), &m.plan);
        let mc = MonteCarloConfig {
            trials: 3000,
            snr_grid_db: vec![0.0, 10.0],
            ..Default::default()
        };
        let theta = PhaseShifts::ones(9);
        let a = simulate_ber(&m, &pw, &theta, &mc).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_ber(&m, &pw, &theta, &mc).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_empty_config() {
        let m = model(PlanParams::default());
        let pw = PowerAllocation::equal(PowerBudget::new(1.0, 0.9, None, 3).unwrap(), &m.plan);
        let mc = MonteCarloConfig {
            trials: 0,
            ..Default::default()
        };
        assert!(simulate_ber(&m, &pw, &PhaseShifts::ones(9), &mc).is_err());
    }
}
