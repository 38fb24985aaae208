//! Alternating optimization of the power allocation and RIS phases, and the
//! baseline schemes it is compared against.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::channel::{build_channels, ChannelParams};
use crate::error::{Error, Result};
use crate::geometry::SceneGeometry;
use crate::metrics::{
    Evaluation, NoiseConfig, PhaseShifts, PowerAllocation, PowerBudget, SystemModel,
};
use crate::oam::{ModePlan, OamBasis, PlanParams};
use crate::power::{PowerSolverOptions, PowerSubproblem};
use crate::ris::{optimize_theta, CgOptions, SecrecyObjective};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Joint power and phase optimization.
    Proposed,
    /// Phases optimized, signal budget split equally.
    EqualPower,
    /// Every mode carries signal, no AN; jointly optimized.
    NoAn,
    /// Random phases, power optimized.
    RandomPhase,
    /// Direct links only, power optimized.
    NoRis,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Proposed,
        Scheme::EqualPower,
        Scheme::NoAn,
        Scheme::RandomPhase,
        Scheme::NoRis,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::EqualPower => "equal-power",
            Scheme::NoAn => "no-an",
            Scheme::RandomPhase => "random-phase",
            Scheme::NoRis => "no-ris",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::param("scheme", format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaInit {
    Ones,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub ao_tol: f64,
    pub ao_max_iter: usize,
    pub seed: u64,
    pub theta_init: ThetaInit,
    pub power: PowerSolverOptions,
    pub cg: CgOptions,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Proposed,
            ao_tol: 1e-4,
            ao_max_iter: 50,
            seed: 0,
            theta_init: ThetaInit::Ones,
            power: PowerSolverOptions::default(),
            cg: CgOptions::default(),
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ao_tol > 0.0) {
            return Err(Error::param("scheme.ao_tol", "must be positive"));
        }
        if self.ao_max_iter == 0 {
            return Err(Error::param("scheme.ao_max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

/// Everything needed to instantiate a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub scene: SceneGeometry,
    pub channel: ChannelParams,
    pub plan: PlanParams,
    /// Total transmit power, watts.
    pub p_total: f64,
    pub rho: f64,
    /// Power floor in watts; `None` for the default fraction of the budget.
    pub p_th: Option<f64>,
    pub noise: NoiseConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            scene: SceneGeometry::default(),
            channel: ChannelParams::default(),
            plan: PlanParams::default(),
            p_total: 1.0,
            rho: 0.9,
            p_th: None,
            noise: NoiseConfig::default(),
        }
    }
}

impl Scenario {
    /// Model and budget as seen by `scheme`.
    pub fn build(&self, scheme: Scheme) -> Result<(SystemModel, PowerBudget)> {
        let mut channels = build_channels(&self.scene, &self.channel)?;
        let basis = OamBasis::from_scene(&self.scene)?;
        let (plan_params, rho) = match scheme {
            Scheme::NoAn => (PlanParams::all_signal(self.scene.n), 1.0),
            _ => (self.plan.clone(), self.rho),
        };
        if scheme == Scheme::NoRis {
            channels = channels.without_ris();
        }
        let plan = ModePlan::new(self.scene.n, &plan_params)?;
        let budget = PowerBudget::new(self.p_total, rho, self.p_th, plan.n_signal())?;
        let model = SystemModel::new(channels, basis, plan, self.noise)?;
        Ok((model, budget))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub scheme: Scheme,
    /// Reported secrecy rate (with index bits) before the first and after
    /// every AO iteration.
    pub sr_trace: Vec<f64>,
    pub power: PowerAllocation,
    pub theta: PhaseShifts,
    pub evaluation: Evaluation,
    pub iterations: usize,
    pub converged: bool,
    /// A phase subproblem ended on a failed line search.
    pub stagnated: bool,
    pub max_modulus_error: f64,
    pub max_tangent_residual: f64,
    pub wall_time: Duration,
}

impl RunResult {
    pub fn sr(&self) -> f64 {
        self.evaluation.rates.sr
    }
}

fn initial_theta(q: usize, init: ThetaInit, rng: &mut ChaCha8Rng) -> PhaseShifts {
    match init {
        ThetaInit::Ones => PhaseShifts::ones(q),
        ThetaInit::Random => PhaseShifts::random(q, rng),
    }
}

/// Alternates power and phase updates from `(power, theta)`.
pub fn alternate(
    model: &SystemModel,
    mut power: PowerAllocation,
    mut theta: PhaseShifts,
    optimize_p: bool,
    optimize_phases: bool,
    cfg: &SchemeConfig,
) -> Result<RunResult> {
    let start = Instant::now();
    let optimize_phases = optimize_phases && model.q() > 0;
    let lin = model.linearize();
    let mut eval = model.evaluate(&power, &theta)?;
    let mut trace = vec![eval.rates.sr];
    let mut converged = false;
    let mut stagnated = false;
    let mut max_modulus_error = theta.max_modulus_error();
    let mut max_tangent_residual: f64 = 0.0;
    let mut iterations = 0;

    if optimize_p || optimize_phases {
        for _ in 0..cfg.ao_max_iter {
            if optimize_p {
                let sub = PowerSubproblem::from_model(model, &power, &theta)?;
                let (p, _) = sub.optimize_power(&power.p, &cfg.power)?;
                power = power.with_powers(p);
            }
            if optimize_phases {
                let obj = SecrecyObjective {
                    lin: &lin,
                    p: &power.p,
                    sigma_zz: power.sigma_zz,
                    noise: model.noise,
                };
                let res = optimize_theta(&obj, &theta.0, &cfg.cg)?;
                stagnated |= res.stagnated;
                max_modulus_error = max_modulus_error.max(res.max_modulus_error);
                max_tangent_residual = max_tangent_residual.max(res.max_tangent_residual);
                theta = PhaseShifts(res.theta);
            }
            iterations += 1;
            eval = model.evaluate(&power, &theta)?;
            let prev = *trace.last().unwrap();
            trace.push(eval.rates.sr);
            if (eval.rates.sr - prev).abs() < cfg.ao_tol {
                converged = true;
                break;
            }
        }
    } else {
        converged = true;
    }

    Ok(RunResult {
        scheme: cfg.scheme,
        sr_trace: trace,
        power,
        theta,
        evaluation: eval,
        iterations,
        converged,
        stagnated,
        max_modulus_error,
        max_tangent_residual,
        wall_time: start.elapsed(),
    })
}

/// Joint optimization from an equal power split and the configured phases.
pub fn run_rmcg_ao(
    model: &SystemModel,
    budget: PowerBudget,
    cfg: &SchemeConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let theta = initial_theta(model.q(), cfg.theta_init, &mut rng);
    let power = PowerAllocation::equal(budget, &model.plan);
    alternate(model, power, theta, true, true, cfg)
}

/// Runs `cfg.scheme` on the scenario.
pub fn run_scheme(scenario: &Scenario, cfg: &SchemeConfig) -> Result<RunResult> {
    cfg.validate()?;
    let (model, budget) = scenario.build(cfg.scheme)?;
    run_baseline(&model, budget, cfg)
}

/// Runs `cfg.scheme` on an already-built model.
pub fn run_baseline(
    model: &SystemModel,
    budget: PowerBudget,
    cfg: &SchemeConfig,
) -> Result<RunResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let power = PowerAllocation::equal(budget, &model.plan);
    match cfg.scheme {
        Scheme::Proposed | Scheme::NoAn | Scheme::NoRis => run_rmcg_ao(model, budget, cfg),
        Scheme::EqualPower => {
            let theta = initial_theta(model.q(), cfg.theta_init, &mut rng);
            alternate(model, power, theta, false, true, cfg)
        }
        Scheme::RandomPhase => {
            let theta = PhaseShifts::random(model.q(), &mut rng);
            alternate(model, power, theta, true, false, cfg)
        }
    }
}
