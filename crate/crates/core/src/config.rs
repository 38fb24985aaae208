//! Experiment configuration.
//!
//! Configs are TOML with one table per block (`scene`, `channel`, `plan`,
//! `power`, `noise`, `scheme`, `sweep`, `convergence`, `mc`); dotted keys such
//! as `scene.n = 8` are equivalent. Every field has a default, so an empty file
//! is valid. Powers are given in dBm and converted to watts here.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::geometry::SceneGeometry;
use crate::metrics::{dbm_to_watt, NoiseConfig};
use crate::montecarlo::MonteCarloConfig;
use crate::oam::PlanParams;
use crate::pipeline::{Scenario, Scheme, SchemeConfig, ThetaInit};
use crate::power::PowerSolverOptions;
use crate::ris::{CgOptions, InitialStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerSection {
    pub total_dbm: f64,
    pub rho: f64,
    /// Per-mode floor in watts; omitted means `1e-3 * rho * P_T / N_s`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_th: Option<f64>,
}

impl Default for PowerSection {
    fn default() -> Self {
        Self {
            total_dbm: 30.0,
            rho: 0.9,
            p_th: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub sigma_b_dbm: f64,
    pub sigma_e_dbm: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            sigma_b_dbm: -20.0,
            sigma_e_dbm: -20.0,
        }
    }
}

impl NoiseSection {
    pub fn watts(&self) -> NoiseConfig {
        NoiseConfig {
            sigma_b2: dbm_to_watt(self.sigma_b_dbm),
            sigma_e2: dbm_to_watt(self.sigma_e_dbm),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub name: Scheme,
    pub seed: u64,
    pub theta_init: ThetaInit,
    pub ao_tol: f64,
    pub ao_max_iter: usize,
    pub cg_grad_tol: f64,
    pub cg_max_iter: usize,
    pub cg_armijo: f64,
    pub cg_shrink: f64,
    pub cg_max_backtracks: usize,
    /// First Armijo trial step; omitted means scale-aware `1 / max|grad|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cg_initial_step: Option<f64>,
    pub pg_tol: f64,
    pub mm_tol: f64,
    pub mm_max_rounds: usize,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let s = SchemeConfig::default();
        Self {
            name: s.scheme,
            seed: s.seed,
            theta_init: s.theta_init,
            ao_tol: s.ao_tol,
            ao_max_iter: s.ao_max_iter,
            cg_grad_tol: s.cg.grad_tol,
            cg_max_iter: s.cg.max_iter,
            cg_armijo: s.cg.armijo,
            cg_shrink: s.cg.shrink,
            cg_max_backtracks: s.cg.max_backtracks,
            cg_initial_step: match s.cg.initial_step {
                InitialStep::Fixed(b) => Some(b),
                InitialStep::Auto => None,
            },
            pg_tol: s.power.pg_tol,
            mm_tol: s.power.outer_tol,
            mm_max_rounds: s.power.max_rounds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub schemes: Vec<Scheme>,
    pub z_r: Vec<f64>,
    /// Total RIS sizes; the grid keeps `q_y` columns and sets `Q_z = Q / q_y`.
    pub q: Vec<usize>,
    pub q_y: usize,
    pub p_t_dbm: Vec<f64>,
    /// Bob noise levels for the power sweep.
    pub noise_dbm: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            z_r: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            q: vec![30, 60, 90, 120, 150],
            q_y: 10,
            p_t_dbm: vec![10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
            noise_dbm: vec![-25.0, -20.0, -15.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSection {
    pub p_t_dbm: Vec<f64>,
    pub q: Vec<usize>,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        Self {
            p_t_dbm: vec![20.0, 30.0],
            q: vec![60, 150],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scene: SceneGeometry,
    pub channel: ChannelParams,
    pub plan: PlanParams,
    pub power: PowerSection,
    pub noise: NoiseSection,
    pub scheme: SchemeSection,
    pub sweep: SweepSection,
    pub convergence: ConvergenceSection,
    pub mc: MonteCarloConfig,
}

fn nonempty<T>(field: &'static str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(Error::param(field, "grid must not be empty"))
    } else {
        Ok(())
    }
}

fn finite(field: &'static str, v: &[f64]) -> Result<()> {
    nonempty(field, v)?;
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::param(field, "values must be finite"))
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Comment line written at the top of every CSV.
    pub fn header_comment(&self) -> String {
        format!(
            "# config-sha256={} seed={}",
            self.fingerprint(),
            self.scheme.seed
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate().map_err(|e| e.in_section("scene"))?;
        self.channel
            .validate()
            .map_err(|e| e.in_section("channel"))?;
        self.plan
            .validate(self.scene.n)
            .map_err(|e| e.in_section("plan"))?;
        if !self.power.total_dbm.is_finite() {
            return Err(Error::param("power.total_dbm", "must be finite"));
        }
        self.noise
            .watts()
            .validate()
            .map_err(|e| e.in_section("noise"))?;
        self.scheme_config().map_err(|e| e.in_section("scheme"))?;
        self.scenario()?
            .build(self.scheme.name)
            .map_err(|e| e.in_section("power"))?;
        nonempty("sweep.schemes", &self.sweep.schemes)?;
        finite("sweep.z_r", &self.sweep.z_r)?;
        finite("sweep.p_t_dbm", &self.sweep.p_t_dbm)?;
        finite("sweep.noise_dbm", &self.sweep.noise_dbm)?;
        nonempty("sweep.q", &self.sweep.q)?;
        for &q in &self.sweep.q {
            self.ris_shape("sweep.q", q)?;
        }
        finite("convergence.p_t_dbm", &self.convergence.p_t_dbm)?;
        nonempty("convergence.q", &self.convergence.q)?;
        for &q in &self.convergence.q {
            self.ris_shape("convergence.q", q)?;
        }
        self.mc.validate()?;
        Ok(())
    }

    /// `(Q_y, Q_z)` for a total RIS size on the sweep grid.
    pub fn ris_shape(&self, field: &'static str, q: usize) -> Result<(usize, usize)> {
        let q_y = self.sweep.q_y;
        if q_y == 0 {
            return Err(Error::param("sweep.q_y", "must be at least 1"));
        }
        if q == 0 || !q.is_multiple_of(q_y) {
            return Err(Error::param(
                field,
                format!("{q} is not a positive multiple of sweep.q_y = {q_y}"),
            ));
        }
        Ok((q_y, q / q_y))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let s = Scenario {
            scene: self.scene.clone(),
            channel: self.channel,
            plan: self.plan.clone(),
            p_total: dbm_to_watt(self.power.total_dbm),
            rho: self.power.rho,
            p_th: self.power.p_th,
            noise: self.noise.watts(),
        };
        Ok(s)
    }

    pub fn scheme_config(&self) -> Result<SchemeConfig> {
        let s = &self.scheme;
        let cfg = SchemeConfig {
            scheme: s.name,
            ao_tol: s.ao_tol,
            ao_max_iter: s.ao_max_iter,
            seed: s.seed,
            theta_init: s.theta_init,
            power: PowerSolverOptions {
                pg_tol: s.pg_tol,
                outer_tol: s.mm_tol,
                max_rounds: s.mm_max_rounds,
                ..PowerSolverOptions::default()
            },
            cg: CgOptions {
                grad_tol: s.cg_grad_tol,
                max_iter: s.cg_max_iter,
                armijo: s.cg_armijo,
                shrink: s.cg_shrink,
                max_backtracks: s.cg_max_backtracks,
                initial_step: s
                    .cg_initial_step
                    .map_or(InitialStep::Auto, InitialStep::Fixed),
                ..CgOptions::default()
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = Config::from_toml("scene.d = 12.0\npower.total_dbm = 20.0\n").unwrap();
        let b = Config::from_toml("[scene]\nd = 12.0\n[power]\ntotal_dbm = 20.0\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scene.d, 12.0);
        assert!((a.scenario().unwrap().p_total - 0.1).abs() < 1e-15);
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = Config::default();
        cfg.power.p_th = Some(1e-4);
        cfg.scheme.cg_initial_step = Some(1.0);
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.scheme.seed = 7;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            ("scene.n = 1", "scene.n"),
            ("power.rho = 1.5", "rho"),
            ("sweep.q = [35]", "sweep.q"),
            ("sweep.z_r = []", "sweep.z_r"),
            ("mc.trials = 0", "mc.trials"),
            ("scene.bogus = 1", "bogus"),
            ("scheme.name = \"mimo\"", "mimo"),
        ];
        for (text, field) in cases {
            let msg = Config::from_toml(text).unwrap_err().to_string();
            assert!(msg.contains(field), "{text}: {msg}");
        }
    }

    #[test]
    fn shipped_default_matches_builtin() {
        let text = include_str!("../../../configs/default.toml");
        assert_eq!(Config::from_toml(text).unwrap(), Config::default());
    }
}
