//! Experiment drivers. Each experiment turns a [`Config`] into CSV artifacts;
//! sweep points run on the rayon pool and rows are emitted in grid order.

use rayon::prelude::*;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::checks::{selftest_suite, Check};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::metrics::dbm_to_watt;
use crate::montecarlo::{simulate_ber, BerPoint};
use crate::pipeline::{run_baseline, RunResult, Scenario, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Convergence,
    SweepZr,
    SweepQ,
    SweepPower,
    Ber,
    Selftest,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Convergence,
        Experiment::SweepZr,
        Experiment::SweepQ,
        Experiment::SweepPower,
        Experiment::Ber,
        Experiment::Selftest,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Convergence => "convergence",
            Experiment::SweepZr => "sweep-zr",
            Experiment::SweepQ => "sweep-q",
            Experiment::SweepPower => "sweep-power",
            Experiment::Ber => "ber",
            Experiment::Selftest => "selftest",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::param("experiment", format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub file_name: String,
    pub csv: String,
}

impl Artifact {
    /// CSV body without the leading comment lines.
    pub fn body(&self) -> String {
        self.csv
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| format!("{l}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Some phase subproblem ended on a failed line search.
    pub stagnated: bool,
    pub checks: Vec<Check>,
}

struct Table {
    text: String,
}

impl Table {
    fn new(cfg: &Config, columns: &[&str]) -> Self {
        Self {
            text: format!("{}\n{}\n", cfg.header_comment(), columns.join(",")),
        }
    }

    fn row(&mut self, cells: &[String]) {
        let _ = writeln!(self.text, "{}", cells.join(","));
    }

    fn finish(self, file_name: impl Into<String>) -> Artifact {
        Artifact {
            file_name: file_name.into(),
            csv: self.text,
        }
    }
}

fn run_point(cfg: &Config, scenario: &Scenario, scheme: Scheme) -> Result<RunResult> {
    let mut sc = cfg.scheme_config()?;
    sc.scheme = scheme;
    let (model, budget) = scenario.build(scheme)?;
    run_baseline(&model, budget, &sc)
}

const RESULT_COLUMNS: [&str; 7] = [
    "sr",
    "sr_clamped",
    "r_b",
    "r_e",
    "iterations",
    "converged",
    "stagnated",
];

fn result_cells(r: &RunResult) -> Vec<String> {
    let rates = &r.evaluation.rates;
    vec![
        rates.sr.to_string(),
        rates.sr_clamped.to_string(),
        rates.r_b.to_string(),
        rates.r_e.to_string(),
        r.iterations.to_string(),
        (r.converged as u8).to_string(),
        (r.stagnated as u8).to_string(),
    ]
}

/// Runs every `(scheme, point)` pair and writes one CSV per scheme with the
/// point's leading cells followed by the result columns.
fn scheme_sweep<P: Sync>(
    cfg: &Config,
    prefix: &str,
    lead: &[&str],
    points: &[P],
    cells: impl Fn(&P) -> Vec<String> + Sync,
    scenario: impl Fn(&P) -> Result<Scenario> + Sync,
) -> Result<Outcome> {
    let jobs: Vec<(Scheme, &P)> = cfg
        .sweep
        .schemes
        .iter()
        .flat_map(|&s| points.iter().map(move |p| (s, p)))
        .collect();
    let results: Vec<Result<RunResult>> = jobs
        .par_iter()
        .map(|&(s, p)| run_point(cfg, &scenario(p)?, s))
        .collect();
    let mut columns = lead.to_vec();
    columns.extend(RESULT_COLUMNS);
    let mut stagnated = false;
    let mut artifacts = Vec::new();
    let mut results = results.into_iter();
    for &scheme in &cfg.sweep.schemes {
        let mut t = Table::new(cfg, &columns);
        for p in points {
            let r = results.next().expect("one result per job")?;
            stagnated |= r.stagnated;
            let mut row = cells(p);
            row.extend(result_cells(&r));
            t.row(&row);
        }
        artifacts.push(t.finish(format!("{prefix}_{}.csv", scheme.name().replace('-', "_"))));
    }
    Ok(Outcome {
        artifacts,
        stagnated,
        checks: Vec::new(),
    })
}

fn convergence(cfg: &Config) -> Result<Outcome> {
    let points: Vec<(f64, usize)> = cfg
        .convergence
        .p_t_dbm
        .iter()
        .flat_map(|&p| cfg.convergence.q.iter().map(move |&q| (p, q)))
        .collect();
    let runs: Vec<Result<RunResult>> = points
        .par_iter()
        .map(|&(p, q)| {
            let (q_y, q_z) = cfg.ris_shape("convergence.q", q)?;
            let mut sc = cfg.scenario()?;
            sc.p_total = dbm_to_watt(p);
            sc.scene.q_y = q_y;
            sc.scene.q_z = q_z;
            run_point(cfg, &sc, cfg.scheme.name)
        })
        .collect();
    let runs: Vec<RunResult> = runs.into_iter().collect::<Result<_>>()?;
    let mut columns = vec!["iteration".to_string()];
    columns.extend(points.iter().map(|(p, q)| format!("sr_pt{p}dbm_q{q}")));
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut t = Table::new(cfg, &columns);
    let len = runs.iter().map(|r| r.sr_trace.len()).max().unwrap_or(0);
    for i in 0..len {
        let mut row = vec![i.to_string()];
        // finished runs hold their final value
        row.extend(
            runs.iter()
                .map(|r| r.sr_trace[i.min(r.sr_trace.len() - 1)].to_string()),
        );
        t.row(&row);
    }
    Ok(Outcome {
        stagnated: runs.iter().any(|r| r.stagnated),
        artifacts: vec![t.finish("convergence.csv")],
        checks: Vec::new(),
    })
}

fn sweep_zr(cfg: &Config) -> Result<Outcome> {
    scheme_sweep(
        cfg,
        "sweep_zr",
        &["z_r"],
        &cfg.sweep.z_r,
        |z| vec![z.to_string()],
        |&z| {
            let mut sc = cfg.scenario()?;
            sc.scene.u_r[2] = z;
            Ok(sc)
        },
    )
}

fn sweep_q(cfg: &Config) -> Result<Outcome> {
    let shapes: Vec<(usize, usize, usize)> = cfg
        .sweep
        .q
        .iter()
        .map(|&q| cfg.ris_shape("sweep.q", q).map(|(y, z)| (q, y, z)))
        .collect::<Result<_>>()?;
    scheme_sweep(
        cfg,
        "sweep_q",
        &["q", "q_y", "q_z"],
        &shapes,
        |&(q, y, z)| vec![q.to_string(), y.to_string(), z.to_string()],
        |&(_, y, z)| {
            let mut sc = cfg.scenario()?;
            sc.scene.q_y = y;
            sc.scene.q_z = z;
            Ok(sc)
        },
    )
}

fn sweep_power(cfg: &Config) -> Result<Outcome> {
    let points: Vec<(f64, f64)> = cfg
        .sweep
        .noise_dbm
        .iter()
        .flat_map(|&n| cfg.sweep.p_t_dbm.iter().map(move |&p| (n, p)))
        .collect();
    scheme_sweep(
        cfg,
        "sweep_power",
        &["sigma_b_dbm", "p_t_dbm"],
        &points,
        |(n, p)| vec![n.to_string(), p.to_string()],
        |&(n, p)| {
            let mut sc = cfg.scenario()?;
            sc.noise.sigma_b2 = dbm_to_watt(n);
            sc.p_total = dbm_to_watt(p);
            Ok(sc)
        },
    )
}

fn ber_rows(t: &mut Table, an: bool, points: &[BerPoint]) {
    for p in points {
        let (bl, bh) = p.bob.ci();
        let (el, eh) = p.eve.ci();
        t.row(&[
            (an as u8).to_string(),
            p.snr_db.to_string(),
            p.bob.ber().to_string(),
            p.eve.ber().to_string(),
            bl.to_string(),
            bh.to_string(),
            el.to_string(),
            eh.to_string(),
            p.trials.to_string(),
        ]);
    }
}

/// Optimizes `(p, θ)` with the configured scheme, then simulates the link. With
/// AN enabled the same allocation is also simulated without AN for reference.
fn ber(cfg: &Config) -> Result<Outcome> {
    let scenario = cfg.scenario()?;
    let (model, budget) = scenario.build(cfg.scheme.name)?;
    let run = run_baseline(&model, budget, &cfg.scheme_config()?)?;
    let mut t = Table::new(
        cfg,
        &[
            "an",
            "snr_db",
            "ber_bob",
            "ber_eve",
            "ci_low_bob",
            "ci_high_bob",
            "ci_low_eve",
            "ci_high_eve",
            "trials",
        ],
    );
    let settings: &[bool] = if cfg.mc.include_an {
        &[true, false]
    } else {
        &[false]
    };
    for &an in settings {
        let mut mc = cfg.mc.clone();
        mc.include_an = an;
        let pts = simulate_ber(&model, &run.power, &run.theta, &mc)?;
        ber_rows(&mut t, an, &pts);
    }
    Ok(Outcome {
        artifacts: vec![t.finish("ber.csv")],
        stagnated: run.stagnated,
        checks: Vec::new(),
    })
}

fn selftest(cfg: &Config) -> Result<Outcome> {
    let checks = selftest_suite();
    let mut t = Table::new(cfg, &["check", "pass", "detail"]);
    for c in &checks {
        t.row(&[
            c.name.clone(),
            (c.pass as u8).to_string(),
            format!("\"{}\"", c.detail.replace('"', "'")),
        ]);
    }
    Ok(Outcome {
        artifacts: vec![t.finish("selftest.csv")],
        stagnated: false,
        checks,
    })
}

pub fn run_experiment(cfg: &Config, experiment: Experiment) -> Result<Outcome> {
    cfg.validate()?;
    match experiment {
        Experiment::Convergence => convergence(cfg),
        Experiment::SweepZr => sweep_zr(cfg),
        Experiment::SweepQ => sweep_q(cfg),
        Experiment::SweepPower => sweep_power(cfg),
        Experiment::Ber => ber(cfg),
        Experiment::Selftest => selftest(cfg),
    }
}
