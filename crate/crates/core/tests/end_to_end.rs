use oamris::config::Config;
use oamris::experiments::{run_experiment, Experiment};
use oamris::metrics::PhaseShifts;
use oamris::montecarlo::{simulate_ber, MonteCarloConfig};
use oamris::pipeline::{run_scheme, Scheme, SchemeConfig};

fn small_config() -> Config {
    let mut cfg = Config::from_toml(include_str!("../../../configs/default.toml")).unwrap();
    cfg.scene.q_y = 4;
    cfg.scene.q_z = 4;
    cfg
}

fn run(cfg: &Config, scheme: Scheme) -> oamris::pipeline::RunResult {
    let sc = SchemeConfig {
        scheme,
        ..cfg.scheme_config().unwrap()
    };
    run_scheme(&cfg.scenario().unwrap(), &sc).unwrap()
}

#[test]
fn proposed_dominates_fixed_variable_baselines() {
    let cfg = small_config();
    let proposed = run(&cfg, Scheme::Proposed);
    assert!(proposed.converged);
    for w in proposed.sr_trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-6);
    }
    for baseline in [Scheme::EqualPower, Scheme::RandomPhase] {
        let b = run(&cfg, baseline);
        assert!(
            proposed.sr() >= b.sr() - 1e-9,
            "{baseline}: {} vs {}",
            proposed.sr(),
            b.sr()
        );
    }
}

#[test]
fn optimized_point_respects_constraints() {
    let cfg = small_config();
    let r = run(&cfg, Scheme::Proposed);
    let budget = r.power.budget;
    assert!(r.power.p.iter().sum::<f64>() <= budget.signal_budget() + 1e-9);
    assert!(r.power.p.iter().all(|&p| p >= budget.p_th - 1e-12));
    assert!(r.theta.max_modulus_error() < 1e-12);
    assert!((r.power.sigma_zz - (1.0 - budget.rho) * budget.p_total / 3.0).abs() < 1e-15);
}

#[test]
fn no_ris_ignores_phases() {
    let cfg = small_config();
    let r = run(&cfg, Scheme::NoRis);
    assert!(r.theta.is_empty());
    assert!(r.sr().is_finite());
}

#[test]
fn bob_ber_falls_with_snr_on_the_optimized_link() {
    let cfg = small_config();
    let (model, budget) = cfg.scenario().unwrap().build(Scheme::Proposed).unwrap();
    let r = oamris::pipeline::run_baseline(&model, budget, &cfg.scheme_config().unwrap()).unwrap();
    let mc = MonteCarloConfig {
        trials: 20_000,
        snr_grid_db: vec![-5.0, 5.0, 15.0],
        ..Default::default()
    };
    let pts = simulate_ber(&model, &r.power, &r.theta, &mc).unwrap();
    for w in pts.windows(2) {
        assert!(w[1].bob.ber() <= w[0].bob.ci().1, "{:?}", pts);
    }
    assert!(simulate_ber(&model, &r.power, &PhaseShifts::ones(3), &mc).is_err());
}

#[test]
fn every_experiment_writes_a_fingerprinted_header() {
    let mut cfg = small_config();
    cfg.sweep.z_r = vec![10.0, 20.0];
    cfg.sweep.q = vec![10, 20];
    cfg.sweep.p_t_dbm = vec![30.0];
    cfg.sweep.noise_dbm = vec![-20.0];
    cfg.sweep.schemes = vec![Scheme::Proposed];
    cfg.convergence.q = vec![10];
    cfg.mc.trials = 200;
    let header = cfg.header_comment();
    for e in Experiment::ALL
        .into_iter()
        .filter(|&e| e != Experiment::Selftest)
    {
        let out = run_experiment(&cfg, e).unwrap();
        assert!(!out.artifacts.is_empty());
        for a in out.artifacts {
            assert_eq!(a.csv.lines().next().unwrap(), header, "{}", a.file_name);
        }
    }
}
