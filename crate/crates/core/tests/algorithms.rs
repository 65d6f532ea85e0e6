use safe_bai::algorithms::*;
use safe_bai::harness::run_algorithm;
use safe_bai::instances::*;

const DELTA: f64 = 0.1;

fn cfg() -> AlgoConfig {
    AlgoConfig::default()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn same_but_wall(a: &RunRecord, b: &RunRecord) -> bool {
    RunRecord { wall_ms: 0.0, ..a.clone() } == RunRecord { wall_ms: 0.0, ..b.clone() }
}

#[test]
fn rage_on_a_single_arm_reports_zero_without_pulls() {
    let mut env = Environment::new(gen_bai_instance(&[0.3, 0.1]).unwrap(), 1);
    let r = rage_eps(&mut env, &[1], &[1], 0.1, DELTA, &[0.0], &cfg()).unwrap();
    assert_eq!(r.delta_hat, vec![0.0]);
    assert_eq!(r.y_hat, 1);
    assert!(r.phases.is_empty());
    assert_eq!(env.pulls(), 0);
}

#[test]
fn rage_rejects_inconsistent_arguments() {
    let mut env = Environment::new(gen_bai_instance(&[0.3, 0.1]).unwrap(), 1);
    assert!(rage_eps(&mut env, &[0], &[1], 0.1, DELTA, &[0.0], &cfg()).is_err());
    assert!(rage_eps(&mut env, &[0, 1], &[], 0.1, DELTA, &[0.0, 0.0], &cfg()).is_err());
    assert!(rage_eps(&mut env, &[0, 1], &[0], 0.1, DELTA, &[0.0], &cfg()).is_err());
    assert!(rage_eps(&mut env, &[0, 1], &[0], 0.0, DELTA, &[0.0, 0.0], &cfg()).is_err());
}

#[test]
fn noiseless_rage_recovers_true_gaps() {
    let inst = gen_bai_instance(&[0.9, 0.5, 0.1, -0.3]).unwrap().with_noise_sigma(0.0).unwrap();
    let gaps = true_gaps(&inst).unwrap();
    let eps = 0.5;
    let c = cfg();
    let mut env = Environment::new(inst, 3);
    let all = [0, 1, 2, 3];
    let r = rage_eps(&mut env, &all, &all, eps, DELTA, &[0.0; 4], &c).unwrap();
    for (k, d) in r.delta_hat.iter().enumerate() {
        assert!((d - gaps.delta[k]).abs() <= c.constants.c_f * eps, "arm {k}: {d} vs {}", gaps.delta[k]);
    }
    assert_eq!(r.y_hat, 0);
}

#[test]
fn rage_round_budgets_scale_with_inverse_square_tolerance() {
    // Gaps far below every round tolerance keep all arms in play.
    let inst = gen_bai_instance(&[0.5, 0.49, 0.48]).unwrap();
    let c = cfg();
    let mut env = Environment::new(inst, 9);
    let all = [0, 1, 2];
    let r = rage_eps(&mut env, &all, &all, 0.125, DELTA, &[0.0; 3], &c).unwrap();
    assert!(r.phases.len() >= 4);
    let xs: Vec<f64> = r.phases.iter().map(|p| (2.0 / c.constants.c_f * 0.5f64.powi(p.round as i32)).ln()).collect();
    let ys: Vec<f64> = r.phases.iter().map(|p| (p.tau as f64).ln()).collect();
    let s = slope(&xs, &ys);
    assert!((s + 2.0).abs() <= 0.3, "slope {s}");
}

#[test]
fn beside_returns_the_best_arm_under_bai_reduction() {
    let inst = gen_bai_instance(&[0.6, 0.4, 0.2, 0.0]).unwrap();
    for seed in 0..3 {
        let mut env = Environment::new(inst.clone(), seed);
        let (arm, _) = beside(&mut env, 0.1, DELTA, &cfg()).unwrap();
        assert_eq!(arm, 0);
    }
}

#[test]
fn beside_traces_are_monotone_sound_and_within_budget() {
    let inst = gen_mab_hard_instance(5, 0.1, 0.05).unwrap();
    let truth = true_gaps(&inst).unwrap();
    for seed in 0..3 {
        let mut env = Environment::new(inst.clone(), seed);
        let (arm, record, trace) = beside_traced(&mut env, 0.5, DELTA, &cfg()).unwrap();
        assert_eq!(trace.tables[0].round, 0);
        for w in trace.tables.windows(2) {
            assert!(w[0].safe_set_flags.iter().zip(&w[1].safe_set_flags).all(|(a, b)| !a || *b));
            assert_eq!(w[1].round, w[0].round + 1);
            assert!((w[1].eps_l - w[0].eps_l / 2.0).abs() < 1e-15);
        }
        if record.is_eps_good {
            let flags = &trace.tables.last().unwrap().safe_set_flags;
            assert!(flags.iter().enumerate().all(|(z, f)| !f || truth.min_delta_safe(z) >= 0.0));
        }
        assert!(trace.confidence.total() <= 2.0 * DELTA + 1e-12, "{}", trace.confidence.total());
        assert!(trace.y_end.contains(&arm));
        assert_eq!(record.total_pulls, record.phase_total());
        assert_eq!(record.total_pulls, record.pulls_safety + record.pulls_optimality);
    }
}

#[test]
fn every_algorithm_is_deterministic_and_accounts_for_its_pulls() {
    let inst = gen_mab_hard_instance(4, 0.1, 0.05).unwrap();
    for name in ["beside", "beside-elim", "baseline", "xy-diff-only", "xy-safe-only"] {
        let run = || {
            let mut env = Environment::new(inst.clone(), 17);
            run_algorithm(name, &mut env, 0.5, DELTA, &cfg()).unwrap()
        };
        let (a, b) = (run(), run());
        assert!(same_but_wall(&a, &b), "{name}");
        assert_eq!(a.algorithm, name);
        assert_eq!(a.total_pulls, a.phase_total(), "{name}");
        assert!(a.total_pulls > 0);
    }
}

#[test]
fn pull_cap_stops_a_run() {
    let mut c = cfg();
    c.max_pulls = 1000;
    let mut env = Environment::new(gen_mab_hard_instance(4, 0.1, 0.05).unwrap(), 0);
    assert!(matches!(beside(&mut env, 0.5, DELTA, &c), Err(safe_bai::Error::PullCap { cap: 1000 })));
}

#[test]
fn rage_elim_keeps_a_single_arm_and_isolates_the_best() {
    let inst = gen_bai_instance(&[0.6, 0.4, 0.2, 0.0]).unwrap();
    let mut env = Environment::new(inst.clone(), 2);
    assert_eq!(rage_elim(&mut env, &[2], &[2], 0.1, DELTA, &cfg()).unwrap(), (vec![2], vec![2]));
    let mut env = Environment::new(inst, 2);
    let all = [0, 1, 2, 3];
    let (active, optimal) = rage_elim(&mut env, &all, &all, 0.05, DELTA, &cfg()).unwrap();
    assert_eq!(active, vec![0]);
    assert_eq!(optimal, vec![0]);
}

#[test]
fn noiseless_elimination_keeps_exactly_the_near_optimal_arms() {
    let inst = gen_bai_instance(&[0.6, 0.55, 0.3, 0.0]).unwrap().with_noise_sigma(0.0).unwrap();
    let mut env = Environment::new(inst, 0);
    let all = [0, 1, 2, 3];
    // After the 2^-3 round only arms within 0.125 of the best remain.
    let (active, _) = rage_elim(&mut env, &all, &all, 0.125, DELTA, &cfg()).unwrap();
    assert_eq!(active, vec![0, 1]);
}

#[test]
fn beside_elim_discards_the_unsafe_arm_of_i1() {
    let eps = 0.025;
    let inst = gen_prop1_instance(Prop1Kind::I1, 4.0 * eps).unwrap();
    for seed in 0..3 {
        let mut env = Environment::new(inst.clone(), seed);
        let (arm, _) = beside_elim(&mut env, eps, DELTA, &cfg()).unwrap();
        assert_eq!(arm, 0);
    }
}

#[test]
fn baseline_finds_the_safe_best_arm() {
    let inst = gen_mab_hard_instance(6, 0.1, 0.05).unwrap();
    for seed in 0..3 {
        let mut env = Environment::new(inst.clone(), seed);
        let (arm, record) = baseline(&mut env, 0.5, DELTA, &cfg()).unwrap();
        assert!(record.is_eps_good, "arm {arm}");
        assert_eq!(record.total_pulls, record.phase_total());
    }
}

#[test]
fn ablations_track_beside_without_safety_tension() {
    let inst = gen_bai_instance(&[0.6, 0.4, 0.4, 0.4]).unwrap();
    let pulls = |name: &str| {
        (0..3)
            .map(|seed| {
                let mut env = Environment::new(inst.clone(), seed);
                run_algorithm(name, &mut env, 0.1, DELTA, &cfg()).unwrap().total_pulls as f64
            })
            .sum::<f64>()
    };
    let base = pulls("beside");
    for name in ["xy-diff-only", "xy-safe-only"] {
        let r = pulls(name) / base;
        assert!((0.5..=2.0).contains(&r), "{name}: ratio {r}");
    }
}

#[test]
fn worst_case_budget_constant_is_stable_across_dimension() {
    let eps = 0.25;
    let ks: Vec<f64> = [5usize, 10, 20]
        .iter()
        .map(|&d| {
            let theta: Vec<f64> = (0..d).map(|k| 0.5 - 0.4 * k as f64 / d as f64).collect();
            let inst = gen_bai_instance(&theta).unwrap();
            let mut env = Environment::new(inst, 4);
            let (_, r) = beside(&mut env, eps, DELTA, &cfg()).unwrap();
            let scale = d as f64 / (eps * eps) * ((d as f64).ln() + (1.0 / DELTA).ln());
            r.total_pulls as f64 / scale
        })
        .collect();
    let mean = ks.iter().sum::<f64>() / ks.len() as f64;
    assert!(ks.iter().all(|k| (k / mean - 1.0).abs() <= 0.5), "{ks:?}");
}

#[test]
fn gap_tables_serialize() {
    let mut env = Environment::new(gen_bai_instance(&[0.5, 0.1]).unwrap(), 0);
    let (_, _, trace) = beside_traced(&mut env, 0.2, DELTA, &cfg()).unwrap();
    let json = serde_json::to_string(&trace.tables[1]).unwrap();
    let back: GapTable = serde_json::from_str(&json).unwrap();
    assert_eq!(back.round, 1);
    assert!(back.design_used.is_some());
}
