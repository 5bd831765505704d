//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use cascal::cascade::{
    calibrate_alternative1, calibrate_cascaded, propagate, stage_two_training_set,
    CalibrationDataset, MethodTag,
};
use cascal::gp::{self, log_marginal_likelihood, TrainingSet};
use cascal::kernels::{eval_prior_mean, kernel_matrix, Hyperparameters, PriorMean};
use cascal::lut::{lut_eval, Extrapolation, LookupTable};
use cascal::montecarlo::trial_data;
use cascal::montecarlo::{run_campaign, summarize_results, write_trials_csv, Method, TrialRow};
use cascal::sim::{
    cost_j, d2_kept_indices, sample_truth_pair, SensorTruth, TruthPair, TruthParams, INVERT_TOL,
};
use cascal::RunConfig;
use common::*;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn c1_monte_carlo() -> Check {
    let cfg = RunConfig::default();
    let res = run_campaign(200, cfg.seed, &cfg, 1).map_err(|e| e.to_string())?;
    let s = summarize_results(&res, cfg.n_bins).map_err(|e| e.to_string())?;
    let (b, a1, a2) = (
        s.stats(Method::Bayes).median,
        s.stats(Method::Alt1).median,
        s.stats(Method::Alt2).median,
    );
    let w1 = s.win_rate(Method::Bayes, Method::Alt1);
    let w2 = s.win_rate(Method::Bayes, Method::Alt2);
    let detail = format!(
        "medians bayes {b:.3e} alt1 {a1:.3e} alt2 {a2:.3e}; win(bayes,alt1) {w1:.3} win(bayes,alt2) {w2:.3}; flagged {}",
        s.n_flagged
    );
    ensure(
        b < a1 && a1 < a2,
        format!("median ordering violated: {detail}"),
    )?;
    ensure(w1 >= 0.6, format!("win(bayes,alt1) < 0.6: {detail}"))?;
    ensure(w2 >= 0.8, format!("win(bayes,alt2) < 0.8: {detail}"))?;
    Ok(detail)
}

fn c2_gp_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for k in 0..50 {
        let n = rng.gen_range(1..=10);
        let p = random_problem(&mut rng, n);
        let ts = TrainingSet::new(p.x.clone(), p.t.clone(), p.sigma.clone())
            .map_err(|e| e.to_string())?;
        let post = gp::fit(&ts, &p.hp, p.mean).map_err(|e| e.to_string())?;
        let o = oracle_gp(&p.x, &p.t, &p.sigma, &p.hp, &p.mean, &p.ystar);
        let mean = post.predict_mean(&p.ystar);
        let cov = post.predict_cov(&p.ystar);
        let lml = log_marginal_likelihood(&ts, &p.hp, &p.mean).map_err(|e| e.to_string())?;
        ensure(
            rel_close_vec(&mean, &o.mean, 1e-9, 1e-300),
            format!("problem {k}: mean mismatch"),
        )?;
        ensure(
            rel_close_mat(&cov, &o.cov, 1e-9, p.hp.signal_variance),
            format!("problem {k}: covariance mismatch"),
        )?;
        ensure(
            rel_close(lml, o.lml, 1e-9),
            format!("problem {k}: lml {lml} vs {}", o.lml),
        )?;
        worst = worst.max((lml - o.lml).abs() / o.lml.abs().max(1.0));
    }
    Ok(format!("50 problems, worst lml rel err {worst:.1e}"))
}

fn c3_identities() -> Check {
    let hp = Hyperparameters::new(0.2, 1e-4, 1e-8).map_err(|e| e.to_string())?;
    let ys = linspace(-0.1, 1.1, 13);
    for mean in [PriorMean::Identity, PriorMean::Zero] {
        let post = gp::fit(&TrainingSet::empty(), &hp, mean).map_err(|e| e.to_string())?;
        ensure(
            post.predict_mean(&ys) == eval_prior_mean(&mean, &ys),
            "N=0 mean is not the prior",
        )?;
        ensure(
            post.predict_cov(&ys) == kernel_matrix(&ys, &ys, &hp),
            "N=0 cov is not the prior",
        )?;
    }
    let x = linspace(0.0, 1.0, 12);
    let t: Vec<f64> = x.iter().map(|v| v + 0.01 * (6.0 * v).sin()).collect();
    let hp = Hyperparameters::new(0.15, 1e-4, 0.0).map_err(|e| e.to_string())?;
    let post = gp::fit(
        &TrainingSet::noiseless(x.clone(), t.clone()).map_err(|e| e.to_string())?,
        &hp,
        PriorMean::Identity,
    )
    .map_err(|e| e.to_string())?;
    let resid = post
        .predict_mean(&x)
        .iter()
        .zip(&t)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let var = post.predict_var(&x).into_iter().fold(0.0f64, f64::max);
    ensure(resid <= 1e-6, format!("interpolation residual {resid:e}"))?;
    ensure(
        var <= 1e-8 * hp.signal_variance,
        format!("variance at training points {var:e}"),
    )?;
    Ok(format!("max residual {resid:.1e}, max variance {var:.1e}"))
}

fn c4_propagation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 0..20 {
        let n = rng.gen_range(2..=10);
        let p = random_problem(&mut rng, n);
        let ts = TrainingSet::new(p.x.clone(), p.t.clone(), p.sigma.clone())
            .map_err(|e| e.to_string())?;
        let s1 = gp::fit(&ts, &p.hp, p.mean).map_err(|e| e.to_string())?;
        let d1 = CalibrationDataset::new(linspace(0.0, 1.0, 7), p.ystar.clone())
            .map_err(|e| e.to_string())?;
        let prop = propagate(&d1, &s1).map_err(|e| e.to_string())?;
        let o = oracle_gp(&p.x, &p.t, &p.sigma, &p.hp, &p.mean, d1.y());
        let c = prop.target_cov();
        ensure(
            rel_close_mat(c, &o.cov, 1e-9, p.hp.signal_variance),
            format!("problem {k}: Σ mismatch"),
        )?;
        ensure(c == &c.transpose(), format!("problem {k}: Σ not symmetric"))?;
        let min_eig = c.clone().symmetric_eigenvalues().min();
        ensure(
            min_eig >= -1e-9 * max_abs(c).max(1.0),
            format!("problem {k}: Σ eigenvalue {min_eig:e}"),
        )?;
    }
    let cfg = RunConfig::default();
    let data = trial_data(4, &cfg).map_err(|e| e.to_string())?;
    let cc = cfg.cascade_config();
    let b = calibrate_cascaded(&data.d1, &data.d2, &cc).map_err(|e| e.to_string())?;
    let a = calibrate_alternative1(&data.d1, &data.d2, &cc).map_err(|e| e.to_string())?;
    ensure(
        b.stage_one.to_doc() == a.stage_one.to_doc(),
        "stage one differs between methods",
    )?;
    let q = linspace(-0.1, 1.1, 50);
    let bits = |v: Vec<f64>| v.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    ensure(
        bits(b.stage_one.predict_mean(&q)) == bits(a.stage_one.predict_mean(&q)),
        "stage-one outputs differ",
    )?;
    let tb = stage_two_training_set(&data.d1, &b.stage_one, MethodTag::Bayesian)
        .map_err(|e| e.to_string())?;
    let ta = stage_two_training_set(&data.d1, &a.stage_one, MethodTag::Alt1)
        .map_err(|e| e.to_string())?;
    ensure(
        tb.inputs() == ta.inputs() && tb.targets() == ta.targets(),
        "stage-two data differ beyond Σ",
    )?;
    let sn2 = a.stage_one.hyperparameters().noise_variance;
    ensure(
        ta.target_cov() == &(DMatrix::identity(ta.len(), ta.len()) * sn2),
        "Alt1 covariance is not σ² I",
    )?;
    Ok("20 oracle problems; stage one bit-identical across methods".into())
}

fn c5_cost_j() -> Check {
    let (pair, _) =
        sample_truth_pair(5, &TruthParams::default(), [0.0, 1.0]).map_err(|e| e.to_string())?;
    let inv = pair.inverse1().map_err(|e| e.to_string())?;
    let truth = |y: &[f64]| {
        y.iter()
            .map(|&v| inv.invert(v, INVERT_TOL).unwrap())
            .collect::<Vec<_>>()
    };
    let perfect = cost_j(truth, &pair, 2001).map_err(|e| e.to_string())?;
    ensure(perfect <= 1e-8, format!("perfect model J = {perfect:e}"))?;
    for offset in [0.01, -0.003] {
        let j = cost_j(
            |y| truth(y).iter().map(|v| v + offset).collect(),
            &pair,
            2001,
        )
        .map_err(|e| e.to_string())?;
        ensure(
            (j - offset.abs()).abs() <= 1e-6,
            format!("offset {offset}: J = {j}"),
        )?;
    }
    let ident = TruthPair::new(
        SensorTruth::identity(0.0),
        SensorTruth::identity(0.0),
        [0.0, 1.0],
    )
    .map_err(|e| e.to_string())?;
    let j = cost_j(
        |y| y.iter().map(|v| v + (2.0 * PI * v).sin()).collect(),
        &ident,
        2001,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        (j - 0.5f64.sqrt()).abs() <= 1e-4,
        format!("sine profile J = {j}"),
    )?;
    Ok(format!("perfect {perfect:.1e}; sine {j:.8}"))
}

fn c6_datasets() -> Check {
    let d = trial_data(6, &RunConfig::default()).map_err(|e| e.to_string())?;
    ensure(d.d2.len() == 64, format!("N2 = {}", d.d2.len()))?;
    ensure(d.d1.len() == 100, format!("N1 = {}", d.d1.len()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..500 {
        let n = rng.gen_range(4..300);
        let e = rng.gen_range(0..n / 2);
        let c = rng.gen_range(0..n);
        match d2_kept_indices(n, e, c) {
            Ok(k) => ensure(
                k.len() == n - 2 * e - c,
                format!("({n},{e},{c}) kept {}", k.len()),
            )?,
            Err(_) => ensure(2 * e + c + 2 > n, format!("({n},{e},{c}) wrongly rejected"))?,
        }
    }
    Ok("N2 = 64, N1 = 100; 500 random removal configs".into())
}

fn c7_determinism() -> Check {
    let cfg = RunConfig::default();
    let csv = |parallel| -> Result<Vec<u8>, String> {
        let res = run_campaign(16, cfg.seed, &cfg, parallel).map_err(|e| e.to_string())?;
        let rows: Vec<TrialRow> = res.iter().map(|r| r.row()).collect();
        let mut buf = Vec::new();
        write_trials_csv(&rows, &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    let serial = csv(1)?;
    let parallel = csv(8)?;
    ensure(
        serial == parallel,
        "trials.csv differs between parallelism 1 and 8",
    )?;
    Ok(format!("{} bytes identical", serial.len()))
}

fn c8_lut() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.gen_range(2..40);
        let mut x = 0.0;
        let bp: Vec<f64> = (0..n)
            .map(|_| {
                x += rng.gen_range(0.01..1.0);
                x
            })
            .collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let slope = LookupTable::new(bp.clone(), v.clone(), Extrapolation::Slope)
            .map_err(|e| e.to_string())?;
        let clamp = LookupTable::new(bp.clone(), v.clone(), Extrapolation::Clamp)
            .map_err(|e| e.to_string())?;
        for i in 0..n {
            ensure(
                lut_eval(&slope, bp[i]) == v[i] && lut_eval(&clamp, bp[i]) == v[i],
                "not exact at breakpoint",
            )?;
        }
        for i in 0..n - 1 {
            let mid = lut_eval(&slope, 0.5 * (bp[i] + bp[i + 1]));
            ensure(
                (mid - 0.5 * (v[i] + v[i + 1])).abs() <= 1e-12,
                "midpoint not linear",
            )?;
        }
        let d = 0.5;
        ensure(
            lut_eval(&clamp, bp[0] - d) == v[0] && lut_eval(&clamp, bp[n - 1] + d) == v[n - 1],
            "clamp",
        )?;
        let s0 = (v[1] - v[0]) / (bp[1] - bp[0]);
        let s1 = (v[n - 1] - v[n - 2]) / (bp[n - 1] - bp[n - 2]);
        ensure(
            (lut_eval(&slope, bp[0] - d) - (v[0] - s0 * d)).abs() <= 1e-9 * (1.0 + s0.abs()),
            "slope low",
        )?;
        ensure(
            (lut_eval(&slope, bp[n - 1] + d) - (v[n - 1] + s1 * d)).abs()
                <= 1e-9 * (1.0 + s1.abs()),
            "slope high",
        )?;
    }
    Ok("200 random tables, both extrapolation modes".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        (
            "1 monte carlo ordering",
            c1_monte_carlo,
            Duration::from_secs(20 * 60),
        ),
        (
            "2 gp oracle equivalence",
            c2_gp_oracle,
            Duration::from_secs(5),
        ),
        (
            "3 prior and interpolation identities",
            c3_identities,
            Duration::from_secs(1),
        ),
        (
            "4 propagation correctness",
            c4_propagation,
            Duration::from_secs(5),
        ),
        ("5 cost J oracle", c5_cost_j, Duration::from_secs(1)),
        (
            "6 dataset construction",
            c6_datasets,
            Duration::from_secs(1),
        ),
        ("7 determinism", c7_determinism, Duration::from_secs(3 * 60)),
        ("8 lookup table baseline", c8_lut, Duration::from_secs(1)),
    ];
    // run the quick checks first so a slow campaign does not hide them
    let order = [1, 2, 3, 4, 5, 7, 6, 0];
    let mut results = vec![None; criteria.len()];
    for &i in &order {
        let (name, f, limit) = criteria[i];
        let t = Instant::now();
        let outcome = f();
        let elapsed = t.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > limit => Err(format!("{d}; took {elapsed:.2?}, limit {limit:?}")),
            o => o,
        };
        let line = match &outcome {
            Ok(d) => format!("PASS criterion {name} ({elapsed:.2?}): {d}"),
            Err(e) => format!("FAIL criterion {name} ({elapsed:.2?}): {e}"),
        };
        println!("{line}");
        results[i] = Some((line, outcome.is_ok()));
    }
    println!("--- summary ---");
    let mut failed = 0;
    for r in results.into_iter().flatten() {
        println!("{}", r.0);
        if !r.1 {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
