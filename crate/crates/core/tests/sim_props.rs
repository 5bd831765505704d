use cascal::montecarlo::trial_data;
use cascal::sim::{
    cost_j, d2_kept_indices, generate_d1, generate_d2, sample_truth, sample_truth_pair, substream,
    SensorTruth, TruthPair, TruthParams,
};
use cascal::RunConfig;
use proptest::prelude::*;

proptest! {
    #[test]
    fn kept_count_follows_removal_algebra(n in 4usize..400, e in 0usize..100, c in 0usize..200) {
        match d2_kept_indices(n, e, c) {
            Ok(k) => {
                prop_assert_eq!(k.len(), n - 2 * e - c);
                prop_assert!(k.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(k.iter().all(|&i| i >= e && i < n - e));
            }
            Err(err) => prop_assert!(2 * e + c + 2 > n, "{err}"),
        }
    }

    #[test]
    fn zero_coefficient_truth_has_zero_identity_cost(noise in 0.0f64..1e-6) {
        let pair = TruthPair::new(SensorTruth::identity(noise), SensorTruth::identity(noise), [0.0, 1.0]).unwrap();
        prop_assert!(cost_j(|y| y.to_vec(), &pair, 2001).unwrap() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn datasets_are_reproducible(seed in any::<u64>()) {
        let cfg = RunConfig::default();
        let a = trial_data(seed, &cfg).unwrap();
        let b = trial_data(seed, &cfg).unwrap();
        prop_assert_eq!(a.pair, b.pair);
        prop_assert_eq!(a.d1, b.d1);
        prop_assert_eq!(a.d2, b.d2);
    }

    #[test]
    fn quadrature_has_converged_at_default_resolution(seed in 0u64..1000) {
        let (pair, _) = sample_truth_pair(seed, &TruthParams::default(), [0.0, 1.0]).unwrap();
        let model = |y: &[f64]| y.iter().map(|v| v + 1e-3 * (3.0 * v).sin()).collect::<Vec<_>>();
        let coarse = cost_j(model, &pair, 2001).unwrap();
        let fine = cost_j(model, &pair, 8001).unwrap();
        prop_assert!((coarse - fine).abs() <= 1e-6 * fine, "{coarse} vs {fine}");
    }
}

#[test]
fn default_dataset_sizes() {
    let d = trial_data(1, &RunConfig::default()).unwrap();
    assert_eq!(d.d2.len(), 64);
    assert_eq!(d.d1.len(), 100);
}

#[test]
fn sampled_coefficients_have_requested_variance() {
    let p = TruthParams {
        n_terms: 50,
        ..TruthParams::default()
    };
    let mut s = Vec::new();
    let mut f = Vec::new();
    for seed in 0..200 {
        let t = sample_truth(seed, &p).unwrap();
        s.extend(t.sin_coeffs.iter().chain(&t.cos_coeffs));
        f.extend(t.freqs);
    }
    let var = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    let cv = var(&s);
    let fv = var(&f);
    assert!((cv / p.coeff_var - 1.0).abs() < 0.05, "coeff variance {cv}");
    assert!((fv / p.freq_var - 1.0).abs() < 0.05, "freq variance {fv}");
}

#[test]
fn noise_has_requested_variance() {
    let pair = TruthPair::new(
        SensorTruth::identity(1e-8),
        SensorTruth::identity(1e-8),
        [0.0, 1.0],
    )
    .unwrap();
    let mut rng = substream(9, 0);
    let mut sq = 0.0;
    let mut n = 0;
    for _ in 0..20 {
        let d1 = generate_d1(&pair, 500, &mut rng).unwrap();
        let d2 = generate_d2(&pair, 500, 0, 0, &mut rng).unwrap();
        for d in [&d1, &d2] {
            for (x, y) in d.x().iter().zip(d.y()) {
                // two independent noisy reads of the same position
                sq += (x - y) * (x - y);
                n += 1;
            }
        }
    }
    let var = sq / n as f64 / 2.0;
    assert!((var / 1e-8 - 1.0).abs() < 0.05, "{var}");
}

#[test]
fn non_monotone_draws_are_counted() {
    // large coefficients make most draws non-monotone
    let p = TruthParams {
        coeff_var: 4e-3,
        ..TruthParams::default()
    };
    let total: u64 = (0..20)
        .map(|s| {
            sample_truth_pair(s, &p, [0.0, 1.0])
                .map(|r| r.1)
                .unwrap_or(0)
        })
        .sum();
    assert!(total > 0);
    let (a, ra) = sample_truth_pair(3, &p, [0.0, 1.0]).unwrap();
    let (b, rb) = sample_truth_pair(3, &p, [0.0, 1.0]).unwrap();
    assert_eq!((a, ra), (b, rb));
}
