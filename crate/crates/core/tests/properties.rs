use proptest::prelude::*;

use silentlab::domain::{GaussianDomainSpec, MixingMap};
use silentlab::harness::{grid_select, Criterion, SelectionRow};
use silentlab::risk::{bayes_classifier, bayes_risk, linear_classifier_risk, normal_cdf, DomainKind, LinearClassifier};
use silentlab::suppression::{suppress_latents, SuppressionWeights};
use silentlab::swad::{schedule, SwadConfig, SwadState};
use silentlab::trainer::{init_pretrained, PretrainKind, TwoStageModel};

fn spec_strategy() -> impl Strategy<Value = GaussianDomainSpec> {
    (
        prop::collection::vec(-2.0..2.0f64, 1..4),
        prop::collection::vec(-2.0..2.0f64, 1..4),
        0.3..3.0f64,
        0.3..3.0f64,
        0.05..0.95f64,
        -3.0..5.0f64,
    )
        .prop_map(|(mu_d, mu_s, sd, ss, eta, gamma)| {
            GaussianDomainSpec::new(mu_d, mu_s, sd, ss, eta)
                .unwrap()
                .with_gamma(gamma)
        })
}

fn weights_strategy() -> impl Strategy<Value = SuppressionWeights> {
    (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| SuppressionWeights::new(a, b).unwrap())
}

fn classifier_for(spec: &GaussianDomainSpec, seed: u64) -> LinearClassifier {
    // Cheap deterministic pseudo-random weights tied to the case.
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
    };
    LinearClassifier::new(
        (0..spec.p_d()).map(|_| next()).collect(),
        (0..spec.p_s()).map(|_| next()).collect(),
        next(),
    )
}

proptest! {
    #[test]
    fn cdf_symmetry_and_bounds(x in -40.0..40.0f64) {
        let f = normal_cdf(x);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f + normal_cdf(-x) - 1.0).abs() <= 2e-16);
    }

    #[test]
    fn cdf_monotone(x in -10.0..10.0f64, dx in 0.0..1.0f64) {
        prop_assert!(normal_cdf(x) <= normal_cdf(x + dx));
    }

    #[test]
    fn bayes_beats_the_constant_rule(spec in spec_strategy(), w in weights_strategy()) {
        let r = bayes_risk(&spec, w, DomainKind::Train);
        prop_assert!(r <= spec.eta.min(1.0 - spec.eta) + 1e-12);
        prop_assert!(r >= 0.0);
    }

    #[test]
    fn bayes_risk_is_lemma_risk_at_bayes_rule(spec in spec_strategy(), w in weights_strategy()) {
        let beta = bayes_classifier(&spec, w);
        for domain in [DomainKind::Train, DomainKind::Test] {
            let a = bayes_risk(&spec, w, domain);
            let b = linear_classifier_risk(&spec, w, &beta, domain).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn no_shift_means_equal_risks(spec in spec_strategy(), w in weights_strategy()) {
        let s = spec.with_gamma(1.0);
        prop_assert_eq!(bayes_risk(&s, w, DomainKind::Train), bayes_risk(&s, w, DomainKind::Test));
    }

    #[test]
    fn risk_is_scale_invariant(spec in spec_strategy(), w in weights_strategy(), seed in any::<u64>(), c in 0.01..100.0f64) {
        let beta = classifier_for(&spec, seed);
        let a = linear_classifier_risk(&spec, w, &beta, DomainKind::Test).unwrap();
        let b = linear_classifier_risk(&spec, w, &beta.scaled(c), DomainKind::Test).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn unbiased_rule_and_its_negation_sum_to_one(spec in spec_strategy(), w in weights_strategy(), seed in any::<u64>()) {
        let mut beta = classifier_for(&spec, seed);
        beta.beta_0 = 0.0;
        let a = linear_classifier_risk(&spec, w, &beta, DomainKind::Test).unwrap();
        let b = linear_classifier_risk(&spec, w, &beta.scaled(-1.0), DomainKind::Test).unwrap();
        prop_assert!((a + b - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn unit_weight_channel_is_identity(z in prop::collection::vec(-1e6..1e6f64, 1..8), sigma in 0.1..10.0f64, seed in any::<u64>()) {
        prop_assert_eq!(suppress_latents(&z, 1.0, sigma, seed).unwrap(), z);
    }

    #[test]
    fn orthogonal_mixing_roundtrips(z in prop::collection::vec(-10.0..10.0f64, 2..7), seed in any::<u64>()) {
        let m = MixingMap::seeded_orthogonal(z.len(), seed);
        let mut x = vec![0.0; z.len()];
        m.mix_into(&z, &mut x);
        let back = m.unmix(&x);
        for (a, b) in back.iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!(m.orthogonality_defect() <= 1e-12);
    }

    #[test]
    fn swad_window_is_ordered(losses in prop::collection::vec(0.01..10.0f64, 1..60), n_s in 1usize..6, r in 0.0..0.5f64) {
        let cfg = SwadConfig { r, eval_interval: 1, n_s };
        let (t_s, t_e) = schedule(&losses, &cfg).unwrap();
        prop_assert!(t_s < t_e && t_e <= losses.len());
        prop_assert!(losses[t_s..(t_s + n_s).min(losses.len())].iter().all(|&l| losses[t_s] <= l));
    }

    #[test]
    fn swad_online_matches_offline(losses in prop::collection::vec(0.01..10.0f64, 1..30), every in 1usize..5) {
        let cfg = SwadConfig { r: 0.1, eval_interval: every, n_s: 3 };
        let mut st = SwadState::new(cfg.clone()).unwrap();
        let mut evals = Vec::new();
        let total = losses.len() * every;
        for it in 0..total {
            st.accumulate(it, &[it as f64]).unwrap();
            if (it + 1) % every == 0 {
                st.record_eval(it, losses[it / every]).unwrap();
                evals.push(it);
            }
        }
        let (avg, report) = st.finalize().unwrap();
        let (t_s, t_e) = schedule(&losses, &cfg).unwrap();
        let start = evals[t_s];
        let end = evals.get(t_e).copied().unwrap_or(total);
        let expected: Vec<f64> = (start..end).map(|i| i as f64).collect();
        prop_assert_eq!(report.n_snapshots, expected.len());
        let mean = expected.iter().sum::<f64>() / expected.len() as f64;
        prop_assert!((avg[0] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    }

    #[test]
    fn swad_mean_is_exact(snaps in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 4), 1..50)) {
        let mut st = SwadState::new(SwadConfig::default()).unwrap();
        for (i, s) in snaps.iter().enumerate() {
            st.accumulate(i, s).unwrap();
        }
        let (avg, _) = st.finalize().unwrap();
        for j in 0..4 {
            let mean = snaps.iter().map(|s| s[j]).sum::<f64>() / snaps.len() as f64;
            prop_assert!((avg[j] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
        }
    }

    #[test]
    fn checkpoint_roundtrip(params in prop::collection::vec(-1e10..1e10f64, 13), p_d in 1usize..3) {
        let mixing = MixingMap::identity(3);
        let mut m = init_pretrained(&mixing, p_d, PretrainKind::OracleSilent, 0).unwrap();
        m.set_flat(&params);
        prop_assert_eq!(TwoStageModel::from_checkpoint(&m.to_checkpoint()).unwrap(), m);
    }

    #[test]
    fn effective_rule_predicts_like_the_model(
        params in prop::collection::vec(-2.0..2.0f64, 21),
        xs in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 4), 1..40),
        seed in any::<u64>(),
    ) {
        let mixing = MixingMap::seeded_orthogonal(4, seed);
        let mut m = init_pretrained(&mixing, 2, PretrainKind::OracleSilent, 0).unwrap();
        m.set_flat(&params);
        let rule = m.effective_rule(&mixing);
        for x in &xs {
            let score_model = m.score_with(x, &mut [0.0; 4]);
            let score_rule = rule.score(&mixing.unmix(x));
            prop_assert!((score_model - score_rule).abs() <= 1e-9);
            if score_model.abs() > 1e-9 {
                prop_assert_eq!(m.predict(x), rule.predict(&mixing.unmix(x)));
            }
        }
    }

    #[test]
    fn selection_picks_a_present_config(values in prop::collection::vec((0usize..4, 0u64..3, 0.0..1.0f64, 0.0..1.0f64), 1..30)) {
        let mut rows: Vec<SelectionRow> = values
            .iter()
            .enumerate()
            .map(|(i, &(config_id, seed, v, t))| SelectionRow { config_id, seed, candidate: i, train_val_risk: v, test_risk: t })
            .collect();
        // Fill the grid so every (config, seed) cell exists.
        let configs: Vec<usize> = rows.iter().map(|r| r.config_id).collect();
        let seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
        for &c in &configs {
            for &s in &seeds {
                rows.push(SelectionRow { config_id: c, seed: s, candidate: 1000, train_val_risk: 1.0, test_risk: 1.0 });
            }
        }
        for criterion in [Criterion::TrainVal, Criterion::TestVal] {
            let sel = grid_select(&rows, criterion).unwrap();
            prop_assert!(configs.contains(&sel.config_id));
            prop_assert!((0.0..=1.0).contains(&sel.score));
        }
    }
}
