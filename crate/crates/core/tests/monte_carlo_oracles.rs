//! Sampling estimates against closed forms and trivial limits. Every check
//! uses a 4-sigma binomial interval (8 for sums of two estimates).

use silentlab::domain::{sample_domain, GaussianDomainSpec, MixingMap};
use silentlab::monte_carlo::{mc_model_risk, mc_risk};
use silentlab::risk::{bayes_classifier, bayes_risk, linear_classifier_risk, DomainKind, LinearClassifier};
use silentlab::suppression::SuppressionWeights;
use silentlab::trainer::TwoStageModel;

const N: u64 = 1_000_000;

#[test]
fn invariant_bayes_rule() {
    let spec = GaussianDomainSpec::balanced(vec![1.0, 0.0], vec![0.5, 0.5], 1.0).unwrap();
    let beta = bayes_classifier(&spec, SuppressionWeights::INVARIANT);
    let mixing = MixingMap::seeded_orthogonal(4, 1);
    let est = mc_risk(
        &spec,
        SuppressionWeights::INVARIANT,
        &beta,
        DomainKind::Train,
        &mixing,
        N,
        7,
    )
    .unwrap();
    assert!(est.within(0.158655253931457, 4.0), "{est:?}");
    assert!((est.stderr - 3.65e-4).abs() < 1e-5);
}

#[test]
fn reversed_silent_mean_cancels_the_signal() {
    let spec = GaussianDomainSpec::balanced(vec![1.0], vec![1.0], 1.0)
        .unwrap()
        .with_gamma(-1.0);
    let beta = bayes_classifier(&spec, SuppressionWeights::IDENTITY);
    let est = mc_risk(
        &spec,
        SuppressionWeights::IDENTITY,
        &beta,
        DomainKind::Test,
        &MixingMap::identity(2),
        N,
        8,
    )
    .unwrap();
    assert!(est.within(0.5, 4.0), "{est:?}");
}

#[test]
fn suppressed_features_match_the_lemma() {
    let spec = GaussianDomainSpec::new(vec![0.8, -0.3], vec![0.4], 1.3, 0.6, 0.35)
        .unwrap()
        .with_gamma(2.5);
    let w = SuppressionWeights::new(0.6, 0.3).unwrap();
    let beta = LinearClassifier::new(vec![1.0, -0.5], vec![2.0], -0.2);
    let mixing = MixingMap::seeded_orthogonal(3, 2);
    for (domain, seed) in [(DomainKind::Train, 10), (DomainKind::Test, 11)] {
        let exact = linear_classifier_risk(&spec, w, &beta, domain).unwrap();
        let est = mc_risk(&spec, w, &beta, domain, &mixing, N, seed).unwrap();
        assert!(est.within(exact, 4.0), "{domain:?}: {est:?} vs {exact}");
    }
}

#[test]
fn negated_unbiased_rules_are_complementary() {
    let spec = GaussianDomainSpec::new(vec![0.5], vec![0.7, 0.1], 1.0, 0.8, 0.4)
        .unwrap()
        .with_gamma(3.0);
    let w = SuppressionWeights::new(0.9, 0.5).unwrap();
    let beta = LinearClassifier::new(vec![0.3], vec![-1.0, 2.0], 0.0);
    let mixing = MixingMap::identity(3);
    let a = mc_risk(&spec, w, &beta, DomainKind::Test, &mixing, N, 20).unwrap();
    let b = mc_risk(&spec, w, &beta.scaled(-1.0), DomainKind::Test, &mixing, N, 21).unwrap();
    assert!((a.mean + b.mean - 1.0).abs() <= 8.0 * a.stderr.max(b.stderr));
}

#[test]
fn bayes_pipeline_on_a_held_out_dataset() {
    let spec = GaussianDomainSpec::new(vec![1.0, 0.5], vec![0.3], 1.0, 1.0, 0.6).unwrap();
    let mixing = MixingMap::seeded_orthogonal(3, 3);
    let model = TwoStageModel::from_classifier(&mixing, &bayes_classifier(&spec, SuppressionWeights::IDENTITY));
    let data = sample_domain(&spec, &mixing, 200_000, 30).unwrap();
    let est = mc_model_risk(&model, &data).unwrap();
    let exact = bayes_risk(&spec, SuppressionWeights::IDENTITY, DomainKind::Train);
    assert!(est.within(exact, 4.0), "{est:?} vs {exact}");
}

#[test]
fn zero_head_errs_on_negatives() {
    let spec = GaussianDomainSpec::new(vec![1.0], vec![0.3], 1.0, 1.0, 0.3).unwrap();
    let mixing = MixingMap::identity(2);
    let model = TwoStageModel::from_classifier(&mixing, &LinearClassifier::new(vec![0.0], vec![0.0], 0.5));
    let data = sample_domain(&spec, &mixing, 5000, 31).unwrap();
    let negatives = data.samples.iter().filter(|s| s.y < 0).count() as f64 / 5000.0;
    assert_eq!(mc_model_risk(&model, &data).unwrap().mean, negatives);
}

#[test]
fn random_grid_agreement() {
    // Smaller sibling of the acceptance grid, with a different seed family.
    let mut passed = 0;
    for i in 0..20u64 {
        let f = |k: u64| ((i * 7919 + k * 104_729) % 1000) as f64 / 1000.0;
        let spec = GaussianDomainSpec::new(
            vec![f(1) * 2.0 - 1.0],
            vec![f(2) - 0.5, f(3) * 0.4],
            0.5 + f(4),
            0.5 + f(5),
            0.2 + 0.6 * f(6),
        )
        .unwrap()
        .with_gamma(5.0 * f(7) - 2.0);
        let w = SuppressionWeights::new(f(8), f(9)).unwrap();
        let beta = LinearClassifier::new(vec![f(10) * 2.0 - 1.0], vec![f(11) - 0.5, f(12)], f(13) - 0.5);
        let exact = linear_classifier_risk(&spec, w, &beta, DomainKind::Test).unwrap();
        let est = mc_risk(
            &spec,
            w,
            &beta,
            DomainKind::Test,
            &MixingMap::seeded_orthogonal(3, i),
            200_000,
            500 + i,
        )
        .unwrap();
        passed += usize::from(est.within(exact, 4.0));
    }
    assert!(passed >= 19, "{passed}/20");
}
