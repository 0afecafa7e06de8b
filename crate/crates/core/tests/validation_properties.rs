use gbs_core::gaussian::{haar_unitary, SqueezingSpec};
use gbs_core::pattern::OutputPattern;
use gbs_core::rng::RngStream;
use gbs_core::samplers::{sample_ideal, sample_lossy, LossMethod};
use gbs_core::validation::{
    chi_square_from_counts, chi_square_test, sample_box_run, train_clusters, BinningPartition, BoxSettings,
    Expectation,
};
use gbs_core::Exec;
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn training() -> Vec<OutputPattern> {
    let spec = SqueezingSpec::new(4, 4, 0.5).unwrap();
    sample_ideal(&spec, &haar_unitary(4, 3).unwrap(), 1500, 3, 60, Exec::Parallel).unwrap().patterns
}

fn dist2(a: &[f64], s: &OutputPattern) -> f64 {
    a.iter().zip(&s.0).map(|(c, &x)| (c - x as f64).powi(2)).sum()
}

#[test]
fn clustering_is_deterministic_and_assigns_nearest_centroids() {
    let data = training();
    let a = train_clusters(&data, 25, 4, Exec::Parallel).unwrap();
    let b = train_clusters(&data, 25, 4, Exec::Sequential).unwrap();
    assert_eq!(a.centroids, b.centroids);
    assert_eq!(a.training_counts, b.training_counts);
    assert_eq!(a.training_counts.iter().sum::<usize>(), data.len());
    // Recount memberships by brute-force nearest centroid.
    let mut counts = vec![0usize; a.k];
    for s in &data {
        let best = (0..a.k)
            .min_by(|&i, &j| dist2(&a.centroids[i], s).total_cmp(&dist2(&a.centroids[j], s)).then(i.cmp(&j)))
            .unwrap();
        counts[best] += 1;
    }
    assert_eq!(counts, a.training_counts);
}

#[test]
fn chi_square_is_invariant_under_relabeling_and_shuffling() {
    let data = training();
    let model = train_clusters(&data, 20, 5, Exec::Parallel).unwrap();
    let spec = SqueezingSpec::new(4, 4, 0.5).unwrap();
    let itf = haar_unitary(4, 3).unwrap();
    let bona = sample_ideal(&spec, &itf, 800, 3, 61, Exec::Parallel).unwrap().patterns;
    let test = sample_lossy(&spec, &itf, 0.8, 800, 3, 62, LossMethod::Direct, Exec::Parallel).unwrap().patterns;
    for rule in [Expectation::GrandTotal, Expectation::ClusterCount] {
        let base = chi_square_test(&model, &bona, &test, rule).unwrap();
        let mut shuffled = test.clone();
        shuffled.shuffle(&mut RngStream::new(3, 0).rng());
        let again = chi_square_test(&model, &bona, &shuffled, rule).unwrap();
        assert!((again.chi2 - base.chi2).abs() <= 1e-9 * base.chi2.abs().max(1.0));
    }
    let bona_counts = [30, 0, 12, 7, 51];
    let test_counts = [20, 4, 9, 9, 40];
    let perm = [3, 0, 4, 1, 2];
    for rule in [Expectation::GrandTotal, Expectation::ClusterCount] {
        let x = chi_square_from_counts(&bona_counts, &test_counts, rule).unwrap();
        let pb: Vec<usize> = perm.iter().map(|&i| bona_counts[i]).collect();
        let pt: Vec<usize> = perm.iter().map(|&i| test_counts[i]).collect();
        assert!((chi_square_from_counts(&pb, &pt, rule).unwrap() - x).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn proportional_counts_give_zero(base in prop::collection::vec(0usize..40, 2..12), scale in 1usize..5) {
        prop_assume!(base.iter().sum::<usize>() > 0);
        let scaled: Vec<usize> = base.iter().map(|&n| n * scale).collect();
        let chi2 = chi_square_from_counts(&base, &scaled, Expectation::GrandTotal).unwrap();
        prop_assert!(chi2.abs() < 1e-9);
    }

    #[test]
    fn non_proportional_counts_give_positive(
        base in prop::collection::vec(1usize..40, 2..12),
        bump in 1usize..10,
        at in any::<prop::sample::Index>(),
    ) {
        let mut other = base.clone();
        let i = at.index(other.len());
        other[i] += bump;
        let chi2 = chi_square_from_counts(&base, &other, Expectation::GrandTotal).unwrap();
        prop_assert!(chi2 > 0.0);
    }
}

#[test]
fn sample_box_is_reproducible_and_worker_independent() {
    let data = training();
    let model = train_clusters(&data, 15, 6, Exec::Parallel).unwrap();
    let spec = SqueezingSpec::new(4, 4, 0.5).unwrap();
    let itf = haar_unitary(4, 3).unwrap();
    let bona = sample_ideal(&spec, &itf, 2000, 3, 63, Exec::Parallel).unwrap().patterns;
    let test = sample_lossy(&spec, &itf, 0.9, 2000, 3, 64, LossMethod::Thinning, Exec::Parallel).unwrap().patterns;
    let settings = BoxSettings { repetitions: 150, draw_size: 200, seed: 9, expectation: Expectation::ClusterCount };
    let par = sample_box_run(&model, &bona, &test, settings, Exec::Parallel).unwrap();
    let seq = sample_box_run(&model, &bona, &test, settings, Exec::Sequential).unwrap();
    assert_eq!(par.chi2_values, seq.chi2_values);
    assert_eq!(par.chi2_values.len(), 150);
    assert!(par.chi2_values.iter().all(|x| x.is_finite() && *x >= 0.0));
}

#[test]
fn binning_sums_photons_within_subsets() {
    let p = BinningPartition::adjacent_pairs(6);
    assert_eq!(p.to_spec_string(), "1,2|3,4|5,6");
    assert_eq!(p.apply(&OutputPattern(vec![1, 2, 0, 0, 3, 1])).0, vec![3, 0, 4]);
    assert_eq!(p.subset_cutoffs(3), vec![6, 6, 6]);
    assert!(BinningPartition::parse("1,2|2,3", 3).is_err());
    assert!(BinningPartition::parse("1|3", 3).is_err());
}
