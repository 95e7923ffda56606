use pllab::data::{
    flip_probabilities, gen_entangled_gaussians, load, save, synthesize_candidates, train_annotator,
    AnnotatorConfig, AnnotatorPosterior, ClassPairOverlap, Covariance, DataError, FeatureDims, GaussianSpec,
    LabelSet, PLLDataset, PartialSample,
};
use pllab::numkernel::{cosine, euclidean, Tensor};
use proptest::prelude::*;

fn worked_posterior(n: usize) -> AnnotatorPosterior {
    AnnotatorPosterior::new(vec![vec![0.6, 0.3, 0.1]; n]).unwrap()
}

#[test]
fn monte_carlo_frequency_of_half_probability_label() {
    let n = 10_000;
    let sets = synthesize_candidates(&worked_posterior(n), &vec![0; n], 1.0, 2024).unwrap();
    let hits = sets.iter().filter(|s| s.contains(2)).count() as f64 / n as f64;
    let bound = 3.0 * (0.25f64 / n as f64).sqrt();
    assert!((hits - 0.5).abs() <= bound, "frequency {hits}");
    assert!(sets.iter().all(|s| s.contains(0) && s.contains(1)));
}

#[test]
fn empirical_flip_rates_match_analytic_on_random_posteriors() {
    let c = 5;
    let row = vec![0.5, 0.2, 0.15, 0.1, 0.05];
    let n = 20_000;
    let post = AnnotatorPosterior::new(vec![row.clone(); n]).unwrap();
    let tau = 0.6;
    let sets = synthesize_candidates(&post, &vec![0; n], tau, 7).unwrap();
    let analytic = flip_probabilities(&row, 0, tau).unwrap();
    for j in 1..c {
        let p = analytic[j];
        assert!(p <= 1.0);
        let freq = sets.iter().filter(|s| s.contains(j)).count() as f64 / n as f64;
        let bound = 3.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12;
        assert!((freq - p).abs() <= bound, "label {j}: {freq} vs {p}");
    }
}

fn blobs(n: usize, seed: u64) -> PLLDataset {
    let spec = GaussianSpec {
        means: vec![vec![-3.0, 0.0], vec![3.0, 0.0]],
        covariances: vec![Covariance::Isotropic(0.5); 2],
        entangled: vec![],
    };
    gen_entangled_gaussians(&spec, n, seed).unwrap()
}

#[test]
fn separable_blobs_give_accurate_annotator() {
    let data = blobs(200, 3);
    let annotator = train_annotator(&data, &AnnotatorConfig { epochs: 30, ..Default::default() }).unwrap();
    let acc = annotator.accuracy(&data).unwrap();
    assert!(acc > 0.95, "accuracy {acc}");
}

#[test]
fn untrained_annotator_is_near_uniform() {
    let spec = GaussianSpec::benchmark(4, 8, 1.0, 0.5).unwrap();
    let data = gen_entangled_gaussians(&spec, 400, 1).unwrap();
    let annotator = train_annotator(&data, &AnnotatorConfig { epochs: 0, ..Default::default() }).unwrap();
    let post = annotator.posteriors(&data).unwrap();
    let c = 4;
    let mut means = vec![0.0; c];
    for i in 0..post.len() {
        for (m, p) in means.iter_mut().zip(post.row(i)) {
            *m += p / post.len() as f64;
        }
    }
    for m in means {
        assert!((m - 1.0 / c as f64).abs() <= 0.1, "column mean {m}");
    }
}

#[test]
fn average_candidates_monotone_in_tau_rate() {
    let spec = GaussianSpec::benchmark(4, 8, 2.0, 1.0).unwrap();
    let data = gen_entangled_gaussians(&spec, 400, 5).unwrap();
    let annotator = train_annotator(&data, &AnnotatorConfig { epochs: 5, ..Default::default() }).unwrap();
    let post = annotator.posteriors(&data).unwrap();
    let labels = data.true_labels().unwrap();
    let mut last = 0.0;
    for tau in [0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0] {
        let sets = synthesize_candidates(&post, &labels, tau, 99).unwrap();
        let avg = sets.iter().map(LabelSet::len).sum::<usize>() as f64 / sets.len() as f64;
        if tau == 0.0 {
            assert_eq!(avg, 1.0);
        }
        assert!(avg >= last, "tau {tau}: {avg} < {last}");
        last = avg;
    }
}

#[test]
fn far_classes_have_no_similar_pairs() {
    let mut a = vec![0.0; 4];
    let mut b = vec![0.0; 4];
    a[1] = 50.0;
    b[1] = -50.0;
    let spec = GaussianSpec { means: vec![a, b], covariances: vec![Covariance::Isotropic(1.0); 2], entangled: vec![] };
    let data = gen_entangled_gaussians(&spec, 200, 11).unwrap();
    let feats: Vec<&[f64]> = data.samples().iter().map(|s| s.features.values()).collect();
    let labels = data.true_labels().unwrap();
    for i in 0..feats.len() {
        for j in i + 1..feats.len() {
            if labels[i] != labels[j] {
                assert!(cosine(feats[i], feats[j]) < 0.9);
            }
        }
    }
}

#[test]
fn identical_means_mix_neighbours() {
    // Classes 0 and 1 share a mean; classes 2 and 3 are far away.
    let mut spec = GaussianSpec::benchmark(4, 8, 20.0, 6.0).unwrap();
    spec.entangled = vec![ClassPairOverlap { a: 0, b: 1, distance: 0.0 }];
    let data = gen_entangled_gaussians(&spec, 400, 13).unwrap();
    let labels = data.true_labels().unwrap();
    let feats: Vec<&[f64]> = data.samples().iter().map(|s| s.features.values()).collect();
    let (mut partner, mut total) = (0usize, 0usize);
    for i in 0..feats.len() {
        if labels[i] > 1 {
            continue;
        }
        let nearest = (0..feats.len())
            .filter(|&j| labels[j] != labels[i])
            .min_by(|&a, &b| euclidean(feats[i], feats[a]).total_cmp(&euclidean(feats[i], feats[b])))
            .unwrap();
        total += 1;
        partner += usize::from(labels[nearest] == 1 - labels[i]);
    }
    assert!(partner as f64 / total as f64 > 0.5, "{partner}/{total}");
}

#[test]
fn one_sample_per_class_when_n_equals_c() {
    let spec = GaussianSpec::benchmark(6, 6, 4.0, 1.0).unwrap();
    let data = gen_entangled_gaussians(&spec, 6, 0).unwrap();
    let mut labels = data.true_labels().unwrap();
    labels.sort();
    assert_eq!(labels, vec![0, 1, 2, 3, 4, 5]);
}

#[test]
fn non_psd_covariance_is_parameter_error() {
    let spec = GaussianSpec {
        means: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        covariances: vec![Covariance::Isotropic(1.0), Covariance::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]])],
        entangled: vec![],
    };
    assert!(matches!(gen_entangled_gaussians(&spec, 10, 0), Err(DataError::Parameter(_))));
}

fn arb_dataset() -> impl Strategy<Value = PLLDataset> {
    (2usize..6, 1usize..5, 1usize..20).prop_flat_map(|(c, d, n)| {
        proptest::collection::vec(
            (
                proptest::collection::vec(-1e6f64..1e6, d),
                0..c,
                proptest::collection::vec(any::<bool>(), c),
                any::<bool>(),
            ),
            n,
        )
        .prop_map(move |rows| {
            let samples = rows
                .into_iter()
                .map(|(x, y, extra, hidden)| {
                    let mut s = LabelSet::singleton(c, y);
                    extra.iter().enumerate().filter(|(_, &b)| b).for_each(|(j, _)| s.insert(j));
                    PartialSample {
                        features: Tensor::from_vec(x).unwrap(),
                        candidates: s,
                        true_label: if hidden { None } else { Some(y) },
                    }
                })
                .collect();
            PLLDataset::new(samples, c, FeatureDims::Flat(d)).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn dataset_file_round_trip(data in arb_dataset()) {
        let mut buf = Vec::new();
        save(&data, &mut buf).unwrap();
        let back = load(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), data.len());
        for (a, b) in back.samples().iter().zip(data.samples()) {
            let bits = |t: &Tensor| t.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.features), bits(&b.features));
            prop_assert_eq!(&a.candidates, &b.candidates);
            prop_assert_eq!(a.true_label, b.true_label);
        }
    }

    #[test]
    fn synthesis_keeps_true_label_and_clips(
        rows in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 4), 1..30),
        tau in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|r| { let s: f64 = r.iter().sum(); r.iter().map(|v| v / s).collect() }).collect();
        let labels: Vec<usize> = (0..rows.len()).map(|i| i % 4).collect();
        for (r, &y) in rows.iter().zip(&labels) {
            prop_assert!(flip_probabilities(r, y, tau).unwrap().iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        let post = AnnotatorPosterior::new(rows).unwrap();
        let sets = synthesize_candidates(&post, &labels, tau, seed).unwrap();
        for (s, &y) in sets.iter().zip(&labels) {
            prop_assert!(s.contains(y));
        }
    }
}
