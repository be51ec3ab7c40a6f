use std::collections::BTreeMap;

use labelscope_core::embedding::{zero_shot_classify, ClassifierConfig, EmbeddingVector};
use labelscope_core::noise::{
    augmented_triplet_loss, noise_aware_classify, noise_gradient, train_noise_dictionary,
    triplet_loss, FeatureStore, NoiseDictionary, Triplet, TripletConfig,
};
use labelscope_core::ClassId;
use proptest::prelude::*;

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
}

fn ev(v: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec()).unwrap()
}

fn classifier_case() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
    (1usize..12, 1usize..8)
        .prop_flat_map(|(dim, k)| (vector(dim), proptest::collection::vec(vector(dim), k)))
}

fn texts(ts: &[Vec<f64>]) -> Vec<(ClassId, EmbeddingVector)> {
    ts.iter()
        .enumerate()
        .map(|(i, t)| (ClassId(i as u32 + 1), ev(t)))
        .collect()
}

proptest! {
    #[test]
    fn distribution_is_normalized((img, ts) in classifier_case(), scale in 0.1f64..500.0) {
        let c = zero_shot_classify(&ev(&img), &texts(&ts), &ClassifierConfig::new(scale).unwrap()).unwrap();
        let total: f64 = c.probabilities.iter().map(|(_, p)| p).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
        prop_assert!(c.probabilities.iter().all(|(_, p)| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn positive_scaling_changes_nothing((img, ts) in classifier_case(), k in 0.01f64..100.0, which in any::<prop::sample::Index>()) {
        let cfg = ClassifierConfig::default();
        let base = zero_shot_classify(&ev(&img), &texts(&ts), &cfg).unwrap();
        let scaled_img: Vec<f64> = img.iter().map(|x| x * k).collect();
        let a = zero_shot_classify(&ev(&scaled_img), &texts(&ts), &cfg).unwrap();
        let mut ts2 = ts.clone();
        let j = which.index(ts2.len());
        ts2[j] = ts2[j].iter().map(|x| x * k).collect();
        let b = zero_shot_classify(&ev(&img), &texts(&ts2), &cfg).unwrap();
        for other in [&a, &b] {
            prop_assert_eq!(other.predicted, base.predicted);
            for ((_, p), (_, q)) in base.probabilities.iter().zip(&other.probabilities) {
                prop_assert!((p - q).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn sharper_scale_keeps_argmax((img, ts) in classifier_case(), s in 1.0f64..100.0, f in 1.0f64..10.0) {
        let lo = zero_shot_classify(&ev(&img), &texts(&ts), &ClassifierConfig::new(s).unwrap()).unwrap();
        let hi = zero_shot_classify(&ev(&img), &texts(&ts), &ClassifierConfig::new(s * f).unwrap()).unwrap();
        prop_assert_eq!(lo.predicted, hi.predicted);
        prop_assert!(hi.confidence >= lo.confidence - 1e-12);
    }

    #[test]
    fn losses_are_non_negative(d_ap in 0.0f64..10.0, d_an in 0.0f64..10.0, margin in 0.0f64..5.0, fx in noise_case(4)) {
        prop_assert!(triplet_loss(d_ap, d_an, margin).unwrap() >= 0.0);
        let (store, dict, t) = fx;
        prop_assert!(augmented_triplet_loss(&t, &store, &dict, margin).unwrap() >= 0.0);
    }

    #[test]
    fn shared_noise_leaves_intra_class_distance(fx in noise_case(6)) {
        let (store, dict, t) = fx;
        let f = store.features(t.class).unwrap();
        let n = dict.get(t.class).unwrap();
        let raw = f[t.anchor].euclidean_distance(&f[t.positive]).unwrap();
        let shifted = f[t.anchor].add(n).unwrap().euclidean_distance(&f[t.positive].add(n).unwrap()).unwrap();
        prop_assert!((raw - shifted).abs() <= 1e-12);
    }

    #[test]
    fn zero_dictionary_reduces_exactly(fx in noise_case(5), margin in 0.0f64..2.0) {
        let (store, _, t) = fx;
        let zero = NoiseDictionary::zeros(store.dim(), store.classes()).unwrap();
        let f = |c: ClassId, i: usize| store.features(c).unwrap()[i].clone();
        let d_ap = f(t.class, t.anchor).euclidean_distance(&f(t.class, t.positive)).unwrap();
        let d_an = f(t.class, t.anchor).euclidean_distance(&f(t.negative_class, t.negative)).unwrap();
        prop_assert_eq!(
            augmented_triplet_loss(&t, &store, &zero, margin).unwrap(),
            triplet_loss(d_ap, d_an, margin).unwrap()
        );
        let texts: Vec<_> = store.classes().map(|c| (c, f(c, 0))).collect();
        let img = f(t.class, t.anchor);
        let cfg = ClassifierConfig::default();
        prop_assert_eq!(
            noise_aware_classify(&img, &texts, &zero, &cfg).unwrap(),
            zero_shot_classify(&img, &texts, &cfg).unwrap()
        );
    }

    #[test]
    fn inactive_hinge_has_zero_gradient(fx in noise_case(3)) {
        let (store, dict, t) = fx;
        let (g_c, g_n) = noise_gradient(&t, &store, &dict, 0.0).unwrap();
        let loss = augmented_triplet_loss(&t, &store, &dict, 0.0).unwrap();
        if loss == 0.0 {
            prop_assert!(g_c.is_zero() && g_n.is_zero());
        }
    }
}

/// Two classes with three frames each, a random dictionary and a triplet.
fn noise_case(dim: usize) -> impl Strategy<Value = (FeatureStore, NoiseDictionary, Triplet)> {
    (
        proptest::collection::vec(vector(dim), 6),
        proptest::collection::vec(-0.5f64..0.5, dim * 2),
        0usize..3,
        0usize..2,
        0usize..3,
    )
        .prop_map(move |(fs, noise, anchor, pos, negative)| {
            let mut m = BTreeMap::new();
            m.insert(ClassId(1), fs[..3].iter().map(|v| ev(v)).collect());
            m.insert(ClassId(2), fs[3..].iter().map(|v| ev(v)).collect());
            let store = FeatureStore::new(m).unwrap();
            let dict = NoiseDictionary::new(
                dim,
                [
                    (ClassId(1), ev(&noise[..dim])),
                    (ClassId(2), ev(&noise[dim..])),
                ]
                .into_iter()
                .collect(),
            )
            .unwrap();
            let positive = if pos >= anchor { pos + 1 } else { pos };
            let t = Triplet {
                class: ClassId(1),
                anchor,
                positive,
                negative_class: ClassId(2),
                negative,
            };
            (store, dict, t)
        })
}

#[test]
fn hinge_stationarity() {
    // Two tight, far-apart clusters: every triplet is inactive from the start.
    let mut m = BTreeMap::new();
    for (c, centre) in [(1u32, 0.0), (2u32, 10.0)] {
        m.insert(
            ClassId(c),
            (0..5)
                .map(|i| ev(&[centre + 0.01 * i as f64, 1.0, -0.5]))
                .collect(),
        );
    }
    let store = FeatureStore::new(m).unwrap();
    let cfg = |epochs| TripletConfig {
        margin: 0.5,
        epochs,
        seed: 11,
        ..TripletConfig::default()
    };
    let (one, trace_one) = train_noise_dictionary(&store, &cfg(1), None).unwrap();
    let (many, trace_many) = train_noise_dictionary(&store, &cfg(12), None).unwrap();
    assert_eq!(trace_one, vec![0.0]);
    assert!(trace_many.iter().all(|l| *l == 0.0));
    assert_eq!(one, many);
}
