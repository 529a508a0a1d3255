use fedround_core::{fed_avg, AggregationMode, ClientUpdate, ModelSpec, Weights};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec() -> ModelSpec {
    ModelSpec::new(vec![3, 4, 2]).unwrap()
}

fn updates_from(values: Vec<Vec<f64>>, samples: &[usize]) -> Vec<ClientUpdate> {
    values
        .into_iter()
        .zip(samples)
        .enumerate()
        .map(|(k, (v, &n))| ClientUpdate {
            client_id: format!("client-{k:02}"),
            round: 4,
            weights: Weights::from_values(spec(), v).unwrap(),
            n_samples: n,
        })
        .collect()
}

/// Naive weighted sum over the updates as given.
fn naive_weighted_sum(updates: &[ClientUpdate]) -> Vec<f64> {
    let total: usize = updates.iter().map(|u| u.n_samples).sum();
    let mut out = vec![0.0; updates[0].weights.len()];
    for u in updates {
        let c = u.n_samples as f64 / total as f64;
        for (o, v) in out.iter_mut().zip(u.weights.values()) {
            *o += c * v;
        }
    }
    out
}

#[test]
fn matches_naive_oracle_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = spec().n_params();
    for _ in 0..100 {
        let k = rng.random_range(2..=8);
        let values: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let samples: Vec<usize> = (0..k).map(|_| rng.random_range(1..2000)).collect();
        let updates = updates_from(values, &samples);
        let got = fed_avg(&updates, AggregationMode::SampleWeighted).unwrap();
        for (a, b) in got.values().iter().zip(naive_weighted_sum(&updates)) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

fn case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    let n = spec().n_params();
    (1usize..7).prop_flat_map(move |k| {
        (
            prop::collection::vec(prop::collection::vec(-1e3f64..1e3, n), k),
            prop::collection::vec(1usize..500, k),
        )
    })
}

proptest! {
    #[test]
    fn result_is_convex_combination((values, samples) in case()) {
        let updates = updates_from(values, &samples);
        for mode in [AggregationMode::SampleWeighted, AggregationMode::Uniform] {
            let got = fed_avg(&updates, mode).unwrap();
            for (i, v) in got.values().iter().enumerate() {
                let lo = updates.iter().map(|u| u.weights.values()[i]).fold(f64::INFINITY, f64::min);
                let hi = updates.iter().map(|u| u.weights.values()[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= *v && *v <= hi);
            }
        }
    }

    #[test]
    fn identical_inputs_are_returned_exactly(v in prop::collection::vec(-1e6f64..1e6, 26), samples in prop::collection::vec(1usize..1000, 1..9)) {
        let updates = updates_from(vec![v.clone(); samples.len()], &samples);
        let got = fed_avg(&updates, AggregationMode::SampleWeighted).unwrap();
        prop_assert_eq!(got.values(), &v[..]);
    }

    #[test]
    fn order_of_updates_does_not_matter((values, samples) in case(), seed in any::<u64>()) {
        let updates = updates_from(values, &samples);
        let mut shuffled = updates.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let a = fed_avg(&updates, AggregationMode::SampleWeighted).unwrap();
        let b = fed_avg(&shuffled, AggregationMode::SampleWeighted).unwrap();
        prop_assert_eq!(
            a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn scaling_commutes_with_averaging((values, samples) in case(), alpha in -10.0f64..10.0) {
        let scaled: Vec<Vec<f64>> = values.iter().map(|v| v.iter().map(|x| alpha * x).collect()).collect();
        let a = fed_avg(&updates_from(values, &samples), AggregationMode::SampleWeighted).unwrap();
        let b = fed_avg(&updates_from(scaled, &samples), AggregationMode::SampleWeighted).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((alpha * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
