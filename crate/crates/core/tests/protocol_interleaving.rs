use std::collections::BTreeSet;

use fedround_core::aggregation::{fed_avg, AggregationMode, ClientUpdate};
use fedround_core::nn::{ModelSpec, Weights};
use fedround_core::protocol::{PutOutcome, RejectReason, RoundState, ServerConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLIENTS: [&str; 4] = ["a", "b", "c", "d"];

#[derive(Debug, Clone)]
enum Op {
    GetRound,
    GetWeights,
    /// client index (4 = unknown), round offset from the open round, wrong shape
    Put {
        client: usize,
        offset: i64,
        wrong_shape: bool,
        value: i32,
    },
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => Just(Op::GetRound),
        1 => Just(Op::GetWeights),
        6 => (0usize..5, prop_oneof![4 => Just(0i64), 1 => Just(-1i64), 1 => Just(1i64)], prop::bool::weighted(0.05), -50i32..50)
            .prop_map(|(client, offset, wrong_shape, value)| Op::Put { client, offset, wrong_shape, value }),
    ]
}

fn random_op(rng: &mut ChaCha8Rng) -> Op {
    match rng.random_range(0..8) {
        0 => Op::GetRound,
        1 => Op::GetWeights,
        _ => Op::Put {
            client: rng.random_range(0..5),
            offset: [0, 0, 0, 0, -1, 1][rng.random_range(0..6)],
            wrong_shape: rng.random_bool(0.05),
            value: rng.random_range(-50..50),
        },
    }
}

fn spec() -> ModelSpec {
    ModelSpec::new(vec![2, 2]).unwrap()
}

fn config(max_rounds: u64) -> ServerConfig {
    ServerConfig {
        expected_clients: CLIENTS.iter().map(|s| s.to_string()).collect(),
        model_spec: spec(),
        init_seed: 11,
        aggregation_mode: AggregationMode::SampleWeighted,
        max_rounds,
    }
}

/// Reference model of the server: round counter, pending updates, weights.
struct Model {
    round: u64,
    max_rounds: u64,
    pending: Vec<ClientUpdate>,
    weights: Weights,
}

impl Model {
    fn put(&mut self, u: ClientUpdate) -> PutOutcome {
        if !CLIENTS.contains(&u.client_id.as_str()) {
            return PutOutcome::Rejected(RejectReason::UnknownClient);
        }
        if u.round != self.round || self.round >= self.max_rounds {
            return PutOutcome::Rejected(RejectReason::StaleRound);
        }
        if self.pending.iter().any(|p| p.client_id == u.client_id) {
            return PutOutcome::Rejected(RejectReason::AlreadyParticipated);
        }
        if u.weights.spec() != &spec() {
            return PutOutcome::Rejected(RejectReason::ShapeMismatch);
        }
        self.pending.push(u);
        if self.pending.len() < CLIENTS.len() {
            return PutOutcome::Accepted { aggregated: false };
        }
        self.weights = fed_avg(&self.pending, AggregationMode::SampleWeighted).unwrap();
        self.pending.clear();
        self.round += 1;
        PutOutcome::Accepted { aggregated: true }
    }
}

/// Runs `ops` against both server and model; returns the number of rounds closed.
fn check(ops: impl IntoIterator<Item = Op>, max_rounds: u64) -> Result<u64, TestCaseError> {
    let cfg = config(max_rounds);
    let mut server: RoundState = RoundState::new(&cfg).unwrap();
    let mut model = Model {
        round: 0,
        max_rounds,
        pending: Vec::new(),
        weights: server.weights().1.clone(),
    };
    let mut last_round = 0;
    for op in ops {
        match op {
            Op::GetRound => prop_assert_eq!(server.round(), model.round),
            Op::GetWeights => {
                let (round, w) = server.weights();
                prop_assert_eq!(round, model.round);
                prop_assert_eq!(w, &model.weights);
            }
            Op::Put {
                client,
                offset,
                wrong_shape,
                value,
            } => {
                let client_id = CLIENTS
                    .get(client)
                    .copied()
                    .unwrap_or("intruder")
                    .to_string();
                let round = (server.round() as i64 + offset).max(0) as u64;
                let weights = if wrong_shape {
                    Weights::zeros(ModelSpec::new(vec![3, 2]).unwrap())
                } else {
                    Weights::from_values(spec(), vec![value as f64 / 10.0; 6]).unwrap()
                };
                let update = ClientUpdate {
                    client_id,
                    round,
                    weights,
                    n_samples: client + 1,
                };
                let pending_before: BTreeSet<String> =
                    server.pending_clients().map(str::to_owned).collect();
                let got = server.put(update.clone()).unwrap();
                prop_assert_eq!(got, model.put(update));
                if let PutOutcome::Accepted { aggregated: true } = got {
                    // Aggregation only once every expected client is in.
                    prop_assert_eq!(pending_before.len() + 1, CLIENTS.len());
                }
            }
        }
        prop_assert!(server.round() >= last_round, "round regressed");
        prop_assert!(server.round() <= last_round + 1);
        last_round = server.round();
        let pending: Vec<&str> = server.pending_clients().collect();
        let unique: BTreeSet<&str> = pending.iter().copied().collect();
        prop_assert_eq!(unique.len(), pending.len());
    }
    for (i, record) in server.history().iter().enumerate() {
        prop_assert_eq!(record.round, i as u64);
        let unique: BTreeSet<&String> = record.participants.iter().collect();
        prop_assert_eq!(unique.len(), CLIENTS.len());
        prop_assert_eq!(record.participants.len(), CLIENTS.len());
    }
    Ok(server.round())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]
    #[test]
    fn random_sequences_match_the_model(ops in prop::collection::vec(op_strategy(), 1..300), max_rounds in 1u64..8) {
        check(ops, max_rounds)?;
    }
}

#[test]
fn long_interleaving_run() {
    let mut total_ops = 0;
    let mut closed = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops: Vec<Op> = (0..4_000).map(|_| random_op(&mut rng)).collect();
        total_ops += ops.len();
        closed += check(ops, 1_000).expect("model check failed");
    }
    assert!(total_ops >= 10_000);
    assert!(closed > 100, "too few rounds exercised: {closed}");
}
