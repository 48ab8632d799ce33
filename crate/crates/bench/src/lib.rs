//! Seeded inputs for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfa_core::ingest::UserId;
use rfa_core::{Dataset, Scope, TalkGraph};

pub fn user(i: usize) -> UserId {
    UserId::new(&format!("User{i}")).expect("valid id")
}

/// Directed talk graph with `nodes` users and about `degree` out-edges each.
pub fn random_graph(nodes: usize, degree: usize, seed: u64) -> TalkGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<_> = (0..nodes * degree)
        .map(|k| (user(k % nodes), user(rng.random_range(0..nodes)), rng.random_range(1..20u64)))
        .filter(|(u, v, _)| u != v)
        .collect();
    TalkGraph::from_edges(Scope::UserSN, 0, user(0), edges)
}

/// Two-class data where the first `informative` features carry signal.
pub fn random_dataset(rows: usize, features: usize, informative: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(rows);
    let mut y = Vec::with_capacity(rows);
    for _ in 0..rows {
        let label = rng.random_bool(0.5);
        let shift = if label { 1.0 } else { 0.0 };
        x.push(
            (0..features)
                .map(|j| rng.random::<f64>() + if j < informative { shift } else { 0.0 })
                .collect::<Vec<f64>>(),
        );
        y.push(u8::from(label));
    }
    let names = (0..features).map(|j| format!("f{j}")).collect();
    Dataset::from_rows(names, &x, y).expect("valid dataset")
}
