use std::time::{Duration, Instant};

use super::optim::{mean_gradients, Adam};
use super::params::ParamStore;
use super::rng::Rng;
use super::tape::{Bindings, Tape, Var};
use super::NumericsError;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop early once the elapsed time after a full epoch exceeds this budget.
    pub time_limit: Option<Duration>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 3e-3,
            batch_size: 8,
            seed: 0,
            time_limit: None,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Mean per-item loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub elapsed: Duration,
}

/// Minibatch Adam over `items` examples in an order shuffled by `rng`.
///
/// `loss(tape, bindings, item, rng)` records one example's loss; gradients
/// of a batch are averaged in batch order so runs are reproducible.
pub fn train_minibatch<E, F>(
    store: &mut ParamStore,
    items: usize,
    tc: &TrainConfig,
    rng: &mut Rng,
    mut loss: F,
) -> Result<TrainReport, E>
where
    E: From<NumericsError>,
    F: FnMut(&mut Tape, &Bindings, usize, &mut Rng) -> Result<Var, E>,
{
    let mut adam = Adam::new(store, tc.lr);
    let mut report = TrainReport::default();
    let start = Instant::now();
    let mut order: Vec<usize> = (0..items).collect();
    for _ in 0..tc.epochs {
        if items == 0 {
            break;
        }
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for batch in order.chunks(tc.batch_size.max(1)) {
            let mut grads = Vec::with_capacity(batch.len());
            for &k in batch {
                let mut tape = Tape::new();
                let b = tape.bind(store);
                let l = loss(&mut tape, &b, k, rng)?;
                total += tape.value(l).item();
                grads.push(tape.backward(l)?.for_params(&b));
            }
            adam.step(store, &mean_gradients(&grads));
        }
        report.epoch_losses.push(total / items as f64);
        if tc.time_limit.is_some_and(|limit| start.elapsed() > limit) {
            break;
        }
    }
    report.steps = adam.steps();
    report.elapsed = start.elapsed();
    Ok(report)
}
