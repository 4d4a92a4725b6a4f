use super::{pair_labels, CenterConfig, CenterError, CenterNet, GraphInput, Result};
use crate::chem::{derive_center_labels, Reaction};
use crate::numerics::{train_minibatch, Rng, TrainConfig, TrainReport};

/// A product with its ordered-pair labels and true center bonds.
#[derive(Clone, Debug)]
pub struct CenterExample {
    pub input: GraphInput,
    pub labels: Vec<f64>,
    /// Bonds with `i < j` that are broken in the reaction.
    pub centers: Vec<(usize, usize)>,
}

impl CenterExample {
    pub fn from_reaction(rxn: &Reaction) -> Result<Self> {
        let y = derive_center_labels(rxn).map_err(|e| CenterError::NotTrained(e.to_string()))?;
        let input = GraphInput::new(&rxn.product.mol)?;
        let labels = pair_labels(&input, |i, j| y.get(i, j));
        Ok(Self {
            input,
            labels,
            centers: y.positives(),
        })
    }
}

/// Minibatch Adam over shuffled examples; gradients are averaged in batch order.
pub fn train_center(
    examples: &[CenterExample],
    config: CenterConfig,
    tc: &TrainConfig,
) -> Result<(CenterNet, TrainReport)> {
    let mut rng = Rng::new(tc.seed);
    let mut net = CenterNet::new(config, &mut rng.fork(1));
    let mut params = net.params.clone();
    let report = train_minibatch(
        &mut params,
        examples.len(),
        tc,
        &mut rng,
        |tape, b, k, _| {
            let ex = &examples[k];
            net.loss(tape, b, &ex.input, &ex.labels)
        },
    )?;
    net.params = params;
    Ok((net, report))
}

/// Fraction of examples whose top-ranked bond is a true center.
pub fn center_accuracy(net: &CenterNet, examples: &[CenterExample]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for ex in examples {
        let ranked = net.rank_bonds(&ex.input)?;
        if ranked.first().is_some_and(|(b, _)| ex.centers.contains(b)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}
