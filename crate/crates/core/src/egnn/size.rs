//! Classifier for how many atoms a synthon needs to become a reactant.
//!
//! The synthon is a fully connected graph whose edges carry radial-basis
//! expansions of interatomic distances. Node embeddings of the last layer
//! are averaged and softmaxed over the size classes.

use super::{copy_params, EgnnError, Result};
use crate::chem::{Molecule, FEATURE_DIM};
use crate::numerics::{
    train_minibatch, Bindings, Checkpoint, ParamId, ParamStore, Rng, Tape, Tensor, TrainConfig,
    TrainReport, Var,
};

pub const CHECKPOINT_KIND: &str = "size";

const RBF_CENTERS: usize = 8;
const RBF_SPACING: f64 = 0.75;
const RBF_GAMMA: f64 = 2.0;

/// Node input width: atom features plus the anchor flag.
const INPUT_DIM: usize = FEATURE_DIM + 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SizeConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Largest generatable atom count plus one.
    pub classes: usize,
}

impl Default for SizeConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 32,
            classes: 11,
        }
    }
}

/// A synthon prepared for the classifier.
#[derive(Clone, Debug)]
pub struct SizeInput {
    pub n: usize,
    x: Tensor,
    left: Vec<usize>,
    right: Vec<usize>,
    rbf: Tensor,
}

impl SizeInput {
    /// `anchors` are local indices of the atoms that lost a bond.
    pub fn new(mol: &Molecule, anchors: &[usize]) -> Result<Self> {
        let coords = mol.coords().ok_or(EgnnError::NoCoordinates)?;
        let n = mol.atom_count();
        if n == 0 {
            return Err(EgnnError::EmptyCloud);
        }
        let feats = mol.feature_matrix();
        let mut x = Tensor::zeros(&[n, INPUT_DIM]);
        for i in 0..n {
            x.row_mut(i)[..FEATURE_DIM].copy_from_slice(feats.row(i));
        }
        for &a in anchors {
            if a >= n {
                return Err(EgnnError::Inconsistent("anchor index"));
            }
            x.set2(a, FEATURE_DIM, 1.0);
        }
        let (mut left, mut right, mut rbf) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                left.push(i);
                right.push(j);
                let d = (0..3)
                    .map(|k| (coords[i][k] - coords[j][k]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                rbf.extend(
                    (0..RBF_CENTERS)
                        .map(|k| (-RBF_GAMMA * (d - k as f64 * RBF_SPACING).powi(2)).exp()),
                );
            }
        }
        let p = left.len();
        Ok(Self {
            n,
            x,
            left,
            right,
            rbf: Tensor::new(&[p, RBF_CENTERS], rbf)?,
        })
    }
}

#[derive(Clone, Debug)]
struct GcnLayer {
    w_self: ParamId,
    w_msg: ParamId,
    w_edge: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct SizeClassifier {
    pub config: SizeConfig,
    pub params: ParamStore,
    layers: Vec<GcnLayer>,
}

impl SizeClassifier {
    pub fn new(config: SizeConfig, rng: &mut Rng) -> Self {
        let mut p = ParamStore::new();
        let depth = config.layers.max(1);
        let layers = (0..depth)
            .map(|l| {
                let fan_in = if l == 0 { INPUT_DIM } else { config.hidden };
                let out = if l + 1 == depth {
                    config.classes
                } else {
                    config.hidden
                };
                GcnLayer {
                    w_self: p.add_glorot(format!("gcn.l{l}.self"), fan_in, out, rng),
                    w_msg: p.add_glorot(format!("gcn.l{l}.msg"), fan_in, out, rng),
                    w_edge: p.add_glorot(format!("gcn.l{l}.edge"), RBF_CENTERS, out, rng),
                    bias: p.add_zeros(format!("gcn.l{l}.b"), &[1, out]),
                }
            })
            .collect();
        Self {
            config,
            params: p,
            layers,
        }
    }

    /// Class logits `[1, classes]` after mean pooling.
    pub fn logits(&self, tape: &mut Tape, b: &Bindings, g: &SizeInput) -> Result<Var> {
        let mut h = tape.leaf(g.x.clone());
        let rbf = tape.leaf(g.rbf.clone());
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let own = tape.matmul(h, b.get(layer.w_self))?;
            let mut z = tape.add_row(own, b.get(layer.bias))?;
            if !g.left.is_empty() {
                let msg = tape.matmul(h, b.get(layer.w_msg))?;
                let msg = tape.gather_rows(msg, &g.right)?;
                let gate = tape.matmul(rbf, b.get(layer.w_edge))?;
                let msg = tape.mul(msg, gate)?;
                let agg = tape.scatter_add_rows(msg, &g.left, g.n)?;
                let agg = tape.scale(agg, 1.0 / (g.n - 1) as f64);
                z = tape.add(z, agg)?;
            }
            h = if l == last { z } else { tape.relu(z) };
        }
        Ok(tape.mean_rows(h)?)
    }

    /// Cross-entropy of the true size class.
    pub fn loss(&self, tape: &mut Tape, b: &Bindings, g: &SizeInput, size: usize) -> Result<Var> {
        if size >= self.config.classes {
            return Err(EgnnError::Inconsistent("size beyond class range"));
        }
        let logits = self.logits(tape, b, g)?;
        let logp = tape.log_softmax_rows(logits)?;
        let mut pick = Tensor::zeros(&[1, self.config.classes]);
        pick.set2(0, size, -1.0);
        let pick = tape.leaf(pick);
        let nll = tape.mul(logp, pick)?;
        Ok(tape.sum(nll))
    }

    /// Probability of each atom count `0..classes`.
    pub fn predict_size(&self, g: &SizeInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let b = tape.bind(&self.params);
        let logits = self.logits(&mut tape, &b, g)?;
        let probs = tape.softmax_rows(logits)?;
        Ok(tape.value(probs).data().to_vec())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(CHECKPOINT_KIND, self.params.clone())
            .with_meta("layers", self.config.layers)
            .with_meta("hidden", self.config.hidden)
            .with_meta("classes", self.config.classes)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let bad = |reason: String| EgnnError::NotTrained {
            kind: CHECKPOINT_KIND,
            reason,
        };
        if ck.kind != CHECKPOINT_KIND {
            return Err(bad(format!("kind is {:?}", ck.kind)));
        }
        let config = SizeConfig {
            layers: ck.meta_usize("layers")?,
            hidden: ck.meta_usize("hidden")?,
            classes: ck.meta_usize("classes")?,
        };
        let mut net = Self::new(config, &mut Rng::new(0));
        copy_params(&mut net.params, &ck.params).map_err(bad)?;
        Ok(net)
    }
}

#[derive(Clone, Debug)]
pub struct SizeExample {
    pub input: SizeInput,
    pub size: usize,
}

pub fn train_size(
    examples: &[SizeExample],
    config: SizeConfig,
    tc: &TrainConfig,
) -> Result<(SizeClassifier, TrainReport)> {
    let mut rng = Rng::new(tc.seed);
    let mut net = SizeClassifier::new(config, &mut rng.fork(1));
    let mut params = net.params.clone();
    let report = train_minibatch(
        &mut params,
        examples.len(),
        tc,
        &mut rng,
        |tape, b, k, _| net.loss(tape, b, &examples[k].input, examples[k].size),
    )?;
    net.params = params;
    Ok((net, report))
}

/// Fraction of examples whose most probable class is the true size.
pub fn size_accuracy(net: &SizeClassifier, examples: &[SizeExample]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for ex in examples {
        let p = net.predict_size(&ex.input)?;
        let best = (0..p.len()).fold(0, |b, k| if p[k] > p[b] { k } else { b });
        hits += usize::from(best == ex.size);
    }
    Ok(hits as f64 / examples.len() as f64)
}
