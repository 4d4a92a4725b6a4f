//! Reaction-center scoring.
//!
//! Two relational graph convolutions run side by side, one over the
//! molecule and one over its face dual. Each atom's fused embedding is its
//! own row, the sum of the dual rows of the faces it lies on, and a pooled
//! graph vector. A small perceptron scores every atom pair from the two
//! fused rows and their bond-type slice.

mod train;

use std::f64::consts::LN_2;

use thiserror::Error;

use crate::chem::{Molecule, BOND_TYPES, FEATURE_DIM};
use crate::faces::dual_graph;
use crate::numerics::{
    sigmoid, Bindings, Checkpoint, NumericsError, ParamId, ParamStore, Rng, Tape, Tensor, Var,
};

pub use crate::numerics::{TrainConfig, TrainReport};
pub use train::{center_accuracy, train_center, CenterExample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CenterError {
    #[error("graph has no atoms")]
    EmptyGraph,
    #[error("score {0} outside (0, 1)")]
    Domain(f64),
    #[error("face index {index} out of range for {len} faces")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("checkpoint is not a trained center model: {0}")]
    NotTrained(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T, E = CenterError> = std::result::Result<T, E>;

pub const CHECKPOINT_KIND: &str = "center";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CenterConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Width of the pair-scoring perceptron's hidden layer.
    pub mlp_hidden: usize,
    /// Weight on positive pairs in the loss.
    pub lambda: f64,
    pub dual: bool,
}

impl Default for CenterConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 64,
            mlp_hidden: 64,
            lambda: 20.0,
            dual: true,
        }
    }
}

impl CenterConfig {
    /// Width of a fused atom row: molecule, dual and graph segments.
    pub fn fused_width(&self) -> usize {
        3 * self.hidden
    }
}

/// Everything the model reads from one molecule, computed once.
#[derive(Clone, Debug)]
pub struct GraphInput {
    pub n: usize,
    pub x: Tensor,
    pub rel: Vec<Tensor>,
    pub dual_x: Tensor,
    pub dual_rel: Vec<Tensor>,
    /// Atom-by-face incidence.
    pub membership: Tensor,
    /// Ordered pairs `(i, j)`, `i != j`, row-major.
    pub pairs: Vec<(usize, usize)>,
    /// `reverse[p]` is the index of the pair `(j, i)`.
    pub reverse: Vec<usize>,
    /// Bond-type slice `A[i, j, :]` per ordered pair.
    pub pair_bonds: Tensor,
    /// Existing bonds with `i < j`.
    pub bonds: Vec<(usize, usize)>,
}

impl GraphInput {
    pub fn new(mol: &Molecule) -> Result<Self> {
        let n = mol.atom_count();
        if n == 0 {
            return Err(CenterError::EmptyGraph);
        }
        let dual = dual_graph(mol);
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        // row-major ordered pairs without the diagonal
        let index = |i: usize, j: usize| i * (n - 1) + if j > i { j - 1 } else { j };
        let reverse = pairs.iter().map(|&(i, j)| index(j, i)).collect();
        let adj = mol.adjacency_tensor();
        let mut pair_bonds = Tensor::zeros(&[pairs.len(), BOND_TYPES]);
        for (p, &(i, j)) in pairs.iter().enumerate() {
            for k in 0..BOND_TYPES {
                pair_bonds.set2(p, k, adj.get3(i, j, k));
            }
        }
        let mut bonds: Vec<(usize, usize)> = mol
            .bonds()
            .iter()
            .map(|b| (b.a.min(b.b), b.a.max(b.b)))
            .collect();
        bonds.sort_unstable();
        Ok(Self {
            n,
            x: mol.feature_matrix(),
            rel: mol.relation_matrices(),
            dual_x: dual.features.clone(),
            dual_rel: dual.relation_matrices(),
            membership: dual.membership_matrix(),
            pairs,
            reverse,
            pair_bonds,
            bonds,
        })
    }

    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        i * (self.n - 1) + if j > i { j - 1 } else { j }
    }
}

/// One graph-convolution layer: `act(Σ_r A_r H W_r + H W_0)`.
pub fn rgcn_layer(
    tape: &mut Tape,
    rel: &[Var],
    h: Var,
    w_rel: &[Var],
    w_self: Var,
    act: Activation,
) -> Result<Var> {
    let mut acc = tape.matmul(h, w_self)?;
    for (&a, &w) in rel.iter().zip(w_rel) {
        let msg = tape.matmul(a, h)?;
        let msg = tape.matmul(msg, w)?;
        acc = tape.add(acc, msg)?;
    }
    Ok(match act {
        Activation::Relu => tape.relu(acc),
        Activation::Identity => acc,
    })
}

/// Value-level fusion `m_i = H[i] ∥ Σ_{f ∈ F_i} D[f] ∥ h_M`.
pub fn fuse(h: &Tensor, d: &Tensor, membership: &[Vec<usize>], h_m: &Tensor) -> Result<Tensor> {
    let (n, dw) = (h.rows(), d.cols());
    let mut out = Tensor::zeros(&[n, h.cols() + dw + h_m.cols()]);
    for i in 0..n {
        let row = out.row_mut(i);
        row[..h.cols()].copy_from_slice(h.row(i));
        for &f in &membership[i] {
            if f >= d.rows() {
                return Err(CenterError::IndexOutOfRange {
                    index: f,
                    len: d.rows(),
                });
            }
            for (o, v) in row[h.cols()..h.cols() + dw].iter_mut().zip(d.row(f)) {
                *o += v;
            }
        }
        row[h.cols() + dw..].copy_from_slice(h_m.row(0));
    }
    Ok(out)
}

/// Value-level loss for one reaction over ordered pairs `(s_ij, Y_ij)`.
pub fn center_loss(scores: &[f64], labels: &[u8], lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for (&s, &y) in scores.iter().zip(labels) {
        if !(s > 0.0 && s < 1.0) {
            return Err(CenterError::Domain(s));
        }
        let y = y as f64;
        total -= lambda * y * s.ln() + (1.0 - y) * (1.0 - s).ln();
    }
    Ok(total)
}

/// Taped loss over ordered pairs from raw logits, with the score of a pair
/// being the mean of the sigmoids of its two orientations.
///
/// Both logs are formed stably: `log s = logaddexp(−sp(−a), −sp(−b)) − ln 2`
/// and `log(1 − s)` likewise with the logits negated.
pub fn taped_center_loss(
    tape: &mut Tape,
    logits: Var,
    reverse: &[usize],
    labels: &[f64],
    lambda: f64,
) -> Result<Var> {
    let a = logits;
    let b = tape.gather_rows(logits, reverse)?;
    let log_sig = |tape: &mut Tape, v: Var, sign: f64| {
        let z = tape.scale(v, -sign);
        let sp = tape.softplus(z);
        tape.scale(sp, -1.0)
    };
    let (la, lb) = (log_sig(tape, a, 1.0), log_sig(tape, b, 1.0));
    let log_s = tape.log_add_exp(la, lb)?;
    let log_s = tape.add_scalar(log_s, -LN_2);
    let (na, nb) = (log_sig(tape, a, -1.0), log_sig(tape, b, -1.0));
    let log_1ms = tape.log_add_exp(na, nb)?;
    let log_1ms = tape.add_scalar(log_1ms, -LN_2);
    let pos = tape.leaf(Tensor::column_vector(
        &labels.iter().map(|y| lambda * y).collect::<Vec<_>>(),
    ));
    let neg = tape.leaf(Tensor::column_vector(
        &labels.iter().map(|y| 1.0 - y).collect::<Vec<_>>(),
    ));
    let t1 = tape.mul(pos, log_s)?;
    let t2 = tape.mul(neg, log_1ms)?;
    let both = tape.add(t1, t2)?;
    let s = tape.sum(both);
    Ok(tape.scale(s, -1.0))
}

#[derive(Clone, Debug)]
struct Ids {
    mol_rel: Vec<Vec<ParamId>>,
    mol_self: Vec<ParamId>,
    dual_rel: Vec<Vec<ParamId>>,
    dual_self: Vec<ParamId>,
    readout_w: ParamId,
    readout_b: ParamId,
    wa: ParamId,
    wb: ParamId,
    wc: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Taped outputs of one forward pass.
pub struct Forward {
    pub h: Var,
    pub d: Var,
    pub h_m: Var,
    pub fused: Var,
    /// One logit per ordered pair, `[pairs, 1]`.
    pub logits: Var,
}

#[derive(Clone, Debug)]
pub struct CenterNet {
    pub config: CenterConfig,
    pub params: ParamStore,
    ids: Ids,
}

impl CenterNet {
    pub fn new(config: CenterConfig, rng: &mut Rng) -> Self {
        let mut p = ParamStore::new();
        let (f, h) = (FEATURE_DIM, config.hidden);
        let stack = |p: &mut ParamStore, prefix: &str, rng: &mut Rng| {
            let mut rel = Vec::new();
            let mut slf = Vec::new();
            for l in 0..config.layers {
                let fan_in = if l == 0 { f } else { h };
                rel.push(
                    (0..BOND_TYPES)
                        .map(|r| p.add_glorot(format!("{prefix}.l{l}.r{r}"), fan_in, h, rng))
                        .collect(),
                );
                slf.push(p.add_glorot(format!("{prefix}.l{l}.self"), fan_in, h, rng));
            }
            (rel, slf)
        };
        let (mol_rel, mol_self) = stack(&mut p, "mol", rng);
        let (dual_rel, dual_self) = stack(&mut p, "dual", rng);
        let width = if config.layers == 0 { f } else { h };
        let readout_w = p.add_glorot("readout.w", width, h, rng);
        let readout_b = p.add_zeros("readout.b", &[1, h]);
        let fw = 2 * width + h;
        let m = config.mlp_hidden;
        let wa = p.add_glorot("phi.wa", fw, m, rng);
        let wb = p.add_glorot("phi.wb", fw, m, rng);
        let wc = p.add_glorot("phi.wc", BOND_TYPES, m, rng);
        let b1 = p.add_zeros("phi.b1", &[1, m]);
        let w2 = p.add_glorot("phi.w2", m, 1, rng);
        let b2 = p.add_zeros("phi.b2", &[1, 1]);
        let ids = Ids {
            mol_rel,
            mol_self,
            dual_rel,
            dual_self,
            readout_w,
            readout_b,
            wa,
            wb,
            wc,
            b1,
            w2,
            b2,
        };
        Self {
            config,
            params: p,
            ids,
        }
    }

    /// Zeroes the scorer's output layer so every pair scores exactly 0.5.
    pub fn zero_scorer(&mut self) {
        for id in [self.ids.w2, self.ids.b2] {
            self.params.get_mut(id).data_mut().fill(0.0);
        }
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, g: &GraphInput) -> Result<Forward> {
        let ids = &self.ids;
        let conv = |tape: &mut Tape,
                    x: &Tensor,
                    rel: &[Tensor],
                    w_rel: &[Vec<ParamId>],
                    w_self: &[ParamId]| {
            let mut h = tape.leaf(x.clone());
            let a: Vec<Var> = rel.iter().map(|r| tape.leaf(r.clone())).collect();
            for l in 0..self.config.layers {
                let wr: Vec<Var> = w_rel[l].iter().map(|&id| b.get(id)).collect();
                h = rgcn_layer(tape, &a, h, &wr, b.get(w_self[l]), Activation::Relu)?;
            }
            Ok::<Var, CenterError>(h)
        };
        let h = conv(tape, &g.x, &g.rel, &ids.mol_rel, &ids.mol_self)?;
        let d = conv(tape, &g.dual_x, &g.dual_rel, &ids.dual_rel, &ids.dual_self)?;

        let pooled = tape.mean_rows(h)?;
        let pooled = tape.matmul(pooled, b.get(ids.readout_w))?;
        let pooled = tape.add_row(pooled, b.get(ids.readout_b))?;
        let h_m = tape.sigmoid(pooled);

        let width = tape.value(h).cols();
        let middle = if self.config.dual {
            let m = tape.leaf(g.membership.clone());
            tape.matmul(m, d)?
        } else {
            tape.leaf(Tensor::zeros(&[g.n, width]))
        };
        let ones = tape.leaf(Tensor::full(&[g.n, 1], 1.0));
        let graph = tape.matmul(ones, h_m)?;
        let fused = tape.concat_cols(&[h, middle, graph])?;

        let logits = if g.pairs.is_empty() {
            tape.leaf(Tensor::zeros(&[0, 1]))
        } else {
            // first layer of φ(m_i ∥ m_j ∥ A_ij), split by segment
            let pa = tape.matmul(fused, b.get(ids.wa))?;
            let pb = tape.matmul(fused, b.get(ids.wb))?;
            let left: Vec<usize> = g.pairs.iter().map(|p| p.0).collect();
            let right: Vec<usize> = g.pairs.iter().map(|p| p.1).collect();
            let pa = tape.gather_rows(pa, &left)?;
            let pb = tape.gather_rows(pb, &right)?;
            let bonds = tape.leaf(g.pair_bonds.clone());
            let pc = tape.matmul(bonds, b.get(ids.wc))?;
            let z = tape.add(pa, pb)?;
            let z = tape.add(z, pc)?;
            let z = tape.add_row(z, b.get(ids.b1))?;
            let z = tape.silu(z);
            let z = tape.matmul(z, b.get(ids.w2))?;
            tape.add_row(z, b.get(ids.b2))?
        };
        Ok(Forward {
            h,
            d,
            h_m,
            fused,
            logits,
        })
    }

    /// Loss for one molecule with labels per ordered pair.
    pub fn loss(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        g: &GraphInput,
        labels: &[f64],
    ) -> Result<Var> {
        let f = self.forward(tape, b, g)?;
        if g.pairs.is_empty() {
            return Ok(tape.leaf(Tensor::scalar(0.0)));
        }
        taped_center_loss(tape, f.logits, &g.reverse, labels, self.config.lambda)
    }

    /// Symmetrized scores for all ordered pairs.
    pub fn pair_scores(&self, g: &GraphInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let b = tape.bind(&self.params);
        let f = self.forward(&mut tape, &b, g)?;
        let l = tape.value(f.logits).data();
        Ok((0..g.pairs.len())
            .map(|p| 0.5 * (sigmoid(l[p]) + sigmoid(l[g.reverse[p]])))
            .collect())
    }

    /// Existing bonds by descending score; ties go to the smaller `(i, j)`.
    pub fn rank_bonds(&self, g: &GraphInput) -> Result<Vec<((usize, usize), f64)>> {
        let s = self.pair_scores(g)?;
        let mut out: Vec<((usize, usize), f64)> = g
            .bonds
            .iter()
            .map(|&(i, j)| ((i, j), s[g.pair_index(i, j)]))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(out)
    }

    pub fn rank_centers(&self, mol: &Molecule) -> Result<Vec<((usize, usize), f64)>> {
        self.rank_bonds(&GraphInput::new(mol)?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(CHECKPOINT_KIND, self.params.clone())
            .with_meta("layers", self.config.layers)
            .with_meta("hidden", self.config.hidden)
            .with_meta("mlp_hidden", self.config.mlp_hidden)
            .with_meta("lambda", self.config.lambda)
            .with_meta("dual", self.config.dual)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(CenterError::NotTrained(format!("kind is {:?}", ck.kind)));
        }
        let config = CenterConfig {
            layers: ck.meta_usize("layers")?,
            hidden: ck.meta_usize("hidden")?,
            mlp_hidden: ck.meta_usize("mlp_hidden")?,
            lambda: ck.meta_f64("lambda")?,
            dual: ck.meta_str("dual")? == "true",
        };
        let mut net = Self::new(config, &mut Rng::new(0));
        for id in net.params.ids().collect::<Vec<_>>() {
            let name = net.params.name(id).to_string();
            let src = ck
                .params
                .id(&name)
                .map(|s| ck.params.get(s))
                .ok_or_else(|| CenterError::NotTrained(format!("missing parameter {name}")))?;
            if src.shape() != net.params.get(id).shape() {
                return Err(CenterError::NotTrained(format!(
                    "parameter {name} has shape {:?}",
                    src.shape()
                )));
            }
            *net.params.get_mut(id) = src.clone();
        }
        Ok(net)
    }
}

/// Label vector over ordered pairs from a symmetric 0/1 matrix accessor.
pub fn pair_labels(g: &GraphInput, y: impl Fn(usize, usize) -> u8) -> Vec<f64> {
    g.pairs.iter().map(|&(i, j)| y(i, j) as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;
    use crate::numerics::grad_check;

    #[test]
    fn hand_evaluated_layer() {
        // path of two nodes with features [1] and [2], identity weights
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap());
        let h = tape.leaf(Tensor::column_vector(&[1.0, 2.0]));
        let eye = tape.leaf(Tensor::scalar(1.0));
        let out = rgcn_layer(&mut tape, &[a], h, &[eye], eye, Activation::Identity).unwrap();
        assert_eq!(tape.value(out).data(), &[3.0, 3.0]);
    }

    #[test]
    fn isolated_node_uses_self_loop_only() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[1, 1]));
        let h = tape.leaf(Tensor::scalar(-2.0));
        let w = tape.leaf(Tensor::scalar(3.0));
        let w0 = tape.leaf(Tensor::scalar(0.5));
        let out = rgcn_layer(&mut tape, &[a], h, &[w], w0, Activation::Relu).unwrap();
        assert_eq!(tape.value(out).item(), 0.0);
        let out = rgcn_layer(&mut tape, &[a], h, &[w], w0, Activation::Identity).unwrap();
        assert_eq!(tape.value(out).item(), -1.0);
    }

    #[test]
    fn loss_values() {
        let l = center_loss(&[0.5, 0.5], &[1, 0], 1.0).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        let l2 = center_loss(&[0.5, 0.5], &[1, 0], 2.0).unwrap();
        assert!((l2 - 3.0 * 2f64.ln()).abs() < 1e-12);
        assert!(center_loss(&[1.0 - 1e-15, 1e-15], &[1, 0], 20.0).unwrap() < 1e-12);
        assert_eq!(
            center_loss(&[1.0], &[1], 1.0),
            Err(CenterError::Domain(1.0))
        );
        assert!(center_loss(&[0.0], &[0], 1.0).is_err());
    }

    #[test]
    fn taped_loss_matches_value_loss() {
        let logits = [0.3, -1.2, 2.0, 0.7];
        let reverse = [1, 0, 3, 2];
        let labels = [1.0, 1.0, 0.0, 0.0];
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::column_vector(&logits));
        let l = taped_center_loss(&mut tape, v, &reverse, &labels, 20.0).unwrap();
        let s: Vec<f64> = (0..4)
            .map(|p| 0.5 * (sigmoid(logits[p]) + sigmoid(logits[reverse[p]])))
            .collect();
        let want = center_loss(&s, &[1, 1, 0, 0], 20.0).unwrap();
        assert!((tape.value(l).item() - want).abs() < 1e-12);
        // extreme logits stay finite
        let mut tape = Tape::new();
        let v = tape.leaf(Tensor::column_vector(&[800.0, 800.0]));
        let l = taped_center_loss(&mut tape, v, &[1, 0], &[0.0, 0.0], 1.0).unwrap();
        assert!((tape.value(l).item() - 1600.0).abs() < 1e-9);
    }

    fn small() -> CenterConfig {
        CenterConfig {
            layers: 2,
            hidden: 4,
            mlp_hidden: 3,
            lambda: 5.0,
            dual: true,
        }
    }

    #[test]
    fn fused_segments() {
        let mol = parse_smiles("CCOC(=O)c1ccccc1").unwrap();
        let g = GraphInput::new(&mol).unwrap();
        let net = CenterNet::new(small(), &mut Rng::new(1));
        let mut tape = Tape::new();
        let b = tape.bind(&net.params);
        let f = net.forward(&mut tape, &b, &g).unwrap();
        let fused = tape.value(f.fused).clone();
        assert_eq!(fused.shape(), &[11, net.config.fused_width()]);
        let h = net.config.hidden;
        // ring atoms 6 and 8 lie on the same two faces
        assert_eq!(fused.row(6)[h..2 * h], fused.row(8)[h..2 * h]);
        // chain atoms 0 and 1 lie on the outer face only
        assert_eq!(fused.row(0)[h..2 * h], fused.row(1)[h..2 * h]);
        let dual = crate::faces::dual_graph(&mol);
        let value = fuse(
            tape.value(f.h),
            tape.value(f.d),
            &dual.membership,
            tape.value(f.h_m),
        )
        .unwrap();
        for (x, y) in value.data().iter().zip(fused.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(
            fuse(
                tape.value(f.h),
                tape.value(f.d),
                &vec![vec![9]; 11],
                tape.value(f.h_m)
            ),
            Err(CenterError::IndexOutOfRange { index: 9, .. })
        ));

        let mut off = net.clone();
        off.config.dual = false;
        let mut tape = Tape::new();
        let b = tape.bind(&off.params);
        let f = off.forward(&mut tape, &b, &g).unwrap();
        let fused = tape.value(f.fused);
        assert_eq!(fused.cols(), off.config.fused_width());
        assert!((0..11).all(|i| fused.row(i)[h..2 * h].iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zero_scorer_ties_break_by_index() {
        let mol = parse_smiles("CC(=O)OC").unwrap();
        let mut net = CenterNet::new(small(), &mut Rng::new(2));
        net.zero_scorer();
        let ranked = net.rank_centers(&mol).unwrap();
        assert!(ranked.iter().all(|r| r.1 == 0.5));
        let bonds: Vec<_> = ranked.iter().map(|r| r.0).collect();
        assert_eq!(bonds, vec![(0, 1), (1, 2), (1, 3), (3, 4)]);
    }

    #[test]
    fn scores_are_symmetric_and_bounded() {
        let mol = parse_smiles("c1ccncc1CN").unwrap();
        let g = GraphInput::new(&mol).unwrap();
        let net = CenterNet::new(small(), &mut Rng::new(3));
        let s = net.pair_scores(&g).unwrap();
        for (p, &(i, j)) in g.pairs.iter().enumerate() {
            assert_eq!(s[p], s[g.pair_index(j, i)]);
            assert!(s[p] > 0.0 && s[p] < 1.0);
        }
        // non-bonded pair carries an all-zero bond slice
        let p = g.pair_index(0, 3);
        assert!(g.pair_bonds.row(p).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn readout_of_single_atom_and_empty_graph() {
        let g = GraphInput::new(&parse_smiles("N").unwrap()).unwrap();
        let net = CenterNet::new(small(), &mut Rng::new(4));
        assert!(net.pair_scores(&g).unwrap().is_empty());
        assert!(matches!(
            GraphInput::new(&Molecule::new()),
            Err(CenterError::EmptyGraph)
        ));
    }

    #[test]
    fn permutation_equivariance() {
        let a = parse_smiles("OC(=O)c1ccccc1N").unwrap();
        let b = parse_smiles("Nc1ccccc1C(O)=O").unwrap();
        let net = CenterNet::new(small(), &mut Rng::new(5));
        let key = |m: &Molecule| {
            let ranks = crate::chem::canonical_ranks(m);
            let mut v: Vec<((usize, usize), String)> = net
                .rank_centers(m)
                .unwrap()
                .into_iter()
                .map(|((i, j), s)| {
                    (
                        (ranks[i].min(ranks[j]), ranks[i].max(ranks[j])),
                        format!("{s:.10}"),
                    )
                })
                .collect();
            v.sort();
            v
        };
        assert_eq!(key(&a), key(&b));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let mol = parse_smiles("CC(=O)OC1CC1").unwrap();
        let g = GraphInput::new(&mol).unwrap();
        let labels = pair_labels(&g, |i, j| u8::from((i, j) == (1, 3) || (i, j) == (3, 1)));
        let net = CenterNet::new(small(), &mut Rng::new(6));
        let report = grad_check(&net.params, 1e-5, 1e-4, |tape, b| {
            net.loss(tape, b, &g, &labels).map_err(|e| match e {
                CenterError::Numerics(n) => n,
                other => panic!("{other}"),
            })
        })
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = CenterNet::new(small(), &mut Rng::new(7));
        let back = CenterNet::from_checkpoint(
            &Checkpoint::from_json(&net.to_checkpoint().to_json()).unwrap(),
        )
        .unwrap();
        assert_eq!(back.params, net.params);
        assert_eq!(back.config, net.config);
        let wrong = Checkpoint::new("diffusion", ParamStore::new());
        assert!(matches!(
            CenterNet::from_checkpoint(&wrong),
            Err(CenterError::NotTrained(_))
        ));
    }
}
