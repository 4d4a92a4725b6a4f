//! E(3)-equivariant denoiser over atom point clouds with fixed context atoms.
//!
//! Every atom carries coordinates and a continuous element vector. Messages
//! run over all ordered pairs inside a cloud and are averaged per atom.
//! Coordinates of fixed atoms are
//! never moved, so a synthon keeps its geometry while the rest is generated.

mod size;

use thiserror::Error;

use crate::chem::ELEMENT_SLOTS;
use crate::numerics::{
    Bindings, Checkpoint, NumericsError, ParamId, ParamStore, Rng, Tape, Tensor, Var,
};

pub use size::{size_accuracy, train_size, SizeClassifier, SizeConfig, SizeExample, SizeInput};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EgnnError {
    #[error("synthon has no 3D coordinates")]
    NoCoordinates,
    #[error("point cloud has no atoms")]
    EmptyCloud,
    #[error("cloud arrays disagree: {0}")]
    Inconsistent(&'static str),
    #[error("checkpoint is not a trained {kind} model: {reason}")]
    NotTrained { kind: &'static str, reason: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T, E = EgnnError> = std::result::Result<T, E>;

pub const CHECKPOINT_KIND: &str = "denoiser";

/// Extra input channels after the element vector: `t/T`, fixed flag, anchor flag.
pub const CONTEXT_DIM: usize = 3;

/// Atom point cloud: coordinates, element vectors and per-atom flags.
#[derive(Clone, Debug, PartialEq)]
pub struct Cloud {
    pub x: Vec<[f64; 3]>,
    pub h: Vec<[f64; ELEMENT_SLOTS]>,
    /// Context atoms whose coordinates stay put.
    pub fixed: Vec<bool>,
    /// Fixed atoms that lost a bond and are expected to gain one.
    pub anchor: Vec<bool>,
}

impl Cloud {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(EgnnError::EmptyCloud);
        }
        let n = self.x.len();
        if self.h.len() != n {
            return Err(EgnnError::Inconsistent("features"));
        }
        if self.fixed.len() != n {
            return Err(EgnnError::Inconsistent("fixed mask"));
        }
        if self.anchor.len() != n {
            return Err(EgnnError::Inconsistent("anchor mask"));
        }
        Ok(())
    }

    pub fn coord_tensor(&self) -> Tensor {
        Tensor::new(&[self.len(), 3], self.x.iter().flatten().copied().collect()).expect("n x 3")
    }

    pub fn feature_tensor(&self) -> Tensor {
        Tensor::new(
            &[self.len(), ELEMENT_SLOTS],
            self.h.iter().flatten().copied().collect(),
        )
        .expect("n x slots")
    }

    /// Mean position of the fixed atoms, or of all atoms if none are fixed.
    pub fn fixed_center(&self) -> [f64; 3] {
        let idx: Vec<usize> = if self.fixed.iter().any(|&f| f) {
            (0..self.len()).filter(|&i| self.fixed[i]).collect()
        } else {
            (0..self.len()).collect()
        };
        let mut c = [0.0; 3];
        for &i in &idx {
            for k in 0..3 {
                c[k] += self.x[i][k];
            }
        }
        c.map(|v| v / idx.len().max(1) as f64)
    }
}

/// Several clouds stacked row-wise. Pairs never cross cloud boundaries.
#[derive(Clone, Debug)]
pub struct Packed {
    pub n: usize,
    /// Row offset of each cloud.
    pub offsets: Vec<usize>,
    left: Vec<usize>,
    right: Vec<usize>,
    /// Pair indices whose left atom may move.
    free_pairs: Vec<usize>,
    free_left: Vec<usize>,
    free_right: Vec<usize>,
    context: Tensor,
    /// `1/(n−1)` for each row's cloud, so sums over neighbours become means.
    inv_deg: Tensor,
}

impl Packed {
    /// Packs clouds, each with its own time fraction `t/T`.
    pub fn new(clouds: &[(&Cloud, f64)]) -> Result<Self> {
        let n: usize = clouds.iter().map(|(c, _)| c.len()).sum();
        let mut offsets = Vec::with_capacity(clouds.len());
        let (mut left, mut right) = (Vec::new(), Vec::new());
        let (mut free_pairs, mut free_left, mut free_right) = (Vec::new(), Vec::new(), Vec::new());
        let mut context = Vec::with_capacity(n * CONTEXT_DIM);
        let mut inv_deg = Vec::with_capacity(n);
        let mut base = 0;
        for (cloud, frac) in clouds {
            cloud.validate()?;
            offsets.push(base);
            let m = cloud.len();
            inv_deg.extend(std::iter::repeat_n(
                1.0 / m.saturating_sub(1).max(1) as f64,
                m,
            ));
            for i in 0..m {
                for j in 0..m {
                    if i == j {
                        continue;
                    }
                    if !cloud.fixed[i] {
                        free_pairs.push(left.len());
                        free_left.push(base + i);
                        free_right.push(base + j);
                    }
                    left.push(base + i);
                    right.push(base + j);
                }
                context.extend([
                    *frac,
                    f64::from(u8::from(cloud.fixed[i])),
                    f64::from(u8::from(cloud.anchor[i])),
                ]);
            }
            base += m;
        }
        Ok(Self {
            n,
            offsets,
            left,
            right,
            free_pairs,
            free_left,
            free_right,
            context: Tensor::new(&[n, CONTEXT_DIM], context)?,
            inv_deg: Tensor::new(&[n, 1], inv_deg)?,
        })
    }

    pub fn pair_count(&self) -> usize {
        self.left.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EgnnConfig {
    pub layers: usize,
    pub hidden: usize,
}

impl Default for EgnnConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            hidden: 32,
        }
    }
}

/// Two-layer perceptron whose first layer is split into per-input blocks.
#[derive(Clone, Debug)]
struct Mlp {
    first: Vec<ParamId>,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Mlp {
    fn new(
        p: &mut ParamStore,
        name: &str,
        inputs: &[usize],
        hidden: usize,
        out: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in: usize = inputs.iter().sum();
        let first = inputs
            .iter()
            .enumerate()
            .map(|(k, &w)| {
                let id = p.add_glorot(format!("{name}.w1.{k}"), w, hidden, rng);
                // Glorot over the whole first layer, not each block.
                let scale = ((w + hidden) as f64 / (fan_in + hidden) as f64).sqrt();
                let t = p.get_mut(id);
                *t = t.scale(scale);
                id
            })
            .collect();
        Self {
            first,
            b1: p.add_zeros(format!("{name}.b1"), &[1, hidden]),
            w2: p.add_glorot(format!("{name}.w2"), hidden, out, rng),
            b2: p.add_zeros(format!("{name}.b2"), &[1, out]),
        }
    }

    /// `inputs[k]` is `(value, optional row gather)`; all gathered results share a row count.
    fn apply(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        inputs: &[(Var, Option<&[usize]>)],
    ) -> Result<Var> {
        let mut z: Option<Var> = None;
        for (&(v, idx), &w) in inputs.iter().zip(&self.first) {
            let mut part = tape.matmul(v, b.get(w))?;
            if let Some(idx) = idx {
                part = tape.gather_rows(part, idx)?;
            }
            z = Some(match z {
                None => part,
                Some(acc) => tape.add(acc, part)?,
            });
        }
        let z = tape.add_row(z.expect("at least one input"), b.get(self.b1))?;
        let z = tape.silu(z);
        let z = tape.matmul(z, b.get(self.w2))?;
        Ok(tape.add_row(z, b.get(self.b2))?)
    }
}

#[derive(Clone, Debug)]
struct Layer {
    phi_e: Mlp,
    phi_h: Mlp,
    phi_r: Mlp,
}

#[derive(Clone, Debug)]
pub struct Egnn {
    pub config: EgnnConfig,
    pub params: ParamStore,
    w_in: ParamId,
    b_in: ParamId,
    layers: Vec<Layer>,
    w_out: ParamId,
    b_out: ParamId,
}

/// Final coordinates and features of a forward pass.
pub struct Output {
    pub x: Var,
    pub h: Var,
}

impl Egnn {
    pub fn new(config: EgnnConfig, rng: &mut Rng) -> Self {
        let mut p = ParamStore::new();
        let hd = config.hidden;
        let w_in = p.add_glorot("in.w", ELEMENT_SLOTS + CONTEXT_DIM, hd, rng);
        let b_in = p.add_zeros("in.b", &[1, hd]);
        let layers = (0..config.layers)
            .map(|l| Layer {
                phi_e: Mlp::new(&mut p, &format!("l{l}.e"), &[hd, hd, 1], hd, hd, rng),
                phi_h: Mlp::new(&mut p, &format!("l{l}.h"), &[hd, hd], hd, hd, rng),
                phi_r: Mlp::new(&mut p, &format!("l{l}.r"), &[hd, hd], hd, 1, rng),
            })
            .collect();
        let w_out = p.add_glorot("out.w", hd, ELEMENT_SLOTS, rng);
        let b_out = p.add_zeros("out.b", &[1, ELEMENT_SLOTS]);
        Self {
            config,
            params: p,
            w_in,
            b_in,
            layers,
            w_out,
            b_out,
        }
    }

    /// Records the network on `tape` for stacked coordinates `x` and features `h`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        pk: &Packed,
        x: Var,
        h: Var,
    ) -> Result<Output> {
        let ctx = tape.leaf(pk.context.clone());
        let inp = tape.concat_cols(&[h, ctx])?;
        let e = tape.matmul(inp, b.get(self.w_in))?;
        let mut e = tape.add_row(e, b.get(self.b_in))?;
        let mut x = x;
        let hd = self.config.hidden;
        let inv_deg = tape.leaf(pk.inv_deg.clone());
        for layer in &self.layers {
            let agg = if pk.pair_count() == 0 {
                tape.leaf(Tensor::zeros(&[pk.n, hd]))
            } else {
                let xi = tape.gather_rows(x, &pk.left)?;
                let xj = tape.gather_rows(x, &pk.right)?;
                let d = tape.sub(xi, xj)?;
                let d2 = tape.square(d);
                let d2 = tape.sum_cols(d2)?;
                let m = layer.phi_e.apply(
                    tape,
                    b,
                    &[(e, Some(&pk.left)), (e, Some(&pk.right)), (d2, None)],
                )?;
                let agg = tape.scatter_add_rows(m, &pk.left, pk.n)?;
                let agg = tape.scale_rows(agg, inv_deg)?;
                if !pk.free_pairs.is_empty() {
                    let r = layer.phi_r.apply(
                        tape,
                        b,
                        &[(e, Some(&pk.free_left)), (e, Some(&pk.free_right))],
                    )?;
                    let df = tape.gather_rows(d, &pk.free_pairs)?;
                    let d2f = tape.gather_rows(d2, &pk.free_pairs)?;
                    let den = tape.add_scalar(d2f, 1.0);
                    let inv = tape.recip(den)?;
                    let w = tape.mul(r, inv)?;
                    let step = tape.scale_rows(df, w)?;
                    let shift = tape.scatter_add_rows(step, &pk.free_left, pk.n)?;
                    let shift = tape.scale_rows(shift, inv_deg)?;
                    x = tape.add(x, shift)?;
                }
                agg
            };
            e = layer.phi_h.apply(tape, b, &[(e, None), (agg, None)])?;
        }
        let out = tape.matmul(e, b.get(self.w_out))?;
        let h = tape.add_row(out, b.get(self.b_out))?;
        Ok(Output { x, h })
    }

    /// Taped noise prediction `[x^L − x, h^L]` for stacked inputs.
    pub fn taped_eps(
        &self,
        tape: &mut Tape,
        b: &Bindings,
        pk: &Packed,
        x: Var,
        h: Var,
    ) -> Result<(Var, Var)> {
        let out = self.forward(tape, b, pk, x, h)?;
        let ex = tape.sub(out.x, x)?;
        Ok((ex, out.h))
    }

    /// Runs clouds through the network; returns final coordinates and features per cloud.
    ///
    /// Fixed atoms are copied from the input so they stay bit-identical.
    pub fn apply(
        &self,
        clouds: &[(&Cloud, f64)],
    ) -> Result<Vec<(Vec<[f64; 3]>, Vec<[f64; ELEMENT_SLOTS]>)>> {
        let pk = Packed::new(clouds)?;
        let mut tape = Tape::new();
        let b = tape.bind(&self.params);
        let (x, h) = stack(&mut tape, clouds);
        let out = self.forward(&mut tape, &b, &pk, x, h)?;
        let (xo, ho) = (tape.value(out.x), tape.value(out.h));
        Ok(clouds
            .iter()
            .zip(&pk.offsets)
            .map(|((c, _), &off)| {
                let xs = (0..c.len())
                    .map(|i| {
                        if c.fixed[i] {
                            c.x[i]
                        } else {
                            row3(xo, off + i)
                        }
                    })
                    .collect();
                let hs = (0..c.len()).map(|i| row_slots(ho, off + i)).collect();
                (xs, hs)
            })
            .collect())
    }

    /// Noise prediction per cloud; coordinate rows of fixed atoms are exactly zero.
    pub fn eps_hat(
        &self,
        clouds: &[(&Cloud, f64)],
    ) -> Result<Vec<(Vec<[f64; 3]>, Vec<[f64; ELEMENT_SLOTS]>)>> {
        let outs = self.apply(clouds)?;
        Ok(outs
            .into_iter()
            .zip(clouds)
            .map(|((xs, hs), (c, _))| {
                let ex = xs
                    .iter()
                    .zip(&c.x)
                    .zip(&c.fixed)
                    .map(|((a, z), &f)| {
                        if f {
                            [0.0; 3]
                        } else {
                            [a[0] - z[0], a[1] - z[1], a[2] - z[2]]
                        }
                    })
                    .collect();
                (ex, hs)
            })
            .collect())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(CHECKPOINT_KIND, self.params.clone())
            .with_meta("layers", self.config.layers)
            .with_meta("hidden", self.config.hidden)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let bad = |reason: String| EgnnError::NotTrained {
            kind: CHECKPOINT_KIND,
            reason,
        };
        if ck.kind != CHECKPOINT_KIND {
            return Err(bad(format!("kind is {:?}", ck.kind)));
        }
        let config = EgnnConfig {
            layers: ck.meta_usize("layers")?,
            hidden: ck.meta_usize("hidden")?,
        };
        let mut net = Self::new(config, &mut Rng::new(0));
        copy_params(&mut net.params, &ck.params).map_err(bad)?;
        Ok(net)
    }
}

/// Overwrites every parameter of `dst` with the same-named tensor of `src`.
pub(crate) fn copy_params(
    dst: &mut ParamStore,
    src: &ParamStore,
) -> std::result::Result<(), String> {
    for id in dst.ids().collect::<Vec<_>>() {
        let name = dst.name(id).to_string();
        let s = src
            .id(&name)
            .map(|s| src.get(s))
            .ok_or_else(|| format!("missing parameter {name}"))?;
        if s.shape() != dst.get(id).shape() {
            return Err(format!("parameter {name} has shape {:?}", s.shape()));
        }
        *dst.get_mut(id) = s.clone();
    }
    Ok(())
}

/// Stacks cloud coordinates and features as two tape leaves.
pub fn stack(tape: &mut Tape, clouds: &[(&Cloud, f64)]) -> (Var, Var) {
    let n: usize = clouds.iter().map(|(c, _)| c.len()).sum();
    let xs: Vec<f64> = clouds
        .iter()
        .flat_map(|(c, _)| c.x.iter().flatten().copied())
        .collect();
    let hs: Vec<f64> = clouds
        .iter()
        .flat_map(|(c, _)| c.h.iter().flatten().copied())
        .collect();
    let x = tape.leaf(Tensor::new(&[n, 3], xs).expect("n x 3"));
    let h = tape.leaf(Tensor::new(&[n, ELEMENT_SLOTS], hs).expect("n x slots"));
    (x, h)
}

fn row3(t: &Tensor, i: usize) -> [f64; 3] {
    let r = t.row(i);
    [r[0], r[1], r[2]]
}

fn row_slots(t: &Tensor, i: usize) -> [f64; ELEMENT_SLOTS] {
    let mut out = [0.0; ELEMENT_SLOTS];
    out.copy_from_slice(t.row(i));
    out
}

/// Random orthogonal matrix from Gram-Schmidt on a Gaussian matrix, with the
/// requested determinant sign.
pub fn random_orthogonal(rng: &mut Rng, reflect: bool) -> [[f64; 3]; 3] {
    loop {
        let mut q = [[0.0; 3]; 3];
        let mut ok = true;
        for k in 0..3 {
            let mut v = [rng.normal(), rng.normal(), rng.normal()];
            for prev in q.iter().take(k) {
                let dot: f64 = (0..3).map(|c| v[c] * prev[c]).sum();
                for c in 0..3 {
                    v[c] -= dot * prev[c];
                }
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-6 {
                ok = false;
                break;
            }
            q[k] = v.map(|a| a / norm);
        }
        if !ok {
            continue;
        }
        if (det3(&q) < 0.0) != reflect {
            q[2] = q[2].map(|a| -a);
        }
        return q;
    }
}

pub fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn transform(u: &[[f64; 3]; 3], shift: [f64; 3], p: [f64; 3]) -> [f64; 3] {
    let mut out = shift;
    for (r, o) in out.iter_mut().enumerate() {
        *o += (0..3).map(|c| u[r][c] * p[c]).sum::<f64>();
    }
    out
}

#[derive(Clone, Debug)]
pub struct EquivarianceReport {
    pub trials: usize,
    pub reflections: usize,
    pub max_coord_error: f64,
    pub max_feature_error: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Random cloud with a random fixed subset and standard-normal features.
pub fn random_cloud(rng: &mut Rng, n: usize) -> Cloud {
    let x = (0..n)
        .map(|_| [2.0 * rng.normal(), 2.0 * rng.normal(), 2.0 * rng.normal()])
        .collect();
    let h = (0..n)
        .map(|_| {
            let mut r = [0.0; ELEMENT_SLOTS];
            r.iter_mut().for_each(|v| *v = rng.normal());
            r
        })
        .collect();
    let fixed: Vec<bool> = (0..n).map(|_| rng.uniform() < 0.5).collect();
    let anchor = fixed.iter().map(|&f| f && rng.uniform() < 0.3).collect();
    Cloud {
        x,
        h,
        fixed,
        anchor,
    }
}

/// Compares `f(Ux + s)` against `U f(x) + s` for coordinates and `f(x)` for
/// features on random clouds, random orthogonal `U` (every other trial a
/// reflection) and random shifts `s`.
pub fn check_equivariance(
    net: &Egnn,
    trials: usize,
    tol: f64,
    rng: &mut Rng,
) -> Result<EquivarianceReport> {
    let mut max_x: f64 = 0.0;
    let mut max_h: f64 = 0.0;
    let mut reflections = 0;
    for trial in 0..trials {
        let n = 1 + rng.below(8);
        let cloud = random_cloud(rng, n);
        let frac = rng.uniform();
        let reflect = trial % 2 == 1;
        reflections += usize::from(reflect);
        let u = random_orthogonal(rng, reflect);
        let shift = [5.0 * rng.normal(), 5.0 * rng.normal(), 5.0 * rng.normal()];
        let moved = Cloud {
            x: cloud.x.iter().map(|&p| transform(&u, shift, p)).collect(),
            ..cloud.clone()
        };
        let base = net.apply(&[(&cloud, frac)])?.remove(0);
        let after = net.apply(&[(&moved, frac)])?.remove(0);
        for i in 0..n {
            let want = transform(&u, shift, base.0[i]);
            for c in 0..3 {
                max_x = max_x.max((after.0[i][c] - want[c]).abs());
            }
            for c in 0..ELEMENT_SLOTS {
                max_h = max_h.max((after.1[i][c] - base.1[i][c]).abs());
            }
        }
    }
    Ok(EquivarianceReport {
        trials,
        reflections,
        max_coord_error: max_x,
        max_feature_error: max_h,
        tol,
        passed: max_x <= tol && max_h <= tol,
    })
}
