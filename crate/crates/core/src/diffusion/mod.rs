//! Variance-preserving diffusion over atom point clouds with a fixed synthon.
//!
//! Coordinates live in the frame of the synthon's center of mass. Synthon
//! coordinates are never noised. Generated coordinates and every element
//! vector are noised and denoised.

mod data;
mod sample;

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::chem::ELEMENT_SLOTS;
use crate::egnn::{stack, Cloud, Egnn, EgnnConfig, EgnnError, Packed};
use crate::numerics::{Adam, NumericsError, Rng, Tape, Tensor, TrainReport, Var};

pub use data::{completion_examples, decode_element, molecule_cloud, CompletionExample};
pub use sample::{sample, sample_many, TrajectoryStep};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffusionError {
    #[error("schedule needs T >= 2, got {0}")]
    BadT(usize),
    #[error("step {t} outside {lo}..={hi}")]
    StepOutOfRange { t: usize, lo: usize, hi: usize },
    #[error("requested {n_total} atoms but the synthon already has {synthon}")]
    SizeTooSmall { n_total: usize, synthon: usize },
    #[error("latent arrays disagree in length")]
    LengthMismatch,
    #[error("reaction cannot be turned into completion examples: {0}")]
    Example(String),
    #[error(transparent)]
    Egnn(#[from] EgnnError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T, E = DiffusionError> = std::result::Result<T, E>;

/// Stability constant of the polynomial schedule.
pub const SCHEDULE_S: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub t_max: usize,
    pub s: f64,
    /// `alpha[t]` for `t = 0..=T`.
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// `α_t = (1 − 2s)(1 − ((t − 1)/(T − 1))²)` for `t ≥ 1`, `α_0 = 1`, `σ_t = √(1 − α_t²)`.
pub fn build_schedule(t_max: usize) -> Result<NoiseSchedule> {
    if t_max < 2 {
        return Err(DiffusionError::BadT(t_max));
    }
    let s = SCHEDULE_S;
    let mut alpha = vec![1.0];
    for t in 1..=t_max {
        let u = (t - 1) as f64 / (t_max - 1) as f64;
        alpha.push((1.0 - 2.0 * s) * (1.0 - u * u));
    }
    let sigma = alpha.iter().map(|a| (1.0 - a * a).sqrt()).collect();
    Ok(NoiseSchedule {
        t_max,
        s,
        alpha,
        sigma,
    })
}

/// Coefficients of `q(z_{t−1} | z_t, z_0) = N(c_t z_t + c_0 z_0, var)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PosteriorCoeffs {
    pub c_t: f64,
    pub c_0: f64,
    pub var: f64,
}

impl PosteriorCoeffs {
    /// From `(α, σ)` at the previous step `s = t − 1` and at step `t`.
    pub fn from_values(a_s: f64, s_s: f64, a_t: f64, s_t: f64) -> Self {
        let (s2s, s2t) = (s_s * s_s, s_t * s_t);
        Self {
            c_t: a_t * s2s / (a_s * s2t),
            c_0: (a_s * a_s * s2t - a_t * a_t * s2s) / (a_s * s2t),
            var: s2s - a_t * a_t * s2s * s2s / (a_s * a_s * s2t),
        }
    }
}

impl NoiseSchedule {
    fn check(&self, t: usize, lo: usize) -> Result<()> {
        if t < lo || t > self.t_max {
            return Err(DiffusionError::StepOutOfRange {
                t,
                lo,
                hi: self.t_max,
            });
        }
        Ok(())
    }

    /// Posterior coefficients for `1 ≤ t ≤ T`; at `t = 1` the variance is 0.
    pub fn coeffs(&self, t: usize) -> Result<PosteriorCoeffs> {
        self.check(t, 1)?;
        Ok(PosteriorCoeffs::from_values(
            self.alpha[t - 1],
            self.sigma[t - 1],
            self.alpha[t],
            self.sigma[t],
        ))
    }

    /// Closed-form posterior mean and variance for `1 < t ≤ T`.
    pub fn posterior(&self, z_t: &[f64], z_0: &[f64], t: usize) -> Result<(Vec<f64>, f64)> {
        self.check(t, 2)?;
        if z_t.len() != z_0.len() {
            return Err(DiffusionError::LengthMismatch);
        }
        let c = self.coeffs(t)?;
        Ok((
            z_t.iter()
                .zip(z_0)
                .map(|(a, b)| c.c_t * a + c.c_0 * b)
                .collect(),
            c.var,
        ))
    }

    /// Weight `½(α_{t−1}²/σ_{t−1}² − α_t²/σ_t²)` on `‖ẑ − z_0‖²` for `1 < t ≤ T`.
    pub fn kl_weight(&self, t: usize) -> Result<f64> {
        self.check(t, 2)?;
        let snr = |k: usize| (self.alpha[k] / self.sigma[k]).powi(2);
        Ok(0.5 * (snr(t - 1) - snr(t)))
    }
}

/// KL divergence between diagonal Gaussians `N(m1, v1)` and `N(m2, v2)`.
pub fn gaussian_kl(m1: &[f64], v1: &[f64], m2: &[f64], v2: &[f64]) -> f64 {
    let mut kl = 0.0;
    for k in 0..m1.len() {
        kl += v1[k] / v2[k] + (m2[k] - m1[k]).powi(2) / v2[k] - 1.0 + (v2[k] / v1[k]).ln();
    }
    0.5 * kl
}

/// A noised cloud together with the noise that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Noised {
    pub z_t: Cloud,
    pub t: usize,
    /// Zero rows for fixed atoms.
    pub eps_x: Vec<[f64; 3]>,
    pub eps_h: Vec<[f64; ELEMENT_SLOTS]>,
}

/// Samples `z_t = α_t z_0 + σ_t ε` around the fixed atoms' center.
///
/// Fixed coordinates are copied from `z_0`. With no fixed atom the
/// coordinate noise is projected to zero mean.
pub fn forward_noise(
    z0: &Cloud,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<Noised> {
    schedule.check(t, 1)?;
    z0.validate()?;
    let (a, s) = (schedule.alpha[t], schedule.sigma[t]);
    let n = z0.len();
    let c = z0.fixed_center();
    let mut eps_x: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let e = [rng.normal(), rng.normal(), rng.normal()];
            if z0.fixed[i] {
                [0.0; 3]
            } else {
                e
            }
        })
        .collect();
    if !z0.fixed.iter().any(|&f| f) {
        project_mean(&mut eps_x);
    }
    let eps_h: Vec<[f64; ELEMENT_SLOTS]> = (0..n)
        .map(|_| {
            let mut r = [0.0; ELEMENT_SLOTS];
            r.iter_mut().for_each(|v| *v = rng.normal());
            r
        })
        .collect();
    let x = (0..n)
        .map(|i| {
            if z0.fixed[i] {
                z0.x[i]
            } else {
                let p = z0.x[i];
                [0, 1, 2].map(|k| c[k] + a * (p[k] - c[k]) + s * eps_x[i][k])
            }
        })
        .collect();
    let h = (0..n)
        .map(|i| {
            let mut r = [0.0; ELEMENT_SLOTS];
            for k in 0..ELEMENT_SLOTS {
                r[k] = a * z0.h[i][k] + s * eps_h[i][k];
            }
            r
        })
        .collect();
    Ok(Noised {
        z_t: Cloud {
            x,
            h,
            fixed: z0.fixed.clone(),
            anchor: z0.anchor.clone(),
        },
        t,
        eps_x,
        eps_h,
    })
}

fn project_mean(rows: &mut [[f64; 3]]) {
    if rows.is_empty() {
        return;
    }
    let mut m = [0.0; 3];
    for r in rows.iter() {
        for k in 0..3 {
            m[k] += r[k];
        }
    }
    let m = m.map(|v| v / rows.len() as f64);
    for r in rows.iter_mut() {
        for k in 0..3 {
            r[k] -= m[k];
        }
    }
}

/// Squared error of a noise prediction over the free components: generated
/// coordinates and all element vectors.
pub fn noise_error(noised: &Noised, pred_x: &[[f64; 3]], pred_h: &[[f64; ELEMENT_SLOTS]]) -> f64 {
    let mut total = 0.0;
    for i in 0..noised.z_t.len() {
        if !noised.z_t.fixed[i] {
            total += (0..3)
                .map(|k| (pred_x[i][k] - noised.eps_x[i][k]).powi(2))
                .sum::<f64>();
        }
        total += (0..ELEMENT_SLOTS)
            .map(|k| (pred_h[i][k] - noised.eps_h[i][k]).powi(2))
            .sum::<f64>();
    }
    total
}

/// Number of free scalar components of a cloud.
pub fn free_dim(cloud: &Cloud) -> usize {
    cloud
        .fixed
        .iter()
        .map(|&f| if f { ELEMENT_SLOTS } else { 3 + ELEMENT_SLOTS })
        .sum()
}

/// Taped loss `mean_batch ‖ε̂ − ε‖²` over free components, one uniform `t` per item.
pub fn diffusion_loss(
    tape: &mut Tape,
    b: &crate::numerics::Bindings,
    model: &Egnn,
    batch: &[&Cloud],
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<Var> {
    let mut noised = Vec::with_capacity(batch.len());
    for z0 in batch {
        let t = 1 + rng.below(schedule.t_max);
        noised.push(forward_noise(z0, t, schedule, rng)?);
    }
    taped_noise_loss(tape, b, model, &noised, schedule)
}

/// Taped loss for already noised items.
pub fn taped_noise_loss(
    tape: &mut Tape,
    b: &crate::numerics::Bindings,
    model: &Egnn,
    noised: &[Noised],
    schedule: &NoiseSchedule,
) -> Result<Var> {
    if noised.is_empty() {
        return Err(NumericsError::Empty("diffusion batch").into());
    }
    let items: Vec<(&Cloud, f64)> = noised
        .iter()
        .map(|nz| (&nz.z_t, nz.t as f64 / schedule.t_max as f64))
        .collect();
    let pk = Packed::new(&items)?;
    let (x, h) = stack(tape, &items);
    let (ex, eh) = model.taped_eps(tape, b, &pk, x, h)?;
    let n = pk.n;
    let mut tx = Vec::with_capacity(n * 3);
    let mut th = Vec::with_capacity(n * ELEMENT_SLOTS);
    let mut mask = Vec::with_capacity(n);
    for nz in noised {
        tx.extend(nz.eps_x.iter().flatten());
        th.extend(nz.eps_h.iter().flatten());
        mask.extend(nz.z_t.fixed.iter().map(|&f| if f { 0.0 } else { 1.0 }));
    }
    let tx = tape.leaf(Tensor::new(&[n, 3], tx)?);
    let th = tape.leaf(Tensor::new(&[n, ELEMENT_SLOTS], th)?);
    let mask = tape.leaf(Tensor::new(&[n, 1], mask)?);
    let dx = tape.sub(ex, tx)?;
    let dx = tape.scale_rows(dx, mask)?;
    let dx = tape.square(dx);
    let dx = tape.sum(dx);
    let dh = tape.sub(eh, th)?;
    let dh = tape.square(dh);
    let dh = tape.sum(dh);
    let total = tape.add(dx, dh)?;
    Ok(tape.scale(total, 1.0 / noised.len() as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionTrainConfig {
    pub steps: usize,
    pub lr: f64,
    /// Clouds per optimizer step; examples are cycled in shuffled order.
    pub batch_size: usize,
    pub seed: u64,
    pub time_limit: Option<Duration>,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 2e-3,
            batch_size: 32,
            seed: 0,
            time_limit: None,
        }
    }
}

/// Adam on [`diffusion_loss`]; the learning rate decays linearly to a tenth.
pub fn train_diffusion(
    examples: &[Cloud],
    config: EgnnConfig,
    schedule: &NoiseSchedule,
    dc: &DiffusionTrainConfig,
) -> Result<(Egnn, TrainReport)> {
    if examples.is_empty() {
        return Err(NumericsError::Empty("diffusion training set").into());
    }
    let mut rng = Rng::new(dc.seed);
    let mut model = Egnn::new(config, &mut rng.fork(1));
    let mut adam = Adam::new(&model.params, dc.lr);
    let mut report = TrainReport::default();
    let start = Instant::now();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    for step in 0..dc.steps {
        let mut batch = Vec::with_capacity(dc.batch_size.max(1));
        while batch.len() < dc.batch_size.max(1) {
            if cursor == order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(&examples[order[cursor]]);
            cursor += 1;
        }
        let mut tape = Tape::new();
        let b = tape.bind(&model.params);
        let loss = diffusion_loss(&mut tape, &b, &model, &batch, schedule, &mut rng)?;
        report.epoch_losses.push(tape.value(loss).item());
        let grads = tape.backward(loss)?.for_params(&b);
        adam.lr = dc.lr * (1.0 - 0.9 * step as f64 / dc.steps as f64);
        adam.step(&mut model.params, &grads);
        if dc.time_limit.is_some_and(|limit| start.elapsed() > limit) {
            break;
        }
    }
    report.steps = adam.steps();
    report.elapsed = start.elapsed();
    Ok((model, report))
}
