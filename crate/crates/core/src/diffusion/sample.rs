//! Ancestral sampling that grows new atoms around a fixed synthon.

use serde::Serialize;

use super::{DiffusionError, NoiseSchedule, Result};
use crate::chem::{Element, ELEMENT_SLOTS};
use crate::egnn::{Cloud, Egnn};
use crate::numerics::Rng;

/// One recorded reverse step, in the caller's coordinate frame.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub chain: usize,
    /// Which of the chain's synthons; the sampler leaves it at 0.
    pub synthon: usize,
    pub t: usize,
    pub x: Vec<[f64; 3]>,
    /// Element symbol of each atom's largest feature slot.
    pub types: Vec<String>,
}

fn argmax_symbol(h: &[f64; ELEMENT_SLOTS]) -> String {
    let k = (0..ELEMENT_SLOTS).fold(0, |b, k| if h[k] > h[b] { k } else { b });
    Element::from_slot(k).map_or_else(|| "*".to_string(), |e| e.symbol().to_string())
}

struct Chain {
    synthon_len: usize,
    center: [f64; 3],
    /// Latent in the synthon-centered frame.
    z: Cloud,
}

impl Chain {
    fn start(synthon: &Cloud, n_total: usize, rng: &mut Rng) -> Result<Self> {
        synthon.validate()?;
        let m = synthon.len();
        if n_total < m {
            return Err(DiffusionError::SizeTooSmall {
                n_total,
                synthon: m,
            });
        }
        let c = synthon.fixed_center();
        let mut x: Vec<[f64; 3]> = synthon
            .x
            .iter()
            .map(|p| [0, 1, 2].map(|k| p[k] - c[k]))
            .collect();
        for _ in m..n_total {
            x.push([rng.normal(), rng.normal(), rng.normal()]);
        }
        let h = (0..n_total)
            .map(|_| {
                let mut r = [0.0; ELEMENT_SLOTS];
                r.iter_mut().for_each(|v| *v = rng.normal());
                r
            })
            .collect();
        let mut fixed = vec![true; m];
        fixed.resize(n_total, false);
        let mut anchor = synthon.anchor.clone();
        anchor.resize(n_total, false);
        Ok(Self {
            synthon_len: m,
            center: c,
            z: Cloud {
                x,
                h,
                fixed,
                anchor,
            },
        })
    }

    /// The latent in the caller's frame; synthon rows are copied verbatim.
    fn export(&self, synthon: &Cloud) -> Cloud {
        let mut out = self.z.clone();
        for i in 0..out.len() {
            out.x[i] = if i < self.synthon_len {
                synthon.x[i]
            } else {
                [0, 1, 2].map(|k| self.z.x[i][k] + self.center[k])
            };
        }
        out
    }
}

/// Runs `t = T..1` for one synthon and returns the `z_0` estimate.
///
/// Every atom of `synthon` is treated as fixed. The result holds the synthon
/// rows first, bit-identical in coordinates, then `n_total − |S|` new atoms.
pub fn sample(
    model: &Egnn,
    schedule: &NoiseSchedule,
    synthon: &Cloud,
    n_total: usize,
    rng: &mut Rng,
    trajectory: Option<&mut Vec<TrajectoryStep>>,
) -> Result<Cloud> {
    let mut rngs = [rng.clone()];
    let out = sample_many(
        model,
        schedule,
        &[(synthon, n_total)],
        &mut rngs,
        trajectory,
    )?;
    *rng = rngs[0].clone();
    Ok(out.into_iter().next().expect("one chain"))
}

/// Runs independent chains side by side, chain `k` drawing from `rngs[k]`.
///
/// Chains with nothing to generate return their synthon unchanged.
pub fn sample_many(
    model: &Egnn,
    schedule: &NoiseSchedule,
    requests: &[(&Cloud, usize)],
    rngs: &mut [Rng],
    mut trajectory: Option<&mut Vec<TrajectoryStep>>,
) -> Result<Vec<Cloud>> {
    assert_eq!(requests.len(), rngs.len(), "one rng per chain");
    let mut out: Vec<Option<Cloud>> = vec![None; requests.len()];
    let mut active = Vec::new();
    let mut chains = Vec::new();
    for (k, &(syn, n_total)) in requests.iter().enumerate() {
        if n_total == syn.len() {
            syn.validate()?;
            out[k] = Some(syn.clone());
        } else {
            chains.push(Chain::start(syn, n_total, &mut rngs[k])?);
            active.push(k);
        }
    }
    let t_max = schedule.t_max;
    let record = |traj: &mut Option<&mut Vec<TrajectoryStep>>, chains: &[Chain], t: usize| {
        if let Some(traj) = traj.as_deref_mut() {
            for (c, &k) in chains.iter().zip(&active) {
                let z = c.export(requests[k].0);
                traj.push(TrajectoryStep {
                    chain: k,
                    synthon: 0,
                    t,
                    x: z.x,
                    types: z.h.iter().map(argmax_symbol).collect(),
                });
            }
        }
    };
    if !chains.is_empty() {
        record(&mut trajectory, &chains, t_max);
    }
    for t in (1..=t_max).rev() {
        if chains.is_empty() {
            break;
        }
        let frac = t as f64 / t_max as f64;
        let inputs: Vec<(&Cloud, f64)> = chains.iter().map(|c| (&c.z, frac)).collect();
        let eps = model.eps_hat(&inputs)?;
        let co = schedule.coeffs(t)?;
        let (a, s) = (schedule.alpha[t], schedule.sigma[t]);
        for ((chain, (ex, eh)), &k) in chains.iter_mut().zip(eps).zip(&active) {
            let rng = &mut rngs[k];
            let noise_sd = co.var.max(0.0).sqrt();
            let z = &mut chain.z;
            // z_hat = (z_t − σ ε̂)/α, taken as 0 once α vanishes at t = T
            let est = |zt: f64, e: f64| if t == t_max { 0.0 } else { (zt - s * e) / a };
            for i in 0..z.len() {
                if !z.fixed[i] {
                    for c in 0..3 {
                        let mean = co.c_t * z.x[i][c] + co.c_0 * est(z.x[i][c], ex[i][c]);
                        z.x[i][c] = if t > 1 {
                            mean + noise_sd * rng.normal()
                        } else {
                            mean
                        };
                    }
                }
                for c in 0..ELEMENT_SLOTS {
                    let mean = co.c_t * z.h[i][c] + co.c_0 * est(z.h[i][c], eh[i][c]);
                    z.h[i][c] = if t > 1 {
                        mean + noise_sd * rng.normal()
                    } else {
                        mean
                    };
                }
            }
        }
        record(&mut trajectory, &chains, t - 1);
    }
    for (c, &k) in chains.iter().zip(&active) {
        out[k] = Some(c.export(requests[k].0));
    }
    Ok(out
        .into_iter()
        .map(|c| c.expect("every chain finished"))
        .collect())
}
