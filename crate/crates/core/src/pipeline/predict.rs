//! Inference: rank centers, split the sampling budget, complete synthons,
//! and rank reactant sets by how often they were generated.

use std::collections::HashMap;

use serde::Serialize;

use super::stages::{
    canonical_molecule, canonical_reaction, center_examples, molecule_rng, product_conformer,
    Models,
};
use super::{PipelineConfig, PipelineError, Result};
use crate::assemble::{complete_reactant, valence_check};
use crate::centernet::center_accuracy;
use crate::chem::{
    extract_synthons, parse_smiles, reactant_set_key, write_smiles, Molecule, Reaction,
};
use crate::diffusion::{molecule_cloud, sample_many, TrajectoryStep};
use crate::egnn::{Cloud, SizeInput};
use crate::numerics::Rng;

/// Streams below this are left to training-time draws.
const CHAIN_STREAM: u64 = 1 << 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CenterChoice {
    pub bond: [usize; 2],
    pub score: f64,
    pub chains: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    /// Canonical reactant set, molecules sorted and joined by `.`.
    pub reactants: String,
    pub frequency: usize,
    /// False when some generated atoms did not attach to their synthon.
    pub connected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub product: String,
    pub centers: Vec<CenterChoice>,
    pub samples: usize,
    /// Chains whose completion passed every check.
    pub valid: usize,
    pub candidates: Vec<Candidate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    /// 1-based rank of `truth` among the candidates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hit_rank: Option<usize>,
}

impl PredictionRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn top(&self, k: usize) -> impl Iterator<Item = &str> {
        self.candidates.iter().take(k).map(|c| c.reactants.as_str())
    }
}

/// Splits `n` chains proportionally to `scores`; the remainder goes to the first.
pub fn allocate(scores: &[f64], n: usize) -> Vec<usize> {
    let mut out = vec![0; scores.len()];
    if scores.is_empty() {
        return out;
    }
    let total: f64 = scores.iter().sum();
    if total.is_finite() && total > 0.0 {
        for (o, s) in out.iter_mut().zip(scores) {
            *o = (n as f64 * s.max(0.0) / total).floor() as usize;
        }
    }
    let given: usize = out.iter().sum();
    out[0] += n.saturating_sub(given);
    out
}

/// Counts keys and orders them by frequency, ties by first appearance.
pub fn rank_by_frequency<K: Clone + Eq + std::hash::Hash>(
    keys: impl IntoIterator<Item = K>,
) -> Vec<(K, usize)> {
    let mut seen: HashMap<K, (usize, usize)> = HashMap::new();
    for (pos, k) in keys.into_iter().enumerate() {
        seen.entry(k).or_insert((0, pos)).0 += 1;
    }
    let mut out: Vec<(K, usize, usize)> = seen
        .into_iter()
        .map(|(k, (n, first))| (k, n, first))
        .collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    out.into_iter().map(|(k, n, _)| (k, n)).collect()
}

struct Fragment {
    mol: Molecule,
    cloud: Cloud,
    sizes: Vec<f64>,
}

/// Connected pieces of `mol`, each re-read from its canonical string.
///
/// `None` when a piece does not survive the round trip.
pub(crate) fn canonical_pieces(mol: &Molecule) -> Option<Vec<Molecule>> {
    let parts = if mol.is_connected() {
        vec![mol.clone()]
    } else {
        mol.components()
            .iter()
            .map(|c| mol.subgraph(c, None))
            .collect()
    };
    parts
        .iter()
        .map(|p| {
            let text = write_smiles(p);
            let back = parse_smiles(&text).ok()?;
            (write_smiles(&back) == text).then_some(back)
        })
        .collect()
}

/// A completed reactant set, or `None` when any piece fails a check.
fn assemble(fragments: &[Fragment], samples: &[Cloud]) -> Option<(String, bool)> {
    let mut pieces = Vec::with_capacity(fragments.len());
    let mut connected = true;
    for (f, s) in fragments.iter().zip(samples) {
        let c = complete_reactant(&f.mol, s).ok()?;
        valence_check(&c.mol).ok()?;
        connected &= c.connected;
        pieces.extend(canonical_pieces(&c.mol)?);
    }
    Some((reactant_set_key(&pieces), connected))
}

/// Runs the full pipeline on one product; an empty candidate list is allowed.
pub fn predict_record(
    product: &Molecule,
    models: &Models,
    config: &PipelineConfig,
    truth: Option<&str>,
    mut trajectory: Option<&mut Vec<TrajectoryStep>>,
) -> Result<PredictionRecord> {
    let mol = canonical_molecule(product)?;
    let product_str = write_smiles(&mol);
    let mut placed = mol.clone();
    placed
        .set_coords(product_conformer(&mol, config.seed, &config.conformer()))
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    let ranked: Vec<_> = models
        .center
        .rank_centers(&mol)?
        .into_iter()
        .take(config.centers)
        .collect();
    let scores: Vec<f64> = ranked.iter().map(|r| r.1).collect();
    let alloc = allocate(&scores, config.samples);

    let mut per_center: Vec<Vec<Fragment>> = Vec::with_capacity(ranked.len());
    for &(bond, _) in &ranked {
        let mut frags = Vec::new();
        for syn in
            extract_synthons(&placed, bond).map_err(|e| PipelineError::Data(e.to_string()))?
        {
            let m = syn.to_molecule();
            let anchors = syn.anchors();
            let sizes = models
                .completer
                .size
                .predict_size(&SizeInput::new(&m, &anchors)?)?;
            let cloud = molecule_cloud(&m, &anchors, m.atom_count())?;
            frags.push(Fragment {
                mol: m,
                cloud,
                sizes,
            });
        }
        per_center.push(frags);
    }

    // one request per (chain, synthon), each with its own stream
    let base = molecule_rng(config.seed, &mol);
    let mut owners = Vec::new();
    let mut requests: Vec<(&Cloud, usize)> = Vec::new();
    let mut rngs = Vec::new();
    let mut chain = 0usize;
    for (c, &n) in alloc.iter().enumerate() {
        for _ in 0..n {
            let mut rng = base.fork(CHAIN_STREAM + chain as u64);
            for (k, f) in per_center[c].iter().enumerate() {
                let extra = rng.weighted(&f.sizes);
                requests.push((&f.cloud, f.cloud.len() + extra));
                rngs.push(rng.fork(k as u64));
                owners.push((chain, c, k));
            }
            chain += 1;
        }
    }
    let mut samples: Vec<Cloud> = Vec::with_capacity(requests.len());
    let mut start = 0;
    while start < requests.len() {
        let end = (start + config.chunk).min(requests.len());
        let mut steps = trajectory.as_ref().map(|_| Vec::new());
        samples.extend(sample_many(
            &models.completer.denoiser,
            &models.completer.schedule,
            &requests[start..end],
            &mut rngs[start..end],
            steps.as_mut(),
        )?);
        if let (Some(all), Some(steps)) = (trajectory.as_deref_mut(), steps) {
            for mut s in steps {
                let (g, _, k) = owners[start + s.chain];
                s.chain = g;
                s.synthon = k;
                all.push(s);
            }
        }
        start = end;
    }

    let mut keys = Vec::new();
    let mut flags: HashMap<String, bool> = HashMap::new();
    let mut r = 0;
    while r < owners.len() {
        let (_, c, _) = owners[r];
        let n = per_center[c].len();
        if let Some((key, connected)) = assemble(&per_center[c], &samples[r..r + n]) {
            *flags.entry(key.clone()).or_insert(true) &= connected;
            keys.push(key);
        }
        r += n;
    }
    let valid = keys.len();
    let candidates: Vec<Candidate> = rank_by_frequency(keys)
        .into_iter()
        .map(|(reactants, frequency)| Candidate {
            connected: flags[&reactants],
            reactants,
            frequency,
        })
        .collect();
    let hit_rank = truth.and_then(|t| {
        candidates
            .iter()
            .position(|c| c.reactants == t)
            .map(|p| p + 1)
    });
    Ok(PredictionRecord {
        product: product_str,
        centers: ranked
            .iter()
            .zip(&alloc)
            .map(|(&((i, j), score), &chains)| CenterChoice {
                bond: [i, j],
                score,
                chains,
            })
            .collect(),
        samples: config.samples,
        valid,
        candidates,
        truth: truth.map(str::to_string),
        hit_rank,
    })
}

/// Like [`predict_record`] but fails when no chain produced a valid set.
pub fn predict(
    product: &Molecule,
    models: &Models,
    config: &PipelineConfig,
    trajectory: Option<&mut Vec<TrajectoryStep>>,
) -> Result<PredictionRecord> {
    let rec = predict_record(product, models, config, None, trajectory)?;
    if rec.candidates.is_empty() {
        return Err(PipelineError::NoValidCandidate(rec.product));
    }
    Ok(rec)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRow {
    pub variant: String,
    pub reactions: usize,
    /// Fraction whose best-scored bond is a true center.
    pub center_top1: f64,
    /// `(k, accuracy)` pairs in ascending `k`.
    pub topk: Vec<(usize, f64)>,
    /// Reactions for which every chain failed.
    pub no_valid: usize,
}

impl EvalRow {
    pub fn accuracy(&self, k: usize) -> Option<f64> {
        self.topk.iter().find(|(kk, _)| *kk == k).map(|p| p.1)
    }
}

/// Top-k exact match over `reactions`, plus the records it was computed from.
pub fn evaluate(
    reactions: &[Reaction],
    models: &Models,
    config: &PipelineConfig,
    variant: &str,
) -> Result<(EvalRow, Vec<PredictionRecord>)> {
    let center_top1 = center_accuracy(&models.center, &center_examples(reactions)?)?;
    let mut records = Vec::with_capacity(reactions.len());
    for rxn in reactions {
        let rxn = canonical_reaction(rxn)?;
        let truth = rxn.reactant_set_key();
        records.push(predict_record(
            &rxn.product.mol,
            models,
            config,
            Some(&truth),
            None,
        )?);
    }
    let mut ks = config.topk.clone();
    ks.sort_unstable();
    ks.dedup();
    let n = records.len().max(1) as f64;
    let topk = ks
        .iter()
        .map(|&k| {
            (
                k,
                records
                    .iter()
                    .filter(|r| r.hit_rank.is_some_and(|h| h <= k))
                    .count() as f64
                    / n,
            )
        })
        .collect();
    let row = EvalRow {
        variant: variant.to_string(),
        reactions: records.len(),
        center_top1,
        topk,
        no_valid: records.iter().filter(|r| r.candidates.is_empty()).count(),
    };
    Ok((row, records))
}

/// Fixed-width text table, one row per variant.
pub fn format_table(rows: &[EvalRow]) -> String {
    let mut out = String::from("variant     n     center@1");
    if let Some(r) = rows.first() {
        for (k, _) in &r.topk {
            out += &format!("  top-{k:<3}");
        }
    }
    out.push('\n');
    for r in rows {
        out += &format!(
            "{:<10}  {:<4}  {:>7.1}%",
            r.variant,
            r.reactions,
            100.0 * r.center_top1
        );
        for (_, a) in &r.topk {
            out += &format!("  {:>6.1}%", 100.0 * a);
        }
        out.push('\n');
    }
    out
}

/// A fresh stream per (seed, chain) for standalone sampling.
pub fn sample_rng(seed: u64, chain: usize) -> Rng {
    Rng::with_stream(seed, CHAIN_STREAM + chain as u64)
}
