//! Inspection helpers behind the `dualgraph` and `sample` subcommands.

use serde::Serialize;

use super::predict::{canonical_pieces, rank_by_frequency, sample_rng, Candidate};
use super::stages::{product_conformer, Completer};
use super::{PipelineConfig, PipelineError, Result};
use crate::assemble::{complete_reactant, valence_check};
use crate::chem::{reactant_set_key, write_smiles, Molecule};
use crate::diffusion::{molecule_cloud, sample_many, TrajectoryStep};
use crate::egnn::{Cloud, SizeInput};
use crate::faces::{dual_graph, FaceKind};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FaceReport {
    pub kind: &'static str,
    pub boundary: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualEdgeReport {
    pub faces: [usize; 2],
    /// Atoms of the crossed bond.
    pub bond: [usize; 2],
    pub kind: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DualGraphReport {
    pub smiles: String,
    pub planar: bool,
    pub faces: Vec<FaceReport>,
    pub edges: Vec<DualEdgeReport>,
    /// Faces around each atom.
    pub membership: Vec<Vec<usize>>,
}

impl DualGraphReport {
    pub fn new(mol: &Molecule) -> Self {
        let dual = dual_graph(mol);
        let faces = dual
            .faces
            .iter()
            .map(|f| FaceReport {
                kind: match f.kind {
                    FaceKind::Inner => "inner",
                    FaceKind::Outer => "outer",
                    FaceKind::CatchAll => "catch-all",
                },
                boundary: f.boundary.clone(),
            })
            .collect();
        let edges = dual
            .edges
            .iter()
            .map(|e| {
                let b = mol.bond(e.bond);
                DualEdgeReport {
                    faces: [e.a, e.b],
                    bond: [b.a, b.b],
                    kind: format!("{:?}", e.kind).to_lowercase(),
                }
            })
            .collect();
        Self {
            smiles: write_smiles(mol),
            planar: dual.planar,
            faces,
            edges,
            membership: dual.membership,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleRecord {
    pub synthon: String,
    pub anchors: Vec<usize>,
    pub samples: usize,
    pub valid: usize,
    pub candidates: Vec<Candidate>,
}

impl SampleRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Completes one synthon `config.samples` times.
///
/// `anchors` index the synthon's atoms in input order. With `size` unset
/// each chain draws its atom count from the size classifier.
pub fn sample_synthon(
    synthon: &Molecule,
    anchors: &[usize],
    size: Option<usize>,
    models: &Completer,
    config: &PipelineConfig,
    mut trajectory: Option<&mut Vec<TrajectoryStep>>,
) -> Result<SampleRecord> {
    let n = synthon.atom_count();
    if let Some(&a) = anchors.iter().find(|&&a| a >= n) {
        return Err(PipelineError::Config(format!(
            "anchor {a} outside the synthon's {n} atoms"
        )));
    }
    let mut placed = synthon.clone();
    placed
        .set_coords(product_conformer(synthon, config.seed, &config.conformer()))
        .map_err(|e| PipelineError::Data(e.to_string()))?;
    let cloud: Cloud = molecule_cloud(&placed, anchors, n)?;
    let probs = models
        .size
        .predict_size(&SizeInput::new(&placed, anchors)?)?;
    let mut rngs = Vec::with_capacity(config.samples);
    let mut totals = Vec::with_capacity(config.samples);
    for g in 0..config.samples {
        let mut rng = sample_rng(config.seed, g);
        totals.push(n + size.unwrap_or_else(|| rng.weighted(&probs)));
        rngs.push(rng);
    }
    let mut keys = Vec::new();
    let mut flags = std::collections::HashMap::new();
    let mut start = 0;
    while start < totals.len() {
        let end = (start + config.chunk).min(totals.len());
        let requests: Vec<(&Cloud, usize)> =
            totals[start..end].iter().map(|&t| (&cloud, t)).collect();
        let mut steps = trajectory.as_ref().map(|_| Vec::new());
        let out = sample_many(
            &models.denoiser,
            &models.schedule,
            &requests,
            &mut rngs[start..end],
            steps.as_mut(),
        )?;
        if let (Some(all), Some(steps)) = (trajectory.as_deref_mut(), steps) {
            all.extend(steps.into_iter().map(|mut s| {
                s.chain += start;
                s
            }));
        }
        for s in &out {
            let Ok(c) = complete_reactant(synthon, s) else {
                continue;
            };
            if valence_check(&c.mol).is_err() {
                continue;
            }
            let Some(pieces) = canonical_pieces(&c.mol) else {
                continue;
            };
            let text = reactant_set_key(&pieces);
            *flags.entry(text.clone()).or_insert(true) &= c.connected;
            keys.push(text);
        }
        start = end;
    }
    let valid = keys.len();
    Ok(SampleRecord {
        synthon: write_smiles(synthon),
        anchors: anchors.to_vec(),
        samples: config.samples,
        valid,
        candidates: rank_by_frequency(keys)
            .into_iter()
            .map(|(reactants, frequency)| Candidate {
                connected: flags[&reactants],
                reactants,
                frequency,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    #[test]
    fn dual_report_of_benzene() {
        let r = DualGraphReport::new(&parse_smiles("c1ccccc1").unwrap());
        assert!(r.planar);
        assert_eq!(r.faces.len(), 2);
        assert_eq!(r.edges.len(), 6);
        assert!(r.edges.iter().all(|e| e.kind == "aromatic"));
        assert!(r.to_json().starts_with("{\"smiles\":\"c1ccccc1\""));
    }
}
