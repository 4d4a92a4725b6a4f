//! Training of both stages and the model directory layout.

use std::path::Path;

use super::{PipelineConfig, PipelineError, Result};
use crate::centernet::{center_accuracy, train_center, CenterExample, CenterNet, TrainReport};
use crate::chem::{
    embed, format_record, parse_record, parse_smiles, write_smiles, ConformerParams, Molecule,
    Reaction,
};
use crate::diffusion::{build_schedule, completion_examples, train_diffusion, NoiseSchedule};
use crate::egnn::{Cloud, Egnn, SizeClassifier, SizeExample, SizeInput};
use crate::numerics::{Checkpoint, Rng};

pub const CENTER_FILE: &str = "center.json";
pub const CENTER_NODUAL_FILE: &str = "center-nodual.json";
pub const SIZE_FILE: &str = "size.json";
pub const DENOISER_FILE: &str = "denoiser.json";

pub fn center_file(dual: bool) -> &'static str {
    if dual {
        CENTER_FILE
    } else {
        CENTER_NODUAL_FILE
    }
}

/// FNV-1a; stable across platforms and toolchains.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Rng stream owned by one molecule: the same product always gets the same draws.
pub fn molecule_rng(seed: u64, mol: &Molecule) -> Rng {
    Rng::with_stream(seed, fnv1a(&write_smiles(mol)))
}

/// The molecule re-read from its canonical string, so atom order depends
/// only on the graph.
pub fn canonical_molecule(mol: &Molecule) -> Result<Molecule> {
    parse_smiles(&write_smiles(mol)).map_err(|e| PipelineError::Data(e.to_string()))
}

/// The reaction with every molecule in canonical atom order.
pub fn canonical_reaction(rxn: &Reaction) -> Result<Reaction> {
    let mut r =
        parse_record(&format_record(rxn)).map_err(|e| PipelineError::Data(e.to_string()))?;
    r.product.mol.clear_coords();
    for m in &mut r.reactants {
        m.mol.clear_coords();
    }
    Ok(r)
}

/// Conformer of a canonical product, seeded by its string.
pub fn product_conformer(mol: &Molecule, seed: u64, params: &ConformerParams) -> Vec<[f64; 3]> {
    embed(mol, &mut molecule_rng(seed, mol), params)
}

pub fn center_examples(reactions: &[Reaction]) -> Result<Vec<CenterExample>> {
    reactions
        .iter()
        .map(|r| Ok(CenterExample::from_reaction(&canonical_reaction(r)?)?))
        .collect()
}

pub fn train_center_stage(
    reactions: &[Reaction],
    config: &PipelineConfig,
) -> Result<(CenterNet, TrainReport)> {
    let examples = center_examples(reactions)?;
    Ok(train_center(
        &examples,
        config.center.clone(),
        &config.center_train(),
    )?)
}

pub fn evaluate_center(net: &CenterNet, reactions: &[Reaction]) -> Result<f64> {
    Ok(center_accuracy(net, &center_examples(reactions)?)?)
}

/// Size labels for every synthon and denoiser targets for those that need atoms.
pub fn stage_two_examples(
    reactions: &[Reaction],
    config: &PipelineConfig,
) -> Result<(Vec<SizeExample>, Vec<Cloud>)> {
    let params = config.conformer();
    let mut sizes = Vec::new();
    let mut clouds = Vec::new();
    for rxn in reactions {
        let rxn = canonical_reaction(rxn)?;
        let xyz = product_conformer(&rxn.product.mol, config.seed, &params);
        let mut rng = molecule_rng(config.seed, &rxn.product.mol).fork(1);
        for ex in completion_examples(&rxn, &xyz, &mut rng, &params)? {
            if ex.extra >= config.size.classes {
                return Err(PipelineError::Data(format!(
                    "synthon of {} needs {} atoms, more than size.classes allows",
                    write_smiles(&rxn.product.mol),
                    ex.extra
                )));
            }
            sizes.push(SizeExample {
                input: SizeInput::new(&ex.synthon, &ex.anchors)?,
                size: ex.extra,
            });
            if ex.extra > 0 {
                clouds.push(ex.target_cloud()?);
            }
        }
    }
    Ok((sizes, clouds))
}

pub struct StageTwo {
    pub size: SizeClassifier,
    pub denoiser: Egnn,
    pub size_report: TrainReport,
    pub denoiser_report: TrainReport,
}

impl StageTwo {
    pub fn completer(self, t_max: usize) -> Result<Completer> {
        Ok(Completer {
            size: self.size,
            denoiser: self.denoiser,
            schedule: build_schedule(t_max)?,
        })
    }
}

pub fn train_stage_two(reactions: &[Reaction], config: &PipelineConfig) -> Result<StageTwo> {
    let (sizes, clouds) = stage_two_examples(reactions, config)?;
    let (size, size_report) =
        crate::egnn::train_size(&sizes, config.size.clone(), &config.size_train())?;
    let schedule = build_schedule(config.t_max)?;
    let (denoiser, denoiser_report) = train_diffusion(
        &clouds,
        config.egnn.clone(),
        &schedule,
        &config.diffusion_train(),
    )?;
    Ok(StageTwo {
        size,
        denoiser,
        size_report,
        denoiser_report,
    })
}

/// The second stage: atom counts and the denoiser that places them.
pub struct Completer {
    pub size: SizeClassifier,
    pub denoiser: Egnn,
    pub schedule: NoiseSchedule,
}

/// Everything inference needs.
pub struct Models {
    pub center: CenterNet,
    pub completer: Completer,
}

fn save(dir: &Path, file: &str, ck: &Checkpoint) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| PipelineError::Io(format!("{}: {e}", dir.display())))?;
    Ok(ck.save(dir.join(file))?)
}

fn load(dir: &Path, file: &str) -> Result<Checkpoint> {
    let path = dir.join(file);
    Checkpoint::load(&path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
}

pub fn save_center(dir: &Path, net: &CenterNet) -> Result<()> {
    save(dir, center_file(net.config.dual), &net.to_checkpoint())
}

pub fn save_stage_two(
    dir: &Path,
    size: &SizeClassifier,
    denoiser: &Egnn,
    t_max: usize,
) -> Result<()> {
    save(dir, SIZE_FILE, &size.to_checkpoint())?;
    save(
        dir,
        DENOISER_FILE,
        &denoiser.to_checkpoint().with_meta("T", t_max),
    )
}

pub fn load_center(dir: &Path, dual: bool) -> Result<CenterNet> {
    Ok(CenterNet::from_checkpoint(&load(dir, center_file(dual))?)?)
}

/// The schedule length comes from the denoiser file.
pub fn load_completer(dir: &Path) -> Result<Completer> {
    let size = SizeClassifier::from_checkpoint(&load(dir, SIZE_FILE)?)?;
    let ck = load(dir, DENOISER_FILE)?;
    let schedule = build_schedule(ck.meta_usize("T")?)?;
    let denoiser = Egnn::from_checkpoint(&ck)?;
    Ok(Completer {
        size,
        denoiser,
        schedule,
    })
}

pub fn load_models(dir: &Path, dual: bool) -> Result<Models> {
    Ok(Models {
        center: load_center(dir, dual)?,
        completer: load_completer(dir)?,
    })
}
