//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::time::Instant;

use common::graphs::connected_graphs;
use common::planar_oracle::{check_planar_graph, drawing_faces, random_plane_graph};
use gdiffretro::centernet::{pair_labels, CenterConfig, CenterError, CenterNet, GraphInput};
use gdiffretro::chem::{embed, parse_smiles, Atom, BondType, ConformerParams, Element, Molecule};
use gdiffretro::diffusion::{
    build_schedule, diffusion_loss, gaussian_kl, molecule_cloud, sample_many, DiffusionError,
};
use gdiffretro::egnn::{
    check_equivariance, random_cloud, Cloud, Egnn, EgnnConfig, EgnnError, SizeClassifier,
    SizeConfig, SizeInput,
};
use gdiffretro::faces::{dual_graph, embed_graph, Face};
use gdiffretro::numerics::{grad_check, Rng};
use gdiffretro::pipeline::{
    evaluate, evaluate_center, gen_toy_corpus, load_models, save_center, save_stage_two,
    train_center_stage, train_stage_two, Models, PipelineConfig, ToyRule,
};

type Outcome = Result<String, String>;

fn criterion_1_dual_graph_oracle() -> Outcome {
    let start = Instant::now();
    let all = connected_graphs(8);
    let connected: Vec<usize> = all.iter().map(Vec::len).collect();
    if connected != [1, 1, 2, 6, 21, 112, 853, 11117] {
        return Err(format!(
            "enumeration produced {connected:?} connected graphs"
        ));
    }
    let mut planar_counts = Vec::new();
    for level in &all {
        let mut planar = 0;
        for g in level {
            let edges = g.edges();
            if embed_graph(g.n, &edges).is_err() {
                continue;
            }
            planar += 1;
            check_planar_graph(g.n, &edges).map_err(|e| format!("graph {edges:?}: {e}"))?;
        }
        planar_counts.push(planar);
    }
    if planar_counts != [1, 1, 2, 6, 20, 99, 646, 5974] {
        return Err(format!("planarity test accepted {planar_counts:?} graphs"));
    }
    let mut rng = Rng::new(2024);
    for _ in 0..1000 {
        let (n, edges, pos) = random_plane_graph(&mut rng, 12);
        let emb = embed_graph(n, &edges).map_err(|_| format!("plane graph {edges:?} rejected"))?;
        let ours = emb.face_walks().len();
        let drawn = drawing_faces(n, &edges, &pos).len();
        if ours != drawn {
            return Err(format!(
                "graph {edges:?}: {ours} faces, drawing has {drawn}"
            ));
        }
        check_planar_graph(n, &edges).map_err(|e| format!("graph {edges:?}: {e}"))?;
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.1}s"));
    }
    Ok(format!(
        "{} exhaustive planar graphs + 1000 random, Euler and region oracle 100%, {secs:.1}s",
        planar_counts.iter().sum::<usize>()
    ))
}

fn criterion_2_bowtie_fixture() -> Outcome {
    // A at 0; triangle A-B-C of one bond type, triangle A-D-E of another
    let atoms = vec![Atom::new(Element::C); 5];
    let (t1, t2) = (BondType::Single, BondType::Double);
    let mol = Molecule::from_parts(
        atoms,
        &[
            (0, 1, t1),
            (1, 2, t1),
            (2, 0, t1),
            (0, 3, t2),
            (3, 4, t2),
            (4, 0, t2),
        ],
    )
    .map_err(|e| e.to_string())?;
    let dual = dual_graph(&mol);
    if dual.faces.len() != 3 {
        return Err(format!("{} dual nodes", dual.faces.len()));
    }
    let outer = dual
        .faces
        .iter()
        .position(Face::is_outer)
        .ok_or("no outer face")?;
    let tri = |ids: [usize; 3]| {
        dual.faces
            .iter()
            .position(|f| f.vertices() == ids.to_vec() && !f.is_outer())
            .ok_or(format!("no inner face over {ids:?}"))
    };
    let (abc, ade) = (tri([0, 1, 2])?, tri([0, 3, 4])?);
    let mut by_type = [[0usize; 2]; 2];
    for e in &dual.edges {
        if e.kind != mol.bond(e.bond).kind {
            return Err(format!("dual edge {e:?} type differs from crossed bond"));
        }
        let inner = if e.a == outer { e.b } else { e.a };
        let t = usize::from(e.kind == t2);
        by_type[t][usize::from(inner == ade)] += 1;
        if inner != abc && inner != ade {
            return Err(format!("dual edge {e:?} misses the outer face"));
        }
    }
    if by_type != [[3, 0], [0, 3]] {
        return Err(format!("dual edge types per face {by_type:?}"));
    }
    Ok("3 dual nodes; type-1 edges cross into ABC, type-2 into ADE".into())
}

fn criterion_3_schedule() -> Outcome {
    for t_max in [2, 10, 100, 1000] {
        let s = build_schedule(t_max).map_err(|e| e.to_string())?;
        if (s.alpha[1] - 0.99998).abs() > 1e-9 {
            return Err(format!("T={t_max}: alpha_1 = {}", s.alpha[1]));
        }
        if s.alpha[t_max] != 0.0 {
            return Err(format!("T={t_max}: alpha_T = {}", s.alpha[t_max]));
        }
        for t in 0..=t_max {
            let err = (s.alpha[t].powi(2) + s.sigma[t].powi(2) - 1.0).abs();
            if err > 1e-12 {
                return Err(format!(
                    "T={t_max}, t={t}: alpha^2 + sigma^2 off by {err:e}"
                ));
            }
        }
    }
    Ok("T in {2, 10, 100, 1000}".into())
}

fn criterion_4_kl_identity() -> Outcome {
    let mut rng = Rng::new(44);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t_max = 2 + rng.below(999);
        let s = build_schedule(t_max).map_err(|e| e.to_string())?;
        let t = 2 + rng.below(t_max - 1);
        let d = 1 + rng.below(12);
        let mut draw = || (0..d).map(|_| rng.normal()).collect::<Vec<f64>>();
        let (z_t, z_0, z_hat) = (draw(), draw(), draw());
        let (mq, var) = s.posterior(&z_t, &z_0, t).map_err(|e| e.to_string())?;
        let (mp, _) = s.posterior(&z_t, &z_hat, t).map_err(|e| e.to_string())?;
        let kl = gaussian_kl(&mq, &vec![var; d], &mp, &vec![var; d]);
        let closed = mq
            .iter()
            .zip(&mp)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / (2.0 * var);
        let err2: f64 = z_hat.iter().zip(&z_0).map(|(a, b)| (a - b).powi(2)).sum();
        let weighted = s.kl_weight(t).map_err(|e| e.to_string())? * err2;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        let r = rel(kl, closed).max(rel(closed, weighted));
        if r > 1e-8 {
            return Err(format!(
                "T={t_max}, t={t}: KL {kl}, closed {closed}, weighted {weighted}"
            ));
        }
        worst = worst.max(r);
    }
    Ok(format!("1000 tuples, worst relative error {worst:.1e}"))
}

fn criterion_5_equivariance() -> Outcome {
    let mut rng = Rng::new(55);
    let net = Egnn::new(
        EgnnConfig {
            layers: 3,
            hidden: 16,
        },
        &mut rng,
    );
    let report = check_equivariance(&net, 100, 1e-6, &mut rng).map_err(|e| e.to_string())?;
    if !report.passed {
        return Err(format!("{report:?}"));
    }
    // full reverse trajectories around a real synthon
    let mut syn = parse_smiles("CC(=O)c1ccccc1").map_err(|e| e.to_string())?;
    syn.set_coords(embed(&syn, &mut Rng::new(5), &ConformerParams::default()))
        .map_err(|e| e.to_string())?;
    let cloud = molecule_cloud(&syn, &[1], syn.atom_count()).map_err(|e| e.to_string())?;
    let schedule = build_schedule(100).map_err(|e| e.to_string())?;
    let requests: Vec<(&Cloud, usize)> = (1..=6).map(|k| (&cloud, cloud.len() + k)).collect();
    let mut rngs: Vec<Rng> = (0..requests.len() as u64)
        .map(|k| Rng::with_stream(9, k))
        .collect();
    let mut traj = Vec::new();
    let out = sample_many(&net, &schedule, &requests, &mut rngs, Some(&mut traj))
        .map_err(|e| e.to_string())?;
    let m = cloud.len();
    let exact = |x: &[[f64; 3]]| {
        (0..m).all(|i| (0..3).all(|c| x[i][c].to_bits() == cloud.x[i][c].to_bits()))
    };
    if traj.len() != 6 * 101 {
        return Err(format!("{} trajectory steps", traj.len()));
    }
    if let Some(step) = traj.iter().find(|s| !exact(&s.x)) {
        return Err(format!(
            "synthon moved in chain {} at t={}",
            step.chain, step.t
        ));
    }
    if !out.iter().all(|o| exact(&o.x)) {
        return Err("synthon moved in a final sample".into());
    }
    Ok(format!(
        "100 transforms ({} reflections), max errors {:.1e}/{:.1e}; synthon bit-exact over {} steps",
        report.reflections,
        report.max_coord_error,
        report.max_feature_error,
        traj.len()
    ))
}

fn criterion_6_gradient_checks() -> Outcome {
    let tol = 1e-4;
    let mut worst = [0.0f64; 3];
    // reaction-center loss, dual branch on, over rings and chains
    for (k, smiles) in ["CC(=O)OCC", "O=C(Nc1ccccc1)C1CC1", "CS(=O)(=O)N1CCOCC1"]
        .iter()
        .enumerate()
    {
        let mol = parse_smiles(smiles).map_err(|e| e.to_string())?;
        let g = GraphInput::new(&mol).map_err(|e| e.to_string())?;
        let (i, j) = g.bonds[k % g.bonds.len()];
        let labels = pair_labels(&g, |a, b| u8::from((a, b) == (i, j) || (a, b) == (j, i)));
        let config = CenterConfig {
            layers: 2,
            hidden: 4,
            mlp_hidden: 4,
            lambda: 5.0,
            dual: true,
        };
        let net = CenterNet::new(config, &mut Rng::new(60 + k as u64));
        let r = grad_check(&net.params, 1e-5, tol, |tape, b| {
            net.loss(tape, b, &g, &labels).map_err(|e| match e {
                CenterError::Numerics(n) => n,
                other => panic!("{other}"),
            })
        })
        .map_err(|e| e.to_string())?;
        if !r.passed {
            return Err(format!("center_loss on {smiles}: {r:?}"));
        }
        worst[0] = worst[0].max(r.max_rel_error);
    }
    // noise-prediction loss on random clouds, some with fixed atoms
    for seed in 0..3u64 {
        let mut rng = Rng::new(70 + seed);
        let s = build_schedule(10 + 10 * seed as usize).map_err(|e| e.to_string())?;
        let net = Egnn::new(
            EgnnConfig {
                layers: 2,
                hidden: 5,
            },
            &mut rng,
        );
        let clouds = [
            random_cloud(&mut rng, 3 + seed as usize),
            random_cloud(&mut rng, 2),
        ];
        let r = grad_check(&net.params, 1e-4, tol, |tape, b| {
            let refs: Vec<&Cloud> = clouds.iter().collect();
            diffusion_loss(tape, b, &net, &refs, &s, &mut Rng::new(seed)).map_err(|e| match e {
                DiffusionError::Numerics(n) => n,
                other => panic!("{other}"),
            })
        })
        .map_err(|e| e.to_string())?;
        if !r.passed {
            return Err(format!("diffusion_loss seed {seed}: {r:?}"));
        }
        worst[1] = worst[1].max(r.max_rel_error);
    }
    // size cross-entropy
    for (k, (smiles, anchor, size)) in [("CC(=O)", 1, 1), ("c1ccccc1O", 6, 0), ("CCS(=O)=O", 2, 1)]
        .into_iter()
        .enumerate()
    {
        let mut mol = parse_smiles(smiles).map_err(|e| e.to_string())?;
        mol.set_coords(embed(
            &mol,
            &mut Rng::new(k as u64),
            &ConformerParams::default(),
        ))
        .map_err(|e| e.to_string())?;
        let g = SizeInput::new(&mol, &[anchor]).map_err(|e| e.to_string())?;
        let net = SizeClassifier::new(
            SizeConfig {
                layers: 2,
                hidden: 5,
                classes: 4,
            },
            &mut Rng::new(80 + k as u64),
        );
        let r = grad_check(&net.params, 1e-5, tol, |tape, b| {
            net.loss(tape, b, &g, size).map_err(|e| match e {
                EgnnError::Numerics(n) => n,
                other => panic!("{other}"),
            })
        })
        .map_err(|e| e.to_string())?;
        if !r.passed {
            return Err(format!("size cross-entropy on {smiles}: {r:?}"));
        }
        worst[2] = worst[2].max(r.max_rel_error);
    }
    Ok(format!(
        "max relative error center {:.1e}, diffusion {:.1e}, size {:.1e}",
        worst[0], worst[1], worst[2]
    ))
}

/// The 200-reaction corpus split 160 / 40.
fn toy_split() -> Result<
    (
        Vec<gdiffretro::chem::Reaction>,
        Vec<gdiffretro::chem::Reaction>,
    ),
    String,
> {
    let mut corpus =
        gen_toy_corpus(&ToyRule::ALL, 200, &mut Rng::new(7)).map_err(|e| e.to_string())?;
    let test = corpus.split_off(160);
    Ok((corpus, test))
}

fn criterion_7_toy_end_to_end() -> Outcome {
    let (train, test) = toy_split()?;
    let config = PipelineConfig::default();
    let start = Instant::now();
    let (center, _) = train_center_stage(&train, &config).map_err(|e| e.to_string())?;
    let center_secs = start.elapsed().as_secs_f64();
    let held_out = evaluate_center(&center, &test).map_err(|e| e.to_string())?;
    if center_secs > 300.0 {
        return Err(format!("stage-1 training took {center_secs:.0}s"));
    }
    if held_out < 0.95 {
        return Err(format!("stage-1 held-out top-1 {held_out:.3}"));
    }

    let overfit = &train[..10];
    let mut c2 = config.clone();
    c2.size_train.epochs = 200;
    c2.diffusion_train.steps = 6000;
    let start = Instant::now();
    let two = train_stage_two(overfit, &c2).map_err(|e| e.to_string())?;
    let models = Models {
        center,
        completer: two.completer(c2.t_max).map_err(|e| e.to_string())?,
    };
    let (row, _) = evaluate(overfit, &models, &c2, "dual").map_err(|e| e.to_string())?;
    let stage2_secs = start.elapsed().as_secs_f64();
    let top1 = row.accuracy(1).unwrap_or(0.0);
    if stage2_secs > 1800.0 {
        return Err(format!("overfit run took {stage2_secs:.0}s"));
    }
    if top1 < 0.8 {
        return Err(format!("overfit top-1 {top1:.2} ({:?})", row.topk));
    }
    Ok(format!(
        "stage-1 held-out top-1 {:.1}% in {center_secs:.0}s; overfit 10 reactions top-1 {:.0}% (top-k {:?}) with {} samples in {stage2_secs:.0}s",
        100.0 * held_out,
        100.0 * top1,
        row.topk,
        c2.samples
    ))
}

fn criterion_8_ablation_direction() -> Outcome {
    let (train, test) = toy_split()?;
    let mut acc = [0.0; 2];
    for (k, dual) in [true, false].into_iter().enumerate() {
        let mut config = PipelineConfig::default();
        config.center.dual = dual;
        let (net, _) = train_center_stage(&train, &config).map_err(|e| e.to_string())?;
        acc[k] = evaluate_center(&net, &test).map_err(|e| e.to_string())?;
    }
    let detail = format!(
        "held-out top-1 with dual {:.1}%, without {:.1}%",
        100.0 * acc[0],
        100.0 * acc[1]
    );
    if acc[0] >= acc[1] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Every output of one small pipeline run, as bytes.
fn pipeline_run(dir: &std::path::Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let s = |e: gdiffretro::pipeline::PipelineError| e.to_string();
    let corpus = gen_toy_corpus(&ToyRule::ALL, 12, &mut Rng::new(3)).map_err(s)?;
    let mut config = PipelineConfig::default();
    config.seed = 11;
    config.center_train.epochs = 3;
    config.size_train.epochs = 3;
    config.diffusion_train.steps = 40;
    config.t_max = 20;
    config.samples = 24;
    config.chunk = 10;
    let (center, _) = train_center_stage(&corpus, &config).map_err(s)?;
    save_center(dir, &center).map_err(s)?;
    let two = train_stage_two(&corpus, &config).map_err(s)?;
    save_stage_two(dir, &two.size, &two.denoiser, config.t_max).map_err(s)?;
    let models = load_models(dir, true).map_err(s)?;
    let (_, records) = evaluate(&corpus[..4], &models, &config, "dual").map_err(s)?;
    let mut out: Vec<(String, Vec<u8>)> = records
        .iter()
        .map(|r| ("record".to_string(), r.to_json().into_bytes()))
        .collect();
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    files.sort();
    for f in files {
        out.push((
            f.file_name()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned(),
            std::fs::read(&f).map_err(|e| e.to_string())?,
        ));
    }
    Ok(out)
}

fn criterion_9_determinism() -> Outcome {
    let (a, b) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    let first = pipeline_run(a.path())?;
    let second = pipeline_run(b.path())?;
    if first.len() != second.len() {
        return Err(format!("{} outputs vs {}", first.len(), second.len()));
    }
    for ((na, ba), (nb, bb)) in first.iter().zip(&second) {
        if na != nb || ba != bb {
            return Err(format!("{na} differs between runs"));
        }
    }
    let files = first.iter().filter(|(n, _)| n != "record").count();
    Ok(format!(
        "{} records and {files} checkpoints byte-identical",
        first.len() - files
    ))
}

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("1 dual-graph oracle", criterion_1_dual_graph_oracle),
        ("2 two-triangle dual fixture", criterion_2_bowtie_fixture),
        ("3 schedule identities", criterion_3_schedule),
        ("4 posterior/loss identity", criterion_4_kl_identity),
        (
            "5 equivariance and synthon fixation",
            criterion_5_equivariance,
        ),
        ("6 gradient checks", criterion_6_gradient_checks),
        ("7 toy end-to-end", criterion_7_toy_end_to_end),
        ("8 ablation direction", criterion_8_ablation_direction),
        ("9 determinism", criterion_9_determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({detail}) [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {name}: FAIL ({why}) [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
