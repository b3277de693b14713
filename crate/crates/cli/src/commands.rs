use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use scenegate::config::RunConfig;
use scenegate::data::{generate_dataset, load_dataset, save_dataset};
use scenegate::model::{evaluate, gradient_check_suite, MetricsRow, Model};
use scenegate::run::{generated_splits, run_training, Split};
use scenegate::scene_graph::{build_scene_graph, oracle::brute_force_graph, SceneObject, SceneOcr};

use crate::{AttnDump, Eval, GenData, GradCheck, SceneGraphArgs, Train};

pub const GRAD_TOLERANCE: f64 = 1e-4;

/// Failure that did not come from the library, tagged for the one-line error report.
#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn fail(category: &'static str, message: String) -> anyhow::Error {
    CliError { category, message }.into()
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn gen_data(a: GenData) -> Result<()> {
    let scenes = generate_dataset(a.n, a.seed)?;
    save_dataset(&a.out, &scenes)?;
    log::info!("wrote {} scenes to {}", scenes.len(), a.out.display());
    Ok(())
}

/// Objects and OCR tokens of one scene; any other fields are ignored.
#[derive(Deserialize)]
struct SceneBoxes {
    objects: Vec<SceneObject>,
    #[serde(default)]
    ocr: Vec<SceneOcr>,
}

fn read_scene_boxes(path: &Path) -> Result<Vec<SceneBoxes>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(one) = serde_json::from_str::<SceneBoxes>(&text) {
        return Ok(vec![one]);
    }
    let mut scenes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let scene = serde_json::from_str(line).map_err(|e| scenegate::Error::Parse {
            path: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?;
        scenes.push(scene);
    }
    Ok(scenes)
}

pub fn scene_graph(a: SceneGraphArgs) -> Result<()> {
    let scenes: Vec<SceneBoxes> = match (&a.input, a.n) {
        (Some(path), _) => read_scene_boxes(path)?,
        (None, Some(n)) => generate_dataset(n, a.seed)?
            .into_iter()
            .map(|s| SceneBoxes {
                objects: s.objects,
                ocr: s.ocr,
            })
            .collect(),
        (None, None) => return Err(fail("usage", "one of --in or --n is required".into())),
    };
    let mut lines = String::new();
    let mut mismatches = 0usize;
    for (i, s) in scenes.iter().enumerate() {
        let graph = build_scene_graph(&s.objects, &s.ocr)?;
        if a.verify_bruteforce {
            let (edges, owners) = brute_force_graph(&s.objects, &s.ocr);
            let built: Vec<(usize, usize)> = graph.attributes.iter().map(|x| (x.id, x.owner)).collect();
            if graph.edge_set() != edges || built != owners {
                mismatches += 1;
                log::warn!("scene {i}: builder and brute-force graphs differ");
            }
        }
        lines.push_str(&graph.to_json()?);
        lines.push('\n');
    }
    if a.out.is_some() || !a.verify_bruteforce {
        write_output(a.out.as_deref(), &lines)?;
    }
    if a.verify_bruteforce {
        if mismatches > 0 {
            return Err(fail(
                "verification",
                format!("{mismatches} of {} scenes differ from the brute-force graph", scenes.len()),
            ));
        }
        println!("verified {} scenes: 0 mismatches", scenes.len());
    }
    Ok(())
}

/// Preset, then config file, then command-line flags.
fn resolve_config(preset: Option<&str>, config: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let file = config
        .map(|p| fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let cfg = RunConfig::resolve(preset, file.as_deref())?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

pub fn train(a: Train) -> Result<()> {
    let cfg = resolve_config(a.preset.as_deref(), a.config.as_deref(), a.seed)?;
    log::info!("resolved config: {}", serde_json::to_string(&cfg)?);
    let (train, val) = match &a.data {
        Some(path) => {
            let train = load_dataset(path).with_context(|| format!("loading {}", path.display()))?;
            let val = a.val.as_deref().map(load_dataset).transpose()?.unwrap_or_default();
            (train, val)
        }
        None => generated_splits(&cfg.data)?,
    };
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    let csv_path = a.out.join("metrics.csv");
    let mut csv = fs::File::create(&csv_path)?;
    writeln!(csv, "{}", MetricsRow::CSV_HEADER)?;

    let start = Instant::now();
    let out_dir = a.out.clone();
    let (trainer, _) = run_training(&cfg, &train, &val, |row, model| {
        writeln!(csv, "{}", row.to_csv())?;
        csv.flush()?;
        model.save(&out_dir.join(format!("checkpoint-{:06}.json", row.step)))
    })?;
    let model = trainer.model;
    model.save(&out_dir.join("model.json"))?;
    log::info!(
        "trained {} steps in {:.1}s; wrote {} and {}",
        cfg.train.steps,
        start.elapsed().as_secs_f64(),
        out_dir.join("model.json").display(),
        csv_path.display()
    );
    Ok(())
}

pub fn eval(a: Eval) -> Result<()> {
    let model = Model::load(&a.checkpoint).with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let scenes = load_dataset(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let split = Split::new(&scenes, model.vocab(), model.config())?;
    let (report, _) = evaluate(&model, &split.inputs, &split.golds)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    write_output(a.report.as_deref(), &text)
}

#[derive(Serialize)]
struct DumpFile {
    scene_id: u64,
    prediction: String,
    heads: Vec<scenegate::model::AttentionDump>,
}

pub fn attn_dump(a: AttnDump) -> Result<()> {
    let model = Model::load(&a.checkpoint).with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let scenes = load_dataset(&a.input).with_context(|| format!("loading {}", a.input.display()))?;
    let scene = scenes.get(a.n).ok_or_else(|| {
        fail(
            "usage",
            format!("--n {} but {} holds {} scenes", a.n, a.input.display(), scenes.len()),
        )
    })?;
    let split = Split::new(std::slice::from_ref(scene), model.vocab(), model.config())?;
    let input = &split.inputs[0];
    let decoded = model.decode_answer(input)?;
    let steps = decoded.units.len().min(model.config().decoding_steps - 1);
    let heads: Vec<_> = model
        .attention_dump(input, &decoded.units[..steps])?
        .into_iter()
        .filter(|d| a.layer.as_deref().is_none_or(|l| d.layer == l))
        .filter(|d| a.head.is_none_or(|h| d.head == h))
        .collect();
    if heads.is_empty() {
        return Err(fail("usage", "no attention head matches --layer/--head".into()));
    }
    let file = DumpFile {
        scene_id: scene.scene_id,
        prediction: decoded.text,
        heads,
    };
    write_output(a.out.as_deref(), &(serde_json::to_string(&file)? + "\n"))
}

pub fn grad_check(a: GradCheck) -> Result<()> {
    let cfg = resolve_config(Some(&a.preset), a.config.as_deref(), None)?;
    let start = Instant::now();
    let entries = gradient_check_suite(&cfg.model, a.seed, a.entries)?;
    let mut worst = ("", 0.0f64);
    for e in &entries {
        println!("{}\t{:.3e}", e.name, e.max_rel_error);
        if e.max_rel_error >= worst.1 {
            worst = (&e.name, e.max_rel_error);
        }
    }
    println!(
        "max relative error {:.3e} ({}) over {} checks in {:.1}s",
        worst.1,
        worst.0,
        entries.len(),
        start.elapsed().as_secs_f64()
    );
    if let Some(path) = &a.out {
        fs::write(path, serde_json::to_string_pretty(&entries)?)?;
    }
    if entries.iter().any(|e| !(e.max_rel_error < GRAD_TOLERANCE)) {
        return Err(fail(
            "grad_check",
            format!("{} exceeds tolerance {GRAD_TOLERANCE:e} with {:.3e}", worst.0, worst.1),
        ));
    }
    Ok(())
}
