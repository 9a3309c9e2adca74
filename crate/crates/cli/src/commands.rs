use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use seqtrans::data::{fit_schema as fit_schema_files, generate_synthetic, SyntheticSpec};
use seqtrans::experiment::{run_variant, MetricsRow, VariantRun};
use seqtrans::io::{write_csv, write_json};
use seqtrans::metrics::{intra_class_distance, ClassDistances};
use seqtrans::plot::ScatterPlot;
use seqtrans::search::random_search;
use seqtrans::train::TrainStatus;
use seqtrans::{Checkpoint, Error, Model64, ModelVariant, Result, SequenceBatch64};

use crate::config::{load_data, make_splits, DataSource, ExperimentConfig};
use crate::manifest::write_manifest;
use crate::RunArgs;

fn out_dir(args: &RunArgs, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set output_dir".into()))?;
    create_dir(&dir)?;
    Ok(dir)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    Ok(cfg)
}

fn inputs(args: &RunArgs, cfg: &ExperimentConfig) -> Vec<PathBuf> {
    let mut v = vec![args.config.clone()];
    v.extend(cfg.input_files());
    v
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateConfig {
    version: u32,
    #[serde(default)]
    synthetic: SyntheticSpec,
}

#[derive(Serialize)]
struct NuisanceRow<'a> {
    example_id: &'a str,
    label: u8,
    time_scale: f64,
    phase_shift: f64,
    amplitude: f64,
    offset: f64,
}

pub fn generate(config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            let cfg: GenerateConfig =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            if cfg.version != crate::config::CONFIG_VERSION {
                return Err(Error::Config(format!("spec version {} is not supported", cfg.version)));
            }
            cfg
        }
        None => GenerateConfig {
            version: crate::config::CONFIG_VERSION,
            synthetic: SyntheticSpec::default(),
        },
    };
    if let Some(s) = seed {
        cfg.synthetic.seed = s;
    }
    let ds = generate_synthetic(&cfg.synthetic)?;
    create_dir(out)?;
    ds.save(out.join("dataset.json"))?;
    let rows: Vec<NuisanceRow> = ds
        .batch
        .ids()
        .iter()
        .zip(ds.batch.labels())
        .zip(&ds.nuisance)
        .map(|((id, &label), nu)| NuisanceRow {
            example_id: id,
            label,
            time_scale: nu.time_scale,
            phase_shift: nu.phase_shift,
            amplitude: nu.amplitude,
            offset: nu.offset,
        })
        .collect();
    write_csv(out.join("nuisance.csv"), &rows)?;
    let inputs: Vec<PathBuf> = config.map(|p| vec![p.to_path_buf()]).unwrap_or_default();
    write_manifest(out, "generate", &cfg, &inputs, &["dataset.json", "nuisance.csv"])?;
    println!(
        "wrote {} examples ({} channels x {} steps) to {}",
        ds.batch.len(),
        ds.batch.channels(),
        ds.batch.steps(),
        out.join("dataset.json").display()
    );
    Ok(())
}

fn print_notes(notes: &[String]) {
    for n in notes {
        eprintln!("note: {n}");
    }
}

fn save_run(run: &mut VariantRun<f64>, out: &Path, suffix: &str) -> Result<()> {
    if let Some(best) = &run.outcome.best {
        let name = format!("checkpoint{suffix}.json");
        Checkpoint::from_model(best).save(out.join(&name))?;
        run.outcome.report.checkpoint = Some(name);
    }
    write_csv(out.join(format!("train_report{suffix}.csv")), &run.outcome.report.epochs)?;
    write_json(out.join(format!("train_summary{suffix}.json")), &run.outcome.report)
}

fn divergence(variant: ModelVariant, status: &TrainStatus) -> Option<String> {
    match status {
        TrainStatus::Completed => None,
        TrainStatus::Diverged { epoch, step, reason } => {
            Some(format!("{variant} diverged at epoch {epoch}, step {step}: {reason}"))
        }
    }
}

pub fn train(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let out = out_dir(args, &cfg)?;
    let data = load_data(&cfg.data)?;
    print_notes(&data.notes);
    let splits = make_splits(&cfg, &data.batch)?;
    let mut run = run_variant(cfg.variant, &cfg.model, &cfg.training, &splits, cfg.seed, &cfg.bootstrap)?;
    save_run(&mut run, &out, "")?;
    write_csv(out.join("metrics.csv"), &run.rows())?;
    write_manifest(
        &out,
        "train",
        &cfg,
        &inputs(args, &cfg),
        &["checkpoint.json", "train_report.csv", "train_summary.json", "metrics.csv"],
    )?;
    for row in run.rows() {
        println!(
            "{} {:<10} auroc {:.4} [{:.4}, {:.4}]  aupr {:.4} [{:.4}, {:.4}]  n={}",
            row.variant, row.split, row.auroc, row.auroc_lo, row.auroc_hi, row.aupr, row.aupr_lo, row.aupr_hi, row.n
        );
    }
    match divergence(cfg.variant, &run.outcome.report.status) {
        Some(msg) => Err(Error::Numerical(msg)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct StatusRow {
    variant: String,
    status: String,
    best_epoch: Option<usize>,
    best_val_auroc: Option<f64>,
    max_abs_transform_param: Option<f64>,
    detail: String,
}

pub fn ablation(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let out = out_dir(args, &cfg)?;
    let data = load_data(&cfg.data)?;
    print_notes(&data.notes);
    let splits = make_splits(&cfg, &data.batch)?;
    let runs: Vec<VariantRun<f64>> = ModelVariant::ALL
        .par_iter()
        .map(|&v| run_variant(v, &cfg.model, &cfg.training, &splits, cfg.seed, &cfg.bootstrap))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut status = Vec::new();
    for (v, mut run) in ModelVariant::ALL.into_iter().zip(runs) {
        save_run(&mut run, &out, &format!("_{v}"))?;
        let r = &run.outcome.report;
        rows.push(match run.split_metrics("test") {
            Some(m) => MetricsRow::new(v, "test", m, cfg.seed),
            None => MetricsRow {
                variant: v.to_string(),
                split: "test".into(),
                auroc: f64::NAN,
                auroc_lo: f64::NAN,
                auroc_hi: f64::NAN,
                aupr: f64::NAN,
                aupr_lo: f64::NAN,
                aupr_hi: f64::NAN,
                n: splits.test.len(),
                prevalence: splits.test.prevalence(),
                seed: cfg.seed,
            },
        });
        status.push(StatusRow {
            variant: v.to_string(),
            status: r.status.label().into(),
            best_epoch: r.best_epoch,
            best_val_auroc: r.best_val_auroc,
            max_abs_transform_param: r.max_abs_transform_param,
            detail: divergence(v, &r.status).unwrap_or_default(),
        });
    }
    write_csv(out.join("ablation.csv"), &rows)?;
    write_csv(out.join("ablation_status.csv"), &status)?;
    write_manifest(
        &out,
        "ablation",
        &cfg,
        &inputs(args, &cfg),
        &["ablation.csv", "ablation_status.csv"],
    )?;
    for (row, st) in rows.iter().zip(&status) {
        println!(
            "{:<15} test auroc {:.4} [{:.4}, {:.4}]  aupr {:.4}  {}",
            row.variant, row.auroc, row.auroc_lo, row.auroc_hi, row.aupr, st.status
        );
    }
    Ok(())
}

pub fn search(args: &RunArgs, trials: Option<usize>) -> Result<()> {
    let mut cfg = load_config(args)?;
    if let Some(t) = trials {
        cfg.search.trials = t;
    }
    cfg.validate()?;
    let out = out_dir(args, &cfg)?;
    let data = load_data(&cfg.data)?;
    print_notes(&data.notes);
    let splits = make_splits(&cfg, &data.batch)?;
    let result = random_search(
        &cfg.search,
        cfg.variant,
        &cfg.model,
        &cfg.training,
        &splits.train,
        &splits.validation,
        cfg.seed,
    )?;
    result.write_csv(out.join("trials.csv"))?;
    let best = result
        .best()
        .ok_or_else(|| Error::Numerical("no trial finished an epoch".into()))?;
    let (model, training) = best.config().apply(&cfg.model, &cfg.training, cfg.search.max_epochs);
    let best_cfg = ExperimentConfig {
        model,
        training,
        seed: best.seed,
        output_dir: None,
        ..cfg.clone()
    };
    std::fs::write(out.join("best_config.toml"), best_cfg.to_toml()?)
        .map_err(|e| Error::io(out.join("best_config.toml"), e))?;
    write_manifest(&out, "search", &cfg, &inputs(args, &cfg), &["trials.csv", "best_config.toml"])?;
    println!(
        "best trial {} (val auroc {:.4}): batch {} dropout {} depth {} hidden {}",
        best.trial_id,
        best.best_val_auroc.unwrap_or(f64::NAN),
        best.batch_size,
        best.dropout,
        best.depth,
        best.hidden_width
    );
    Ok(())
}

fn load_model_and_split(args: &RunArgs, checkpoint: &Path, split: &str) -> Result<(ExperimentConfig, Model64, SequenceBatch64, SequenceBatch64)> {
    let cfg = load_config(args)?;
    let model: Model64 = Checkpoint::load(checkpoint)?.to_model()?;
    if model.transformer().is_none() {
        return Err(Error::Config(format!(
            "checkpoint {} is a {} model: no transformer to analyse",
            checkpoint.display(),
            model.variant()
        )));
    }
    let data = load_data(&cfg.data)?;
    print_notes(&data.notes);
    let (c, t) = model.input_shape();
    if (data.batch.channels(), data.batch.steps()) != (c, t) {
        return Err(Error::Data(format!(
            "checkpoint expects {c} channels x {t} steps, data has {} x {}",
            data.batch.channels(),
            data.batch.steps()
        )));
    }
    let splits = make_splits(&cfg, &data.batch)?;
    let part = splits
        .get(split)
        .ok_or_else(|| Error::Config(format!("unknown split {split:?} (train, validation, test)")))?
        .clone();
    Ok((cfg, model, data.batch, part))
}

#[derive(Serialize)]
struct ParamRow<'a> {
    example_id: &'a str,
    theta1: f64,
    theta0: f64,
    phi1: f64,
    phi0: f64,
    split: &'a str,
    label: u8,
}

#[derive(Serialize)]
struct SignalRow<'a> {
    example_id: &'a str,
    channel: &'a str,
    step: usize,
    original: f64,
    transformed: f64,
}

fn transformed(model: &Model64, batch: &SequenceBatch64) -> Result<(SequenceBatch64, Vec<[f64; 4]>)> {
    let (x, params) = model
        .transform(batch.values())?
        .ok_or_else(|| Error::Config("model has no transformer".into()))?;
    Ok((batch.with_values(x)?, params.iter().map(|p| p.to_array()).collect()))
}

pub fn transform_dump(args: &RunArgs, checkpoint: &Path, examples: &[String], split: &str) -> Result<()> {
    let (cfg, model, all, part) = load_model_and_split(args, checkpoint, split)?;
    let out = out_dir(args, &cfg)?;
    let (_, params) = transformed(&model, &part)?;
    let rows: Vec<ParamRow> = part
        .ids()
        .iter()
        .zip(part.labels())
        .zip(&params)
        .map(|((id, &label), p)| ParamRow {
            example_id: id,
            theta1: p[0],
            theta0: p[1],
            phi1: p[2],
            phi0: p[3],
            split,
            label,
        })
        .collect();
    write_csv(out.join("transform_params.csv"), &rows)?;

    let mut indices = Vec::new();
    for id in examples {
        let i = all
            .ids()
            .iter()
            .position(|x| x == id)
            .ok_or_else(|| Error::Data(format!("example {id:?} not in the dataset")))?;
        indices.push(i);
    }
    let mut signals = Vec::new();
    let chosen = match indices.is_empty() {
        true => None,
        false => {
            let c = all.subset(&indices)?;
            let (after, _) = transformed(&model, &c)?;
            Some((c, after))
        }
    };
    if let Some((chosen, after)) = &chosen {
        let t = chosen.steps();
        for (k, id) in chosen.ids().iter().enumerate() {
            let (x0, x1) = (chosen.values().example(k), after.values().example(k));
            for (c, name) in chosen.channel_names().iter().enumerate() {
                for step in 0..t {
                    signals.push(SignalRow {
                        example_id: id,
                        channel: name,
                        step,
                        original: x0[c * t + step],
                        transformed: x1[c * t + step],
                    });
                }
            }
        }
    }
    write_csv(out.join("signals.csv"), &signals)?;

    let theta = ScatterPlot::new(
        &format!("Temporal parameters ({split})"),
        "theta1 (time scale)",
        "theta0 (time shift)",
        params.iter().map(|p| (p[0], p[1])).collect(),
    );
    let phi = ScatterPlot::new(
        &format!("Magnitude parameters ({split})"),
        "phi1 (amplitude scale)",
        "phi0 (offset)",
        params.iter().map(|p| (p[2], p[3])).collect(),
    );
    for (name, plot) in [("theta.svg", theta), ("phi.svg", phi)] {
        std::fs::write(out.join(name), plot.to_svg()).map_err(|e| Error::io(out.join(name), e))?;
    }
    let mut ins = inputs(args, &cfg);
    ins.push(checkpoint.to_path_buf());
    write_manifest(
        &out,
        "transform-dump",
        &cfg,
        &ins,
        &["transform_params.csv", "signals.csv", "theta.svg", "phi.svg"],
    )?;
    println!("wrote {} parameter rows and {} signal rows", rows.len(), signals.len());
    Ok(())
}

#[derive(Serialize)]
struct DistanceRow {
    class: &'static str,
    data: &'static str,
    mean_distance: Option<f64>,
    n_examples: usize,
}

pub fn distance(args: &RunArgs, checkpoint: &Path, split: &str) -> Result<()> {
    let (cfg, model, _, part) = load_model_and_split(args, checkpoint, split)?;
    let out = out_dir(args, &cfg)?;
    let (after, _) = transformed(&model, &part)?;
    let before_d = intra_class_distance(&part);
    let after_d = intra_class_distance(&after);
    let pos = part.positives();
    let neg = part.len() - pos;
    let mut rows = Vec::new();
    for (data, d) in [("original", before_d), ("transformed", after_d)] {
        let ClassDistances { positive, negative } = d;
        rows.push(DistanceRow {
            class: "positive",
            data,
            mean_distance: positive,
            n_examples: pos,
        });
        rows.push(DistanceRow {
            class: "negative",
            data,
            mean_distance: negative,
            n_examples: neg,
        });
    }
    write_csv(out.join("distance.csv"), &rows)?;
    let mut ins = inputs(args, &cfg);
    ins.push(checkpoint.to_path_buf());
    write_manifest(&out, "distance", &cfg, &ins, &["distance.csv"])?;
    let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{x:.3}"));
    println!(
        "positive: {} -> {}   negative: {} -> {}",
        fmt(before_d.positive),
        fmt(after_d.positive),
        fmt(before_d.negative),
        fmt(after_d.negative)
    );
    Ok(())
}

pub fn fit_schema(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let DataSource::Events {
        events,
        labels,
        options,
        features,
        ..
    } = &cfg.data
    else {
        return Err(Error::Config("fit-schema needs an events data source".into()));
    };
    let out = out_dir(args, &cfg)?;
    let schema = fit_schema_files(events, labels, features, *options, cfg.split, cfg.split_seed, cfg.stratified)?;
    schema.save(out.join("schema.json"))?;
    write_manifest(
        &out,
        "fit-schema",
        &cfg,
        &[args.config.clone(), events.clone(), labels.clone()],
        &["schema.json"],
    )?;
    println!(
        "wrote schema with {} features ({} channels)",
        schema.features.len(),
        schema.channel_names().len()
    );
    Ok(())
}
