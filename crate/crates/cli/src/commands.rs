use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rsem::data::{
    load_features, make_group_split, sample_episode, save_features, seeded_rng,
    synth_gaussian_dataset, ClassSplit, Dataset, FeatureFormat, GroupPreset, GroupSpec,
    SynthParams,
};
use rsem::eval::{evaluate, EvalOptions, Protocol};
use rsem::model::{load_checkpoint, save_checkpoint, EnsembleConfig, Mode, SubspaceEnsemble};
use rsem::svd::{bench_records_tsv, bench_table, benchmark_scaling, BenchConfig};
use rsem::train::{gradient_check, train_with_callback, AdamConfig, LossConfig, TrainConfig};

use crate::config::{Flags, RunConfig};
use crate::CliError;

type CmdResult = Result<(), CliError>;

/// Resolves the configuration, prepares the output directory, echoes the
/// resolved configuration into it and sizes the thread pool.
fn setup(flags: &Flags) -> Result<RunConfig, CliError> {
    let mut cfg = flags.resolve()?;
    if cfg.single {
        cfg.subspaces = 1;
    }
    if cfg.no_dis_loss {
        cfg.beta = 0.0;
    }
    if cfg.threads == 0 {
        return Err(CliError::Usage("--threads must be >= 1".into()));
    }
    // A second call in the same process would fail; the first pool stays.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global();
    fs::create_dir_all(&cfg.out)?;
    Ok(cfg)
}

fn echo_config(cfg: &RunConfig) -> CmdResult {
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    fs::write(cfg.out.join("config.resolved.json"), text + "\n")?;
    Ok(())
}

fn feature_format(cfg: &RunConfig, path: &Path) -> Result<FeatureFormat, CliError> {
    match &cfg.format {
        Some(f) => Ok(f.parse()?),
        None => Ok(FeatureFormat::from_path(path)),
    }
}

fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    Ok(load_features(path, feature_format(cfg, path)?)?)
}

fn parse_counts(spec: &str) -> Result<GroupSpec, CliError> {
    let parts: Vec<usize> = spec
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad split counts `{spec}`")))?;
    match parts[..] {
        [train, val, test] => Ok(GroupSpec::Counts { train, val, test }),
        _ => Err(CliError::Usage(format!("split counts need three numbers, got `{spec}`"))),
    }
}

/// `auto` uses Group 1 when the data carries its classes and otherwise
/// holds out the last N classes for testing and the N before them for
/// validation.
fn resolve_split(cfg: &RunConfig, dataset: &Dataset) -> Result<ClassSplit, CliError> {
    let names = dataset.label_names();
    let spec = match cfg.split.as_str() {
        "auto" => {
            let (train, val, test) = GroupPreset::Group1.classes();
            let has_group1 = train
                .iter()
                .chain(&val)
                .chain(&test)
                .all(|c| dataset.class_index(c).is_some());
            if has_group1 {
                GroupSpec::Preset(GroupPreset::Group1)
            } else {
                let n = cfg.n_way;
                if names.len() < 3 * n {
                    return Err(CliError::Usage(format!(
                        "automatic split needs at least {} classes, data has {}",
                        3 * n,
                        names.len()
                    )));
                }
                GroupSpec::Counts {
                    train: names.len() - 2 * n,
                    val: n,
                    test: n,
                }
            }
        }
        "explicit" => GroupSpec::Explicit {
            train: cfg.train_classes.clone(),
            val: cfg.val_classes.clone(),
            test: cfg.test_classes.clone(),
        },
        s if s.starts_with("counts:") => parse_counts(&s["counts:".len()..])?,
        s => GroupSpec::Preset(s.parse()?),
    };
    Ok(make_group_split(names, &spec)?)
}

fn protocol(cfg: &RunConfig) -> Protocol {
    Protocol {
        n_way: cfg.n_way,
        k_shot: cfg.k_shot,
        q_per_class: cfg.queries,
    }
}

fn loss_config(cfg: &RunConfig) -> LossConfig {
    LossConfig {
        alpha: cfg.alpha,
        beta: cfg.beta,
        support_loss: !cfg.no_sup_loss,
        cross_entropy: cfg.cross_entropy,
        leave_one_out: cfg.leave_one_out,
        dis_include_bias: cfg.dis_include_bias,
    }
}

fn model_path(cfg: &RunConfig) -> PathBuf {
    cfg.model.clone().unwrap_or_else(|| cfg.out.join("model.fslm"))
}

pub fn synth(flags: &Flags) -> CmdResult {
    let cfg = setup(flags)?;
    if cfg.classes == 0 || cfg.per_class == 0 || cfg.dim == 0 {
        return Err(CliError::Usage("--classes, --per-class and --dim must be >= 1".into()));
    }
    echo_config(&cfg)?;
    let dataset = synth_gaussian_dataset(&SynthParams {
        n_classes: cfg.classes,
        per_class: cfg.per_class,
        dim: cfg.dim,
        center_scale: cfg.center_scale,
        noise_sigma: cfg.noise_sigma,
        seed: cfg.seed,
    })?;
    let path = cfg.output.clone().unwrap_or_else(|| cfg.out.join("synth.fslf"));
    save_features(&dataset, &path, feature_format(&cfg, &path)?)?;
    println!(
        "wrote {} samples ({} classes × {}, D={}) to {}",
        dataset.len(),
        cfg.classes,
        cfg.per_class,
        cfg.dim,
        path.display()
    );
    Ok(())
}

pub fn train(flags: &Flags) -> CmdResult {
    let mut cfg = setup(flags)?;
    let dataset = load_data(&cfg)?;
    let input_dim = *cfg.input_dim.get_or_insert(dataset.dim());
    if input_dim != dataset.dim() {
        return Err(CliError::Usage(format!(
            "--input-dim {input_dim} does not match the {}-dimensional data",
            dataset.dim()
        )));
    }
    let split = resolve_split(&cfg, &dataset)?;
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        batches_per_epoch: cfg.batches_per_epoch,
        episodes_per_batch: cfg.episodes_per_batch,
        protocol: protocol(&cfg),
        loss: loss_config(&cfg),
        optimizer: AdamConfig {
            learning_rate: cfg.lr,
            ..AdamConfig::default()
        },
        seed: cfg.seed,
        val_episodes: cfg.val_episodes,
        val_protocol: protocol(&cfg),
    };
    let mut model = match &cfg.init_model {
        Some(path) => load_checkpoint(path)?,
        None => SubspaceEnsemble::init(
            EnsembleConfig {
                input_dim,
                hidden_dim: cfg.hidden_dim,
                output_dim: cfg.output_dim,
                subspaces: cfg.subspaces,
                shared_trunk: !cfg.separate_trunks,
                ..EnsembleConfig::default()
            },
            cfg.seed,
        )?,
    };
    echo_config(&cfg)?;

    let checkpoint = cfg.out.join("model.fslm");
    let mut log = BufWriter::new(File::create(cfg.out.join("train.log"))?);
    let result = train_with_callback(&mut model, &dataset, &split, &train_cfg, |record, model| {
        let line = record.to_line();
        eprintln!("{line}");
        writeln!(log, "{line}")?;
        log.flush()?;
        if cfg.checkpoint_every > 0 && record.epoch % cfg.checkpoint_every == 0 {
            save_checkpoint(model, &checkpoint)?;
        }
        Ok(())
    });
    if let Err(e) = result {
        if matches!(e, rsem::Error::NonFiniteLoss { .. }) {
            writeln!(log, "aborted: {e}")?;
            log.flush()?;
        }
        return Err(e.into());
    }
    save_checkpoint(&model, &checkpoint)?;
    eprintln!("saved {}", checkpoint.display());
    Ok(())
}

pub fn eval(flags: &Flags) -> CmdResult {
    let cfg = setup(flags)?;
    let model = load_checkpoint(&model_path(&cfg))?;
    let dataset = load_data(&cfg)?;
    if model.config().input_dim != dataset.dim() {
        return Err(CliError::Data(format!(
            "checkpoint expects {} features, data has {}",
            model.config().input_dim,
            dataset.dim()
        )));
    }
    let split = resolve_split(&cfg, &dataset)?;
    let test = dataset.class_indices(&split.test_classes)?;
    echo_config(&cfg)?;
    let report = evaluate(
        &model,
        &dataset,
        &test,
        &EvalOptions {
            episodes: cfg.episodes,
            protocol: protocol(&cfg),
            vote: cfg.vote,
            seed: cfg.seed,
            support_batches: cfg.support_batches,
        },
    )?;
    let table = report.to_table();
    fs::write(cfg.out.join("eval.report"), &table)?;
    fs::write(cfg.out.join("eval.records"), report.to_records())?;
    print!("{table}");
    Ok(())
}

pub fn bench(flags: &Flags) -> CmdResult {
    let cfg = setup(flags)?;
    let bench_cfg = BenchConfig {
        a_values: cfg.a.clone(),
        b: cfg.b,
        r: cfg.rank,
        subspaces: cfg.subspaces,
        hidden_dim: cfg.hidden_dim,
        output_dim: cfg.output_dim,
        repeats: cfg.repeats,
        seed: cfg.seed,
    };
    bench_cfg.validate()?;
    echo_config(&cfg)?;
    let records = benchmark_scaling(&bench_cfg)?;
    fs::write(cfg.out.join("bench.records"), bench_records_tsv(&records))?;
    print!("{}", bench_table(&records));
    Ok(())
}

/// Tiny model and episode shape used by `gradcheck`.
const GRADCHECK_DIMS: (usize, usize, usize, usize) = (16, 8, 4, 3);

pub fn gradcheck(flags: &Flags) -> CmdResult {
    let cfg = setup(flags)?;
    echo_config(&cfg)?;
    let (d, h, m, nu) = GRADCHECK_DIMS;
    let dataset = synth_gaussian_dataset(&SynthParams {
        n_classes: 3,
        per_class: 4,
        dim: d,
        center_scale: 1.0,
        noise_sigma: 1.0,
        seed: cfg.seed,
    })?;
    let model = SubspaceEnsemble::init(
        EnsembleConfig {
            input_dim: d,
            hidden_dim: h,
            output_dim: m,
            subspaces: nu,
            shared_trunk: !cfg.separate_trunks,
            ..EnsembleConfig::default()
        },
        cfg.seed,
    )?;
    let mut rng = seeded_rng(cfg.seed);
    let episode = sample_episode(&dataset, &[0, 1, 2], 3, 2, 2, &mut rng)?;
    let loss = loss_config(&cfg);

    let mut lines = String::new();
    let mut failed = Vec::new();
    for (mode, tol) in [(Mode::Eval, cfg.tolerance), (Mode::Train, cfg.train_tolerance)] {
        let r = gradient_check(&model, &episode, &loss, mode, cfg.eps)?;
        let pass = r.max_rel_error <= tol;
        let mode_name = if mode == Mode::Eval { "eval" } else { "train" };
        lines.push_str(&format!(
            "mode={mode_name} max_rel_error={:e} tolerance={tol:e} worst={}[{}] analytic={:e} numeric={:e} n_params={} dis_grad_norm={:e} status={}\n",
            r.max_rel_error,
            r.worst_param,
            r.worst_index,
            r.analytic,
            r.numeric,
            r.n_params,
            r.dis_grad_norm,
            if pass { "pass" } else { "fail" }
        ));
        if !pass {
            failed.push(mode_name);
        }
    }
    fs::write(cfg.out.join("gradcheck.report"), &lines)?;
    print!("{lines}");
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!(
            "gradient check above tolerance in {} mode",
            failed.join(" and ")
        )))
    }
}
