use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use sdanet::baselines::run_baseline_suite;
use sdanet::data::{
    load_idx_images, load_idx_labels, write_idx_images, write_idx_labels, Dataset, IdxImages, SplitTag,
};
use sdanet::linalg::Rng;
use sdanet::model_file::{Model, ModelFile};
use sdanet::sda::{evaluate, finetune, pretrain, unroll, Evaluation, SupervisedNet};
use sdanet::search::{emit_fig3_table, run_grid, select_best};

use crate::args::{Command, CommonArgs};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::report::{self, RunMetadata};

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Pretrain(common) => cmd_pretrain(&common),
        Command::Finetune { common, pretrained } => cmd_finetune(&common, &pretrained),
        Command::Gridsearch { common, workers } => cmd_gridsearch(&common, workers),
        Command::Eval { common, model, split } => cmd_eval(&common, &model, &split),
        Command::Baselines(common) => cmd_baselines(&common),
        Command::MakeBars {
            samples,
            width,
            seed,
            out,
        } => cmd_make_bars(samples, width, seed, &out),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn read_file(key: &str, path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::Config(format!("{key}: cannot read '{}': {e}", path.display())))
}

fn read_pair(cfg: &RunConfig, prefix: &str, images: &Path, labels: &Path) -> CliResult<Dataset> {
    let format_err = |path: &Path, e: sdanet::Error| CliError::Format(format!("{}: {e}", path.display()));
    let mut imgs =
        load_idx_images(&read_file(&format!("data.{prefix}images"), images)?).map_err(|e| format_err(images, e))?;
    let mut labs =
        load_idx_labels(&read_file(&format!("data.{prefix}labels"), labels)?).map_err(|e| format_err(labels, e))?;
    if let Some(limit) = cfg.data.limit {
        // Truncate before normalizing so large files stay cheap.
        imgs.count = imgs.count.min(limit);
        imgs.pixels.truncate(imgs.count * imgs.rows * imgs.cols);
        labs.truncate(limit);
    }
    Dataset::from_idx(&imgs, &labs, cfg.data.n_classes).map_err(|e| format_err(labels, e))
}

/// Loads the configured data and checks that every `required` split is
/// nonempty.
pub fn load_data(cfg: &RunConfig, required: &[SplitTag]) -> CliResult<Dataset> {
    let d = &cfg.data;
    let data = if let (Some(images), Some(labels)) = (&d.images, &d.labels) {
        let [tr, va, te] = d.split;
        read_pair(cfg, "", images, labels)?.split((tr, va, te), cfg.split_seed())?
    } else {
        let mut parts = Vec::new();
        for (tag, images, labels) in [
            (SplitTag::Train, &d.train_images, &d.train_labels),
            (SplitTag::Valid, &d.valid_images, &d.valid_labels),
            (SplitTag::Test, &d.test_images, &d.test_labels),
        ] {
            match (images, labels) {
                (Some(i), Some(l)) => parts.push((tag, read_pair(cfg, &format!("{}_", tag.name()), i, l)?)),
                _ if required.contains(&tag) => {
                    return Err(CliError::Config(format!(
                        "data.{}_images: not set, and data.images/data.labels are not set either",
                        tag.name()
                    )))
                }
                _ => {}
            }
        }
        if parts.is_empty() {
            return Err(CliError::Config(
                "data.images: no dataset given (set data.images/data.labels or per-split pairs)".into(),
            ));
        }
        Dataset::from_parts(parts)?
    };
    for &tag in required {
        if data.count(tag) == 0 {
            return Err(CliError::Config(format!(
                "data.split: the {} split is empty; this command needs it",
                tag.name()
            )));
        }
    }
    Ok(data)
}

fn metadata(cfg: &RunConfig, command: &str, extra: &[(&str, String)]) -> BTreeMap<String, String> {
    let mut m = BTreeMap::from([
        ("command".to_string(), command.to_string()),
        ("seed".to_string(), cfg.seed.to_string()),
        ("config_digest".to_string(), format!("sha256:{}", cfg.digest())),
        (
            "config".to_string(),
            serde_json::to_string(&RunConfig {
                out: None,
                ..cfg.clone()
            })
            .expect("config serializes"),
        ),
    ]);
    m.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    m
}

fn save_model(dir: &Path, name: &str, file: &ModelFile) -> CliResult<()> {
    report::write(dir, name, &file.to_bytes()?).map(|_| ())
}

pub fn load_model(path: &Path, key: &str) -> CliResult<ModelFile> {
    let bytes = read_file(key, path)?;
    ModelFile::from_bytes(&bytes).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

struct Timer {
    command: &'static str,
    digest: String,
    started_unix_s: f64,
    started: Instant,
}

impl Timer {
    fn start(command: &'static str, cfg: &RunConfig) -> Self {
        Timer {
            command,
            digest: cfg.digest(),
            started_unix_s: report::unix_now(),
            started: Instant::now(),
        }
    }

    fn finish(self, dir: &Path, cell_wall_times_s: Vec<(String, f64)>) -> CliResult<()> {
        report::write_metadata(
            dir,
            &RunMetadata {
                command: self.command.into(),
                config_digest: format!("sha256:{}", self.digest),
                started_unix_s: self.started_unix_s,
                finished_unix_s: report::unix_now(),
                wall_time_s: self.started.elapsed().as_secs_f64(),
                cell_wall_times_s,
            },
        )
    }
}

fn emit(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    report::write(dir, name, text.as_bytes())?;
    Ok(())
}

fn cmd_pretrain(common: &CommonArgs) -> CliResult<()> {
    let cfg = RunConfig::resolve(common)?;
    let timer = Timer::start("pretrain", &cfg);
    let digest = cfg.digest();
    let data = load_data(&cfg, &[SplitTag::Train])?;
    let train = data.subset(SplitTag::Train);
    let spec = cfg.stack_spec(data.dim(), data.n_classes());
    let stack = pretrain(&spec, &train.samples, &cfg.pretrain_sgd())?;

    let out = cfg.out_dir();
    let traces = report::loss_trace_csv(&digest, &stack.traces);
    let file = ModelFile {
        model: Model::Stack {
            spec: spec.clone(),
            das: stack.das,
        },
        metadata: metadata(
            &cfg,
            "pretrain",
            &[("history_digest", format!("sha256:{}", sha256_hex(traces.as_bytes())))],
        ),
    };
    save_model(out, "stack.model", &file)?;
    emit(out, "pretrain_loss.csv", &traces)?;
    let mut entries = vec![
        ("samples", train.len().to_string()),
        ("layers", spec.hidden_dims.len().to_string()),
    ];
    let finals: Vec<String> = stack
        .traces
        .iter()
        .map(|t| format!("{}->{}", t[0], t[t.len() - 1]))
        .collect();
    entries.push(("loss_first_to_last", finals.join(" ")));
    let text = report::summary(&digest, &entries);
    emit(out, "pretrain_summary.txt", &text)?;
    print!("{text}");
    timer.finish(out, Vec::new())
}

fn cmd_finetune(common: &CommonArgs, pretrained: &str) -> CliResult<()> {
    let cfg = RunConfig::resolve(common)?;
    let timer = Timer::start("finetune", &cfg);
    let digest = cfg.digest();
    let data = load_data(&cfg, &[SplitTag::Train, SplitTag::Valid])?;
    let spec = cfg.stack_spec(data.dim(), data.n_classes());
    let mut rng = Rng::new(cfg.init_seed());
    let net = if pretrained == "none" {
        SupervisedNet::random(&spec, &mut rng)?
    } else {
        let file = load_model(Path::new(pretrained), "--pretrained")?;
        let Model::Stack { das, .. } = file.model else {
            return Err(CliError::Config(format!(
                "--pretrained: '{pretrained}' holds a {} model, not a pre-trained stack",
                file.model.kind()
            )));
        };
        unroll(&das, &spec, &mut rng).map_err(|e| CliError::Config(format!("--pretrained: {e}")))?
    };

    let train = data.subset(SplitTag::Train);
    let valid = data.subset(SplitTag::Valid);
    let outcome = finetune(net, &train, &valid, &cfg.finetune_config())?;
    let valid_eval = evaluate(&outcome.net, &valid)?;
    let test_eval = match data.count(SplitTag::Test) {
        0 => None,
        _ => Some(evaluate(&outcome.net, &data.subset(SplitTag::Test))?),
    };

    let out = cfg.out_dir();
    let history = report::history_csv(&digest, &outcome.history);
    let file = ModelFile {
        model: Model::Net {
            spec: Some(spec),
            net: outcome.net.clone(),
        },
        metadata: metadata(
            &cfg,
            "finetune",
            &[
                ("pretrained", pretrained.to_string()),
                ("history_digest", format!("sha256:{}", sha256_hex(history.as_bytes()))),
            ],
        ),
    };
    save_model(out, "net.model", &file)?;
    emit(out, "history.csv", &history)?;
    let mut entries = vec![
        ("pretrained", pretrained.to_string()),
        ("epochs_ran", outcome.epochs_ran().to_string()),
        ("best_epoch", outcome.best_epoch.to_string()),
        ("valid_error_pct", valid_eval.error_pct().to_string()),
    ];
    if let Some(t) = &test_eval {
        entries.push(("test_error_pct", t.error_pct().to_string()));
    }
    let text = report::summary(&digest, &entries);
    emit(out, "finetune_summary.txt", &text)?;
    print!("{text}");
    timer.finish(out, Vec::new())
}

fn cmd_gridsearch(common: &CommonArgs, workers: usize) -> CliResult<()> {
    if workers == 0 {
        return Err(CliError::Config("--workers: must be at least 1".into()));
    }
    let cfg = RunConfig::resolve(common)?;
    let timer = Timer::start("gridsearch", &cfg);
    let digest = cfg.digest();
    let data = load_data(&cfg, &SplitTag::ALL)?;
    let grid = cfg.grid_spec();
    let ledger = run_grid(&grid, &data, workers)?;

    let out = cfg.out_dir();
    emit(out, "ledger.csv", &report::ledger_csv(&digest, &ledger))?;
    emit(out, "ledger.json", &report::ledger_json(&digest, &ledger))?;
    let mut widths = grid.neuron_counts.clone();
    widths.sort_unstable();
    widths.dedup();
    let mut incomplete = Vec::new();
    for &n in &widths {
        let table = emit_fig3_table(&ledger, n);
        emit(out, &format!("fig3_N{n}.csv"), &report::fig3_csv(&digest, &table))?;
        incomplete.extend(table.missing.iter().map(|m| format!("{m}/N{n}")));
    }
    let cell_times = ledger.iter().map(|t| (t.cell.to_string(), t.wall_time_s)).collect();

    let best = select_best(&ledger);
    let mut entries = vec![
        ("cells", ledger.len().to_string()),
        (
            "failed_cells",
            ledger
                .iter()
                .filter(|t| t.validation_error_pct.is_none())
                .count()
                .to_string(),
        ),
    ];
    if let Ok(b) = &best {
        entries.push(("best_cell", b.cell.to_string()));
        entries.push((
            "best_validation_error_pct",
            b.validation_error_pct.unwrap_or(f64::NAN).to_string(),
        ));
        if let Some(t) = b.test_error_pct {
            entries.push(("best_test_error_pct", t.to_string()));
        }
        entries.push(("best_epochs_ran", b.epochs_ran.to_string()));
    }
    if !incomplete.is_empty() {
        entries.push(("missing_cells", incomplete.join(" ")));
    }
    let text = report::summary(&digest, &entries);
    emit(out, "best.txt", &text)?;
    print!("{text}");
    timer.finish(out, cell_times)?;
    best.map(|_| ())
        .map_err(|_| CliError::Numeric("every grid cell failed; see ledger.csv".into()))
}

fn cmd_eval(common: &CommonArgs, model_path: &Path, split: &str) -> CliResult<()> {
    let tag: SplitTag = split
        .parse()
        .map_err(|_| CliError::Config(format!("--split: expected train, valid or test, got '{split}'")))?;
    let cfg = RunConfig::resolve(common)?;
    let timer = Timer::start("eval", &cfg);
    let digest = cfg.digest();
    let data = load_data(&cfg, &[tag])?;
    let set = data.subset(tag);
    let file = load_model(model_path, "--model")?;
    let eval: Evaluation = match &file.model {
        Model::Net { net, .. } => {
            if net.input_dim() != set.dim() || net.n_classes() != set.n_classes {
                return Err(CliError::Config(format!(
                    "--model: network maps {}→{} but the data has dimension {} and {} classes",
                    net.input_dim(),
                    net.n_classes(),
                    set.dim(),
                    set.n_classes
                )));
            }
            evaluate(net, &set)?
        }
        Model::Baseline { model, .. } => {
            if model.dim() != set.dim() || model.n_classes() != set.n_classes {
                return Err(CliError::Config(format!(
                    "--model: baseline expects dimension {} and {} classes, the data has {} and {}",
                    model.dim(),
                    model.n_classes(),
                    set.dim(),
                    set.n_classes
                )));
            }
            model.evaluate(&set)?
        }
        Model::Stack { .. } => {
            return Err(CliError::Config(
                "--model: a pre-trained stack has no classifier; run finetune first".into(),
            ))
        }
    };

    let out = cfg.out_dir();
    let model_bytes = read_file("--model", model_path)?;
    let entries = [
        ("model_sha256", sha256_hex(&model_bytes)),
        ("model_kind", file.model.kind().to_string()),
        ("split", tag.name().to_string()),
        ("samples", eval.total.to_string()),
        ("error_pct", eval.error_pct().to_string()),
    ];
    let text = report::summary(&digest, &entries);
    emit(out, &format!("eval_{}.txt", tag.name()), &text)?;
    emit(
        out,
        &format!("confusion_{}.csv", tag.name()),
        &report::confusion_csv(&digest, &eval),
    )?;
    print!("{text}");
    timer.finish(out, Vec::new())
}

fn cmd_baselines(common: &CommonArgs) -> CliResult<()> {
    let cfg = RunConfig::resolve(common)?;
    let timer = Timer::start("baselines", &cfg);
    let digest = cfg.digest();
    let data = load_data(&cfg, &[SplitTag::Train, SplitTag::Valid])?;
    let specs = cfg.baseline_specs(data.dim(), data.n_classes());
    let rows = run_baseline_suite(&data, &specs)?;

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.model.clone(),
                r.valid_error_pct.map_or_else(String::new, |e| e.to_string()),
                r.status.clone(),
            ]
        })
        .collect();
    let out = cfg.out_dir();
    emit(
        out,
        "baselines.csv",
        &report::csv_table(&digest, &["model", "valid_error_pct", "status"], &table),
    )?;
    for r in &rows {
        match r.valid_error_pct {
            Some(e) => println!("{:<70} {e:>8.2}", r.model),
            None => println!("{:<70} {:>8}", r.model, r.status),
        }
    }
    timer.finish(out, Vec::new())
}

fn cmd_make_bars(samples: usize, width: usize, seed: u64, out: &Path) -> CliResult<()> {
    let data = Dataset::bars(samples, width, seed)?;
    let images = IdxImages {
        count: data.len(),
        rows: 1,
        cols: width,
        pixels: data
            .samples()
            .iter()
            .flat_map(|s| s.iter().map(|&v| (v * 255.0).round() as u8))
            .collect(),
    };
    let labels: Vec<u8> = data
        .labels()
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| CliError::Config("--width: at most 256 bars".into())))
        .collect::<CliResult<_>>()?;
    report::write(out, "bars-images-idx3-ubyte", &write_idx_images(&images)?)?;
    report::write(out, "bars-labels-idx1-ubyte", &write_idx_labels(&labels))?;
    println!("wrote {} bars of width {width} to {}", data.len(), out.display());
    Ok(())
}
