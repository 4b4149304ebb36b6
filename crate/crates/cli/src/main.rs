use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use prose_core::io::{
    load_checkpoint, loss_curve_csv, metric_rows, plot_csv, read_shard, save_checkpoint, study_rows_csv,
    write_rows_csv, write_shard, Preset, RunConfig,
};
use prose_core::model::{Mode, Prose};
use prose_core::pde_zoo::PdeFamily;
use prose_core::train_eval::{
    evaluate, generate, run_study, run_study1, run_study1_with, train, EvalOptions, Fitted, GenSpec, StudyId,
    StudySpec,
};

#[derive(Parser)]
#[command(name = "prose", version, about = "Multi-operator PDE learning with symbolic equation inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run config; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    /// Comma-separated family ids.
    #[arg(long, global = true, value_delimiter = ',')]
    families: Option<Vec<PdeFamily>>,
    #[arg(long, global = true)]
    n_train: Option<usize>,
    #[arg(long, global = true)]
    n_test: Option<usize>,
    /// desk or paper; ignored when --config is given.
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// 2to2, 2to1 or 1to1.
    #[arg(long, global = true)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    noise: Option<f64>,
    /// Rollout end time(s), comma-separated.
    #[arg(long, global = true, value_delimiter = ',')]
    t_end: Option<Vec<f64>>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    steps: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train and test shards.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a shard and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training shard (default: <out-dir>/data/train).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a checkpoint on a shard.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Test shard (default: <out-dir>/data/test).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run a registry study end to end.
    Study {
        #[command(flatten)]
        common: Common,
        /// temporal-grid, time-marching, ood, input-class, unseen-operator,
        /// study2-exp1..5, study3-exp1..3, ablation-input, ablation-weights.
        id: String,
        /// Reuse a trained base model for study-1 evaluations.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render a report CSV to SVG.
    Plot {
        csv: PathBuf,
        /// Output path (default: the CSV path with .svg).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report keys to draw.
        #[arg(long, value_delimiter = ',', default_value = "rel_l2")]
        keys: Vec<String>,
    },
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::for_preset(c.preset.unwrap_or_default()),
    };
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = &c.families {
        cfg.data.families = v.clone();
    }
    if let Some(v) = c.n_train {
        cfg.data.n_train = v;
    }
    if let Some(v) = c.n_test {
        cfg.data.n_test = v;
    }
    if let Some(v) = c.mode {
        cfg.mode = v;
    }
    if let Some(v) = c.noise {
        cfg.data.noise = v;
    }
    if let Some(v) = &c.t_end {
        cfg.study.t_end = v.clone();
    }
    if let Some(v) = c.alpha {
        cfg.train.weights.alpha = v;
    }
    if let Some(v) = c.beta {
        cfg.train.weights.beta = v;
    }
    if let Some(v) = c.steps {
        cfg.train.steps = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var("PROSE_WORKERS") {
        let n: usize = v.parse().with_context(|| format!("PROSE_WORKERS={v}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn gen_spec(cfg: &RunConfig, n: usize, seed: u64) -> GenSpec {
    let mut s = GenSpec::families(&cfg.data.families, n, seed);
    s.noise = cfg.data.noise;
    s
}

fn cmd_gen(c: &Common) -> Result<()> {
    let cfg = resolve(c)?;
    let hash = cfg.hash();
    let reports = c.out_dir.join("reports");
    for (name, n, seed) in [("train", cfg.data.n_train, cfg.seed), ("test", cfg.data.n_test, cfg.seed.wrapping_add(1))] {
        let data = generate(&gen_spec(&cfg, n, seed))?;
        let dir = c.out_dir.join("data").join(name);
        write_shard(&dir, &data, Some(&hash))?;
        let rows = vec![
            ("generation".to_string(), "instances".to_string(), data.samples.len() as f64),
            ("generation".to_string(), "solver_failures".to_string(), data.report.solver_failures as f64),
            ("generation".to_string(), "resamples".to_string(), data.report.resamples as f64),
        ];
        let p = write_rows_csv(&reports, &format!("gen-{name}"), &hash, &rows)?;
        println!("{name}: {} instances -> {} ({})", data.samples.len(), dir.display(), p.display());
    }
    Ok(())
}

fn cmd_train(c: &Common, data: Option<PathBuf>) -> Result<()> {
    let cfg = resolve(c)?;
    let hash = cfg.hash();
    let dir = data.unwrap_or_else(|| c.out_dir.join("data/train"));
    let (dataset, _) = read_shard(&dir).with_context(|| format!("reading {}", dir.display()))?;
    let (model, mut params) = Prose::init::<f32>(cfg.model(), cfg.seed)?;
    let log = train(&model, &mut params, &dataset, &cfg.train_config())?;
    let ckpt = c.out_dir.join("checkpoint");
    save_checkpoint(&ckpt, &model, &params, &cfg, Some(&log))?;
    let p = write_rows_csv(&c.out_dir.join("reports"), "loss", &hash, &loss_curve_csv(&log))?;
    println!("checkpoint -> {} (config {}), loss curve {}", ckpt.display(), &hash[..12], p.display());
    Ok(())
}

fn eval_options(cfg: &RunConfig) -> EvalOptions {
    EvalOptions {
        n_in: cfg.train.n_in,
        symbols: cfg.symbols,
        batch_size: cfg.study.eval_batch,
        decode: cfg.study.decode && cfg.mode.has_symbol_output(),
        poly_seed: cfg.seed,
    }
}

/// Loads a checkpoint, honouring an explicit --config as the expected hash.
fn load_fitted(c: &Common, path: &Path) -> Result<(Fitted, RunConfig)> {
    let expected = match &c.config {
        Some(_) => Some(resolve(c)?.hash()),
        None => None,
    };
    let ck = load_checkpoint(path, expected.as_deref())?;
    let cfg = RunConfig::from_toml(&ck.manifest.run_config)?;
    Ok((
        Fitted {
            model: ck.model,
            params: ck.params,
            log: Default::default(),
        },
        cfg,
    ))
}

fn cmd_eval(c: &Common, checkpoint: Option<PathBuf>, data: Option<PathBuf>) -> Result<()> {
    let ckpt = checkpoint.unwrap_or_else(|| c.out_dir.join("checkpoint"));
    let (fitted, cfg) = load_fitted(c, &ckpt)?;
    let dir = data.unwrap_or_else(|| c.out_dir.join("data/test"));
    let (dataset, _) = read_shard(&dir).with_context(|| format!("reading {}", dir.display()))?;
    let (report, _) = evaluate(&fitted.model, &fitted.params, &dataset, &eval_options(&cfg))?;
    let p = write_rows_csv(&c.out_dir.join("reports"), "eval", &cfg.hash(), &metric_rows(&report))?;
    println!(
        "rel L2 {:.3}%  R2 {:.4}  valid {}  -> {}",
        report.rel_l2(),
        report.r2(),
        report.overall.valid_fraction.map(|v| format!("{v:.2}%")).unwrap_or_else(|| "-".into()),
        p.display()
    );
    Ok(())
}

fn cmd_study(c: &Common, id: &str, checkpoint: Option<PathBuf>) -> Result<()> {
    let id: StudyId = id.parse()?;
    let report = match checkpoint {
        Some(path) => {
            let (fitted, cfg) = load_fitted(c, &path)?;
            if matches!(id, StudyId::Study2(_) | StudyId::Study3(_) | StudyId::AblationInput | StudyId::AblationWeights) {
                bail!("{id} trains its own models; drop --checkpoint");
            }
            let mut spec = StudySpec::builtin(id, cfg.data.n_train, cfg.data.n_test)?;
            if id == StudyId::TimeMarching {
                spec.t_end = resolve(c).map(|r| r.study.t_end).unwrap_or(cfg.study.t_end.clone());
            }
            run_study1_with(&spec, &cfg.study_settings(), &fitted)?
        }
        None => {
            let cfg = resolve(c)?;
            if id == StudyId::TimeMarching {
                let settings = cfg.study_settings();
                let spec = StudySpec {
                    t_end: cfg.study.t_end.clone(),
                    ..StudySpec::builtin(id, cfg.data.n_train, cfg.data.n_test)?
                };
                run_study1(&spec, &settings)?
            } else {
                run_study(id, &cfg.study_settings())?
            }
        }
    };
    let hash = resolve(c)?.hash();
    let reports = c.out_dir.join("reports");
    let p = write_rows_csv(&reports, &report.id, &hash, &study_rows_csv(&report))?;
    for row in &report.rows {
        let vals: Vec<String> = row.values.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        println!("{:<32} {}", row.label, vals.join("  "));
    }
    if let Some(passed) = report.passed {
        println!("check: {}", if passed { "PASS" } else { "FAIL" });
    }
    let svg = p.with_extension("svg");
    plot_csv(&p, &svg, &["rel_l2"])?;
    println!("report -> {} ({})", p.display(), svg.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    init_workers()?;
    match Cli::parse().command {
        Command::Gen { common } => cmd_gen(&common),
        Command::Train { common, data } => cmd_train(&common, data),
        Command::Eval { common, checkpoint, data } => cmd_eval(&common, checkpoint, data),
        Command::Study { common, id, checkpoint } => cmd_study(&common, &id, checkpoint),
        Command::Plot { csv, out, keys } => {
            let out = out.unwrap_or_else(|| csv.with_extension("svg"));
            let keys: Vec<&str> = keys.iter().map(String::as_str).collect();
            plot_csv(&csv, &out, &keys)?;
            println!("{}", out.display());
            Ok(())
        }
    }
}
