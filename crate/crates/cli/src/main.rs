//! `scefis`: run the thresholding phases from the command line.
//!
//! Every subcommand reads the project file (`--project`, default
//! `project.json`) and keeps its artifacts in the work directory (`--work`,
//! default `work`):
//!
//! ```text
//! work/self_config/     configure
//! work/optimal.csv      offline
//! work/split.json       train
//! work/model/           train, updated by run
//! work/online.json      run
//! work/evaluation.*     evaluate
//! work/crossval/        crossval
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use scefis_core::imaging::{apply_threshold, jaccard};
use scefis_core::pipeline::{
    compare_baselines, cross_validate, offline_optimal, render_markdown, run_online, self_configure,
    synth_dataset, train, trial_splits, Dataset, DirectoryFeedback, FeedbackSource, Model, OnlineRecord,
    ProjectConfig, ReplayFeedback, SelfConfiguration, SynthConfig, ThresholdTable,
};
use scefis_service::ProjectStore;
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "scefis", version, about = "Per-image thresholds from fuzzy rules that learn from corrected segmentations")]
struct Cli {
    /// Project configuration file.
    #[arg(long, global = true, default_value = "project.json")]
    project: PathBuf,
    /// Directory for artifacts.
    #[arg(long, global = true, default_value = "work")]
    work: PathBuf,
    /// Niblack window side, overriding the project file.
    #[arg(long, global = true)]
    niblack_window: Option<usize>,
    /// Niblack k, overriding the project file.
    #[arg(long, global = true, allow_hyphen_values = true)]
    niblack_k: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeedbackMode {
    /// Answer with the gold masks.
    Replay,
    /// Write segments to a directory and wait for corrected masks.
    Interactive,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with gold masks and a project file.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().count)]
        count: usize,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
    },
    /// Extract features and select the final feature set.
    Configure,
    /// Find the best threshold of every image against its gold mask.
    Offline,
    /// Train the initial rule base.
    Train {
        /// Cross-validation trial whose split to use.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Propose thresholds for the test images and evolve on feedback.
    Run {
        #[arg(long, value_enum, default_value = "replay")]
        feedback: FeedbackMode,
        /// Exchange directory for interactive feedback.
        #[arg(long, default_value = "review")]
        review_dir: PathBuf,
        /// Seconds to wait for each corrected mask.
        #[arg(long, default_value_t = 600)]
        timeout: u64,
    },
    /// Score the online run against the baselines.
    Evaluate,
    /// Repeated train/test trials with replayed feedback.
    Crossval {
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to `<work>/crossval`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        /// Directory holding one subdirectory per project.
        #[arg(long, default_value = "projects")]
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Serialize, Deserialize)]
struct Split {
    trial: usize,
    train_ids: Vec<String>,
    test_ids: Vec<String>,
}

struct Workspace {
    cfg: ProjectConfig,
    base: PathBuf,
    work: PathBuf,
}

impl Workspace {
    fn load(cli: &Cli) -> Result<Self> {
        let (project, work) = (&cli.project, &cli.work);
        let mut cfg = ProjectConfig::load(project).with_context(|| format!("loading {}", project.display()))?;
        if let Some(w) = cli.niblack_window {
            cfg.niblack.window = w;
        }
        if let Some(k) = cli.niblack_k {
            cfg.niblack.k = k;
        }
        cfg.validate()?;
        let base = project.parent().map(Path::to_path_buf).unwrap_or_default();
        std::fs::create_dir_all(work).with_context(|| format!("creating {}", work.display()))?;
        Ok(Self {
            cfg,
            base,
            work: work.to_path_buf(),
        })
    }

    fn dataset(&self) -> Result<Dataset> {
        let (images, gold) = self.cfg.resolve(&self.base);
        let gold = gold.is_dir().then_some(gold);
        let ds = Dataset::load(&images, gold.as_deref())
            .with_context(|| format!("loading images from {}", images.display()))?;
        log::info!("loaded {} images", ds.len());
        Ok(ds)
    }

    fn self_config(&self) -> Result<SelfConfiguration> {
        SelfConfiguration::load(&self.work.join("self_config")).context("run `scefis configure` first")
    }

    fn table(&self) -> Result<ThresholdTable> {
        ThresholdTable::load(&self.work.join("optimal.csv")).context("run `scefis offline` first")
    }

    fn split(&self) -> Result<Split> {
        let path = self.work.join("split.json");
        let bytes = std::fs::read(&path).context("run `scefis train` first")?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let path = self.work.join(name);
        scefis_core::write_atomic(&path, &serde_json::to_vec_pretty(value)?)?;
        Ok(path)
    }
}

fn synth(out: &Path, count: usize, seed: u64) -> Result<()> {
    let ds = synth_dataset(&SynthConfig {
        count,
        seed,
        ..SynthConfig::default()
    })?;
    let cfg = ProjectConfig::default();
    let (images, gold) = cfg.resolve(out);
    ds.save(&images, &gold)?;
    let project = out.join("project.json");
    if project.exists() {
        log::info!("keeping existing {}", project.display());
    } else {
        cfg.save(&project)?;
    }
    println!("wrote {count} images to {}", out.display());
    Ok(())
}

fn configure(ctx: &Workspace) -> Result<()> {
    let sc = self_configure(&ctx.dataset()?, &ctx.cfg)?;
    sc.save(&ctx.work.join("self_config"))?;
    let w = &sc.report.widths;
    println!(
        "Z = {}; feature widths {} -> {} -> {} -> {} -> {}",
        sc.z, w.n_t, w.n_t1, w.n_t2, w.n_t3, w.n_l
    );
    println!("final features: {}", sc.report.final_schema.join(", "));
    Ok(())
}

fn offline(ctx: &Workspace) -> Result<()> {
    let table = offline_optimal(&ctx.dataset()?, &ctx.cfg)?;
    let path = ctx.work.join("optimal.csv");
    table.save(&path)?;
    let mean = table.entries.values().map(|m| m.j_max).sum::<f64>() / table.entries.len() as f64;
    println!("{} optimal thresholds, mean J {:.1}%, written to {}", table.entries.len(), 100.0 * mean, path.display());
    Ok(())
}

fn train_cmd(ctx: &Workspace, trial: usize) -> Result<()> {
    let sc = ctx.self_config()?;
    let table = ctx.table()?;
    let cv = &ctx.cfg.cross_validation;
    let ids: Vec<String> = table.entries.keys().cloned().collect();
    let splits = trial_splits(&ids, trial + 1, cv.test_fraction, cv.seed)?;
    let s = &splits[trial];
    let model = train(&sc.f_star, &table, &s.train_ids, &ctx.cfg)?;
    model.save(&ctx.work.join("model"))?;
    ctx.write_json(
        "split.json",
        &Split {
            trial,
            train_ids: s.train_ids.clone(),
            test_ids: s.test_ids.clone(),
        },
    )?;
    println!(
        "trial {trial}: {} rules from {} rows of {} images; {} test images queued",
        model.rule_base.rule_count(),
        model.store.len(),
        s.train_ids.len(),
        s.test_ids.len()
    );
    Ok(())
}

fn run_cmd(ctx: &Workspace, mode: FeedbackMode, review_dir: &Path, timeout: u64) -> Result<()> {
    let ds = ctx.dataset()?;
    let sc = ctx.self_config()?;
    let split = ctx.split()?;
    let model_dir = ctx.work.join("model");
    let mut model = Model::load(&model_dir).context("run `scefis train` first")?;
    let mut replay;
    let mut interactive;
    let source: &mut dyn FeedbackSource = match mode {
        FeedbackMode::Replay => {
            replay = ReplayFeedback::new(&ds);
            &mut replay
        }
        FeedbackMode::Interactive => {
            std::fs::create_dir_all(review_dir)?;
            println!("segments go to {}; save corrections as <id>.corrected.png", review_dir.display());
            interactive = DirectoryFeedback {
                dir: review_dir.to_path_buf(),
                timeout: Duration::from_secs(timeout),
                poll: Duration::from_millis(250),
            };
            &mut interactive
        }
    };
    let records = run_online(&mut model, &sc.f_star, &ds, &split.test_ids, source, &ctx.cfg)?;
    model.save(&model_dir)?;
    let path = ctx.write_json("online.json", &records)?;
    for r in &records {
        match &r.event {
            Some(e) => println!(
                "{}: T = {}, J = {:.1}%, best T = {}, rules v{} ({})",
                r.image_id,
                r.threshold,
                100.0 * e.jaccard,
                e.t_best,
                e.version,
                e.rule_count
            ),
            None => println!("{}: T = {}, no feedback", r.image_id, r.threshold),
        }
    }
    println!("records written to {}", path.display());
    Ok(())
}

fn evaluate(ctx: &Workspace) -> Result<()> {
    let ds = ctx.dataset()?;
    let table = ctx.table()?;
    let bytes = std::fs::read(ctx.work.join("online.json")).context("run `scefis run` first")?;
    let records: Vec<OnlineRecord> = serde_json::from_slice(&bytes)?;
    if records.len() < 2 {
        bail!("at least two online records are needed for statistics");
    }
    let ids: Vec<String> = records.iter().map(|r| r.image_id.clone()).collect();
    let ours = records
        .iter()
        .map(|r| {
            let item = ds.get(&r.image_id)?;
            let seg = apply_threshold(&item.image, r.threshold, ctx.cfg.orientation);
            Ok(jaccard(&seg, ds.gold(&r.image_id)?)?.jaccard)
        })
        .collect::<Result<Vec<f64>>>()?;
    let scores = compare_baselines(&ds, &table, &ids, &ours, &ctx.cfg)?;
    let md = render_markdown("Online run", &scores);
    ctx.write_json("evaluation.json", &scores)?;
    scefis_core::write_atomic(&ctx.work.join("evaluation.md"), md.as_bytes())?;
    print!("{md}");
    Ok(())
}

fn crossval(ctx: &mut Workspace, folds: Option<usize>, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    if let Some(f) = folds {
        ctx.cfg.cross_validation.trials = f;
    }
    if let Some(s) = seed {
        ctx.cfg.cross_validation.seed = s;
    }
    ctx.cfg.validate()?;
    let ds = ctx.dataset()?;
    let sc = match ctx.self_config() {
        Ok(sc) => sc,
        Err(_) => self_configure(&ds, &ctx.cfg)?,
    };
    let table = match ctx.table() {
        Ok(t) => t,
        Err(_) => offline_optimal(&ds, &ctx.cfg)?,
    };
    let cv = cross_validate(&ds, &sc, &table, &ctx.cfg)?;
    let out = out.unwrap_or_else(|| ctx.work.join("crossval"));
    cv.save(&out)?;
    print!("{}", render_markdown("All trials", &cv.aggregate));
    let drops = cv.trials.iter().filter(|t| t.rises_then_drops()).count();
    println!(
        "rule count peaks before the last test image in {drops} of {} trials",
        cv.trials.len()
    );
    println!("results written to {}", out.display());
    Ok(())
}

fn serve(root: &Path, addr: SocketAddr) -> Result<()> {
    let store = Arc::new(ProjectStore::open(root)?);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(scefis_service::serve(store, addr))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth { out, count, seed } => synth(out, *count, *seed),
        Command::Serve { root, addr } => serve(root, *addr),
        command => {
            let mut ctx = Workspace::load(&cli)?;
            match command {
                Command::Configure => configure(&ctx),
                Command::Offline => offline(&ctx),
                Command::Train { trial } => train_cmd(&ctx, *trial),
                Command::Run {
                    feedback,
                    review_dir,
                    timeout,
                } => run_cmd(&ctx, *feedback, review_dir, *timeout),
                Command::Evaluate => evaluate(&ctx),
                Command::Crossval { folds, seed, out } => crossval(&mut ctx, *folds, *seed, out.clone()),
                Command::Synth { .. } | Command::Serve { .. } => unreachable!(),
            }
        }
    }
}
