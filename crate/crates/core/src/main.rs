use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use compose_agent::controller::{
    read_traces_jsonl, render_trace, run_episode, run_flat_episode, write_traces_jsonl, EpisodeConfig, FlatModels,
    HierarchicalModels, TransferMode,
};
use compose_agent::eval::acceptance::{run_all, AcceptanceConfig};
use compose_agent::eval::{
    aggregate, episode_seed, rows_to_csv, run_ablation_suite, run_oracle, run_records, EpisodeResult, GroupKey, Inputs,
    SuiteConfig, TrainingData, Variant, ZooConfig,
};
use compose_agent::expert::{generate_dataset, split_scene_seeds, Dataset, DatasetConfig, DatasetRecord, Split};
use compose_agent::lang::Vocabulary;
use compose_agent::policies::{
    load_checkpoint, oem_examples, pcc_examples, save_checkpoint, train_flat, train_interaction, train_nav, train_oem,
    train_pcc, DataOptions, Demonstration, FlatPolicy, InteractionPolicy, LanguageMode, LossCurve, NavPolicy,
    ObjectEncoder, SubgoalClassifier, TrainConfig,
};
use compose_agent::tasks::SubgoalKind;
use compose_agent::world::{generate_scene, SceneGenConfig, WorldConfig};

/// Compositional household agent: data generation, training, evaluation and ablations.
#[derive(Debug, Parser)]
#[command(name = "compose-agent", version)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "COMPOSE_AGENT_OUT", default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate seeded scenes split into seen and unseen pools.
    GenScenes(GenScenes),
    /// Generate tasks, expert trajectories and instructions for every split.
    GenDataset(GenDataset),
    /// Fit one model: pcc, oem, nav, ip:<SubgoalKind> or flat.
    Train(Train),
    /// Run episodes and write traces and metric tables.
    Eval(Eval),
    /// Print traces in readable form.
    Replay(Replay),
    /// Train and evaluate the ablation matrix.
    Ablate(Ablate),
    /// Run the acceptance suite; exits nonzero when any criterion fails.
    Check(Check),
}

#[derive(Debug, Args, Serialize)]
struct GenScenes {
    #[arg(long, default_value_t = 40)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 0.2)]
    unseen_fraction: f64,
}

#[derive(Debug, Args, Serialize)]
struct GenDataset {
    #[arg(long, default_value_t = 40)]
    scenes: usize,
    #[arg(long, default_value_t = 14)]
    tasks_per_scene: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct Train {
    model: String,
    /// Directory written by gen-dataset.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct Eval {
    #[arg(long)]
    dataset: PathBuf,
    /// train, seen or unseen.
    #[arg(long, default_value = "unseen")]
    split: String,
    /// Replay expert trajectories instead of trained models.
    #[arg(long, conflicts_with = "models")]
    oracle: bool,
    /// Directory of checkpoints written by `train`.
    #[arg(long, required_unless_present = "oracle")]
    models: Option<PathBuf>,
    /// full, lem_off or flat.
    #[arg(long, default_value = "full")]
    variant: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 400)]
    max_steps: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args, Serialize)]
struct Replay {
    trace: PathBuf,
    /// Only this episode.
    #[arg(long)]
    episode: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct Ablate {
    /// Directory written by gen-dataset; generated with defaults when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Comma-separated variant names, or `all`.
    #[arg(long, default_value = "all")]
    variants: String,
    #[arg(long)]
    loop_study: bool,
    /// Exit nonzero when a directional check fails.
    #[arg(long)]
    check: bool,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args, Serialize)]
struct Check {
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

type CliResult = Result<ExitCode, String>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let out = cli.out.clone();
    let result = match &cli.command {
        Command::GenScenes(a) => gen_scenes(a, &out),
        Command::GenDataset(a) => gen_dataset(a, &out),
        Command::Train(a) => train(a, &out),
        Command::Eval(a) => eval(a, &out),
        Command::Replay(a) => replay(a),
        Command::Ablate(a) => ablate(a, &out),
        Command::Check(a) => check(a, &out),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Creates `dir` and records the resolved configuration of this run in it.
fn prepare_output<T: Serialize>(dir: &Path, name: &str, args: &T) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let snapshot = serde_json::json!({ "subcommand": name, "config": args });
    write(&dir.join(format!("{name}.config.json")), serde_json::to_string_pretty(&snapshot).expect("json") + "\n")
}

fn require(path: &Path) -> Result<(), String> {
    if path.exists() {
        Ok(())
    } else {
        Err(format!("missing input {}", path.display()))
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset, String> {
    require(&dir.join("records.jsonl"))?;
    require(&dir.join("scenes.jsonl"))?;
    Dataset::load(dir).map_err(|e| e.to_string())
}

fn gen_scenes(a: &GenScenes, out: &Path) -> CliResult {
    let pools = split_scene_seeds(a.n, a.seed, a.unseen_fraction);
    let cfg = SceneGenConfig::default();
    let mut seeds: Vec<(u64, &str)> = pools.seen.iter().map(|&s| (s, "seen")).collect();
    seeds.extend(pools.unseen.iter().map(|&s| (s, "unseen")));
    seeds.sort();
    let mut text = String::new();
    for (s, pool) in seeds {
        let scene = generate_scene(s, &cfg).map_err(|e| e.to_string())?;
        text.push_str(&serde_json::to_string(&serde_json::json!({ "pool": pool, "scene": scene })).expect("json"));
        text.push('\n');
    }
    prepare_output(out, "gen-scenes", a)?;
    write(&out.join("scenes.jsonl"), text)?;
    println!("wrote {} scenes ({} seen, {} unseen) to {}", a.n, pools.seen.len(), pools.unseen.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn gen_dataset(a: &GenDataset, out: &Path) -> CliResult {
    let cfg = DatasetConfig { num_scenes: a.scenes, tasks_per_scene: a.tasks_per_scene, seed: a.seed, ..Default::default() };
    let ds = generate_dataset(&cfg).map_err(|e| e.to_string())?;
    prepare_output(out, "gen-dataset", a)?;
    ds.save(out).map_err(|e| e.to_string())?;
    println!(
        "wrote {} episodes (train {}, valid_seen {}, valid_unseen {}) to {}",
        ds.records.len(),
        ds.manifest.train.len(),
        ds.manifest.valid_seen.len(),
        ds.manifest.valid_unseen.len(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_kind(s: &str) -> Result<SubgoalKind, String> {
    SubgoalKind::INTERACTIONS
        .into_iter()
        .find(|k| {
            let name = k.to_string().to_lowercase();
            name == s.to_lowercase() || name.trim_end_matches("object") == s.to_lowercase()
        })
        .ok_or_else(|| format!("unknown interaction subgoal `{s}`"))
}

fn ip_file(kind: SubgoalKind) -> String {
    format!("ip_{}.json", kind.to_string().to_lowercase())
}

fn train(a: &Train, out: &Path) -> CliResult {
    let ds = load_dataset(&a.dataset)?;
    let zoo = ZooConfig::default().with_seed(a.seed);
    let tune = |mut c: TrainConfig| {
        c.epochs = a.epochs.unwrap_or(c.epochs);
        c.lr = a.lr.unwrap_or(c.lr);
        c.hidden = a.hidden.unwrap_or(c.hidden);
        c
    };
    let vocab = Vocabulary::from_templates();
    let world = WorldConfig::default();
    let trajs = || ds.split(Split::Train).map(|r| &r.trajectory);
    let demos = || -> Result<Vec<Demonstration>, String> {
        ds.split(Split::Train)
            .map(|r| {
                let scene = ds.scene(r.scene_seed).ok_or_else(|| format!("scene for {} missing", r.id))?;
                Ok(Demonstration::replay(scene, &r.trajectory, &world))
            })
            .collect()
    };
    let dims = |n: usize| serde_json::json!({ "vocab": vocab.dim(), "hidden": n });
    let model = a.model.as_str();
    let snapshot = format!("train-{}", model.replace(':', "-"));
    let (file, curve): (String, LossCurve) = match model {
        "pcc" => {
            let cfg = tune(zoo.lang.clone());
            let (m, c) = train_pcc(&vocab, &pcc_examples(&vocab, trajs()), &[], &cfg).map_err(|e| e.to_string())?;
            prepare_output(out, &snapshot, a)?;
            save_checkpoint(&out.join("pcc.json"), "pcc", dims(0), a.seed, &m).map_err(|e| e.to_string())?;
            ("pcc".into(), c)
        }
        "oem" => {
            let cfg = tune(zoo.lang.clone());
            let ex = oem_examples(&vocab, trajs(), LanguageMode::Full);
            let (m, c) = train_oem(&vocab, &ex, &[], &cfg).map_err(|e| e.to_string())?;
            prepare_output(out, &snapshot, a)?;
            save_checkpoint(&out.join("oem.json"), "oem", dims(0), a.seed, &m).map_err(|e| e.to_string())?;
            ("oem".into(), c)
        }
        "nav" => {
            let cfg = tune(zoo.nav.clone());
            let (m, c) = train_nav(&vocab, &demos()?, &Inputs::Full.nav_options(), &cfg).map_err(|e| e.to_string())?;
            prepare_output(out, &snapshot, a)?;
            save_checkpoint(&out.join("nav.json"), "nav", dims(cfg.hidden), a.seed, &m).map_err(|e| e.to_string())?;
            ("nav".into(), c)
        }
        "flat" => {
            let cfg = tune(zoo.flat.clone());
            let (m, c) = train_flat(&vocab, &demos()?, &DataOptions::full(), 7, &cfg).map_err(|e| e.to_string())?;
            prepare_output(out, &snapshot, a)?;
            save_checkpoint(&out.join("flat.json"), "flat", dims(cfg.hidden), a.seed, &m).map_err(|e| e.to_string())?;
            ("flat".into(), c)
        }
        other => {
            let Some(kind) = other.strip_prefix("ip:") else {
                return Err(format!("unknown model `{other}`; expected pcc, oem, nav, ip:<SubgoalKind> or flat"));
            };
            let kind = parse_kind(kind)?;
            let cfg = tune(zoo.ip.clone());
            let (m, c) = train_interaction(&vocab, &demos()?, &Inputs::Full.ip_options(), Some(kind), &cfg)
                .map_err(|e| e.to_string())?;
            prepare_output(out, &snapshot, a)?;
            let f = ip_file(kind);
            save_checkpoint(&out.join(&f), "ip", dims(cfg.hidden), a.seed, &m).map_err(|e| e.to_string())?;
            (f.trim_end_matches(".json").to_string(), c)
        }
    };
    write(&out.join(format!("{file}_loss.csv")), curve.to_csv())?;
    if let Some(r) = curve.last("train") {
        println!("{file}: train loss {:.4}, accuracy {:.4}", r.loss, r.accuracy);
    }
    Ok(ExitCode::SUCCESS)
}

fn load<T: serde::de::DeserializeOwned>(dir: &Path, file: &str, kind: &str) -> Result<T, String> {
    let path = dir.join(file);
    require(&path)?;
    load_checkpoint(&path, kind).map(|c| c.model).map_err(|e| e.to_string())
}

fn eval(a: &Eval, out: &Path) -> CliResult {
    let split: Split = a.split.parse()?;
    let ds = load_dataset(&a.dataset)?;
    let variant: Variant = a.variant.parse()?;
    let base = EpisodeConfig { max_steps: a.max_steps, seed: a.seed, ..Default::default() };
    let results: Vec<EpisodeResult> = if a.oracle {
        run_oracle(&ds, split, &base, a.jobs).map_err(|e| e.to_string())?
    } else {
        let dir = a.models.as_deref().expect("required unless --oracle");
        let vocab = Vocabulary::from_templates();
        let pcc: SubgoalClassifier = load(dir, "pcc.json", "pcc")?;
        let oem: ObjectEncoder = load(dir, "oem.json", "oem")?;
        let vis = WorldConfig::default().visibility_range;
        let records: Vec<_> = ds.split(split).collect();
        let cfg = EpisodeConfig { lem_enabled: variant.lem_enabled(), flags: variant.flags(), ..base };
        let seeded = |r: &DatasetRecord| EpisodeConfig { seed: episode_seed(a.seed, &r.id), ..cfg };
        match variant {
            Variant::Flat => {
                let flat: FlatPolicy = load(dir, "flat.json", "flat")?;
                let agent = FlatModels { vocab: &vocab, pcc: &pcc, oem: &oem, flat: &flat, visibility_range: vis };
                run_records(&ds, &records, a.jobs, |s, r| run_flat_episode(s, &agent, &seeded(r))).map_err(|e| e.to_string())?
            }
            Variant::Full | Variant::LemOff => {
                let nav: NavPolicy = load(dir, "nav.json", "nav")?;
                let ips = SubgoalKind::INTERACTIONS
                    .into_iter()
                    .map(|k| load::<InteractionPolicy>(dir, &ip_file(k), "ip"))
                    .collect::<Result<Vec<_>, _>>()?;
                let agent = HierarchicalModels {
                    vocab: &vocab,
                    pcc: &pcc,
                    oem: Some(&oem),
                    nav: &nav,
                    ips: ips.iter().collect(),
                    visibility_range: vis,
                };
                run_records(&ds, &records, a.jobs, |s, r| run_episode(s, &agent, &seeded(r))).map_err(|e| e.to_string())?
            }
            other => return Err(format!("variant {other} needs retrained models; use `ablate`")),
        }
    };
    let metrics: Vec<_> = results.iter().map(|r| r.metrics.clone()).collect();
    let rows = aggregate(&metrics, &[GroupKey::TaskType]).map_err(|e| e.to_string())?;
    prepare_output(out, "eval", a)?;
    let traces: Vec<_> = results.into_iter().map(|r| r.trace).collect();
    write_traces_jsonl(&out.join("traces.jsonl"), &traces).map_err(|e| e.to_string())?;
    write(&out.join("metrics.csv"), rows_to_csv(&rows))?;
    write(&out.join("metrics.json"), serde_json::to_string_pretty(&rows).expect("json") + "\n")?;
    println!("{:<28} {:>8} {:>7} {:>7} {:>7}", "group", "episodes", "SR", "PLWSR", "GC");
    for r in &rows {
        println!("{:<28} {:>8} {:>7.3} {:>7.3} {:>7.3}", r.label(), r.episodes, r.sr, r.plwsr, r.gc);
    }
    Ok(ExitCode::SUCCESS)
}

fn replay(a: &Replay) -> CliResult {
    require(&a.trace)?;
    let traces = read_traces_jsonl(&a.trace).map_err(|e| e.to_string())?;
    let mut shown = 0;
    let mut stdout = std::io::stdout().lock();
    for t in traces.iter().filter(|t| a.episode.as_ref().is_none_or(|id| *id == t.episode_id)) {
        if writeln!(stdout, "{}", render_trace(t)).is_err() {
            break;
        }
        shown += 1;
    }
    if shown == 0 {
        return Err(format!("no matching trace in {}", a.trace.display()));
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_variants(s: &str) -> Result<Vec<Variant>, String> {
    if s == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    s.split(',').map(|v| v.trim().parse()).collect()
}

fn ablate(a: &Ablate, out: &Path) -> CliResult {
    let variants = parse_variants(&a.variants)?;
    let ds = match &a.dataset {
        Some(dir) => load_dataset(dir)?,
        None => generate_dataset(&DatasetConfig::default()).map_err(|e| e.to_string())?,
    };
    let zoo = ZooConfig::default();
    let corpus_cfg = DatasetConfig { tasks_per_scene: zoo.corpus_tasks_per_scene, ..Default::default() };
    let corpus = generate_dataset(&corpus_cfg).map_err(|e| e.to_string())?;
    let data = TrainingData::new(&ds, &corpus, WorldConfig::default()).map_err(|e| e.to_string())?;
    let cfg = SuiteConfig {
        variants,
        seeds: (0..a.seeds).collect(),
        loop_study: a.loop_study,
        jobs: a.jobs,
        zoo,
        episode: EpisodeConfig { transfer_mode: TransferMode::default(), ..Default::default() },
        ..SuiteConfig::default()
    };
    let report = run_ablation_suite(&cfg, &data, &ds).map_err(|e| e.to_string())?;
    prepare_output(out, "ablate", a)?;
    write(&out.join("ablation.csv"), report.rows_csv())?;
    write(&out.join("ablation.json"), serde_json::to_string_pretty(&report).expect("json") + "\n")?;
    print!("{}", report.render());
    if a.check && !report.all_checks_hold() {
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn check(a: &Check, out: &Path) -> CliResult {
    let mut cfg = AcceptanceConfig::default();
    cfg.suite.seeds = (0..a.seeds).collect();
    cfg.suite.jobs = a.jobs;
    let (results, report) = run_all(&cfg).map_err(|e| e.to_string())?;
    prepare_output(out, "check", a)?;
    write(&out.join("acceptance.json"), serde_json::to_string_pretty(&results).expect("json") + "\n")?;
    write(&out.join("ablation.csv"), report.rows_csv())?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
