//! Command-line front end: scene generation, benchmark runs, reports and the
//! console service.

use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use mirrorsim::agents::{AgentHandle, AgentKind, HumanBridge};
use mirrorsim::assets::Setting;
use mirrorsim::generate::{generate_scenes, is_valid_scene, SceneConfig};
use mirrorsim::metrics::ScoreField;
use mirrorsim::prompt::Level;
use mirrorsim::report::{make_report, read_records};
use mirrorsim::run::{
    run_benchmark_with, DefaultAgentFactory, RunConfig, RunManifest, RECORDS_FILE,
};
use mirrorsim::scene::SceneDocument;
use mirrorsim::service::{Service, ServiceConfig};

#[derive(Parser)]
#[command(
    name = "mirrorsim",
    version,
    about = "Mirror self-recognition benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the scene set and write it as JSON.
    GenerateScenes {
        /// Scene configuration (TOML). Defaults to the built-in pool and layout.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep only one setting.
        #[arg(long)]
        setting: Option<SettingArg>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Check every scene in a scene file, including the render-based checks.
    ValidateScenes {
        scenes: PathBuf,
        #[arg(long, default_value_t = 1)]
        d_th: u32,
    },
    /// Run every (scene, level, agent) cell and append records to the run file.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Address for the console service when human agents take part.
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: SocketAddr,
        #[arg(long)]
        console_dir: Option<PathBuf>,
    },
    /// Aggregate a run file into tables.
    Report {
        /// Run directory (containing episodes.jsonl) or a JSONL file.
        path: PathBuf,
        /// Comma-separated levels, e.g. 0,2. Empty means all four.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<u8>,
        #[arg(long, value_enum, default_value_t = ScoreArg::Avg)]
        score: ScoreArg,
        /// Write report.csv, report.md and report.json here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Serve the human console endpoints and run reports.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: SocketAddr,
        #[arg(long, default_value = "runs")]
        runs_dir: PathBuf,
        #[arg(long)]
        console_dir: Option<PathBuf>,
        /// Also run a benchmark whose human agents play through this service.
        #[arg(long)]
        run_config: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    run_id: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Scene file; overrides the config.
    #[arg(long)]
    scenes: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    levels: Vec<u8>,
    /// Agent ids to run. Ids not in the config may name a built-in agent:
    /// oracle, random, mirror-confused.
    #[arg(long, value_delimiter = ',')]
    agents: Vec<String>,
    #[arg(long)]
    dump_frames: bool,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Leave timestamps out of the records.
    #[arg(long)]
    canonical: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Human,
    Robot,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    Tsr,
    Sir,
    Fcr,
    Pcr,
    Avg,
}

impl From<ScoreArg> for ScoreField {
    fn from(s: ScoreArg) -> Self {
        match s {
            ScoreArg::Tsr => ScoreField::Tsr,
            ScoreArg::Sir => ScoreField::Sir,
            ScoreArg::Fcr => ScoreField::Fcr,
            ScoreArg::Pcr => ScoreField::Pcr,
            ScoreArg::Avg => ScoreField::Avg,
        }
    }
}

fn parse_levels(raw: &[u8]) -> Result<Vec<Level>> {
    raw.iter()
        .map(|&i| Level::from_index(i).with_context(|| format!("level {i} is not in 0..=3")))
        .collect()
}

fn builtin_agent(id: &str) -> Option<AgentHandle> {
    let kind = match id {
        "oracle" => AgentKind::Oracle,
        "random" => AgentKind::Random,
        "mirror-confused" | "mirror_confused" => AgentKind::MirrorConfused,
        _ => return None,
    };
    Some(AgentHandle::new(id, kind))
}

fn load_run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::from_toml_str(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(id) = &args.run_id {
        cfg.run_id = id.clone();
    }
    if let Some(d) = &args.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(s) = &args.scenes {
        cfg.scene_file = Some(s.clone());
    }
    if !args.levels.is_empty() {
        cfg.levels = parse_levels(&args.levels)?;
    }
    if !args.agents.is_empty() {
        let mut chosen = Vec::new();
        for id in &args.agents {
            match cfg.agents.iter().find(|a| &a.agent_id == id) {
                Some(a) => chosen.push(a.clone()),
                None => {
                    chosen.push(builtin_agent(id).with_context(|| format!("unknown agent {id:?}"))?)
                }
            }
        }
        cfg.agents = chosen;
    }
    if args.dump_frames {
        cfg.dump_frames = true;
    }
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.canonical {
        cfg.episode.canonical = true;
    }
    Ok(cfg)
}

fn print_manifest(m: &RunManifest, run_dir: &Path) {
    println!(
        "run {}: {} cells, {} executed, {} already recorded, {} invalid",
        m.run_id, m.cells, m.executed, m.skipped, m.invalid
    );
    println!("records: {}", run_dir.join(RECORDS_FILE).display());
}

/// Runs the benchmark. When human agents take part the console service is
/// started for the duration of the run.
fn execute_run(
    cfg: RunConfig,
    bind: SocketAddr,
    console_dir: Option<PathBuf>,
) -> Result<RunManifest> {
    let scenes = cfg.load_scenes()?;
    let needs_console = cfg
        .agents
        .iter()
        .any(|a| matches!(a.kind, AgentKind::Human));
    if !needs_console {
        return Ok(run_benchmark_with(
            &cfg,
            &scenes,
            &DefaultAgentFactory::new(&cfg.agents),
        )?);
    }
    let bridge = HumanBridge::new();
    let factory = DefaultAgentFactory::new(&cfg.agents).with_bridge(bridge.clone());
    let rt = tokio::runtime::Runtime::new()?;
    let service = rt.block_on(Service::bind(
        &ServiceConfig {
            bind,
            runs_dir: cfg.output_dir.clone(),
            console_dir,
        },
        bridge,
    ))?;
    println!("console service on http://{}", service.local_addr());
    let server = rt.spawn(service.run());
    let manifest = run_benchmark_with(&cfg, &scenes, &factory);
    server.abort();
    Ok(manifest?)
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::GenerateScenes {
            config,
            seed,
            setting,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => SceneConfig::from_toml_str(
                    &fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => SceneConfig::default(),
            };
            if let Some(s) = setting {
                cfg.sampling.setting = Some(match s {
                    SettingArg::Human => Setting::Human,
                    SettingArg::Robot => Setting::Robot,
                });
            }
            let scenes = generate_scenes(&cfg.pool(), &cfg.sampling, seed)?;
            let n = scenes.len();
            fs::write(&out, SceneDocument::new(seed, scenes).to_json())
                .with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {n} scenes to {}", out.display());
        }
        Command::ValidateScenes { scenes, d_th } => {
            let text = fs::read_to_string(&scenes)
                .with_context(|| format!("reading {}", scenes.display()))?;
            let doc = SceneDocument::from_json(&text)?;
            let render = SceneConfig::default().sampling.validation_render;
            let mut ids = BTreeSet::new();
            let mut bad = 0;
            for s in &doc.scenes {
                let problem = if !ids.insert(s.scene_id.as_str()) {
                    Some("duplicate scene id".to_string())
                } else if let Err(e) = s.check_structure(d_th) {
                    Some(e.to_string())
                } else if !is_valid_scene(s, d_th, &render) {
                    Some("mark visible in the direct view or missing from the mirror".to_string())
                } else {
                    None
                };
                if let Some(p) = problem {
                    bad += 1;
                    println!("INVALID {}: {p}", s.scene_id);
                }
            }
            println!("{} scenes, {} invalid", doc.scenes.len(), bad);
            if bad > 0 {
                bail!("{bad} invalid scenes");
            }
        }
        Command::Run {
            run,
            bind,
            console_dir,
        } => {
            let cfg = load_run_config(&run)?;
            let run_dir = cfg.run_dir();
            let m = execute_run(cfg, bind, console_dir)?;
            print_manifest(&m, &run_dir);
        }
        Command::Report {
            path,
            levels,
            score,
            out_dir,
        } => {
            let file = if path.is_dir() {
                path.join(RECORDS_FILE)
            } else {
                path
            };
            let records = read_records(&file)?;
            let report = make_report(&records, &parse_levels(&levels)?, score.into())?;
            if let Some(dir) = out_dir {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("report.csv"), report.to_csv())?;
                fs::write(dir.join("report.md"), report.to_markdown())?;
                fs::write(
                    dir.join("report.json"),
                    serde_json::to_string_pretty(&report)?,
                )?;
            }
            print!("{}", report.to_markdown());
        }
        Command::Serve {
            bind,
            runs_dir,
            console_dir,
            run_config,
        } => {
            let bridge = HumanBridge::new();
            let rt = tokio::runtime::Runtime::new()?;
            let cfg = ServiceConfig {
                bind,
                runs_dir: runs_dir.clone(),
                console_dir,
            };
            let service = rt.block_on(Service::bind(&cfg, bridge.clone()))?;
            println!("serving on http://{}", service.local_addr());
            if let Some(p) = run_config {
                let text =
                    fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                let mut run = RunConfig::from_toml_str(&text)?;
                run.output_dir = runs_dir;
                let scenes = run.load_scenes()?;
                let factory = DefaultAgentFactory::new(&run.agents).with_bridge(bridge);
                std::thread::spawn(move || match run_benchmark_with(&run, &scenes, &factory) {
                    Ok(m) => print_manifest(&m, &run.run_dir()),
                    Err(e) => eprintln!("run failed: {e}"),
                });
            }
            rt.block_on(service.run())?;
        }
    }
    Ok(())
}
