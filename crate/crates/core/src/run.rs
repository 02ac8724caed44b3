//! Benchmark orchestration: every (scene, level, agent) cell, a bounded
//! worker pool, and an append-only JSON-lines run file.
//!
//! Records are written in cell order regardless of which worker finishes
//! first, so a run with scripted agents is byte-for-byte reproducible. On a
//! rerun with the same run id, cells already present in the file are skipped.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{
    Agent, AgentError, AgentHandle, AgentKind, HttpTransport, HumanBridge, MirrorConfusedAgent,
    OracleAgent, RandomAgent, RateLimiter, RemoteAgent, Transport,
};
use crate::episode::{
    episode_id, run_episode_with, EpisodeConfig, EpisodeError, EpisodeRecord, RecordOutcome,
    StepFlags,
};
use crate::generate::{generate_scenes, GenerateError, SceneConfig};
use crate::prompt::{Level, PromptError, PromptTemplates};
use crate::scene::{SceneDocError, SceneDocument, SceneSpec};

pub const RECORDS_FILE: &str = "episodes.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENES_FILE: &str = "scenes.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    /// Parent directory; the run lives in `output_dir/run_id`.
    pub output_dir: PathBuf,
    /// Scene document to evaluate. When absent, scenes are generated from
    /// `scene_config` with `scene_seed`.
    pub scene_file: Option<PathBuf>,
    pub scene_seed: u64,
    pub scene_config: SceneConfig,
    pub levels: Vec<Level>,
    pub agents: Vec<AgentHandle>,
    /// Root seed; each episode derives its own from this and its id.
    pub seed: u64,
    pub episode: EpisodeConfig,
    pub parallelism: usize,
    pub dump_frames: bool,
    /// Directory with `system.txt` and `task.txt` overriding the built-ins.
    pub prompts_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run_id: "run".into(),
            output_dir: PathBuf::from("runs"),
            scene_file: None,
            scene_seed: 0,
            scene_config: SceneConfig::default(),
            levels: Level::ALL.to_vec(),
            agents: vec![
                AgentHandle::new("oracle", AgentKind::Oracle),
                AgentHandle::new("random", AgentKind::Random),
            ],
            seed: 0,
            episode: EpisodeConfig::default(),
            parallelism: 4,
            dump_frames: false,
            prompts_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, RunError> {
        toml::from_str(s).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.run_id)
    }

    fn check(&self) -> Result<(), RunError> {
        if self.run_id.is_empty()
            || self.run_id.contains(['/', '\\'])
            || self.run_id.starts_with('.')
        {
            return Err(RunError::Config(format!(
                "invalid run id {:?}",
                self.run_id
            )));
        }
        if self.levels.is_empty() || self.agents.is_empty() {
            return Err(RunError::Config(
                "at least one level and one agent are required".into(),
            ));
        }
        if self.episode.d_th < 1 {
            return Err(RunError::Config("d_th must be at least 1".into()));
        }
        let mut ids = BTreeSet::new();
        for a in &self.agents {
            if a.agent_id.is_empty() || !ids.insert(a.agent_id.as_str()) {
                return Err(RunError::Config(format!(
                    "agent id {:?} is empty or repeated",
                    a.agent_id
                )));
            }
        }
        Ok(())
    }

    /// Scenes named by the config: loaded from file or generated.
    pub fn load_scenes(&self) -> Result<Vec<SceneSpec>, RunError> {
        match &self.scene_file {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| RunError::io(p, e))?;
                Ok(SceneDocument::from_json(&text)?.scenes)
            }
            None => Ok(generate_scenes(
                &self.scene_config.pool(),
                &self.scene_config.sampling,
                self.scene_seed,
            )?),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Scenes(#[from] GenerateError),
    #[error(transparent)]
    SceneDoc(#[from] SceneDocError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {msg}")]
    Records {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

impl RunError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Builds a fresh agent for one episode.
pub trait AgentFactory: Sync {
    fn make(
        &self,
        handle: &AgentHandle,
        episode_id: &str,
        seed: u64,
    ) -> Result<Box<dyn Agent>, AgentError>;
}

/// Builds the agent kinds of [`AgentKind`]. Remote agents with the same id
/// share one rate limiter; human agents need a bridge.
pub struct DefaultAgentFactory {
    transport: Arc<dyn Transport>,
    limiters: HashMap<String, Arc<RateLimiter>>,
    bridge: Option<Arc<HumanBridge>>,
}

impl DefaultAgentFactory {
    pub fn new(agents: &[AgentHandle]) -> Self {
        Self::with_transport(agents, Arc::new(HttpTransport))
    }

    pub fn with_transport(agents: &[AgentHandle], transport: Arc<dyn Transport>) -> Self {
        let limiters = agents
            .iter()
            .filter_map(|a| match &a.kind {
                AgentKind::Remote(c) => c
                    .rate_limit_per_minute
                    .map(|r| (a.agent_id.clone(), Arc::new(RateLimiter::per_minute(r)))),
                _ => None,
            })
            .collect();
        Self {
            transport,
            limiters,
            bridge: None,
        }
    }

    pub fn with_bridge(mut self, bridge: Arc<HumanBridge>) -> Self {
        self.bridge = Some(bridge);
        self
    }
}

impl AgentFactory for DefaultAgentFactory {
    fn make(
        &self,
        h: &AgentHandle,
        episode_id: &str,
        seed: u64,
    ) -> Result<Box<dyn Agent>, AgentError> {
        let id = h.agent_id.as_str();
        Ok(match &h.kind {
            AgentKind::Random => Box::new(RandomAgent::new(id, seed)),
            AgentKind::Oracle => Box::new(OracleAgent::new(id)),
            AgentKind::MirrorConfused => Box::new(MirrorConfusedAgent::new(id)),
            AgentKind::Remote(cfg) => Box::new(RemoteAgent::new(
                id,
                cfg.clone(),
                self.transport.clone(),
                self.limiters.get(id).cloned(),
            )?),
            AgentKind::Human => {
                let bridge = self.bridge.as_ref().ok_or_else(|| {
                    AgentError::Setup("human agents need the console service".into())
                })?;
                Box::new(bridge.open_session(id, episode_id))
            }
        })
    }
}

/// Per-episode seed: the first eight bytes of SHA-256 over the root seed and
/// the episode id.
pub fn episode_seed(root: u64, episode_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(episode_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub tool_version: String,
    pub config: RunConfig,
    pub scene_count: usize,
    /// SHA-256 of the scene document written next to the records.
    pub scenes_sha256: String,
    pub cells: usize,
    pub executed: usize,
    pub skipped: usize,
    pub invalid: usize,
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

struct Cell<'a> {
    scene: &'a SceneSpec,
    level: Level,
    agent: &'a AgentHandle,
    episode_id: String,
}

/// Ids already in a run file. A final line without its newline is the
/// remains of an interrupted write and is cut off.
fn recorded_ids(path: &Path) -> Result<BTreeSet<String>, RunError> {
    let mut ids = BTreeSet::new();
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(ids);
    };
    let complete = match text.rfind('\n') {
        Some(i) => i + 1,
        None => 0,
    };
    if complete < text.len() {
        tracing::warn!(path = %path.display(), "dropping incomplete final record");
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|e| RunError::io(path, e))?;
        f.set_len(complete as u64)
            .map_err(|e| RunError::io(path, e))?;
    }
    for (i, line) in text[..complete].lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord = serde_json::from_str(line).map_err(|e| RunError::Records {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        ids.insert(rec.episode_id);
    }
    Ok(ids)
}

fn invalid_record(cell: &Cell<'_>, cfg: &EpisodeConfig, reason: String) -> EpisodeRecord {
    let d0 = cell.scene.initial_distance();
    EpisodeRecord {
        episode_id: cell.episode_id.clone(),
        scene_id: cell.scene.scene_id.clone(),
        setting: cell.scene.setting(),
        level: cell.level,
        agent_id: cell.agent.agent_id.clone(),
        d_th: cfg.d_th,
        max_steps: crate::episode::max_steps_for(cell.scene, cfg),
        distances: vec![d0],
        actions: Vec::new(),
        outcome: RecordOutcome::Invalid,
        flags: StepFlags {
            clamped: Vec::new(),
            malformed: Vec::new(),
        },
        metrics: None,
        invalid_reason: Some(reason),
        timestamps: None,
    }
}

/// Loads scenes and runs with the default agent factory.
pub fn run_benchmark(cfg: &RunConfig) -> Result<RunManifest, RunError> {
    let scenes = cfg.load_scenes()?;
    run_benchmark_with(cfg, &scenes, &DefaultAgentFactory::new(&cfg.agents))
}

pub fn run_benchmark_with(
    cfg: &RunConfig,
    scenes: &[SceneSpec],
    factory: &dyn AgentFactory,
) -> Result<RunManifest, RunError> {
    cfg.check()?;
    let started = now_ms();
    for s in scenes {
        s.check_structure(cfg.episode.d_th)
            .map_err(|e| RunError::Config(e.to_string()))?;
    }
    let templates = match &cfg.prompts_dir {
        Some(d) => PromptTemplates::load_dir(d)?,
        None => PromptTemplates::default(),
    };
    let run_dir = cfg.run_dir();
    fs::create_dir_all(&run_dir).map_err(|e| RunError::io(&run_dir, e))?;

    let doc = SceneDocument::new(cfg.scene_seed, scenes.to_vec()).to_json();
    let scenes_path = run_dir.join(SCENES_FILE);
    fs::write(&scenes_path, &doc).map_err(|e| RunError::io(&scenes_path, e))?;
    let scenes_sha256 = format!("{:x}", Sha256::digest(doc.as_bytes()));

    let mut cells = Vec::new();
    for scene in scenes {
        for &level in &cfg.levels {
            for agent in &cfg.agents {
                cells.push(Cell {
                    scene,
                    level,
                    agent,
                    episode_id: episode_id(&scene.scene_id, level, &agent.agent_id),
                });
            }
        }
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = cells.iter().find(|c| !seen.insert(c.episode_id.as_str())) {
        return Err(RunError::Config(format!(
            "duplicate episode id {}",
            dup.episode_id
        )));
    }

    let records_path = run_dir.join(RECORDS_FILE);
    let done = recorded_ids(&records_path)?;
    let pending: Vec<&Cell<'_>> = cells
        .iter()
        .filter(|c| !done.contains(&c.episode_id))
        .collect();
    let skipped = cells.len() - pending.len();
    tracing::info!(run = %cfg.run_id, cells = cells.len(), skipped, "starting run");

    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&records_path)
        .map_err(|e| RunError::io(&records_path, e))?;
    let mut out = BufWriter::new(file);
    let mut invalid = 0usize;

    let next = AtomicUsize::new(0);
    let workers = cfg.parallelism.max(1).min(pending.len().max(1));
    let result: Result<(), RunError> = std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, Result<EpisodeRecord, EpisodeError>)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending, templates, run_dir) = (&next, &pending, &templates, &run_dir);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = pending.get(i) else { break };
                let res = run_cell(cfg, cell, templates, factory, run_dir);
                if tx.send((i, res)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // reorder buffer: write strictly in cell order
        let mut buffer = BTreeMap::new();
        let mut written = 0usize;
        for (i, res) in rx {
            buffer.insert(i, res);
            while let Some(res) = buffer.remove(&written) {
                let rec = match res {
                    Ok(r) => r,
                    Err(e) => {
                        next.store(pending.len(), Ordering::Relaxed);
                        return Err(e.into());
                    }
                };
                if !rec.is_valid() {
                    invalid += 1;
                    tracing::warn!(episode = %rec.episode_id, reason = ?rec.invalid_reason, "invalid episode");
                }
                writeln!(out, "{}", rec.to_json_line())
                    .and_then(|_| out.flush())
                    .map_err(|e| RunError::io(&records_path, e))?;
                written += 1;
            }
        }
        Ok(())
    });
    result?;

    let manifest = RunManifest {
        run_id: cfg.run_id.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        scene_count: scenes.len(),
        scenes_sha256,
        cells: cells.len(),
        executed: pending.len(),
        skipped,
        invalid,
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
    };
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, text).map_err(|e| RunError::io(&manifest_path, e))?;
    Ok(manifest)
}

fn run_cell(
    cfg: &RunConfig,
    cell: &Cell<'_>,
    templates: &PromptTemplates,
    factory: &dyn AgentFactory,
    run_dir: &Path,
) -> Result<EpisodeRecord, EpisodeError> {
    let seed = episode_seed(cfg.seed, &cell.episode_id);
    let ep_cfg = EpisodeConfig {
        seed,
        frame_dir: cfg
            .dump_frames
            .then(|| run_dir.join("frames").join(&cell.episode_id)),
        ..cfg.episode.clone()
    };
    let mut agent = match factory.make(cell.agent, &cell.episode_id, seed) {
        Ok(a) => a,
        Err(e) => return Ok(invalid_record(cell, &ep_cfg, e.to_string())),
    };
    let rec = run_episode_with(templates, cell.scene, cell.level, agent.as_mut(), &ep_cfg)?;
    tracing::debug!(episode = %rec.episode_id, outcome = rec.outcome.as_str(), "episode done");
    Ok(rec)
}

/// Reads a manifest back.
pub fn read_manifest(run_dir: &Path) -> Result<RunManifest, RunError> {
    let path = run_dir.join(MANIFEST_FILE);
    let f = File::open(&path).map_err(|e| RunError::io(&path, e))?;
    serde_json::from_reader(f).map_err(|e| RunError::Records {
        path,
        line: 0,
        msg: e.to_string(),
    })
}
