//! The per-episode interaction loop and its JSON record.

use std::path::PathBuf;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentRequest, SessionSummary};
use crate::assets::Setting;
use crate::geometry::Action;
use crate::metrics::MetricSet;
use crate::prompt::{Level, PromptError, PromptTemplates};
use crate::render::{render_frame, Frame, RenderConfig, RenderError, Sidecar};
use crate::scene::{MoveOutcome, SceneSpec, SceneState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    /// Only the current frame; past actions are listed as text.
    #[default]
    LatestFrame,
    /// Every frame of the episode so far.
    FullHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub d_th: u32,
    pub step_buffer: u32,
    pub seed: u64,
    pub history_mode: HistoryMode,
    /// Number of past actions listed in each request.
    pub history_window: usize,
    pub step_timeout_secs: f64,
    pub render: RenderConfig,
    /// Directory that receives `{step}.png` for every observation.
    #[serde(skip)]
    pub frame_dir: Option<PathBuf>,
    /// Leave wall-clock timestamps out of the record.
    pub canonical: bool,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            d_th: 1,
            step_buffer: 10,
            seed: 0,
            history_mode: HistoryMode::default(),
            history_window: 8,
            step_timeout_secs: 120.0,
            render: RenderConfig::default(),
            frame_dir: None,
            canonical: false,
        }
    }
}

impl EpisodeConfig {
    pub fn step_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.step_timeout_secs.max(0.0))
    }
}

/// Step limit: the fewest unit steps that can reach the mark, plus the buffer.
pub fn max_steps_for(spec: &SceneSpec, cfg: &EpisodeConfig) -> u32 {
    spec.initial_distance() + cfg.step_buffer
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    StepLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub distances: Vec<u32>,
    /// `None` is a malformed reply that consumed the step.
    pub actions: Vec<Option<Action>>,
    pub outcome: Outcome,
    pub clamp_flags: Vec<bool>,
    pub malformed_flags: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordOutcome {
    Success,
    StepLimit,
    /// The agent failed (timeout, transport, protocol); excluded from scores.
    Invalid,
}

impl From<Outcome> for RecordOutcome {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Success => RecordOutcome::Success,
            Outcome::StepLimit => RecordOutcome::StepLimit,
        }
    }
}

impl RecordOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordOutcome::Success => "success",
            RecordOutcome::StepLimit => "step_limit",
            RecordOutcome::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFlags {
    pub clamped: Vec<bool>,
    pub malformed: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
}

/// One line of the run file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub scene_id: String,
    pub setting: Setting,
    pub level: Level,
    pub agent_id: String,
    pub d_th: u32,
    pub max_steps: u32,
    pub distances: Vec<u32>,
    pub actions: Vec<Option<Action>>,
    pub outcome: RecordOutcome,
    pub flags: StepFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
}

impl EpisodeRecord {
    pub fn is_valid(&self) -> bool {
        self.outcome != RecordOutcome::Invalid
    }

    /// The trajectory of a completed episode.
    pub fn trajectory(&self) -> Option<Trajectory> {
        let outcome = match self.outcome {
            RecordOutcome::Success => Outcome::Success,
            RecordOutcome::StepLimit => Outcome::StepLimit,
            RecordOutcome::Invalid => return None,
        };
        Some(Trajectory {
            distances: self.distances.clone(),
            actions: self.actions.clone(),
            outcome,
            clamp_flags: self.flags.clamped.clone(),
            malformed_flags: self.flags.malformed.clone(),
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Setup failures. Agent failures do not end up here; they produce an
/// invalid record instead.
#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("scene {scene}: initial distance {d0} does not exceed threshold {d_th}")]
    DegenerateScene { scene: String, d0: u32, d_th: u32 },
    #[error("writing frame {path}: {source}")]
    FrameDump {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub fn episode_id(scene_id: &str, level: Level, agent_id: &str) -> String {
    format!("{scene_id}.{level}.{agent_id}")
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn dump(dir: &Option<PathBuf>, step: u32, frame: &Frame) -> Result<(), EpisodeError> {
    let Some(dir) = dir else { return Ok(()) };
    let path = dir.join(format!("{step}.png"));
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, frame.encode_png()))
        .map_err(|source| EpisodeError::FrameDump { path, source })
}

/// Runs one episode with the built-in prompt templates.
pub fn run_episode(
    spec: &SceneSpec,
    level: Level,
    agent: &mut dyn Agent,
    cfg: &EpisodeConfig,
) -> Result<EpisodeRecord, EpisodeError> {
    run_episode_with(&PromptTemplates::default(), spec, level, agent, cfg)
}

pub fn run_episode_with(
    templates: &PromptTemplates,
    spec: &SceneSpec,
    level: Level,
    agent: &mut dyn Agent,
    cfg: &EpisodeConfig,
) -> Result<EpisodeRecord, EpisodeError> {
    let started = now_ms();
    let d0 = spec.initial_distance();
    if d0 <= cfg.d_th {
        return Err(EpisodeError::DegenerateScene {
            scene: spec.scene_id.clone(),
            d0,
            d_th: cfg.d_th,
        });
    }
    let prompt = templates.build(level, spec)?;
    let max_steps = max_steps_for(spec, cfg);
    let timeout = cfg.step_timeout();
    let wants_frames = agent.needs_frames();
    let render_any = wants_frames || cfg.frame_dir.is_some();

    let mut state = SceneState::new(spec);
    let mut distances = vec![state.distance()];
    let mut actions = Vec::new();
    let mut clamped = Vec::new();
    let mut malformed = Vec::new();
    let mut frames: Vec<Frame> = Vec::new();
    let mut failure = None;

    let outcome = loop {
        if state.distance() <= cfg.d_th {
            break Outcome::Success;
        }
        if state.step_index >= max_steps {
            break Outcome::StepLimit;
        }
        if render_any {
            let frame = render_frame(spec, state.hand_pos, &cfg.render)?;
            dump(&cfg.frame_dir, state.step_index, &frame)?;
            if wants_frames {
                if cfg.history_mode == HistoryMode::LatestFrame {
                    frames.clear();
                }
                frames.push(frame);
            }
        }
        let sidecar = agent.trusted().then(|| Sidecar {
            hand_pos: state.hand_pos,
            mark_anchor: spec.mark_anchor,
            mirror: spec.mirror,
            distance: state.distance(),
        });
        let window_start = actions.len().saturating_sub(cfg.history_window);
        let req = AgentRequest {
            prompt: &prompt,
            frames: &frames,
            action_history: &actions[window_start..],
            step_index: state.step_index,
            timeout,
        };
        let t0 = Instant::now();
        let reply = agent.act(&req, sidecar.as_ref());
        let reply = if t0.elapsed() > timeout {
            Err(crate::agents::AgentError::Timeout {
                step: state.step_index,
                budget: timeout,
            })
        } else {
            reply
        };
        match reply {
            Ok(Some(a)) => {
                let moved = state.apply_action(a);
                actions.push(Some(a));
                clamped.push(moved == MoveOutcome::ClampedAtBound);
                malformed.push(false);
            }
            Ok(None) => {
                state.skip_step();
                actions.push(None);
                clamped.push(false);
                malformed.push(true);
            }
            Err(e) => {
                failure = Some(e.to_string());
                break Outcome::StepLimit;
            }
        }
        distances.push(state.distance());
    };

    if failure.is_none() && cfg.frame_dir.is_some() {
        let frame = render_frame(spec, state.hand_pos, &cfg.render)?;
        dump(&cfg.frame_dir, state.step_index, &frame)?;
    }

    let record_outcome = if failure.is_some() {
        RecordOutcome::Invalid
    } else {
        outcome.into()
    };
    agent.finish(&SessionSummary {
        outcome: record_outcome.as_str().to_string(),
        distances: distances.clone(),
        actions: actions.clone(),
    });
    let metrics = match failure {
        None => Some(
            MetricSet::from_distances(&distances, cfg.d_th).expect("valid trajectory has steps"),
        ),
        Some(_) => None,
    };
    Ok(EpisodeRecord {
        episode_id: episode_id(&spec.scene_id, level, agent.id()),
        scene_id: spec.scene_id.clone(),
        setting: spec.setting(),
        level,
        agent_id: agent.id().to_string(),
        d_th: cfg.d_th,
        max_steps,
        distances,
        actions,
        outcome: record_outcome,
        flags: StepFlags { clamped, malformed },
        metrics,
        invalid_reason: failure,
        timestamps: (!cfg.canonical).then(|| Timestamps {
            started_unix_ms: started,
            finished_unix_ms: now_ms(),
        }),
    })
}
