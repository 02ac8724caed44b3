//! Agents that choose one action per step.
//!
//! Scripted baselines (random, oracle, mirror-confused) run in-process. The
//! remote adapter talks to a chat-style model endpoint and the human bridge
//! hands steps to a browser console. Only trusted agents ever see the
//! ground-truth [`Sidecar`].

mod baseline;
mod human;
mod parse;
mod remote;

use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::geometry::Action;
use crate::prompt::PromptBundle;
use crate::render::{Frame, Sidecar};

pub use baseline::{greedy_step, MirrorConfusedAgent, OracleAgent, RandomAgent, ScriptedAgent};
pub use human::{
    BridgeError, HumanAgent, HumanBridge, PostResult, SessionStatus, SessionSummary, StepView,
};
pub use parse::parse_action;
pub use remote::{
    wire_body, HttpTransport, RateLimiter, RemoteAgent, RemoteConfig, ScriptedTransport, Transport,
    FORMAT_REMINDER,
};

/// What an agent sees at one step.
#[derive(Debug, Clone, Copy)]
pub struct AgentRequest<'a> {
    pub prompt: &'a PromptBundle,
    /// Observations up to and including the current one, oldest first. Holds
    /// only the current frame unless full history is enabled; empty for agents
    /// that declare they do not look at frames.
    pub frames: &'a [Frame],
    /// Most recent actions, oldest first, truncated to the history window.
    /// `None` marks a step whose reply could not be parsed.
    pub action_history: &'a [Option<Action>],
    pub step_index: u32,
    /// Wall-clock budget for this step.
    pub timeout: Duration,
}

impl AgentRequest<'_> {
    pub fn current_frame(&self) -> Option<&Frame> {
        self.frames.last()
    }

    /// Per-step user text: the task prompt followed by the step counter and
    /// recent actions. Remote models and human players get the same text.
    pub fn user_text(&self) -> String {
        let mut s = self.prompt.task_text.clone();
        let _ = write!(s, "\n\nStep {}.", self.step_index);
        if self.action_history.is_empty() {
            s.push_str(" No actions taken yet.");
        } else {
            let list: Vec<&str> = self
                .action_history
                .iter()
                .map(|a| a.map(Action::token).unwrap_or("(invalid reply)"))
                .collect();
            let _ = write!(
                s,
                " Your most recent actions, oldest first: {}.",
                list.join(", ")
            );
        }
        s
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum AgentError {
    #[error("agent exceeded the {budget:?} budget at step {step}")]
    Timeout { step: u32, budget: Duration },
    #[error("no valid action after {attempts} replies")]
    ProtocolFailure { attempts: u32 },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("agent setup failed: {0}")]
    Setup(String),
}

pub trait Agent: Send {
    fn id(&self) -> &str;

    /// Trusted agents receive the ground-truth sidecar.
    fn trusted(&self) -> bool {
        false
    }

    /// Agents that never look at the image can skip rendering.
    fn needs_frames(&self) -> bool {
        true
    }

    /// Chooses an action. `Ok(None)` is a malformed reply that consumes the
    /// step without moving.
    fn act(
        &mut self,
        req: &AgentRequest<'_>,
        sidecar: Option<&Sidecar>,
    ) -> Result<Option<Action>, AgentError>;

    /// Called once when the episode ends, whatever the outcome.
    fn finish(&mut self, _summary: &SessionSummary) {}
}

/// Agent declaration in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentHandle {
    pub agent_id: String,
    #[serde(flatten)]
    pub kind: AgentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentKind {
    Random,
    Oracle,
    MirrorConfused,
    Remote(RemoteConfig),
    Human,
}

impl AgentHandle {
    pub fn new(agent_id: impl Into<String>, kind: AgentKind) -> Self {
        Self {
            agent_id: agent_id.into(),
            kind,
        }
    }

    /// True for agents whose behavior is a pure function of their seed.
    pub fn is_scripted(&self) -> bool {
        matches!(
            self.kind,
            AgentKind::Random | AgentKind::Oracle | AgentKind::MirrorConfused
        )
    }
}
