//! Scripted reference agents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Agent, AgentError, AgentRequest};
use crate::geometry::{Action, Axis, Vec3i};
use crate::reflection::reflect_point;
use crate::render::Sidecar;

/// One greedy Manhattan step from `from` toward `to`: the axis with the
/// largest absolute delta, first in X, Y, Z order on ties. With zero delta
/// there is nothing to reduce and the agent answers `+X`.
pub fn greedy_step(from: Vec3i, to: Vec3i) -> Action {
    let delta = to - from;
    let mut best = (Axis::X, 0i32);
    for axis in Axis::ALL {
        let d = delta.get(axis);
        if d.abs() > best.1.abs() {
            best = (axis, d);
        }
    }
    match best {
        (_, 0) => Action::PosX,
        (axis, d) => Action::along(axis, d > 0),
    }
}

/// Uniform over the six actions; ignores everything it is shown.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    id: String,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        Self {
            id: id.into(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn draw(&mut self) -> Action {
        Action::ALL[self.rng.random_range(0..Action::ALL.len())]
    }
}

impl Agent for RandomAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn needs_frames(&self) -> bool {
        false
    }

    fn act(
        &mut self,
        _req: &AgentRequest<'_>,
        _sidecar: Option<&Sidecar>,
    ) -> Result<Option<Action>, AgentError> {
        Ok(Some(self.draw()))
    }
}

fn need_sidecar<'a>(id: &str, sidecar: Option<&'a Sidecar>) -> Result<&'a Sidecar, AgentError> {
    sidecar.ok_or_else(|| AgentError::Setup(format!("{id} requires trusted mode")))
}

/// Greedy descent on the true mark position.
#[derive(Debug, Clone)]
pub struct OracleAgent {
    id: String,
}

impl OracleAgent {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Agent for OracleAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn trusted(&self) -> bool {
        true
    }

    fn needs_frames(&self) -> bool {
        false
    }

    fn act(
        &mut self,
        _req: &AgentRequest<'_>,
        sidecar: Option<&Sidecar>,
    ) -> Result<Option<Action>, AgentError> {
        let s = need_sidecar(&self.id, sidecar)?;
        Ok(Some(greedy_step(s.hand_pos, s.mark_anchor)))
    }
}

/// Greedy descent on the mirror image of the mark: reaches for the body seen
/// in the mirror instead of its own.
#[derive(Debug, Clone)]
pub struct MirrorConfusedAgent {
    id: String,
}

impl MirrorConfusedAgent {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into() }
    }
}

impl Agent for MirrorConfusedAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn trusted(&self) -> bool {
        true
    }

    fn needs_frames(&self) -> bool {
        false
    }

    fn act(
        &mut self,
        _req: &AgentRequest<'_>,
        sidecar: Option<&Sidecar>,
    ) -> Result<Option<Action>, AgentError> {
        let s = need_sidecar(&self.id, sidecar)?;
        Ok(Some(greedy_step(
            s.hand_pos,
            reflect_point(s.mark_anchor, &s.mirror),
        )))
    }
}

/// Replays a fixed list of replies; `None` entries are malformed replies.
/// Repeats the last entry once the list runs out.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    id: String,
    script: Vec<Option<Action>>,
    next: usize,
}

impl ScriptedAgent {
    pub fn new(id: impl Into<String>, script: Vec<Option<Action>>) -> Self {
        Self {
            id: id.into(),
            script,
            next: 0,
        }
    }
}

impl Agent for ScriptedAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn needs_frames(&self) -> bool {
        false
    }

    fn act(
        &mut self,
        _req: &AgentRequest<'_>,
        _sidecar: Option<&Sidecar>,
    ) -> Result<Option<Action>, AgentError> {
        let i = self.next.min(self.script.len().saturating_sub(1));
        self.next += 1;
        Ok(self.script.get(i).copied().flatten())
    }
}
