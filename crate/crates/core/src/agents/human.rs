//! Bridge between the episode loop and a person at the browser console.
//!
//! Each human episode owns one session. The loop publishes a step view and
//! blocks; the HTTP service reads the view and posts the chosen action back.

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, AgentRequest};
use crate::geometry::Action;
use crate::render::Sidecar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    WaitingForHuman,
    WaitingForSim,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostResult {
    Accepted,
    Stale,
    Done,
}

/// Episode result shown on the console once the session is done.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub outcome: String,
    pub distances: Vec<u32>,
    pub actions: Vec<Option<Action>>,
}

/// What the console shows. Carries exactly what a remote model would get.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepView {
    pub session_id: String,
    pub step_index: u32,
    pub prompt_text: String,
    pub frame_png_base64: String,
    pub status: SessionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<SessionSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BridgeError {
    #[error("session {0} not found")]
    SessionNotFound(String),
}

#[derive(Debug)]
struct Session {
    state: Mutex<(StepView, Option<Action>)>,
    cv: Condvar,
}

#[derive(Debug, Default)]
pub struct HumanBridge {
    sessions: Mutex<BTreeMap<String, Arc<Session>>>,
}

impl HumanBridge {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Opens a session and returns the agent that drives it. Reopening an
    /// existing id replaces the old session.
    pub fn open_session(self: &Arc<Self>, agent_id: &str, session_id: &str) -> HumanAgent {
        let view = StepView {
            session_id: session_id.to_string(),
            step_index: 0,
            prompt_text: String::new(),
            frame_png_base64: String::new(),
            status: SessionStatus::WaitingForSim,
            summary: None,
        };
        let session = Arc::new(Session {
            state: Mutex::new((view, None)),
            cv: Condvar::new(),
        });
        self.sessions
            .lock()
            .unwrap()
            .insert(session_id.to_string(), session.clone());
        HumanAgent {
            id: agent_id.to_string(),
            session,
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, BridgeError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| BridgeError::SessionNotFound(id.to_string()))
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions.lock().unwrap().keys().cloned().collect()
    }

    pub fn step_view(&self, id: &str) -> Result<StepView, BridgeError> {
        Ok(self.session(id)?.state.lock().unwrap().0.clone())
    }

    /// Submits an action for the step on display. `step_index`, when given,
    /// must match it. A post that does not answer a pending step is stale.
    pub fn post_action(
        &self,
        id: &str,
        step_index: Option<u32>,
        action: Action,
    ) -> Result<PostResult, BridgeError> {
        let session = self.session(id)?;
        let mut st = session.state.lock().unwrap();
        let (view, pending) = &mut *st;
        let result = match view.status {
            SessionStatus::Done => PostResult::Done,
            SessionStatus::WaitingForSim => PostResult::Stale,
            SessionStatus::WaitingForHuman if step_index.is_some_and(|s| s != view.step_index) => {
                PostResult::Stale
            }
            SessionStatus::WaitingForHuman => {
                *pending = Some(action);
                view.status = SessionStatus::WaitingForSim;
                PostResult::Accepted
            }
        };
        session.cv.notify_all();
        Ok(result)
    }
}

#[derive(Debug)]
pub struct HumanAgent {
    id: String,
    session: Arc<Session>,
}

impl HumanAgent {
    fn close(&self, summary: Option<SessionSummary>) {
        let mut st = self.session.state.lock().unwrap();
        if st.0.status != SessionStatus::Done || summary.is_some() {
            st.0.status = SessionStatus::Done;
            if summary.is_some() {
                st.0.summary = summary;
            }
        }
        self.session.cv.notify_all();
    }
}

impl Agent for HumanAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn act(
        &mut self,
        req: &AgentRequest<'_>,
        _sidecar: Option<&Sidecar>,
    ) -> Result<Option<Action>, AgentError> {
        let frame = req
            .current_frame()
            .map(|f| base64::engine::general_purpose::STANDARD.encode(f.encode_png()))
            .unwrap_or_default();
        let mut st = self.session.state.lock().unwrap();
        st.0.step_index = req.step_index;
        st.0.prompt_text = format!("{}\n\n{}", req.prompt.system_text, req.user_text());
        st.0.frame_png_base64 = frame;
        st.0.status = SessionStatus::WaitingForHuman;
        st.1 = None;
        let (mut st, res) = self
            .session
            .cv
            .wait_timeout_while(st, req.timeout, |s| {
                s.1.is_none() && s.0.status == SessionStatus::WaitingForHuman
            })
            .unwrap();
        match st.1.take() {
            Some(a) => Ok(Some(a)),
            None => {
                debug_assert!(res.timed_out() || st.0.status == SessionStatus::Done);
                Err(AgentError::Timeout {
                    step: req.step_index,
                    budget: req.timeout,
                })
            }
        }
    }

    fn finish(&mut self, summary: &SessionSummary) {
        self.close(Some(summary.clone()));
    }
}

impl Drop for HumanAgent {
    fn drop(&mut self) {
        self.close(None);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::canonical_scene;
    use crate::prompt::{build_prompt, Level};
    use crate::render::{render_frame, RenderConfig};
    use std::thread;
    use std::time::{Duration, Instant};

    fn wait_for_human(bridge: &HumanBridge, id: &str) -> StepView {
        let start = Instant::now();
        loop {
            let v = bridge.step_view(id).unwrap();
            if v.status == SessionStatus::WaitingForHuman {
                return v;
            }
            assert!(
                start.elapsed() < Duration::from_secs(5),
                "step never published"
            );
            thread::sleep(Duration::from_millis(2));
        }
    }

    fn step(
        agent: &mut HumanAgent,
        step: u32,
        timeout: Duration,
    ) -> Result<Option<Action>, AgentError> {
        let spec = canonical_scene();
        let prompt = build_prompt(Level::L0, &spec).unwrap();
        let frames =
            [render_frame(&spec, spec.hand_init, &RenderConfig::with_size(32, 32)).unwrap()];
        let req = AgentRequest {
            prompt: &prompt,
            frames: &frames,
            action_history: &[],
            step_index: step,
            timeout,
        };
        agent.act(&req, None)
    }

    #[test]
    fn round_trip_and_stale_second_post() {
        let bridge = HumanBridge::new();
        let mut agent = bridge.open_session("human", "s1");
        let b = bridge.clone();
        let console = thread::spawn(move || {
            let v = wait_for_human(&b, "s1");
            assert!(v.prompt_text.contains("a mirror is present"));
            assert!(!v.frame_png_base64.is_empty());
            let first = b
                .post_action("s1", Some(v.step_index), Action::PosZ)
                .unwrap();
            let second = b
                .post_action("s1", Some(v.step_index), Action::NegZ)
                .unwrap();
            (first, second)
        });
        assert_eq!(
            step(&mut agent, 0, Duration::from_secs(10)).unwrap(),
            Some(Action::PosZ)
        );
        assert_eq!(
            console.join().unwrap(),
            (PostResult::Accepted, PostResult::Stale)
        );
    }

    #[test]
    fn wrong_step_index_is_stale() {
        let bridge = HumanBridge::new();
        let mut agent = bridge.open_session("human", "s");
        let b = bridge.clone();
        let console = thread::spawn(move || {
            wait_for_human(&b, "s");
            let stale = b.post_action("s", Some(99), Action::PosX).unwrap();
            let ok = b.post_action("s", None, Action::NegX).unwrap();
            (stale, ok)
        });
        assert_eq!(
            step(&mut agent, 3, Duration::from_secs(10)).unwrap(),
            Some(Action::NegX)
        );
        assert_eq!(
            console.join().unwrap(),
            (PostResult::Stale, PostResult::Accepted)
        );
    }

    #[test]
    fn silence_times_out() {
        let bridge = HumanBridge::new();
        let mut agent = bridge.open_session("human", "s");
        let err = step(&mut agent, 0, Duration::from_millis(50)).unwrap_err();
        assert!(matches!(err, AgentError::Timeout { step: 0, .. }));
    }

    #[test]
    fn finished_session_reports_done() {
        let bridge = HumanBridge::new();
        let mut agent = bridge.open_session("human", "s");
        agent.finish(&SessionSummary {
            outcome: "success".into(),
            distances: vec![2, 1],
            actions: vec![Some(Action::PosX)],
        });
        assert_eq!(
            bridge.post_action("s", None, Action::PosX).unwrap(),
            PostResult::Done
        );
        let v = bridge.step_view("s").unwrap();
        assert_eq!(v.status, SessionStatus::Done);
        assert_eq!(v.summary.unwrap().outcome, "success");
        drop(agent);
        assert_eq!(
            bridge.step_view("s").unwrap().summary.unwrap().distances,
            vec![2, 1]
        );
    }

    #[test]
    fn unknown_session() {
        let bridge = HumanBridge::new();
        assert_eq!(
            bridge.post_action("nope", None, Action::PosX),
            Err(BridgeError::SessionNotFound("nope".into()))
        );
        assert!(bridge.step_view("nope").is_err());
    }
}
