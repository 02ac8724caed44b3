//! Trajectory metrics, aggregation and Cognitive Stability.
//!
//! All per-episode metrics are functions of the distance trajectory
//! `d_0..d_T` and the success threshold. Completion ratios are set to 1 on
//! success, because the loop stops at the first `d <= d_th` and the last
//! distance may undershoot the threshold.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assets::Setting;
use crate::prompt::Level;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error("initial distance {d0} does not exceed threshold {d_th}")]
    DegenerateStart { d0: u32, d_th: u32 },
    #[error("agent {agent}: scene {scene} has no score at level {level}")]
    IncompleteGrid {
        agent: String,
        scene: String,
        level: Level,
    },
    #[error("agent {0} has no scores")]
    NoScores(String),
    #[error("duplicate score for agent {agent}, level {level}, scene {scene}")]
    DuplicateCell {
        agent: String,
        level: Level,
        scene: String,
    },
}

fn last(distances: &[u32]) -> Result<u32, MetricError> {
    distances
        .last()
        .copied()
        .ok_or(MetricError::EmptyTrajectory)
}

fn completion_base(distances: &[u32], d_th: u32) -> Result<u32, MetricError> {
    let d0 = *distances.first().ok_or(MetricError::EmptyTrajectory)?;
    if d0 <= d_th {
        return Err(MetricError::DegenerateStart { d0, d_th });
    }
    Ok(d0)
}

/// 1 if the final distance is within the threshold, else 0.
pub fn tsr(distances: &[u32], d_th: u32) -> Result<f64, MetricError> {
    Ok(if last(distances)? <= d_th { 1.0 } else { 0.0 })
}

/// Fraction of steps that strictly reduce the distance.
pub fn sir(distances: &[u32]) -> Result<f64, MetricError> {
    let steps = distances.len().saturating_sub(1);
    if steps == 0 {
        return Err(MetricError::EmptyTrajectory);
    }
    let improving = distances.windows(2).filter(|w| w[1] < w[0]).count();
    Ok(improving as f64 / steps as f64)
}

/// `1 - (d - d_th) / (d_0 - d_th)` written as `(d_0 - d) / (d_0 - d_th)`,
/// so the result is a single correctly rounded quotient.
fn completion(d0: u32, d: u32, d_th: u32) -> f64 {
    (d0 as i64 - d as i64) as f64 / (d0 - d_th) as f64
}

/// Final Completion Ratio.
pub fn fcr(distances: &[u32], d_th: u32) -> Result<f64, MetricError> {
    let d0 = completion_base(distances, d_th)?;
    let dt = last(distances)?;
    Ok(if dt <= d_th {
        1.0
    } else {
        completion(d0, dt, d_th)
    })
}

/// Peak Completion Ratio, from the closest approach over the whole trajectory.
pub fn pcr(distances: &[u32], d_th: u32) -> Result<f64, MetricError> {
    let d0 = completion_base(distances, d_th)?;
    if last(distances)? <= d_th {
        return Ok(1.0);
    }
    let dmin = *distances.iter().min().expect("non-empty");
    Ok(completion(d0, dmin, d_th))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub tsr: f64,
    pub sir: f64,
    pub fcr: f64,
    pub pcr: f64,
    pub avg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreField {
    Tsr,
    Sir,
    Fcr,
    Pcr,
    #[default]
    Avg,
}

impl MetricSet {
    pub fn new(tsr: f64, sir: f64, fcr: f64, pcr: f64) -> Self {
        Self {
            tsr,
            sir,
            fcr,
            pcr,
            avg: (tsr + sir + fcr + pcr) / 4.0,
        }
    }

    pub fn from_distances(distances: &[u32], d_th: u32) -> Result<Self, MetricError> {
        Ok(Self::new(
            tsr(distances, d_th)?,
            sir(distances)?,
            fcr(distances, d_th)?,
            pcr(distances, d_th)?,
        ))
    }

    pub fn get(&self, field: ScoreField) -> f64 {
        match field {
            ScoreField::Tsr => self.tsr,
            ScoreField::Sir => self.sir,
            ScoreField::Fcr => self.fcr,
            ScoreField::Pcr => self.pcr,
            ScoreField::Avg => self.avg,
        }
    }

    /// Unweighted mean of each metric; `avg` is the mean of the four means.
    pub fn mean<'a>(sets: impl IntoIterator<Item = &'a MetricSet>) -> Option<MetricSet> {
        let mut n = 0usize;
        let mut acc = [0.0f64; 4];
        for s in sets {
            n += 1;
            acc[0] += s.tsr;
            acc[1] += s.sir;
            acc[2] += s.fcr;
            acc[3] += s.pcr;
        }
        (n > 0).then(|| {
            let k = n as f64;
            MetricSet::new(acc[0] / k, acc[1] / k, acc[2] / k, acc[3] / k)
        })
    }
}

/// Setting column group of a results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    Human,
    Robot,
    Overall,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Human, Group::Robot, Group::Overall];

    pub fn includes(self, s: Setting) -> bool {
        match self {
            Group::Human => s == Setting::Human,
            Group::Robot => s == Setting::Robot,
            Group::Overall => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Human => "Human",
            Group::Robot => "Robot",
            Group::Overall => "Overall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metrics: MetricSet,
    pub episodes: usize,
}

/// Per-episode scores keyed by (agent, level, scene). Iteration follows key
/// order, so every aggregate is independent of insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreGrid {
    cells: BTreeMap<(String, Level, String), (Setting, MetricSet)>,
}

impl ScoreGrid {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        agent: &str,
        level: Level,
        scene: &str,
        setting: Setting,
        metrics: MetricSet,
    ) -> Result<(), MetricError> {
        let key = (agent.to_string(), level, scene.to_string());
        if self.cells.contains_key(&key) {
            return Err(MetricError::DuplicateCell {
                agent: key.0,
                level,
                scene: key.2,
            });
        }
        self.cells.insert(key, (setting, metrics));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, agent: &str, level: Level, scene: &str) -> Option<&MetricSet> {
        self.cells
            .get(&(agent.to_string(), level, scene.to_string()))
            .map(|(_, m)| m)
    }

    pub fn agents(&self) -> BTreeSet<&str> {
        self.cells.keys().map(|k| k.0.as_str()).collect()
    }

    pub fn levels(&self) -> BTreeSet<Level> {
        self.cells.keys().map(|k| k.1).collect()
    }

    fn scenes_of(&self, agent: &str) -> BTreeSet<&str> {
        self.cells
            .keys()
            .filter(|k| k.0 == agent)
            .map(|k| k.2.as_str())
            .collect()
    }

    /// Mean over the episodes of `agent` at `level` in `group`. `Overall`
    /// pools every episode, so it is weighted by episode count per setting.
    pub fn aggregate(&self, agent: &str, level: Level, group: Group) -> Option<Aggregate> {
        let sets: Vec<&MetricSet> = self
            .cells
            .iter()
            .filter(|((a, l, _), (s, _))| a == agent && *l == level && group.includes(*s))
            .map(|(_, (_, m))| m)
            .collect();
        MetricSet::mean(sets.iter().copied()).map(|metrics| Aggregate {
            metrics,
            episodes: sets.len(),
        })
    }

    /// Mean across levels of the per-level aggregate for `group`.
    pub fn level_mean(&self, agent: &str, levels: &[Level], group: Group) -> Option<MetricSet> {
        let per_level: Vec<MetricSet> = levels
            .iter()
            .filter_map(|&l| self.aggregate(agent, l, group))
            .map(|a| a.metrics)
            .collect();
        MetricSet::mean(&per_level)
    }

    /// Ranking key: mean over the given levels of the Overall average.
    pub fn ranking_key(&self, agent: &str, levels: &[Level]) -> Option<f64> {
        self.level_mean(agent, levels, Group::Overall)
            .map(|m| m.avg)
    }

    /// Agents ordered by ranking key, best first; ties by agent id.
    pub fn ranking(&self, levels: &[Level]) -> Vec<(String, f64)> {
        let mut rows: Vec<(String, f64)> = self
            .agents()
            .into_iter()
            .filter_map(|a| self.ranking_key(a, levels).map(|k| (a.to_string(), k)))
            .collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        rows
    }
}

fn sign(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Average over scenes of the number of level-to-level drops minus rises in
/// the chosen score. Lies in `[-3, 3]`; needs all four levels for each scene.
pub fn cognitive_stability(
    grid: &ScoreGrid,
    agent: &str,
    field: ScoreField,
) -> Result<f64, MetricError> {
    let scenes = grid.scenes_of(agent);
    if scenes.is_empty() {
        return Err(MetricError::NoScores(agent.to_string()));
    }
    let mut total = 0i64;
    for scene in &scenes {
        let mut s = [0.0f64; 4];
        for (i, level) in Level::ALL.into_iter().enumerate() {
            s[i] = grid
                .get(agent, level, scene)
                .ok_or_else(|| MetricError::IncompleteGrid {
                    agent: agent.to_string(),
                    scene: scene.to_string(),
                    level,
                })?
                .get(field);
        }
        total += s.windows(2).map(|w| sign(w[0] - w[1]) as i64).sum::<i64>();
    }
    Ok(total as f64 / scenes.len() as f64)
}
