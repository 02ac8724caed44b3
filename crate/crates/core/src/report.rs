//! Result tables derived from a run file.
//!
//! Reports are never stored; they are recomputed from the JSON-lines records
//! every time, with per-episode metrics recomputed from the distances.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::episode::EpisodeRecord;
use crate::metrics::{cognitive_stability, Group, MetricError, MetricSet, ScoreField, ScoreGrid};
use crate::prompt::Level;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("episode {episode}: {source}")]
    Metric {
        episode: String,
        #[source]
        source: MetricError,
    },
}

/// Parses a run file. Any malformed line is an error naming its line number.
pub fn parse_records(text: &str) -> Result<Vec<EpisodeRecord>, ReportError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line).map_err(|e| ReportError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_records(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub agent: String,
    pub human: Option<MetricSet>,
    pub robot: Option<MetricSet>,
    pub overall: Option<MetricSet>,
    pub episodes: usize,
}

impl ReportRow {
    pub fn group(&self, g: Group) -> Option<&MetricSet> {
        match g {
            Group::Human => self.human.as_ref(),
            Group::Robot => self.robot.as_ref(),
            Group::Overall => self.overall.as_ref(),
        }
    }

    fn sort_key(&self) -> f64 {
        self.overall.map(|m| m.avg).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Agents × (Human | Robot | Overall) × (TSR, SIR, FCR, PCR, AVG).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportTable {
    pub title: String,
    /// `None` for the table averaged over levels.
    pub level: Option<Level>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSettingRow {
    /// `None` for the mean over levels.
    pub level: Option<Level>,
    pub human: Option<f64>,
    pub robot: Option<f64>,
    pub overall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub agent: String,
    pub cognitive_stability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub levels: Vec<Level>,
    pub per_level: Vec<ReportTable>,
    pub averaged: ReportTable,
    /// Mean AVG over agents, by level and setting.
    pub level_setting: Vec<LevelSettingRow>,
    pub stability_field: ScoreField,
    pub stability: Vec<StabilityRow>,
    pub episodes: usize,
    pub invalid_excluded: usize,
}

fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| {
        b.sort_key()
            .total_cmp(&a.sort_key())
            .then_with(|| a.agent.cmp(&b.agent))
    });
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut n, mut s) = (0usize, 0.0);
    for x in xs {
        n += 1;
        s += x;
    }
    (n > 0).then(|| s / n as f64)
}

/// Aggregates valid records. An empty `levels` means all four.
pub fn make_report(
    records: &[EpisodeRecord],
    levels: &[Level],
    field: ScoreField,
) -> Result<Report, ReportError> {
    let levels: Vec<Level> = if levels.is_empty() {
        Level::ALL.to_vec()
    } else {
        let mut l = levels.to_vec();
        l.sort();
        l.dedup();
        l
    };
    let mut grid = ScoreGrid::new();
    let mut invalid = 0;
    for r in records {
        if !r.is_valid() {
            invalid += 1;
            continue;
        }
        let err = |source| ReportError::Metric {
            episode: r.episode_id.clone(),
            source,
        };
        let m = MetricSet::from_distances(&r.distances, r.d_th).map_err(err)?;
        grid.insert(&r.agent_id, r.level, &r.scene_id, r.setting, m)
            .map_err(err)?;
    }
    let agents: Vec<String> = grid.agents().into_iter().map(str::to_string).collect();

    let per_level: Vec<ReportTable> = levels
        .iter()
        .map(|&level| {
            let mut rows: Vec<ReportRow> = agents
                .iter()
                .filter_map(|a| {
                    let agg = Group::ALL.map(|g| grid.aggregate(a, level, g));
                    agg[2].map(|overall| ReportRow {
                        agent: a.clone(),
                        human: agg[0].map(|x| x.metrics),
                        robot: agg[1].map(|x| x.metrics),
                        overall: Some(overall.metrics),
                        episodes: overall.episodes,
                    })
                })
                .collect();
            sort_rows(&mut rows);
            ReportTable {
                title: format!("Level {}", level.index()),
                level: Some(level),
                rows,
            }
        })
        .collect();

    let mut avg_rows: Vec<ReportRow> = agents
        .iter()
        .filter_map(|a| {
            let overall = grid.level_mean(a, &levels, Group::Overall)?;
            let episodes = levels
                .iter()
                .filter_map(|&l| grid.aggregate(a, l, Group::Overall))
                .map(|x| x.episodes)
                .sum();
            Some(ReportRow {
                agent: a.clone(),
                human: grid.level_mean(a, &levels, Group::Human),
                robot: grid.level_mean(a, &levels, Group::Robot),
                overall: Some(overall),
                episodes,
            })
        })
        .collect();
    sort_rows(&mut avg_rows);
    let averaged = ReportTable {
        title: "Average over levels".into(),
        level: None,
        rows: avg_rows,
    };

    let mut level_setting: Vec<LevelSettingRow> = per_level
        .iter()
        .map(|t| {
            let col = |g| mean(t.rows.iter().filter_map(|r| r.group(g)).map(|m| m.avg));
            LevelSettingRow {
                level: t.level,
                human: col(Group::Human),
                robot: col(Group::Robot),
                overall: col(Group::Overall),
            }
        })
        .collect();
    let avg_col = |f: fn(&LevelSettingRow) -> Option<f64>| mean(level_setting.iter().filter_map(f));
    let avg_row = LevelSettingRow {
        level: None,
        human: avg_col(|r| r.human),
        robot: avg_col(|r| r.robot),
        overall: avg_col(|r| r.overall),
    };
    level_setting.push(avg_row);

    let mut stability: Vec<StabilityRow> = agents
        .iter()
        .map(|a| match cognitive_stability(&grid, a, field) {
            Ok(cs) => StabilityRow {
                agent: a.clone(),
                cognitive_stability: Some(cs),
                note: None,
            },
            Err(e) => StabilityRow {
                agent: a.clone(),
                cognitive_stability: None,
                note: Some(e.to_string()),
            },
        })
        .collect();
    stability.sort_by(|a, b| {
        let k = |r: &StabilityRow| r.cognitive_stability.unwrap_or(f64::NEG_INFINITY);
        k(b).total_cmp(&k(a)).then_with(|| a.agent.cmp(&b.agent))
    });

    Ok(Report {
        levels,
        per_level,
        averaged,
        level_setting,
        stability_field: field,
        stability,
        episodes: records.len() - invalid,
        invalid_excluded: invalid,
    })
}

const METRICS: [&str; 5] = ["TSR", "SIR", "FCR", "PCR", "AVG"];

fn values(m: &MetricSet) -> [f64; 5] {
    [m.tsr, m.sir, m.fcr, m.pcr, m.avg]
}

impl Report {
    /// One row per agent × level × setting, plus `avg` rows for the table
    /// averaged over levels.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("agent,level,setting,TSR,SIR,FCR,PCR,AVG,episodes\n");
        for t in self.per_level.iter().chain(std::iter::once(&self.averaged)) {
            let level = t
                .level
                .map(|l| l.index().to_string())
                .unwrap_or_else(|| "avg".into());
            for r in &t.rows {
                for g in Group::ALL {
                    if let Some(m) = r.group(g) {
                        let v = values(m);
                        let _ = writeln!(
                            s,
                            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                            csv_field(&r.agent),
                            level,
                            g.name(),
                            v[0],
                            v[1],
                            v[2],
                            v[3],
                            v[4],
                            r.episodes
                        );
                    }
                }
            }
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        for t in std::iter::once(&self.averaged).chain(&self.per_level) {
            let _ = writeln!(s, "## {}\n", t.title);
            markdown_table(&mut s, t);
            s.push('\n');
        }

        s.push_str("## Average AVG across agents by level and setting\n\n");
        s.push_str("| Level | Human | Robot | Overall |\n|---|---:|---:|---:|\n");
        for r in &self.level_setting {
            let label = r
                .level
                .map(|l| l.index().to_string())
                .unwrap_or_else(|| "**AVG**".into());
            let _ = writeln!(
                s,
                "| {label} | {} | {} | {} |",
                cell(r.human),
                cell(r.robot),
                cell(r.overall)
            );
        }
        s.push('\n');

        let field = format!("{:?}", self.stability_field).to_uppercase();
        let _ = writeln!(s, "## Cognitive Stability ranking (score: {field})\n");
        s.push_str("| Rank | Agent | CS |\n|---:|---|---:|\n");
        for (i, r) in self.stability.iter().enumerate() {
            let cs = match (r.cognitive_stability, &r.note) {
                (Some(v), _) => format!("{v:.3}"),
                (None, Some(n)) => format!("n/a ({n})"),
                (None, None) => "n/a".into(),
            };
            let _ = writeln!(s, "| {} | {} | {} |", i + 1, r.agent, cs);
        }
        s.push('\n');
        let _ = writeln!(
            s,
            "{} valid episodes; {} invalid episodes excluded.",
            self.episodes, self.invalid_excluded
        );
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
}

/// Best value per column in bold, second best in italics.
fn markdown_table(s: &mut String, t: &ReportTable) {
    s.push_str("| Agent |");
    for g in Group::ALL {
        for m in METRICS {
            let _ = write!(s, " {} {m} |", g.name());
        }
    }
    s.push_str(" Episodes |\n|---|");
    s.push_str(&"---:|".repeat(15));
    s.push_str("---:|\n");

    let mut cols: Vec<Vec<Option<f64>>> = vec![Vec::new(); 15];
    for r in &t.rows {
        for (gi, g) in Group::ALL.into_iter().enumerate() {
            let v = r.group(g).map(values);
            for k in 0..5 {
                cols[gi * 5 + k].push(v.map(|v| v[k]));
            }
        }
    }
    let rank = |col: &[Option<f64>], x: f64| {
        let mut distinct: Vec<f64> = col
            .iter()
            .flatten()
            .map(|v| (v * 1000.0).round() / 1000.0)
            .collect();
        distinct.sort_by(|a, b| b.total_cmp(a));
        distinct.dedup();
        let x = (x * 1000.0).round() / 1000.0;
        distinct.iter().position(|v| *v == x)
    };
    for (ri, r) in t.rows.iter().enumerate() {
        let _ = write!(s, "| {} |", r.agent);
        for col in &cols {
            let text = match col[ri] {
                None => "-".to_string(),
                Some(x) if t.rows.len() > 1 => match rank(col, x) {
                    Some(0) => format!("**{x:.3}**"),
                    Some(1) => format!("_{x:.3}_"),
                    _ => format!("{x:.3}"),
                },
                Some(x) => format!("{x:.3}"),
            };
            let _ = write!(s, " {text} |");
        }
        let _ = writeln!(s, " {} |", r.episodes);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets::Setting;
    use crate::episode::{RecordOutcome, StepFlags};

    fn rec(
        agent: &str,
        level: Level,
        scene: &str,
        setting: Setting,
        distances: Vec<u32>,
    ) -> EpisodeRecord {
        let steps = distances.len() - 1;
        let outcome = if *distances.last().unwrap() <= 1 {
            RecordOutcome::Success
        } else {
            RecordOutcome::StepLimit
        };
        EpisodeRecord {
            episode_id: format!("{scene}.{level}.{agent}"),
            scene_id: scene.into(),
            setting,
            level,
            agent_id: agent.into(),
            d_th: 1,
            max_steps: 20,
            metrics: MetricSet::from_distances(&distances, 1).ok(),
            distances,
            actions: vec![None; steps],
            outcome,
            flags: StepFlags {
                clamped: vec![false; steps],
                malformed: vec![true; steps],
            },
            invalid_reason: None,
            timestamps: None,
        }
    }

    fn sample() -> Vec<EpisodeRecord> {
        let mut v = Vec::new();
        for l in Level::ALL {
            v.push(rec("good", l, "h", Setting::Human, vec![3, 2, 1]));
            v.push(rec("good", l, "r", Setting::Robot, vec![3, 2, 1]));
            v.push(rec("bad", l, "h", Setting::Human, vec![3, 4, 5]));
            v.push(rec("bad", l, "r", Setting::Robot, vec![3, 2, 3]));
        }
        let mut broken = rec("bad", Level::L0, "x", Setting::Human, vec![3]);
        broken.outcome = RecordOutcome::Invalid;
        broken.invalid_reason = Some("timeout".into());
        v.push(broken);
        v
    }

    #[test]
    fn tables_and_ranking() {
        let r = make_report(&sample(), &[], ScoreField::Avg).unwrap();
        assert_eq!(r.per_level.len(), 4);
        assert_eq!(r.invalid_excluded, 1);
        assert_eq!(r.averaged.rows[0].agent, "good");
        let good = &r.averaged.rows[0];
        assert_eq!(good.overall.unwrap(), MetricSet::new(1.0, 1.0, 1.0, 1.0));
        assert_eq!(good.episodes, 8);
        let bad = &r.averaged.rows[1];
        // human [3,4,5]: sir 0, fcr (3-5)/2 = -1, pcr 0
        assert_eq!(bad.human.unwrap(), MetricSet::new(0.0, 0.0, -1.0, 0.0));
        // robot [3,2,3]: sir 1/2, fcr 0, pcr 1/2
        assert_eq!(bad.robot.unwrap(), MetricSet::new(0.0, 0.5, 0.0, 0.5));
        assert_eq!(r.level_setting.len(), 5);
        assert_eq!(r.stability.len(), 2);
        assert!(r
            .stability
            .iter()
            .all(|s| s.cognitive_stability == Some(0.0)));
    }

    #[test]
    fn level_filter() {
        let r = make_report(&sample(), &[Level::L2], ScoreField::Avg).unwrap();
        assert_eq!(r.per_level.len(), 1);
        assert_eq!(r.per_level[0].level, Some(Level::L2));
    }

    #[test]
    fn csv_shape() {
        let r = make_report(&sample(), &[], ScoreField::Avg).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "agent,level,setting,TSR,SIR,FCR,PCR,AVG,episodes"
        );
        // 5 tables × 2 agents × 3 groups
        assert_eq!(lines.count(), 30);
        assert!(csv.contains("good,avg,Overall,1.000000,1.000000,1.000000,1.000000,1.000000,8"));
    }

    #[test]
    fn markdown_mentions_exclusions_and_highlights() {
        let md = make_report(&sample(), &[], ScoreField::Avg)
            .unwrap()
            .to_markdown();
        assert!(md.contains("1 invalid episodes excluded"));
        assert!(md.contains("**1.000**"));
        assert!(md.contains("Cognitive Stability ranking"));
    }

    #[test]
    fn strict_parsing_reports_line() {
        let good = sample()[0].to_json_line();
        let text = format!("{good}\n\n{good}\n{{\"episode_id\": 3}}\n");
        match parse_records(&text) {
            Err(ReportError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn same_input_same_report() {
        let recs = sample();
        let a = make_report(&recs, &[], ScoreField::Avg).unwrap();
        let mut rev = recs.clone();
        rev.reverse();
        let b = make_report(&rev, &[], ScoreField::Avg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn duplicate_cells_rejected() {
        let mut recs = sample();
        recs.push(recs[0].clone());
        assert!(matches!(
            make_report(&recs, &[], ScoreField::Avg),
            Err(ReportError::Metric { .. })
        ));
    }
}
