//! Level-dependent prompts built by removing tagged blocks from templates.
//!
//! Templates are plain text. A block starts with a line `{block:Name}` and
//! ends with a line `{/block}`; lines outside blocks are always kept.
//! Placeholders such as `{mark}` are filled from the scene. Ablation only ever
//! drops whole blocks, so the text of level `l + 1` is the text of level `l`
//! with some blocks cut out.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{Action, Vec3i};
use crate::scene::SceneSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    L0,
    L1,
    L2,
    L3,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::L0, Level::L1, Level::L2, Level::L3];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Level> {
        Level::ALL.get(i as usize).copied()
    }

    /// Information blocks included at this level.
    pub fn blocks(self) -> BTreeSet<Block> {
        let mut set: BTreeSet<Block> = Block::ALL.into_iter().collect();
        if self >= Level::L1 {
            set.remove(&Block::CoTTemplate);
        }
        if self >= Level::L2 {
            set.remove(&Block::MirrorDisclosure);
        }
        if self >= Level::L3 {
            set.remove(&Block::MarkOnSelfDisclosure);
        }
        set
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.index())
    }
}

impl Serialize for Level {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.index())
    }
}

impl<'de> Deserialize<'de> for Level {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let i = u8::deserialize(d)?;
        Level::from_index(i)
            .ok_or_else(|| serde::de::Error::custom(format!("level {i} out of range 0..=3")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Block {
    MirrorDisclosure,
    CoTTemplate,
    MarkOnSelfDisclosure,
    SceneDescriptions,
    ActionMenu,
}

impl Block {
    pub const ALL: [Block; 5] = [
        Block::MirrorDisclosure,
        Block::CoTTemplate,
        Block::MarkOnSelfDisclosure,
        Block::SceneDescriptions,
        Block::ActionMenu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Block::MirrorDisclosure => "MirrorDisclosure",
            Block::CoTTemplate => "CoTTemplate",
            Block::MarkOnSelfDisclosure => "MarkOnSelfDisclosure",
            Block::SceneDescriptions => "SceneDescriptions",
            Block::ActionMenu => "ActionMenu",
        }
    }

    fn from_name(s: &str) -> Option<Block> {
        Block::ALL.into_iter().find(|b| b.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub level: Level,
    pub system_text: String,
    pub task_text: String,
    pub included_blocks: BTreeSet<Block>,
}

impl PromptBundle {
    /// System and task text joined, as shown to a human operator.
    pub fn full_text(&self) -> String {
        format!("{}\n\n{}", self.system_text, self.task_text)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("prompt template {0:?} is missing")]
    TemplateMissing(String),
    #[error("template {file}: {msg}")]
    Malformed { file: String, msg: String },
    #[error("failed to read template {0}: {1}")]
    Io(String, std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Text(String),
    Block(Block, String),
}

#[derive(Debug, Clone, PartialEq)]
struct Template {
    name: String,
    segments: Vec<Segment>,
}

impl Template {
    fn parse(name: &str, text: &str) -> Result<Self, PromptError> {
        let malformed = |msg: String| PromptError::Malformed {
            file: name.to_string(),
            msg,
        };
        let mut segments = Vec::new();
        let mut current = String::new();
        let mut open: Option<Block> = None;
        for (lineno, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix("{block:") {
                let tag = rest.strip_suffix('}').ok_or_else(|| {
                    malformed(format!("line {}: unterminated block tag", lineno + 1))
                })?;
                let block = Block::from_name(tag).ok_or_else(|| {
                    malformed(format!("line {}: unknown block {tag:?}", lineno + 1))
                })?;
                if open.is_some() {
                    return Err(malformed(format!("line {}: nested block", lineno + 1)));
                }
                if !current.is_empty() {
                    segments.push(Segment::Text(std::mem::take(&mut current)));
                }
                open = Some(block);
            } else if trimmed == "{/block}" {
                let block = open.take().ok_or_else(|| {
                    malformed(format!("line {}: unmatched block end", lineno + 1))
                })?;
                segments.push(Segment::Block(block, std::mem::take(&mut current)));
            } else {
                current.push_str(line);
                current.push('\n');
            }
        }
        if open.is_some() {
            return Err(malformed("unterminated block at end of file".into()));
        }
        if !current.is_empty() {
            segments.push(Segment::Text(current));
        }
        Ok(Self {
            name: name.to_string(),
            segments,
        })
    }

    fn blocks(&self) -> impl Iterator<Item = Block> + '_ {
        self.segments.iter().filter_map(|s| match s {
            Segment::Block(b, _) => Some(*b),
            Segment::Text(_) => None,
        })
    }

    fn render(
        &self,
        keep: &BTreeSet<Block>,
        vars: &[(&str, String)],
    ) -> Result<String, PromptError> {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Block(b, t) if keep.contains(b) => out.push_str(t),
                Segment::Block(..) => {}
            }
        }
        substitute(&self.name, &out, vars).map(|s| s.trim_end().to_string())
    }
}

fn substitute(name: &str, text: &str, vars: &[(&str, String)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let end = after.find('}').ok_or_else(|| PromptError::Malformed {
            file: name.to_string(),
            msg: "unterminated placeholder".into(),
        })?;
        let key = &after[..end];
        let value = vars
            .iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| PromptError::Malformed {
                file: name.to_string(),
                msg: format!("unknown placeholder {{{key}}}"),
            })?;
        out.push_str(&value.1);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

pub const SYSTEM_TEMPLATE: &str = "system.txt";
pub const TASK_TEMPLATE: &str = "task.txt";

/// The pair of templates a prompt is assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    system: Template,
    task: Template,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::from_texts(
            include_str!("../assets/prompts/system.txt"),
            include_str!("../assets/prompts/task.txt"),
        )
        .expect("built-in templates are well formed")
    }
}

impl PromptTemplates {
    pub fn from_texts(system: &str, task: &str) -> Result<Self, PromptError> {
        let t = Self {
            system: Template::parse(SYSTEM_TEMPLATE, system)?,
            task: Template::parse(TASK_TEMPLATE, task)?,
        };
        let present: BTreeSet<Block> = t.system.blocks().chain(t.task.blocks()).collect();
        if let Some(missing) = Block::ALL.into_iter().find(|b| !present.contains(b)) {
            return Err(PromptError::TemplateMissing(format!(
                "block {}",
                missing.name()
            )));
        }
        Ok(t)
    }

    /// Loads `system.txt` and `task.txt` from a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let read = |name: &str| {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(s),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    Err(PromptError::TemplateMissing(path.display().to_string()))
                }
                Err(e) => Err(PromptError::Io(path.display().to_string(), e)),
            }
        };
        Self::from_texts(&read(SYSTEM_TEMPLATE)?, &read(TASK_TEMPLATE)?)
    }

    pub fn build(&self, level: Level, spec: &SceneSpec) -> Result<PromptBundle, PromptError> {
        let keep = level.blocks();
        let vars = variables(spec);
        Ok(PromptBundle {
            level,
            system_text: self.system.render(&keep, &vars)?,
            task_text: self.task.render(&keep, &vars)?,
            included_blocks: keep,
        })
    }
}

/// Builds the prompt for `level` from the built-in templates.
pub fn build_prompt(level: Level, spec: &SceneSpec) -> Result<PromptBundle, PromptError> {
    PromptTemplates::default().build(level, spec)
}

/// Body-relative wording for a world-space move.
fn direction_phrase(spec: &SceneSpec, action: Action) -> &'static str {
    let facing = spec.body_pose.facing;
    let world = action.displacement();
    let local = [
        (Vec3i::new(1, 0, 0), "toward your left side"),
        (Vec3i::new(-1, 0, 0), "toward your right side"),
        (Vec3i::new(0, 1, 0), "up"),
        (Vec3i::new(0, -1, 0), "down"),
        (
            Vec3i::new(0, 0, 1),
            "forward, the direction your body faces",
        ),
        (
            Vec3i::new(0, 0, -1),
            "backward, away from the direction your body faces",
        ),
    ];
    local
        .iter()
        .find(|(l, _)| facing.rotate_i(*l) == world)
        .map(|(_, s)| *s)
        .unwrap_or("")
}

fn variables(spec: &SceneSpec) -> Vec<(&'static str, String)> {
    let d = |a| direction_phrase(spec, a).to_string();
    vec![
        ("body", spec.descriptions.body.clone()),
        ("hand", spec.descriptions.hand.clone()),
        ("mark", spec.descriptions.mark.clone()),
        ("mirror", spec.descriptions.mirror.clone()),
        ("dir_pos_x", d(Action::PosX)),
        ("dir_neg_x", d(Action::NegX)),
        ("dir_pos_y", d(Action::PosY)),
        ("dir_neg_y", d(Action::NegY)),
        ("dir_pos_z", d(Action::PosZ)),
        ("dir_neg_z", d(Action::NegZ)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::canonical_scene;

    #[test]
    fn level_block_sets() {
        use Block::*;
        assert_eq!(Level::L0.blocks().len(), 5);
        assert!(!Level::L1.blocks().contains(&CoTTemplate));
        assert!(Level::L1.blocks().contains(&MirrorDisclosure));
        assert!(!Level::L2.blocks().contains(&MirrorDisclosure));
        assert!(Level::L2.blocks().contains(&MarkOnSelfDisclosure));
        assert!(!Level::L3.blocks().contains(&MarkOnSelfDisclosure));
        for l in Level::ALL {
            assert!(l.blocks().contains(&ActionMenu));
            assert!(l.blocks().contains(&SceneDescriptions));
        }
        for w in Level::ALL.windows(2) {
            let (a, b) = (w[0].blocks(), w[1].blocks());
            assert!(b.is_subset(&a) && b.len() < a.len());
        }
    }

    #[test]
    fn l0_discloses_mirror_verbatim() {
        let p = build_prompt(Level::L0, &canonical_scene()).unwrap();
        assert!(p
            .task_text
            .contains("a mirror is present in the environment"));
    }

    #[test]
    fn l1_is_l0_without_cot() {
        let spec = canonical_scene();
        let t = PromptTemplates::default();
        let l0 = t.build(Level::L0, &spec).unwrap();
        let l1 = t.build(Level::L1, &spec).unwrap();
        assert_eq!(l0.system_text, l1.system_text);
        let cot = t
            .task
            .segments
            .iter()
            .find_map(|s| match s {
                Segment::Block(Block::CoTTemplate, text) => Some(text.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(
            l0.task_text.replacen(cot.trim_end(), "", 1).trim_end(),
            l1.task_text
        );
        assert_ne!(l0.task_text, l1.task_text);
    }

    #[test]
    fn l3_has_no_disclosures() {
        let p = build_prompt(Level::L3, &canonical_scene()).unwrap();
        let text = p.full_text().to_lowercase();
        assert!(!text.contains("mirror"));
        assert!(!text.contains("your own body"));
        assert!(text.contains("+x"));
    }

    #[test]
    fn direction_phrases_follow_facing() {
        let mut spec = canonical_scene();
        assert_eq!(
            direction_phrase(&spec, Action::PosZ),
            "forward, the direction your body faces"
        );
        spec.body_pose.facing = crate::scene::Facing::PosX;
        assert_eq!(
            direction_phrase(&spec, Action::PosX),
            "forward, the direction your body faces"
        );
        assert_eq!(
            direction_phrase(&spec, Action::NegZ),
            "toward your left side"
        );
    }

    #[test]
    fn missing_block_is_template_missing() {
        let err =
            PromptTemplates::from_texts("no blocks here\n", "{block:CoTTemplate}\nx\n{/block}\n")
                .unwrap_err();
        assert!(matches!(err, PromptError::TemplateMissing(_)));
    }

    #[test]
    fn missing_file_is_template_missing() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join(SYSTEM_TEMPLATE),
            include_str!("../assets/prompts/system.txt"),
        )
        .unwrap();
        assert!(matches!(
            PromptTemplates::load_dir(dir.path()),
            Err(PromptError::TemplateMissing(_))
        ));
        std::fs::write(
            dir.path().join(TASK_TEMPLATE),
            include_str!("../assets/prompts/task.txt"),
        )
        .unwrap();
        assert!(PromptTemplates::load_dir(dir.path()).is_ok());
    }

    #[test]
    fn malformed_templates() {
        assert!(Template::parse("t", "{block:CoTTemplate}\nopen").is_err());
        assert!(Template::parse("t", "{/block}").is_err());
        assert!(Template::parse("t", "{block:Nope}\n{/block}").is_err());
        let t = Template::parse("t", "hello {who}\n").unwrap();
        assert!(t.render(&BTreeSet::new(), &[]).is_err());
    }

    #[test]
    fn level_serializes_as_integer() {
        assert_eq!(serde_json::to_string(&Level::L2).unwrap(), "2");
        assert_eq!(serde_json::from_str::<Level>("3").unwrap(), Level::L3);
        assert!(serde_json::from_str::<Level>("4").is_err());
    }
}
