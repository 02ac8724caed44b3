//! Asset pool: bodies, hand types and mark designs, each a small composition
//! of primitive shapes plus a natural-language description.
//!
//! Shapes are plain data. A pool can be loaded from TOML, so new assets do not
//! need code changes. Bodies are authored facing `+Z` in a local frame whose
//! origin is the body position; hands are authored around the hand position.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb([r, g, b])
    }

    pub fn scaled(self, k: f64) -> Rgb {
        let f = |c: u8| ((c as f64 * k).round().clamp(0.0, 255.0)) as u8;
        Rgb([f(self.0[0]), f(self.0[1]), f(self.0[2])])
    }

    /// Linear blend toward `other` by `t` in [0, 1].
    pub fn blend(self, other: Rgb, t: f64) -> Rgb {
        let f = |a: u8, b: u8| {
            (a as f64 + (b as f64 - a as f64) * t)
                .round()
                .clamp(0.0, 255.0) as u8
        };
        Rgb([
            f(self.0[0], other.0[0]),
            f(self.0[1], other.0[1]),
            f(self.0[2], other.0[2]),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    Human,
    Robot,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::Human => "Human",
            Setting::Robot => "Robot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AssetKind {
    Body,
    Hand,
    Mark,
}

/// One primitive of a shape composition, in the asset's local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// Axis-aligned box. Faces are shaded by orientation unless `flat`.
    Box {
        center: Vec3,
        half: Vec3,
        color: Rgb,
        #[serde(default)]
        flat: bool,
    },
    Sphere {
        center: Vec3,
        radius: f64,
        color: Rgb,
    },
    Capsule {
        a: Vec3,
        b: Vec3,
        radius: f64,
        color: Rgb,
    },
}

impl Primitive {
    pub fn center(&self) -> Vec3 {
        match self {
            Primitive::Box { center, .. } | Primitive::Sphere { center, .. } => *center,
            Primitive::Capsule { a, b, .. } => (*a + *b).scale(0.5),
        }
    }

    pub fn color(&self) -> Rgb {
        match self {
            Primitive::Box { color, .. }
            | Primitive::Sphere { color, .. }
            | Primitive::Capsule { color, .. } => *color,
        }
    }

    fn is_well_formed(&self) -> bool {
        match self {
            Primitive::Box { half, .. } => half.x >= 0.0 && half.y >= 0.0 && half.z >= 0.0,
            Primitive::Sphere { radius, .. } | Primitive::Capsule { radius, .. } => *radius > 0.0,
        }
    }
}

/// Lattice rectangle on a body's front face (local frame) where a mark may be anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkSurface {
    /// Local `z` of the front face.
    pub face_z: i32,
    pub x: [i32; 2],
    pub y: [i32; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSpec {
    pub kind: AssetKind,
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<Setting>,
    pub shape: Vec<Primitive>,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mark_surface: Option<MarkSurface>,
}

/// A hand type with one styling per setting. Resolving it against the body's
/// setting yields the concrete hand asset of a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandType {
    pub id: String,
    pub description: String,
    pub human: Vec<Primitive>,
    pub robot: Vec<Primitive>,
}

impl HandType {
    pub fn resolve(&self, setting: Setting) -> AssetSpec {
        let (shape, prefix) = match setting {
            Setting::Human => (self.human.clone(), "a human hand"),
            Setting::Robot => (self.robot.clone(), "a robotic hand"),
        };
        AssetSpec {
            kind: AssetKind::Hand,
            id: self.id.clone(),
            setting: Some(setting),
            shape,
            description: format!("{prefix}, {}", self.description),
            mark_surface: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PoolError {
    #[error("asset pool must contain {expected} {what}, found {found}")]
    Cardinality {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("asset {0:?} is invalid: {1}")]
    InvalidAsset(String, String),
    #[error("duplicate asset id {0:?}")]
    DuplicateId(String),
    #[error("failed to parse asset pool: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetPool {
    pub bodies: Vec<AssetSpec>,
    pub hands: Vec<HandType>,
    pub marks: Vec<AssetSpec>,
}

pub const HUMAN_BODIES: usize = 4;
pub const ROBOT_BODIES: usize = 3;
pub const HAND_TYPES: usize = 6;
pub const MARK_DESIGNS: usize = 6;

impl AssetPool {
    pub fn from_toml_str(s: &str) -> Result<Self, PoolError> {
        let pool: AssetPool = toml::from_str(s)?;
        pool.validate()?;
        Ok(pool)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("asset pool serializes to TOML")
    }

    /// Checks the 4+3 / 6 / 6 cardinalities and per-asset well-formedness.
    pub fn validate(&self) -> Result<(), PoolError> {
        let human = self
            .bodies
            .iter()
            .filter(|b| b.setting == Some(Setting::Human))
            .count();
        let robot = self
            .bodies
            .iter()
            .filter(|b| b.setting == Some(Setting::Robot))
            .count();
        let checks = [
            ("human bodies", HUMAN_BODIES, human),
            ("robot bodies", ROBOT_BODIES, robot),
            ("bodies", HUMAN_BODIES + ROBOT_BODIES, self.bodies.len()),
            ("hand types", HAND_TYPES, self.hands.len()),
            ("mark designs", MARK_DESIGNS, self.marks.len()),
        ];
        for (what, expected, found) in checks {
            if expected != found {
                return Err(PoolError::Cardinality {
                    what,
                    expected,
                    found,
                });
            }
        }

        let mut seen = HashSet::new();
        for body in &self.bodies {
            check_asset(body, AssetKind::Body)?;
            let surface = body.mark_surface.ok_or_else(|| {
                PoolError::InvalidAsset(body.id.clone(), "body has no mark surface".into())
            })?;
            if surface.x[0] > surface.x[1] || surface.y[0] > surface.y[1] {
                return Err(PoolError::InvalidAsset(
                    body.id.clone(),
                    "empty mark surface".into(),
                ));
            }
            if !seen.insert(("body", body.id.clone())) {
                return Err(PoolError::DuplicateId(body.id.clone()));
            }
        }
        for hand in &self.hands {
            if hand.description.trim().is_empty() {
                return Err(PoolError::InvalidAsset(
                    hand.id.clone(),
                    "empty description".into(),
                ));
            }
            for setting in [Setting::Human, Setting::Robot] {
                check_asset(&hand.resolve(setting), AssetKind::Hand)?;
            }
            if !seen.insert(("hand", hand.id.clone())) {
                return Err(PoolError::DuplicateId(hand.id.clone()));
            }
        }
        for mark in &self.marks {
            check_asset(mark, AssetKind::Mark)?;
            let colors: HashSet<Rgb> = mark.shape.iter().map(Primitive::color).collect();
            if colors.len() != 1 {
                return Err(PoolError::InvalidAsset(
                    mark.id.clone(),
                    "a mark must use exactly one color".into(),
                ));
            }
            if !seen.insert(("mark", mark.id.clone())) {
                return Err(PoolError::DuplicateId(mark.id.clone()));
            }
        }
        Ok(())
    }

    pub fn body(&self, id: &str) -> Option<&AssetSpec> {
        self.bodies.iter().find(|b| b.id == id)
    }
}

fn check_asset(a: &AssetSpec, kind: AssetKind) -> Result<(), PoolError> {
    let bad = |msg: &str| Err(PoolError::InvalidAsset(a.id.clone(), msg.to_string()));
    if a.kind != kind {
        return bad("wrong asset kind");
    }
    if a.description.trim().is_empty() {
        return bad("empty description");
    }
    if a.shape.is_empty() {
        return bad("empty shape");
    }
    if !a.shape.iter().all(Primitive::is_well_formed) {
        return bad("malformed primitive");
    }
    if kind != AssetKind::Mark && a.setting.is_none() {
        return bad("missing setting");
    }
    Ok(())
}

impl Default for AssetPool {
    fn default() -> Self {
        default_pool()
    }
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

fn cube(center: Vec3, half: Vec3, color: Rgb) -> Primitive {
    Primitive::Box {
        center,
        half,
        color,
        flat: false,
    }
}

fn ball(center: Vec3, radius: f64, color: Rgb) -> Primitive {
    Primitive::Sphere {
        center,
        radius,
        color,
    }
}

fn limb(a: Vec3, b: Vec3, radius: f64, color: Rgb) -> Primitive {
    Primitive::Capsule {
        a,
        b,
        radius,
        color,
    }
}

fn decal(cx: f64, cy: f64, hx: f64, hy: f64, color: Rgb) -> Primitive {
    Primitive::Box {
        center: v(cx, cy, 0.0),
        half: v(hx, hy, 0.0),
        color,
        flat: true,
    }
}

struct HumanBuild {
    id: &'static str,
    description: &'static str,
    torso_half: (f64, f64),
    torso_depth_half: f64,
    skin: Rgb,
    cloth: Rgb,
    legs: Rgb,
    head_radius: f64,
}

/// Human bodies share a layout: torso box whose front face sits at local
/// `z = 2`, head above, arms at the sides, legs below.
fn human_body(b: HumanBuild) -> AssetSpec {
    let (hx, hy) = b.torso_half;
    let cz = 2.0 - b.torso_depth_half;
    let top = hy;
    let shape = vec![
        cube(v(0.0, 0.0, cz), v(hx, hy, b.torso_depth_half), b.cloth),
        ball(v(0.0, top + b.head_radius + 0.4, cz), b.head_radius, b.skin),
        limb(
            v(-hx - 0.6, top - 0.6, cz),
            v(-hx - 0.8, -hy + 0.6, cz),
            0.55,
            b.skin,
        ),
        limb(
            v(hx + 0.6, top - 0.6, cz),
            v(hx + 0.8, -hy + 0.6, cz),
            0.55,
            b.skin,
        ),
        limb(
            v(-hx * 0.5, -hy, cz),
            v(-hx * 0.5, -hy - 5.0, cz),
            0.7,
            b.legs,
        ),
        limb(
            v(hx * 0.5, -hy, cz),
            v(hx * 0.5, -hy - 5.0, cz),
            0.7,
            b.legs,
        ),
    ];
    let margin = 1.5;
    AssetSpec {
        kind: AssetKind::Body,
        id: b.id.to_string(),
        setting: Some(Setting::Human),
        shape,
        description: b.description.to_string(),
        mark_surface: Some(MarkSurface {
            face_z: 2,
            x: [(-hx + margin).ceil() as i32, (hx - margin).floor() as i32],
            y: [(-hy + margin).ceil() as i32, (hy - margin).floor() as i32],
        }),
    }
}

struct RobotBuild {
    id: &'static str,
    description: &'static str,
    torso_half: (f64, f64),
    torso_depth_half: f64,
    shell: Rgb,
    trim: Rgb,
    head_half: f64,
}

fn robot_body(b: RobotBuild) -> AssetSpec {
    let (hx, hy) = b.torso_half;
    let cz = 2.0 - b.torso_depth_half;
    let shape = vec![
        cube(v(0.0, 0.0, cz), v(hx, hy, b.torso_depth_half), b.shell),
        cube(
            v(0.0, hy + b.head_half + 0.3, cz),
            v(b.head_half, b.head_half, b.head_half),
            b.trim,
        ),
        cube(v(-hx - 0.6, 0.0, cz), v(0.5, hy - 0.5, 0.5), b.trim),
        cube(v(hx + 0.6, 0.0, cz), v(0.5, hy - 0.5, 0.5), b.trim),
        cube(v(-hx * 0.5, -hy - 2.5, cz), v(0.6, 2.5, 0.6), b.trim),
        cube(v(hx * 0.5, -hy - 2.5, cz), v(0.6, 2.5, 0.6), b.trim),
    ];
    let margin = 1.5;
    AssetSpec {
        kind: AssetKind::Body,
        id: b.id.to_string(),
        setting: Some(Setting::Robot),
        shape,
        description: b.description.to_string(),
        mark_surface: Some(MarkSurface {
            face_z: 2,
            x: [(-hx + margin).ceil() as i32, (hx - margin).floor() as i32],
            y: [(-hy + margin).ceil() as i32, (hy - margin).floor() as i32],
        }),
    }
}

fn hand_type(
    id: &str,
    description: &str,
    human: Vec<Primitive>,
    robot: Vec<Primitive>,
) -> HandType {
    HandType {
        id: id.to_string(),
        description: description.to_string(),
        human,
        robot,
    }
}

fn mark(id: &str, description: &str, shape: Vec<Primitive>) -> AssetSpec {
    AssetSpec {
        kind: AssetKind::Mark,
        id: id.to_string(),
        setting: None,
        shape,
        description: description.to_string(),
        mark_surface: None,
    }
}

/// Mark colors. No other asset uses these exact values, so a pixel scan for
/// them finds marks and nothing else.
pub const MARK_COLORS: [Rgb; 6] = [
    Rgb::new(255, 0, 0),
    Rgb::new(0, 0, 255),
    Rgb::new(0, 255, 0),
    Rgb::new(255, 255, 0),
    Rgb::new(255, 0, 255),
    Rgb::new(0, 255, 255),
];

pub fn default_pool() -> AssetPool {
    let skin_a = Rgb::new(224, 172, 140);
    let skin_b = Rgb::new(176, 124, 92);
    let skin_c = Rgb::new(240, 196, 164);
    let bodies = vec![
        human_body(HumanBuild {
            id: "human-adult",
            description: "an adult human body wearing a grey shirt",
            torso_half: (3.0, 4.0),
            torso_depth_half: 1.5,
            skin: skin_a,
            cloth: Rgb::new(120, 124, 132),
            legs: Rgb::new(60, 66, 90),
            head_radius: 1.6,
        }),
        human_body(HumanBuild {
            id: "human-tall",
            description: "a tall, slim human body wearing a green sweater",
            torso_half: (2.5, 5.0),
            torso_depth_half: 1.2,
            skin: skin_b,
            cloth: Rgb::new(70, 110, 80),
            legs: Rgb::new(50, 50, 56),
            head_radius: 1.5,
        }),
        human_body(HumanBuild {
            id: "human-broad",
            description: "a broad-shouldered human body wearing a navy jacket",
            torso_half: (4.0, 4.5),
            torso_depth_half: 2.0,
            skin: skin_c,
            cloth: Rgb::new(40, 56, 96),
            legs: Rgb::new(90, 80, 70),
            head_radius: 1.7,
        }),
        human_body(HumanBuild {
            id: "human-child",
            description: "a small human child body wearing an orange t-shirt",
            torso_half: (2.5, 3.0),
            torso_depth_half: 1.0,
            skin: skin_a,
            cloth: Rgb::new(214, 120, 48),
            legs: Rgb::new(70, 90, 140),
            head_radius: 1.4,
        }),
        robot_body(RobotBuild {
            id: "robot-humanoid",
            description: "a white humanoid robot with a rounded chest plate",
            torso_half: (3.0, 4.0),
            torso_depth_half: 1.5,
            shell: Rgb::new(220, 222, 226),
            trim: Rgb::new(80, 84, 92),
            head_half: 1.3,
        }),
        robot_body(RobotBuild {
            id: "robot-industrial",
            description: "a bulky industrial robot with a yellow-grey chassis",
            torso_half: (4.0, 3.5),
            torso_depth_half: 2.0,
            shell: Rgb::new(196, 170, 60),
            trim: Rgb::new(64, 64, 64),
            head_half: 1.1,
        }),
        robot_body(RobotBuild {
            id: "robot-android",
            description: "a slim silver android robot",
            torso_half: (2.5, 4.5),
            torso_depth_half: 1.0,
            shell: Rgb::new(168, 176, 188),
            trim: Rgb::new(44, 48, 60),
            head_half: 1.2,
        }),
    ];

    let skin = Rgb::new(232, 180, 150);
    let nail = Rgb::new(208, 150, 122);
    let metal = Rgb::new(150, 156, 170);
    let joint = Rgb::new(60, 62, 70);
    let hands = vec![
        hand_type(
            "open-palm",
            "open palm with fingers extended",
            vec![
                cube(v(0.0, 0.0, 0.0), v(0.6, 0.7, 0.2), skin),
                limb(v(-0.35, 0.7, 0.0), v(-0.4, 1.4, 0.0), 0.14, nail),
                limb(v(0.0, 0.7, 0.0), v(0.0, 1.5, 0.0), 0.14, nail),
                limb(v(0.35, 0.7, 0.0), v(0.4, 1.4, 0.0), 0.14, nail),
            ],
            vec![
                cube(v(0.0, 0.0, 0.0), v(0.6, 0.7, 0.25), metal),
                cube(v(-0.35, 1.05, 0.0), v(0.12, 0.35, 0.12), joint),
                cube(v(0.0, 1.1, 0.0), v(0.12, 0.4, 0.12), joint),
                cube(v(0.35, 1.05, 0.0), v(0.12, 0.35, 0.12), joint),
            ],
        ),
        hand_type(
            "fist",
            "closed into a fist",
            vec![ball(v(0.0, 0.0, 0.0), 0.7, skin)],
            vec![cube(v(0.0, 0.0, 0.0), v(0.65, 0.65, 0.65), metal)],
        ),
        hand_type(
            "pointing",
            "pointing with the index finger",
            vec![
                ball(v(0.0, 0.0, 0.0), 0.6, skin),
                limb(v(0.0, 0.5, 0.0), v(0.0, 1.5, 0.0), 0.16, nail),
            ],
            vec![
                cube(v(0.0, 0.0, 0.0), v(0.55, 0.55, 0.55), metal),
                cube(v(0.0, 1.0, 0.0), v(0.14, 0.5, 0.14), joint),
            ],
        ),
        hand_type(
            "pinch",
            "with thumb and finger forming a pinch",
            vec![
                ball(v(0.0, 0.0, 0.0), 0.55, skin),
                limb(v(-0.3, 0.4, 0.0), v(-0.1, 1.1, 0.0), 0.14, nail),
                limb(v(0.3, 0.4, 0.0), v(0.1, 1.1, 0.0), 0.14, nail),
            ],
            vec![
                cube(v(0.0, 0.0, 0.0), v(0.5, 0.5, 0.5), metal),
                cube(v(-0.3, 0.9, 0.0), v(0.1, 0.45, 0.1), joint),
                cube(v(0.3, 0.9, 0.0), v(0.1, 0.45, 0.1), joint),
            ],
        ),
        hand_type(
            "flat",
            "held flat like a paddle",
            vec![cube(v(0.0, 0.0, 0.0), v(0.8, 0.5, 0.15), skin)],
            vec![cube(v(0.0, 0.0, 0.0), v(0.8, 0.5, 0.18), metal)],
        ),
        hand_type(
            "claw",
            "with fingers curled like a claw",
            vec![
                ball(v(0.0, 0.0, 0.0), 0.55, skin),
                limb(v(-0.4, 0.3, 0.0), v(-0.5, 0.9, 0.3), 0.13, nail),
                limb(v(0.0, 0.4, 0.0), v(0.0, 1.0, 0.3), 0.13, nail),
                limb(v(0.4, 0.3, 0.0), v(0.5, 0.9, 0.3), 0.13, nail),
            ],
            vec![
                cube(v(0.0, 0.0, 0.0), v(0.5, 0.5, 0.5), metal),
                limb(v(-0.4, 0.4, 0.0), v(-0.5, 1.0, 0.3), 0.12, joint),
                limb(v(0.0, 0.5, 0.0), v(0.0, 1.1, 0.3), 0.12, joint),
                limb(v(0.4, 0.4, 0.0), v(0.5, 1.0, 0.3), 0.12, joint),
            ],
        ),
    ];

    let [red, blue, green, yellow, magenta, cyan] = MARK_COLORS;
    let marks = vec![
        mark(
            "red-square",
            "a red square sticker",
            vec![decal(0.0, 0.0, 0.6, 0.6, red)],
        ),
        mark(
            "blue-cross",
            "a blue cross-shaped sticker",
            vec![
                decal(0.0, 0.0, 0.8, 0.2, blue),
                decal(0.0, 0.0, 0.2, 0.8, blue),
            ],
        ),
        mark(
            "green-bar",
            "a green horizontal bar",
            vec![decal(0.0, 0.0, 0.9, 0.3, green)],
        ),
        mark(
            "yellow-corner",
            "a yellow L-shaped sticker",
            vec![
                decal(-0.3, 0.0, 0.2, 0.8, yellow),
                decal(0.2, -0.6, 0.7, 0.2, yellow),
            ],
        ),
        mark(
            "magenta-checker",
            "a magenta two-square checker sticker",
            vec![
                decal(-0.35, 0.35, 0.35, 0.35, magenta),
                decal(0.35, -0.35, 0.35, 0.35, magenta),
            ],
        ),
        mark(
            "cyan-stripe",
            "a cyan vertical stripe",
            vec![decal(0.0, 0.0, 0.25, 0.9, cyan)],
        ),
    ];

    AssetPool {
        bodies,
        hands,
        marks,
    }
}
