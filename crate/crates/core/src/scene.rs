//! Scene description, mutable episode state and the move rule.

use serde::{Deserialize, Serialize};

use crate::assets::{AssetKind, AssetSpec, Setting};
use crate::geometry::{manhattan_distance, Action, Axis, Vec3, Vec3i};

/// Version of the scene JSON document.
pub const SCENE_SCHEMA_VERSION: u32 = 1;

/// Direction a body faces. Bodies rotate about `Y` only, so the facing is one
/// of the four horizontal axis directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Facing {
    #[serde(rename = "+X")]
    PosX,
    #[serde(rename = "-X")]
    NegX,
    #[serde(rename = "+Z")]
    PosZ,
    #[serde(rename = "-Z")]
    NegZ,
}

impl Facing {
    pub fn axis(self) -> Axis {
        match self {
            Facing::PosX | Facing::NegX => Axis::X,
            Facing::PosZ | Facing::NegZ => Axis::Z,
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Facing::PosX | Facing::PosZ => 1,
            Facing::NegX | Facing::NegZ => -1,
        }
    }

    /// Maps a body-local vector (authored facing `+Z`) into world orientation.
    pub fn rotate(self, p: Vec3) -> Vec3 {
        match self {
            Facing::PosZ => p,
            Facing::NegZ => Vec3::new(-p.x, p.y, -p.z),
            Facing::PosX => Vec3::new(p.z, p.y, -p.x),
            Facing::NegX => Vec3::new(-p.z, p.y, p.x),
        }
    }

    pub fn rotate_i(self, p: Vec3i) -> Vec3i {
        match self {
            Facing::PosZ => p,
            Facing::NegZ => Vec3i::new(-p.x, p.y, -p.z),
            Facing::PosX => Vec3i::new(p.z, p.y, -p.x),
            Facing::NegX => Vec3i::new(-p.z, p.y, p.x),
        }
    }

    /// Rotates half-extents of an axis-aligned box (component magnitudes only).
    pub fn rotate_extent(self, h: Vec3) -> Vec3 {
        match self {
            Facing::PosZ | Facing::NegZ => h,
            Facing::PosX | Facing::NegX => Vec3::new(h.z, h.y, h.x),
        }
    }
}

/// Closed rectangle in the two in-plane axes of a mirror, in `(u, v)` order.
/// For a `Z` mirror `(u, v) = (x, y)`, for `X` it is `(y, z)`, for `Y` `(x, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extent {
    pub u: [i32; 2],
    pub v: [i32; 2],
}

impl Extent {
    pub fn is_degenerate(&self) -> bool {
        self.u[0] >= self.u[1] || self.v[0] >= self.v[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MirrorPlane {
    pub axis: Axis,
    pub offset: i32,
    pub extent: Extent,
}

impl MirrorPlane {
    /// The two in-plane axes, in extent order.
    pub fn in_plane_axes(&self) -> (Axis, Axis) {
        match self.axis {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }

    /// World-space corners of the mirror rectangle.
    pub fn corners(&self) -> [Vec3; 4] {
        let (ua, va) = self.in_plane_axes();
        let base = Vec3::default().with(self.axis, self.offset as f64);
        let e = self.extent;
        let c = |u: i32, v: i32| base.with(ua, u as f64).with(va, v as f64);
        [
            c(e.u[0], e.v[0]),
            c(e.u[1], e.v[0]),
            c(e.u[1], e.v[1]),
            c(e.u[0], e.v[1]),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodyPose {
    pub position: Vec3i,
    pub facing: Facing,
}

/// Pinhole camera looking from `eye` toward `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub eye: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    pub fov_y_deg: f64,
}

/// Inclusive lattice box the hand may occupy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Vec3i,
    pub max: Vec3i,
}

impl Bounds {
    /// A cube of `size` lattice points per side centered on `center`.
    pub fn centered(center: Vec3i, size: i32) -> Self {
        let lo = size / 2;
        let hi = size - lo - 1;
        Bounds {
            min: center - Vec3i::new(lo, lo, lo),
            max: center + Vec3i::new(hi, hi, hi),
        }
    }

    pub fn contains(&self, p: Vec3i) -> bool {
        Axis::ALL
            .iter()
            .all(|&a| p.get(a) >= self.min.get(a) && p.get(a) <= self.max.get(a))
    }

    pub fn clamp(&self, p: Vec3i) -> Vec3i {
        Vec3i::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescriptions {
    pub body: String,
    pub hand: String,
    pub mark: String,
    pub mirror: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: String,
    pub body: AssetSpec,
    pub hand: AssetSpec,
    pub mark: AssetSpec,
    pub mirror: MirrorPlane,
    pub body_pose: BodyPose,
    pub mark_anchor: Vec3i,
    pub hand_init: Vec3i,
    pub camera: CameraPose,
    pub workspace: Bounds,
    pub descriptions: SceneDescriptions,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("scene {0}: {1}")]
    Invalid(String, String),
}

impl SceneSpec {
    pub fn setting(&self) -> Setting {
        self.body.setting.unwrap_or(Setting::Human)
    }

    pub fn initial_distance(&self) -> u32 {
        manhattan_distance(self.hand_init, self.mark_anchor)
    }

    /// World-space lattice rectangle of the body's front face, as `(min, max)`.
    pub fn mark_surface_world(&self) -> Option<(Vec3i, Vec3i)> {
        let s = self.body.mark_surface?;
        let pose = self.body_pose;
        let a = pose.position + pose.facing.rotate_i(Vec3i::new(s.x[0], s.y[0], s.face_z));
        let b = pose.position + pose.facing.rotate_i(Vec3i::new(s.x[1], s.y[1], s.face_z));
        let min = Vec3i::new(a.x.min(b.x), a.y.min(b.y), a.z.min(b.z));
        let max = Vec3i::new(a.x.max(b.x), a.y.max(b.y), a.z.max(b.z));
        Some((min, max))
    }

    /// Geometric invariants that do not need rendering. The mark-hidden check
    /// lives in the renderer.
    pub fn check_structure(&self, d_th: u32) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(self.scene_id.clone(), m));
        if self.body.kind != AssetKind::Body
            || self.hand.kind != AssetKind::Hand
            || self.mark.kind != AssetKind::Mark
        {
            return bad("asset kinds do not match their slots".into());
        }
        if self.body.setting.is_none() || self.body.setting != self.hand.setting {
            return bad("body and hand settings disagree".into());
        }
        if self.mirror.extent.is_degenerate() {
            return bad("mirror extent is degenerate".into());
        }
        let facing = self.body_pose.facing;
        if self.mirror.axis != facing.axis() {
            return bad("mirror is not in front of the body".into());
        }
        let ahead =
            (self.mirror.offset - self.body_pose.position.get(facing.axis())) * facing.sign();
        if ahead <= 0 {
            return bad("mirror is behind the body".into());
        }
        let Some((lo, hi)) = self.mark_surface_world() else {
            return bad("body has no mark surface".into());
        };
        if !(Bounds { min: lo, max: hi }).contains(self.mark_anchor) {
            return bad(format!(
                "mark anchor {} is not on the mirror-facing surface",
                self.mark_anchor
            ));
        }
        for (what, p) in [("hand", self.hand_init), ("mark", self.mark_anchor)] {
            if !self.workspace.contains(p) {
                return bad(format!("{what} position {p} outside the workspace"));
            }
        }
        let d0 = self.initial_distance();
        if d0 <= d_th {
            return bad(format!(
                "initial distance {d0} does not exceed threshold {d_th}"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveOutcome {
    Moved,
    ClampedAtBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneState<'a> {
    pub spec: &'a SceneSpec,
    pub hand_pos: Vec3i,
    pub step_index: u32,
}

impl<'a> SceneState<'a> {
    pub fn new(spec: &'a SceneSpec) -> Self {
        Self {
            spec,
            hand_pos: spec.hand_init,
            step_index: 0,
        }
    }

    pub fn distance(&self) -> u32 {
        manhattan_distance(self.hand_pos, self.spec.mark_anchor)
    }

    /// Moves the hand one unit; out-of-bounds moves leave it in place.
    pub fn apply_action(&mut self, action: Action) -> MoveOutcome {
        let target = self.hand_pos + action.displacement();
        self.step_index += 1;
        if self.spec.workspace.contains(target) {
            self.hand_pos = target;
            MoveOutcome::Moved
        } else {
            MoveOutcome::ClampedAtBound
        }
    }

    /// A step that consumes a turn without moving (malformed agent reply).
    pub fn skip_step(&mut self) {
        self.step_index += 1;
    }
}

/// Versioned on-disk form of a scene list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDocument {
    pub schema_version: u32,
    pub seed: u64,
    pub scenes: Vec<SceneSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum SceneDocError {
    #[error("unsupported scene schema version {0}")]
    Version(u32),
    #[error("malformed scene document: {0}")]
    Json(#[from] serde_json::Error),
}

impl SceneDocument {
    pub fn new(seed: u64, scenes: Vec<SceneSpec>) -> Self {
        Self {
            schema_version: SCENE_SCHEMA_VERSION,
            seed,
            scenes,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SceneDocError> {
        let doc: SceneDocument = serde_json::from_str(s)?;
        if doc.schema_version != SCENE_SCHEMA_VERSION {
            return Err(SceneDocError::Version(doc.schema_version));
        }
        Ok(doc)
    }
}
