//! Seeded scene generation from the asset pool.
//!
//! Every body x hand x mark combination gets its own ChaCha stream, keyed by
//! its position in the full (unfiltered) enumeration, so filtering a plan
//! never changes the poses of the combinations that remain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assets::{AssetPool, AssetSpec, HandType, PoolError, Setting};
use crate::geometry::{Axis, Vec3, Vec3i};
use crate::render::{validate_mark_hidden_with, validate_mark_reflected_with, RenderConfig};
use crate::scene::{
    BodyPose, Bounds, CameraPose, Extent, Facing, MirrorPlane, SceneDescriptions, SceneSpec,
};

/// Geometry shared by all generated scenes, in body-local terms
/// (forward = facing direction, lateral = the other horizontal axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Layout {
    pub body_position: Vec3i,
    pub facing: Facing,
    /// Side length of the cubic hand workspace, centered on the body.
    pub workspace_size: i32,
    /// Distance from the body position to the mirror plane.
    pub mirror_offset: i32,
    pub mirror_half_width: i32,
    pub mirror_y: [i32; 2],
    /// Lateral and vertical ranges for the initial hand position.
    pub hand_lateral: [i32; 2],
    pub hand_y: [i32; 2],
    /// Camera eye and target as (lateral, y, forward) relative to the body.
    pub camera_eye: Vec3,
    pub camera_target: Vec3,
    pub fov_y_deg: f64,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            body_position: Vec3i::ZERO,
            facing: Facing::PosZ,
            workspace_size: 32,
            mirror_offset: 8,
            mirror_half_width: 11,
            mirror_y: [-10, 11],
            hand_lateral: [-6, 6],
            hand_y: [-4, 6],
            camera_eye: Vec3::new(5.0, 17.0, -15.0),
            camera_target: Vec3::new(0.0, 0.0, 8.0),
            fov_y_deg: 55.0,
        }
    }
}

impl Layout {
    /// Body-local (lateral, y, forward) to world.
    fn to_world(&self, local: Vec3) -> Vec3 {
        self.body_position.to_f64() + self.facing.rotate(local)
    }

    fn to_world_i(&self, local: Vec3i) -> Vec3i {
        self.body_position + self.facing.rotate_i(local)
    }

    pub fn mirror(&self) -> MirrorPlane {
        let axis = self.facing.axis();
        let offset = self.body_position.get(axis) + self.facing.sign() * self.mirror_offset;
        let lateral_axis = if axis == Axis::Z { Axis::X } else { Axis::Z };
        let c = self.body_position.get(lateral_axis);
        let lateral = [c - self.mirror_half_width, c + self.mirror_half_width];
        let y = [
            self.body_position.y + self.mirror_y[0],
            self.body_position.y + self.mirror_y[1],
        ];
        // extent is (u, v) in the mirror's in-plane axis order
        let extent = match axis {
            Axis::Z => Extent { u: lateral, v: y },
            _ => Extent { u: y, v: lateral },
        };
        MirrorPlane {
            axis,
            offset,
            extent,
        }
    }

    pub fn camera(&self) -> CameraPose {
        CameraPose {
            eye: self.to_world(self.camera_eye),
            target: self.to_world(self.camera_target),
            up: Vec3::new(0.0, 1.0, 0.0),
            fov_y_deg: self.fov_y_deg,
        }
    }

    pub fn workspace(&self) -> Bounds {
        Bounds::centered(self.body_position, self.workspace_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingMode {
    /// Every combination, `poses_per_combination` times.
    Enumerate,
    /// A seeded subset of `count` (combination, pose) cells.
    Sample { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingPlan {
    #[serde(flatten)]
    pub mode: SamplingMode,
    pub setting: Option<Setting>,
    pub poses_per_combination: u32,
    pub max_redraws: u32,
    /// Success threshold the scenes must be valid for.
    pub d_th: u32,
    pub layout: Layout,
    /// Resolution used for the render-based validity checks.
    pub validation_render: RenderConfig,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self {
            mode: SamplingMode::Enumerate,
            setting: None,
            poses_per_combination: 1,
            max_redraws: 200,
            d_th: 1,
            layout: Layout::default(),
            validation_render: RenderConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("no valid pose for {combination} after {redraws} redraws")]
    SamplingExhausted { combination: String, redraws: u32 },
    #[error("sample of {requested} exceeds the {available} available cells")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("malformed scene configuration: {0}")]
    Config(String),
}

/// Top-level scene configuration file: optional asset pool plus sampling plan.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    #[serde(default)]
    pub pool: Option<AssetPool>,
    #[serde(default)]
    pub sampling: SamplingPlan,
}

impl SceneConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, GenerateError> {
        let cfg: SceneConfig =
            toml::from_str(s).map_err(|e| GenerateError::Config(e.to_string()))?;
        if let Some(pool) = &cfg.pool {
            pool.validate()?;
        }
        Ok(cfg)
    }

    pub fn pool(&self) -> AssetPool {
        self.pool.clone().unwrap_or_default()
    }
}

struct Cell<'a> {
    ordinal: u64,
    body: &'a AssetSpec,
    hand: &'a HandType,
    mark: &'a AssetSpec,
    pose: u32,
}

pub fn generate_scenes(
    pool: &AssetPool,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<Vec<SceneSpec>, GenerateError> {
    pool.validate()?;
    let mut cells = Vec::new();
    let mut ordinal = 0u64;
    for body in &pool.bodies {
        for hand in &pool.hands {
            for mark in &pool.marks {
                let keep = plan.setting.is_none() || body.setting == plan.setting;
                for pose in 0..plan.poses_per_combination {
                    if keep {
                        cells.push(Cell {
                            ordinal,
                            body,
                            hand,
                            mark,
                            pose,
                        });
                    }
                }
                ordinal += 1;
            }
        }
    }

    if let SamplingMode::Sample { count } = plan.mode {
        if count > cells.len() {
            return Err(GenerateError::SampleTooLarge {
                requested: count,
                available: cells.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX);
        // partial Fisher-Yates, then restore enumeration order
        for i in 0..count {
            let j = rng.random_range(i..cells.len());
            cells.swap(i, j);
        }
        cells.truncate(count);
        cells.sort_by_key(|c| (c.ordinal, c.pose));
    }

    cells
        .iter()
        .map(|cell| build_scene(cell, plan, seed))
        .collect()
}

fn build_scene(
    cell: &Cell<'_>,
    plan: &SamplingPlan,
    seed: u64,
) -> Result<SceneSpec, GenerateError> {
    let layout = &plan.layout;
    let setting = cell.body.setting.unwrap_or(Setting::Human);
    let hand = cell.hand.resolve(setting);
    let scene_id = format!(
        "{}.{}.{}.p{}",
        cell.body.id, cell.hand.id, cell.mark.id, cell.pose
    );
    let surface = cell.body.mark_surface.ok_or_else(|| {
        GenerateError::Config(format!("body {} has no mark surface", cell.body.id))
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell.ordinal * 1024 + cell.pose as u64);

    let forward_lo = surface.face_z + plan.d_th as i32 + 1;
    let forward_hi = layout.mirror_offset - 1;
    if forward_lo > forward_hi {
        return Err(GenerateError::Config(
            "mirror too close to the body for the threshold".into(),
        ));
    }

    for _ in 0..=plan.max_redraws {
        let mark_local = Vec3i::new(
            rng.random_range(surface.x[0]..=surface.x[1]),
            rng.random_range(surface.y[0]..=surface.y[1]),
            surface.face_z,
        );
        let hand_local = Vec3i::new(
            rng.random_range(layout.hand_lateral[0]..=layout.hand_lateral[1]),
            rng.random_range(layout.hand_y[0]..=layout.hand_y[1]),
            rng.random_range(forward_lo..=forward_hi),
        );
        let spec = SceneSpec {
            scene_id: scene_id.clone(),
            body: cell.body.clone(),
            hand: hand.clone(),
            mark: cell.mark.clone(),
            mirror: layout.mirror(),
            body_pose: BodyPose {
                position: layout.body_position,
                facing: layout.facing,
            },
            mark_anchor: layout.to_world_i(mark_local),
            hand_init: layout.to_world_i(hand_local),
            camera: layout.camera(),
            workspace: layout.workspace(),
            descriptions: SceneDescriptions {
                body: cell.body.description.clone(),
                hand: hand.description.clone(),
                mark: cell.mark.description.clone(),
                mirror: "a flat rectangular mirror standing upright in front of the body".into(),
            },
        };
        if is_valid_scene(&spec, plan.d_th, &plan.validation_render) {
            return Ok(spec);
        }
    }
    Err(GenerateError::SamplingExhausted {
        combination: scene_id,
        redraws: plan.max_redraws,
    })
}

/// All scene invariants: structure, the reflected target staying reachable,
/// the mark hidden from the direct view and visible in the mirror.
pub fn is_valid_scene(spec: &SceneSpec, d_th: u32, render: &RenderConfig) -> bool {
    let virtual_mark = crate::reflection::reflect_point(spec.mark_anchor, &spec.mirror);
    spec.check_structure(d_th).is_ok()
        && spec.workspace.contains(virtual_mark)
        && validate_mark_hidden_with(spec, render)
        && validate_mark_reflected_with(spec, render)
}

/// Fixed scene used by examples and tests: first body, hand and mark of the
/// default pool, mark at the torso center, hand up and to the left in front.
pub fn canonical_scene() -> SceneSpec {
    let pool = AssetPool::default();
    let layout = Layout::default();
    let body = pool.bodies[0].clone();
    let hand = pool.hands[0].resolve(Setting::Human);
    let mark = pool.marks[0].clone();
    SceneSpec {
        scene_id: "canonical".into(),
        descriptions: SceneDescriptions {
            body: body.description.clone(),
            hand: hand.description.clone(),
            mark: mark.description.clone(),
            mirror: "a flat rectangular mirror standing upright in front of the body".into(),
        },
        body,
        hand,
        mark,
        mirror: layout.mirror(),
        body_pose: BodyPose {
            position: layout.body_position,
            facing: layout.facing,
        },
        mark_anchor: Vec3i::new(0, 0, 2),
        hand_init: Vec3i::new(3, 2, 5),
        camera: layout.camera(),
        workspace: layout.workspace(),
    }
}
