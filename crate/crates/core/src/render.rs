//! Software rasterizer for the fixed-camera observation.
//!
//! Two passes, both painter's algorithm (far to near by camera depth of the
//! primitive center, ties by scene order):
//!
//! 1. the mirror rectangle, then reflected copies of every primitive clipped to
//!    the projected mirror, then an optional tint over the mirror region;
//! 2. the direct primitives.
//!
//! Boxes are drawn by filling the projected convex hull of their corners and
//! then the front-facing faces on top, so a box always covers its full hull.

use std::cmp::Ordering;
use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::assets::{Primitive, Rgb};
use crate::geometry::{Axis, Vec3, Vec3i};
use crate::reflection::reflect_vec;
use crate::scene::{CameraPose, Facing, MirrorPlane, SceneSpec, SceneState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderConfig {
    pub width: u32,
    pub height: u32,
    #[serde(default = "yes")]
    pub mirror_pass: bool,
    /// Blend the mirror region toward this color by the given factor.
    #[serde(default)]
    pub mirror_tint: Option<(Rgb, f64)>,
    pub background: Rgb,
    pub mirror_color: Rgb,
}

fn yes() -> bool {
    true
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 1024,
            mirror_pass: true,
            mirror_tint: Some((Rgb::new(190, 215, 235), 0.15)),
            background: Rgb::new(46, 52, 64),
            mirror_color: Rgb::new(58, 66, 80),
        }
    }
}

impl RenderConfig {
    pub fn with_size(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("invalid render configuration: {0}")]
    Config(String),
}

/// 8-bit RGB raster, row-major, no alpha.
#[derive(Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Frame({}x{})", self.width, self.height)
    }
}

impl Frame {
    fn filled(width: u32, height: u32, c: Rgb) -> Self {
        let mut data = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            data.extend_from_slice(&c.0);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn pixel(&self, x: u32, y: u32) -> Rgb {
        let i = ((y * self.width + x) * 3) as usize;
        Rgb([self.data[i], self.data[i + 1], self.data[i + 2]])
    }

    fn put(&mut self, x: u32, y: u32, c: Rgb) {
        let i = ((y * self.width + x) * 3) as usize;
        self.data[i..i + 3].copy_from_slice(&c.0);
    }

    /// Pixel coordinates whose color equals `c` exactly.
    pub fn pixels_of(&self, c: Rgb) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.data
            .chunks_exact(3)
            .enumerate()
            .filter(move |(_, px)| *px == c.0)
            .map(move |(i, _)| (i as u32 % self.width, i as u32 / self.width))
    }

    pub fn encode_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(Cursor::new(&mut out), self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().expect("png header");
            w.write_image_data(&self.data).expect("png data");
        }
        out
    }
}

/// Ground truth for trusted agents and tests. Never sent to remote or human agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub hand_pos: Vec3i,
    pub mark_anchor: Vec3i,
    pub mirror: MirrorPlane,
    pub distance: u32,
}

#[derive(Debug, Clone)]
pub struct Observation {
    pub frame: Frame,
    pub step_index: u32,
    pub sidecar: Sidecar,
}

/// Which scene part a world primitive belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Body,
    Hand,
    Mark,
}

/// Offset of mark decals off the body surface, along the face normal.
const DECAL_LIFT: f64 = 0.02;

fn place(p: &Primitive, origin: Vec3, facing: Facing) -> Primitive {
    match p {
        Primitive::Box {
            center,
            half,
            color,
            flat,
        } => Primitive::Box {
            center: origin + facing.rotate(*center),
            half: facing.rotate_extent(*half),
            color: *color,
            flat: *flat,
        },
        Primitive::Sphere {
            center,
            radius,
            color,
        } => Primitive::Sphere {
            center: origin + facing.rotate(*center),
            radius: *radius,
            color: *color,
        },
        Primitive::Capsule {
            a,
            b,
            radius,
            color,
        } => Primitive::Capsule {
            a: origin + facing.rotate(*a),
            b: origin + facing.rotate(*b),
            radius: *radius,
            color: *color,
        },
    }
}

/// World-space primitives of a scene with the hand at `hand_pos`.
pub fn world_primitives(spec: &SceneSpec, hand_pos: Vec3i) -> Vec<(Part, Primitive)> {
    let facing = spec.body_pose.facing;
    let body_origin = spec.body_pose.position.to_f64();
    let mut out: Vec<(Part, Primitive)> = spec
        .body
        .shape
        .iter()
        .map(|p| (Part::Body, place(p, body_origin, facing)))
        .collect();

    // Marks are authored in the face plane (local z = 0, normal +z). The side
    // of the body the anchor is on decides which way the decal faces.
    let anchor = spec.mark_anchor.to_f64();
    let axis = facing.axis();
    let rel = (anchor.get(axis) - body_origin.get(axis)) * facing.sign() as f64;
    let front_side = spec
        .body
        .mark_surface
        .map(|s| rel >= s.face_z as f64 * 0.5)
        .unwrap_or(true);
    let mark_facing = if front_side { facing } else { opposite(facing) };
    let lift = Vec3::default().with(axis, DECAL_LIFT * mark_facing.sign() as f64);
    out.extend(
        spec.mark
            .shape
            .iter()
            .map(|p| (Part::Mark, place(p, anchor + lift, mark_facing))),
    );

    let hand_origin = hand_pos.to_f64();
    out.extend(
        spec.hand
            .shape
            .iter()
            .map(|p| (Part::Hand, place(p, hand_origin, facing))),
    );
    out
}

fn opposite(f: Facing) -> Facing {
    use Facing::*;
    match f {
        PosX => NegX,
        NegX => PosX,
        PosZ => NegZ,
        NegZ => PosZ,
    }
}

fn reflect_primitive(p: &Primitive, m: &MirrorPlane) -> Primitive {
    match p {
        Primitive::Box {
            center,
            half,
            color,
            flat,
        } => Primitive::Box {
            center: reflect_vec(*center, m),
            half: *half,
            color: *color,
            flat: *flat,
        },
        Primitive::Sphere {
            center,
            radius,
            color,
        } => Primitive::Sphere {
            center: reflect_vec(*center, m),
            radius: *radius,
            color: *color,
        },
        Primitive::Capsule {
            a,
            b,
            radius,
            color,
        } => Primitive::Capsule {
            a: reflect_vec(*a, m),
            b: reflect_vec(*b, m),
            radius: *radius,
            color: *color,
        },
    }
}

const NEAR: f64 = 0.05;

/// Pinhole projection for a camera pose and raster size.
#[derive(Debug, Clone, Copy)]
pub struct Projector {
    eye: Vec3,
    right: Vec3,
    up: Vec3,
    forward: Vec3,
    focal: f64,
    cx: f64,
    cy: f64,
}

impl Projector {
    pub fn new(camera: &CameraPose, width: u32, height: u32) -> Result<Self, RenderError> {
        if width == 0 || height == 0 {
            return Err(RenderError::Config(format!("resolution {width}x{height}")));
        }
        if !(camera.fov_y_deg > 0.0 && camera.fov_y_deg < 180.0) {
            return Err(RenderError::Config(format!(
                "field of view {}",
                camera.fov_y_deg
            )));
        }
        let fwd = camera.target - camera.eye;
        if fwd.length() < 1e-9 {
            return Err(RenderError::Config("camera eye equals target".into()));
        }
        let forward = fwd.normalized();
        let side = forward.cross(camera.up);
        if side.length() < 1e-9 {
            return Err(RenderError::Config(
                "camera up is parallel to view direction".into(),
            ));
        }
        let right = side.normalized();
        let up = right.cross(forward);
        let focal = (height as f64 / 2.0) / (camera.fov_y_deg.to_radians() / 2.0).tan();
        Ok(Self {
            eye: camera.eye,
            right,
            up,
            forward,
            focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        })
    }

    pub fn depth(&self, p: Vec3) -> f64 {
        (p - self.eye).dot(self.forward)
    }

    /// Screen position (pixel units, y down) and camera depth.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64, f64)> {
        let d = p - self.eye;
        let z = d.dot(self.forward);
        if z <= NEAR {
            return None;
        }
        let x = d.dot(self.right);
        let y = d.dot(self.up);
        Some((
            self.cx + self.focal * x / z,
            self.cy - self.focal * y / z,
            z,
        ))
    }

    fn radius_px(&self, r: f64, depth: f64) -> f64 {
        self.focal * r / depth
    }
}

type P2 = (f64, f64);

struct Canvas<'a> {
    frame: &'a mut Frame,
    clip: Option<&'a [bool]>,
}

impl Canvas<'_> {
    fn span(&self, lo: f64, hi: f64, limit: u32) -> std::ops::Range<u32> {
        let a = (lo - 0.5).ceil().max(0.0);
        let b = (hi - 0.5).floor() + 1.0;
        let b = b.min(limit as f64);
        if b <= a {
            0..0
        } else {
            a as u32..b as u32
        }
    }

    fn plot(&mut self, x: u32, y: u32, c: Rgb) {
        if let Some(mask) = self.clip {
            if !mask[(y * self.frame.width + x) as usize] {
                return;
            }
        }
        self.frame.put(x, y, c);
    }

    fn fill_convex(&mut self, poly: &[P2], c: Rgb) {
        if poly.len() < 3 {
            return;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for &(x, y) in poly {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let area = signed_area(poly);
        if area.abs() < 1e-12 {
            return;
        }
        let sign = area.signum();
        let ys = self.span(y0, y1, self.frame.height);
        let xs = self.span(x0, x1, self.frame.width);
        for py in ys {
            let fy = py as f64 + 0.5;
            for px in xs.clone() {
                let fx = px as f64 + 0.5;
                if inside_convex(poly, sign, fx, fy) {
                    self.plot(px, py, c);
                }
            }
        }
    }

    fn fill_disc(&mut self, cx: f64, cy: f64, r: f64, c: Rgb) {
        let ys = self.span(cy - r, cy + r, self.frame.height);
        let xs = self.span(cx - r, cx + r, self.frame.width);
        let r2 = r * r;
        for py in ys {
            let dy = py as f64 + 0.5 - cy;
            for px in xs.clone() {
                let dx = px as f64 + 0.5 - cx;
                if dx * dx + dy * dy <= r2 {
                    self.plot(px, py, c);
                }
            }
        }
    }

    fn fill_capsule(&mut self, a: P2, ra: f64, b: P2, rb: f64, c: Rgb) {
        let r = ra.max(rb);
        let ys = self.span(a.1.min(b.1) - r, a.1.max(b.1) + r, self.frame.height);
        let xs = self.span(a.0.min(b.0) - r, a.0.max(b.0) + r, self.frame.width);
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len2 = dx * dx + dy * dy;
        for py in ys {
            let fy = py as f64 + 0.5;
            for px in xs.clone() {
                let fx = px as f64 + 0.5;
                let t = if len2 > 0.0 {
                    (((fx - a.0) * dx + (fy - a.1) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (a.0 + t * dx - fx, a.1 + t * dy - fy);
                let rr = ra + (rb - ra) * t;
                if qx * qx + qy * qy <= rr * rr {
                    self.plot(px, py, c);
                }
            }
        }
    }
}

fn signed_area(poly: &[P2]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        s += a.0 * b.1 - b.0 * a.1;
    }
    s / 2.0
}

fn inside_convex(poly: &[P2], sign: f64, x: f64, y: f64) -> bool {
    (0..poly.len()).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        ((b.0 - a.0) * (y - a.1) - (b.1 - a.1) * (x - a.0)) * sign >= 0.0
    })
}

/// Andrew's monotone chain; returns the hull counter-clockwise without repeats.
fn convex_hull(mut pts: Vec<P2>) -> Vec<P2> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: P2, a: P2, b: P2| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut lower: Vec<P2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<P2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn face_shade(axis: Axis, positive: bool) -> f64 {
    match (axis, positive) {
        (Axis::Y, true) => 1.0,
        (Axis::Y, false) => 0.55,
        (Axis::X, _) => 0.8,
        (Axis::Z, true) => 0.9,
        (Axis::Z, false) => 0.7,
    }
}

const HULL_SHADE: f64 = 0.5;

fn draw_primitive(canvas: &mut Canvas<'_>, proj: &Projector, p: &Primitive) {
    match p {
        Primitive::Box {
            center,
            half,
            color,
            flat,
        } => {
            let mut corners = Vec::with_capacity(8);
            for sx in [-1.0, 1.0] {
                for sy in [-1.0, 1.0] {
                    for sz in [-1.0, 1.0] {
                        corners.push(*center + Vec3::new(sx * half.x, sy * half.y, sz * half.z));
                    }
                }
            }
            let projected: Option<Vec<P2>> = corners
                .iter()
                .map(|&c| proj.project(c).map(|(x, y, _)| (x, y)))
                .collect();
            let Some(projected) = projected else {
                return;
            };
            let hull = convex_hull(projected);
            if *flat {
                canvas.fill_convex(&hull, *color);
                return;
            }
            canvas.fill_convex(&hull, color.scaled(HULL_SHADE));
            for axis in Axis::ALL {
                for positive in [false, true] {
                    let s = if positive { 1.0 } else { -1.0 };
                    let face_c = center.with(axis, center.get(axis) + s * half.get(axis));
                    let normal = Vec3::default().with(axis, s);
                    if normal.dot(proj.eye - face_c) <= 0.0 {
                        continue;
                    }
                    let (ua, va) = match axis {
                        Axis::X => (Axis::Y, Axis::Z),
                        Axis::Y => (Axis::X, Axis::Z),
                        Axis::Z => (Axis::X, Axis::Y),
                    };
                    let (hu, hv) = (half.get(ua), half.get(va));
                    let quad = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
                        .iter()
                        .filter_map(|&(a, b)| {
                            let w = face_c
                                .with(ua, face_c.get(ua) + a * hu)
                                .with(va, face_c.get(va) + b * hv);
                            proj.project(w).map(|(x, y, _)| (x, y))
                        })
                        .collect::<Vec<_>>();
                    canvas.fill_convex(&quad, color.scaled(face_shade(axis, positive)));
                }
            }
        }
        Primitive::Sphere {
            center,
            radius,
            color,
        } => {
            if let Some((x, y, z)) = proj.project(*center) {
                canvas.fill_disc(x, y, proj.radius_px(*radius, z), *color);
            }
        }
        Primitive::Capsule {
            a,
            b,
            radius,
            color,
        } => {
            if let (Some(pa), Some(pb)) = (proj.project(*a), proj.project(*b)) {
                canvas.fill_capsule(
                    (pa.0, pa.1),
                    proj.radius_px(*radius, pa.2),
                    (pb.0, pb.1),
                    proj.radius_px(*radius, pb.2),
                    *color,
                );
            }
        }
    }
}

fn painter_order(proj: &Projector, prims: &[Primitive]) -> Vec<usize> {
    let mut order: Vec<(usize, f64)> = prims
        .iter()
        .enumerate()
        .map(|(i, p)| (i, proj.depth(p.center())))
        .collect();
    // far first; stable on ties
    order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    order.into_iter().map(|(i, _)| i).collect()
}

/// Pixel mask of the projected mirror rectangle, or `None` if it is not in view.
pub fn mirror_mask(spec: &SceneSpec, cfg: &RenderConfig) -> Result<Option<Vec<bool>>, RenderError> {
    let proj = Projector::new(&spec.camera, cfg.width, cfg.height)?;
    Ok(mirror_polygon(&proj, &spec.mirror).map(|poly| {
        let mut f = Frame::filled(cfg.width, cfg.height, Rgb::new(0, 0, 0));
        Canvas {
            frame: &mut f,
            clip: None,
        }
        .fill_convex(&poly, Rgb::new(255, 255, 255));
        f.data.chunks_exact(3).map(|px| px[0] == 255).collect()
    }))
}

fn mirror_polygon(proj: &Projector, mirror: &MirrorPlane) -> Option<Vec<P2>> {
    mirror
        .corners()
        .iter()
        .map(|&c| proj.project(c).map(|(x, y, _)| (x, y)))
        .collect()
}

/// Rasterizes the scene with the hand at `hand_pos`.
pub fn render_frame(
    spec: &SceneSpec,
    hand_pos: Vec3i,
    cfg: &RenderConfig,
) -> Result<Frame, RenderError> {
    let proj = Projector::new(&spec.camera, cfg.width, cfg.height)?;
    if let Some((_, t)) = cfg.mirror_tint {
        if !(0.0..=1.0).contains(&t) {
            return Err(RenderError::Config(format!("mirror tint factor {t}")));
        }
    }
    let mut frame = Frame::filled(cfg.width, cfg.height, cfg.background);
    let prims: Vec<Primitive> = world_primitives(spec, hand_pos)
        .into_iter()
        .map(|(_, p)| p)
        .collect();

    if cfg.mirror_pass {
        if let Some(poly) = mirror_polygon(&proj, &spec.mirror) {
            Canvas {
                frame: &mut frame,
                clip: None,
            }
            .fill_convex(&poly, cfg.mirror_color);
            let mask = mirror_mask(spec, cfg)?.unwrap_or_default();
            let reflected: Vec<Primitive> = prims
                .iter()
                .map(|p| reflect_primitive(p, &spec.mirror))
                .collect();
            {
                let mut canvas = Canvas {
                    frame: &mut frame,
                    clip: Some(&mask),
                };
                for i in painter_order(&proj, &reflected) {
                    draw_primitive(&mut canvas, &proj, &reflected[i]);
                }
            }
            if let Some((tint, t)) = cfg.mirror_tint {
                for (i, inside) in mask.iter().enumerate() {
                    if *inside {
                        let (x, y) = (i as u32 % cfg.width, i as u32 / cfg.width);
                        let c = frame.pixel(x, y).blend(tint, t);
                        frame.put(x, y, c);
                    }
                }
            }
        }
    }

    let mut canvas = Canvas {
        frame: &mut frame,
        clip: None,
    };
    for i in painter_order(&proj, &prims) {
        draw_primitive(&mut canvas, &proj, &prims[i]);
    }
    Ok(frame)
}

pub fn render(state: &SceneState<'_>, cfg: &RenderConfig) -> Result<Observation, RenderError> {
    let frame = render_frame(state.spec, state.hand_pos, cfg)?;
    Ok(Observation {
        frame,
        step_index: state.step_index,
        sidecar: Sidecar {
            hand_pos: state.hand_pos,
            mark_anchor: state.spec.mark_anchor,
            mirror: state.spec.mirror,
            distance: state.distance(),
        },
    })
}

fn mark_color(spec: &SceneSpec) -> Option<Rgb> {
    spec.mark.shape.first().map(Primitive::color)
}

/// Number of pixels in exactly the mark color.
pub fn mark_pixel_count(
    spec: &SceneSpec,
    hand_pos: Vec3i,
    cfg: &RenderConfig,
) -> Result<usize, RenderError> {
    let Some(c) = mark_color(spec) else {
        return Ok(0);
    };
    Ok(render_frame(spec, hand_pos, cfg)?.pixels_of(c).count())
}

/// Renders with the mirror pass disabled and reports whether the mark is
/// absent from the direct view.
pub fn validate_mark_hidden(spec: &SceneSpec) -> bool {
    validate_mark_hidden_with(spec, &RenderConfig::default())
}

pub fn validate_mark_hidden_with(spec: &SceneSpec, cfg: &RenderConfig) -> bool {
    let direct = RenderConfig {
        mirror_pass: false,
        ..cfg.clone()
    };
    matches!(mark_pixel_count(spec, spec.hand_init, &direct), Ok(0))
}

/// Whether the reflected mark shows in the mirror in the initial state.
/// Tint is disabled so the reflected mark keeps its exact color.
pub fn validate_mark_reflected_with(spec: &SceneSpec, cfg: &RenderConfig) -> bool {
    let full = RenderConfig {
        mirror_pass: true,
        mirror_tint: None,
        ..cfg.clone()
    };
    matches!(mark_pixel_count(spec, spec.hand_init, &full), Ok(n) if n > 0)
}
