//! Single-bounce planar mirror geometry.

use serde::{Deserialize, Serialize};

use crate::geometry::{Vec3, Vec3i};
use crate::scene::{CameraPose, MirrorPlane};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectedPoint {
    pub source: Vec3i,
    pub image: Vec3i,
    pub visible_in_mirror: bool,
}

impl ReflectedPoint {
    pub fn new(source: Vec3i, mirror: &MirrorPlane, camera: &CameraPose) -> Self {
        Self {
            source,
            image: reflect_point(source, mirror),
            visible_in_mirror: mirror_visibility(source, mirror, camera),
        }
    }
}

/// Mirror image of a lattice point: the coordinate along the mirror axis maps
/// to `2 * offset - c`.
pub fn reflect_point(p: Vec3i, mirror: &MirrorPlane) -> Vec3i {
    let a = mirror.axis;
    p.with(a, 2 * mirror.offset - p.get(a))
}

pub fn reflect_vec(p: Vec3, mirror: &MirrorPlane) -> Vec3 {
    let a = mirror.axis;
    p.with(a, 2.0 * mirror.offset as f64 - p.get(a))
}

/// True iff the segment from the camera eye to the image of `p` crosses the
/// closed mirror rectangle.
pub fn mirror_visibility(p: Vec3i, mirror: &MirrorPlane, camera: &CameraPose) -> bool {
    segment_hits_mirror(camera.eye, reflect_point(p, mirror).to_f64(), mirror)
}

pub(crate) fn segment_hits_mirror(from: Vec3, to: Vec3, mirror: &MirrorPlane) -> bool {
    let a = mirror.axis;
    let plane = mirror.offset as f64;
    let (fa, ta) = (from.get(a), to.get(a));
    if fa == ta {
        return false;
    }
    let t = (plane - fa) / (ta - fa);
    if !(0.0..=1.0).contains(&t) {
        return false;
    }
    let hit = from + (to - from).scale(t);
    let (ua, va) = mirror.in_plane_axes();
    let e = mirror.extent;
    let (u, v) = (hit.get(ua), hit.get(va));
    u >= e.u[0] as f64 && u <= e.u[1] as f64 && v >= e.v[0] as f64 && v <= e.v[1] as f64
}
