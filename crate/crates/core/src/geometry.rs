//! Lattice coordinates, axes and the six-way action set.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Integer lattice point. One unit equals one movement step.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct Vec3i {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Vec3i {
    pub const ZERO: Vec3i = Vec3i { x: 0, y: 0, z: 0 };

    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Self { x, y, z }
    }

    pub fn get(self, axis: Axis) -> i32 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn with(mut self, axis: Axis, value: i32) -> Self {
        match axis {
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
        }
        self
    }

    pub fn l1_norm(self) -> u32 {
        self.x.unsigned_abs() + self.y.unsigned_abs() + self.z.unsigned_abs()
    }

    /// Number of non-zero components.
    pub fn nonzero_components(self) -> usize {
        Axis::ALL.iter().filter(|&&a| self.get(a) != 0).count()
    }

    pub fn to_f64(self) -> Vec3 {
        Vec3::new(self.x as f64, self.y as f64, self.z as f64)
    }
}

impl Add for Vec3i {
    type Output = Vec3i;
    fn add(self, o: Vec3i) -> Vec3i {
        Vec3i::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3i {
    type Output = Vec3i;
    fn sub(self, o: Vec3i) -> Vec3i {
        Vec3i::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3i {
    type Output = Vec3i;
    fn neg(self) -> Vec3i {
        Vec3i::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3i {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// L1 distance between two lattice points.
pub fn manhattan_distance(p: Vec3i, q: Vec3i) -> u32 {
    (p - q).l1_norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    /// Fixed order, also used as the tie-break order of the greedy agents.
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn unit(self) -> Vec3i {
        Vec3i::ZERO.with(self, 1)
    }

    pub fn name(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

/// The six translational moves of the hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::PosX,
        Action::NegX,
        Action::PosY,
        Action::NegY,
        Action::PosZ,
        Action::NegZ,
    ];

    pub fn along(axis: Axis, positive: bool) -> Action {
        match (axis, positive) {
            (Axis::X, true) => Action::PosX,
            (Axis::X, false) => Action::NegX,
            (Axis::Y, true) => Action::PosY,
            (Axis::Y, false) => Action::NegY,
            (Axis::Z, true) => Action::PosZ,
            (Axis::Z, false) => Action::NegZ,
        }
    }

    pub fn axis(self) -> Axis {
        match self {
            Action::PosX | Action::NegX => Axis::X,
            Action::PosY | Action::NegY => Axis::Y,
            Action::PosZ | Action::NegZ => Axis::Z,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Action::PosX | Action::PosY | Action::PosZ)
    }

    pub fn displacement(self) -> Vec3i {
        let u = self.axis().unit();
        if self.is_positive() {
            u
        } else {
            -u
        }
    }

    pub fn inverse(self) -> Action {
        Action::along(self.axis(), !self.is_positive())
    }

    /// Canonical token, e.g. `+X`.
    pub fn token(self) -> &'static str {
        match self {
            Action::PosX => "+X",
            Action::NegX => "-X",
            Action::PosY => "+Y",
            Action::NegY => "-Y",
            Action::PosZ => "+Z",
            Action::NegZ => "-Z",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown action token {0:?}")]
pub struct ParseActionError(pub String);

impl FromStr for Action {
    type Err = ParseActionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let mut chars = t.chars();
        let (sign, axis) = match (chars.next(), chars.next(), chars.next()) {
            (Some(sign), Some(axis), None) => (sign, axis),
            _ => return Err(ParseActionError(s.to_string())),
        };
        let positive = match sign {
            '+' => true,
            '-' | '\u{2212}' | '\u{2013}' => false,
            _ => return Err(ParseActionError(s.to_string())),
        };
        let axis = match axis.to_ascii_uppercase() {
            'X' => Axis::X,
            'Y' => Axis::Y,
            'Z' => Axis::Z,
            _ => return Err(ParseActionError(s.to_string())),
        };
        Ok(Action::along(axis, positive))
    }
}

impl Serialize for Action {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.token())
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Continuous 3-vector used by the camera and rasterizer.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        let l = self.length();
        Vec3::new(self.x / l, self.y / l, self.z / l)
    }

    pub fn scale(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn get(self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn with(mut self, axis: Axis, value: f64) -> Self {
        match axis {
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
        }
        self
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}
