use serde::{Deserialize, Serialize};

use crate::numcore::rng::{self, Rng};

pub type Vec3 = [f64; 3];

/// Largest coordinate any posed shape may reach.
pub const DOMAIN_LIMIT: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeKind {
    Sphere {
        radius: f64,
    },
    /// Axis-aligned box with the given half extents.
    Box {
        half: Vec3,
    },
    /// Ring in the xy-plane around the z axis.
    Torus {
        major: f64,
        minor: f64,
    },
    /// Capped cylinder along the y axis.
    Cylinder {
        radius: f64,
        half_height: f64,
    },
    /// Segment `[-half_length, half_length]` on the x axis, swept by `radius`.
    Capsule {
        half_length: f64,
        radius: f64,
    },
}

/// A closed primitive with exact signed distance, posed by a translation
/// and a uniform scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticShape {
    pub kind: ShapeKind,
    pub translation: Vec3,
    pub scale: f64,
}

#[inline]
fn len2(x: f64, y: f64) -> f64 {
    x.hypot(y)
}

#[inline]
fn len3(p: Vec3) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

impl ShapeKind {
    fn sdf(&self, p: Vec3) -> f64 {
        match *self {
            ShapeKind::Sphere { radius } => len3(p) - radius,
            ShapeKind::Box { half } => {
                let q = [p[0].abs() - half[0], p[1].abs() - half[1], p[2].abs() - half[2]];
                let outside = len3([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
                let inside = q[0].max(q[1]).max(q[2]).min(0.0);
                outside + inside
            }
            ShapeKind::Torus { major, minor } => len2(len2(p[0], p[1]) - major, p[2]) - minor,
            ShapeKind::Cylinder { radius, half_height } => {
                let dx = len2(p[0], p[2]) - radius;
                let dy = p[1].abs() - half_height;
                dx.max(dy).min(0.0) + len2(dx.max(0.0), dy.max(0.0))
            }
            ShapeKind::Capsule { half_length, radius } => {
                let cx = p[0].clamp(-half_length, half_length);
                len3([p[0] - cx, p[1], p[2]]) - radius
            }
        }
    }

    /// Half extents of the axis-aligned bounding box before posing.
    pub fn half_extents(&self) -> Vec3 {
        match *self {
            ShapeKind::Sphere { radius } => [radius; 3],
            ShapeKind::Box { half } => half,
            ShapeKind::Torus { major, minor } => [major + minor, major + minor, minor],
            ShapeKind::Cylinder { radius, half_height } => [radius, half_height, radius],
            ShapeKind::Capsule { half_length, radius } => [half_length + radius, radius, radius],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Sphere { .. } => "sphere",
            ShapeKind::Box { .. } => "box",
            ShapeKind::Torus { .. } => "torus",
            ShapeKind::Cylinder { .. } => "cylinder",
            ShapeKind::Capsule { .. } => "capsule",
        }
    }
}

impl AnalyticShape {
    pub fn new(kind: ShapeKind) -> Self {
        Self {
            kind,
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn sphere(radius: f64) -> Self {
        Self::new(ShapeKind::Sphere { radius })
    }

    pub fn with_pose(mut self, translation: Vec3, scale: f64) -> Self {
        self.translation = translation;
        self.scale = scale;
        self
    }

    /// Exact signed distance; negative inside.
    pub fn sdf(&self, p: Vec3) -> f64 {
        let s = self.scale;
        let t = self.translation;
        let local = [(p[0] - t[0]) / s, (p[1] - t[1]) / s, (p[2] - t[2]) / s];
        s * self.kind.sdf(local)
    }

    /// Central-difference gradient of the SDF.
    pub fn gradient(&self, p: Vec3) -> Vec3 {
        let h = 1e-6;
        let mut g = [0.0; 3];
        for (a, ga) in g.iter_mut().enumerate() {
            let mut hi = p;
            let mut lo = p;
            hi[a] += h;
            lo[a] -= h;
            *ga = (self.sdf(hi) - self.sdf(lo)) / (2.0 * h);
        }
        g
    }

    pub fn normal(&self, p: Vec3) -> Vec3 {
        normalize(self.gradient(p))
    }

    /// Posed axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let e = self.kind.half_extents();
        let t = self.translation;
        let s = self.scale;
        (
            [t[0] - s * e[0], t[1] - s * e[1], t[2] - s * e[2]],
            [t[0] + s * e[0], t[1] + s * e[1], t[2] + s * e[2]],
        )
    }

    pub fn fits_domain(&self) -> bool {
        let (lo, hi) = self.bounds();
        lo.iter().chain(&hi).all(|v| v.abs() <= DOMAIN_LIMIT + 1e-12)
    }

    /// Projects `p` onto the zero level set with a few Newton steps.
    pub fn project(&self, mut p: Vec3) -> Vec3 {
        for _ in 0..4 {
            let d = self.sdf(p);
            let g = self.gradient(p);
            let gg = g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
            if gg < 1e-12 {
                break;
            }
            for a in 0..3 {
                p[a] -= d * g[a] / gg;
            }
        }
        p
    }
}

pub fn normalize(v: Vec3) -> Vec3 {
    let n = len3(v);
    if n > 0.0 {
        [v[0] / n, v[1] / n, v[2] / n]
    } else {
        [0.0, 0.0, 1.0]
    }
}

/// Randomised shape families standing in for object categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeFamily {
    Sphere,
    Box,
    Torus,
    Cylinder,
    Capsule,
    Slab,
    ThinTorus,
    Disc,
    Rod,
}

impl ShapeFamily {
    /// Families in category order; the first `C` are used for `C` categories.
    pub const ALL: [ShapeFamily; 9] = [
        ShapeFamily::Sphere,
        ShapeFamily::Box,
        ShapeFamily::Torus,
        ShapeFamily::Cylinder,
        ShapeFamily::Capsule,
        ShapeFamily::Slab,
        ShapeFamily::ThinTorus,
        ShapeFamily::Disc,
        ShapeFamily::Rod,
    ];

    pub fn for_category(c: usize) -> ShapeFamily {
        Self::ALL[c % Self::ALL.len()]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ShapeFamily::Sphere => "sphere",
            ShapeFamily::Box => "box",
            ShapeFamily::Torus => "torus",
            ShapeFamily::Cylinder => "cylinder",
            ShapeFamily::Capsule => "capsule",
            ShapeFamily::Slab => "slab",
            ShapeFamily::ThinTorus => "thin_torus",
            ShapeFamily::Disc => "disc",
            ShapeFamily::Rod => "rod",
        }
    }

    fn kind(&self, r: &mut Rng) -> ShapeKind {
        let mut u = |lo: f64, hi: f64| rng::uniform(r, lo, hi);
        match self {
            ShapeFamily::Sphere => ShapeKind::Sphere { radius: u(0.3, 0.6) },
            ShapeFamily::Box => ShapeKind::Box {
                half: [u(0.2, 0.55), u(0.2, 0.55), u(0.2, 0.55)],
            },
            ShapeFamily::Torus => ShapeKind::Torus {
                major: u(0.35, 0.55),
                minor: u(0.1, 0.2),
            },
            ShapeFamily::Cylinder => ShapeKind::Cylinder {
                radius: u(0.2, 0.45),
                half_height: u(0.25, 0.6),
            },
            ShapeFamily::Capsule => ShapeKind::Capsule {
                half_length: u(0.15, 0.4),
                radius: u(0.15, 0.35),
            },
            ShapeFamily::Slab => ShapeKind::Box {
                half: [u(0.45, 0.7), u(0.45, 0.7), u(0.08, 0.15)],
            },
            ShapeFamily::ThinTorus => ShapeKind::Torus {
                major: u(0.45, 0.65),
                minor: u(0.05, 0.09),
            },
            ShapeFamily::Disc => ShapeKind::Cylinder {
                radius: u(0.45, 0.7),
                half_height: u(0.06, 0.12),
            },
            ShapeFamily::Rod => ShapeKind::Capsule {
                half_length: u(0.45, 0.6),
                radius: u(0.06, 0.12),
            },
        }
    }

    /// Draws one instance that fits inside the domain.
    pub fn sample(&self, r: &mut Rng) -> AnalyticShape {
        let kind = self.kind(r);
        let t = [
            rng::uniform(r, -0.1, 0.1),
            rng::uniform(r, -0.1, 0.1),
            rng::uniform(r, -0.1, 0.1),
        ];
        let mut scale = rng::uniform(r, 0.9, 1.1);
        let e = kind.half_extents();
        for a in 0..3 {
            let room = (DOMAIN_LIMIT - t[a].abs()) / e[a];
            scale = scale.min(room);
        }
        AnalyticShape {
            kind,
            translation: t,
            scale,
        }
    }
}
