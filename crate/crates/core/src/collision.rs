//! Sphere proxies against cuboids, spheres and cylinders.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::transform::RigidTransform;

/// Solid primitive centered on its frame origin. Cylinders run along local z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapePrimitive {
    Cuboid { extents: [f64; 3] },
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
}

impl ShapePrimitive {
    pub fn is_valid(&self) -> bool {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            ShapePrimitive::Cuboid { extents } => extents.iter().all(|&e| positive(e)),
            ShapePrimitive::Sphere { radius } => positive(radius),
            ShapePrimitive::Cylinder { radius, height } => positive(radius) && positive(height),
        }
    }

    /// Signed distance from a point in the shape frame to the surface:
    /// positive outside, negative inside.
    pub fn signed_distance_local(&self, p: &Vector3<f64>) -> f64 {
        match *self {
            ShapePrimitive::Sphere { radius } => p.norm() - radius,
            ShapePrimitive::Cuboid { extents } => {
                let half = Vector3::from(extents) * 0.5;
                let q = p.abs() - half;
                let outside = q.map(|v| v.max(0.0)).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
            ShapePrimitive::Cylinder { radius, height } => {
                let dr = p.xy().norm() - radius;
                let dz = p.z.abs() - height * 0.5;
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                outside + dr.max(dz).min(0.0)
            }
        }
    }

    pub fn signed_distance(&self, pose: &RigidTransform<f64>, point: &Vector3<f64>) -> f64 {
        self.signed_distance_local(&pose.invert().transform_point(point))
    }

    /// Overlap depth of a sphere with this shape; positive when they intersect.
    pub fn sphere_penetration(&self, pose: &RigidTransform<f64>, center: &Vector3<f64>, radius: f64) -> f64 {
        radius - self.signed_distance(pose, center)
    }
}
