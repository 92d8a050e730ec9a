//! Scene representation: shapes, materials, area lights, camera, and
//! ray-scene intersection.
//!
//! Scenes are immutable after loading and safe to share across threads.
//! Intersection is a linear scan over primitives and light quads; the test
//! scenes stay well under a thousand primitives, so the photon kd-tree is
//! the only spatial index that matters.

mod bsdf;
mod format;

pub use bsdf::{
    dielectric_branch_probabilities, eval_bsdf, fresnel_dielectric, sample_bsdf, BsdfSample,
};
pub use format::{load_scene, parse_scene, save_scene, scene_to_string};

use thiserror::Error;

use crate::math::Onb;
use crate::{Float, Rgb, Vec3};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid scene: {0}")]
    Validation(String),
}

/// A ray with unit direction.
#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Self { origin, dir }
    }

    pub fn at(&self, t: Float) -> Vec3 {
        self.origin + self.dir * t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: Float },
    Triangle { v0: Vec3, v1: Vec3, v2: Vec3 },
    Quad { corner: Vec3, edge_u: Vec3, edge_v: Vec3 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub material_id: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Material {
    Lambertian { albedo: Rgb },
    Mirror { reflectance: Rgb },
    Dielectric { ior: Float, tint: Rgb },
    Emissive { radiance: Rgb },
}

impl Material {
    /// Mirror and dielectric lobes are delta distributions.
    pub fn is_specular(&self) -> bool {
        matches!(self, Material::Mirror { .. } | Material::Dielectric { .. })
    }
}

/// One-sided quad emitter; radiates along `normal()` only.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AreaLight {
    pub corner: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
    pub radiance: Rgb,
}

impl AreaLight {
    pub fn normal(&self) -> Vec3 {
        self.edge_u.cross(self.edge_v).normalized()
    }

    pub fn area(&self) -> Float {
        self.edge_u.cross(self.edge_v).length()
    }

    /// Total emitted power per channel: L_e * area * pi.
    pub fn power(&self) -> Rgb {
        self.radiance * (self.area() * std::f64::consts::PI)
    }

    pub fn point_at(&self, u: Float, v: Float) -> Vec3 {
        self.corner + self.edge_u * u + self.edge_v * v
    }
}

/// Pinhole camera; `fov_degrees` is the vertical field of view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_degrees: Float,
    pub width: u32,
    pub height: u32,
}

impl Camera {
    /// Ray through pixel (x, y) at sub-pixel offset (jx, jy) in [0, 1).
    pub fn primary_ray(&self, x: u32, y: u32, jx: Float, jy: Float) -> Ray {
        let forward = (self.look_at - self.position).normalized();
        let right = forward.cross(self.up).normalized();
        let up = right.cross(forward);
        let tan_half = (self.fov_degrees.to_radians() * 0.5).tan();
        let aspect = self.width as Float / self.height as Float;
        let sx = ((x as Float + jx) / self.width as Float) * 2.0 - 1.0;
        let sy = 1.0 - 2.0 * ((y as Float + jy) / self.height as Float);
        let dir = forward + right * (sx * tan_half * aspect) + up * (sy * tan_half);
        Ray::new(self.position, dir.normalized())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub camera: Camera,
    pub material_names: Vec<String>,
    pub materials: Vec<Material>,
    pub primitives: Vec<Primitive>,
    pub lights: Vec<AreaLight>,
    pub background: Rgb,
}

/// What a ray hit: scene geometry or a light quad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HitTarget {
    Primitive { material_id: usize },
    Light { light_id: usize },
}

/// Nearest intersection along a ray. `normal` is flipped to face the
/// incoming ray; `front_face` records the original orientation so
/// refraction can tell inside from outside.
#[derive(Clone, Copy, Debug)]
pub struct Hit {
    pub t: Float,
    pub position: Vec3,
    pub normal: Vec3,
    pub front_face: bool,
    pub target: HitTarget,
}

impl Hit {
    pub fn is_light(&self) -> bool {
        matches!(self.target, HitTarget::Light { .. })
    }

    pub fn material_id(&self) -> Option<usize> {
        match self.target {
            HitTarget::Primitive { material_id } => Some(material_id),
            HitTarget::Light { .. } => None,
        }
    }
}

impl Scene {
    /// Nearest hit with t in (t_min, t_max), across primitives and lights.
    pub fn intersect(&self, ray: &Ray, t_min: Float, t_max: Float) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        let mut closest = t_max;
        for prim in &self.primitives {
            if let Some((t, outward)) = intersect_shape(&prim.shape, ray, t_min, closest) {
                closest = t;
                best = Some(make_hit(ray, t, outward, HitTarget::Primitive {
                    material_id: prim.material_id,
                }));
            }
        }
        for (light_id, light) in self.lights.iter().enumerate() {
            let shape = Shape::Quad {
                corner: light.corner,
                edge_u: light.edge_u,
                edge_v: light.edge_v,
            };
            if let Some((t, outward)) = intersect_shape(&shape, ray, t_min, closest) {
                closest = t;
                best = Some(make_hit(ray, t, outward, HitTarget::Light { light_id }));
            }
        }
        best
    }

    /// True if the open segment from `from` toward `to` is unobstructed.
    pub fn unoccluded(&self, from: Vec3, to: Vec3) -> bool {
        let delta = to - from;
        let dist = delta.length();
        let ray = Ray::new(from, delta / dist);
        self.intersect(&ray, crate::T_MIN, dist * (1.0 - 1e-6)).is_none()
    }

    pub fn material(&self, id: usize) -> &Material {
        &self.materials[id]
    }

    pub fn material_id(&self, name: &str) -> Option<usize> {
        self.material_names.iter().position(|n| n == name)
    }

    /// Uniformly sample a point on a uniformly chosen light.
    /// Returns (light index, point, emission normal, area pdf including
    /// the light-selection probability).
    pub fn sample_light_point(&self, u_light: Float, u1: Float, u2: Float) -> (usize, Vec3, Vec3, Float) {
        debug_assert!(!self.lights.is_empty());
        let n = self.lights.len();
        let ix = ((u_light * n as Float) as usize).min(n - 1);
        let light = &self.lights[ix];
        let point = light.point_at(u1, u2);
        let pdf_area = 1.0 / (light.area() * n as Float);
        (ix, point, light.normal(), pdf_area)
    }

    /// Structural validity checks; error messages name the violated
    /// invariant.
    pub fn validate(&self) -> Result<(), SceneError> {
        let err = |msg: String| Err(SceneError::Validation(msg));
        if self.materials.len() != self.material_names.len() {
            return err("material name table out of sync".into());
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            return err("camera: width and height must be positive".into());
        }
        if !(self.camera.fov_degrees > 0.0 && self.camera.fov_degrees < 180.0) {
            return err("camera: fov_degrees must lie in (0, 180)".into());
        }
        let view = self.camera.look_at - self.camera.position;
        if view.length() == 0.0 || view.normalized().cross(self.camera.up).length() < 1e-9 {
            return err("camera: up must not be parallel to the view direction".into());
        }
        for (i, m) in self.materials.iter().enumerate() {
            let name = &self.material_names[i];
            let in_unit = |c: Rgb| c.min_channel() >= 0.0 && c.max_channel() <= 1.0;
            match *m {
                Material::Lambertian { albedo } if !in_unit(albedo) => {
                    return err(format!("material {name}: albedo must be in [0,1]"));
                }
                Material::Mirror { reflectance } if !in_unit(reflectance) => {
                    return err(format!("material {name}: reflectance must be in [0,1]"));
                }
                Material::Dielectric { ior, tint } => {
                    if ior <= 0.0 {
                        return err(format!("material {name}: ior must be positive"));
                    }
                    if !in_unit(tint) {
                        return err(format!("material {name}: tint must be in [0,1]"));
                    }
                }
                Material::Emissive { radiance } if radiance.min_channel() < 0.0 => {
                    return err(format!("material {name}: radiance must be non-negative"));
                }
                _ => {}
            }
        }
        for (i, prim) in self.primitives.iter().enumerate() {
            if prim.material_id >= self.materials.len() {
                return err(format!("primitive {i}: unknown material id"));
            }
            match prim.shape {
                Shape::Sphere { radius, .. } => {
                    if !(radius > 0.0) {
                        return err(format!("primitive {i}: sphere radius must be positive"));
                    }
                }
                Shape::Triangle { v0, v1, v2 } => {
                    if (v1 - v0).cross(v2 - v0).length() < 1e-12 {
                        return err(format!("primitive {i}: triangle vertices are collinear"));
                    }
                }
                Shape::Quad { edge_u, edge_v, .. } => {
                    if edge_u.cross(edge_v).length() < 1e-12 {
                        return err(format!("primitive {i}: quad edges are degenerate"));
                    }
                }
            }
        }
        for (i, light) in self.lights.iter().enumerate() {
            if light.area() < 1e-12 {
                return err(format!("light {i}: zero-area quad"));
            }
            if light.radiance.min_channel() < 0.0 {
                return err(format!("light {i}: radiance must be non-negative"));
            }
        }
        if self.background.min_channel() < 0.0 {
            return err("background: radiance must be non-negative".into());
        }
        Ok(())
    }
}

fn make_hit(ray: &Ray, t: Float, outward_normal: Vec3, target: HitTarget) -> Hit {
    let front_face = ray.dir.dot(outward_normal) < 0.0;
    let normal = if front_face { outward_normal } else { -outward_normal };
    Hit {
        t,
        position: ray.at(t),
        normal,
        front_face,
        target,
    }
}

/// Shape intersection returning (t, outward geometric normal).
fn intersect_shape(shape: &Shape, ray: &Ray, t_min: Float, t_max: Float) -> Option<(Float, Vec3)> {
    match *shape {
        Shape::Sphere { center, radius } => {
            let oc = ray.origin - center;
            let b = oc.dot(ray.dir);
            let c = oc.length_squared() - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let sqrt_d = disc.sqrt();
            let mut t = -b - sqrt_d;
            if t <= t_min || t >= t_max {
                t = -b + sqrt_d;
                if t <= t_min || t >= t_max {
                    return None;
                }
            }
            Some((t, (ray.at(t) - center) / radius))
        }
        Shape::Triangle { v0, v1, v2 } => {
            // Moller-Trumbore.
            let e1 = v1 - v0;
            let e2 = v2 - v0;
            let pvec = ray.dir.cross(e2);
            let det = e1.dot(pvec);
            if det.abs() < 1e-14 {
                return None;
            }
            let inv_det = 1.0 / det;
            let tvec = ray.origin - v0;
            let u = tvec.dot(pvec) * inv_det;
            if !(0.0..=1.0).contains(&u) {
                return None;
            }
            let qvec = tvec.cross(e1);
            let v = ray.dir.dot(qvec) * inv_det;
            if v < 0.0 || u + v > 1.0 {
                return None;
            }
            let t = e2.dot(qvec) * inv_det;
            if t <= t_min || t >= t_max {
                return None;
            }
            Some((t, e1.cross(e2).normalized()))
        }
        Shape::Quad { corner, edge_u, edge_v } => {
            let n = edge_u.cross(edge_v);
            let denom = n.dot(ray.dir);
            if denom.abs() < 1e-14 {
                return None;
            }
            let t = n.dot(corner - ray.origin) / denom;
            if t <= t_min || t >= t_max {
                return None;
            }
            let d = ray.at(t) - corner;
            let nn = n.length_squared();
            let u = d.cross(edge_v).dot(n) / nn;
            let v = edge_u.cross(d).dot(n) / nn;
            if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
                return None;
            }
            Some((t, n.normalized()))
        }
    }
}

/// Cosine-weighted direction about `normal` (used for light emission and
/// lambertian scattering).
pub fn cosine_direction_about(normal: Vec3, u1: Float, u2: Float) -> Vec3 {
    Onb::from_normal(normal).to_world(crate::math::cosine_sample_hemisphere(u1, u2))
}
