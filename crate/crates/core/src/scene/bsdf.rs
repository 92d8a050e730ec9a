//! BSDF evaluation and sampling.
//!
//! Conventions: all directions are unit length and point away from the
//! surface; `n` is already flipped toward the incoming ray. Delta lobes
//! (mirror, dielectric) evaluate to zero under point evaluation and report
//! pdf_solid = 1 when sampled.

use crate::math::{reflect, refract};
use crate::scene::{cosine_direction_about, Material};
use crate::{Float, Rgb, Vec3};

/// One BSDF importance sample.
///
/// `throughput_weight` is f * |cos theta_i| / pdf — for lambertian the
/// cosine and pdf cancel, leaving exactly the albedo; for delta lobes it is
/// the reflectance/tint.
#[derive(Clone, Copy, Debug)]
pub struct BsdfSample {
    pub wi: Vec3,
    pub pdf_solid: Float,
    pub throughput_weight: Rgb,
    pub is_specular: bool,
}

/// Pointwise BSDF value in units of 1/sr. Zero for delta lobes and for
/// directions below the lambertian hemisphere.
pub fn eval_bsdf(material: &Material, n: Vec3, wo: Vec3, wi: Vec3) -> Rgb {
    match *material {
        Material::Lambertian { albedo } => {
            if n.dot(wi) > 0.0 && n.dot(wo) > 0.0 {
                albedo * (1.0 / std::f64::consts::PI)
            } else {
                Rgb::black()
            }
        }
        Material::Mirror { .. } | Material::Dielectric { .. } | Material::Emissive { .. } => {
            Rgb::black()
        }
    }
}

/// Exact unpolarized Fresnel reflectance for a dielectric interface.
/// `cos_i` is the incident cosine against the interface normal (positive).
pub fn fresnel_dielectric(cos_i: Float, eta_i: Float, eta_t: Float) -> Float {
    let cos_i = cos_i.clamp(0.0, 1.0);
    let sin2_t = (eta_i / eta_t).powi(2) * (1.0 - cos_i * cos_i);
    if sin2_t >= 1.0 {
        return 1.0; // total internal reflection
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let r_par = (eta_t * cos_i - eta_i * cos_t) / (eta_t * cos_i + eta_i * cos_t);
    let r_perp = (eta_i * cos_i - eta_t * cos_t) / (eta_i * cos_i + eta_t * cos_t);
    0.5 * (r_par * r_par + r_perp * r_perp)
}

/// Sample an incident direction for `wo` leaving the surface.
///
/// `front_face` tells a dielectric whether the ray arrived from outside the
/// medium. Returns `None` for emissive materials (pure absorbers) and for
/// degenerate geometry.
pub fn sample_bsdf(
    material: &Material,
    n: Vec3,
    wo: Vec3,
    front_face: bool,
    u: (Float, Float),
) -> Option<BsdfSample> {
    match *material {
        Material::Lambertian { albedo } => {
            if n.dot(wo) <= 0.0 {
                return None;
            }
            let wi = cosine_direction_about(n, u.0, u.1);
            let cos_i = n.dot(wi).max(0.0);
            Some(BsdfSample {
                wi,
                pdf_solid: cos_i / std::f64::consts::PI,
                throughput_weight: albedo,
                is_specular: false,
            })
        }
        Material::Mirror { reflectance } => {
            let wi = reflect(wo, n);
            if n.dot(wi) <= 0.0 {
                return None;
            }
            Some(BsdfSample {
                wi,
                pdf_solid: 1.0,
                throughput_weight: reflectance,
                is_specular: true,
            })
        }
        Material::Dielectric { ior, tint } => {
            let (eta_i, eta_t) = if front_face { (1.0, ior) } else { (ior, 1.0) };
            let cos_i = n.dot(wo);
            let f = fresnel_dielectric(cos_i, eta_i, eta_t);
            let wi = if u.0 < f {
                reflect(wo, n)
            } else {
                match refract(wo, n, eta_i / eta_t) {
                    Some(t) => t,
                    // Unreachable when f is exact, but guard the boundary.
                    None => reflect(wo, n),
                }
            };
            Some(BsdfSample {
                wi,
                pdf_solid: 1.0,
                throughput_weight: tint,
                is_specular: true,
            })
        }
        Material::Emissive { .. } => None,
    }
}

/// Reflect/refract branch probabilities for a dielectric, exposed for the
/// energy-split checks. They sum to one except under total internal
/// reflection, where the reflect probability is one.
pub fn dielectric_branch_probabilities(
    ior: Float,
    cos_i: Float,
    front_face: bool,
) -> (Float, Float) {
    let (eta_i, eta_t) = if front_face { (1.0, ior) } else { (ior, 1.0) };
    let f = fresnel_dielectric(cos_i, eta_i, eta_t);
    (f, 1.0 - f)
}
