//! Unidirectional path tracer with next-event estimation and an optional
//! exclusion of light-specular transport.
//!
//! A path belongs to the LS family when the vertex adjacent to the light is
//! specular. In `Mode::NoLs` such emission hits contribute nothing — the
//! exact complement of the photon tracer's retention rule, so the two
//! renderers partition transport. NEE is untouched by the mode switch: it
//! only fires at non-specular vertices and shadow rays treat glass as an
//! occluder, so NEE never produces an LS path.

use rayon::prelude::*;

use crate::density::ShadingPoint;
use crate::image::Image;
use crate::rng::{stream, CounterRng};
use crate::scene::{eval_bsdf, sample_bsdf, Material, Ray, Scene};
use crate::{Float, Rgb, T_MIN};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Full,
    NoLs,
}

#[derive(Clone, Copy, Debug)]
pub struct RenderJob<'a> {
    pub scene: &'a Scene,
    pub spp: u32,
    pub max_bounces: u32,
    pub mode: Mode,
    pub seed: u64,
}

/// Balance-heuristic weight for strategy a against strategy b.
pub fn balance_heuristic(pdf_a: Float, pdf_b: Float) -> Float {
    if pdf_a <= 0.0 {
        0.0
    } else {
        pdf_a / (pdf_a + pdf_b)
    }
}

/// Solid-angle pdf of next-event estimation producing the point `to` on
/// light `light_id`, as seen from `from`.
fn nee_pdf_solid(scene: &Scene, light_id: usize, from: crate::Vec3, to: crate::Vec3) -> Float {
    let light = &scene.lights[light_id];
    let delta = to - from;
    let dist2 = delta.length_squared();
    let cos_light = light.normal().dot(-(delta / dist2.sqrt()));
    if cos_light <= 0.0 {
        return 0.0;
    }
    let pdf_area = 1.0 / (light.area() * scene.lights.len() as Float);
    pdf_area * dist2 / cos_light
}

/// Estimate radiance arriving along `ray`.
pub fn trace_camera_path(
    scene: &Scene,
    ray: Ray,
    mode: Mode,
    max_bounces: u32,
    rng: &mut CounterRng,
) -> Rgb {
    let mut radiance = Rgb::black();
    let mut throughput = Rgb::white();
    let mut ray = ray;
    let mut prev_specular = false;
    let mut prev_bsdf_pdf = 0.0;

    for bounce in 0..max_bounces {
        let Some(hit) = scene.intersect(&ray, T_MIN, Float::INFINITY) else {
            radiance += throughput * scene.background;
            break;
        };
        let material_id = match hit.target {
            crate::scene::HitTarget::Light { light_id } => {
                if hit.front_face {
                    let le = scene.lights[light_id].radiance;
                    if bounce == 0 {
                        // Directly visible light; counted in both modes.
                        radiance += throughput * le;
                    } else if prev_specular {
                        // LS family: light-adjacent vertex is specular.
                        if mode == Mode::Full {
                            radiance += throughput * le;
                        }
                    } else {
                        let pdf_nee = nee_pdf_solid(scene, light_id, ray.origin, hit.position);
                        let w = balance_heuristic(prev_bsdf_pdf, pdf_nee);
                        radiance += throughput * le * w;
                    }
                }
                break; // light quads absorb
            }
            crate::scene::HitTarget::Primitive { material_id } => material_id,
        };
        let material = scene.material(material_id);

        if let Material::Emissive { radiance: le } = *material {
            // Emissive primitives are not light-sampled; full weight here.
            if hit.front_face {
                radiance += throughput * le;
            }
            break;
        }

        let wo = -ray.dir;
        if !material.is_specular() && !scene.lights.is_empty() {
            // Next-event estimation at a diffuse vertex.
            let (light_ix, point, light_n, pdf_area) =
                scene.sample_light_point(rng.next_f64(), rng.next_f64(), rng.next_f64());
            let delta = point - hit.position;
            let dist2 = delta.length_squared();
            if dist2 > 0.0 {
                let dist = dist2.sqrt();
                let wi = delta / dist;
                let cos_surf = hit.normal.dot(wi);
                let cos_light = light_n.dot(-wi);
                if cos_surf > 0.0 && cos_light > 1e-9 && scene.unoccluded(hit.position, point) {
                    let pdf_nee = pdf_area * dist2 / cos_light;
                    let f = eval_bsdf(material, hit.normal, wo, wi);
                    let pdf_bsdf = cos_surf / std::f64::consts::PI;
                    let w = balance_heuristic(pdf_nee, pdf_bsdf);
                    radiance +=
                        throughput * f * scene.lights[light_ix].radiance * (cos_surf / pdf_nee * w);
                }
            }
        }

        let u = (rng.next_f64(), rng.next_f64());
        let Some(sample) = sample_bsdf(material, hit.normal, wo, hit.front_face, u) else {
            break;
        };
        throughput *= sample.throughput_weight;
        if throughput.is_black() {
            break;
        }
        prev_specular = sample.is_specular;
        prev_bsdf_pdf = sample.pdf_solid;

        // Same roulette policy as photon tracing: free for the first three
        // surface interactions, then throughput-proportional survival.
        if bounce + 1 >= 3 {
            let survive = throughput.max_channel().clamp(0.05, 0.95);
            if rng.next_f64() >= survive {
                break;
            }
            throughput /= survive;
        }
        ray = Ray::new(hit.position, sample.wi);
    }
    radiance
}

/// Render with `spp` samples per pixel. Sampling is stratified over the
/// pixel interior when spp is a perfect square, jittered otherwise; every
/// (pixel, sample) pair owns its RNG stream, so output bytes do not depend
/// on the thread count.
pub fn render_pt(job: &RenderJob) -> Image {
    let scene = job.scene;
    let width = scene.camera.width as usize;
    let height = scene.camera.height as usize;
    let strata = (job.spp as f64).sqrt() as u32;
    let stratified = strata * strata == job.spp;

    let mut img = Image::new(width, height);
    img.pixels_mut()
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, out) in row.iter_mut().enumerate() {
                let pixel_index = (y * width + x) as u64;
                let mut acc = Rgb::black();
                for s in 0..job.spp {
                    let mut rng = CounterRng::from_stream(
                        job.seed,
                        &[stream::PIXEL_SAMPLE, pixel_index, s as u64],
                    );
                    let (jx, jy) = if stratified {
                        let sx = s % strata;
                        let sy = s / strata;
                        (
                            (sx as Float + rng.next_f64()) / strata as Float,
                            (sy as Float + rng.next_f64()) / strata as Float,
                        )
                    } else {
                        (rng.next_f64(), rng.next_f64())
                    };
                    let ray = scene.camera.primary_ray(x as u32, y as u32, jx, jy);
                    acc += trace_camera_path(scene, ray, job.mode, job.max_bounces, &mut rng);
                }
                *out = acc / job.spp as Float;
            }
        });
    img
}

/// Walk a camera ray through specular interactions to the first diffuse
/// surface; the returned throughput is the product of specular weights
/// picked up along the way. Used for shading-point selection.
pub fn first_diffuse_hit(
    scene: &Scene,
    mut ray: Ray,
    max_depth: u32,
    rng: &mut CounterRng,
) -> Option<(ShadingPoint, Rgb)> {
    let mut throughput = Rgb::white();
    for _ in 0..max_depth {
        let hit = scene.intersect(&ray, T_MIN, Float::INFINITY)?;
        let material_id = hit.material_id()?;
        match *scene.material(material_id) {
            Material::Lambertian { albedo } => {
                return Some((
                    ShadingPoint {
                        position: hit.position,
                        normal: hit.normal,
                        wo: -ray.dir,
                        albedo,
                    },
                    throughput,
                ));
            }
            Material::Emissive { .. } => return None,
            ref specular => {
                let u = (rng.next_f64(), rng.next_f64());
                let sample = sample_bsdf(specular, hit.normal, -ray.dir, hit.front_face, u)?;
                throughput *= sample.throughput_weight;
                ray = Ray::new(hit.position, sample.wi);
            }
        }
    }
    None
}
