//! Photon emission, tracing, and the photon dump format.
//!
//! Only light-specular (LS) paths are kept: a photon is stored at a
//! lambertian hit if and only if the first surface interaction after leaving
//! the light was specular. The path tracer discards exactly this family, so
//! the two renderers partition transport with no double counting.

use rayon::prelude::*;
use thiserror::Error;

use crate::math::{Rgb as GenRgb, Vector3};
use crate::rng::{stream, CounterRng};
use crate::scene::{sample_bsdf, AreaLight, Material, Ray, Scene};
use crate::{Float, Rgb, Vec3, T_MIN};

#[derive(Debug, Error)]
pub enum PhotonError {
    #[error("photon tracing needs at least one light in the scene")]
    NoLights,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("photon dump has wrong magic (expected \"PHD1\")")]
    MagicMismatch,
    #[error("photon dump version {found} unsupported (expected 1)")]
    VersionMismatch { found: u32 },
    #[error("photon dump truncated: {context}")]
    Truncated { context: &'static str },
}

/// A stored light-subpath sample. Geometry is kept in f32, mirroring the
/// dump record; all math widens to f64.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Photon {
    pub position: Vector3<f32>,
    /// Unit direction the photon arrived from, pointing away from the
    /// surface toward the previous path vertex.
    pub incident_dir: Vector3<f32>,
    /// Power in watts, already divided by the emitted path count N.
    pub power: GenRgb<f32>,
    pub surface_normal: Vector3<f32>,
    /// Surface interactions up to and including this store (>= 1).
    pub bounce_count: u32,
    /// First bounce after emission was specular; true for every stored
    /// photon by the LS retention rule.
    pub first_bounce_specular: bool,
}

/// All retained photons plus the emission bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotonMap {
    pub photons: Vec<Photon>,
    /// Total emitted photon paths N.
    pub n_emitted: u64,
    /// Stored (valid) photon count M; equals `photons.len()`.
    pub m_valid: u64,
}

impl PhotonMap {
    /// Maps traced with zero emissions carry no usable density information.
    pub fn is_usable(&self) -> bool {
        self.n_emitted >= 1
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.photons.iter().map(|p| p.position.widen()).collect()
    }
}

/// Sample one emission from an area light: origin uniform over the quad,
/// direction cosine-weighted about the emission normal. The returned power
/// is the full per-path power L_e * area * pi, deterministic given the
/// light (the cosine pdf cancels the cosine in the emitted flux).
pub fn emit_photon(light: &AreaLight, u: [Float; 4]) -> (Ray, Rgb) {
    let origin = light.point_at(u[0], u[1]);
    let dir = crate::scene::cosine_direction_about(light.normal(), u[2], u[3]);
    (Ray::new(origin, dir), light.power())
}

/// Trace `n_emit` photon paths and keep LS-path photons at lambertian hits.
///
/// Paths are independent streams keyed by (seed, path index), traced in
/// parallel and merged in path order, so output is identical for any thread
/// count.
pub fn trace_photons(
    scene: &Scene,
    n_emit: u64,
    max_bounces: u32,
    seed: u64,
) -> Result<PhotonMap, PhotonError> {
    if scene.lights.is_empty() {
        return Err(PhotonError::NoLights);
    }
    if n_emit == 0 {
        return Ok(PhotonMap { photons: Vec::new(), n_emitted: 0, m_valid: 0 });
    }

    const CHUNK: u64 = 4096;
    let chunks = n_emit.div_ceil(CHUNK);
    let buffers: Vec<Vec<Photon>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let lo = chunk * CHUNK;
            let hi = (lo + CHUNK).min(n_emit);
            let mut local = Vec::new();
            for path in lo..hi {
                trace_one_path(scene, n_emit, max_bounces, seed, path, &mut local);
            }
            local
        })
        .collect();

    let photons: Vec<Photon> = buffers.into_iter().flatten().collect();
    let m_valid = photons.len() as u64;
    Ok(PhotonMap { photons, n_emitted: n_emit, m_valid })
}

fn trace_one_path(
    scene: &Scene,
    n_emit: u64,
    max_bounces: u32,
    seed: u64,
    path: u64,
    out: &mut Vec<Photon>,
) {
    let mut rng = CounterRng::from_stream(seed, &[stream::PHOTON_PATH, path]);
    let n_lights = scene.lights.len() as u64;
    let light_ix = if n_lights == 1 { 0 } else { rng.next_below(n_lights) as usize };
    let light = &scene.lights[light_ix];
    let (mut ray, phi0) = emit_photon(
        light,
        [rng.next_f64(), rng.next_f64(), rng.next_f64(), rng.next_f64()],
    );
    // Uniform light selection; compensate with the light count.
    let phi0 = phi0 * n_lights as Float;

    let mut weight = Rgb::white();
    let mut ls_prefix = false;
    for bounce in 1..=max_bounces {
        let Some(hit) = scene.intersect(&ray, T_MIN, Float::INFINITY) else {
            break;
        };
        let Some(material_id) = hit.material_id() else {
            break; // absorbed by a light quad
        };
        let material = scene.material(material_id);
        if bounce == 1 {
            ls_prefix = material.is_specular();
            if !ls_prefix {
                // No store can ever happen on this path; drop it.
                break;
            }
        }
        if ls_prefix {
            if let Material::Lambertian { .. } = material {
                let power = phi0 * weight / n_emit as Float;
                out.push(Photon {
                    position: hit.position.to_f32(),
                    incident_dir: (-ray.dir).to_f32(),
                    power: power.to_f32(),
                    surface_normal: hit.normal.to_f32(),
                    bounce_count: bounce,
                    first_bounce_specular: true,
                });
            }
        }
        let u = (rng.next_f64(), rng.next_f64());
        let Some(sample) = sample_bsdf(material, hit.normal, -ray.dir, hit.front_face, u) else {
            break; // emissive primitive absorbs
        };
        weight *= sample.throughput_weight;
        if weight.is_black() {
            break;
        }
        if bounce >= 3 {
            let survive = weight.max_channel().clamp(0.05, 0.95);
            if rng.next_f64() >= survive {
                break;
            }
            weight /= survive;
        }
        ray = Ray::new(hit.position, sample.wi);
    }
}

const MAGIC: [u8; 4] = *b"PHD1";
const VERSION: u32 = 1;
const RECORD_BYTES: usize = 52;

/// Serialize a photon map (little-endian binary, 52 bytes per record).
pub fn photons_to_bytes(map: &PhotonMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 + 16 + map.photons.len() * RECORD_BYTES);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&map.n_emitted.to_le_bytes());
    out.extend_from_slice(&map.m_valid.to_le_bytes());
    for p in &map.photons {
        for v in [p.position, p.incident_dir] {
            out.extend_from_slice(&v.x.to_le_bytes());
            out.extend_from_slice(&v.y.to_le_bytes());
            out.extend_from_slice(&v.z.to_le_bytes());
        }
        out.extend_from_slice(&p.power.r.to_le_bytes());
        out.extend_from_slice(&p.power.g.to_le_bytes());
        out.extend_from_slice(&p.power.b.to_le_bytes());
        out.extend_from_slice(&p.surface_normal.x.to_le_bytes());
        out.extend_from_slice(&p.surface_normal.y.to_le_bytes());
        out.extend_from_slice(&p.surface_normal.z.to_le_bytes());
        out.extend_from_slice(&p.bounce_count.to_le_bytes());
    }
    out
}

pub fn photons_from_bytes(bytes: &[u8]) -> Result<PhotonMap, PhotonError> {
    let mut cur = Cursor { bytes, at: 0 };
    let magic = cur.take::<4>("magic")?;
    if magic != MAGIC {
        return Err(PhotonError::MagicMismatch);
    }
    let version = u32::from_le_bytes(cur.take::<4>("version")?);
    if version != VERSION {
        return Err(PhotonError::VersionMismatch { found: version });
    }
    let n_emitted = u64::from_le_bytes(cur.take::<8>("emitted count")?);
    let m_valid = u64::from_le_bytes(cur.take::<8>("photon count")?);
    let mut photons = Vec::with_capacity(m_valid as usize);
    for _ in 0..m_valid {
        let f = |c: &mut Cursor| -> Result<f32, PhotonError> {
            Ok(f32::from_le_bytes(c.take::<4>("photon record")?))
        };
        let position = Vector3::new(f(&mut cur)?, f(&mut cur)?, f(&mut cur)?);
        let incident_dir = Vector3::new(f(&mut cur)?, f(&mut cur)?, f(&mut cur)?);
        let power = GenRgb::new(f(&mut cur)?, f(&mut cur)?, f(&mut cur)?);
        let surface_normal = Vector3::new(f(&mut cur)?, f(&mut cur)?, f(&mut cur)?);
        let bounce_count = u32::from_le_bytes(cur.take::<4>("photon record")?);
        photons.push(Photon {
            position,
            incident_dir,
            power,
            surface_normal,
            bounce_count,
            first_bounce_specular: true,
        });
    }
    if cur.at != bytes.len() {
        return Err(PhotonError::Truncated { context: "trailing bytes after records" });
    }
    Ok(PhotonMap { photons, n_emitted, m_valid })
}

pub fn save_photons<P: AsRef<std::path::Path>>(map: &PhotonMap, path: P) -> Result<(), PhotonError> {
    std::fs::write(path, photons_to_bytes(map))?;
    Ok(())
}

pub fn load_photons<P: AsRef<std::path::Path>>(path: P) -> Result<PhotonMap, PhotonError> {
    photons_from_bytes(&std::fs::read(path)?)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn take<const N: usize>(&mut self, context: &'static str) -> Result<[u8; N], PhotonError> {
        if self.at + N > self.bytes.len() {
            return Err(PhotonError::Truncated { context });
        }
        let mut buf = [0u8; N];
        buf.copy_from_slice(&self.bytes[self.at..self.at + N]);
        self.at += N;
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Camera, Material, Primitive, Shape};

    pub(crate) fn caustic_test_scene() -> Scene {
        Scene {
            camera: Camera {
                position: Vec3::new(0.0, 1.5, 2.6),
                look_at: Vec3::new(0.0, 0.25, 0.0),
                up: Vec3::new(0.0, 1.0, 0.0),
                fov_degrees: 40.0,
                width: 32,
                height: 32,
            },
            material_names: vec!["floor".into(), "glass".into()],
            materials: vec![
                Material::Lambertian { albedo: Rgb::splat(0.65) },
                Material::Dielectric { ior: 1.5, tint: Rgb::white() },
            ],
            primitives: vec![
                Primitive {
                    shape: Shape::Quad {
                        corner: Vec3::new(-2.0, 0.0, 2.0),
                        edge_u: Vec3::new(4.0, 0.0, 0.0),
                        edge_v: Vec3::new(0.0, 0.0, -4.0),
                    },
                    material_id: 0,
                },
                Primitive {
                    shape: Shape::Sphere { center: Vec3::new(0.0, 0.6, 0.0), radius: 0.35 },
                    material_id: 1,
                },
            ],
            lights: vec![AreaLight {
                corner: Vec3::new(-0.3, 1.8, -0.3),
                edge_u: Vec3::new(0.6, 0.0, 0.0),
                edge_v: Vec3::new(0.0, 0.0, 0.6),
                radiance: Rgb::splat(40.0),
            }],
            background: Rgb::black(),
        }
    }

    fn diffuse_only_scene() -> Scene {
        let mut scene = caustic_test_scene();
        scene.materials[1] = Material::Lambertian { albedo: Rgb::splat(0.4) };
        scene
    }

    #[test]
    fn emission_stays_in_the_normal_hemisphere() {
        let scene = caustic_test_scene();
        let light = &scene.lights[0];
        let n = light.normal();
        let mut rng = CounterRng::from_stream(3, &[0]);
        for _ in 0..200 {
            let (ray, power) = emit_photon(
                light,
                [rng.next_f64(), rng.next_f64(), rng.next_f64(), rng.next_f64()],
            );
            assert!(n.dot(ray.dir) > 0.0);
            // Power is deterministic per light: L_e * area * pi.
            let expect = 40.0 * 0.36 * std::f64::consts::PI;
            assert!((power.r - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn emission_is_deterministic_in_u() {
        let scene = caustic_test_scene();
        let u = [0.3, 0.7, 0.1, 0.9];
        let (r1, p1) = emit_photon(&scene.lights[0], u);
        let (r2, p2) = emit_photon(&scene.lights[0], u);
        assert_eq!(r1.origin, r2.origin);
        assert_eq!(r1.dir, r2.dir);
        assert_eq!(p1, p2);
    }

    #[test]
    fn zero_emissions_yield_unusable_empty_map() {
        let scene = caustic_test_scene();
        let map = trace_photons(&scene, 0, 8, 1).unwrap();
        assert_eq!(map.m_valid, 0);
        assert_eq!(map.n_emitted, 0);
        assert!(!map.is_usable());
    }

    #[test]
    fn no_lights_is_a_configuration_error() {
        let mut scene = caustic_test_scene();
        scene.lights.clear();
        assert!(matches!(trace_photons(&scene, 10, 8, 1), Err(PhotonError::NoLights)));
    }

    #[test]
    fn diffuse_only_scene_stores_nothing() {
        let scene = diffuse_only_scene();
        // Oracle: no specular material exists, so no LS prefix is possible.
        assert!(scene.materials.iter().all(|m| !m.is_specular()));
        let map = trace_photons(&scene, 5_000, 8, 7).unwrap();
        assert_eq!(map.m_valid, 0);
        assert!(map.is_usable());
    }

    #[test]
    fn caustic_scene_stores_ls_photons() {
        let scene = caustic_test_scene();
        let map = trace_photons(&scene, 20_000, 8, 7).unwrap();
        assert!(map.m_valid > 100, "expected caustic photons, got {}", map.m_valid);
        for p in &map.photons {
            assert!(p.first_bounce_specular);
            assert!(p.bounce_count >= 2); // bounce 1 was the specular vertex
            assert!(p.power.r >= 0.0 && p.power.g >= 0.0 && p.power.b >= 0.0);
            assert!(p.incident_dir.widen().is_unit(1e-6));
            assert!(p.surface_normal.widen().is_unit(1e-6));
        }
    }

    #[test]
    fn stored_power_stays_below_emitted_power() {
        // Energy-conservation oracle: sum of stored photon powers (already
        // divided by N) must stay below the per-path emitted power.
        let scene = caustic_test_scene();
        let map = trace_photons(&scene, 50_000, 8, 11).unwrap();
        let total: f64 = map.photons.iter().map(|p| p.power.widen().luminance()).sum();
        let emitted = scene.lights[0].power().luminance();
        assert!(
            total <= emitted * (1.0 + 1e-9),
            "stored {total} exceeds emitted {emitted}"
        );
        assert!(total > 0.0);
    }

    #[test]
    fn tracing_is_deterministic() {
        let scene = caustic_test_scene();
        let a = trace_photons(&scene, 10_000, 8, 99).unwrap();
        let b = trace_photons(&scene, 10_000, 8, 99).unwrap();
        assert_eq!(photons_to_bytes(&a), photons_to_bytes(&b));
    }

    #[test]
    fn power_scales_inversely_with_emission_count() {
        let scene = caustic_test_scene();
        let small = trace_photons(&scene, 5_000, 8, 5).unwrap();
        let large = trace_photons(&scene, 50_000, 8, 5).unwrap();
        // Path i is the same stream in both runs, so the first photons agree
        // up to the 1/N scale.
        assert!(small.m_valid > 10);
        for (a, b) in small.photons.iter().zip(&large.photons).take(10) {
            assert_eq!(a.position, b.position);
            let ratio = a.power.r as f64 / b.power.r as f64;
            assert!((ratio - 10.0).abs() < 1e-4, "ratio {ratio}");
        }
        // Total stored energy is invariant in expectation. Estimate the
        // spread of the small-run total from independent seeds and require
        // the large-run total within 3 sigma of their mean.
        let sum = |m: &PhotonMap| m.photons.iter().map(|p| p.power.widen().luminance()).sum::<f64>();
        let totals: Vec<f64> = (100..108u64)
            .map(|seed| sum(&trace_photons(&scene, 5_000, 8, seed).unwrap()))
            .collect();
        let mean = totals.iter().sum::<f64>() / totals.len() as f64;
        let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (totals.len() - 1) as f64;
        let sigma = var.sqrt();
        let l = sum(&large);
        assert!(
            (l - mean).abs() <= 3.0 * sigma.max(1e-12),
            "large-run total {l} vs small-run mean {mean} (sigma {sigma})"
        );
    }

    #[test]
    fn dump_round_trip_is_field_identical() {
        let scene = caustic_test_scene();
        let map = trace_photons(&scene, 8_000, 8, 13).unwrap();
        let bytes = photons_to_bytes(&map);
        // 4 magic + 4 version + 8 N + 8 M, then the records.
        assert_eq!(bytes.len(), 24 + map.photons.len() * RECORD_BYTES);
        let back = photons_from_bytes(&bytes).unwrap();
        assert_eq!(map, back);
    }

    #[test]
    fn empty_map_round_trips() {
        let map = PhotonMap { photons: Vec::new(), n_emitted: 0, m_valid: 0 };
        let back = photons_from_bytes(&photons_to_bytes(&map)).unwrap();
        assert_eq!(map, back);
    }

    #[test]
    fn wrong_magic_is_reported() {
        let map = PhotonMap { photons: Vec::new(), n_emitted: 1, m_valid: 0 };
        let mut bytes = photons_to_bytes(&map);
        bytes[0] = b'X';
        assert!(matches!(photons_from_bytes(&bytes), Err(PhotonError::MagicMismatch)));
    }

    #[test]
    fn wrong_version_is_reported() {
        let map = PhotonMap { photons: Vec::new(), n_emitted: 1, m_valid: 0 };
        let mut bytes = photons_to_bytes(&map);
        bytes[4] = 9;
        assert!(matches!(
            photons_from_bytes(&bytes),
            Err(PhotonError::VersionMismatch { found: 9 })
        ));
    }

    #[test]
    fn truncated_dump_is_reported() {
        let scene = caustic_test_scene();
        let map = trace_photons(&scene, 4_000, 8, 17).unwrap();
        let bytes = photons_to_bytes(&map);
        assert!(matches!(
            photons_from_bytes(&bytes[..bytes.len() - 3]),
            Err(PhotonError::Truncated { .. })
        ));
    }

    #[test]
    fn emission_throughput_meets_rate_floor() {
        let scene = caustic_test_scene();
        let start = std::time::Instant::now();
        let n = 100_000u64;
        let map = trace_photons(&scene, n, 8, 23).unwrap();
        let secs = start.elapsed().as_secs_f64();
        assert!(map.is_usable());
        let rate = n as f64 / secs;
        assert!(rate > 1e5, "photon path rate {rate:.0}/s below 1e5/s");
    }
}
