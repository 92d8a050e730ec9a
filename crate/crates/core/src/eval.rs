//! LS-layer rendering and the (K, M) evaluation grid.
//!
//! The LS layer is the image of light-specular transport alone: camera rays
//! walk through specular surfaces to their first diffuse hit, where a
//! density estimate (classic or learned) reconstructs the caustic radiance.
//! Grid cells share one set of shading points per scene so method
//! comparisons see identical query geometry.

use rayon::prelude::*;
use thiserror::Error;

use crate::density::{estimate_radiance_pm, KernelKind, ShadingPoint};
use crate::image::Image;
use crate::kdtree::KnnIndex;
use crate::metrics::{psnr, rmse, ssim};
use crate::nn::{estimate_radiance_learned, NetParams};
use crate::photon::{trace_photons, PhotonError, PhotonMap};
use crate::pt::first_diffuse_hit;
use crate::rng::{stream, CounterRng};
use crate::scene::Scene;
use crate::{Float, Rgb};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Photon(#[from] PhotonError),
    #[error(transparent)]
    Image(#[from] crate::image::ImageError),
}

/// Density estimator choice for LS-layer rendering.
#[derive(Clone, Copy, Debug)]
pub enum Estimator<'a> {
    Classic { k: usize, kind: KernelKind<Float> },
    Learned { params: &'a NetParams<f64>, k: usize },
}

/// Shading points for every (pixel, sample) camera ray, with the specular
/// throughput picked up on the way to the first diffuse hit.
pub struct LsPoints {
    width: usize,
    height: usize,
    spp: usize,
    samples: Vec<Option<(ShadingPoint, Rgb)>>,
}

impl LsPoints {
    pub fn spp(&self) -> usize {
        self.spp
    }
}

/// Trace camera rays to their first diffuse hits. Streams are keyed by
/// (seed, pixel, sample), so the set is deterministic and shared by every
/// estimator evaluated on it.
pub fn collect_ls_points(scene: &Scene, spp: usize, seed: u64) -> LsPoints {
    let width = scene.camera.width as usize;
    let height = scene.camera.height as usize;
    let samples: Vec<Option<(ShadingPoint, Rgb)>> = (0..width * height)
        .into_par_iter()
        .flat_map_iter(|pixel| {
            let x = (pixel % width) as u32;
            let y = (pixel / width) as u32;
            (0..spp).map(move |s| {
                let mut rng = CounterRng::from_stream(
                    seed,
                    &[stream::PIXEL_SAMPLE, pixel as u64, s as u64],
                );
                let ray = scene
                    .camera
                    .primary_ray(x, y, rng.next_f64(), rng.next_f64());
                first_diffuse_hit(scene, ray, 16, &mut rng)
            })
        })
        .collect();
    LsPoints { width, height, spp, samples }
}

/// Evaluate one estimator over shared shading points. Failed or missing
/// samples contribute zero radiance.
pub fn render_ls_layer(
    points: &LsPoints,
    photons: &PhotonMap,
    index: &KnnIndex<Float>,
    estimator: Estimator,
) -> Image {
    let mut img = Image::new(points.width, points.height);
    let spp = points.spp;
    let empty = photons.photons.is_empty();
    img.pixels_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(pixel, out)| {
            let mut acc = Rgb::black();
            if !empty {
                for s in 0..spp {
                    if let Some((sp, throughput)) = &points.samples[pixel * spp + s] {
                        let estimate = match estimator {
                            Estimator::Classic { k, kind } => {
                                estimate_radiance_pm(sp, photons, index, k, kind)
                                    .map(|e| e.radiance)
                                    .unwrap_or(Rgb::black())
                            }
                            Estimator::Learned { params, k } => {
                                estimate_radiance_learned(sp, photons, index, params, k)
                                    .unwrap_or(Rgb::black())
                            }
                        };
                        acc += *throughput * estimate;
                    }
                }
            }
            *out = acc / spp as Float;
        });
    img
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Ours,
    Pm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Pm => "pm",
        }
    }
}

#[derive(Clone, Debug)]
pub struct EvalRow {
    pub k: usize,
    /// Valid photon count of the cell's map.
    pub m: u64,
    pub method: Method,
    /// None when the method had no checkpoint for this K.
    pub metrics: Option<(Float, Float, Float)>,
}

#[derive(Clone, Debug, Default)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
}

impl EvalTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("K,M,method,rmse,psnr,ssim\n");
        for row in &self.rows {
            match row.metrics {
                Some((r, p, s)) => {
                    out.push_str(&format!("{},{},{},{},{},{}\n", row.k, row.m, row.method.name(), r, p, s));
                }
                None => {
                    out.push_str(&format!("{},{},{},,,\n", row.k, row.m, row.method.name()));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct EvalGridConfig {
    pub ks: Vec<usize>,
    /// Photon paths to emit per M column.
    pub n_emits: Vec<u64>,
    /// Camera samples per pixel for the LS layers.
    pub spp: usize,
    pub kernel: KernelKind<Float>,
    pub max_bounces: u32,
    pub seed: u64,
}

/// Render LS layers for every (K, M) cell with classic estimation and, when
/// a checkpoint for that K is supplied, with the network, and score both
/// against the reference image.
pub fn eval_grid(
    scene: &Scene,
    cfg: &EvalGridConfig,
    checkpoints: &[(usize, &NetParams<f64>)],
    reference: &Image,
) -> Result<EvalTable, EvalError> {
    let points = collect_ls_points(scene, cfg.spp, cfg.seed);
    let mut table = EvalTable::default();
    for (col, &n_emit) in cfg.n_emits.iter().enumerate() {
        let map = trace_photons(scene, n_emit, cfg.max_bounces, cfg.seed ^ (col as u64 + 1))?;
        let index = KnnIndex::build(&map.positions()).expect("finite photon positions");
        for &k in &cfg.ks {
            let ckpt = checkpoints.iter().find(|(ck, _)| *ck == k).map(|(_, p)| *p);
            let ours = match ckpt {
                Some(params) => {
                    let img = render_ls_layer(&points, &map, &index, Estimator::Learned { params, k });
                    Some(score(&img, reference)?)
                }
                None => None,
            };
            table.rows.push(EvalRow { k, m: map.m_valid, method: Method::Ours, metrics: ours });

            let img = render_ls_layer(&points, &map, &index, Estimator::Classic { k, kind: cfg.kernel });
            table.rows.push(EvalRow {
                k,
                m: map.m_valid,
                method: Method::Pm,
                metrics: Some(score(&img, reference)?),
            });
        }
    }
    Ok(table)
}

fn score(img: &Image, reference: &Image) -> Result<(Float, Float, Float), EvalError> {
    Ok((
        rmse(img, reference)?,
        psnr(img, reference, 1.0)?,
        ssim(img, reference)?,
    ))
}
