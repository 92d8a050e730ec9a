//! Training-set construction.
//!
//! Shading points come from camera rays followed to their first diffuse
//! hit. Inputs are built from small photon maps traced with fresh seeds
//! (several per scene, cycled across samples, so the network never sees a
//! single frozen photon set); labels come from classic estimation on a much
//! larger reference map.

use rayon::prelude::*;
use thiserror::Error;

use crate::density::{estimate_radiance_pm, DensityError, KernelKind, ShadingPoint};
use crate::kdtree::{KnnError, KnnIndex};
use crate::nn::features::build_features;
use crate::photon::{trace_photons, PhotonError, PhotonMap};
use crate::pt::first_diffuse_hit;
use crate::rng::{stream, CounterRng};
use crate::scene::Scene;
use crate::{Float, Rgb};

/// K used for the reference labels, paired with the oversized map.
pub const REFERENCE_K: usize = 500;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Photon(#[from] PhotonError),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error("no scene produced any light-specular photons")]
    NoValidScenes,
}

#[derive(Clone, Copy, Debug)]
pub struct DatasetConfig {
    pub k: usize,
    /// Photon paths emitted per training map.
    pub photons_per_scene: u64,
    pub points_per_scene: usize,
    /// Fresh training maps per scene; samples cycle across them.
    pub maps_per_scene: usize,
    /// Reference map emits this many times the training paths (>= 100).
    pub reference_factor: u64,
    pub max_bounces: u32,
    pub seed: u64,
}

impl DatasetConfig {
    pub fn new(k: usize, photons_per_scene: u64, points_per_scene: usize, seed: u64) -> Self {
        Self {
            k,
            photons_per_scene,
            points_per_scene,
            maps_per_scene: 4,
            reference_factor: 100,
            max_bounces: 8,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub features: Vec<Float>,
    pub contributions: Vec<Float>,
    pub mask: Vec<bool>,
    pub l_ref: Rgb,
}

#[derive(Clone, Debug, Default)]
pub struct TrainingSet {
    pub k: usize,
    pub samples: Vec<TrainingSample>,
}

/// What happened per scene while building the set.
#[derive(Clone, Debug, Default)]
pub struct DatasetReport {
    /// Scene indices skipped for having zero LS photons.
    pub skipped_scenes: Vec<usize>,
    pub samples_per_scene: Vec<usize>,
}

pub fn make_training_set(
    scenes: &[Scene],
    cfg: &DatasetConfig,
) -> Result<(TrainingSet, DatasetReport), DatasetError> {
    let mut set = TrainingSet { k: cfg.k, samples: Vec::new() };
    let mut report = DatasetReport::default();

    for (scene_ix, scene) in scenes.iter().enumerate() {
        let mut seeds = CounterRng::from_stream(cfg.seed, &[stream::DATASET_MAP, scene_ix as u64]);
        let ref_map = trace_photons(
            scene,
            cfg.photons_per_scene * cfg.reference_factor,
            cfg.max_bounces,
            seeds.next_u64(),
        )?;
        if ref_map.m_valid == 0 {
            report.skipped_scenes.push(scene_ix);
            report.samples_per_scene.push(0);
            continue;
        }
        let ref_index = KnnIndex::build(&ref_map.positions())?;

        let mut maps: Vec<(PhotonMap, KnnIndex<Float>)> = Vec::new();
        for _ in 0..cfg.maps_per_scene.max(1) {
            let map = trace_photons(scene, cfg.photons_per_scene, cfg.max_bounces, seeds.next_u64())?;
            if map.m_valid > 0 {
                let index = KnnIndex::build(&map.positions())?;
                maps.push((map, index));
            }
        }
        if maps.is_empty() {
            report.skipped_scenes.push(scene_ix);
            report.samples_per_scene.push(0);
            continue;
        }

        // Phase 1: deterministic shading-point selection from camera rays.
        let camera = &scene.camera;
        let max_attempts = cfg.points_per_scene.saturating_mul(32).max(64);
        let mut points: Vec<ShadingPoint> = Vec::with_capacity(cfg.points_per_scene);
        for attempt in 0..max_attempts {
            if points.len() >= cfg.points_per_scene {
                break;
            }
            let mut rng = CounterRng::from_stream(
                cfg.seed,
                &[stream::DATASET_POINT, scene_ix as u64, attempt as u64],
            );
            let sx = rng.next_f64() * camera.width as Float;
            let sy = rng.next_f64() * camera.height as Float;
            let ray = camera.primary_ray(0, 0, sx, sy);
            if let Some((sp, _)) = first_diffuse_hit(scene, ray, 16, &mut rng) {
                points.push(sp);
            }
        }

        // Phase 2: features from a cycled training map, label from the
        // reference map.
        let samples: Vec<Option<TrainingSample>> = points
            .par_iter()
            .enumerate()
            .map(|(i, sp)| {
                let (map, index) = &maps[i % maps.len()];
                let nb = index.knn(sp.position, cfg.k).ok()?;
                let block = build_features(sp, &nb, map, cfg.k).ok()?;
                let l_ref = match estimate_radiance_pm(sp, &ref_map, &ref_index, REFERENCE_K, KernelKind::Epanechnikov) {
                    Ok(est) => est.radiance,
                    Err(DensityError::NonPositiveBandwidth { .. }) => return None,
                    Err(_) => return None,
                };
                Some(TrainingSample {
                    features: block.features,
                    contributions: block.contributions,
                    mask: block.mask,
                    l_ref,
                })
            })
            .collect();

        let before = set.samples.len();
        set.samples.extend(samples.into_iter().flatten());
        report.samples_per_scene.push(set.samples.len() - before);
    }

    if set.samples.is_empty() {
        return Err(DatasetError::NoValidScenes);
    }
    Ok((set, report))
}
