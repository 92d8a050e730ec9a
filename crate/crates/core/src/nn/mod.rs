//! The learned density estimator: per-photon features, a shared encoder
//! with masked max-pooling, the kernel-prediction head and the
//! direct-estimation ablation head, hand-rolled reverse-mode gradients,
//! Adam, and the training loop.

pub mod adam;
pub mod checkpoint;
pub mod dataset;
pub mod features;
pub mod net;
pub mod params;
pub mod train;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, CheckpointMeta};
pub use dataset::{make_training_set, DatasetConfig, DatasetError, DatasetReport, TrainingSet};
pub use features::{build_features, FeatureBlock};
pub use net::{
    backward, forward, forward_direct, loss_relative_l2, loss_relative_l2_with_grad, ForwardCache,
    NetError,
};
pub use params::{NetParams, FEATURE_DIM, PARAM_COUNT};
pub use train::{train, Head, TrainConfig, TrainError, TrainOutput};

use thiserror::Error;

use crate::density::ShadingPoint;
use crate::kdtree::{KnnError, KnnIndex};
use crate::photon::PhotonMap;
use crate::{Float, Rgb};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Learned radiance estimate at a shading point: gather K nearest photons,
/// build features, run the kernel head. Deterministic in its inputs.
pub fn estimate_radiance_learned(
    sp: &ShadingPoint,
    photons: &PhotonMap,
    index: &KnnIndex<Float>,
    params: &NetParams<f64>,
    k: usize,
) -> Result<Rgb, EstimateError> {
    let nb = index.knn(sp.position, k)?;
    let block = build_features(sp, &nb, photons, k)?;
    let (lhat, _) = forward(params, &block.features, &block.contributions, &block.mask)?;
    Ok(lhat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vector3;
    use crate::photon::Photon;
    use crate::Vec3;

    fn small_setup() -> (ShadingPoint, PhotonMap, KnnIndex<Float>) {
        let up = Vec3::new(0.0, 0.0, 1.0);
        let photons: Vec<Photon> = (0..6)
            .map(|i| Photon {
                position: Vec3::new(0.1 * (i as f64 + 1.0), 0.05 * i as f64, 0.0).to_f32(),
                incident_dir: Vector3::new(0.0, 0.0, 1.0),
                power: crate::math::Rgb::new(0.2, 0.3, 0.4),
                surface_normal: Vector3::new(0.0, 0.0, 1.0),
                bounce_count: 2,
                first_bounce_specular: true,
            })
            .collect();
        let map = PhotonMap { m_valid: 6, n_emitted: 100, photons };
        let index = KnnIndex::build(&map.positions()).unwrap();
        let sp = ShadingPoint {
            position: Vec3::zero(),
            normal: up,
            wo: Vec3::new(0.0, 0.0, 1.0),
            albedo: Rgb::splat(0.6),
        };
        (sp, map, index)
    }

    #[test]
    fn zero_parameter_estimate_matches_ln2_sum() {
        let (sp, map, index) = small_setup();
        let params = NetParams::zeros();
        let got = estimate_radiance_learned(&sp, &map, &index, &params, 4).unwrap();
        let nb = index.knn(sp.position, 4).unwrap();
        let block = build_features(&sp, &nb, &map, 4).unwrap();
        let mut c_sum = Rgb::black();
        for t in 0..4 {
            c_sum += Rgb::new(
                block.contributions[t * 3],
                block.contributions[t * 3 + 1],
                block.contributions[t * 3 + 2],
            );
        }
        let expect = c_sum * std::f64::consts::LN_2;
        assert!((got.r - expect.r).abs() < 1e-12);
        assert!((got.b - expect.b).abs() < 1e-12);
    }

    #[test]
    fn estimate_is_bitwise_repeatable_and_view_independent() {
        let (mut sp, map, index) = small_setup();
        let params = NetParams::he_uniform(9);
        let a = estimate_radiance_learned(&sp, &map, &index, &params, 5).unwrap();
        let b = estimate_radiance_learned(&sp, &map, &index, &params, 5).unwrap();
        assert_eq!(a, b);
        // Features exclude the outgoing direction and the BSDF is constant,
        // so any wo above the surface gives bit-identical output.
        sp.wo = Vec3::new(0.5, 0.3, 0.9).normalized();
        let c = estimate_radiance_learned(&sp, &map, &index, &params, 5).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn checkpoint_round_trip_preserves_forward_outputs() {
        let (sp, map, index) = small_setup();
        let params = NetParams::he_uniform(31);
        let meta = CheckpointMeta { k: 5, feature_dim: FEATURE_DIM as u32, train_seed: 31 };
        let bytes = checkpoint::checkpoint_to_bytes(&params, &meta);
        let (restored, _) = checkpoint::checkpoint_from_bytes(&bytes).unwrap();
        let a = estimate_radiance_learned(&sp, &map, &index, &params, 5).unwrap();
        let b = estimate_radiance_learned(&sp, &map, &index, &restored, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn learned_estimate_is_nonnegative() {
        let (sp, map, index) = small_setup();
        for seed in 0..20 {
            let params = NetParams::he_uniform(seed);
            let got = estimate_radiance_learned(&sp, &map, &index, &params, 6).unwrap();
            assert!(got.min_channel() >= 0.0, "seed {seed}: {got:?}");
        }
    }
}
