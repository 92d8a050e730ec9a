//! Per-photon input features and physical contributions for the network.
//!
//! Rows follow the neighborhood order (ascending distance). When the
//! neighborhood is shorter than K the remaining rows are zero with mask 0;
//! padding is never resampled, so tiny maps stay usable.

use crate::density::ShadingPoint;
use crate::kdtree::Neighborhood;
use crate::math::Onb;
use crate::nn::net::NetError;
use crate::nn::params::{FEATURE_DIM, OUT};
use crate::photon::PhotonMap;
use crate::scene::eval_bsdf;
use crate::Float;

/// Feature rows, contributions, and validity mask for one shading point.
#[derive(Clone, Debug)]
pub struct FeatureBlock {
    /// K x 12, row-major.
    pub features: Vec<Float>,
    /// K x 3 photon contributions c_t = f * power / (pi r_K^2).
    pub contributions: Vec<Float>,
    pub mask: Vec<bool>,
    pub r_k: Float,
}

/// Build the K x 12 feature matrix for `sp` from its neighborhood.
///
/// Per row: delta position / r_K (3), incident direction in the shading
/// point's local frame (3), photon-vs-surface normal agreement (1),
/// distance / r_K (1), log(1 + luminance(power) * M) (1), and the
/// luminance-normalized power color (3).
pub fn build_features(
    sp: &ShadingPoint,
    nb: &Neighborhood<Float>,
    photons: &PhotonMap,
    k: usize,
) -> Result<FeatureBlock, NetError> {
    if nb.is_empty() {
        return Err(NetError::EmptyNeighborhood);
    }
    if nb.len() > k {
        return Err(NetError::ShapeMismatch {
            what: format!("neighborhood of {} rows exceeds K = {k}", nb.len()),
        });
    }
    let r_k = nb.r_k;
    if !(r_k > 0.0) {
        return Err(NetError::DegenerateBandwidth);
    }
    let frame = Onb::from_normal(sp.normal);
    let m = photons.m_valid as Float;
    let material = sp.material();
    let base = 1.0 / (std::f64::consts::PI * r_k * r_k);

    let mut features = vec![0.0; k * FEATURE_DIM];
    let mut contributions = vec![0.0; k * OUT];
    let mut mask = vec![false; k];
    for (t, (&id, &d)) in nb.indices.iter().zip(&nb.distances).enumerate() {
        let photon = &photons.photons[id as usize];
        let delta = (photon.position.widen() - sp.position) / r_k;
        let incident = photon.incident_dir.widen();
        let local = frame.to_local(incident);
        let power = photon.power.widen();
        let lum = power.luminance();
        let tint = if lum > 0.0 { power / lum } else { crate::Rgb::black() };

        let row = &mut features[t * FEATURE_DIM..(t + 1) * FEATURE_DIM];
        row[0] = delta.x;
        row[1] = delta.y;
        row[2] = delta.z;
        row[3] = local.x;
        row[4] = local.y;
        row[5] = local.z;
        row[6] = photon.surface_normal.widen().dot(sp.normal);
        row[7] = d / r_k;
        row[8] = (1.0 + lum * m).ln();
        row[9] = tint.r;
        row[10] = tint.g;
        row[11] = tint.b;

        let f = eval_bsdf(&material, sp.normal, sp.wo, incident);
        let c = f * power * base;
        contributions[t * OUT] = c.r;
        contributions[t * OUT + 1] = c.g;
        contributions[t * OUT + 2] = c.b;
        mask[t] = true;
    }
    Ok(FeatureBlock { features, contributions, mask, r_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kdtree::KnnIndex;
    use crate::photon::Photon;
    use crate::{Rgb, Vec3};

    fn photon(position: Vec3, incident: Vec3, power: Rgb, normal: Vec3) -> Photon {
        Photon {
            position: position.to_f32(),
            incident_dir: incident.normalized().to_f32(),
            power: power.to_f32(),
            surface_normal: normal.to_f32(),
            bounce_count: 2,
            first_bounce_specular: true,
        }
    }

    fn sp_up() -> ShadingPoint {
        ShadingPoint {
            position: Vec3::zero(),
            normal: Vec3::new(0.0, 0.0, 1.0),
            wo: Vec3::new(0.0, 0.0, 1.0),
            albedo: Rgb::splat(0.5),
        }
    }

    fn block_for(photons: Vec<Photon>, k: usize) -> FeatureBlock {
        let map = PhotonMap { m_valid: photons.len() as u64, n_emitted: 100, photons };
        let index = KnnIndex::build(&map.positions()).unwrap();
        let nb = index.knn(Vec3::zero(), k).unwrap();
        build_features(&sp_up(), &nb, &map, k).unwrap()
    }

    #[test]
    fn photon_at_query_has_zero_offset_row() {
        let up = Vec3::new(0.0, 0.0, 1.0);
        let block = block_for(
            vec![
                photon(Vec3::zero(), up, Rgb::white(), up),
                photon(Vec3::new(1.0, 0.0, 0.0), up, Rgb::white(), up),
            ],
            2,
        );
        assert_eq!(&block.features[0..3], &[0.0, 0.0, 0.0]);
        assert_eq!(block.features[7], 0.0);
    }

    #[test]
    fn farthest_row_sits_on_the_unit_shell() {
        let up = Vec3::new(0.0, 0.0, 1.0);
        let block = block_for(
            vec![
                photon(Vec3::new(0.2, 0.0, 0.0), up, Rgb::white(), up),
                photon(Vec3::new(0.0, 0.7, 0.0), up, Rgb::white(), up),
                photon(Vec3::new(0.0, 0.0, 1.3), up, Rgb::white(), up),
            ],
            3,
        );
        let last = 2 * FEATURE_DIM;
        assert!((block.features[last + 7] - 1.0).abs() < 1e-12);
        let delta_len = (block.features[last] * block.features[last]
            + block.features[last + 1] * block.features[last + 1]
            + block.features[last + 2] * block.features[last + 2])
            .sqrt();
        assert!((delta_len - 1.0).abs() < 1e-6);
    }

    #[test]
    fn local_frame_matches_hand_applied_construction() {
        // n = (0,0,1): the branchless frame is the identity.
        let up = Vec3::new(0.0, 0.0, 1.0);
        let block = block_for(
            vec![photon(Vec3::new(0.5, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Rgb::white(), up)],
            1,
        );
        assert!((block.features[3] - 1.0).abs() < 1e-12);
        assert!(block.features[4].abs() < 1e-12);
        assert!(block.features[5].abs() < 1e-12);

        // n = (1,0,0): hand-applying the rule gives tangent (0,0,-1),
        // bitangent (0,1,0), so incident (0,0,1) maps to (-1, 0, 0).
        let sp = ShadingPoint {
            position: Vec3::zero(),
            normal: Vec3::new(1.0, 0.0, 0.0),
            wo: Vec3::new(1.0, 0.0, 0.0),
            albedo: Rgb::splat(0.5),
        };
        let photons = vec![photon(
            Vec3::new(0.5, 0.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Rgb::white(),
            Vec3::new(1.0, 0.0, 0.0),
        )];
        let map = PhotonMap { m_valid: 1, n_emitted: 100, photons };
        let index = KnnIndex::build(&map.positions()).unwrap();
        let nb = index.knn(Vec3::zero(), 1).unwrap();
        let block = build_features(&sp, &nb, &map, 1).unwrap();
        assert!((block.features[3] + 1.0).abs() < 1e-12);
        assert!(block.features[4].abs() < 1e-12);
        assert!(block.features[5].abs() < 1e-12);
    }

    #[test]
    fn padding_rows_are_zero_with_mask_unset() {
        let up = Vec3::new(0.0, 0.0, 1.0);
        let block = block_for(vec![photon(Vec3::new(0.3, 0.0, 0.0), up, Rgb::white(), up)], 4);
        assert_eq!(block.mask, vec![true, false, false, false]);
        assert!(block.features[FEATURE_DIM..].iter().all(|&v| v == 0.0));
        assert!(block.contributions[OUT..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn contributions_fold_in_the_disc_normalization() {
        let up = Vec3::new(0.0, 0.0, 1.0);
        let power = Rgb::new(2.0, 4.0, 8.0);
        let block = block_for(vec![photon(Vec3::new(0.5, 0.0, 0.0), up, power, up)], 1);
        // f = albedo/pi = 0.5/pi; base = 1/(pi * 0.25)
        let f = 0.5 / std::f64::consts::PI;
        let base = 1.0 / (std::f64::consts::PI * 0.25);
        // Power round-trips through f32 storage.
        let stored = power.to_f32().widen();
        assert!((block.contributions[0] - f * stored.r * base).abs() < 1e-9);
        assert!((block.contributions[2] - f * stored.b * base).abs() < 1e-9);
    }

    #[test]
    fn zero_luminance_power_keeps_color_feature_finite() {
        let up = Vec3::new(0.0, 0.0, 1.0);
        let block = block_for(vec![photon(Vec3::new(0.5, 0.0, 0.0), up, Rgb::black(), up)], 1);
        assert!(block.features.iter().all(|v| v.is_finite()));
        assert_eq!(&block.features[9..12], &[0.0, 0.0, 0.0]);
    }
}
