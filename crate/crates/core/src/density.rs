//! Classic photon-mapping density estimation: the baseline the learned
//! kernel is measured against.
//!
//! Radiance at a shading point is reconstructed from its K nearest photons
//! with a normalized 2-D kernel whose bandwidth is the distance to the K-th
//! neighbor.

use thiserror::Error;

use crate::kdtree::{KnnError, KnnIndex, Neighborhood};
use crate::math::Real;
use crate::photon::PhotonMap;
use crate::scene::{eval_bsdf, Material};
use crate::{Float, Rgb, Vec3};

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("kernel bandwidth must be positive (r = {r})")]
    NonPositiveBandwidth { r: f64 },
    #[error("cone kernel parameter must satisfy c >= 1 (c = {c})")]
    BadConeParameter { c: f64 },
    #[error("density estimate over an empty photon map")]
    EmptyPhotonMap,
    #[error(transparent)]
    Knn(#[from] KnnError),
}

/// Smoothing kernel over the disc of radius r. Every kind integrates to one
/// over that disc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelKind<T> {
    /// 1 / (pi r^2) inside the disc.
    Constant,
    /// (2 / (pi r^2)) (1 - d^2/r^2); smooth falloff, the default baseline.
    Epanechnikov,
    /// Jensen-style cone (1 - d/(c r)) with normalization
    /// (1 - 2/(3c)) pi r^2; c >= 1.
    Cone { c: T },
}

impl<T: Real> KernelKind<T> {
    pub fn cone(c: T) -> Self {
        KernelKind::Cone { c }
    }
}

/// Kernel density at distance `d` for bandwidth `r` (units 1/m^2).
/// Support is the open disc d < r.
pub fn kernel_eval<T: Real>(kind: KernelKind<T>, d: T, r: T) -> Result<T, DensityError> {
    if d >= r && r > T::zero() {
        validate_kernel(kind, r)?;
        return Ok(T::zero());
    }
    kernel_value(kind, d, r)
}

/// The kernel formula on the closed disc d <= r, as used by the KNN
/// estimate where the K-th neighbor sits exactly on the bandwidth.
fn kernel_value<T: Real>(kind: KernelKind<T>, d: T, r: T) -> Result<T, DensityError> {
    validate_kernel(kind, r)?;
    let inv_disc = T::one() / (T::PI * r * r);
    Ok(match kind {
        KernelKind::Constant => inv_disc,
        KernelKind::Epanechnikov => T::of(2.0) * inv_disc * (T::one() - (d * d) / (r * r)),
        KernelKind::Cone { c } => {
            let norm = (T::one() - T::of(2.0) / (T::of(3.0) * c)) * T::PI * r * r;
            (T::one() - d / (c * r)) / norm
        }
    })
}

fn validate_kernel<T: Real>(kind: KernelKind<T>, r: T) -> Result<(), DensityError> {
    if !(r > T::zero()) {
        return Err(DensityError::NonPositiveBandwidth { r: r.to_f64() });
    }
    if let KernelKind::Cone { c } = kind {
        if c < T::one() {
            return Err(DensityError::BadConeParameter { c: c.to_f64() });
        }
    }
    Ok(())
}

/// A first-diffuse-hit surface point where radiance is reconstructed.
#[derive(Clone, Copy, Debug)]
pub struct ShadingPoint {
    pub position: Vec3,
    /// Unit normal oriented toward the viewer side.
    pub normal: Vec3,
    /// Unit outgoing direction with normal . wo > 0.
    pub wo: Vec3,
    /// Lambertian albedo of the surface.
    pub albedo: Rgb,
}

impl ShadingPoint {
    pub fn material(&self) -> Material {
        Material::Lambertian { albedo: self.albedo }
    }
}

/// Photons with surface normals this far out of agreement with the shading
/// normal are skipped to stop energy leaking across geometry.
pub const NORMAL_AGREEMENT_MIN: Float = 0.5;

/// Classic KNN photon-mapping estimate with the requested kernel.
///
/// K is clamped to the photon count; [`PmEstimate::k_clamped`] flags when
/// that happened.
pub fn estimate_radiance_pm(
    sp: &ShadingPoint,
    photons: &PhotonMap,
    index: &KnnIndex<Float>,
    k: usize,
    kind: KernelKind<Float>,
) -> Result<PmEstimate, DensityError> {
    if photons.photons.is_empty() {
        return Err(DensityError::EmptyPhotonMap);
    }
    let nb = index.knn(sp.position, k)?;
    let radiance = sum_kernel_contributions(sp, photons, &nb, kind)?;
    Ok(PmEstimate { radiance, k_clamped: nb.short })
}

#[derive(Clone, Copy, Debug)]
pub struct PmEstimate {
    pub radiance: Rgb,
    /// Set when fewer than K photons existed and the neighborhood was short.
    pub k_clamped: bool,
}

/// The kernel-weighted sum over an already-found neighborhood.
pub fn sum_kernel_contributions(
    sp: &ShadingPoint,
    photons: &PhotonMap,
    nb: &Neighborhood<Float>,
    kind: KernelKind<Float>,
) -> Result<Rgb, DensityError> {
    let r_k = nb.r_k;
    if !(r_k > 0.0) {
        return Err(DensityError::NonPositiveBandwidth { r: r_k });
    }
    let material = sp.material();
    let mut sum = Rgb::black();
    for (&id, &d) in nb.indices.iter().zip(&nb.distances) {
        let photon = &photons.photons[id as usize];
        if photon.surface_normal.widen().dot(sp.normal) <= NORMAL_AGREEMENT_MIN {
            continue;
        }
        let f = eval_bsdf(&material, sp.normal, sp.wo, photon.incident_dir.widen());
        if f.is_black() {
            continue;
        }
        // Closed support: the K-th neighbor at d = r_K still contributes.
        let k_val = kernel_value(kind, d, r_k)?;
        sum += f * photon.power.widen() * k_val;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vector3;
    use crate::photon::Photon;
    use approx::assert_relative_eq;

    fn photon_at(position: Vec3, power: Rgb, incident: Vec3) -> Photon {
        Photon {
            position: position.to_f32(),
            incident_dir: incident.normalized().to_f32(),
            power: power.to_f32(),
            surface_normal: Vector3::new(0.0, 0.0, 1.0),
            bounce_count: 2,
            first_bounce_specular: true,
        }
    }

    fn up_point(albedo: Rgb) -> ShadingPoint {
        ShadingPoint {
            position: Vec3::zero(),
            normal: Vec3::new(0.0, 0.0, 1.0),
            wo: Vec3::new(0.0, 0.0, 1.0),
            albedo,
        }
    }

    fn map_of(photons: Vec<Photon>) -> (PhotonMap, KnnIndex<Float>) {
        let map = PhotonMap { m_valid: photons.len() as u64, n_emitted: 1000, photons };
        let index = KnnIndex::build(&map.positions()).unwrap();
        (map, index)
    }

    #[test]
    fn constant_kernel_analytic_value() {
        let k = kernel_eval(KernelKind::<f64>::Constant, 1.0, 2.0).unwrap();
        assert_relative_eq!(k, 1.0 / (4.0 * std::f64::consts::PI), epsilon = 1e-15);
        assert_relative_eq!(k, 0.079_577_47, epsilon = 1e-7);
    }

    #[test]
    #[allow(clippy::approx_constant)] // asserting the documented 2/pi peak
    fn epanechnikov_peak_analytic_value() {
        let k = kernel_eval(KernelKind::<f64>::Epanechnikov, 0.0, 1.0).unwrap();
        assert_relative_eq!(k, 2.0 / std::f64::consts::PI, epsilon = 1e-15);
        assert_relative_eq!(k, 0.636_619_8, epsilon = 1e-6);
    }

    #[test]
    fn kernels_vanish_at_and_beyond_bandwidth() {
        for kind in [
            KernelKind::Constant,
            KernelKind::Epanechnikov,
            KernelKind::cone(1.0),
            KernelKind::cone(1.5),
        ] {
            assert_eq!(kernel_eval(kind, 1.0, 1.0).unwrap(), 0.0);
            assert_eq!(kernel_eval(kind, 2.5, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn kernels_integrate_to_one_over_the_disc() {
        // Quadrature oracle: integral over the disc of radius r of
        // k(d) * 2 pi d dd must be 1 for every kernel kind.
        for kind in [
            KernelKind::Constant,
            KernelKind::Epanechnikov,
            KernelKind::cone(1.0),
            KernelKind::cone(1.3),
            KernelKind::cone(2.0),
        ] {
            for r in [0.3, 1.0, 4.2] {
                let steps = 400_000usize;
                let h = r / steps as f64;
                let mut integral = 0.0;
                for i in 0..steps {
                    let d = (i as f64 + 0.5) * h;
                    integral += kernel_eval(kind, d, r).unwrap() * 2.0 * std::f64::consts::PI * d * h;
                }
                assert!(
                    (integral - 1.0).abs() < 1e-6,
                    "{kind:?} r={r}: integral {integral}"
                );
            }
        }
    }

    #[test]
    fn non_positive_bandwidth_is_a_domain_error() {
        assert!(matches!(
            kernel_eval(KernelKind::<f64>::Constant, 0.5, 0.0),
            Err(DensityError::NonPositiveBandwidth { .. })
        ));
        assert!(matches!(
            kernel_eval(KernelKind::<f64>::Constant, 0.5, -1.0),
            Err(DensityError::NonPositiveBandwidth { .. })
        ));
        assert!(matches!(
            kernel_eval(KernelKind::cone(0.5), 0.1, 1.0),
            Err(DensityError::BadConeParameter { .. })
        ));
    }

    #[test]
    fn kernel_eval_works_in_f32() {
        let k = kernel_eval(KernelKind::<f32>::Constant, 1.0f32, 2.0f32).unwrap();
        assert!((k - 1.0 / (4.0 * std::f32::consts::PI)).abs() < 1e-6);
    }

    #[test]
    fn single_photon_hand_computed_estimate() {
        // albedo 1 => f = 1/pi; power = pi per channel; K=1 => r_K = d = 2;
        // constant kernel => L = (1/pi) * pi * 1/(4 pi) = 1/(4 pi).
        let pi = std::f64::consts::PI;
        let (map, index) = map_of(vec![photon_at(
            Vec3::new(2.0, 0.0, 0.0),
            Rgb::splat(pi),
            Vec3::new(0.0, 0.0, 1.0),
        )]);
        let sp = up_point(Rgb::white());
        let est = estimate_radiance_pm(&sp, &map, &index, 1, KernelKind::Constant).unwrap();
        assert_relative_eq!(est.radiance.r, 1.0 / (4.0 * pi), epsilon = 1e-6);
        assert_relative_eq!(est.radiance.r, 0.079_577_5, epsilon = 1e-6);
        assert!(!est.k_clamped);
    }

    #[test]
    fn all_photons_filtered_yields_black() {
        let mut p = photon_at(Vec3::new(1.0, 0.0, 0.0), Rgb::white(), Vec3::new(0.0, 0.0, 1.0));
        p.surface_normal = Vector3::new(0.0, 0.0, -1.0); // disagrees with sp normal
        let (map, index) = map_of(vec![p]);
        let sp = up_point(Rgb::white());
        let est = estimate_radiance_pm(&sp, &map, &index, 1, KernelKind::Epanechnikov).unwrap();
        assert_eq!(est.radiance, Rgb::black());
    }

    #[test]
    fn three_photons_match_hand_summed_oracle() {
        let pi = std::f64::consts::PI;
        let power = Rgb::new(0.5, 1.0, 2.0);
        let incident = Vec3::new(0.3, 0.1, 0.9).normalized();
        let photons = vec![
            photon_at(Vec3::new(1.0, 0.0, 0.0), power, incident),
            photon_at(Vec3::new(0.0, 2.0, 0.0), power, incident),
            photon_at(Vec3::new(0.0, 0.0, 3.0), power, incident),
        ];
        let (map, index) = map_of(photons);
        let albedo = Rgb::new(0.8, 0.6, 0.4);
        let sp = up_point(albedo);
        let est = estimate_radiance_pm(&sp, &map, &index, 3, KernelKind::Constant).unwrap();
        // Linear-scan oracle: every photon passes the normal filter and the
        // constant kernel weights all of them by 1/(pi r_K^2), r_K = 3.
        let k = 1.0 / (pi * 9.0);
        let f = albedo * (1.0 / pi);
        let oracle = f * power * (3.0 * k);
        assert_relative_eq!(est.radiance.r, oracle.r, max_relative = 1e-12);
        assert_relative_eq!(est.radiance.g, oracle.g, max_relative = 1e-12);
        assert_relative_eq!(est.radiance.b, oracle.b, max_relative = 1e-12);
    }

    #[test]
    fn estimate_is_linear_in_photon_power() {
        let incident = Vec3::new(0.1, 0.2, 0.97).normalized();
        let photons: Vec<Photon> = (0..10)
            .map(|i| {
                photon_at(
                    Vec3::new(i as f64 * 0.1, 0.0, 0.0),
                    Rgb::new(0.3, 0.4, 0.5),
                    incident,
                )
            })
            .collect();
        let scaled: Vec<Photon> = photons
            .iter()
            .map(|p| Photon { power: p.power * 4.0f32, ..*p })
            .collect();
        let (map_a, index_a) = map_of(photons);
        let (map_b, index_b) = map_of(scaled);
        let sp = up_point(Rgb::splat(0.7));
        let a = estimate_radiance_pm(&sp, &map_a, &index_a, 5, KernelKind::Epanechnikov).unwrap();
        let b = estimate_radiance_pm(&sp, &map_b, &index_b, 5, KernelKind::Epanechnikov).unwrap();
        assert_relative_eq!(b.radiance.r, 4.0 * a.radiance.r, max_relative = 1e-6);
        assert!(a.radiance.min_channel() >= 0.0);
    }

    #[test]
    fn k_beyond_m_sets_clamp_flag() {
        let (map, index) = map_of(vec![photon_at(
            Vec3::new(1.0, 0.0, 0.0),
            Rgb::white(),
            Vec3::new(0.0, 0.0, 1.0),
        )]);
        let sp = up_point(Rgb::white());
        let est = estimate_radiance_pm(&sp, &map, &index, 50, KernelKind::Constant).unwrap();
        assert!(est.k_clamped);
    }

    #[test]
    fn empty_map_is_an_error() {
        let map = PhotonMap { photons: vec![], n_emitted: 10, m_valid: 0 };
        let index: KnnIndex<Float> = KnnIndex::build(&[]).unwrap();
        let sp = up_point(Rgb::white());
        assert!(matches!(
            estimate_radiance_pm(&sp, &map, &index, 1, KernelKind::Constant),
            Err(DensityError::EmptyPhotonMap)
        ));
    }
}
