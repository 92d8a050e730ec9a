//! Scalar-generic vector and color math.
//!
//! Everything numeric in this crate is generic over [`Real`] (f32 or f64);
//! the crate root pins concrete aliases for the rendering pipeline.

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, DivAssign, Index, Mul, MulAssign, Neg, Sub, SubAssign};

/// Floating-point scalar the core math is generic over.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    const PI: Self;

    /// Lossy conversion from a literal; exact for values representable in Self.
    fn of(v: f64) -> Self;

    fn to_f64(self) -> f64;
}

impl Real for f32 {
    const PI: Self = std::f32::consts::PI;

    #[inline(always)]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const PI: Self = std::f64::consts::PI;

    #[inline(always)]
    fn of(v: f64) -> Self {
        v
    }

    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
}

/// 3-component spatial vector.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vector3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vector3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn length_squared(self) -> T {
        self.dot(self)
    }

    pub fn length(self) -> T {
        self.length_squared().sqrt()
    }

    pub fn normalized(self) -> Self {
        self / self.length()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// True within `tol` of unit length.
    pub fn is_unit(self, tol: T) -> bool {
        (self.length() - T::one()).abs() <= tol
    }

    pub fn to_f64(self) -> Vector3<f64> {
        Vector3::new(self.x.to_f64(), self.y.to_f64(), self.z.to_f64())
    }

    pub fn to_f32(self) -> Vector3<f32> {
        Vector3::new(
            self.x.to_f64() as f32,
            self.y.to_f64() as f32,
            self.z.to_f64() as f32,
        )
    }
}

impl Vector3<f32> {
    pub fn widen(self) -> Vector3<f64> {
        Vector3::new(self.x as f64, self.y as f64, self.z as f64)
    }
}

impl<T: Real> Index<usize> for Vector3<T> {
    type Output = T;

    fn index(&self, axis: usize) -> &T {
        match axis {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("vector axis out of range: {axis}"),
        }
    }
}

impl<T: Real> Add for Vector3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vector3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vector3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vector3<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vector3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> AddAssign for Vector3<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Linear RGB triple (radiance, power, albedo — unit depends on context).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Rgb<T> {
    pub r: T,
    pub g: T,
    pub b: T,
}

impl<T: Real> Rgb<T> {
    pub const fn new(r: T, g: T, b: T) -> Self {
        Self { r, g, b }
    }

    pub fn splat(v: T) -> Self {
        Self::new(v, v, v)
    }

    pub fn black() -> Self {
        Self::splat(T::zero())
    }

    pub fn white() -> Self {
        Self::splat(T::one())
    }

    pub fn is_black(self) -> bool {
        self.r == T::zero() && self.g == T::zero() && self.b == T::zero()
    }

    pub fn max_channel(self) -> T {
        self.r.max(self.g).max(self.b)
    }

    pub fn min_channel(self) -> T {
        self.r.min(self.g).min(self.b)
    }

    /// Rec. 709 luminance.
    pub fn luminance(self) -> T {
        T::of(0.2126) * self.r + T::of(0.7152) * self.g + T::of(0.0722) * self.b
    }

    pub fn is_finite(self) -> bool {
        self.r.is_finite() && self.g.is_finite() && self.b.is_finite()
    }

    pub fn clamp01(self) -> Self {
        let c = |v: T| v.max(T::zero()).min(T::one());
        Self::new(c(self.r), c(self.g), c(self.b))
    }

    pub fn channel(self, i: usize) -> T {
        match i {
            0 => self.r,
            1 => self.g,
            2 => self.b,
            _ => panic!("color channel out of range: {i}"),
        }
    }

    pub fn to_f64(self) -> Rgb<f64> {
        Rgb::new(self.r.to_f64(), self.g.to_f64(), self.b.to_f64())
    }

    pub fn to_f32(self) -> Rgb<f32> {
        Rgb::new(
            self.r.to_f64() as f32,
            self.g.to_f64() as f32,
            self.b.to_f64() as f32,
        )
    }
}

impl Rgb<f32> {
    pub fn widen(self) -> Rgb<f64> {
        Rgb::new(self.r as f64, self.g as f64, self.b as f64)
    }
}

impl<T: Real> Add for Rgb<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.r + o.r, self.g + o.g, self.b + o.b)
    }
}

impl<T: Real> Sub for Rgb<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.r - o.r, self.g - o.g, self.b - o.b)
    }
}

/// Componentwise (Hadamard) product.
impl<T: Real> Mul for Rgb<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.r * o.r, self.g * o.g, self.b * o.b)
    }
}

impl<T: Real> Mul<T> for Rgb<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.r * s, self.g * s, self.b * s)
    }
}

impl<T: Real> Div<T> for Rgb<T> {
    type Output = Self;
    fn div(self, s: T) -> Self {
        Self::new(self.r / s, self.g / s, self.b / s)
    }
}

impl<T: Real> AddAssign for Rgb<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> MulAssign for Rgb<T> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Real> MulAssign<T> for Rgb<T> {
    fn mul_assign(&mut self, s: T) {
        *self = *self * s;
    }
}

impl<T: Real> DivAssign<T> for Rgb<T> {
    fn div_assign(&mut self, s: T) {
        *self = *self / s;
    }
}

/// Orthonormal basis around a unit normal, built with the branchless
/// construction of Duff et al. so the frame is a fixed function of the normal.
#[derive(Clone, Copy, Debug)]
pub struct Onb<T> {
    pub tangent: Vector3<T>,
    pub bitangent: Vector3<T>,
    pub normal: Vector3<T>,
}

impl<T: Real> Onb<T> {
    pub fn from_normal(n: Vector3<T>) -> Self {
        let sign = T::one().copysign(n.z);
        let a = -T::one() / (sign + n.z);
        let b = n.x * n.y * a;
        Self {
            tangent: Vector3::new(T::one() + sign * n.x * n.x * a, sign * b, -sign * n.x),
            bitangent: Vector3::new(b, sign + n.y * n.y * a, -n.y),
            normal: n,
        }
    }

    /// World direction from local (tangent, bitangent, normal) coordinates.
    pub fn to_world(&self, v: Vector3<T>) -> Vector3<T> {
        self.tangent * v.x + self.bitangent * v.y + self.normal * v.z
    }

    /// Local coordinates of a world direction.
    pub fn to_local(&self, v: Vector3<T>) -> Vector3<T> {
        Vector3::new(v.dot(self.tangent), v.dot(self.bitangent), v.dot(self.normal))
    }
}

/// Mirror `v` about `n`; both unit, both pointing away from the surface.
pub fn reflect<T: Real>(v: Vector3<T>, n: Vector3<T>) -> Vector3<T> {
    n * (T::of(2.0) * n.dot(v)) - v
}

/// Refracted direction for outgoing `wo` about `n` (both away from the
/// surface, `n` on the incident side). Returns `None` on total internal
/// reflection. `eta` is eta_incident / eta_transmitted.
pub fn refract<T: Real>(wo: Vector3<T>, n: Vector3<T>, eta: T) -> Option<Vector3<T>> {
    let cos_i = n.dot(wo);
    let sin2_t = eta * eta * (T::one() - cos_i * cos_i).max(T::zero());
    if sin2_t >= T::one() {
        return None;
    }
    let cos_t = (T::one() - sin2_t).sqrt();
    Some((-wo) * eta + n * (eta * cos_i - cos_t))
}

/// Cosine-weighted hemisphere direction in local coordinates (z up),
/// pdf = cos(theta) / pi.
pub fn cosine_sample_hemisphere<T: Real>(u1: T, u2: T) -> Vector3<T> {
    let r = u1.sqrt();
    let phi = T::of(2.0) * T::PI * u2;
    let z = (T::one() - u1).max(T::zero()).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cross_follows_right_hand_rule() {
        let x = Vector3::new(1.0, 0.0, 0.0);
        let y = Vector3::new(0.0, 1.0, 0.0);
        assert_eq!(x.cross(y), Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn onb_is_orthonormal_for_many_normals() {
        let mut rng = crate::rng::CounterRng::from_stream(7, &[1]);
        for _ in 0..200 {
            let n = Vector3::new(
                rng.next_f64() * 2.0 - 1.0,
                rng.next_f64() * 2.0 - 1.0,
                rng.next_f64() * 2.0 - 1.0,
            );
            if n.length() < 1e-3 {
                continue;
            }
            let n = n.normalized();
            let f = Onb::from_normal(n);
            assert_relative_eq!(f.tangent.length(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(f.bitangent.length(), 1.0, epsilon = 1e-12);
            assert!(f.tangent.dot(f.bitangent).abs() < 1e-12);
            assert!(f.tangent.dot(n).abs() < 1e-12);
            assert!(f.bitangent.dot(n).abs() < 1e-12);
            let round = f.to_world(f.to_local(Vector3::new(0.3, -0.4, 0.86)));
            let direct = Vector3::new(0.3, -0.4, 0.86);
            assert!((round - direct).length() < 1e-12);
        }
    }

    #[test]
    fn onb_z_up_is_identity_frame() {
        let f = Onb::from_normal(Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(f.to_local(Vector3::new(1.0, 0.0, 0.0)), Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn reflect_mirrors_about_normal() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        let v = Vector3::new(1.0, 0.0, 1.0).normalized();
        let r = reflect(v, n);
        assert_relative_eq!(r.x, -v.x, epsilon = 1e-15);
        assert_relative_eq!(r.z, v.z, epsilon = 1e-15);
    }

    #[test]
    fn refract_straight_through_at_normal_incidence() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        let wo = Vector3::new(0.0, 0.0, 1.0);
        let t = refract(wo, n, 1.0 / 1.5).unwrap();
        assert!((t - Vector3::new(0.0, 0.0, -1.0)).length() < 1e-12);
    }

    #[test]
    fn refract_reports_total_internal_reflection() {
        let n = Vector3::new(0.0, 0.0, 1.0);
        // Grazing exit from dense medium.
        let wo = Vector3::new(0.9, 0.0, 0.435_889_894_354_067_4).normalized();
        assert!(refract(wo, n, 1.5).is_none());
    }

    #[test]
    fn generic_math_works_in_f32() {
        let n: Vector3<f32> = Vector3::new(0.0, 1.0, 0.0);
        let f = Onb::from_normal(n);
        assert!((f.tangent.length() - 1.0).abs() < 1e-6);
        let c: Rgb<f32> = Rgb::new(0.25, 0.5, 1.0);
        assert!((c.luminance() - (0.2126 * 0.25 + 0.7152 * 0.5 + 0.0722)).abs() < 1e-6);
    }
}
