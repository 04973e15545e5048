//! Points, axis-parallel boxes and the Helmholtz kernel.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{unit_phase, Real};

/// A point (or vector) in three dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Point3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    /// Largest absolute component.
    #[inline]
    pub fn max_abs(self) -> T {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }

    /// Unit vector in the direction of `self`, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() {
            Some(self.scale(T::one() / n))
        } else {
            None
        }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl<T: Real> Add for Point3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Point3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Point3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

/// Half-open axis-parallel box `(a1,b1] x (a2,b2] x (a3,b3]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox<T> {
    pub lower: Point3<T>,
    pub upper: Point3<T>,
}

impl<T: Real> AxisBox<T> {
    pub fn new(lower: Point3<T>, upper: Point3<T>) -> Result<Self> {
        let ok = lower.is_finite()
            && upper.is_finite()
            && lower.x < upper.x
            && lower.y < upper.y
            && lower.z < upper.z;
        if ok {
            Ok(Self { lower, upper })
        } else {
            Err(Error::InvalidBox)
        }
    }

    /// Cube `(-h, h]^3` shifted to `center`.
    pub fn cube(center: Point3<T>, half_side: T) -> Result<Self> {
        let h = Point3::new(half_side, half_side, half_side);
        Self::new(center - h, center + h)
    }

    #[inline]
    pub fn sides(&self) -> Point3<T> {
        self.upper - self.lower
    }

    #[inline]
    pub fn center(&self) -> Point3<T> {
        (self.lower + self.upper).scale(T::lit(0.5))
    }

    /// Membership under the half-open convention.
    #[inline]
    pub fn contains(&self, p: Point3<T>) -> bool {
        self.lower.x < p.x
            && p.x <= self.upper.x
            && self.lower.y < p.y
            && p.y <= self.upper.y
            && self.lower.z < p.z
            && p.z <= self.upper.z
    }

    /// Membership in the closure of the box.
    #[inline]
    pub fn contains_closed(&self, p: Point3<T>) -> bool {
        self.lower.x <= p.x
            && p.x <= self.upper.x
            && self.lower.y <= p.y
            && p.y <= self.upper.y
            && self.lower.z <= p.z
            && p.z <= self.upper.z
    }
}

/// Euclidean length of the box diagonal.
pub fn box_diameter<T: Real>(b: &AxisBox<T>) -> T {
    b.sides().norm()
}

/// Infimum of `|x - y|` over `x in t`, `y in s`; zero when the boxes touch or overlap.
pub fn box_distance<T: Real>(t: &AxisBox<T>, s: &AxisBox<T>) -> T {
    let gap = |tl: T, tu: T, sl: T, su: T| (sl - tu).max(tl - su).max(T::zero());
    let gx = gap(t.lower.x, t.upper.x, s.lower.x, s.upper.x);
    let gy = gap(t.lower.y, t.upper.y, s.lower.y, s.upper.y);
    let gz = gap(t.lower.z, t.upper.z, s.lower.z, s.upper.z);
    (gx * gx + gy * gy + gz * gz).sqrt()
}

/// Positive wave number of the Helmholtz kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveNumber<T>(T);

impl<T: Real> WaveNumber<T> {
    pub fn new(kappa: T) -> Result<Self> {
        if kappa > T::zero() && kappa.is_finite() {
            Ok(Self(kappa))
        } else {
            Err(Error::InvalidParameter(format!(
                "wave number must be positive and finite, got {kappa}"
            )))
        }
    }

    #[inline]
    pub fn get(self) -> T {
        self.0
    }
}

/// `exp(i k r) / (4 pi r)` for a precomputed distance `r > 0`.
#[inline]
pub fn kernel_from_distance<T: Real>(r: T, kappa: T) -> Complex<T> {
    let inv = T::one() / (T::lit(4.0) * T::PI() * r);
    unit_phase(kappa * r) * inv
}

/// Helmholtz kernel `f(x, y) = exp(i k |x - y|) / (4 pi |x - y|)`.
pub fn kernel<T: Real>(x: Point3<T>, y: Point3<T>, kappa: WaveNumber<T>) -> Result<Complex<T>> {
    let r = (x - y).norm();
    if r == T::zero() {
        return Err(Error::SingularPoint);
    }
    Ok(kernel_from_distance(r, kappa.get()))
}

/// Plane-wave damped kernel `f_c(x, y) = f(x, y) exp(-i k <x - y, c>)`.
///
/// The phase is evaluated as a single `exp(i k (|x - y| - <x - y, c>))` so that
/// it cancels exactly when `c` is aligned with `x - y`.
pub fn kernel_directional<T: Real>(
    x: Point3<T>,
    y: Point3<T>,
    c: Point3<T>,
    kappa: WaveNumber<T>,
) -> Result<Complex<T>> {
    directional_from_difference(x - y, c, kappa.get())
}

/// [`kernel_directional`] evaluated on a precomputed difference `d = x - y`.
#[inline]
pub fn directional_from_difference<T: Real>(
    d: Point3<T>,
    c: Point3<T>,
    kappa: T,
) -> Result<Complex<T>> {
    let r = d.norm();
    if r == T::zero() {
        return Err(Error::SingularPoint);
    }
    let inv = T::one() / (T::lit(4.0) * T::PI() * r);
    Ok(unit_phase(kappa * (r - d.dot(c))) * inv)
}
