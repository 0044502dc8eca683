//! Bloch (Floquet) factors `e^{λz + μz̄}` carried alongside periodic fields.
//!
//! Solutions of the Dirac systems on a torus are generically quasi-periodic:
//! a periodic profile times an exponential of a linear function of `z`, `z̄`.
//! A [`TwistedField`] stores the exponent and the periodic profile; all
//! differential identities are evaluated on the profile with shifted symbols
//! `∂_z + λ`, `∂_z̄ + μ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::field2d::{Field2D, GridSpec, C64};

/// Exponent `λz + μz̄` of a Bloch factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub lambda: C64,
    pub mu: C64,
}

impl Twist {
    pub const ZERO: Twist =
        Twist { lambda: Complex64 { re: 0.0, im: 0.0 }, mu: Complex64 { re: 0.0, im: 0.0 } };

    pub fn new(lambda: C64, mu: C64) -> Self {
        Self { lambda, mu }
    }

    pub fn is_zero(&self) -> bool {
        self.lambda == C64::new(0.0, 0.0) && self.mu == C64::new(0.0, 0.0)
    }

    /// Exponent of the complex conjugate factor.
    pub fn conj(&self) -> Twist {
        Twist { lambda: self.mu.conj(), mu: self.lambda.conj() }
    }

    pub fn exponent(&self, x: f64, y: f64) -> C64 {
        let z = C64::new(x, y);
        self.lambda * z + self.mu * z.conj()
    }

    pub fn factor(&self, x: f64, y: f64) -> C64 {
        self.exponent(x, y).exp()
    }

    pub fn dist(&self, other: &Twist) -> f64 {
        (self.lambda - other.lambda).norm().max((self.mu - other.mu).norm())
    }

    pub fn norm(&self) -> f64 {
        self.lambda.norm().max(self.mu.norm())
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;
    fn add(self, rhs: Twist) -> Twist {
        Twist { lambda: self.lambda + rhs.lambda, mu: self.mu + rhs.mu }
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist { lambda: -self.lambda, mu: -self.mu }
    }
}

/// The quasi-periodic function `e^{λz+μz̄}·f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistedField {
    pub twist: Twist,
    pub field: Field2D,
}

impl TwistedField {
    pub fn new(twist: Twist, field: Field2D) -> Self {
        Self { twist, field }
    }

    pub fn periodic(field: Field2D) -> Self {
        Self { twist: Twist::ZERO, field }
    }

    pub fn spec(&self) -> &GridSpec {
        self.field.spec()
    }

    pub fn d_z(&self) -> TwistedField {
        let f = &self.field;
        TwistedField::new(self.twist, f.d_z().add(&f.scale(self.twist.lambda)))
    }

    pub fn d_zbar(&self) -> TwistedField {
        let f = &self.field;
        TwistedField::new(self.twist, f.d_zbar().add(&f.scale(self.twist.mu)))
    }

    pub fn mul(&self, other: &TwistedField) -> TwistedField {
        TwistedField::new(self.twist + other.twist, self.field.mul(&other.field))
    }

    /// Multiplication by a periodic field.
    pub fn mul_periodic(&self, other: &Field2D) -> TwistedField {
        TwistedField::new(self.twist, self.field.mul(other))
    }

    pub fn scale(&self, c: C64) -> TwistedField {
        TwistedField::new(self.twist, self.field.scale(c))
    }

    pub fn conj(&self) -> TwistedField {
        TwistedField::new(self.twist.conj(), self.field.conj())
    }

    /// Sum of two fields with the same Bloch exponent.
    pub fn add(&self, other: &TwistedField) -> TwistedField {
        debug_assert!(self.twist.dist(&other.twist) <= 1e-12 * (1.0 + self.twist.norm()));
        TwistedField::new(self.twist, self.field.add(&other.field))
    }

    pub fn sub(&self, other: &TwistedField) -> TwistedField {
        debug_assert!(self.twist.dist(&other.twist) <= 1e-12 * (1.0 + self.twist.norm()));
        TwistedField::new(self.twist, self.field.sub(&other.field))
    }

    /// Point values of the full quasi-periodic function.
    pub fn values(&self) -> Vec<C64> {
        let spec = *self.spec();
        if self.twist.is_zero() {
            return self.field.values().to_vec();
        }
        let mut out = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                let fac = self.twist.factor(spec.x(ix), spec.y(iy));
                out.push(fac * self.field.at(ix, iy));
            }
        }
        out
    }

    /// `|e^{ζ}|²` at every grid point.
    pub fn modulus_sq_factor(&self) -> Vec<f64> {
        let spec = *self.spec();
        let mut out = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                let re = self.twist.exponent(spec.x(ix), spec.y(iy)).re;
                out.push((2.0 * re).exp());
            }
        }
        out
    }
}

/// `(e^w - 1)/w`, continuous at `w = 0`.
pub fn expm1_over(w: C64) -> C64 {
    if w.norm() < 1e-4 {
        // 1 + w/2 + w²/6 + w³/24 + w⁴/120
        let mut term = C64::new(1.0, 0.0);
        let mut sum = term;
        for k in 2..=6 {
            term = term * w / k as f64;
            sum += term;
        }
        sum
    } else {
        (w.exp() - 1.0) / w
    }
}
