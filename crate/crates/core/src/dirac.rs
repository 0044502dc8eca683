//! Two-dimensional Dirac systems `ψ_z = Pφ`, `φ_z̄ = Qψ` for the signature
//! reductions of the DSII linear problem, with a constructive solver.
//!
//! The coefficient pair `(P, Q)` is selected from the potential by the
//! reduction tag and the solution slot:
//!
//! | signature | slot  | P   | Q      |
//! |-----------|-------|-----|--------|
//! | R⁴        | Φ₁    | p   | -p̄     |
//! | R⁴        | Φ₂    | p̄   | -p     |
//! | R²,²      | Φ₁    | p   | p̄      |
//! | R²,²      | Φ₂    | p̄   | p      |
//! | R³,¹      | any   | p   | q      |
//! | R³        | any   | p   | -p     |
//!
//! Spinors are stored as Bloch solutions: the periodic profiles `ψ̃, φ̃` and a
//! [`Twist`] such that `ψ = e^{λz+μz̄}ψ̃`. Residuals are measured on the
//! profiles, i.e. `(∂_z + λ)ψ̃ - Pφ̃` and `(∂_z̄ + μ)φ̃ - Qψ̃`.

use serde::{Deserialize, Serialize};

use crate::error::{DiracError, FieldError};
use crate::field2d::{Field2D, GridSpec, C64};
use crate::twist::{Twist, TwistedField};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signature {
    /// R⁴, metric diag(1,1,1,1).
    Euclidean4,
    /// R²,², metric diag(1,1,-1,-1).
    Split22,
    /// R³,¹, metric diag(1,1,1,-1).
    Minkowski31,
    /// R³ as the shared-pair real-potential reduction of R⁴.
    Euclid3,
}

impl Signature {
    /// Diagonal of the ambient metric (R³ is embedded with a trailing zero
    /// coordinate, so its fourth entry is irrelevant but kept Euclidean).
    pub fn metric(&self) -> [f64; 4] {
        match self {
            Signature::Euclidean4 | Signature::Euclid3 => [1.0, 1.0, 1.0, 1.0],
            Signature::Split22 => [1.0, 1.0, -1.0, -1.0],
            Signature::Minkowski31 => [1.0, 1.0, 1.0, -1.0],
        }
    }
}

/// Signature plus the sign `ε` of the `q = εp̄` reduction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReductionTag {
    pub signature: Signature,
    pub epsilon: i8,
}

impl ReductionTag {
    pub fn euclidean4() -> Self {
        Self { signature: Signature::Euclidean4, epsilon: -1 }
    }

    pub fn split22() -> Self {
        Self { signature: Signature::Split22, epsilon: 1 }
    }

    /// `epsilon` carries no meaning here; it is stored as +1.
    pub fn minkowski31() -> Self {
        Self { signature: Signature::Minkowski31, epsilon: 1 }
    }

    pub fn euclid3() -> Self {
        Self { signature: Signature::Euclid3, epsilon: -1 }
    }

    pub fn for_signature(signature: Signature) -> Self {
        match signature {
            Signature::Euclidean4 => Self::euclidean4(),
            Signature::Split22 => Self::split22(),
            Signature::Minkowski31 => Self::minkowski31(),
            Signature::Euclid3 => Self::euclid3(),
        }
    }

    pub fn eps(&self) -> f64 {
        self.epsilon as f64
    }

    /// Whether `q` is tied to `p` by `q = εp̄` (R⁴, R²,² and R³).
    pub fn is_reduced(&self) -> bool {
        !matches!(self.signature, Signature::Minkowski31)
    }

    fn validate(&self) -> Result<(), DiracError> {
        let ok = match self.signature {
            Signature::Euclidean4 | Signature::Euclid3 => self.epsilon == -1,
            Signature::Split22 => self.epsilon == 1,
            Signature::Minkowski31 => true,
        };
        if ok {
            Ok(())
        } else {
            Err(DiracError::ReductionViolated(format!(
                "epsilon {} is not allowed for {:?}",
                self.epsilon, self.signature
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    Phi1,
    Phi2,
    /// One pair used for both slots (R³,¹ and the R³ reduction).
    Shared,
}

/// Tolerance on the reduction constraints of a potential.
const REDUCTION_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracPotential {
    p: Field2D,
    q: Field2D,
    tag: ReductionTag,
}

impl DiracPotential {
    /// Potential of a reduced signature; `q = εp̄` is derived from `p`.
    pub fn reduced(p: Field2D, tag: ReductionTag) -> Result<Self, DiracError> {
        tag.validate()?;
        if !tag.is_reduced() {
            return Err(DiracError::ReductionViolated(
                "R3,1 potentials need an explicit q".into(),
            ));
        }
        if tag.signature == Signature::Euclid3 && p.max_imag() > REDUCTION_TOL * (1.0 + p.norm_inf()) {
            return Err(DiracError::ReductionViolated("R3 potential must be real".into()));
        }
        let q = p.conj().scale_re(tag.eps());
        Ok(Self { p, q, tag })
    }

    /// Real-valued pair `(p, q)` of the Minkowski representation.
    pub fn minkowski(p: Field2D, q: Field2D) -> Result<Self, DiracError> {
        p.check_same_grid(&q)?;
        let scale = 1.0 + p.norm_inf().max(q.norm_inf());
        if p.max_imag() > REDUCTION_TOL * scale || q.max_imag() > REDUCTION_TOL * scale {
            return Err(DiracError::ReductionViolated("R3,1 potentials must be real".into()));
        }
        Ok(Self { p, q, tag: ReductionTag::minkowski31() })
    }

    pub fn p(&self) -> &Field2D {
        &self.p
    }

    pub fn q(&self) -> &Field2D {
        &self.q
    }

    pub fn tag(&self) -> ReductionTag {
        self.tag
    }

    pub fn spec(&self) -> &GridSpec {
        self.p.spec()
    }

    /// Coefficients `(P, Q)` of the Dirac system for one solution slot.
    pub fn coefficients(&self, slot: Slot) -> Result<DiracCoefficients, DiracError> {
        let eps = self.tag.eps();
        let (p, q) = match (self.tag.signature, slot) {
            (Signature::Minkowski31, _) => (self.p.clone(), self.q.clone()),
            (Signature::Euclid3, _) => (self.p.clone(), self.p.scale_re(-1.0)),
            (_, Slot::Phi1) => (self.p.clone(), self.p.conj().scale_re(eps)),
            (_, Slot::Phi2) => (self.p.conj(), self.p.scale_re(eps)),
            (_, Slot::Shared) => {
                if self.p.max_imag() > REDUCTION_TOL * (1.0 + self.p.norm_inf()) {
                    return Err(DiracError::ReductionViolated(
                        "a shared pair needs a real potential".into(),
                    ));
                }
                (self.p.clone(), self.p.conj().scale_re(eps))
            }
        };
        Ok(DiracCoefficients { p, q })
    }
}

/// The coefficient fields `(P, Q)` of one system `ψ_z = Pφ`, `φ_z̄ = Qψ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiracCoefficients {
    pub p: Field2D,
    pub q: Field2D,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinorPair {
    psi: Field2D,
    phi: Field2D,
    slot: Slot,
    twist: Twist,
    residual: f64,
}

impl SpinorPair {
    /// Builds a pair; the residual is always recomputed against `coeffs`.
    pub fn new(
        psi: Field2D,
        phi: Field2D,
        slot: Slot,
        twist: Twist,
        coeffs: &DiracCoefficients,
    ) -> Result<Self, DiracError> {
        let (r1, r2) = residual_fields(&psi, &phi, twist, coeffs)?;
        let residual = r1.norm_inf().max(r2.norm_inf());
        Ok(Self { psi, phi, slot, twist, residual })
    }

    pub fn psi(&self) -> &Field2D {
        &self.psi
    }

    pub fn phi(&self) -> &Field2D {
        &self.phi
    }

    pub fn slot(&self) -> Slot {
        self.slot
    }

    pub fn twist(&self) -> Twist {
        self.twist
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn psi_t(&self) -> TwistedField {
        TwistedField::new(self.twist, self.psi.clone())
    }

    pub fn phi_t(&self) -> TwistedField {
        TwistedField::new(self.twist, self.phi.clone())
    }

    /// Multiplies both components by a constant.
    pub fn scaled(&self, c: C64, coeffs: &DiracCoefficients) -> Result<Self, DiracError> {
        Self::new(self.psi.scale(c), self.phi.scale(c), self.slot, self.twist, coeffs)
    }

    /// `(-φ̄, ψ̄)`, which solves the same R⁴ system as `(ψ, φ)`.
    pub fn conjugate_partner(&self, coeffs: &DiracCoefficients) -> Result<Self, DiracError> {
        Self::new(
            self.phi.conj().scale_re(-1.0),
            self.psi.conj(),
            self.slot,
            self.twist.conj(),
            coeffs,
        )
    }

    pub fn with_slot(mut self, slot: Slot) -> Self {
        self.slot = slot;
        self
    }
}

fn residual_fields(
    psi: &Field2D,
    phi: &Field2D,
    twist: Twist,
    coeffs: &DiracCoefficients,
) -> Result<(Field2D, Field2D), DiracError> {
    psi.check_same_grid(phi)?;
    psi.check_same_grid(&coeffs.p)?;
    psi.check_same_grid(&coeffs.q)?;
    let r1 = psi.d_z().add(&psi.scale(twist.lambda)).sub(&coeffs.p.mul(phi));
    let r2 = phi.d_zbar().add(&phi.scale(twist.mu)).sub(&coeffs.q.mul(psi));
    Ok((r1, r2))
}

/// Residual fields `(ψ_z - Pφ, φ_z̄ - Qψ)` of a pair against the system its
/// slot selects from `pot`.
pub fn dirac_residual(s: &SpinorPair, pot: &DiracPotential) -> Result<(Field2D, Field2D), DiracError> {
    let coeffs = pot.coefficients(s.slot)?;
    residual_fields(&s.psi, &s.phi, s.twist, &coeffs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor in (0, 1].
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 200, damping: 1.0 }
    }
}

/// Solves `(∂ + shift) g = f` on the non-null modes, leaving the zero mode at
/// `mean` and the Nyquist null modes at zero.
fn shifted_inverse(f: &Field2D, shift: C64, use_z: bool, mean: C64) -> Field2D {
    let spec = *f.spec();
    let mut coeffs = f.to_spectral();
    for my in 0..spec.ny {
        for mx in 0..spec.nx {
            let m = crate::field2d::mode_of(&spec, mx, my);
            let idx = spec.index(mx, my);
            coeffs[idx] = if m.is_mean {
                mean * spec.len() as f64
            } else if m.is_null() {
                C64::new(0.0, 0.0)
            } else {
                let s = if use_z { m.sz } else { m.szbar };
                coeffs[idx] / (s + shift)
            };
        }
    }
    Field2D::from_spectral(spec, coeffs)
}

const TWIST_SNAP: f64 = 1e-13;

/// Fixed-point solver for Bloch solutions of `ψ_z = Pφ`, `φ_z̄ = Qψ`.
///
/// The seeds must be constant fields (the only holomorphic functions on the
/// torus); their values `a`, `b` pin the zero modes of the periodic profiles.
/// Each sweep updates
///
/// ```text
/// λ = ⟨Pφ̃⟩/a,  ψ̃ = a + (∂_z + λ)⁻¹(Pφ̃ - ⟨Pφ̃⟩)
/// μ = ⟨Qψ̃⟩/b,  φ̃ = b + (∂_z̄ + μ)⁻¹(Qψ̃ - ⟨Qψ̃⟩)
/// ```
///
/// A zero seed component freezes the matching exponent at zero, which then
/// requires the corresponding product to stay mean-free.
pub fn solve_dirac_neumann(
    pot: &DiracPotential,
    slot: Slot,
    seed_psi: &Field2D,
    seed_phi: &Field2D,
    opts: SolveOptions,
) -> Result<SpinorPair, DiracError> {
    let coeffs = pot.coefficients(slot)?;
    solve_with_coefficients(&coeffs, slot, seed_psi, seed_phi, opts)
}

pub fn solve_with_coefficients(
    coeffs: &DiracCoefficients,
    slot: Slot,
    seed_psi: &Field2D,
    seed_phi: &Field2D,
    opts: SolveOptions,
) -> Result<SpinorPair, DiracError> {
    let spec = *coeffs.p.spec();
    seed_psi.check_same_grid(&coeffs.p)?;
    seed_phi.check_same_grid(&coeffs.p)?;
    let a = constant_seed(seed_psi)?;
    let b = constant_seed(seed_phi)?;
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(DiracError::ReductionViolated(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    let d = opts.damping;

    let mut psi = Field2D::constant(spec, a);
    let mut phi = Field2D::constant(spec, b);
    let mut twist = Twist::ZERO;
    let mut residual = f64::INFINITY;
    let zero = C64::new(0.0, 0.0);

    for it in 1..=opts.max_iter {
        let pf = coeffs.p.mul(&phi);
        let lambda = exponent_for(&pf, a).map_err(|e| DiracError::InContext {
            context: "psi update",
            source: e,
        })?;
        let psi_new = shifted_inverse(&pf, lambda, true, a);
        psi = psi.scale_re(1.0 - d).add(&psi_new.scale_re(d));
        twist.lambda = twist.lambda * (1.0 - d) + lambda * d;

        let qp = coeffs.q.mul(&psi);
        let mu = exponent_for(&qp, b).map_err(|e| DiracError::InContext {
            context: "phi update",
            source: e,
        })?;
        let phi_new = shifted_inverse(&qp, mu, false, b);
        phi = phi.scale_re(1.0 - d).add(&phi_new.scale_re(d));
        twist.mu = twist.mu * (1.0 - d) + mu * d;

        let (r1, r2) = residual_fields(&psi, &phi, twist, coeffs)?;
        residual = r1.norm_inf().max(r2.norm_inf());
        if !residual.is_finite() || residual > 1e12 {
            return Err(DiracError::NoConvergence { iterations: it, residual });
        }
        if residual <= opts.tol {
            // exponents at rounding level are exact zeros (periodic solutions)
            if a == zero || twist.lambda.norm() < TWIST_SNAP {
                twist.lambda = zero;
            }
            if b == zero || twist.mu.norm() < TWIST_SNAP {
                twist.mu = zero;
            }
            return SpinorPair::new(psi, phi, slot, twist, coeffs);
        }
    }
    Err(DiracError::NoConvergence { iterations: opts.max_iter, residual })
}

fn constant_seed(seed: &Field2D) -> Result<C64, DiracError> {
    let m = seed.mean();
    let spread = seed.add_const(-m).norm_inf();
    if spread > 1e-12 * (1.0 + m.norm()) {
        return Err(DiracError::NonHolomorphicSeed(spread));
    }
    Ok(m)
}

fn exponent_for(product: &Field2D, seed: C64) -> Result<C64, FieldError> {
    let mean = product.mean();
    if seed != C64::new(0.0, 0.0) {
        return Ok(mean / seed);
    }
    let tol = crate::field2d::TOL_MEAN * product.norm_inf();
    if mean.norm() > tol {
        return Err(FieldError::NonzeroMean { mean: mean.norm(), tol });
    }
    Ok(C64::new(0.0, 0.0))
}

/// Closed-form solution `e^{i k·x}` of a constant-coefficient system.
///
/// Requires `|k|² = -4PQ`. The component carrying the larger coefficient is
/// taken as the pure exponential.
pub fn exact_planewave_pair(
    pot: &DiracPotential,
    slot: Slot,
    k: (f64, f64),
) -> Result<SpinorPair, DiracError> {
    let coeffs = pot.coefficients(slot)?;
    planewave_with_coefficients(&coeffs, slot, k)
}

pub fn planewave_with_coefficients(
    coeffs: &DiracCoefficients,
    slot: Slot,
    k: (f64, f64),
) -> Result<SpinorPair, DiracError> {
    let spec = *coeffs.p.spec();
    let p0 = constant_value(&coeffs.p)?;
    let q0 = constant_value(&coeffs.q)?;
    let (kx, ky) = k;
    let on_lattice = |k: f64, l: f64| {
        let j = k * l / (2.0 * std::f64::consts::PI);
        (j - j.round()).abs() < 1e-9
    };
    if !on_lattice(kx, spec.lx) || !on_lattice(ky, spec.ly) {
        return Err(DiracError::OffLattice { kx, ky });
    }
    let k2 = kx * kx + ky * ky;
    let required = -4.0 * p0 * q0;
    if required.im.abs() > 1e-12 || (k2 - required.re).abs() > 1e-12 * (1.0 + k2) {
        return Err(DiracError::DispersionViolated { k2, required: required.re });
    }
    let wave = Field2D::from_fn(spec, |x, y| C64::new(0.0, kx * x + ky * y).exp());
    let sz = C64::new(0.5 * ky, 0.5 * kx);
    let szbar = C64::new(-0.5 * ky, 0.5 * kx);
    let zero = C64::new(0.0, 0.0);
    let (psi, phi) = if p0 == zero && q0 == zero {
        if k2 != 0.0 {
            return Err(DiracError::DispersionViolated { k2, required: 0.0 });
        }
        (wave.clone(), wave)
    } else if p0.norm() >= q0.norm() {
        let phi = wave.scale(sz / p0);
        (wave, phi)
    } else {
        let psi = wave.scale(szbar / q0);
        (psi, wave)
    };
    SpinorPair::new(psi, phi, slot, Twist::ZERO, coeffs)
}

fn constant_value(f: &Field2D) -> Result<C64, DiracError> {
    let m = f.mean();
    let spread = f.add_const(-m).norm_inf();
    if spread > 1e-12 * (1.0 + m.norm()) {
        return Err(DiracError::NonConstantPotential(spread));
    }
    Ok(m)
}

/// Gauge potentials `u`, `v` of the matrix Dirac system; zero by default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugePotentials {
    pub u: Field2D,
    pub v: Field2D,
}

impl GaugePotentials {
    pub fn zero(spec: GridSpec) -> Self {
        Self { u: Field2D::zeros(spec), v: Field2D::zeros(spec) }
    }
}

/// Residuals of `ψ_z = uψ + pφ`, `φ_z̄ = qψ + vφ` (gauged form) for a pair.
pub fn gauged_residual(
    s: &SpinorPair,
    gauge: &GaugePotentials,
    coeffs: &DiracCoefficients,
) -> Result<(Field2D, Field2D), DiracError> {
    gauge.u.check_same_grid(s.psi())?;
    gauge.v.check_same_grid(s.psi())?;
    let (r1, r2) = residual_fields(&s.psi, &s.phi, s.twist, coeffs)?;
    Ok((r1.sub(&gauge.u.mul(&s.psi)), r2.sub(&gauge.v.mul(&s.phi))))
}

/// Result of removing the diagonal gauge potentials.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeStripped {
    pub pair: SpinorPair,
    /// Coefficients `p e^{V-U}`, `q e^{U-V}` of the stripped system.
    pub coeffs: DiracCoefficients,
}

/// `ψ' = ψ e^{-∂_z⁻¹u}`, `φ' = φ e^{-∂_z̄⁻¹v}`; the stripped pair solves the
/// system without diagonal terms.
pub fn gauge_strip(
    gauge: &GaugePotentials,
    s: &SpinorPair,
    coeffs: &DiracCoefficients,
) -> Result<GaugeStripped, DiracError> {
    gauge.u.check_same_grid(s.psi())?;
    gauge.v.check_same_grid(s.psi())?;
    let big_u = gauge.u.inv_d_z()?;
    let big_v = gauge.v.inv_d_zbar()?;
    let eu = big_u.map(|w| (-w).exp());
    let ev = big_v.map(|w| (-w).exp());
    let stripped = DiracCoefficients {
        p: coeffs.p.mul(&big_v.sub(&big_u).map(|w| w.exp())),
        q: coeffs.q.mul(&big_u.sub(&big_v).map(|w| w.exp())),
    };
    let pair = SpinorPair::new(s.psi.mul(&eu), s.phi.mul(&ev), s.slot, s.twist, &stripped)?;
    Ok(GaugeStripped { pair, coeffs: stripped })
}
