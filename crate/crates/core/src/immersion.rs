//! Surfaces from spinor data: the generalized Weierstrass formulas for R⁴,
//! R²,², R³,¹ and the R³ reduction, the matrix form of the same 1-forms, and
//! the induced geometry.
//!
//! Every immersion 1-form `a dz + b dz̄` is a product of Bloch spinors and so
//! carries a single exponent `ζ = λz + μz̄`: `a = e^ζ ã`, `b = e^ζ b̃` with
//! periodic profiles. Its primitive is
//!
//! ```text
//! C = (c_z z + c_z̄ z̄)·(e^ζ - 1)/ζ + e^ζ G̃ - G̃(0)
//! ```
//!
//! where `G̃` is mean-free. For `ζ ≡ 0` this is the usual linear growth plus a
//! periodic remainder.

use serde::{Deserialize, Serialize};

use crate::dirac::{dirac_residual, DiracPotential, ReductionTag, Signature, Slot, SpinorPair};
use crate::error::ImmersionError;
use crate::field2d::{mode_of, Field2D, GridSpec, C64};
use crate::twist::{expm1_over, Twist, TwistedField};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

const FORM_TWIST_SNAP: f64 = 1e-10;

/// Default bound on the closedness residual accepted by the immersion engines.
pub const TOL_CLOSED: f64 = 1e-8;

/// Spinors and potential of one representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeierstrassData {
    pot: DiracPotential,
    pair1: SpinorPair,
    pair2: SpinorPair,
}

impl WeierstrassData {
    /// Checks slots against the signature and the residual of both pairs.
    ///
    /// R⁴ and R²,² take a Φ₁ pair and a Φ₂ pair, R³,¹ two solutions of the
    /// one system, and R³ the same shared pair twice.
    pub fn new(
        pot: DiracPotential,
        pair1: SpinorPair,
        pair2: SpinorPair,
        solve_tol: f64,
    ) -> Result<Self, ImmersionError> {
        let sig = pot.tag().signature;
        match sig {
            Signature::Euclidean4 | Signature::Split22 => {
                let ok1 = matches!(pair1.slot(), Slot::Phi1 | Slot::Shared);
                let ok2 = matches!(pair2.slot(), Slot::Phi2 | Slot::Shared);
                if !(ok1 && ok2) {
                    return Err(ImmersionError::InvalidData(format!(
                        "{sig:?} needs a Phi1 pair and a Phi2 pair, got {:?} and {:?}",
                        pair1.slot(),
                        pair2.slot()
                    )));
                }
            }
            Signature::Euclid3 => {
                if pair1.psi() != pair2.psi() || pair1.phi() != pair2.phi() {
                    return Err(ImmersionError::InvalidData(
                        "the R3 reduction uses one shared pair".into(),
                    ));
                }
            }
            Signature::Minkowski31 => {}
        }
        for (name, pair) in [("pair1", &pair1), ("pair2", &pair2)] {
            let (r1, r2) = dirac_residual(pair, &pot)?;
            let r = r1.norm_inf().max(r2.norm_inf());
            if !(r <= solve_tol) {
                return Err(ImmersionError::InvalidData(format!(
                    "{name} has residual {r:e} above tolerance {solve_tol:e}"
                )));
            }
        }
        Ok(Self { pot, pair1, pair2 })
    }

    /// R³ data from one pair solving `ψ_z = pφ`, `φ_z̄ = -pψ` with real `p`.
    pub fn euclid3(pot: DiracPotential, pair: SpinorPair, solve_tol: f64) -> Result<Self, ImmersionError> {
        Self::new(pot, pair.clone(), pair, solve_tol)
    }

    pub fn pot(&self) -> &DiracPotential {
        &self.pot
    }

    pub fn pair1(&self) -> &SpinorPair {
        &self.pair1
    }

    pub fn pair2(&self) -> &SpinorPair {
        &self.pair2
    }

    pub fn tag(&self) -> ReductionTag {
        self.pot.tag()
    }

    pub fn spec(&self) -> &GridSpec {
        self.pot.spec()
    }
}

/// A 1-form `e^ζ(ã dz + b̃ dz̄)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneForm {
    pub twist: Twist,
    pub dz: Field2D,
    pub dzbar: Field2D,
}

impl OneForm {
    fn from_products(dz: TwistedField, dzbar: TwistedField) -> Self {
        debug_assert!(dz.twist.dist(&dzbar.twist) <= 1e-12 * (1.0 + dz.twist.norm()));
        let spec = *dz.field.spec();
        // exponents that cancel analytically leave rounding residue, which
        // would make the mean mode of the primitive ill-conditioned
        let twist = if dz.twist.norm() * spec.lx.max(spec.ly) < FORM_TWIST_SNAP { Twist::ZERO } else { dz.twist };
        Self { twist, dz: dz.field, dzbar: dzbar.field }
    }

    pub fn scale(&self, c: C64) -> OneForm {
        OneForm { twist: self.twist, dz: self.dz.scale(c), dzbar: self.dzbar.scale(c) }
    }

    pub fn add(&self, other: &OneForm) -> OneForm {
        OneForm { twist: self.twist, dz: self.dz.add(&other.dz), dzbar: self.dzbar.add(&other.dzbar) }
    }

    /// Sup-norm of `(∂_z̄ + μ)ã - (∂_z + λ)b̃`.
    pub fn closedness(&self) -> f64 {
        let t = self.twist;
        let lhs = self.dz.d_zbar().add(&self.dz.scale(t.mu));
        let rhs = self.dzbar.d_z().add(&self.dzbar.scale(t.lambda));
        lhs.sub(&rhs).norm_inf()
    }

    /// Point values of the full coefficients `(a, b)`.
    pub fn values(&self) -> (Vec<C64>, Vec<C64>) {
        (
            TwistedField::new(self.twist, self.dz.clone()).values(),
            TwistedField::new(self.twist, self.dzbar.clone()).values(),
        )
    }
}

fn product(a: &TwistedField, b: &TwistedField) -> TwistedField {
    a.mul(b)
}

/// Primitive of a closed [`OneForm`], normalized to vanish at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub twist: Twist,
    /// Mean-free periodic part `G̃`.
    pub profile: Field2D,
    pub cz: C64,
    pub czbar: C64,
}

impl Primitive {
    /// Solves `(∂_z + λ)G = ã`, `(∂_z̄ + μ)G = b̃` mode by mode in the least
    /// squares sense; for a closed form both equations agree.
    pub fn of(form: &OneForm) -> Primitive {
        let spec = *form.dz.spec();
        let t = form.twist;
        let a = form.dz.to_spectral();
        let b = form.dzbar.to_spectral();
        let n = spec.len() as f64;
        let mut g = vec![ZERO; spec.len()];
        let (mut cz, mut czbar) = (ZERO, ZERO);
        for my in 0..spec.ny {
            for mx in 0..spec.nx {
                let m = mode_of(&spec, mx, my);
                let idx = spec.index(mx, my);
                if m.is_mean {
                    let (a0, b0) = (a[idx] / n, b[idx] / n);
                    if t.is_zero() {
                        cz = a0;
                        czbar = b0;
                    } else {
                        let g0 = least_squares(t.lambda, t.mu, a0, b0);
                        cz = t.lambda * g0;
                        czbar = t.mu * g0;
                    }
                    continue;
                }
                let (d1, d2) = (m.sz + t.lambda, m.szbar + t.mu);
                g[idx] = least_squares(d1, d2, a[idx], b[idx]);
            }
        }
        Primitive { twist: t, profile: Field2D::from_spectral(spec, g), cz, czbar }
    }

    pub fn spec(&self) -> &GridSpec {
        self.profile.spec()
    }

    pub fn values(&self) -> Vec<C64> {
        let spec = *self.spec();
        let g0 = self.profile.at(0, 0);
        let mut out = Vec::with_capacity(spec.len());
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                let z = C64::new(spec.x(ix), spec.y(iy));
                let zeta = self.twist.exponent(z.re, z.im);
                let lin = (self.cz * z + self.czbar * z.conj()) * expm1_over(zeta);
                out.push(lin + zeta.exp() * self.profile.at(ix, iy) - g0);
            }
        }
        out
    }

    pub fn d_z(&self) -> TwistedField {
        let g = &self.profile;
        let f = g.d_z().add(&g.scale(self.twist.lambda)).add_const(self.cz);
        TwistedField::new(self.twist, f)
    }

    pub fn d_zbar(&self) -> TwistedField {
        let g = &self.profile;
        let f = g.d_zbar().add(&g.scale(self.twist.mu)).add_const(self.czbar);
        TwistedField::new(self.twist, f)
    }

    pub fn d_zzbar(&self) -> TwistedField {
        self.d_z().d_zbar()
    }

    /// `(∂_x C, ∂_y C)` of the linear growth, present only without a twist.
    pub fn linear_part(&self) -> Option<(C64, C64)> {
        if self.twist.is_zero() {
            Some((self.cz + self.czbar, I * (self.cz - self.czbar)))
        } else {
            None
        }
    }
}

fn least_squares(d1: C64, d2: C64, a: C64, b: C64) -> C64 {
    let den = d1.norm_sqr() + d2.norm_sqr();
    if den < 1e-28 {
        ZERO
    } else {
        (d1.conj() * a + d2.conj() * b) / den
    }
}

/// `X^i = Σ Re(weight · C_k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub weight: C64,
    pub primitive: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    tag: ReductionTag,
    /// Samples of `X¹..X⁴` (real, stored as complex fields).
    coords: [Field2D; 4],
    /// Rows: coefficients of `x` and of `y` in the linear growth of each `X^i`.
    linear_part: [[f64; 4]; 2],
    primitives: Vec<Primitive>,
    terms: [Vec<Term>; 4],
}

impl Surface {
    fn assemble(
        tag: ReductionTag,
        primitives: Vec<Primitive>,
        terms: [Vec<Term>; 4],
    ) -> (Self, f64) {
        let spec = *primitives[0].spec();
        let values: Vec<Vec<C64>> = primitives.iter().map(Primitive::values).collect();
        let mut max_imag = 0.0f64;
        let mut linear_part = [[0.0; 4]; 2];
        let coords: [Field2D; 4] = std::array::from_fn(|i| {
            let mut acc = vec![ZERO; spec.len()];
            for t in &terms[i] {
                for (a, v) in acc.iter_mut().zip(&values[t.primitive]) {
                    *a += t.weight * v;
                }
                if let Some((lx, ly)) = primitives[t.primitive].linear_part() {
                    linear_part[0][i] += (t.weight * lx).re;
                    linear_part[1][i] += (t.weight * ly).re;
                }
            }
            for a in acc.iter_mut() {
                max_imag = max_imag.max(a.im.abs());
                *a = C64::new(a.re, 0.0);
            }
            Field2D::from_values(spec, acc).unwrap_or_else(|_| Field2D::zeros(spec))
        });
        (Self { tag, coords, linear_part, primitives, terms }, max_imag)
    }

    pub fn tag(&self) -> ReductionTag {
        self.tag
    }

    pub fn spec(&self) -> &GridSpec {
        self.coords[0].spec()
    }

    pub fn coords(&self) -> &[Field2D; 4] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> &Field2D {
        &self.coords[i]
    }

    pub fn linear_part(&self) -> [[f64; 4]; 2] {
        self.linear_part
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.primitives
    }

    /// Point values of `X^i_z`; `X^i_z̄` is their conjugate.
    pub fn tangent_z(&self) -> [Vec<C64>; 4] {
        let dz: Vec<Vec<C64>> = self.primitives.iter().map(|p| p.d_z().values()).collect();
        let dzb: Vec<Vec<C64>> = self.primitives.iter().map(|p| p.d_zbar().values()).collect();
        let n = self.spec().len();
        std::array::from_fn(|i| {
            let mut acc = vec![ZERO; n];
            for t in &self.terms[i] {
                let (a, b) = (&dz[t.primitive], &dzb[t.primitive]);
                for k in 0..n {
                    acc[k] += 0.5 * (t.weight * a[k] + t.weight.conj() * b[k].conj());
                }
            }
            acc
        })
    }

    /// Point values of `X^i_zz̄`.
    pub fn laplace_z(&self) -> [Vec<f64>; 4] {
        let d: Vec<Vec<C64>> = self.primitives.iter().map(|p| p.d_zzbar().values()).collect();
        let n = self.spec().len();
        std::array::from_fn(|i| {
            let mut acc = vec![0.0; n];
            for t in &self.terms[i] {
                for k in 0..n {
                    acc[k] += (t.weight * d[t.primitive][k]).re;
                }
            }
            acc
        })
    }

    /// Conformality and metric defects against a conformal factor `F`.
    pub fn conformal_check(&self, factor: &[f64]) -> ConformalCheck {
        let g = self.tag.signature.metric();
        let xz = self.tangent_z();
        let mut hopf = 0.0f64;
        let mut metric_err = 0.0f64;
        let mut scale = 0.0f64;
        for k in 0..factor.len() {
            let mut zz = ZERO;
            let mut zzb = 0.0;
            for i in 0..4 {
                zz += g[i] * xz[i][k] * xz[i][k];
                zzb += g[i] * xz[i][k].norm_sqr();
            }
            hopf = hopf.max(zz.norm());
            metric_err = metric_err.max((2.0 * zzb - factor[k]).abs());
            scale = scale.max(factor[k].abs());
        }
        ConformalCheck { hopf, metric_err, scale }
    }

    /// `H⃗ = 2X_zz̄/F` and its squared norm in the ambient signature.
    pub fn numeric_mean_curvature(&self, factor: &[f64]) -> ([Vec<f64>; 4], Vec<f64>) {
        let g = self.tag.signature.metric();
        let lap = self.laplace_z();
        let hvec: [Vec<f64>; 4] = std::array::from_fn(|i| {
            lap[i].iter().zip(factor).map(|(l, f)| 2.0 * l / f).collect()
        });
        let hsq = (0..factor.len()).map(|k| (0..4).map(|i| g[i] * hvec[i][k] * hvec[i][k]).sum()).collect();
        (hvec, hsq)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConformalCheck {
    /// `sup |⟨X_z, X_z⟩|`.
    pub hopf: f64,
    /// `sup |2⟨X_z, X_z̄⟩ - F|`.
    pub metric_err: f64,
    /// `sup |F|`.
    pub scale: f64,
}

impl ConformalCheck {
    pub fn hopf_rel(&self) -> f64 {
        self.hopf / self.scale.max(f64::MIN_POSITIVE)
    }

    pub fn metric_rel(&self) -> f64 {
        self.metric_err / self.scale.max(f64::MIN_POSITIVE)
    }
}

struct Spinors {
    psi1: TwistedField,
    phi1: TwistedField,
    psi2: TwistedField,
    phi2: TwistedField,
}

impl Spinors {
    fn of(data: &WeierstrassData) -> Self {
        Self {
            psi1: data.pair1.psi_t(),
            phi1: data.pair1.phi_t(),
            psi2: data.pair2.psi_t(),
            phi2: data.pair2.phi_t(),
        }
    }
}

/// The complex 1-forms of the representation with their weights into
/// `X¹..X⁴` (`X^i = Σ Re(w C)`).
pub fn weierstrass_forms(data: &WeierstrassData) -> (Vec<OneForm>, [Vec<Term>; 4]) {
    let s = Spinors::of(data);
    let form = |a: TwistedField, b: TwistedField| OneForm::from_products(a, b);
    let term = |weight: C64, primitive: usize| Term { weight, primitive };
    match data.tag().signature {
        Signature::Euclidean4 | Signature::Euclid3 => {
            // X¹ + iX², X³ + iX⁴
            let c1 = form(product(&s.phi1, &s.phi2).scale(-ONE), product(&s.psi1, &s.psi2));
            let c2 = form(product(&s.psi2.conj(), &s.phi1), product(&s.psi1, &s.phi2.conj()));
            (
                vec![c1, c2],
                [vec![term(ONE, 0)], vec![term(-I, 0)], vec![term(ONE, 1)], vec![term(-I, 1)]],
            )
        }
        Signature::Split22 => {
            let c1 = form(product(&s.phi1, &s.phi2), product(&s.psi1, &s.psi2));
            let c2 = form(
                product(&s.psi1.conj(), &s.phi2).scale(I),
                product(&s.psi2, &s.phi1.conj()).scale(I),
            );
            (
                vec![c1, c2],
                [vec![term(ONE, 0)], vec![term(-I, 0)], vec![term(ONE, 1)], vec![term(-I, 1)]],
            )
        }
        Signature::Minkowski31 => {
            // X¹ + iX², X³ + X⁴, X³ - X⁴
            let c1 = form(product(&s.psi2.conj(), &s.phi1), product(&s.psi1, &s.phi2.conj()));
            let c3 = form(product(&s.psi1.conj(), &s.phi1), product(&s.psi1, &s.phi1.conj()));
            let c4 = form(
                product(&s.psi2.conj(), &s.phi2).scale(-ONE),
                product(&s.psi2, &s.phi2.conj()).scale(-ONE),
            );
            let h = C64::new(0.5, 0.0);
            (
                vec![c1, c3, c4],
                [
                    vec![term(ONE, 0)],
                    vec![term(-I, 0)],
                    vec![term(h, 1), term(h, 2)],
                    vec![term(h, 1), term(-h, 2)],
                ],
            )
        }
    }
}

/// Closedness residuals of every closedness identity of the representation.
/// For R³,¹ this includes the mixed `α ≠ β` identities that do not enter
/// the coordinates.
pub fn closedness_residual(data: &WeierstrassData) -> Result<f64, ImmersionError> {
    data.pair1.psi().check_same_grid(data.pair2.psi())?;
    let (forms, _) = weierstrass_forms(data);
    let mut r = forms.iter().map(OneForm::closedness).fold(0.0, f64::max);
    if data.tag().signature == Signature::Minkowski31 {
        let s = Spinors::of(data);
        let mixed = OneForm::from_products(product(&s.psi1.conj(), &s.phi2), product(&s.psi2, &s.phi1.conj()));
        r = r.max(mixed.closedness());
    }
    Ok(r)
}

/// Coordinates from the Weierstrass integrals, with `X(0, 0) = 0`.
pub fn immerse(data: &WeierstrassData, tol_closed: f64) -> Result<Surface, ImmersionError> {
    let closed = closedness_residual(data)?;
    if !(closed <= tol_closed) {
        return Err(ImmersionError::ClosednessViolated(closed));
    }
    let (forms, terms) = weierstrass_forms(data);
    let primitives = forms.iter().map(Primitive::of).collect();
    Ok(Surface::assemble(data.tag(), primitives, terms).0)
}

type Mat2 = [[TwistedField; 2]; 2];

fn spinor_matrix(data: &WeierstrassData, which: usize) -> Mat2 {
    let s = Spinors::of(data);
    let (psi, phi) = if which == 1 { (&s.psi1, &s.phi1) } else { (&s.psi2, &s.phi2) };
    match data.tag().signature {
        Signature::Euclidean4 | Signature::Euclid3 => {
            [[psi.clone(), phi.conj().scale(-ONE)], [phi.clone(), psi.conj()]]
        }
        Signature::Split22 => [[psi.clone(), phi.conj()], [phi.clone(), psi.conj()]],
        Signature::Minkowski31 => [[s.psi1.clone(), s.psi2.clone()], [s.phi1.clone(), s.phi2.clone()]],
    }
}

/// Inverses of the basis matrices `τ_i` for a signature.
fn tau_inverse(sig: Signature) -> [[[C64; 2]; 2]; 4] {
    let s1 = [[ZERO, ONE], [ONE, ZERO]];
    let s2_inv = [[ZERO, -I], [I, ZERO]];
    let s3 = [[ONE, ZERO], [ZERO, -ONE]];
    let id = [[ONE, ZERO], [ZERO, ONE]];
    let scale = |m: [[C64; 2]; 2], c: C64| m.map(|r| r.map(|v| v * c));
    match sig {
        Signature::Euclidean4 | Signature::Euclid3 => [s1, s2_inv, s3, scale(id, -I)],
        Signature::Split22 => [s1, s2_inv, scale(s3, -I), id],
        Signature::Minkowski31 => [s1, s2_inv, s3, id],
    }
}

/// Coordinates from `d(Σ τ_i X^i) = Φ₂† [[0, dz], [dz̄, 0]] Φ₁` expanded in the
/// `τ` basis of the signature.
pub fn immerse_matrix_form(data: &WeierstrassData, tol_closed: f64) -> Result<Surface, ImmersionError> {
    data.pair1.psi().check_same_grid(data.pair2.psi())?;
    let phi1 = spinor_matrix(data, 1);
    let phi2 = spinor_matrix(data, 2);
    // entries of the matrix 1-form
    let entry = |i: usize, j: usize| {
        OneForm::from_products(product(&phi2[0][i].conj(), &phi1[1][j]), product(&phi2[1][i].conj(), &phi1[0][j]))
    };
    let m = [[entry(0, 0), entry(0, 1)], [entry(1, 0), entry(1, 1)]];
    let taus = tau_inverse(data.tag().signature);

    let mut forms: Vec<OneForm> = Vec::new();
    let mut terms: [Vec<Term>; 4] = Default::default();
    for (i, tinv) in taus.iter().enumerate() {
        // X^i = ½ tr(τ_i⁻¹ M), grouped by exponent
        let mut groups: Vec<OneForm> = Vec::new();
        for j in 0..2 {
            for k in 0..2 {
                let c = tinv[j][k] * 0.5;
                if c == ZERO {
                    continue;
                }
                let f = m[k][j].scale(c);
                match groups.iter_mut().find(|g| g.twist.dist(&f.twist) <= 1e-12 * (1.0 + f.twist.norm())) {
                    Some(g) => *g = g.add(&f),
                    None => groups.push(f),
                }
            }
        }
        for g in groups {
            terms[i].push(Term { weight: ONE, primitive: forms.len() });
            forms.push(g);
        }
    }
    let closed = forms.iter().map(OneForm::closedness).fold(0.0, f64::max);
    if !(closed <= tol_closed) {
        return Err(ImmersionError::ClosednessViolated(closed));
    }
    let primitives: Vec<Primitive> = forms.iter().map(Primitive::of).collect();
    let (surface, max_imag) = Surface::assemble(data.tag(), primitives, terms);
    let scale = surface.coords.iter().map(Field2D::norm_inf).fold(1.0, f64::max);
    if max_imag > 1e-9 * scale {
        return Err(ImmersionError::BasisExpansionFailed(max_imag));
    }
    Ok(surface)
}

/// Path ordering for [`line_primitive`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathOrder {
    /// Along `x` at `y = 0`, then along `y`.
    XFirst,
    /// Along `y` at `x = 0`, then along `x`.
    YFirst,
}

/// Values at every grid point of `∫ a dz + b dz̄` along an axis-parallel
/// two-leg path from the origin.
///
/// Each leg is integrated exactly for the trigonometric interpolant of the
/// samples on that grid line (with the Bloch factor integrated in closed
/// form), so the result is independent of the 2D spectral primitive.
pub fn line_primitive(form: &OneForm, order: PathOrder) -> Vec<C64> {
    let spec = *form.dz.spec();
    let t = form.twist;
    let (a, b) = (&form.dz, &form.dzbar);
    // along x: a dz + b dz̄ = (a + b) dx, e^ζ = e^{(λ+μ)x} e^{i(λ-μ)y}
    // along y: = i(a - b) dy,         e^ζ = e^{(λ+μ)x} e^{i(λ-μ)y}
    let cx = t.lambda + t.mu;
    let cy = I * (t.lambda - t.mu);
    let row = |iy: usize| -> Vec<C64> { (0..spec.nx).map(|ix| a.at(ix, iy) + b.at(ix, iy)).collect() };
    let col = |ix: usize| -> Vec<C64> { (0..spec.ny).map(|iy| I * (a.at(ix, iy) - b.at(ix, iy))).collect() };
    let mut out = vec![ZERO; spec.len()];
    match order {
        PathOrder::XFirst => {
            let first = cumulative(&row(0), spec.lx, cx);
            for ix in 0..spec.nx {
                let base = first[ix];
                let x = spec.x(ix);
                let leg = cumulative(&col(ix), spec.ly, cy);
                let fac = (cx * x).exp();
                for iy in 0..spec.ny {
                    out[spec.index(ix, iy)] = base + fac * leg[iy];
                }
            }
        }
        PathOrder::YFirst => {
            let first = cumulative(&col(0), spec.ly, cy);
            for iy in 0..spec.ny {
                let base = first[iy];
                let y = spec.y(iy);
                let leg = cumulative(&row(iy), spec.lx, cx);
                let fac = (cy * y).exp();
                for ix in 0..spec.nx {
                    out[spec.index(ix, iy)] = base + fac * leg[ix];
                }
            }
        }
    }
    out
}

/// `∫_0^{s_j} e^{c s} f(s) ds` at every sample point `s_j = jL/n`, exact for
/// the trigonometric interpolant of `f`.
fn cumulative(f: &[C64], period: f64, c: C64) -> Vec<C64> {
    let n = f.len();
    let h = period / n as f64;
    let half = n / 2;
    // naive DFT; the Nyquist coefficient is split evenly between ±n/2
    let mut modes: Vec<(f64, C64)> = Vec::with_capacity(n + 1);
    for m in 0..n {
        let mut acc = ZERO;
        for (j, v) in f.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * (m * j % n) as f64 / n as f64;
            acc += v * C64::from_polar(1.0, ang);
        }
        acc /= n as f64;
        let k = 2.0 * std::f64::consts::PI / period;
        if m < half {
            modes.push((k * m as f64, acc));
        } else if m == half {
            modes.push((k * half as f64, acc * 0.5));
            modes.push((-k * half as f64, acc * 0.5));
        } else {
            modes.push((k * (m as f64 - n as f64), acc));
        }
    }
    (0..n)
        .map(|j| {
            let s = j as f64 * h;
            modes
                .iter()
                .map(|&(k, ck)| {
                    let w = (c + I * k) * s;
                    ck * s * expm1_over(w)
                })
                .sum()
        })
        .collect()
}

/// Conformal factors and curvatures of an immersion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    /// `u₁, u₂` (R⁴, R³), `v₁, v₂` (R²,²) or the single factor
    /// `|ψ₁φ₂ - ψ₂φ₁|²` (R³,¹), at the grid points.
    pub factors: Vec<Field2D>,
    /// Total conformal factor `F` of `ds² = F dz dz̄`.
    pub metric: Field2D,
    pub gaussian: Field2D,
    /// Squared mean curvature vector.
    pub hsq: Field2D,
    /// Mean curvature vector (R⁴ and R³ only).
    pub hvec: Option<[Field2D; 4]>,
    pub willmore: f64,
}

impl GeometryReport {
    pub fn metric_values(&self) -> Vec<f64> {
        self.metric.values().iter().map(|v| v.re).collect()
    }

    pub fn metric_min(&self) -> f64 {
        self.metric.values().iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryOptions {
    /// Smallest admissible `|F|`, relative to `sup |F|`.
    pub metric_floor: f64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self { metric_floor: 1e-10 }
    }
}

fn real_field(spec: GridSpec, v: impl IntoIterator<Item = f64>) -> Field2D {
    let vals: Vec<C64> = v.into_iter().map(|x| C64::new(x, 0.0)).collect();
    Field2D::from_values(spec, vals).unwrap_or_else(|_| Field2D::zeros(spec))
}

/// The conformal factor(s) at the grid points and the periodic profile of
/// the total factor.
fn factors(data: &WeierstrassData) -> (Vec<Field2D>, Field2D, Field2D) {
    let spec = *data.spec();
    let s = Spinors::of(data);
    let sig = data.tag().signature;
    let pair_factor = |psi: &TwistedField, phi: &TwistedField, sign: f64| -> (Field2D, Field2D) {
        let profile = psi.field.abs_sq().add(&phi.field.abs_sq().scale_re(sign));
        let grow = psi.modulus_sq_factor();
        let full = real_field(spec, profile.values().iter().zip(&grow).map(|(v, g)| v.re * g));
        (full, profile)
    };
    match sig {
        Signature::Minkowski31 => {
            let d = product(&s.psi1, &s.phi2).sub(&product(&s.psi2, &s.phi1));
            let profile = d.field.abs_sq();
            let grow = d.modulus_sq_factor();
            let full = real_field(spec, profile.values().iter().zip(&grow).map(|(v, g)| v.re * g));
            (vec![full.clone()], full, profile)
        }
        _ => {
            let sign = if sig == Signature::Split22 { -1.0 } else { 1.0 };
            let (f1, p1) = pair_factor(&s.psi1, &s.phi1, sign);
            let (f2, p2) = pair_factor(&s.psi2, &s.phi2, sign);
            let total = f1.mul(&f2);
            (vec![f1, f2], total, p1.mul(&p2))
        }
    }
}

fn check_metric(metric: &Field2D, floor: f64) -> Result<(), ImmersionError> {
    let spec = *metric.spec();
    let scale = metric.norm_inf();
    let sign0 = metric.at(0, 0).re.signum();
    for iy in 0..spec.ny {
        for ix in 0..spec.nx {
            let v = metric.at(ix, iy).re;
            if !v.is_finite() || v.abs() <= floor * scale || v.signum() != sign0 {
                return Err(ImmersionError::DegenerateMetric { ix, iy, value: v });
            }
        }
    }
    Ok(())
}

/// `H⃗²F`, which depends on the potential alone: `4|p|²` in R⁴ and R³,
/// `-4|p|²` in R²,², `-4pq` in R³,¹.
pub fn willmore_density(pot: &DiracPotential) -> Field2D {
    let p = pot.p();
    match pot.tag().signature {
        Signature::Euclidean4 | Signature::Euclid3 => p.abs_sq().scale_re(4.0),
        Signature::Split22 => p.abs_sq().scale_re(-4.0),
        Signature::Minkowski31 => p.mul(pot.q()).scale_re(-4.0),
    }
}

/// Willmore functional `∫H⃗² dS`.
pub fn willmore(pot: &DiracPotential) -> f64 {
    willmore_density(pot).integrate().re
}

/// Induced metric, Gaussian curvature, mean curvature and Willmore functional
/// from the spinors.
pub fn geometry(data: &WeierstrassData, opts: GeometryOptions) -> Result<GeometryReport, ImmersionError> {
    let spec = *data.spec();
    let (factors, metric, profile) = factors(data);
    check_metric(&metric, opts.metric_floor)?;
    let sig = data.tag().signature;

    let log_f = profile.map(|v| C64::new(v.re.abs().ln(), 0.0));
    let lap = log_f.d_zzbar();
    let gaussian = real_field(spec, lap.values().iter().zip(metric.values()).map(|(l, f)| -2.0 * l.re / f.re));

    let numer = willmore_density(data.pot());
    let hsq = real_field(spec, numer.values().iter().zip(metric.values()).map(|(n, f)| n.re / f.re));
    let willmore = numer.integrate().re;

    let hvec = match sig {
        Signature::Euclidean4 | Signature::Euclid3 => Some(mean_curvature_vector(data, &metric)),
        _ => None,
    };
    Ok(GeometryReport { factors, metric, gaussian, hsq, hvec, willmore })
}

/// `H⃗ = (2/F)[Re A, Im A, Re B, Im B]` with `A = pψ₂φ₁ + p̄ψ₁φ₂` and
/// `B = pφ₁φ̄₂ - p̄ψ₁ψ̄₂`.
fn mean_curvature_vector(data: &WeierstrassData, metric: &Field2D) -> [Field2D; 4] {
    let spec = *data.spec();
    let s = Spinors::of(data);
    let p = TwistedField::periodic(data.pot().p().clone());
    let pb = p.conj();
    let a = product(&p, &product(&s.psi2, &s.phi1)).values();
    let a2 = product(&pb, &product(&s.psi1, &s.phi2)).values();
    let b = product(&p, &product(&s.phi1, &s.phi2.conj())).values();
    let b2 = product(&pb, &product(&s.psi1, &s.psi2.conj())).values();
    let f = metric.values();
    let comp = |g: &dyn Fn(usize) -> f64| real_field(spec, (0..spec.len()).map(|k| 2.0 * g(k) / f[k].re));
    [
        comp(&|k| (a[k] + a2[k]).re),
        comp(&|k| (a[k] + a2[k]).im),
        comp(&|k| (b[k] - b2[k]).re),
        comp(&|k| (b[k] - b2[k]).im),
    ]
}

/// Deviation from the constant mean curvature constraint for `|H| = h`:
/// `sup ||p| - (h/2)√|F||` in R⁴, R²,² and R³, `sup |pq + ¼h²F|` in R³,¹.
pub fn cmc_residual(data: &WeierstrassData, h_target: f64, opts: GeometryOptions) -> Result<f64, ImmersionError> {
    let (_, metric, _) = factors(data);
    check_metric(&metric, opts.metric_floor)?;
    let p = data.pot().p();
    let f = metric.values();
    let r = match data.tag().signature {
        Signature::Minkowski31 => {
            let pq = p.mul(data.pot().q());
            pq.values().iter().zip(f).map(|(v, f)| (v.re + 0.25 * h_target * h_target * f.re).abs()).fold(0.0, f64::max)
        }
        _ => p
            .values()
            .iter()
            .zip(f)
            .map(|(v, f)| (v.norm() - 0.5 * h_target.abs() * f.re.abs().sqrt()).abs())
            .fold(0.0, f64::max),
    };
    Ok(r)
}

/// `arg p`, the free phase of the constant mean curvature system.
pub fn cmc_phase(data: &WeierstrassData) -> Field2D {
    data.pot().p().map(|v| C64::new(v.arg(), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::{solve_dirac_neumann, SolveOptions};

    fn grid(n: usize) -> GridSpec {
        GridSpec::square_2pi(n).unwrap()
    }

    fn plane_data() -> WeierstrassData {
        let spec = grid(16);
        let pot = DiracPotential::reduced(Field2D::zeros(spec), ReductionTag::euclidean4()).unwrap();
        let one = Field2D::constant(spec, ONE);
        let zero = Field2D::zeros(spec);
        let c1 = pot.coefficients(Slot::Phi1).unwrap();
        let c2 = pot.coefficients(Slot::Phi2).unwrap();
        let p1 = SpinorPair::new(one.clone(), zero.clone(), Slot::Phi1, Twist::ZERO, &c1).unwrap();
        let p2 = SpinorPair::new(one, zero, Slot::Phi2, Twist::ZERO, &c2).unwrap();
        WeierstrassData::new(pot, p1, p2, 1e-12).unwrap()
    }

    fn solved_r4(n: usize) -> WeierstrassData {
        let spec = grid(n);
        let p = Field2D::from_fn(spec, |x, y| C64::new(0.1 * (1.0 + 0.3 * x.cos()), 0.05 * y.sin()));
        let pot = DiracPotential::reduced(p, ReductionTag::euclidean4()).unwrap();
        let opts = SolveOptions::default();
        let s1 = solve_dirac_neumann(
            &pot,
            Slot::Phi1,
            &Field2D::constant(spec, ONE),
            &Field2D::constant(spec, -I),
            opts,
        )
        .unwrap();
        let s2 = solve_dirac_neumann(
            &pot,
            Slot::Phi2,
            &Field2D::constant(spec, ONE),
            &Field2D::constant(spec, C64::new(0.5, 0.0)),
            opts,
        )
        .unwrap();
        WeierstrassData::new(pot, s1, s2, 1e-10).unwrap()
    }

    #[test]
    fn plane_from_constant_spinors() {
        let data = plane_data();
        assert_eq!(closedness_residual(&data).unwrap(), 0.0);
        let s = immerse(&data, TOL_CLOSED).unwrap();
        let spec = *s.spec();
        for iy in 0..spec.ny {
            for ix in 0..spec.nx {
                assert!((s.coord(0).at(ix, iy).re - spec.x(ix)).abs() < 1e-12);
                assert!((s.coord(1).at(ix, iy).re + spec.y(iy)).abs() < 1e-12);
                assert!(s.coord(2).at(ix, iy).norm() < 1e-12);
                assert!(s.coord(3).at(ix, iy).norm() < 1e-12);
            }
        }
        assert_eq!(s.linear_part()[0], [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.linear_part()[1], [0.0, -1.0, 0.0, 0.0]);
        let g = geometry(&data, GeometryOptions::default()).unwrap();
        assert_eq!(g.willmore, 0.0);
        assert!(g.gaussian.norm_inf() < 1e-14);
        assert!(g.hsq.norm_inf() < 1e-14);
    }

    #[test]
    fn plane_metric_convention() {
        let data = plane_data();
        let s = immerse(&data, TOL_CLOSED).unwrap();
        let g = geometry(&data, GeometryOptions::default()).unwrap();
        let c = s.conformal_check(&g.metric_values());
        assert!(c.hopf < 1e-14 && c.metric_err < 1e-14);
    }

    #[test]
    fn zero_spinors_give_zero_surface() {
        let spec = grid(8);
        let pot = DiracPotential::reduced(Field2D::zeros(spec), ReductionTag::euclidean4()).unwrap();
        let z = Field2D::zeros(spec);
        let c1 = pot.coefficients(Slot::Phi1).unwrap();
        let c2 = pot.coefficients(Slot::Phi2).unwrap();
        let p1 = SpinorPair::new(z.clone(), z.clone(), Slot::Phi1, Twist::ZERO, &c1).unwrap();
        let p2 = SpinorPair::new(z.clone(), z, Slot::Phi2, Twist::ZERO, &c2).unwrap();
        let data = WeierstrassData::new(pot, p1, p2, 1e-12).unwrap();
        let s = immerse_matrix_form(&data, TOL_CLOSED).unwrap();
        assert!(s.coords().iter().all(|c| c.norm_inf() == 0.0));
        assert!(matches!(
            geometry(&data, GeometryOptions::default()),
            Err(ImmersionError::DegenerateMetric { .. })
        ));
    }

    #[test]
    fn solved_pairs_are_closed_and_engines_agree() {
        let data = solved_r4(32);
        assert!(closedness_residual(&data).unwrap() < 1e-9);
        let a = immerse(&data, TOL_CLOSED).unwrap();
        let b = immerse_matrix_form(&data, TOL_CLOSED).unwrap();
        for i in 0..4 {
            assert!(a.coord(i).dist_inf(b.coord(i)) < 1e-10, "coordinate {i}");
        }
    }

    #[test]
    fn random_fields_are_not_closed() {
        let data = solved_r4(16);
        let spec = *data.spec();
        let bump = Field2D::from_fn(spec, |x, y| C64::new((2.0 * x).sin() * y.cos(), 0.3 * (x + y).cos()));
        let pot = data.pot().clone();
        let c1 = pot.coefficients(Slot::Phi1).unwrap();
        let bad = SpinorPair::new(
            data.pair1().psi().add(&bump),
            data.pair1().phi().clone(),
            Slot::Phi1,
            data.pair1().twist(),
            &c1,
        )
        .unwrap();
        let broken = WeierstrassData { pot, pair1: bad, pair2: data.pair2().clone() };
        assert!(closedness_residual(&broken).unwrap() > 1e-2);
        assert!(matches!(immerse(&broken, TOL_CLOSED), Err(ImmersionError::ClosednessViolated(_))));
    }

    #[test]
    fn rejects_pairs_with_large_residual() {
        let data = solved_r4(16);
        let spec = *data.spec();
        let c1 = data.pot().coefficients(Slot::Phi1).unwrap();
        let bad = SpinorPair::new(
            data.pair1().psi().add(&Field2D::from_real_fn(spec, |x, _| 0.1 * x.sin())),
            data.pair1().phi().clone(),
            Slot::Phi1,
            data.pair1().twist(),
            &c1,
        )
        .unwrap();
        let r = WeierstrassData::new(data.pot().clone(), bad, data.pair2().clone(), 1e-10);
        assert!(matches!(r, Err(ImmersionError::InvalidData(_))));
    }

    #[test]
    fn line_primitive_is_exact_for_closed_forms() {
        let data = solved_r4(32);
        let (forms, _) = weierstrass_forms(&data);
        for f in &forms {
            let prim = Primitive::of(f).values();
            let a = line_primitive(f, PathOrder::XFirst);
            let b = line_primitive(f, PathOrder::YFirst);
            for k in 0..prim.len() {
                assert!((a[k] - b[k]).norm() < 1e-8);
                assert!((a[k] - prim[k]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn r4_metric_and_curvature_match_numerics() {
        let data = solved_r4(32);
        let s = immerse(&data, TOL_CLOSED).unwrap();
        let g = geometry(&data, GeometryOptions::default()).unwrap();
        let f = g.metric_values();
        let c = s.conformal_check(&f);
        assert!(c.hopf_rel() < 1e-8, "{c:?}");
        assert!(c.metric_rel() < 1e-8, "{c:?}");
        let (hvec, hsq) = s.numeric_mean_curvature(&f);
        let hv = g.hvec.as_ref().unwrap();
        for k in 0..f.len() {
            assert!((hsq[k] - g.hsq.values()[k].re).abs() < 1e-6 * g.hsq.norm_inf());
            for i in 0..4 {
                assert!((hvec[i][k] - hv[i].values()[k].re).abs() < 1e-6 * g.hsq.norm_inf().sqrt());
            }
        }
    }

    #[test]
    fn willmore_for_constant_modulus() {
        let spec = grid(16);
        let c = 0.3;
        let p = Field2D::from_fn(spec, |x, _| C64::from_polar(c, x));
        let pot = DiracPotential::reduced(p, ReductionTag::euclidean4()).unwrap();
        let one = Field2D::constant(spec, ONE);
        // geometry only reads spinors; constants are fine for the integral
        let c1 = pot.coefficients(Slot::Phi1).unwrap();
        let c2 = pot.coefficients(Slot::Phi2).unwrap();
        let p1 = SpinorPair::new(one.clone(), one.clone(), Slot::Phi1, Twist::ZERO, &c1).unwrap();
        let p2 = SpinorPair::new(one.clone(), one, Slot::Phi2, Twist::ZERO, &c2).unwrap();
        let data = WeierstrassData { pot, pair1: p1, pair2: p2 };
        let g = geometry(&data, GeometryOptions::default()).unwrap();
        let expected = 4.0 * c * c * 4.0 * std::f64::consts::PI.powi(2);
        assert!((g.willmore - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn cmc_residuals() {
        let data = plane_data();
        assert_eq!(cmc_residual(&data, 0.0, GeometryOptions::default()).unwrap(), 0.0);
        let r = cmc_residual(&data, 1.0, GeometryOptions::default()).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
    }

    #[test]
    fn global_phase_leaves_geometry_unchanged() {
        let data = solved_r4(16);
        let g0 = geometry(&data, GeometryOptions::default()).unwrap();
        let ph = C64::from_polar(1.0, 0.7);
        let c1 = data.pot().coefficients(Slot::Phi1).unwrap();
        let c2 = data.pot().coefficients(Slot::Phi2).unwrap();
        let rotated = WeierstrassData::new(
            data.pot().clone(),
            data.pair1().scaled(ph, &c1).unwrap(),
            data.pair2().scaled(ph.conj(), &c2).unwrap(),
            1e-10,
        )
        .unwrap();
        let g1 = geometry(&rotated, GeometryOptions::default()).unwrap();
        for (a, b) in g0.factors.iter().zip(&g1.factors) {
            assert!(a.dist_inf(b) < 1e-14);
        }
        assert!(g0.gaussian.dist_inf(&g1.gaussian) < 1e-12);
        assert!(g0.hsq.dist_inf(&g1.hsq) < 1e-14);
        assert_eq!(g0.willmore, g1.willmore);
    }
}
