//! Flows of the DSII hierarchy for `(p, q)` and the compatible evolution of
//! the Dirac wavefunctions, integrated with classical RK4.
//!
//! Spinors keep their Bloch exponent fixed in time: every flow operator is a
//! differential operator with periodic coefficients, so it maps `e^ζ·periodic`
//! to the same class and acts on profiles through `∂_z + λ`, `∂_z̄ + μ`.
//!
//! Sign conventions that are fixed by compatibility with `ψ_z = pφ`,
//! `φ_z̄ = qψ` rather than by convenience:
//!
//! * `u = w₁ + w₂` with `w₁_z = -2(pq)_z̄`, `w₂_z̄ = -2(pq)_z`;
//! * the nonlocal terms of the third flow enter with `-3`;
//! * the one-dimensional limit is `p_t = i(½p_xx - 2ε|p|²p)`, whose `ε = -1`
//!   bright soliton `A sech(√2 A x) e^{iA²t}` anchors the sign.
//!
//! The time parts of the Lax pairs are not well posed as evolution equations:
//! `iψ_z̄z̄` amplifies the mode `(kx, ky)` at rate `kx·ky/2`. Rounding noise in
//! such modes would swamp the co-evolved pairs, so spinor right-hand sides
//! drop every mode whose growth over the run exceeds [`LAX_GROWTH_BUDGET`].

use serde::{Deserialize, Serialize};

use crate::dirac::{DiracCoefficients, ReductionTag, Signature, Slot, SpinorPair};
use crate::error::{FieldError, FlowError};
use crate::field2d::{dealias_keep, Field2D, Mode, C64};
use crate::twist::Twist;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    /// Transport `p_t = αp_z̄ + γp_z`.
    T1,
    /// Davey–Stewartson II.
    T2,
    /// Third-order flow (modified Veselov–Novikov under `q = εp̄`).
    T3,
    /// Nonlinear Schrödinger limit for `y`-independent data.
    Nls1d,
    /// Veselov–Novikov, the third flow under `q ≡ 1`.
    Vn,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub flow: FlowKind,
    pub alpha: C64,
    pub gamma: C64,
    /// Ignored for reduced R⁴/R²,² data, where the prefactor is `i`.
    pub alpha2: C64,
    pub dt: f64,
    pub steps: usize,
    pub tag: ReductionTag,
    pub co_evolve: bool,
    /// Apply the 2/3 filter to every right-hand side.
    pub dealias: bool,
}

impl FlowSpec {
    pub fn new(flow: FlowKind, tag: ReductionTag, dt: f64, steps: usize) -> Self {
        Self {
            flow,
            alpha: C64::new(1.0, 0.0),
            gamma: C64::new(1.0, 0.0),
            alpha2: I,
            dt,
            steps,
            tag,
            co_evolve: false,
            dealias: true,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: String| Err(FlowError::InvalidSpec(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        let sig = self.tag.signature;
        let real = |c: C64| c.im.abs() <= 1e-14 * (1.0 + c.re.abs());
        match self.flow {
            FlowKind::T1 => {
                if sig == Signature::Minkowski31 && !(real(self.alpha) && real(self.gamma)) {
                    return bad("R3,1 flows need real alpha and gamma".into());
                }
                if (self.gamma - self.alpha.conj()).norm() > 1e-14 * (1.0 + self.alpha.norm()) {
                    return bad("the reality of the data requires gamma = conj(alpha)".into());
                }
            }
            FlowKind::T2 => match sig {
                Signature::Minkowski31 if !real(self.alpha2) => {
                    return bad("R3,1 flows need a real alpha2".into());
                }
                Signature::Euclid3 => {
                    return bad("a real potential is preserved only by odd flows".into());
                }
                _ => {}
            },
            FlowKind::T3 => {}
            FlowKind::Vn => {
                if sig != Signature::Minkowski31 {
                    return bad("the VN flow needs R3,1 data with q = 1".into());
                }
            }
            FlowKind::Nls1d => {
                if !matches!(sig, Signature::Euclidean4 | Signature::Split22) {
                    return bad("the NLS limit is defined for R4 and R2,2 data".into());
                }
                if self.co_evolve {
                    return bad("the NLS limit has no wavefunction evolution".into());
                }
            }
        }
        Ok(())
    }

    /// `α₂` applied to the `(p, q)` equations.
    fn t2_constant(&self) -> C64 {
        if self.tag.is_reduced() {
            I
        } else {
            self.alpha2
        }
    }
}

/// Potentials `u`, `w₁`, `w₂` of the second flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxPotentials {
    pub u: Field2D,
    pub w1: Field2D,
    pub w2: Field2D,
}

/// `u_zz̄ = -2(pq)_zz - 2(pq)_z̄z̄`, `w₁ = ∂_z⁻¹(-2(pq)_z̄)`,
/// `w₂ = ∂_z̄⁻¹(-2(pq)_z)`, all mean-free, so that `u = w₁ + w₂`.
pub fn aux_solve(p: &Field2D, q: &Field2D) -> Result<AuxPotentials, FieldError> {
    p.check_same_grid(q)?;
    let f = p.mul(q);
    let u = f.d_zz().add(&f.d_zbarzbar()).scale_re(-2.0).solve_poisson_zzbar()?;
    let w1 = f.d_zbar().scale_re(-2.0).inv_d_z()?;
    let w2 = f.d_z().scale_re(-2.0).inv_d_zbar()?;
    Ok(AuxPotentials { u, w1, w2 })
}

pub fn rhs_t1(p: &Field2D, q: &Field2D, alpha: C64, gamma: C64) -> (Field2D, Field2D) {
    let pt = p.d_zbar().scale(alpha).add(&p.d_z().scale(gamma));
    let qt = q.d_z().scale(gamma).add(&q.d_zbar().scale(alpha));
    (pt, qt)
}

/// `(α₂(p_zz + p_z̄z̄ + up), -α₂(q_zz + q_z̄z̄ + uq))`.
pub fn rhs_t2_general(p: &Field2D, q: &Field2D, alpha2: C64) -> Result<(Field2D, Field2D), FieldError> {
    let aux = aux_solve(p, q)?;
    let lin = |f: &Field2D| f.d_zz().add(&f.d_zbarzbar()).add(&aux.u.mul(f));
    Ok((lin(p).scale(alpha2), lin(q).scale(-alpha2)))
}

/// `i(p_zz + p_z̄z̄ + up)` with `u_zz̄ = -2ε(|p|²_zz + |p|²_z̄z̄)`.
pub fn rhs_t2_reduced(p: &Field2D, tag: ReductionTag) -> Result<Field2D, FlowError> {
    if !tag.is_reduced() {
        return Err(FlowError::InvalidSpec("reduced flow needs a reduced tag".into()));
    }
    let m = p.abs_sq();
    let u = m.d_zz().add(&m.d_zbarzbar()).scale_re(-2.0 * tag.eps()).solve_poisson_zzbar()?;
    Ok(p.d_zz().add(&p.d_zbarzbar()).add(&u.mul(p)).scale(I))
}

/// The nonlocal coefficients shared by the third flow and its operators.
struct T3Coefficients {
    /// `∂_z⁻¹(pq)_z̄`
    n1: Field2D,
    /// `∂_z̄⁻¹(pq)_z`
    n2: Field2D,
    /// `∂_z⁻¹(q p_z̄)_z̄`
    n3: Field2D,
    /// `∂_z̄⁻¹(p q_z)_z`
    n4: Field2D,
    /// `∂_z̄⁻¹(q p_z)_z`
    n5: Field2D,
    /// `∂_z⁻¹(p q_z̄)_z̄`
    n6: Field2D,
}

impl T3Coefficients {
    fn new(p: &Field2D, q: &Field2D) -> Result<Self, FieldError> {
        let f = p.mul(q);
        Ok(Self {
            n1: f.d_zbar().inv_d_z()?,
            n2: f.d_z().inv_d_zbar()?,
            n3: q.mul(&p.d_zbar()).d_zbar().inv_d_z()?,
            n4: p.mul(&q.d_z()).d_z().inv_d_zbar()?,
            n5: q.mul(&p.d_z()).d_z().inv_d_zbar()?,
            n6: p.mul(&q.d_zbar()).d_zbar().inv_d_z()?,
        })
    }
}

/// Third flow of the hierarchy:
///
/// ```text
/// p_t = p_zzz + p_z̄z̄z̄ - 3[p_z ∂_z̄⁻¹(pq)_z + p_z̄ ∂_z⁻¹(pq)_z̄
///                        + p ∂_z̄⁻¹(q p_z)_z + p ∂_z⁻¹(q p_z̄)_z̄]
/// ```
///
/// and the same with `p ↔ q` in the products for `q_t`.
pub fn rhs_t3(p: &Field2D, q: &Field2D) -> Result<(Field2D, Field2D), FieldError> {
    p.check_same_grid(q)?;
    let c = T3Coefficients::new(p, q)?;
    let nl_p = p
        .d_z()
        .mul(&c.n2)
        .add(&p.d_zbar().mul(&c.n1))
        .add(&p.mul(&c.n5))
        .add(&p.mul(&c.n3));
    let nl_q = q
        .d_z()
        .mul(&c.n2)
        .add(&q.d_zbar().mul(&c.n1))
        .add(&q.mul(&c.n4))
        .add(&q.mul(&c.n6));
    let pt = p.d_zzz().add(&p.d_zbarzbarzbar()).sub(&nl_p.scale_re(3.0));
    let qt = q.d_zzz().add(&q.d_zbarzbarzbar()).sub(&nl_q.scale_re(3.0));
    Ok((pt, qt))
}

/// The third flow written through `|p|²` for `q = εp̄` (modified
/// Veselov–Novikov when `p` is real).
pub fn rhs_t3_reduced(p: &Field2D, tag: ReductionTag) -> Result<Field2D, FlowError> {
    if !tag.is_reduced() {
        return Err(FlowError::InvalidSpec("reduced flow needs a reduced tag".into()));
    }
    let m = p.abs_sq();
    let pb = p.conj();
    let t1 = p.d_z().mul(&m.d_z().inv_d_zbar()?);
    let t2 = p.d_zbar().mul(&m.d_zbar().inv_d_z()?);
    let t3 = p.mul(&pb.mul(&p.d_z()).d_z().inv_d_zbar()?);
    let t4 = p.mul(&pb.mul(&p.d_zbar()).d_zbar().inv_d_z()?);
    let nl = t1.add(&t2).add(&t3).add(&t4).scale_re(3.0 * tag.eps());
    Ok(p.d_zzz().add(&p.d_zbarzbarzbar()).sub(&nl))
}

/// `p_zzz + p_z̄z̄z̄ - 3[p ∂_z̄⁻¹(p_z)]_z - 3[p ∂_z⁻¹(p_z̄)]_z̄`.
pub fn rhs_vn(p: &Field2D) -> Result<Field2D, FieldError> {
    let a = p.mul(&p.d_z().inv_d_zbar()?).d_z();
    let b = p.mul(&p.d_zbar().inv_d_z()?).d_zbar();
    Ok(p.d_zzz().add(&p.d_zbarzbarzbar()).sub(&a.add(&b).scale_re(3.0)))
}

/// Largest variation of a field along `y`.
fn y_spread(p: &Field2D) -> f64 {
    let spec = *p.spec();
    let mut s = 0.0f64;
    for iy in 1..spec.ny {
        for ix in 0..spec.nx {
            s = s.max((p.at(ix, iy) - p.at(ix, 0)).norm());
        }
    }
    s
}

/// `p_t = i(½p_xx - 2ε|p|²p)` for `y`-independent `p`.
pub fn rhs_nls(p: &Field2D, eps: f64) -> Result<Field2D, FlowError> {
    let spread = y_spread(p);
    if spread > 1e-12 * (1.0 + p.norm_inf()) {
        return Err(FlowError::InvalidSpec(format!("NLS data must not depend on y (spread {spread:e})")));
    }
    let pxx = p.spectral_map(|m| C64::new(-m.kx * m.kx, 0.0));
    let cubic = p.abs_sq().mul(p).scale_re(2.0 * eps);
    Ok(pxx.scale_re(0.5).sub(&cubic).scale(I))
}

/// `C₁ = ∫ pq dx dy`.
pub fn c1(p: &Field2D, q: &Field2D) -> C64 {
    p.mul(q).integrate()
}

/// Shifted derivatives acting on the periodic profile of a Bloch spinor.
struct Shifted {
    twist: Twist,
}

impl Shifted {
    fn dz(&self, f: &Field2D) -> Field2D {
        f.d_z().add(&f.scale(self.twist.lambda))
    }

    fn dzb(&self, f: &Field2D) -> Field2D {
        f.d_zbar().add(&f.scale(self.twist.mu))
    }
}

/// Coefficients `(P, Q)` of the system a pair in `slot` solves.
pub fn slot_coefficients(p: &Field2D, q: &Field2D, tag: ReductionTag, slot: Slot) -> DiracCoefficients {
    match (tag.signature, slot) {
        (Signature::Euclidean4 | Signature::Split22, Slot::Phi2) => {
            DiracCoefficients { p: p.conj(), q: p.scale_re(tag.eps()) }
        }
        _ => DiracCoefficients { p: p.clone(), q: q.clone() },
    }
}

/// `(ψ̃_t, φ̃_t)` from `ψ_t = Aψ + Bφ`, `φ_t = Cψ + Dφ` for one pair.
pub fn wavefunction_rhs(
    psi: &Field2D,
    phi: &Field2D,
    twist: Twist,
    slot: Slot,
    p: &Field2D,
    q: &Field2D,
    flow: &FlowSpec,
) -> Result<(Field2D, Field2D), FlowError> {
    let co = slot_coefficients(p, q, flow.tag, slot);
    let (pp, qq) = (&co.p, &co.q);
    let d = Shifted { twist };
    let phi2 = matches!(slot, Slot::Phi2) && flow.tag.is_reduced();
    match flow.flow {
        FlowKind::T1 => {
            let (a, g) = if phi2 { (flow.gamma.conj(), flow.alpha.conj()) } else { (flow.alpha, flow.gamma) };
            let psi_t = d.dzb(psi).scale(a).add(&pp.mul(phi).scale(g));
            let phi_t = qq.mul(psi).scale(a).add(&d.dz(phi).scale(g));
            Ok((psi_t, phi_t))
        }
        FlowKind::T2 => {
            let a2 = if phi2 { flow.t2_constant().conj() } else { flow.t2_constant() };
            let aux = aux_solve(pp, qq)?;
            let dphi = d.dz(phi);
            let dpsi = d.dzb(psi);
            let psi_t = d
                .dzb(&dpsi)
                .add(&aux.w1.mul(psi))
                .add(&pp.d_z().mul(phi))
                .sub(&pp.mul(&dphi))
                .scale(a2);
            let phi_t = qq
                .d_zbar()
                .mul(psi)
                .sub(&qq.mul(&dpsi))
                .add(&d.dz(&dphi))
                .add(&aux.w2.mul(phi))
                .scale(-a2);
            Ok((psi_t, phi_t))
        }
        FlowKind::T3 | FlowKind::Vn => {
            let c = T3Coefficients::new(pp, qq)?;
            let dpsi = d.dzb(psi);
            let ddpsi = d.dzb(&dpsi);
            let dphi = d.dz(phi);
            let ddphi = d.dz(&dphi);
            let psi_t = d
                .dzb(&ddpsi)
                .sub(&c.n1.mul(&dpsi).scale_re(3.0))
                .sub(&c.n3.mul(psi).scale_re(3.0))
                .add(&pp.mul(&ddphi))
                .sub(&pp.d_z().mul(&dphi))
                .add(&pp.d_zz().mul(phi))
                .sub(&pp.mul(&c.n2).mul(phi).scale_re(3.0));
            let phi_t = qq
                .mul(&ddpsi)
                .sub(&qq.d_zbar().mul(&dpsi))
                .add(&qq.d_zbarzbar().mul(psi))
                .sub(&qq.mul(&c.n1).mul(psi).scale_re(3.0))
                .add(&d.dz(&ddphi))
                .sub(&c.n2.mul(&dphi).scale_re(3.0))
                .sub(&c.n4.mul(phi).scale_re(3.0));
            Ok((psi_t, phi_t))
        }
        FlowKind::Nls1d => Err(FlowError::InvalidSpec("the NLS limit has no wavefunction evolution".into())),
    }
}

/// Potentials and co-evolved pairs at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub p: Field2D,
    pub q: Field2D,
    pub pairs: Vec<SpinorPair>,
}

impl FlowState {
    /// State for `p` under `tag`; `q` is derived for reduced tags.
    pub fn reduced(p: Field2D, tag: ReductionTag) -> Self {
        let q = p.conj().scale_re(tag.eps());
        Self { t: 0.0, p, q, pairs: Vec::new() }
    }

    pub fn new(p: Field2D, q: Field2D) -> Self {
        Self { t: 0.0, p, q, pairs: Vec::new() }
    }

    pub fn with_pairs(mut self, pairs: Vec<SpinorPair>) -> Self {
        self.pairs = pairs;
        self
    }

    /// Largest residual of the pairs against the current potentials.
    pub fn dirac_residual(&self, tag: ReductionTag) -> f64 {
        self.pairs
            .iter()
            .map(|s| {
                let co = slot_coefficients(&self.p, &self.q, tag, s.slot());
                SpinorPair::new(s.psi().clone(), s.phi().clone(), s.slot(), s.twist(), &co)
                    .map(|r| r.residual())
                    .unwrap_or(f64::INFINITY)
            })
            .fold(0.0, f64::max)
    }
}

/// The potentials' right-hand side for the flow, before filtering.
fn potential_rhs(p: &Field2D, q: &Field2D, flow: &FlowSpec) -> Result<(Field2D, Field2D), FlowError> {
    let tag = flow.tag;
    let eps = tag.eps();
    let reduced_q = |pt: &Field2D| pt.conj().scale_re(eps);
    Ok(match flow.flow {
        FlowKind::T1 => rhs_t1(p, q, flow.alpha, flow.gamma),
        FlowKind::T2 if tag.is_reduced() => {
            let pt = rhs_t2_reduced(p, tag)?;
            let qt = reduced_q(&pt);
            (pt, qt)
        }
        FlowKind::T2 => rhs_t2_general(p, q, flow.alpha2)?,
        FlowKind::T3 => {
            let (pt, qt) = rhs_t3(p, q)?;
            if tag.is_reduced() {
                let qt = reduced_q(&pt);
                (pt, qt)
            } else {
                (pt, qt)
            }
        }
        FlowKind::Vn => (rhs_vn(p)?, Field2D::zeros(*p.spec())),
        FlowKind::Nls1d => {
            let pt = rhs_nls(p, eps)?;
            let qt = reduced_q(&pt);
            (pt, qt)
        }
    })
}

fn check_state(state: &FlowState, flow: &FlowSpec) -> Result<(), FlowError> {
    state.p.check_same_grid(&state.q)?;
    if flow.flow == FlowKind::Vn {
        let dev = state.q.add_const(C64::new(-1.0, 0.0)).norm_inf();
        if dev > 1e-14 {
            return Err(FlowError::InvalidSpec(format!("the VN flow needs q = 1 (deviation {dev:e})")));
        }
    }
    if flow.co_evolve && state.pairs.is_empty() {
        return Err(FlowError::InvalidSpec("co-evolution requested without spinor pairs".into()));
    }
    Ok(())
}

/// Largest admissible `growth rate × run length` of a co-evolved spinor mode.
pub const LAX_GROWTH_BUDGET: f64 = 15.0;

/// Principal symbols of the `ψ` and `φ` equations of one pair at a mode.
fn principal_symbols(flow: &FlowSpec, slot: Slot, twist: Twist, m: &Mode) -> (C64, C64) {
    let zb = m.szbar + twist.mu;
    let z = m.sz + twist.lambda;
    let phi2 = matches!(slot, Slot::Phi2) && flow.tag.is_reduced();
    match flow.flow {
        FlowKind::T1 => {
            let (a, g) = if phi2 { (flow.gamma.conj(), flow.alpha.conj()) } else { (flow.alpha, flow.gamma) };
            (a * zb, g * z)
        }
        FlowKind::T2 => {
            let a2 = if phi2 { flow.t2_constant().conj() } else { flow.t2_constant() };
            (a2 * zb * zb, -a2 * z * z)
        }
        FlowKind::T3 | FlowKind::Vn => (zb * zb * zb, z * z * z),
        FlowKind::Nls1d => (C64::new(0.0, 0.0), C64::new(0.0, 0.0)),
    }
}

type Packed = Vec<Field2D>;

fn axpy(y: &[Field2D], k: &[Field2D], h: f64) -> Packed {
    y.iter().zip(k).map(|(a, b)| a.add(&b.scale_re(h))).collect()
}

fn sup(v: &[Field2D]) -> f64 {
    v.iter().map(Field2D::norm_inf).fold(0.0, f64::max)
}

struct Stepper<'a> {
    flow: &'a FlowSpec,
    slots: Vec<(Slot, Twist)>,
}

impl Stepper<'_> {
    fn rhs(&self, y: &[Field2D]) -> Result<Packed, FlowError> {
        let p = &y[0];
        let q = if self.flow.tag.is_reduced() { p.conj().scale_re(self.flow.tag.eps()) } else { y[1].clone() };
        let (pt, qt) = potential_rhs(p, &q, self.flow)?;
        let mut out = vec![pt, qt];
        for (i, &(slot, twist)) in self.slots.iter().enumerate() {
            let (a, b) = wavefunction_rhs(&y[2 + 2 * i], &y[3 + 2 * i], twist, slot, p, &q, self.flow)?;
            out.push(self.spinor_filter(&a, slot, twist, true));
            out.push(self.spinor_filter(&b, slot, twist, false));
        }
        if self.flow.dealias {
            for f in &mut out[..2] {
                *f = f.dealias();
            }
        }
        Ok(out)
    }

    fn spinor_filter(&self, f: &Field2D, slot: Slot, twist: Twist, is_psi: bool) -> Field2D {
        let spec = *f.spec();
        let horizon = self.flow.dt * self.flow.steps as f64;
        f.spectral_map(|m| {
            let (sp, sf) = principal_symbols(self.flow, slot, twist, m);
            let growth = if is_psi { sp.re } else { sf.re };
            let keep = growth * horizon <= LAX_GROWTH_BUDGET && (!self.flow.dealias || dealias_keep(&spec, m));
            C64::new(if keep { 1.0 } else { 0.0 }, 0.0)
        })
    }
}

/// One classical RK4 step of the potentials and, with `co_evolve`, of every
/// registered pair.
pub fn step(state: &FlowState, flow: &FlowSpec) -> Result<FlowState, FlowError> {
    let stepper = Stepper {
        flow,
        slots: if flow.co_evolve { state.pairs.iter().map(|s| (s.slot(), s.twist())).collect() } else { Vec::new() },
    };
    let mut y: Packed = vec![state.p.clone(), state.q.clone()];
    for (s, _) in state.pairs.iter().zip(&stepper.slots) {
        y.push(s.psi().clone());
        y.push(s.phi().clone());
    }
    let h = flow.dt;
    let k1 = stepper.rhs(&y)?;
    let scale = sup(&y).max(1.0);
    let rate = sup(&k1);
    if !(rate * h < 10.0 * scale) {
        return Err(FlowError::Unstable {
            t: state.t,
            reason: format!("step too large: |rhs|·dt = {:e} against state size {scale:e}", rate * h),
        });
    }
    let k2 = stepper.rhs(&axpy(&y, &k1, 0.5 * h))?;
    let k3 = stepper.rhs(&axpy(&y, &k2, 0.5 * h))?;
    let k4 = stepper.rhs(&axpy(&y, &k3, h))?;
    let next: Packed = (0..y.len())
        .map(|i| {
            let incr = k1[i].add(&k2[i].scale_re(2.0)).add(&k3[i].scale_re(2.0)).add(&k4[i]);
            y[i].add(&incr.scale_re(h / 6.0))
        })
        .collect();
    if !next.iter().all(Field2D::is_finite) {
        return Err(FlowError::Unstable { t: state.t + h, reason: "non-finite values".into() });
    }
    let mut it = next.into_iter();
    let p = it.next().unwrap_or_else(|| state.p.clone());
    let mut q = it.next().unwrap_or_else(|| state.q.clone());
    if flow.tag.is_reduced() {
        q = p.conj().scale_re(flow.tag.eps());
    }
    let mut pairs = Vec::with_capacity(state.pairs.len());
    for (i, old) in state.pairs.iter().enumerate() {
        if flow.co_evolve {
            let psi = it.next().unwrap_or_else(|| old.psi().clone());
            let phi = it.next().unwrap_or_else(|| old.phi().clone());
            let co = slot_coefficients(&p, &q, flow.tag, old.slot());
            pairs.push(SpinorPair::new(psi, phi, old.slot(), old.twist(), &co)?);
        } else {
            debug_assert!(i < state.pairs.len());
            pairs.push(old.clone());
        }
    }
    Ok(FlowState { t: state.t + h, p, q, pairs })
}

/// Runs `flow.steps` steps, calling `observe` on the initial state and after
/// every step.
pub fn run(
    initial: &FlowState,
    flow: &FlowSpec,
    mut observe: impl FnMut(&FlowState),
) -> Result<FlowState, FlowError> {
    flow.validate()?;
    check_state(initial, flow)?;
    let mut state = initial.clone();
    observe(&state);
    for _ in 0..flow.steps {
        state = step(&state, flow)?;
        observe(&state);
    }
    Ok(state)
}
