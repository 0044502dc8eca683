//! Invariant monitors for flow runs and step-size convergence studies.

use serde::{Deserialize, Serialize};

use crate::dirac::{DiracPotential, ReductionTag, Signature, Slot};
use crate::dsflow::{self, FlowSpec, FlowState};
use crate::error::{DiagnosticsError, FlowError, ImmersionError};
use crate::field2d::{Field2D, C64};
use crate::immersion::{self, GeometryOptions, WeierstrassData};

/// Relative floor for drift measurements, scaled by the size of the fields.
pub const DRIFT_FLOOR: f64 = 1e-14;

/// One monitored instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub t: f64,
    pub willmore: f64,
    pub c1: C64,
    pub dirac_residual: f64,
    pub closedness: f64,
    pub metric_min: f64,
    /// The induced metric degenerated; geometry columns are partial.
    pub degenerate: bool,
}

/// Time series of the monitored quantities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub time: Vec<f64>,
    pub willmore: Vec<f64>,
    pub c1: Vec<C64>,
    pub dirac_residual: Vec<f64>,
    pub closedness: Vec<f64>,
    pub metric_min: Vec<f64>,
    pub degenerate: Vec<bool>,
    /// `sup |p|` at the first row, the scale for drift floors.
    pub field_scale: f64,
}

impl RunRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn push(&mut self, row: RunRow) -> Result<(), DiagnosticsError> {
        if let Some(&last) = self.time.last() {
            if !(row.t > last) {
                return Err(DiagnosticsError::InvalidRecord(format!(
                    "time {} does not follow {last}",
                    row.t
                )));
            }
        }
        self.time.push(row.t);
        self.willmore.push(row.willmore);
        self.c1.push(row.c1);
        self.dirac_residual.push(row.dirac_residual);
        self.closedness.push(row.closedness);
        self.metric_min.push(row.metric_min);
        self.degenerate.push(row.degenerate);
        Ok(())
    }

    pub fn row(&self, i: usize) -> Option<RunRow> {
        (i < self.len()).then(|| RunRow {
            t: self.time[i],
            willmore: self.willmore[i],
            c1: self.c1[i],
            dirac_residual: self.dirac_residual[i],
            closedness: self.closedness[i],
            metric_min: self.metric_min[i],
            degenerate: self.degenerate[i],
        })
    }

    pub fn rows(&self) -> impl Iterator<Item = RunRow> + '_ {
        (0..self.len()).filter_map(|i| self.row(i))
    }

    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        let n = self.time.len();
        let lens = [
            self.willmore.len(),
            self.c1.len(),
            self.dirac_residual.len(),
            self.closedness.len(),
            self.metric_min.len(),
            self.degenerate.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(DiagnosticsError::InvalidRecord(format!("column lengths {lens:?} differ from {n}")));
        }
        if self.time.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(DiagnosticsError::InvalidRecord("time is not strictly increasing".into()));
        }
        Ok(())
    }

    fn floor(&self) -> f64 {
        let area_scale = self.willmore.first().map_or(0.0, |w| w.abs());
        DRIFT_FLOOR * self.field_scale.max(area_scale).max(f64::MIN_POSITIVE)
    }

    /// `max_t |W(t) - W(0)| / max(|W(0)|, floor)`.
    pub fn willmore_drift(&self) -> f64 {
        let Some(&w0) = self.willmore.first() else { return 0.0 };
        let den = w0.abs().max(self.floor());
        self.willmore.iter().map(|w| (w - w0).abs() / den).fold(0.0, f64::max)
    }

    /// `max_t |C₁(t) - C₁(0)| / max(|C₁(0)|, floor)`.
    pub fn c1_drift(&self) -> f64 {
        let Some(&c0) = self.c1.first() else { return 0.0 };
        let den = c0.norm().max(self.floor());
        self.c1.iter().map(|c| (c - c0).norm() / den).fold(0.0, f64::max)
    }

    pub fn max_dirac_residual(&self) -> f64 {
        self.dirac_residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

/// Potential of a flow state under `tag`.
pub fn potential_of(state: &FlowState, tag: ReductionTag) -> Result<DiracPotential, DiagnosticsError> {
    let pot = if tag.is_reduced() {
        DiracPotential::reduced(state.p.clone(), tag)
    } else {
        DiracPotential::minkowski(state.p.clone(), state.q.clone())
    };
    pot.map_err(|e| DiagnosticsError::Flow(FlowError::Dirac(e)))
}

/// Weierstrass data of a state, if it carries the pairs its signature needs.
pub fn weierstrass_of(state: &FlowState, tag: ReductionTag) -> Result<Option<WeierstrassData>, DiagnosticsError> {
    let pot = potential_of(state, tag)?;
    let pick = |slot: Slot| state.pairs.iter().find(|s| s.slot() == slot).cloned();
    let (a, b) = match tag.signature {
        Signature::Euclidean4 | Signature::Split22 => (pick(Slot::Phi1), pick(Slot::Phi2)),
        Signature::Minkowski31 => (state.pairs.first().cloned(), state.pairs.get(1).cloned()),
        Signature::Euclid3 => (pick(Slot::Shared), pick(Slot::Shared)),
    };
    let (Some(a), Some(b)) = (a, b) else { return Ok(None) };
    WeierstrassData::new(pot, a, b, f64::INFINITY).map(Some).map_err(immersion_error)
}

fn immersion_error(e: ImmersionError) -> DiagnosticsError {
    match e {
        ImmersionError::Field(f) => DiagnosticsError::Flow(FlowError::Field(f)),
        ImmersionError::Dirac(d) => DiagnosticsError::Flow(FlowError::Dirac(d)),
        other => DiagnosticsError::InvalidRecord(other.to_string()),
    }
}

/// Monitored quantities at one state. A degenerate metric yields a flagged
/// row with the offending factor in `metric_min`.
pub fn monitor(state: &FlowState, tag: ReductionTag, opts: GeometryOptions) -> Result<RunRow, DiagnosticsError> {
    let pot = potential_of(state, tag)?;
    let mut row = RunRow {
        t: state.t,
        willmore: immersion::willmore(&pot),
        c1: dsflow::c1(&state.p, &state.q),
        dirac_residual: 0.0,
        closedness: 0.0,
        metric_min: 0.0,
        degenerate: false,
    };
    let Some(data) = weierstrass_of(state, tag)? else { return Ok(row) };
    row.dirac_residual = state.dirac_residual(tag);
    row.closedness = immersion::closedness_residual(&data).map_err(immersion_error)?;
    match immersion::geometry(&data, opts) {
        Ok(g) => row.metric_min = g.metric_min(),
        Err(ImmersionError::DegenerateMetric { value, .. }) => {
            row.metric_min = value;
            row.degenerate = true;
        }
        Err(e) => return Err(immersion_error(e)),
    }
    Ok(row)
}

/// Runs the flow and monitors every `every` steps, always including the
/// initial and final states.
pub fn monitored_run(
    initial: &FlowState,
    flow: &FlowSpec,
    every: usize,
    opts: GeometryOptions,
) -> Result<(FlowState, RunRecord), DiagnosticsError> {
    let every = every.max(1);
    let mut record = RunRecord { field_scale: initial.p.norm_inf(), ..RunRecord::new() };
    let mut failure = None;
    let mut n = 0usize;
    let end = dsflow::run(initial, flow, |s| {
        if failure.is_none() && (n % every == 0 || n == flow.steps) {
            match monitor(s, flow.tag, opts).and_then(|row| record.push(row)) {
                Ok(()) => {}
                Err(e) => failure = Some(e),
            }
        }
        n += 1;
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok((end, record)),
    }
}

/// Errors and observed orders of a step-size sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub dts: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log(e_i/e_{i+1}) / log(dt_i/dt_{i+1})` for consecutive pairs.
    pub orders: Vec<f64>,
}

impl ConvergenceReport {
    /// Order from the finest pair of step sizes.
    pub fn order(&self) -> f64 {
        self.orders.last().copied().unwrap_or(f64::NAN)
    }
}

/// Observed orders from errors at decreasing step sizes.
pub fn observed_orders(dts: &[f64], errors: &[f64]) -> Result<Vec<f64>, DiagnosticsError> {
    if dts.len() != errors.len() || dts.len() < 2 {
        return Err(DiagnosticsError::InsufficientResolution("need at least two step sizes".into()));
    }
    if dts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(DiagnosticsError::InsufficientResolution("step sizes must decrease".into()));
    }
    if errors.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(DiagnosticsError::InsufficientResolution(format!("errors {errors:?} are not resolvable")));
    }
    Ok(dts
        .windows(2)
        .zip(errors.windows(2))
        .map(|(d, e)| (e[0] / e[1]).ln() / (d[0] / d[1]).ln())
        .collect())
}

fn steps_for(t_end: f64, dt: f64) -> Result<usize, DiagnosticsError> {
    let n = (t_end / dt).round();
    if !(n >= 1.0) || ((n * dt - t_end).abs() > 1e-9 * t_end.abs().max(dt)) {
        return Err(DiagnosticsError::InsufficientResolution(format!("dt = {dt} does not divide t = {t_end}")));
    }
    Ok(n as usize)
}

fn run_to(initial: &FlowState, flow: &FlowSpec, t_end: f64, dt: f64) -> Result<FlowState, DiagnosticsError> {
    let spec = FlowSpec { dt, steps: steps_for(t_end, dt)?, ..*flow };
    dsflow::run(initial, &spec, |_| {}).map_err(|e| match e {
        FlowError::Unstable { t, reason } => {
            DiagnosticsError::InsufficientResolution(format!("dt = {dt} unstable at t = {t}: {reason}"))
        }
        other => DiagnosticsError::Flow(other),
    })
}

/// Runs to `t_end` with each step size and measures `error` on the final
/// state.
pub fn convergence_study(
    initial: &FlowState,
    flow: &FlowSpec,
    t_end: f64,
    dts: &[f64],
    error: impl Fn(&FlowState) -> f64,
) -> Result<ConvergenceReport, DiagnosticsError> {
    let errors = dts
        .iter()
        .map(|&dt| run_to(initial, flow, t_end, dt).map(|s| error(&s)))
        .collect::<Result<Vec<_>, _>>()?;
    let orders = observed_orders(dts, &errors)?;
    Ok(ConvergenceReport { dts: dts.to_vec(), errors, orders })
}

/// Sup-norm distance between two states over `p`, `q` and every pair.
pub fn state_distance(a: &FlowState, b: &FlowState) -> f64 {
    let mut d = a.p.dist_inf(&b.p).max(a.q.dist_inf(&b.q));
    for (s, t) in a.pairs.iter().zip(&b.pairs) {
        d = d.max(s.psi().dist_inf(t.psi())).max(s.phi().dist_inf(t.phi()));
    }
    d
}

/// Richardson estimate without a reference solution: [`state_distance`]
/// between successive step sizes plays the role of the error.
pub fn richardson_study(
    initial: &FlowState,
    flow: &FlowSpec,
    t_end: f64,
    dts: &[f64],
) -> Result<ConvergenceReport, DiagnosticsError> {
    if dts.len() < 3 {
        return Err(DiagnosticsError::InsufficientResolution("Richardson needs three step sizes".into()));
    }
    let finals = dts.iter().map(|&dt| run_to(initial, flow, t_end, dt)).collect::<Result<Vec<_>, _>>()?;
    let diffs: Vec<f64> = finals.windows(2).map(|w| state_distance(&w[0], &w[1])).collect();
    let orders = observed_orders(&dts[..dts.len() - 1], &diffs)?;
    Ok(ConvergenceReport { dts: dts[..dts.len() - 1].to_vec(), errors: diffs, orders })
}

/// Sup-norm distance between the state's `p` and a reference field.
pub fn error_against(reference: &Field2D) -> impl Fn(&FlowState) -> f64 + '_ {
    move |s| s.p.dist_inf(reference)
}
