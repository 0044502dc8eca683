//! Scenario execution: solve, immerse, measure, evolve, write.

use std::path::Path;

use serde::Serialize;
use ws4d_core::diagnostics::{self, RunRecord};
use ws4d_core::dirac::{exact_planewave_pair, solve_dirac_neumann, DiracPotential, SpinorPair};
use ws4d_core::dsflow::FlowState;
use ws4d_core::immersion::{
    self, geometry, immerse, immerse_matrix_form, line_primitive, weierstrass_forms, GeometryOptions,
    GeometryReport, PathOrder, Surface, WeierstrassData,
};
use ws4d_core::{Field2D, GridSpec};

use crate::error::CliError;
use crate::io;
use crate::scenario::{FieldSource, Output, Projection, Scenario, Seed, SeedMethod, SnapshotField};

fn field(source: &FieldSource, grid: GridSpec, name: &str) -> Result<Field2D, CliError> {
    let f = match source {
        FieldSource::Expr(e) => Field2D::from_fn(grid, |x, y| e.eval(x, y)),
        FieldSource::File(path) => {
            let f = io::read_snapshot(path)?;
            if *f.spec() != grid {
                return Err(CliError::Config(format!(
                    "{} holds a {}x{} grid, the scenario declares {}x{}",
                    path.display(),
                    f.spec().nx,
                    f.spec().ny,
                    grid.nx,
                    grid.ny
                )));
            }
            f
        }
    };
    if !f.is_finite() {
        return Err(CliError::Config(format!("potential {name} is not finite on the grid")));
    }
    Ok(f)
}

/// The potential of a scenario. Reduction violations are configuration
/// errors.
pub fn potential(sc: &Scenario) -> Result<DiracPotential, CliError> {
    let p = field(&sc.p, sc.grid, "p")?;
    let pot = match &sc.q {
        Some(q) => DiracPotential::minkowski(p, field(q, sc.grid, "q")?),
        None => DiracPotential::reduced(p, sc.tag),
    };
    pot.map_err(|e| CliError::Config(e.to_string()))
}

fn solve_seed(pot: &DiracPotential, seed: &Seed, sc: &Scenario) -> Result<SpinorPair, CliError> {
    Ok(match seed.method {
        SeedMethod::Neumann => {
            let c = |v| Field2D::constant(sc.grid, v);
            solve_dirac_neumann(pot, seed.slot, &c(seed.psi), &c(seed.phi), sc.solver)?
        }
        SeedMethod::Planewave => exact_planewave_pair(pot, seed.slot, seed.k)?,
    })
}

pub fn solve_pairs(pot: &DiracPotential, sc: &Scenario) -> Result<Vec<SpinorPair>, CliError> {
    sc.seeds.iter().map(|s| solve_seed(pot, s, sc)).collect()
}

fn data_from(pot: DiracPotential, pairs: &[SpinorPair]) -> Result<Option<WeierstrassData>, CliError> {
    Ok(match pairs {
        [] => None,
        [one] => Some(WeierstrassData::euclid3(pot, one.clone(), f64::INFINITY)?),
        [a, b, ..] => Some(WeierstrassData::new(pot, a.clone(), b.clone(), f64::INFINITY)?),
    })
}

fn geometry_options(sc: &Scenario) -> GeometryOptions {
    GeometryOptions { metric_floor: sc.tolerances.metric_floor }
}

/// Everything a run produces before it is written to disk.
pub struct Outcome {
    pub record: RunRecord,
    pub final_state: FlowState,
    /// Weierstrass data at the end of the run, if the scenario has seeds.
    pub data: Option<WeierstrassData>,
}

pub fn execute(sc: &Scenario) -> Result<Outcome, CliError> {
    let pot = potential(sc)?;
    let pairs = solve_pairs(&pot, sc)?;
    let state = FlowState::new(pot.p().clone(), pot.q().clone()).with_pairs(pairs.clone());
    let opts = geometry_options(sc);

    let Some(flow) = &sc.flow else {
        let mut record = RunRecord { field_scale: state.p.norm_inf(), ..RunRecord::new() };
        record.push(diagnostics::monitor(&state, sc.tag, opts)?)?;
        let data = data_from(pot, &pairs)?;
        return Ok(Outcome { record, final_state: state, data });
    };

    let (end, record) = if flow.co_evolve {
        diagnostics::monitored_run(&state, flow, sc.monitor_every, opts)?
    } else {
        // stale pairs would only report their own mismatch
        let bare = FlowState { pairs: Vec::new(), ..state };
        diagnostics::monitored_run(&bare, flow, sc.monitor_every, opts)?
    };
    let end_pot = diagnostics::potential_of(&end, sc.tag)?;
    let end_pairs = if flow.co_evolve { end.pairs.clone() } else { solve_pairs(&end_pot, sc)? };
    let data = data_from(end_pot, &end_pairs)?;
    Ok(Outcome { record, final_state: end, data })
}

/// Surface and geometry of the final state.
pub fn surface_of(data: &WeierstrassData, sc: &Scenario) -> Result<(Surface, GeometryReport), CliError> {
    let s = immerse(data, sc.tolerances.closed)?;
    let g = geometry(data, geometry_options(sc))?;
    Ok((s, g))
}

pub fn write_mesh(
    data: &WeierstrassData,
    sc: &Scenario,
    path: &Path,
    projection: Projection,
) -> Result<(), CliError> {
    let (s, g) = surface_of(data, sc)?;
    let m = io::mesh(&s, &g, projection)?;
    io::write_bytes(path, &m.obj)?;
    io::write_bytes(&io::sidecar_path(path), &m.sidecar)
}

/// Runs a scenario and writes its declared outputs.
pub fn run(sc: &Scenario) -> Result<Outcome, CliError> {
    let out = execute(sc)?;
    for o in &sc.outputs {
        match o {
            Output::DiagnosticsCsv { path } => io::write_bytes(path, &io::diagnostics_csv(&out.record)?)?,
            Output::SurfaceMesh { path, projection } => {
                let data = out.data.as_ref().ok_or_else(|| CliError::Config("a surface mesh needs seeds".into()))?;
                write_mesh(data, sc, path, *projection)?;
            }
            Output::FieldSnapshot { path, field } => {
                let f = match field {
                    SnapshotField::P => &out.final_state.p,
                    SnapshotField::Q => &out.final_state.q,
                };
                io::write_snapshot(path, f)?;
            }
        }
    }
    Ok(out)
}

/// One verified identity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance }
    }

    pub fn line(&self) -> String {
        let status = if self.pass { "PASS" } else { "FAIL" };
        format!("{status} {:<28} {:>12.3e}  (tol {:.1e})", self.name, self.value, self.tolerance)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failed(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }
}

fn surface_checks(data: &WeierstrassData, sc: &Scenario, checks: &mut Vec<Check>) -> Result<(), CliError> {
    let tol = &sc.tolerances;
    for (i, pair) in [data.pair1(), data.pair2()].iter().enumerate() {
        let (r1, r2) = ws4d_core::dirac::dirac_residual(pair, data.pot())?;
        checks.push(Check::new(format!("dirac_residual[{}]", i + 1), r1.norm_inf().max(r2.norm_inf()), tol.dirac));
    }
    checks.push(Check::new("closedness", immersion::closedness_residual(data)?, tol.closed));

    let (forms, _) = weierstrass_forms(data);
    let mut path_err = 0.0f64;
    for form in &forms {
        let a = line_primitive(form, PathOrder::XFirst);
        let b = line_primitive(form, PathOrder::YFirst);
        let scale = a.iter().map(|v| v.norm()).fold(1.0, f64::max);
        let d = a.iter().zip(&b).map(|(u, v)| (u - v).norm()).fold(0.0, f64::max);
        path_err = path_err.max(d / scale);
    }
    checks.push(Check::new("path_independence", path_err, tol.path));

    let s = immerse(data, f64::INFINITY)?;
    let m = immerse_matrix_form(data, f64::INFINITY)?;
    let scale = (0..4).map(|i| s.coord(i).norm_inf()).fold(1.0, f64::max);
    let engine = (0..4).map(|i| s.coord(i).dist_inf(m.coord(i))).fold(0.0, f64::max);
    checks.push(Check::new("engine_agreement", engine / scale, tol.engine));

    match geometry(data, geometry_options(sc)) {
        Ok(g) => {
            let f = g.metric_values();
            let cc = s.conformal_check(&f);
            checks.push(Check::new("conformality", cc.hopf_rel(), tol.conformal));
            checks.push(Check::new("metric", cc.metric_rel(), tol.conformal));
            let (_, hsq) = s.numeric_mean_curvature(&f);
            let hs = g.hsq.values();
            let scale = g.hsq.norm_inf().max(f64::MIN_POSITIVE);
            let err = hsq.iter().zip(hs).map(|(a, b)| (a - b.re).abs()).fold(0.0, f64::max);
            let rel = if g.hsq.norm_inf() == 0.0 && err == 0.0 { 0.0 } else { err / scale };
            checks.push(Check::new("mean_curvature", rel, tol.curvature));
        }
        Err(ws4d_core::ImmersionError::DegenerateMetric { .. }) => {
            checks.push(Check::new("metric_nondegenerate", f64::INFINITY, tol.metric_floor));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

/// Runs the scenario and checks every applicable identity.
pub fn verify(sc: &Scenario) -> Result<VerifyReport, CliError> {
    let tol = &sc.tolerances;
    let mut checks = Vec::new();
    let pot = potential(sc)?;
    let pairs = solve_pairs(&pot, sc)?;
    if let Some(data) = data_from(pot, &pairs)? {
        surface_checks(&data, sc, &mut checks)?;
    }

    let out = execute(sc)?;
    if sc.flow.is_some() {
        checks.push(Check::new("willmore_drift", out.record.willmore_drift(), tol.drift));
        checks.push(Check::new("c1_drift", out.record.c1_drift(), tol.drift));
        if sc.flow.is_some_and(|f| f.co_evolve) {
            checks.push(Check::new("flow_dirac_residual", out.record.max_dirac_residual(), tol.flow_dirac));
        }
        if let Some(data) = &out.data {
            let mut end = Vec::new();
            surface_checks(data, sc, &mut end)?;
            for mut c in end.into_iter().filter(|c| c.name != "dirac_residual[1]" && c.name != "dirac_residual[2]") {
                c.name = format!("final_{}", c.name);
                checks.push(c);
            }
        }
    }
    checks.push(Check::new("degenerate_rows", out.record.degenerate.iter().filter(|&&d| d).count() as f64, 0.0));

    let csv = io::diagnostics_csv(&out.record)?;
    let again = io::diagnostics_csv(&execute(sc)?.record)?;
    checks.push(Check::new("determinism", if csv == again { 0.0 } else { 1.0 }, 0.0));

    if let Some(golden) = &sc.golden_csv {
        let bytes = std::fs::read(golden).map_err(|e| CliError::io(golden, e))?;
        checks.push(Check::new("golden_csv", golden_distance(&csv, &bytes), tol.golden));
    }
    Ok(VerifyReport { scenario: sc.name.clone(), checks })
}

/// Largest relative deviation between two diagnostics CSVs, infinite when
/// their shapes differ or either fails to parse.
pub fn golden_distance(actual: &[u8], golden: &[u8]) -> f64 {
    let (Ok(a), Ok(b)) = (io::parse_diagnostics_csv(actual), io::parse_diagnostics_csv(golden)) else {
        return f64::INFINITY;
    };
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for (ra, rb) in a.iter().zip(&b) {
        for (x, y) in ra.iter().zip(rb) {
            let d = (x - y).abs() / y.abs().max(1.0);
            worst = worst.max(if d.is_nan() { f64::INFINITY } else { d });
        }
    }
    worst
}

/// Writes the mesh of the final state with the given projection.
pub fn export(sc: &Scenario, projection: Projection, path: Option<&Path>) -> Result<std::path::PathBuf, CliError> {
    let target = match path {
        Some(p) => p.to_path_buf(),
        None => sc
            .outputs
            .iter()
            .find_map(|o| match o {
                Output::SurfaceMesh { path, .. } => Some(path.clone()),
                _ => None,
            })
            .ok_or_else(|| CliError::Config("no surface_mesh output declared; pass --output".into()))?,
    };
    if sc.seeds.is_empty() {
        return Err(CliError::Config("a surface mesh needs seeds".into()));
    }
    let out = execute(sc)?;
    let data = out.data.ok_or_else(|| CliError::Config("a surface mesh needs seeds".into()))?;
    write_mesh(&data, sc, &target, projection)?;
    Ok(target)
}
