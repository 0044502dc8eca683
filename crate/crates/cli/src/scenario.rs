//! Scenario files: a TOML tree with an explicit `schema_version`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use ws4d_core::dirac::{ReductionTag, Signature, Slot, SolveOptions};
use ws4d_core::dsflow::{FlowKind, FlowSpec};
use ws4d_core::GridSpec;

use crate::error::CliError;
use crate::expr::Expr;

pub const SCHEMA_VERSION: u32 = 1;

/// A length given as a number or as a constant expression such as `"2*pi"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Length {
    Value(f64),
    Expr(String),
}

impl Length {
    fn resolve(&self, what: &str) -> Result<f64, CliError> {
        let v = match self {
            Length::Value(v) => *v,
            Length::Expr(s) => {
                let e = Expr::parse(s).map_err(|e| CliError::Config(format!("{what}: {e}")))?;
                let v = e.eval(0.0, 0.0);
                if v.im != 0.0 {
                    return Err(CliError::Config(format!("{what} must be real")));
                }
                v.re
            }
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::Config(format!("{what} must be positive, got {v}")));
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub lx: Length,
    pub ly: Length,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub signature: Signature,
    pub p: Option<String>,
    pub p_file: Option<PathBuf>,
    pub q: Option<String>,
    pub q_file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedMethod {
    Neumann,
    Planewave,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotName {
    Phi1,
    Phi2,
    Shared,
}

impl From<SlotName> for Slot {
    fn from(s: SlotName) -> Slot {
        match s {
            SlotName::Phi1 => Slot::Phi1,
            SlotName::Phi2 => Slot::Phi2,
            SlotName::Shared => Slot::Shared,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    pub slot: SlotName,
    #[serde(default = "default_method")]
    pub method: SeedMethod,
    /// `[re, im]` of the constant seed for `ψ`.
    #[serde(default = "one")]
    pub psi: [f64; 2],
    #[serde(default = "one")]
    pub phi: [f64; 2],
    /// Wavevector of a plane-wave pair.
    pub k: Option<[f64; 2]>,
}

fn default_method() -> SeedMethod {
    SeedMethod::Neumann
}

fn one() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_solve_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_damping")]
    pub damping: f64,
}

fn default_solve_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    200
}

fn default_damping() -> f64 {
    1.0
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { tol: default_solve_tol(), max_iter: default_max_iter(), damping: default_damping() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub kind: FlowKind,
    pub dt: f64,
    pub steps: usize,
    #[serde(default = "one")]
    pub alpha: [f64; 2],
    #[serde(default = "one")]
    pub gamma: [f64; 2],
    #[serde(default = "unit_i")]
    pub alpha2: [f64; 2],
    #[serde(default)]
    pub co_evolve: bool,
    #[serde(default = "yes")]
    pub dealias: bool,
    #[serde(default = "one_step")]
    pub monitor_every: usize,
}

fn unit_i() -> [f64; 2] {
    [0.0, 1.0]
}

fn yes() -> bool {
    true
}

fn one_step() -> usize {
    1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Projection {
    #[default]
    #[serde(rename = "drop-x4")]
    DropX4,
    #[serde(rename = "drop-x3")]
    DropX3,
    #[serde(rename = "drop-x2")]
    DropX2,
    #[serde(rename = "drop-x1")]
    DropX1,
    #[serde(rename = "stereographic")]
    Stereographic,
}

impl std::str::FromStr for Projection {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "drop-x4" => Ok(Projection::DropX4),
            "drop-x3" => Ok(Projection::DropX3),
            "drop-x2" => Ok(Projection::DropX2),
            "drop-x1" => Ok(Projection::DropX1),
            "stereographic" => Ok(Projection::Stereographic),
            _ => Err(CliError::Config(format!(
                "unknown projection '{s}' (expected drop-x1..drop-x4 or stereographic)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotField {
    P,
    Q,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Output {
    SurfaceMesh {
        path: PathBuf,
        #[serde(default)]
        projection: Projection,
    },
    DiagnosticsCsv {
        path: PathBuf,
    },
    FieldSnapshot {
        path: PathBuf,
        #[serde(default = "field_p")]
        field: SnapshotField,
    },
}

fn field_p() -> SnapshotField {
    SnapshotField::P
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenSection {
    pub diagnostics_csv: Option<PathBuf>,
}

/// Tolerances with their defaults; a scenario may override any of them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub dirac: f64,
    pub closed: f64,
    pub path: f64,
    pub engine: f64,
    pub conformal: f64,
    pub curvature: f64,
    pub drift: f64,
    pub flow_dirac: f64,
    pub golden: f64,
    pub metric_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            dirac: 1e-10,
            closed: 1e-9,
            path: 1e-8,
            engine: 1e-10,
            conformal: 1e-8,
            curvature: 1e-6,
            drift: 1e-6,
            flow_dirac: 1e-6,
            golden: 1e-9,
            metric_floor: 1e-10,
        }
    }
}

impl Tolerances {
    fn from_map(map: &BTreeMap<String, f64>) -> Result<Self, CliError> {
        let mut t = Tolerances::default();
        for (k, &v) in map {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Config(format!("tolerance {k} must be positive, got {v}")));
            }
            let slot = match k.as_str() {
                "dirac" => &mut t.dirac,
                "closed" => &mut t.closed,
                "path" => &mut t.path,
                "engine" => &mut t.engine,
                "conformal" => &mut t.conformal,
                "curvature" => &mut t.curvature,
                "drift" => &mut t.drift,
                "flow_dirac" => &mut t.flow_dirac,
                "golden" => &mut t.golden,
                "metric_floor" => &mut t.metric_floor,
                _ => return Err(CliError::Config(format!("unknown tolerance '{k}'"))),
            };
            *slot = v;
        }
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub schema_version: u32,
    pub name: Option<String>,
    pub grid: GridSection,
    pub potential: PotentialSection,
    #[serde(default)]
    pub seeds: Vec<SeedSection>,
    #[serde(default)]
    pub solver: SolverSection,
    pub flow: Option<FlowSection>,
    #[serde(default)]
    pub outputs: Vec<Output>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub golden: GoldenSection,
}

/// Source of a potential component.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldSource {
    Expr(Expr),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Seed {
    pub slot: Slot,
    pub method: SeedMethod,
    pub psi: Complex64,
    pub phi: Complex64,
    pub k: (f64, f64),
}

/// A validated scenario with paths resolved against its directory.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    pub tag: ReductionTag,
    pub p: FieldSource,
    pub q: Option<FieldSource>,
    pub seeds: Vec<Seed>,
    pub solver: SolveOptions,
    pub flow: Option<FlowSpec>,
    pub monitor_every: usize,
    pub outputs: Vec<Output>,
    pub tolerances: Tolerances,
    pub golden_csv: Option<PathBuf>,
}

fn complex(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Scenario::parse(&text, base, stem)
    }

    pub fn parse(text: &str, base: &Path, default_name: &str) -> Result<Scenario, CliError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Scenario::from_raw(raw, base, default_name)
    }

    pub fn from_raw(raw: RawScenario, base: &Path, default_name: &str) -> Result<Scenario, CliError> {
        if raw.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        let g = &raw.grid;
        let grid = GridSpec::new(g.nx, g.ny, g.lx.resolve("grid.lx")?, g.ly.resolve("grid.ly")?)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let tag = ReductionTag::for_signature(raw.potential.signature);

        let source = |expr: &Option<String>, file: &Option<PathBuf>, name: &str| -> Result<Option<FieldSource>, CliError> {
            match (expr, file) {
                (Some(_), Some(_)) => Err(CliError::Config(format!("give either {name} or {name}_file, not both"))),
                (Some(s), None) => Expr::parse(s)
                    .map(|e| Some(FieldSource::Expr(e)))
                    .map_err(|e| CliError::Config(format!("potential.{name}: {e}"))),
                (None, Some(f)) => Ok(Some(FieldSource::File(base.join(f)))),
                (None, None) => Ok(None),
            }
        };
        let pot = &raw.potential;
        let p = source(&pot.p, &pot.p_file, "p")?
            .ok_or_else(|| CliError::Config("potential.p is required".into()))?;
        let q = source(&pot.q, &pot.q_file, "q")?;
        match (tag.is_reduced(), &q) {
            (true, Some(_)) => {
                return Err(CliError::Config(format!(
                    "{:?} potentials are reduced; q is derived from p and must not be given",
                    tag.signature
                )))
            }
            (false, None) => return Err(CliError::Config("minkowski31 scenarios need both p and q".into())),
            _ => {}
        }

        let seeds: Vec<Seed> = raw
            .seeds
            .iter()
            .map(|s| {
                let k = match (s.method, s.k) {
                    (SeedMethod::Planewave, Some(k)) => (k[0], k[1]),
                    (SeedMethod::Planewave, None) => {
                        return Err(CliError::Config("planewave seeds need a wavevector k".into()))
                    }
                    (SeedMethod::Neumann, Some(_)) => {
                        return Err(CliError::Config("k is only meaningful for planewave seeds".into()))
                    }
                    (SeedMethod::Neumann, None) => (0.0, 0.0),
                };
                Ok(Seed { slot: s.slot.into(), method: s.method, psi: complex(s.psi), phi: complex(s.phi), k })
            })
            .collect::<Result<_, _>>()?;
        check_seeds(tag.signature, &seeds)?;

        let solver = SolveOptions { tol: raw.solver.tol, max_iter: raw.solver.max_iter, damping: raw.solver.damping };
        if !(solver.tol > 0.0 && solver.max_iter > 0 && solver.damping > 0.0 && solver.damping <= 1.0) {
            return Err(CliError::Config("solver needs tol > 0, max_iter > 0 and damping in (0, 1]".into()));
        }

        let (flow, monitor_every) = match &raw.flow {
            None => (None, 1),
            Some(f) => {
                let mut spec = FlowSpec::new(f.kind, tag, f.dt, f.steps);
                spec.alpha = complex(f.alpha);
                spec.gamma = complex(f.gamma);
                spec.alpha2 = complex(f.alpha2);
                spec.co_evolve = f.co_evolve;
                spec.dealias = f.dealias;
                spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
                if spec.co_evolve && seeds.is_empty() {
                    return Err(CliError::Config("co_evolve needs seeds".into()));
                }
                if f.monitor_every == 0 {
                    return Err(CliError::Config("monitor_every must be positive".into()));
                }
                (Some(spec), f.monitor_every)
            }
        };

        let outputs: Vec<Output> = raw
            .outputs
            .into_iter()
            .map(|o| match o {
                Output::SurfaceMesh { path, projection } => Output::SurfaceMesh { path: base.join(path), projection },
                Output::DiagnosticsCsv { path } => Output::DiagnosticsCsv { path: base.join(path) },
                Output::FieldSnapshot { path, field } => Output::FieldSnapshot { path: base.join(path), field },
            })
            .collect();
        if seeds.is_empty() && outputs.iter().any(|o| matches!(o, Output::SurfaceMesh { .. })) {
            return Err(CliError::Config("a surface mesh needs seeds".into()));
        }
        if tag.is_reduced() && outputs.iter().any(|o| matches!(o, Output::FieldSnapshot { field: SnapshotField::Q, .. })) {
            return Err(CliError::Config("q snapshots are only written for minkowski31".into()));
        }

        Ok(Scenario {
            name: raw.name.unwrap_or_else(|| default_name.to_string()),
            grid,
            tag,
            p,
            q,
            seeds,
            solver,
            flow,
            monitor_every,
            outputs,
            tolerances: Tolerances::from_map(&raw.tolerances)?,
            golden_csv: raw.golden.diagnostics_csv.map(|p| base.join(p)),
        })
    }
}

fn check_seeds(sig: Signature, seeds: &[Seed]) -> Result<(), CliError> {
    if seeds.is_empty() {
        return Ok(());
    }
    let slots: Vec<Slot> = seeds.iter().map(|s| s.slot).collect();
    let ok = match sig {
        Signature::Euclidean4 | Signature::Split22 => slots == [Slot::Phi1, Slot::Phi2],
        Signature::Minkowski31 => slots == [Slot::Shared, Slot::Shared],
        Signature::Euclid3 => slots == [Slot::Shared],
    };
    if ok {
        Ok(())
    } else {
        let need = match sig {
            Signature::Euclidean4 | Signature::Split22 => "a phi1 seed followed by a phi2 seed",
            Signature::Minkowski31 => "two shared seeds",
            Signature::Euclid3 => "one shared seed",
        };
        Err(CliError::Config(format!("{sig:?} scenarios need {need}, got {slots:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_version = 1
[grid]
nx = 16
ny = 16
lx = "2*pi"
ly = 6.283185307179586
[potential]
signature = "euclidean4"
p = "0.1*(1 + 0.3*cos(x))"
[[seeds]]
slot = "phi1"
psi = [1.0, 0.0]
phi = [0.0, -1.0]
[[seeds]]
slot = "phi2"
psi = [1.0, 0.0]
phi = [0.0, -1.0]
"#;

    fn parse(s: &str) -> Result<Scenario, CliError> {
        Scenario::parse(s, Path::new("/tmp/sc"), "t")
    }

    #[test]
    fn minimal_scenario() {
        let s = parse(BASE).unwrap();
        assert_eq!(s.grid.nx, 16);
        assert!((s.grid.lx - 2.0 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(s.seeds.len(), 2);
        assert!(s.flow.is_none());
        assert_eq!(s.tolerances, Tolerances::default());
        assert_eq!(s.name, "t");
    }

    #[test]
    fn outputs_resolve_against_scenario_dir() {
        let text = format!(
            "{BASE}\n[[outputs]]\nkind = \"diagnostics_csv\"\npath = \"out/d.csv\"\n[[outputs]]\nkind = \"surface_mesh\"\npath = \"m.obj\"\nprojection = \"stereographic\"\n"
        );
        let s = parse(&text).unwrap();
        assert_eq!(s.outputs[0], Output::DiagnosticsCsv { path: PathBuf::from("/tmp/sc/out/d.csv") });
        assert_eq!(
            s.outputs[1],
            Output::SurfaceMesh { path: PathBuf::from("/tmp/sc/m.obj"), projection: Projection::Stereographic }
        );
    }

    #[test]
    fn config_errors() {
        let cases = [
            BASE.replace("schema_version = 1", "schema_version = 2"),
            BASE.replace("nx = 16", "nx = 15"),
            BASE.replace("p = \"0.1*(1 + 0.3*cos(x))\"", "p = \"0.1*(1 + \""),
            BASE.replace("p = \"0.1*(1 + 0.3*cos(x))\"", "p = \"1\"\nq = \"1\""),
            BASE.replace("signature = \"euclidean4\"", "signature = \"minkowski31\""),
            BASE.replace("slot = \"phi2\"", "slot = \"phi1\""),
            format!("{BASE}\n[tolerances]\nbogus = 1.0\n"),
            format!("{BASE}\n[tolerances]\ndirac = -1.0\n"),
            format!("{BASE}\n[flow]\nkind = \"t2\"\ndt = 0.0\nsteps = 3\n"),
            format!("{BASE}\n[flow]\nkind = \"vn\"\ndt = 0.1\nsteps = 3\n"),
            format!("{BASE}\nunknown_key = 3\n"),
            "not toml at all [".to_string(),
        ];
        for text in cases {
            assert!(matches!(parse(&text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn flow_section_defaults() {
        let s = parse(&format!("{BASE}\n[flow]\nkind = \"t2\"\ndt = 1e-3\nsteps = 10\nco_evolve = true\n")).unwrap();
        let f = s.flow.unwrap();
        assert_eq!(f.flow, FlowKind::T2);
        assert!(f.co_evolve && f.dealias);
        assert_eq!(s.monitor_every, 1);
    }
}
