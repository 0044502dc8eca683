//! On-disk formats: field snapshots, OBJ meshes with a per-vertex sidecar,
//! and the diagnostics CSV.

use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use ws4d_core::diagnostics::RunRecord;
use ws4d_core::immersion::{GeometryReport, Surface};
use ws4d_core::{Field2D, GridSpec};

use crate::error::CliError;
use crate::scenario::Projection;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"WS4D";
pub const SNAPSHOT_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 * 8;

pub const CSV_HEADER: [&str; 7] = ["t", "W", "Re C1", "Im C1", "dirac_res", "closed_res", "metric_min"];
pub const SIDECAR_HEADER: [&str; 7] = ["vertex", "X1", "X2", "X3", "X4", "K", "H2"];

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e)),
        _ => Ok(()),
    }
}

/// Little-endian snapshot: magic, version, `nx ny lx ly` as f64, then
/// `(re, im)` pairs in row-major order (`x` fastest).
pub fn encode_snapshot(field: &Field2D) -> Vec<u8> {
    let spec = field.spec();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * spec.len());
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    for v in [spec.nx as f64, spec.ny as f64, spec.lx, spec.ly] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for c in field.values() {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8], path: &str) -> Result<Field2D, CliError> {
    let bad = |reason: String| CliError::Snapshot { path: path.to_string(), reason };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != SNAPSHOT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap_or_default());
    if version != SNAPSHOT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let f = |i: usize| f64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap_or_default());
    let (nx, ny, lx, ly) = (f(0), f(1), f(2), f(3));
    let whole = |v: f64| v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64;
    if !(whole(nx) && whole(ny)) {
        return Err(bad(format!("grid size {nx} x {ny} is not integral")));
    }
    let spec = GridSpec::new(nx as usize, ny as usize, lx, ly).map_err(|e| bad(e.to_string()))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != 16 * spec.len() {
        return Err(bad(format!("expected {} data bytes, found {}", 16 * spec.len(), body.len())));
    }
    let values = body
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap_or_default());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap_or_default());
            Complex64::new(re, im)
        })
        .collect();
    Field2D::from_values(spec, values).map_err(|e| bad(e.to_string()))
}

pub fn write_snapshot(path: &Path, field: &Field2D) -> Result<(), CliError> {
    create_parent(path)?;
    std::fs::write(path, encode_snapshot(field)).map_err(|e| CliError::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Field2D, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode_snapshot(&bytes, &path.display().to_string())
}

/// Shortest round-trip representation, so files are stable across runs.
fn num(v: f64) -> String {
    format!("{v:e}")
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(buf)
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io { path: "<csv>".into(), source: std::io::Error::other(e) }
}

pub fn diagnostics_csv(record: &RunRecord) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(CSV_HEADER).map_err(csv_error)?;
        for r in record.rows() {
            let row = [r.t, r.willmore, r.c1.re, r.c1.im, r.dirac_residual, r.closedness, r.metric_min].map(num);
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush().map_err(|e| CliError::io("<csv>", e))?;
    }
    Ok(buf)
}

/// Parses a diagnostics CSV back into numeric rows.
pub fn parse_diagnostics_csv(bytes: &[u8]) -> Result<Vec<[f64; 7]>, String> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        if rec.len() != 7 {
            return Err(format!("row with {} fields", rec.len()));
        }
        let mut row = [0.0; 7];
        for (slot, s) in row.iter_mut().zip(rec.iter()) {
            *slot = s.trim().parse().map_err(|_| format!("bad number '{s}'"))?;
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    create_parent(path)?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Projects the four coordinates of every vertex to 3D.
///
/// `stereographic` centres the cloud, scales it into the ball of radius ½
/// and projects from the pole `(0, 0, 0, 1)` onto `X⁴ = 0`; on the unit
/// sphere this is the usual stereographic map.
pub fn project(coords: &[Vec<f64>; 4], projection: Projection) -> Vec<[f64; 3]> {
    let n = coords[0].len();
    let drop = |skip: usize| -> Vec<[f64; 3]> {
        (0..n)
            .map(|k| {
                let mut out = [0.0; 3];
                let mut j = 0;
                for (i, c) in coords.iter().enumerate() {
                    if i != skip {
                        out[j] = c[k];
                        j += 1;
                    }
                }
                out
            })
            .collect()
    };
    match projection {
        Projection::DropX1 => drop(0),
        Projection::DropX2 => drop(1),
        Projection::DropX3 => drop(2),
        Projection::DropX4 => drop(3),
        Projection::Stereographic => {
            let centre: [f64; 4] = std::array::from_fn(|i| coords[i].iter().sum::<f64>() / n.max(1) as f64);
            let radius = (0..n)
                .map(|k| (0..4).map(|i| (coords[i][k] - centre[i]).powi(2)).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            let s = if radius > 0.0 { 0.5 / radius } else { 1.0 };
            (0..n)
                .map(|k| {
                    let u: [f64; 4] = std::array::from_fn(|i| (coords[i][k] - centre[i]) * s);
                    let d = 1.0 - u[3];
                    [u[0] / d, u[1] / d, u[2] / d]
                })
                .collect()
        }
    }
}

/// Torus-periodic triangulation of the sample grid, 1-based OBJ indices.
pub fn grid_faces(spec: &GridSpec) -> Vec<[usize; 3]> {
    let (nx, ny) = (spec.nx, spec.ny);
    let v = |ix: usize, iy: usize| (iy % ny) * nx + (ix % nx) + 1;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let (a, b, c, d) = (v(ix, iy), v(ix + 1, iy), v(ix + 1, iy + 1), v(ix, iy + 1));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    faces
}

pub struct Mesh {
    pub obj: Vec<u8>,
    pub sidecar: Vec<u8>,
}

pub fn mesh(surface: &Surface, geometry: &GeometryReport, projection: Projection) -> Result<Mesh, CliError> {
    let spec = *surface.spec();
    let coords: [Vec<f64>; 4] = std::array::from_fn(|i| surface.coord(i).values().iter().map(|v| v.re).collect());
    let points = project(&coords, projection);
    let mut obj = Vec::new();
    let w = |obj: &mut Vec<u8>, s: String| obj.write_all(s.as_bytes()).map_err(|e| CliError::io("<obj>", e));
    w(&mut obj, format!("# ws4d surface {}x{} projection {:?}\n", spec.nx, spec.ny, projection))?;
    for p in &points {
        w(&mut obj, format!("v {} {} {}\n", num(p[0]), num(p[1]), num(p[2])))?;
    }
    for f in grid_faces(&spec) {
        w(&mut obj, format!("f {} {} {}\n", f[0], f[1], f[2]))?;
    }

    let mut sidecar = Vec::new();
    {
        let mut cw = csv_writer(&mut sidecar);
        cw.write_record(SIDECAR_HEADER).map_err(csv_error)?;
        let k = geometry.gaussian.values();
        let h = geometry.hsq.values();
        for i in 0..spec.len() {
            let row = [
                (i + 1).to_string(),
                num(coords[0][i]),
                num(coords[1][i]),
                num(coords[2][i]),
                num(coords[3][i]),
                num(k[i].re),
                num(h[i].re),
            ];
            cw.write_record(&row).map_err(csv_error)?;
        }
        cw.flush().map_err(|e| CliError::io("<csv>", e))?;
    }
    Ok(Mesh { obj, sidecar })
}

/// `surface.obj` pairs with `surface.vertices.csv`.
pub fn sidecar_path(obj: &Path) -> std::path::PathBuf {
    obj.with_extension("vertices.csv")
}
