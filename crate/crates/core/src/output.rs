//! Run outputs: the per-step balance table (CSV) and legacy ASCII VTK
//! snapshots of every subdomain, with readers for both.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::discretize::FluxTopology;
use crate::error::{Error, Result};
use crate::mesh::MixedDimMesh;
use crate::physics::FieldState;
use crate::splitting::{OutputSink, StepReport};

pub const BALANCE_COLUMNS: [&str; 7] = ["step", "time", "mass_u", "mass_w", "influx", "outflux", "delta_m"];

/// Names of the per-cell arrays in every snapshot, in file order.
pub const VTK_ARRAYS: [&str; 7] = ["p", "theta", "u", "w", "pore_fraction", "pore_fraction_u", "pore_fraction_w"];

pub fn balance_path(dir: &Path, scenario: &str) -> PathBuf {
    dir.join(format!("{scenario}_balance.csv"))
}

pub fn snapshot_path(dir: &Path, scenario: &str, subdomain: &str, step: usize) -> PathBuf {
    dir.join(format!("{scenario}_{subdomain}_{step:06}.vtk"))
}

/// One parsed row of the balance table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceRow {
    pub step: usize,
    pub time: f64,
    pub mass_u: f64,
    pub mass_w: f64,
    pub influx: f64,
    pub outflux: f64,
    pub delta_m: f64,
}

impl From<&StepReport> for BalanceRow {
    fn from(r: &StepReport) -> Self {
        BalanceRow {
            step: r.step,
            time: r.time,
            mass_u: r.mass_u(),
            mass_w: r.mass_w(),
            influx: r.influx,
            outflux: r.outflux,
            delta_m: r.delta_m,
        }
    }
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

/// Appends one balance row per recorded step.
pub struct BalanceWriter {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl BalanceWriter {
    /// Creates (truncates) the table and writes the header.
    pub fn create(dir: &Path, scenario: &str) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = balance_path(dir, scenario);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(BALANCE_COLUMNS).map_err(|e| csv_error(&path, e))?;
        Ok(BalanceWriter { path, writer })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, report: &StepReport) -> Result<()> {
        let row = BalanceRow::from(report);
        let record = [
            row.step.to_string(),
            sci(row.time),
            sci(row.mass_u),
            sci(row.mass_w),
            sci(row.influx),
            sci(row.outflux),
            sci(row.delta_m),
        ];
        self.writer.write_record(&record).map_err(|e| csv_error(&self.path, e))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse { line: 0, message: format!("{}: {other:?}", path.display()) },
    }
}

/// Reads a balance table back.
pub fn read_balance(path: &Path) -> Result<Vec<BalanceRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(BALANCE_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            message: format!("{}: unexpected columns {:?}", path.display(), header),
        });
    }
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let bad = |what: &str| Error::Parse { line, message: format!("{}: bad {what}", path.display()) };
        let num = |i: usize| -> Result<f64> { record[i].parse().map_err(|_| bad(BALANCE_COLUMNS[i])) };
        rows.push(BalanceRow {
            step: record[0].parse().map_err(|_| bad("step"))?,
            time: num(1)?,
            mass_u: num(2)?,
            mass_w: num(3)?,
            influx: num(4)?,
            outflux: num(5)?,
            delta_m: num(6)?,
        });
    }
    Ok(rows)
}

const VTK_VERTEX: u8 = 1;
const VTK_LINE: u8 = 3;
const VTK_POLYGON: u8 = 7;

/// Cells of one subdomain in VTK terms: point coordinates, connectivity and
/// cell types.
struct Piece {
    points: Vec<[f64; 2]>,
    cells: Vec<Vec<usize>>,
    types: Vec<u8>,
}

fn pieces(mesh: &MixedDimMesh) -> Vec<Piece> {
    let mut out = Vec::new();
    let bulk_type = if mesh.dim == 1 { VTK_LINE } else { VTK_POLYGON };
    out.push(Piece {
        points: mesh.points.clone(),
        cells: mesh.cells.iter().map(|c| c.vertices.clone()).collect(),
        types: vec![bulk_type; mesh.cells.len()],
    });
    for fr in &mesh.fractures {
        let mut points = Vec::with_capacity(2 * fr.cells.len());
        let mut cells = Vec::with_capacity(fr.cells.len());
        for c in &fr.cells {
            cells.push(vec![points.len(), points.len() + 1]);
            points.extend(c.endpoints);
        }
        out.push(Piece { points, cells, types: vec![VTK_LINE; fr.cells.len()] });
    }
    if !mesh.intersections.is_empty() {
        out.push(Piece {
            points: mesh.intersections.iter().map(|x| x.point).collect(),
            cells: (0..mesh.intersections.len()).map(|k| vec![k]).collect(),
            types: vec![VTK_VERTEX; mesh.intersections.len()],
        });
    }
    out
}

/// Writes one snapshot per subdomain and returns the file paths.
pub fn write_snapshots(
    dir: &Path,
    scenario: &str,
    mesh: &MixedDimMesh,
    topo: &FluxTopology,
    state: &FieldState,
    step: usize,
    time: f64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let subdomains = topo.layout.subdomains();
    let pieces = pieces(mesh);
    let mut written = Vec::new();
    for ((name, range), piece) in subdomains.iter().zip(&pieces) {
        if piece.cells.len() != range.len() {
            return Err(Error::Logic(format!("subdomain {name} has {} cells, expected {}", piece.cells.len(), range.len())));
        }
        let mut text = String::new();
        let _ = writeln!(text, "# vtk DataFile Version 3.0");
        let _ = writeln!(text, "{scenario} {name} step {step} time {time:e}");
        let _ = writeln!(text, "ASCII\nDATASET UNSTRUCTURED_GRID");
        let _ = writeln!(text, "POINTS {} double", piece.points.len());
        for p in &piece.points {
            let _ = writeln!(text, "{:e} {:e} 0", p[0], p[1]);
        }
        let size: usize = piece.cells.iter().map(|c| c.len() + 1).sum();
        let _ = writeln!(text, "CELLS {} {size}", piece.cells.len());
        for c in &piece.cells {
            let _ = write!(text, "{}", c.len());
            for v in c {
                let _ = write!(text, " {v}");
            }
            text.push('\n');
        }
        let _ = writeln!(text, "CELL_TYPES {}", piece.types.len());
        for t in &piece.types {
            let _ = writeln!(text, "{t}");
        }
        let _ = writeln!(text, "CELL_DATA {}", range.len());
        let slice = |v: &[f64]| v[range.clone()].to_vec();
        let pore = slice(&state.pore);
        let product = |v: &[f64]| -> Vec<f64> { range.clone().map(|k| state.pore[k] * v[k]).collect() };
        let arrays = [
            slice(&state.p),
            slice(&state.theta),
            slice(&state.u),
            slice(&state.w),
            pore,
            product(&state.u),
            product(&state.w),
        ];
        for (label, values) in VTK_ARRAYS.iter().zip(arrays) {
            let _ = writeln!(text, "SCALARS {label} double 1\nLOOKUP_TABLE default");
            for v in values {
                let _ = writeln!(text, "{v:e}");
            }
        }
        let path = snapshot_path(dir, scenario, name, step);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Contents of a snapshot file.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    /// Cell arrays in file order.
    pub arrays: Vec<(String, Vec<f64>)>,
}

impl Snapshot {
    pub fn array(&self, name: &str) -> Option<&[f64]> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }
}

struct Tokens<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    path: &'a Path,
}

impl<'a> Tokens<'a> {
    fn error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse { line, message: format!("{}: {}", self.path.display(), message.into()) }
    }

    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        loop {
            match self.lines.next() {
                Some((_, l)) if l.trim().is_empty() => continue,
                Some((k, l)) => return Ok((k + 1, l.trim())),
                None => return Err(Error::Parse { line: 0, message: format!("{}: unexpected end of file", self.path.display()) }),
            }
        }
    }

    fn header(&mut self, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
        let (line, text) = self.next_line()?;
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.first() != Some(&keyword) {
            return Err(self.error(line, format!("expected {keyword}, got '{text}'")));
        }
        Ok((line, words))
    }

    fn count(&self, line: usize, word: Option<&&str>) -> Result<usize> {
        word.and_then(|w| w.parse().ok()).ok_or_else(|| self.error(line, "bad count"))
    }

    fn numbers<T: std::str::FromStr>(&mut self) -> Result<(usize, Vec<T>)> {
        let (line, text) = self.next_line()?;
        let values = text
            .split_whitespace()
            .map(|w| w.parse::<T>().map_err(|_| self.error(line, format!("bad number '{w}'"))))
            .collect::<Result<Vec<T>>>()?;
        Ok((line, values))
    }
}

/// Reads a snapshot written by [`write_snapshots`].
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut t = Tokens { lines: text.lines().enumerate().peekable(), path };
    let (line, first) = t.next_line()?;
    if !first.starts_with("# vtk DataFile") {
        return Err(t.error(line, "not a legacy VTK file"));
    }
    t.next_line()?;
    let (line, format) = t.next_line()?;
    if format != "ASCII" {
        return Err(t.error(line, "only ASCII files are supported"));
    }
    let (line, dataset) = t.next_line()?;
    if dataset != "DATASET UNSTRUCTURED_GRID" {
        return Err(t.error(line, "expected an unstructured grid"));
    }
    let (line, words) = t.header("POINTS")?;
    let np = t.count(line, words.get(1))?;
    let mut points = Vec::with_capacity(np);
    for _ in 0..np {
        let (line, v) = t.numbers::<f64>()?;
        if v.len() != 3 {
            return Err(t.error(line, "points need three coordinates"));
        }
        points.push([v[0], v[1], v[2]]);
    }
    let (line, words) = t.header("CELLS")?;
    let nc = t.count(line, words.get(1))?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (line, v) = t.numbers::<usize>()?;
        if v.is_empty() || v[0] + 1 != v.len() || v[1..].iter().any(|&i| i >= np) {
            return Err(t.error(line, "bad cell connectivity"));
        }
        cells.push(v[1..].to_vec());
    }
    let (line, words) = t.header("CELL_TYPES")?;
    if t.count(line, words.get(1))? != nc {
        return Err(t.error(line, "cell type count differs from cell count"));
    }
    let mut cell_types = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (line, v) = t.numbers::<u8>()?;
        if v.len() != 1 {
            return Err(t.error(line, "one type per line"));
        }
        cell_types.push(v[0]);
    }
    let (line, words) = t.header("CELL_DATA")?;
    if t.count(line, words.get(1))? != nc {
        return Err(t.error(line, "cell data count differs from cell count"));
    }
    let mut arrays = Vec::new();
    while t.lines.peek().is_some() {
        let Ok((line, words)) = t.header("SCALARS") else { break };
        let name = words.get(1).ok_or_else(|| t.error(line, "unnamed array"))?.to_string();
        t.header("LOOKUP_TABLE")?;
        let mut values = Vec::with_capacity(nc);
        for _ in 0..nc {
            let (line, v) = t.numbers::<f64>()?;
            if v.len() != 1 {
                return Err(t.error(line, "one value per line"));
            }
            values.push(v[0]);
        }
        arrays.push((name, values));
        while t.lines.peek().is_some_and(|(_, l)| l.trim().is_empty()) {
            t.lines.next();
        }
    }
    Ok(Snapshot { points, cells, cell_types, arrays })
}

/// Output sink writing the balance table every step and snapshots at a
/// fixed cadence, always including the first and last step.
pub struct RunWriter<'m> {
    dir: PathBuf,
    scenario: String,
    mesh: &'m MixedDimMesh,
    topo: &'m FluxTopology,
    every: usize,
    last_step: usize,
    vtk: bool,
    balance: BalanceWriter,
    snapshots: Vec<PathBuf>,
}

impl<'m> RunWriter<'m> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dir: &Path,
        scenario: &str,
        mesh: &'m MixedDimMesh,
        topo: &'m FluxTopology,
        every: usize,
        last_step: usize,
        vtk: bool,
    ) -> Result<Self> {
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            scenario: scenario.to_string(),
            mesh,
            topo,
            every,
            last_step,
            vtk,
            balance: BalanceWriter::create(dir, scenario)?,
            snapshots: Vec::new(),
        })
    }

    pub fn balance_path(&self) -> &Path {
        self.balance.path()
    }

    /// Snapshot files written so far.
    pub fn snapshots(&self) -> &[PathBuf] {
        &self.snapshots
    }

    fn wants_snapshot(&self, step: usize) -> bool {
        self.vtk && (step == 0 || step == self.last_step || (self.every > 0 && step.is_multiple_of(self.every)))
    }
}

impl OutputSink for RunWriter<'_> {
    fn record(&mut self, state: &FieldState, report: &StepReport) -> Result<()> {
        self.balance.append(report)?;
        if self.wants_snapshot(report.step) {
            let files = write_snapshots(&self.dir, &self.scenario, self.mesh, self.topo, state, report.step, report.time)?;
            self.snapshots.extend(files);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_structured_2d, Rect};
    use crate::splitting::{initial_report, SubdomainMass};

    fn fractured() -> (MixedDimMesh, FluxTopology, FieldState) {
        let mesh = build_structured_2d(
            4,
            4,
            Rect::unit(),
            &[vec![[0.5, 0.25], [0.5, 0.75]], vec![[0.25, 0.5], [0.75, 0.5]]],
        )
        .unwrap();
        let topo = FluxTopology::new(&mesh).unwrap();
        let n = topo.num_dofs();
        let ramp: Vec<f64> = (0..n).map(|k| 0.1 + k as f64 / 7.0).collect();
        let pore: Vec<f64> = (0..n).map(|k| if k < 16 { 0.2 } else { 1e-2 / 3.0 }).collect();
        let mut state = FieldState::new(&topo, ramp.clone(), ramp.clone(), ramp.clone(), pore).unwrap();
        state.p = ramp.iter().map(|x| -x).collect();
        (mesh, topo, state)
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (mesh, topo, state) = fractured();
        let files = write_snapshots(dir.path(), "demo", &mesh, &topo, &state, 7, 0.5).unwrap();
        let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(
            names,
            [
                "demo_bulk_000007.vtk",
                "demo_fracture_0_000007.vtk",
                "demo_fracture_1_000007.vtk",
                "demo_intersections_000007.vtk"
            ]
        );
        let layout = topo.layout.subdomains();
        for (path, (_, range)) in files.iter().zip(layout) {
            let snap = read_snapshot(path).unwrap();
            assert_eq!(snap.cells.len(), range.len());
            let names: Vec<&str> = snap.arrays.iter().map(|(n, _)| n.as_str()).collect();
            assert_eq!(names, VTK_ARRAYS);
            assert_eq!(snap.array("u").unwrap(), &state.u[range.clone()]);
            assert_eq!(snap.array("p").unwrap(), &state.p[range.clone()]);
            for (j, k) in range.enumerate() {
                assert_eq!(snap.array("pore_fraction_w").unwrap()[j], state.pore[k] * state.w[k]);
            }
        }
        let bulk = read_snapshot(&files[0]).unwrap();
        assert_eq!(bulk.points.len(), 25);
        assert!(bulk.cell_types.iter().all(|t| *t == VTK_POLYGON));
    }

    #[test]
    fn balance_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (_, topo, state) = fractured();
        let mut w = BalanceWriter::create(dir.path(), "demo").unwrap();
        let first = initial_report(&topo, &state);
        let mut second = first.clone();
        second.step = 1;
        second.time = 0.1;
        second.influx = 1.0 / 3.0;
        second.outflux = 2.0f64.sqrt();
        second.delta_m = -1.234_567_890_123_456_7e-17;
        second.masses = vec![SubdomainMass { name: "bulk".into(), u: std::f64::consts::PI, w: 1e-300 }];
        w.append(&first).unwrap();
        w.append(&second).unwrap();
        let rows = read_balance(w.path()).unwrap();
        assert_eq!(rows, vec![BalanceRow::from(&first), BalanceRow::from(&second)]);
        assert_eq!(rows[0].delta_m, 0.0);
        let text = std::fs::read_to_string(w.path()).unwrap();
        assert!(text.starts_with("step,time,mass_u,mass_w,influx,outflux,delta_m\n"));
    }

    #[test]
    fn reader_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.vtk");
        std::fs::write(&path, "hello\n").unwrap();
        assert!(matches!(read_snapshot(&path), Err(Error::Parse { line: 1, .. })));
        let csv = dir.path().join("x.csv");
        std::fs::write(&csv, "a,b\n1,2\n").unwrap();
        assert!(read_balance(&csv).is_err());
    }
}
