//! Scenario files and the built-in scenario registry.
//!
//! A scenario file is TOML with the sections `[scenario]`, `[domain]`,
//! `[fracture.N]`, `[params]`, `[chemistry]`, `[flow]`, `[bc.NAME]`,
//! `[initial]`, `[time]` and `[output]`. Only `[domain]` and `[time]` are
//! required; missing values fall back to the defaults below and every
//! fallback is logged at info level.

use std::cell::RefCell;
use std::ops::Range;
use std::path::{Path, PathBuf};

use toml::de::{DeTable, DeValue};
use toml::Spanned;

use crate::chemistry::{ReactionParams, ReactionScheme};
use crate::constitutive::PhysParams;
use crate::discretize::{FluxKind, FluxTopology, Subdomain};
use crate::error::{Error, Result};
use crate::mesh::{
    build_interval_mesh, build_structured_2d, load_mesh, staircase_polyline, MixedDimMesh, Point, Rect,
};
use crate::physics::{BcKind, BoundaryCondition, BoundarySpec, FieldState, FluidSources};
use crate::splitting::{
    convergence_order, splitting_error_study, FlowModel, SimulationModel, SplittingErrorRow, TimeGrid,
};

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Interval { length: f64, cells: usize },
    Structured { nx: usize, ny: usize, rect: Rect },
    /// Mesh file in the `mdmesh` format.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractureSpec {
    pub points: Vec<Point>,
    /// Replace every segment by a grid-aligned staircase.
    pub staircase: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowSpec {
    Darcy,
    /// Constant Darcy velocity on a fracture-free mesh.
    Uniform { velocity: Point },
    /// 1D velocity `speed * sign(x - center)`, fed by a source at `center`
    /// injecting fluid of the given composition.
    Divergent { speed: f64, center: f64, injection_u: f64, injection_theta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEntry {
    pub tag: String,
    pub pressure: BoundaryCondition,
    pub theta: BoundaryCondition,
    pub solute: BoundaryCondition,
}

/// Initial fields. Fracture values also apply to intersections; values
/// `*_in_region` override the others inside `region`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialSpec {
    pub theta: f64,
    pub u: f64,
    pub w: f64,
    pub porosity: f64,
    pub aperture: f64,
    pub fracture_u: f64,
    pub fracture_w: f64,
    pub region: Option<Rect>,
    pub u_in_region: Option<f64>,
    pub w_in_region: Option<f64>,
    pub fracture_w_in_region: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    /// VTK snapshot cadence in steps; 0 writes only the first and last step.
    pub every: usize,
    pub dir: PathBuf,
    pub vtk: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    /// Values are artificial and carry no units.
    pub unitless: bool,
    /// Which published setup the scenario mirrors.
    pub reference: String,
    pub domain: DomainSpec,
    pub fractures: Vec<FractureSpec>,
    pub params: PhysParams,
    pub reaction: ReactionParams,
    pub scheme: ReactionScheme,
    pub flow: FlowSpec,
    pub boundary: Vec<BoundaryEntry>,
    pub initial: InitialSpec,
    pub time: TimeGrid,
    pub output: OutputSpec,
}

/// A scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub mesh: MixedDimMesh,
    pub model: SimulationModel,
    pub initial: FieldState,
    pub grid: TimeGrid,
    pub output: OutputSpec,
}

struct Source<'i> {
    origin: String,
    text: &'i str,
    line_starts: Vec<usize>,
}

impl<'i> Source<'i> {
    fn new(origin: String, text: &'i str) -> Self {
        let mut line_starts = vec![0];
        line_starts.extend(text.match_indices('\n').map(|(k, _)| k + 1));
        Source { origin, text, line_starts }
    }

    fn line(&self, offset: usize) -> usize {
        self.line_starts.partition_point(|s| *s <= offset)
    }

    fn error(&self, span: &Range<usize>, key: impl Into<String>, message: impl Into<String>) -> Error {
        Error::ConfigKey {
            path: self.origin.clone(),
            line: self.line(span.start),
            key: key.into(),
            message: message.into(),
        }
    }
}

struct Section<'a, 'i> {
    src: &'a Source<'i>,
    name: String,
    span: Range<usize>,
    table: Option<&'a DeTable<'i>>,
    seen: RefCell<Vec<String>>,
}

impl<'a, 'i> Section<'a, 'i> {
    fn new(src: &'a Source<'i>, name: impl Into<String>, value: Option<&'a Spanned<DeValue<'i>>>) -> Result<Self> {
        let name = name.into();
        let (table, span) = match value {
            None => (None, 0..0),
            Some(v) => match v.get_ref() {
                DeValue::Table(t) => (Some(t), v.span()),
                _ => return Err(src.error(&v.span(), name, "expected a section")),
            },
        };
        Ok(Section { src, name, span, table, seen: RefCell::new(Vec::new()) })
    }

    fn present(&self) -> bool {
        self.table.is_some()
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn get(&self, key: &str) -> Option<&'a Spanned<DeValue<'i>>> {
        self.seen.borrow_mut().push(key.to_string());
        self.table?.get(key)
    }

    fn error_at(&self, key: &str, message: impl Into<String>) -> Error {
        let span = self.get(key).map_or_else(|| self.span.clone(), |v| v.span());
        self.src.error(&span, self.path(key), message)
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        value_as_number(v.get_ref())
            .map(Some)
            .ok_or_else(|| self.src.error(&v.span(), self.path(key), "expected a number"))
    }

    fn number_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(match self.number(key)? {
            Some(x) => x,
            None => {
                if self.present() {
                    log::info!("{}: `{}` not set, using {default}", self.src.origin, self.path(key));
                }
                default
            }
        })
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        match v.get_ref() {
            DeValue::Integer(i) => i64::from_str_radix(&i.as_str().replace('_', ""), i.radix())
                .ok()
                .and_then(|x| usize::try_from(x).ok())
                .map(Some)
                .ok_or_else(|| self.src.error(&v.span(), self.path(key), "expected a non-negative integer")),
            _ => Err(self.src.error(&v.span(), self.path(key), "expected a non-negative integer")),
        }
    }

    fn required_count(&self, key: &str) -> Result<usize> {
        self.count(key)?.ok_or_else(|| self.error_at(key, "missing value"))
    }

    fn text(&self, key: &str) -> Result<Option<(&'a str, Range<usize>)>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        match v.get_ref() {
            DeValue::String(s) => Ok(Some((s.as_ref(), v.span()))),
            _ => Err(self.src.error(&v.span(), self.path(key), "expected a string")),
        }
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        match v.get_ref() {
            DeValue::Boolean(b) => Ok(Some(*b)),
            _ => Err(self.src.error(&v.span(), self.path(key), "expected true or false")),
        }
    }

    fn numbers(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let err = || self.src.error(&v.span(), self.path(key), "expected an array of numbers");
        match v.get_ref() {
            DeValue::Array(items) => items
                .iter()
                .map(|x| value_as_number(x.get_ref()).ok_or_else(err))
                .collect::<Result<Vec<f64>>>()
                .map(Some),
            _ => Err(err()),
        }
    }

    fn points(&self, key: &str) -> Result<Option<Vec<Point>>> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let err = || self.src.error(&v.span(), self.path(key), "expected an array of [x, y] pairs");
        let DeValue::Array(items) = v.get_ref() else { return Err(err()) };
        items
            .iter()
            .map(|item| match item.get_ref() {
                DeValue::Array(xy) if xy.len() == 2 => {
                    let x = value_as_number(xy[0].get_ref()).ok_or_else(err)?;
                    let y = value_as_number(xy[1].get_ref()).ok_or_else(err)?;
                    Ok([x, y])
                }
                _ => Err(err()),
            })
            .collect::<Result<Vec<Point>>>()
            .map(Some)
    }

    fn condition(&self, key: &str) -> Result<BoundaryCondition> {
        let Some((text, span)) = self.text(key)? else {
            if self.present() {
                log::info!("{}: `{}` not set, using no flux", self.src.origin, self.path(key));
            }
            return Ok(BoundaryCondition::no_flux());
        };
        parse_condition(text).map_err(|m| self.src.error(&span, self.path(key), m))
    }

    /// Rejects keys that were never asked for.
    fn finish(&self) -> Result<()> {
        let Some(table) = self.table else { return Ok(()) };
        let seen = self.seen.borrow();
        for (key, _) in table.iter() {
            if !seen.iter().any(|s| s == key.get_ref().as_ref()) {
                return Err(self.src.error(&key.span(), self.path(key.get_ref()), "unknown key"));
            }
        }
        Ok(())
    }
}

fn value_as_number(v: &DeValue<'_>) -> Option<f64> {
    match v {
        DeValue::Integer(i) => i64::from_str_radix(&i.as_str().replace('_', ""), i.radix())
            .ok()
            .map(|x| x as f64),
        DeValue::Float(f) => f.as_str().replace('_', "").parse().ok(),
        _ => None,
    }
}

/// `"essential <value>"`, `"natural <value>"` or `"no_flux"`.
fn parse_condition(text: &str) -> std::result::Result<BoundaryCondition, String> {
    let mut words = text.split_whitespace();
    let kind = words.next().unwrap_or("");
    let value = words.next();
    if words.next().is_some() {
        return Err(format!("expected `<kind> <value>`, got '{text}'"));
    }
    let number = |v: Option<&str>| -> std::result::Result<f64, String> {
        let v = v.ok_or_else(|| format!("'{kind}' needs a value"))?;
        let x: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(format!("boundary value must be finite, got {x}"))
        }
    };
    match kind {
        "essential" => Ok(BoundaryCondition::essential(number(value)?)),
        "natural" => Ok(BoundaryCondition::natural(number(value)?)),
        "no_flux" if value.is_none() => Ok(BoundaryCondition::no_flux()),
        _ => Err(format!("unknown condition '{text}'; use essential, natural or no_flux")),
    }
}

fn format_condition(bc: &BoundaryCondition) -> String {
    match bc.kind {
        BcKind::Essential => format!("essential {:?}", bc.value),
        BcKind::Natural if bc.value == 0.0 => "no_flux".into(),
        BcKind::Natural => format!("natural {:?}", bc.value),
    }
}

const SECTIONS: [&str; 10] =
    ["scenario", "domain", "fracture", "params", "chemistry", "flow", "bc", "initial", "time", "output"];

/// Reads and validates a scenario file. Relative mesh paths resolve against
/// the file's directory; the name defaults to the file stem.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    let mut config = parse_config_str(&text, &path.display().to_string(), stem)?;
    if let DomainSpec::File(mesh) = &mut config.domain {
        if mesh.is_relative() {
            if let Some(dir) = path.parent() {
                *mesh = dir.join(&*mesh);
            }
        }
    }
    Ok(config)
}

/// Parses scenario text; `origin` labels error messages.
pub fn parse_config_str(text: &str, origin: &str, default_name: &str) -> Result<ScenarioConfig> {
    let src = Source::new(origin.to_string(), text);
    let doc = DeTable::parse(src.text).map_err(|e| {
        let span = e.span().unwrap_or(0..0);
        Error::Parse { line: src.line(span.start), message: format!("{origin}: {}", e.message().trim()) }
    })?;
    let root = doc.get_ref();
    for (key, _) in root.iter() {
        if !SECTIONS.contains(&key.get_ref().as_ref()) {
            return Err(src.error(&key.span(), key.get_ref().as_ref(), "unknown section"));
        }
    }
    let section = |name: &str| Section::new(&src, name, root.get(name));
    let missing = |name: &str| Error::Config(format!("{origin}: missing section [{name}]"));

    // [scenario]
    let s = section("scenario")?;
    let name = match s.text("name")? {
        Some((n, span)) => {
            if n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(src.error(&span, "scenario.name", "use letters, digits, '_' or '-'"));
            }
            n.to_string()
        }
        None => default_name.to_string(),
    };
    let unitless = s.flag("unitless")?.unwrap_or(false);
    let reference = s.text("reference")?.map(|(r, _)| r.to_string()).unwrap_or_default();
    s.finish()?;

    // [domain]
    let s = section("domain")?;
    if !s.present() {
        return Err(missing("domain"));
    }
    let (kind, kind_span) = s.text("kind")?.ok_or_else(|| s.error_at("kind", "missing value"))?;
    let domain = match kind {
        "interval" => {
            let length = s.number_or("length", 1.0)?;
            if !(length > 0.0) {
                return Err(s.error_at("length", "must be positive"));
            }
            let cells = s.required_count("cells")?;
            if cells == 0 {
                return Err(s.error_at("cells", "must be positive"));
            }
            DomainSpec::Interval { length, cells }
        }
        "structured" => {
            let nx = s.required_count("nx")?;
            let ny = s.required_count("ny")?;
            if nx == 0 || ny == 0 {
                return Err(s.error_at(if nx == 0 { "nx" } else { "ny" }, "must be positive"));
            }
            let range = |key: &str| -> Result<(f64, f64)> {
                match s.numbers(key)? {
                    None => Ok((0.0, 1.0)),
                    Some(v) if v.len() == 2 && v[0] < v[1] => Ok((v[0], v[1])),
                    Some(_) => Err(s.error_at(key, "expected [low, high] with low < high")),
                }
            };
            let (x0, x1) = range("x")?;
            let (y0, y1) = range("y")?;
            DomainSpec::Structured { nx, ny, rect: Rect { x0, x1, y0, y1 } }
        }
        "file" => {
            let (p, _) = s.text("path")?.ok_or_else(|| s.error_at("path", "missing value"))?;
            DomainSpec::File(PathBuf::from(p))
        }
        other => {
            return Err(src.error(&kind_span, "domain.kind", format!("unknown kind '{other}'; use interval, structured or file")))
        }
    };
    s.finish()?;

    // [fracture.N]
    let mut fractures = Vec::new();
    if let Some(v) = root.get("fracture") {
        let DeValue::Table(table) = v.get_ref() else {
            return Err(src.error(&v.span(), "fracture", "expected [fracture.N] sections"));
        };
        for (key, _) in table.iter() {
            let ok = key.get_ref().parse::<usize>().is_ok_and(|k| k < table.len());
            if !ok {
                return Err(src.error(&key.span(), format!("fracture.{}", key.get_ref()), "fractures are numbered 0, 1, 2, ..."));
            }
        }
        for k in 0..table.len() {
            let s = Section::new(&src, format!("fracture.{k}"), table.get(k.to_string().as_str()))?;
            let points = s.points("points")?.ok_or_else(|| s.error_at("points", "missing value"))?;
            if points.len() < 2 {
                return Err(s.error_at("points", "a fracture needs at least two points"));
            }
            let staircase = s.flag("staircase")?.unwrap_or(false);
            s.finish()?;
            fractures.push(FractureSpec { points, staircase });
        }
    }
    if !fractures.is_empty() && matches!(domain, DomainSpec::Interval { .. }) {
        return Err(Error::Config(format!("{origin}: fractures need a 2D domain")));
    }

    // [params]
    let s = section("params")?;
    let r = PhysParams::reference();
    let params = PhysParams {
        mu: s.number_or("mu", r.mu)?,
        k0: s.number_or("k0", r.k0)?,
        phi0: s.number_or("phi0", r.phi0)?,
        kgamma0: s.number_or("kgamma0", r.kgamma0)?,
        kappagamma0: s.number_or("kappagamma0", r.kappagamma0)?,
        epsgamma0: s.number_or("epsgamma0", r.epsgamma0)?,
        kappaiota0: s.number_or("kappaiota0", r.kappaiota0)?,
        epsiota0: s.number_or("epsiota0", r.epsiota0)?,
        eta_omega: s.number_or("eta_omega", r.eta_omega)?,
        eta_gamma: s.number_or("eta_gamma", r.eta_gamma)?,
        eta_iota: s.number_or("eta_iota", r.eta_iota)?,
        rhow_cw: s.number_or("rhow_cw", r.rhow_cw)?,
        rhos_cs: s.number_or("rhos_cs", r.rhos_cs)?,
        lambda_w: s.number_or("lambda_w", r.lambda_w)?,
        lambda_s: s.number_or("lambda_s", r.lambda_s)?,
        d: s.number_or("d", r.d)?,
        d_gamma: s.number_or("d_gamma", r.d_gamma)?,
        delta_gamma: s.number_or("delta_gamma", r.delta_gamma)?,
    };
    if let Err((field, message)) = params.validate() {
        return Err(s.error_at(field, message));
    }
    s.finish()?;

    // [chemistry]
    let s = section("chemistry")?;
    let d = ReactionParams::default();
    if !s.present() {
        log::info!(
            "{origin}: no [chemistry] section, using lambda = {} * exp(-{} / theta), u_e = {}, rate exponent {}",
            d.lambda0, d.act, d.u_e, d.rate_exponent
        );
    }
    let reaction = ReactionParams {
        lambda0: s.number_or("lambda0", d.lambda0)?,
        act: s.number_or("activation", d.act)?,
        u_e: s.number_or("u_e", d.u_e)?,
        rate_exponent: s.number_or("rate_exponent", d.rate_exponent)?,
    };
    if let Err((field, message)) = reaction.validate() {
        return Err(s.error_at(field, message));
    }
    let scheme = match s.text("scheme")? {
        None => ReactionScheme::default(),
        Some(("explicit_euler", _)) => ReactionScheme::ExplicitEuler,
        Some(("heun", _)) => ReactionScheme::Heun,
        Some((other, span)) => {
            return Err(src.error(&span, "chemistry.scheme", format!("unknown scheme '{other}'; use explicit_euler or heun")))
        }
    };
    s.finish()?;

    // [flow]
    let s = section("flow")?;
    let flow = match s.text("mode")? {
        None | Some(("darcy", _)) => FlowSpec::Darcy,
        Some(("uniform", _)) => {
            let v = s.numbers("velocity")?.ok_or_else(|| s.error_at("velocity", "missing value"))?;
            let velocity = match v.as_slice() {
                [vx] => [*vx, 0.0],
                [vx, vy] => [*vx, *vy],
                _ => return Err(s.error_at("velocity", "expected [vx] or [vx, vy]")),
            };
            FlowSpec::Uniform { velocity }
        }
        Some(("divergent", _)) => {
            let speed = s.number("speed")?.ok_or_else(|| s.error_at("speed", "missing value"))?;
            if !(speed > 0.0) {
                return Err(s.error_at("speed", "must be positive"));
            }
            FlowSpec::Divergent {
                speed,
                center: s.number_or("center", 0.5)?,
                injection_u: s.number_or("injection_u", 0.0)?,
                injection_theta: s.number_or("injection_theta", 1.0)?,
            }
        }
        Some((other, span)) => {
            return Err(src.error(&span, "flow.mode", format!("unknown mode '{other}'; use darcy, uniform or divergent")))
        }
    };
    s.finish()?;
    let prescribed = !matches!(flow, FlowSpec::Darcy);
    if prescribed && !fractures.is_empty() {
        return Err(Error::Config(format!("{origin}: prescribed flow needs a fracture-free domain")));
    }
    if matches!(flow, FlowSpec::Divergent { .. }) && !matches!(domain, DomainSpec::Interval { .. }) {
        return Err(Error::Config(format!("{origin}: divergent flow is defined on intervals only")));
    }

    // [bc.NAME]
    let mut boundary = Vec::new();
    if let Some(v) = root.get("bc") {
        let DeValue::Table(table) = v.get_ref() else {
            return Err(src.error(&v.span(), "bc", "expected [bc.NAME] sections"));
        };
        for (key, value) in table.iter() {
            let tag = key.get_ref().to_string();
            let s = Section::new(&src, format!("bc.{tag}"), Some(value))?;
            let entry = BoundaryEntry {
                pressure: s.condition("pressure")?,
                theta: s.condition("theta")?,
                solute: s.condition("solute")?,
                tag,
            };
            s.finish()?;
            boundary.push(entry);
        }
    }
    if !prescribed && !boundary.iter().any(|b| b.pressure.kind == BcKind::Essential) {
        return Err(Error::WellPosedness(format!("{origin}: Darcy flow needs a [bc.NAME] with an essential pressure")));
    }

    // [initial]
    let s = section("initial")?;
    let u = s.number_or("u", 0.0)?;
    let w = s.number_or("w", 0.0)?;
    let region = match s.numbers("region")? {
        None => None,
        Some(v) => match v.as_slice() {
            [x0, x1] if x0 < x1 => Some(Rect { x0: *x0, x1: *x1, y0: f64::NEG_INFINITY, y1: f64::INFINITY }),
            [x0, x1, y0, y1] if x0 < x1 && y0 < y1 => Some(Rect { x0: *x0, x1: *x1, y0: *y0, y1: *y1 }),
            _ => return Err(s.error_at("region", "expected [x0, x1] or [x0, x1, y0, y1] with increasing bounds")),
        },
    };
    let initial = InitialSpec {
        theta: s.number_or("theta", 1.0)?,
        u,
        w,
        porosity: s.number_or("porosity", params.phi0)?,
        aperture: s.number_or("aperture", params.epsgamma0)?,
        fracture_u: s.number("fracture_u")?.unwrap_or(u),
        fracture_w: s.number("fracture_w")?.unwrap_or(w),
        u_in_region: s.number("u_in_region")?,
        w_in_region: s.number("w_in_region")?,
        fracture_w_in_region: s.number("fracture_w_in_region")?,
        region,
    };
    if !(initial.theta > 0.0) {
        return Err(s.error_at("theta", "temperature must be positive"));
    }
    for key in ["u", "w", "fracture_u", "fracture_w", "u_in_region", "w_in_region", "fracture_w_in_region"] {
        if let Some(x) = s.number(key)? {
            if !(x >= 0.0) {
                return Err(s.error_at(key, "concentrations must be non-negative"));
            }
        }
    }
    if !(initial.porosity > 0.0 && initial.porosity <= 1.0) {
        return Err(s.error_at("porosity", "must lie in (0, 1]"));
    }
    if !(initial.aperture > 0.0) {
        return Err(s.error_at("aperture", "must be positive"));
    }
    let regional = initial.u_in_region.is_some() || initial.w_in_region.is_some() || initial.fracture_w_in_region.is_some();
    if regional && region.is_none() {
        return Err(s.error_at("region", "values *_in_region need a region"));
    }
    s.finish()?;

    // [time]
    let s = section("time")?;
    if !s.present() {
        return Err(missing("time"));
    }
    let end = s.number("end")?.ok_or_else(|| s.error_at("end", "missing value"))?;
    let steps = s.required_count("steps")?;
    let time = TimeGrid::new(end, steps).map_err(|e| s.error_at(if steps == 0 { "steps" } else { "end" }, e.to_string()))?;
    s.finish()?;

    // [output]
    let s = section("output")?;
    if !s.present() {
        log::info!("{origin}: no [output] section, snapshots every step into ./output");
    }
    let output = OutputSpec {
        every: s.count("every")?.unwrap_or(1),
        dir: PathBuf::from(s.text("dir")?.map_or("output", |(d, _)| d)),
        vtk: s.flag("vtk")?.unwrap_or(true),
    };
    s.finish()?;

    Ok(ScenarioConfig {
        name,
        unitless,
        reference,
        domain,
        fractures,
        params,
        reaction,
        scheme,
        flow,
        boundary,
        initial,
        time,
        output,
    })
}

/// Renders a config in the file format; parsing the result gives the
/// config back.
pub fn write_config(config: &ScenarioConfig) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let c = config;
    let _ = writeln!(out, "[scenario]\nname = \"{}\"\nunitless = {}", c.name, c.unitless);
    if !c.reference.is_empty() {
        let _ = writeln!(out, "reference = {:?}", c.reference);
    }
    out.push_str("\n[domain]\n");
    match &c.domain {
        DomainSpec::Interval { length, cells } => {
            let _ = writeln!(out, "kind = \"interval\"\nlength = {length:?}\ncells = {cells}");
        }
        DomainSpec::Structured { nx, ny, rect } => {
            let _ = writeln!(
                out,
                "kind = \"structured\"\nnx = {nx}\nny = {ny}\nx = [{:?}, {:?}]\ny = [{:?}, {:?}]",
                rect.x0, rect.x1, rect.y0, rect.y1
            );
        }
        DomainSpec::File(p) => {
            let _ = writeln!(out, "kind = \"file\"\npath = {:?}", p.display().to_string());
        }
    }
    for (k, f) in c.fractures.iter().enumerate() {
        let pts: Vec<String> = f.points.iter().map(|p| format!("[{:?}, {:?}]", p[0], p[1])).collect();
        let _ = writeln!(out, "\n[fracture.{k}]\npoints = [{}]\nstaircase = {}", pts.join(", "), f.staircase);
    }
    let p = &c.params;
    out.push_str("\n[params]\n");
    for (key, v) in [
        ("mu", p.mu),
        ("k0", p.k0),
        ("phi0", p.phi0),
        ("kgamma0", p.kgamma0),
        ("kappagamma0", p.kappagamma0),
        ("epsgamma0", p.epsgamma0),
        ("kappaiota0", p.kappaiota0),
        ("epsiota0", p.epsiota0),
        ("eta_omega", p.eta_omega),
        ("eta_gamma", p.eta_gamma),
        ("eta_iota", p.eta_iota),
        ("rhow_cw", p.rhow_cw),
        ("rhos_cs", p.rhos_cs),
        ("lambda_w", p.lambda_w),
        ("lambda_s", p.lambda_s),
        ("d", p.d),
        ("d_gamma", p.d_gamma),
        ("delta_gamma", p.delta_gamma),
    ] {
        let _ = writeln!(out, "{key} = {v:?}");
    }
    let r = &c.reaction;
    let scheme = match c.scheme {
        ReactionScheme::ExplicitEuler => "explicit_euler",
        ReactionScheme::Heun => "heun",
    };
    let _ = writeln!(
        out,
        "\n[chemistry]\nlambda0 = {:?}\nactivation = {:?}\nu_e = {:?}\nrate_exponent = {:?}\nscheme = \"{scheme}\"",
        r.lambda0, r.act, r.u_e, r.rate_exponent
    );
    out.push_str("\n[flow]\n");
    match &c.flow {
        FlowSpec::Darcy => out.push_str("mode = \"darcy\"\n"),
        FlowSpec::Uniform { velocity } => {
            let _ = writeln!(out, "mode = \"uniform\"\nvelocity = [{:?}, {:?}]", velocity[0], velocity[1]);
        }
        FlowSpec::Divergent { speed, center, injection_u, injection_theta } => {
            let _ = writeln!(
                out,
                "mode = \"divergent\"\nspeed = {speed:?}\ncenter = {center:?}\ninjection_u = {injection_u:?}\ninjection_theta = {injection_theta:?}"
            );
        }
    }
    for b in &c.boundary {
        let _ = writeln!(
            out,
            "\n[bc.{}]\npressure = \"{}\"\ntheta = \"{}\"\nsolute = \"{}\"",
            b.tag,
            format_condition(&b.pressure),
            format_condition(&b.theta),
            format_condition(&b.solute)
        );
    }
    let i = &c.initial;
    let _ = writeln!(
        out,
        "\n[initial]\ntheta = {:?}\nu = {:?}\nw = {:?}\nporosity = {:?}\naperture = {:?}\nfracture_u = {:?}\nfracture_w = {:?}",
        i.theta, i.u, i.w, i.porosity, i.aperture, i.fracture_u, i.fracture_w
    );
    if let Some(r) = i.region {
        if r.y0.is_finite() {
            let _ = writeln!(out, "region = [{:?}, {:?}, {:?}, {:?}]", r.x0, r.x1, r.y0, r.y1);
        } else {
            let _ = writeln!(out, "region = [{:?}, {:?}]", r.x0, r.x1);
        }
    }
    for (key, v) in [
        ("u_in_region", i.u_in_region),
        ("w_in_region", i.w_in_region),
        ("fracture_w_in_region", i.fracture_w_in_region),
    ] {
        if let Some(v) = v {
            let _ = writeln!(out, "{key} = {v:?}");
        }
    }
    let _ = writeln!(out, "\n[time]\nend = {:?}\nsteps = {}", c.time.end, c.time.steps);
    let _ = writeln!(
        out,
        "\n[output]\nevery = {}\ndir = {:?}\nvtk = {}",
        c.output.every,
        c.output.dir.display().to_string(),
        c.output.vtk
    );
    out
}

fn inside(rect: &Rect, p: Point) -> bool {
    p[0] >= rect.x0 && p[0] <= rect.x1 && p[1] >= rect.y0 && p[1] <= rect.y1
}

impl ScenarioConfig {
    pub fn build_mesh(&self) -> Result<MixedDimMesh> {
        match &self.domain {
            DomainSpec::Interval { length, cells } => build_interval_mesh(*length, *cells),
            DomainSpec::Structured { nx, ny, rect } => {
                let polylines: Vec<Vec<Point>> = self
                    .fractures
                    .iter()
                    .map(|f| {
                        if !f.staircase {
                            return f.points.clone();
                        }
                        let mut line: Vec<Point> = Vec::new();
                        for pair in f.points.windows(2) {
                            let part = staircase_polyline(pair[0], pair[1], *nx, *ny, *rect);
                            let skip = usize::from(!line.is_empty());
                            line.extend(part.into_iter().skip(skip));
                        }
                        line
                    })
                    .collect();
                build_structured_2d(*nx, *ny, *rect, &polylines)
            }
            DomainSpec::File(path) => {
                if !self.fractures.is_empty() {
                    return Err(Error::Config("mesh files carry their own fractures; drop the [fracture.N] sections".into()));
                }
                load_mesh(path)
            }
        }
    }

    /// Boundary conditions on the mesh; segments without a `[bc.NAME]`
    /// section are closed.
    pub fn boundary_spec(&self, mesh: &MixedDimMesh) -> Result<BoundarySpec> {
        let mut bc = BoundarySpec::sealed(mesh);
        for b in &self.boundary {
            bc.set(&b.tag, b.pressure, b.theta, b.solute).map_err(|_| {
                Error::Config(format!(
                    "[bc.{}] does not name a boundary segment of the mesh (segments: {})",
                    b.tag,
                    mesh.boundary_tags.join(", ")
                ))
            })?;
        }
        for tag in &mesh.boundary_tags {
            if !self.boundary.iter().any(|b| &b.tag == tag) {
                log::info!("{}: segment '{tag}' has no [bc.{tag}], closing it", self.name);
            }
        }
        bc.validate(mesh, matches!(self.flow, FlowSpec::Darcy))?;
        Ok(bc)
    }

    fn prescribed_flux(&self, mesh: &MixedDimMesh, topo: &FluxTopology) -> Option<(Vec<f64>, Option<FluidSources>)> {
        let velocity = |x: f64| -> Point {
            match &self.flow {
                FlowSpec::Darcy => unreachable!(),
                FlowSpec::Uniform { velocity } => *velocity,
                FlowSpec::Divergent { speed, center, .. } => {
                    let tol = 1e-9 * mesh.diameter();
                    if (x - center).abs() <= tol {
                        [0.0, 0.0]
                    } else {
                        [speed * (x - center).signum(), 0.0]
                    }
                }
            }
        };
        if matches!(self.flow, FlowSpec::Darcy) {
            return None;
        }
        let flux: Vec<f64> = topo
            .faces
            .iter()
            .map(|f| match f.kind {
                FluxKind::Interior { face } | FluxKind::Boundary { face, .. } => {
                    let bf = &mesh.faces[face];
                    let v = velocity(bf.centroid[0]);
                    (v[0] * bf.normal[0] + v[1] * bf.normal[1]) * bf.area
                }
                _ => 0.0,
            })
            .collect();
        let sources = match self.flow {
            FlowSpec::Divergent { injection_u, injection_theta, .. } => {
                Some(FluidSources::from_flux(topo, &flux, injection_u, injection_theta))
            }
            _ => None,
        };
        Some((flux, sources))
    }

    fn initial_state(&self, topo: &FluxTopology) -> Result<FieldState> {
        let n = topo.num_dofs();
        let init = &self.initial;
        let theta = vec![init.theta; n];
        let mut u = vec![0.0; n];
        let mut w = vec![0.0; n];
        let mut pore = vec![0.0; n];
        for k in 0..n {
            let in_region = init.region.as_ref().is_some_and(|r| inside(r, topo.centroid[k]));
            match topo.layout.subdomain_of(k) {
                Subdomain::Bulk => {
                    u[k] = init.u;
                    w[k] = init.w;
                    pore[k] = init.porosity;
                    if in_region {
                        u[k] = init.u_in_region.unwrap_or(u[k]);
                        w[k] = init.w_in_region.unwrap_or(w[k]);
                    }
                }
                sub => {
                    u[k] = init.fracture_u;
                    w[k] = init.fracture_w;
                    pore[k] = match sub {
                        Subdomain::Intersection => init.aperture * self.params.epsiota0 / self.params.epsgamma0,
                        _ => init.aperture,
                    };
                    if in_region {
                        u[k] = init.u_in_region.unwrap_or(u[k]);
                        w[k] = init.fracture_w_in_region.or(init.w_in_region).unwrap_or(w[k]);
                    }
                }
            }
        }
        FieldState::new(topo, theta, u, w, pore)
    }

    /// Mesh, model, initial state and time grid.
    pub fn build(&self) -> Result<Scenario> {
        let mesh = self.build_mesh()?;
        if !self.fractures.is_empty() && mesh.fractures.len() != self.fractures.len() {
            return Err(Error::Logic("fracture count changed while meshing".into()));
        }
        let topo = FluxTopology::new(&mesh)?;
        let bc = self.boundary_spec(&mesh)?;
        let flow = match self.prescribed_flux(&mesh, &topo) {
            None => FlowModel::Darcy,
            Some((flux, sources)) => FlowModel::Prescribed { flux, sources },
        };
        let mut initial = self.initial_state(&topo)?;
        if let FlowModel::Prescribed { flux, .. } = &flow {
            initial.flux = flux.clone();
        }
        Ok(Scenario {
            name: self.name.clone(),
            model: SimulationModel {
                topo,
                params: self.params.clone(),
                reaction: self.reaction,
                scheme: self.scheme,
                bc,
                flow,
            },
            mesh,
            initial,
            grid: self.time,
            output: self.output.clone(),
        })
    }

    /// Same scenario with another step count over the same end time.
    pub fn with_steps(&self, steps: usize) -> Result<Self> {
        let mut out = self.clone();
        out.time = TimeGrid::new(self.time.end, steps)?;
        Ok(out)
    }
}

/// One built-in scenario.
#[derive(Debug, Clone, Copy)]
pub struct ScenarioEntry {
    pub name: &'static str,
    /// The published setup this scenario mirrors.
    pub mirrors: &'static str,
    pub text: &'static str,
}

impl ScenarioEntry {
    pub fn config(&self) -> Result<ScenarioConfig> {
        parse_config_str(self.text, &format!("<built-in {}>", self.name), self.name)
    }
}

macro_rules! builtin {
    ($name:literal, $mirrors:literal) => {
        ScenarioEntry {
            name: $name,
            mirrors: $mirrors,
            text: include_str!(concat!("../scenarios/", $name, ".ini")),
        }
    };
}

const REGISTRY: [ScenarioEntry; 8] = [
    builtin!("test1d_pulse", "1D pulse of supersaturated solute, precipitation and wash-out, mass audit"),
    builtin!("test1d_splitting", "1D splitting-error study: constant porosity, given velocity, linear rate"),
    builtin!("test1d_point_source_precip", "1D point injection of supersaturated water into clean rock"),
    builtin!("test1d_point_source_dissolve", "1D point injection of clean water into rock holding precipitate"),
    builtin!("single_fracture_injection", "single fracture, hot solute injected from the bottom clogs the fracture"),
    builtin!("single_fracture_opening", "single fracture, clean hot water dissolves a precipitate block"),
    builtin!("multi_fracture_injection", "ten-fracture network (axis-aligned), solute injection and clogging"),
    builtin!("multi_fracture_opening", "ten-fracture network (axis-aligned), precipitate-filled fractures reopen"),
];

pub fn list_scenarios() -> &'static [ScenarioEntry] {
    &REGISTRY
}

pub fn find_scenario(name: &str) -> Option<&'static ScenarioEntry> {
    REGISTRY.iter().find(|e| e.name == name)
}

/// Reactive speed over advective speed, `L * lambda * phi0 / Q`, of a 1D
/// scenario with prescribed velocity, at the initial temperature.
pub fn scenario_damkohler(config: &ScenarioConfig) -> Result<f64> {
    let (length, speed) = match (&config.domain, &config.flow) {
        (DomainSpec::Interval { length, .. }, FlowSpec::Uniform { velocity }) => (*length, velocity[0].abs()),
        (DomainSpec::Interval { length, .. }, FlowSpec::Divergent { speed, .. }) => (*length, *speed),
        _ => return Err(Error::Config("Damkohler number needs a 1D scenario with prescribed velocity".into())),
    };
    let lambda = crate::chemistry::lambda_minus(config.initial.theta, &config.reaction)?;
    Ok(crate::constitutive::damkohler_number(length, lambda, config.params.phi0, speed))
}

/// Copy of a 1D prescribed-velocity scenario whose velocity is rescaled to
/// reach the Damkohler number `da` at unchanged rate.
pub fn with_damkohler_by_velocity(config: &ScenarioConfig, da: f64) -> Result<ScenarioConfig> {
    if !(da > 0.0) {
        return Err(Error::Config(format!("Damkohler number must be positive, got {da}")));
    }
    let factor = scenario_damkohler(config)? / da;
    let mut out = config.clone();
    match &mut out.flow {
        FlowSpec::Uniform { velocity } => {
            velocity[0] *= factor;
            velocity[1] *= factor;
        }
        FlowSpec::Divergent { speed, .. } => *speed *= factor,
        FlowSpec::Darcy => unreachable!(),
    }
    Ok(out)
}

/// Copy of a 1D prescribed-velocity scenario whose rate prefactor is
/// rescaled to reach the Damkohler number `da` at unchanged velocity.
pub fn with_damkohler_by_rate(config: &ScenarioConfig, da: f64) -> Result<ScenarioConfig> {
    if !(da > 0.0) {
        return Err(Error::Config(format!("Damkohler number must be positive, got {da}")));
    }
    let factor = da / scenario_damkohler(config)?;
    let mut out = config.clone();
    out.reaction.lambda0 *= factor;
    Ok(out)
}

/// Courant number `|Q| dt / dx` of a uniform 1D scenario.
pub fn courant_number(config: &ScenarioConfig) -> Result<f64> {
    match (&config.domain, &config.flow) {
        (DomainSpec::Interval { length, cells }, FlowSpec::Uniform { velocity }) => {
            Ok(velocity[0].abs() * config.time.dt() / (length / *cells as f64))
        }
        (DomainSpec::Interval { length, cells }, FlowSpec::Divergent { speed, .. }) => {
            Ok(speed * config.time.dt() / (length / *cells as f64))
        }
        _ => Err(Error::Config("Courant number needs a 1D scenario with prescribed velocity".into())),
    }
}

/// Splitting errors of one Damkohler number.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyColumn {
    pub damkohler: f64,
    /// Courant number at the largest step count.
    pub courant: f64,
    pub rows: Vec<SplittingErrorRow>,
    pub order: f64,
}

/// Splitting error against the monolithic reference for every Damkohler
/// number (reached by rescaling the velocity) and step count.
pub fn damkohler_splitting_study(
    base: &ScenarioConfig,
    damkohler: &[f64],
    step_counts: &[usize],
) -> Result<Vec<StudyColumn>> {
    let most = *step_counts
        .iter()
        .max()
        .ok_or_else(|| Error::Config("the study needs at least one step count".into()))?;
    damkohler
        .iter()
        .map(|&da| {
            let config = with_damkohler_by_velocity(base, da)?;
            let courant = courant_number(&config.with_steps(most)?)?;
            let scenario = config.build()?;
            let rows = splitting_error_study(&scenario.model, &scenario.initial, config.time.end, step_counts)?;
            let order = convergence_order(&rows);
            Ok(StudyColumn { damkohler: da, courant, rows, order })
        })
        .collect()
}
