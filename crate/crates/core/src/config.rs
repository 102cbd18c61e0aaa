//! Sectioned `key = value` configuration files.
//!
//! ```text
//! # comment
//! [thermal]
//! h = 10
//! [loop.inner]
//! resistance = 1500
//! ```
//!
//! Values are SI unless the key carries a unit suffix (`_mm`, `_um`, `_ppm`,
//! `_gpa`). A document can be layered over another (a fitted-parameter
//! fragment over a scenario file); later entries win.

use std::collections::HashSet;

use thiserror::Error;

use crate::control::{alternating_schedule, cyclic_schedule, ForcedReturnPolicy, PowerSchedule};
use crate::engine::{Drive, ScenarioConfig};
use crate::gripper::{Context, GripperSpec, ObjectKind, ObjectSpec};
use crate::model::{ActuatorSpec, HeaterLoopSpec, LoopId, Material, Rect, Side, MM, PPM, UM};
use crate::thermal::Scheme;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: {key} = {value}: {message}")]
    Value {
        line: usize,
        key: String,
        value: String,
        message: String,
    },
    #[error("line {line}: {key} = {value} is out of range ({message})")]
    Range {
        line: usize,
        key: String,
        value: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// 1-based source line; 0 for entries set programmatically.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub line: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigDocument {
    pub sections: Vec<Section>,
}

fn is_ident(s: &str, extra: &[char]) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || extra.contains(&c))
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = ConfigDocument::default();
        let mut seen: HashSet<(String, String)> = HashSet::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line, message };
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax("section header is missing `]`".into()))?
                    .trim();
                if !is_ident(name, &['.']) {
                    return Err(syntax(format!("invalid section name `{name}`")));
                }
                doc.sections.push(Section {
                    name: name.into(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !is_ident(key, &[]) {
                return Err(syntax(format!("invalid key `{key}`")));
            }
            if value.is_empty() {
                return Err(syntax(format!("missing value for `{key}`")));
            }
            let section = doc
                .sections
                .last_mut()
                .ok_or_else(|| syntax(format!("`{key}` appears before any section header")))?;
            if !seen.insert((section.name.clone(), key.into())) {
                return Err(syntax(format!(
                    "duplicate key `{key}` in [{}]",
                    section.name
                )));
            }
            section.entries.push(Entry {
                key: key.into(),
                value: value.into(),
                line,
            });
        }
        Ok(doc)
    }

    /// Appends `other`, whose entries then take precedence.
    pub fn layer(&mut self, other: ConfigDocument) {
        self.sections.extend(other.sections);
    }

    /// Sets one value, overriding any earlier setting.
    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        self.sections.push(Section {
            name: section.into(),
            line: 0,
            entries: vec![Entry {
                key: key.into(),
                value: value.into(),
                line: 0,
            }],
        });
    }

    /// Entries of every section called `name`, in document order.
    fn entries(&self, name: &str) -> Vec<&Entry> {
        self.sections
            .iter()
            .filter(|s| s.name == name)
            .flat_map(|s| &s.entries)
            .collect()
    }

    fn has(&self, name: &str) -> bool {
        self.sections.iter().any(|s| s.name == name)
    }
}

/// A parameter swept by the `sweep` command.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub section: String,
    pub key: String,
    pub values: Vec<f64>,
}

/// Everything a config file can describe.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub gripper: GripperSpec,
    pub object: Option<ObjectSpec>,
    pub sweep: Option<Sweep>,
    /// Unknown keys skipped in lenient mode.
    pub warnings: Vec<String>,
}

pub const MATERIAL_NAMES: [&str; 4] = ["paper", "bopp", "adhesive", "cnt"];
const SECTIONS: [&str; 8] = [
    "actuator",
    "thermal",
    "mechanics",
    "schedule",
    "return",
    "gripper",
    "object",
    "run",
];

fn value_err(e: &Entry, message: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        line: e.line,
        key: e.key.clone(),
        value: e.value.clone(),
        message: message.into(),
    }
}

fn range_err(e: &Entry, message: impl Into<String>) -> ConfigError {
    ConfigError::Range {
        line: e.line,
        key: e.key.clone(),
        value: e.value.clone(),
        message: message.into(),
    }
}

fn num(e: &Entry) -> Result<f64, ConfigError> {
    let v: f64 = e
        .value
        .parse()
        .map_err(|_| value_err(e, "expected a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(value_err(e, "expected a finite number"))
    }
}

fn positive(e: &Entry) -> Result<f64, ConfigError> {
    let v = num(e)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(range_err(e, "must be positive"))
    }
}

fn non_negative(e: &Entry) -> Result<f64, ConfigError> {
    let v = num(e)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(range_err(e, "must be non-negative"))
    }
}

fn within(e: &Entry, lo: f64, hi: f64) -> Result<f64, ConfigError> {
    let v = num(e)?;
    if (lo..=hi).contains(&v) {
        Ok(v)
    } else {
        Err(range_err(e, format!("must lie in [{lo}, {hi}]")))
    }
}

fn count(e: &Entry) -> Result<usize, ConfigError> {
    e.value
        .parse()
        .map_err(|_| value_err(e, "expected a non-negative integer"))
}

fn flag(e: &Entry) -> Result<bool, ConfigError> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(value_err(e, "expected true or false")),
    }
}

fn parsed<T: std::str::FromStr<Err = String>>(e: &Entry) -> Result<T, ConfigError> {
    e.value.parse().map_err(|m: String| value_err(e, m))
}

fn list(e: &Entry) -> Result<Vec<f64>, ConfigError> {
    e.value
        .split(',')
        .map(|s| {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| value_err(e, format!("`{}` is not a number", s.trim())))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(value_err(e, "expected finite numbers"))
            }
        })
        .collect()
}

/// Walks the entries of one section, reporting unknown keys (an error in
/// strict mode, a warning otherwise).
struct Reader<'a> {
    strict: bool,
    warnings: &'a mut Vec<String>,
}

impl Reader<'_> {
    fn each(
        &mut self,
        doc: &ConfigDocument,
        section: &str,
        mut apply: impl FnMut(&Entry) -> Result<bool, ConfigError>,
    ) -> Result<(), ConfigError> {
        for e in doc.entries(section) {
            if !apply(e)? {
                if self.strict {
                    return Err(ConfigError::UnknownKey {
                        line: e.line,
                        section: section.into(),
                        key: e.key.clone(),
                    });
                }
                self.warnings.push(format!(
                    "line {}: ignoring unknown key `{}` in [{section}]",
                    e.line, e.key
                ));
            }
        }
        Ok(())
    }
}

fn check_sections(
    doc: &ConfigDocument,
    strict: bool,
    warnings: &mut Vec<String>,
) -> Result<(), ConfigError> {
    for s in &doc.sections {
        let known = SECTIONS.contains(&s.name.as_str())
            || s.name
                .strip_prefix("material.")
                .is_some_and(|m| MATERIAL_NAMES.contains(&m))
            || s.name
                .strip_prefix("loop.")
                .is_some_and(|l| l.parse::<LoopId>().is_ok());
        if !known {
            if strict {
                return Err(ConfigError::UnknownSection {
                    line: s.line,
                    name: s.name.clone(),
                });
            }
            warnings.push(format!(
                "line {}: ignoring unknown section [{}]",
                s.line, s.name
            ));
        }
    }
    Ok(())
}

fn resolve_actuator(doc: &ConfigDocument, rd: &mut Reader) -> Result<ActuatorSpec, ConfigError> {
    let mut length = 100.0 * MM;
    let mut width = 35.0 * MM;
    let mut bopp = 51.0 * UM;
    let mut cells = None;
    let mut conventional = false;
    rd.each(doc, "actuator", |e| {
        match e.key.as_str() {
            "length_mm" => length = positive(e)? * MM,
            "width_mm" => width = positive(e)? * MM,
            "bopp_thickness_um" => bopp = within(e, 1.0, 1000.0)? * UM,
            "cells" => {
                let n = count(e)?;
                if n < crate::model::MIN_CELLS {
                    return Err(range_err(
                        e,
                        format!("at least {} cells", crate::model::MIN_CELLS),
                    ));
                }
                cells = Some(n);
            }
            "device" => {
                conventional = match e.value.as_str() {
                    "meta" => false,
                    "conventional" => true,
                    _ => return Err(value_err(e, "expected meta or conventional")),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    let mut spec = ActuatorSpec::meta_sized(length, width, bopp);
    if let Some(n) = cells {
        spec.cells = n;
    }

    for id in [LoopId::Outer, LoopId::Inner] {
        let name = format!("loop.{id}");
        let mut enabled = true;
        let mut outline: Option<Rect> = None;
        let mut track: Option<f64> = None;
        let mut side: Option<Side> = None;
        let mut resistance: Option<f64> = None;
        rd.each(doc, &name, |e| {
            match e.key.as_str() {
                "enabled" => enabled = flag(e)?,
                "side" => side = Some(parsed(e)?),
                "resistance" => resistance = Some(positive(e)?),
                "track_width_mm" => track = Some(positive(e)? * MM),
                "outline_mm" => {
                    let v = list(e)?;
                    if v.len() != 4 || !(v[1] > v[0] && v[3] > v[2]) {
                        return Err(value_err(
                            e,
                            "expected x0, x1, y0, y1 with x1 > x0 and y1 > y0",
                        ));
                    }
                    outline = Some(Rect::new(v[0] * MM, v[1] * MM, v[2] * MM, v[3] * MM));
                }
                _ => return Ok(false),
            }
            Ok(true)
        })?;
        let Some(pos) = spec.loops.iter().position(|l| l.id == id) else {
            continue;
        };
        if !enabled {
            spec.loops.remove(pos);
            continue;
        }
        let l = &mut spec.loops[pos];
        if outline.is_some() || track.is_some() {
            let o = outline
                .or_else(|| l.outline())
                .unwrap_or(Rect::new(0.0, length, 0.0, width));
            let w = track.unwrap_or(l.width);
            let rebuilt = HeaterLoopSpec::frame(id, l.side, o, w, Material::bopp(bopp));
            l.footprint = rebuilt.footprint;
            l.width = w;
        }
        if let Some(s) = side {
            l.side = s;
        }
        if let Some(r) = resistance {
            l.resistance = r;
        }
    }

    for mat in MATERIAL_NAMES {
        let mut edits: Vec<(fn(&mut Material, f64), f64)> = Vec::new();
        rd.each(doc, &format!("material.{mat}"), |e| {
            let (v, set): (f64, fn(&mut Material, f64)) = match e.key.as_str() {
                "conductivity" => (positive(e)?, |m, v| m.conductivity = v),
                "density" => (positive(e)?, |m, v| m.density = v),
                "specific_heat" => (positive(e)?, |m, v| m.specific_heat = v),
                "youngs_modulus_gpa" => (positive(e)?, |m, v| m.youngs_modulus = v * 1e9),
                "alpha_eff_ppm" => (within(e, -1e4, 1e4)?, |m, v| m.alpha_eff = v * PPM),
                "alpha_thermal_ppm" => (within(e, -1e4, 1e4)?, |m, v| m.alpha_thermal = v * PPM),
                "thickness_um" => (positive(e)?, |m, v| m.thickness = v * UM),
                _ => return Ok(false),
            };
            edits.push((set, v));
            Ok(true)
        })?;
        for (set, v) in edits {
            if spec.substrate.name == mat {
                set(&mut spec.substrate, v);
            }
            for l in &mut spec.loops {
                for m in l.layers.iter_mut().filter(|m| m.name == mat) {
                    set(m, v);
                }
            }
        }
    }

    if conventional {
        spec = ActuatorSpec::conventional_from(&spec);
    }
    Ok(spec)
}

fn resolve_drive(doc: &ConfigDocument, rd: &mut Reader) -> Result<Drive, ConfigError> {
    let mut kind = "none".to_string();
    let mut kind_line = 0;
    let mut id = LoopId::Outer;
    let mut power = 0.75;
    let (mut t_start, mut t_end) = (0.0, None);
    let (mut t_on, mut t_off, mut cycles) = (60.0, 60.0, 5usize);
    let (mut t_first, mut t_second) = (50.0, 30.0);
    rd.each(doc, "schedule", |e| {
        match e.key.as_str() {
            "kind" => {
                if !["none", "step", "cyclic", "alternating"].contains(&e.value.as_str()) {
                    return Err(value_err(e, "expected none, step, cyclic or alternating"));
                }
                kind = e.value.clone();
                kind_line = e.line;
            }
            "loop" => id = parsed(e)?,
            "power" => power = non_negative(e)?,
            "t_start" => t_start = non_negative(e)?,
            "t_end" => t_end = Some(positive(e)?),
            "t_on" => t_on = positive(e)?,
            "t_off" => t_off = positive(e)?,
            "cycles" => cycles = count(e)?,
            "t_first" => t_first = positive(e)?,
            "t_second" => t_second = positive(e)?,
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    let schedule_err = |m: String| ConfigError::Syntax {
        line: kind_line,
        message: format!("[schedule]: {m}"),
    };
    let schedule = match kind.as_str() {
        "step" => {
            let end = t_end.ok_or_else(|| schedule_err("a step needs t_end".into()))?;
            PowerSchedule::step(id, power, t_start, end)
        }
        "cyclic" => cyclic_schedule(id, power, t_on, t_off, cycles),
        "alternating" => alternating_schedule(id, power, t_first, t_second, cycles),
        _ => Ok(PowerSchedule::default()),
    }
    .map_err(|e| schedule_err(e.to_string()))?;

    if !doc.has("return") {
        return Ok(Drive::Schedule(schedule));
    }
    if kind != "none" {
        return Err(ConfigError::Invalid(
            "[schedule] and [return] both set the loop powers; use one".into(),
        ));
    }
    let mut p = ForcedReturnPolicy::default();
    rd.each(doc, "return", |e| {
        match e.key.as_str() {
            "drive_loop" => p.drive_loop = parsed(e)?,
            "drive_power" => p.drive_power = non_negative(e)?,
            "return_power" => p.return_power = non_negative(e)?,
            "t_act" => p.t_act = non_negative(e)?,
            "tolerance_mm" => p.tolerance = positive(e)? * MM,
            "max_duration" => p.max_duration = non_negative(e)?,
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    Ok(Drive::ForcedReturn(p))
}

fn resolve_object(
    doc: &ConfigDocument,
    rd: &mut Reader,
) -> Result<Option<ObjectSpec>, ConfigError> {
    if !doc.has("object") {
        return Ok(None);
    }
    let mut kind = ObjectKind::Solid;
    let mut width = None;
    let mut cavity = None;
    let mut tube = None;
    rd.each(doc, "object", |e| {
        match e.key.as_str() {
            "kind" => {
                kind = match e.value.as_str() {
                    "solid" => ObjectKind::Solid,
                    "hollow" => ObjectKind::Hollow,
                    _ => return Err(value_err(e, "expected solid or hollow")),
                }
            }
            "outer_width_mm" => width = Some(positive(e)?),
            "cavity_width_mm" => cavity = Some(positive(e)?),
            "tube_diameter_mm" => tube = Some(positive(e)?),
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    let object = ObjectSpec {
        kind,
        outer_width: width
            .ok_or_else(|| ConfigError::Invalid("[object] needs outer_width_mm".into()))?,
        cavity_width: cavity,
        context: tube.map_or(Context::Free, Context::Tube),
    };
    object
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(Some(object))
}

/// Resolves a document against the built-in defaults.
pub fn resolve(doc: &ConfigDocument, strict: bool) -> Result<RunConfig, ConfigError> {
    let mut warnings = Vec::new();
    check_sections(doc, strict, &mut warnings)?;
    let mut rd = Reader {
        strict,
        warnings: &mut warnings,
    };
    let mut cfg = ScenarioConfig {
        actuator: resolve_actuator(doc, &mut rd)?,
        drive: resolve_drive(doc, &mut rd)?,
        ..ScenarioConfig::default()
    };

    rd.each(doc, "thermal", |e| {
        match e.key.as_str() {
            "h" => cfg.thermal.h = within(e, 1e-3, 1e4)?,
            "dt" => cfg.thermal.dt = positive(e)?,
            "scheme" => {
                cfg.thermal.scheme = match e.value.as_str() {
                    "implicit" => Scheme::Implicit,
                    "explicit" => Scheme::Explicit,
                    _ => return Err(value_err(e, "expected implicit or explicit")),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    rd.each(doc, "mechanics", |e| {
        match e.key.as_str() {
            "tau_mech" => cfg.mech.tau_mech = non_negative(e)?,
            "t_ref" => cfg.mech.t_ref = within(e, -100.0, 200.0)?,
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    let mut ambient = None;
    let mut sweep_key: Option<(String, String)> = None;
    let mut sweep_values: Option<Vec<f64>> = None;
    rd.each(doc, "run", |e| {
        match e.key.as_str() {
            "name" => {
                if !is_ident(&e.value, &['-', '.']) {
                    return Err(value_err(
                        e,
                        "use lowercase letters, digits, `_`, `-` or `.`",
                    ));
                }
                cfg.name = e.value.clone();
            }
            "duration" => cfg.duration = positive(e)?,
            "stride" => {
                cfg.stride = count(e)?;
                if cfg.stride == 0 {
                    return Err(range_err(e, "must be at least 1"));
                }
            }
            "ambient" => ambient = Some(within(e, -100.0, 200.0)?),
            "sweep_key" => {
                let (s, k) = e
                    .value
                    .rsplit_once('.')
                    .ok_or_else(|| value_err(e, "expected section.key"))?;
                sweep_key = Some((s.into(), k.into()));
            }
            "sweep_values" => {
                let v = list(e)?;
                if v.is_empty() {
                    return Err(value_err(e, "no values"));
                }
                sweep_values = Some(v);
            }
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    // ambient defaults to the stress-free temperature
    cfg.ambient = ambient.unwrap_or(cfg.mech.t_ref);

    let mut gripper = GripperSpec::default();
    rd.each(doc, "gripper", |e| {
        match e.key.as_str() {
            "separation_mm" => gripper.separation = positive(e)?,
            "mount_a" => gripper.mounts[0] = parsed(e)?,
            "mount_b" => gripper.mounts[1] = parsed(e)?,
            "power" => gripper.power = non_negative(e)?,
            "t_act" => gripper.t_act = positive(e)?,
            _ => return Ok(false),
        }
        Ok(true)
    })?;
    let object = resolve_object(doc, &mut rd)?;

    let sweep = match (sweep_key, sweep_values) {
        (Some((section, key)), Some(values)) => Some(Sweep {
            section,
            key,
            values,
        }),
        (None, None) => None,
        _ => {
            return Err(ConfigError::Invalid(
                "sweep_key and sweep_values must be given together".into(),
            ))
        }
    };

    cfg.validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(RunConfig {
        scenario: cfg,
        gripper,
        object,
        sweep,
        warnings,
    })
}

/// Strictly parses a scenario file over the built-in defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    Ok(resolve(&ConfigDocument::parse(text)?, true)?.scenario)
}
