//! Materials, actuator geometry, heater-loop footprints and the length-wise
//! discretization shared by the thermal and mechanics modules.
//!
//! The plan view (x along the length, y across the width) is reduced to a
//! 1-D profile along x: every heater loop becomes a per-cell width-coverage
//! fraction, and loop power is deposited uniformly per unit footprint area.

use thiserror::Error;

pub const MM: f64 = 1e-3;
pub const UM: f64 = 1e-6;
pub const PPM: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("{field} must be positive (got {value})")]
    NonPositive { field: String, value: f64 },
    #[error("{field} must be finite")]
    NonFinite { field: String },
    #[error("{field} is out of range: {value} not in [{min}, {max}]")]
    OutOfRange {
        field: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("footprint rectangle {index} of loop {loop_name} lies outside the actuator plan")]
    FootprintOutOfBounds { loop_name: String, index: usize },
    #[error("footprint rectangles of the {side} side overlap ({loop_a} #{a} and {loop_b} #{b})")]
    SameSideOverlap {
        side: Side,
        loop_a: String,
        a: usize,
        loop_b: String,
        b: usize,
    },
    #[error("more than one heater loop on the {0} side")]
    DuplicateSide(Side),
    #[error("more than one heater loop with role {0}")]
    DuplicateLoop(LoopId),
    #[error("cell count must be at least {min} (got {got})")]
    TooFewCells { got: usize, min: usize },
}

/// Thermophysical and mechanical property record of one layer material.
///
/// `alpha_eff` is the effective linear expansion coefficient used for the
/// quasi-static strain: thermal expansion plus any moisture-driven
/// contribution folded in (negative for paper, which dries and shrinks when
/// heated). `alpha_thermal` is the purely thermal part; the difference is the
/// hygroscopic part, which responds with a lag.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    /// W m^-1 K^-1
    pub conductivity: f64,
    /// kg m^-3
    pub density: f64,
    /// J kg^-1 K^-1
    pub specific_heat: f64,
    /// Pa
    pub youngs_modulus: f64,
    /// K^-1
    pub alpha_eff: f64,
    /// K^-1
    pub alpha_thermal: f64,
    /// m
    pub thickness: f64,
}

impl Material {
    /// 75 g/m^2 copy paper, 100 um thick.
    pub fn paper() -> Self {
        Material {
            name: "paper".into(),
            conductivity: 0.05,
            density: 750.0,
            specific_heat: 1300.0,
            youngs_modulus: 3.0e9,
            alpha_eff: -30.0 * PPM,
            alpha_thermal: 4.0 * PPM,
            thickness: 100.0 * UM,
        }
    }

    /// Biaxially oriented polypropylene cover strip.
    pub fn bopp(thickness: f64) -> Self {
        Material {
            name: "bopp".into(),
            conductivity: 0.22,
            density: 905.0,
            specific_heat: 1920.0,
            youngs_modulus: 2.0e9,
            alpha_eff: 137.0 * PPM,
            alpha_thermal: 137.0 * PPM,
            thickness,
        }
    }

    /// Tape adhesive between the heater film and the BOPP strip.
    pub fn adhesive() -> Self {
        Material {
            name: "adhesive".into(),
            conductivity: 0.2,
            density: 1000.0,
            specific_heat: 1500.0,
            youngs_modulus: 0.1e9,
            alpha_eff: 100.0 * PPM,
            alpha_thermal: 100.0 * PPM,
            thickness: 16.0 * UM,
        }
    }

    /// Printed carbon-nanotube heater film (generic carbon film constants).
    pub fn heater_film() -> Self {
        Material {
            name: "cnt".into(),
            conductivity: 1.0,
            density: 600.0,
            specific_heat: 800.0,
            youngs_modulus: 1.0e9,
            alpha_eff: 0.0,
            alpha_thermal: 0.0,
            thickness: 10.0 * UM,
        }
    }

    /// Portion of `alpha_eff` that is not thermal expansion.
    pub fn alpha_hygro(&self) -> f64 {
        self.alpha_eff - self.alpha_thermal
    }

    /// rho * cp * t, J m^-2 K^-1.
    pub fn heat_capacity_per_area(&self) -> f64 {
        self.density * self.specific_heat * self.thickness
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let prefix = format!("material.{}", self.name);
        positive(&format!("{prefix}.conductivity"), self.conductivity)?;
        positive(&format!("{prefix}.density"), self.density)?;
        positive(&format!("{prefix}.specific_heat"), self.specific_heat)?;
        positive(&format!("{prefix}.youngs_modulus"), self.youngs_modulus)?;
        positive(&format!("{prefix}.thickness"), self.thickness)?;
        finite(&format!("{prefix}.alpha_eff"), self.alpha_eff)?;
        finite(&format!("{prefix}.alpha_thermal"), self.alpha_thermal)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Top,
    Bottom,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Top => Side::Bottom,
            Side::Bottom => Side::Top,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Top => "top",
            Side::Bottom => "bottom",
        })
    }
}

/// Role of a heater loop. The outer loop encloses the inner one in plan view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoopId {
    Outer,
    Inner,
}

impl LoopId {
    pub fn opposite(self) -> LoopId {
        match self {
            LoopId::Outer => LoopId::Inner,
            LoopId::Inner => LoopId::Outer,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LoopId::Outer => "outer",
            LoopId::Inner => "inner",
        }
    }
}

impl std::fmt::Display for LoopId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "top" => Ok(Side::Top),
            "bottom" => Ok(Side::Bottom),
            other => Err(format!("unknown side `{other}` (expected top or bottom)")),
        }
    }
}

impl std::str::FromStr for LoopId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "outer" => Ok(LoopId::Outer),
            "inner" => Ok(LoopId::Inner),
            other => Err(format!("unknown loop `{other}` (expected outer or inner)")),
        }
    }
}

/// Axis-aligned plan rectangle, metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    fn overlaps(&self, other: &Rect) -> bool {
        let dx = self.x1.min(other.x1) - self.x0.max(other.x0);
        let dy = self.y1.min(other.y1) - self.y0.max(other.y0);
        // touching edges are not an overlap
        dx > 1e-12 && dy > 1e-12
    }

    pub fn mirrored_x(&self, length: f64) -> Rect {
        Rect::new(length - self.x1, length - self.x0, self.y0, self.y1)
    }
}

/// One printed heater loop with its covering layers.
#[derive(Debug, Clone, PartialEq)]
pub struct HeaterLoopSpec {
    pub id: LoopId,
    pub side: Side,
    pub footprint: Vec<Rect>,
    /// Track width, m.
    pub width: f64,
    /// Ohm.
    pub resistance: f64,
    /// Layers over the footprint, ordered from the substrate outward.
    pub layers: Vec<Material>,
}

/// Plausible heater resistance band, Ohm.
pub const RESISTANCE_RANGE: (f64, f64) = (100.0, 100_000.0);

impl HeaterLoopSpec {
    /// Closed rectangular loop: two longitudinal rails and two transverse
    /// rungs of track width `width` inside the outline `outline`.
    pub fn frame(id: LoopId, side: Side, outline: Rect, width: f64, cover: Material) -> Self {
        let Rect { x0, x1, y0, y1 } = outline;
        let footprint = vec![
            Rect::new(x0, x1, y0, y0 + width),
            Rect::new(x0, x1, y1 - width, y1),
            Rect::new(x0, x0 + width, y0 + width, y1 - width),
            Rect::new(x1 - width, x1, y0 + width, y1 - width),
        ];
        HeaterLoopSpec {
            id,
            side,
            footprint,
            width,
            resistance: 1500.0,
            layers: vec![Material::heater_film(), Material::adhesive(), cover],
        }
    }

    pub fn footprint_area(&self) -> f64 {
        self.footprint.iter().map(Rect::area).sum()
    }

    /// Plan bounding box of the footprint.
    pub fn outline(&self) -> Option<Rect> {
        let mut it = self.footprint.iter();
        let first = *it.next()?;
        Some(it.fold(first, |acc, r| {
            Rect::new(
                acc.x0.min(r.x0),
                acc.x1.max(r.x1),
                acc.y0.min(r.y0),
                acc.y1.max(r.y1),
            )
        }))
    }

    /// Drive voltage for a given loop power, V.
    pub fn voltage_for(&self, power: f64) -> f64 {
        (power * self.resistance).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorSpec {
    /// m
    pub length: f64,
    /// m
    pub width: f64,
    pub substrate: Material,
    pub loops: Vec<HeaterLoopSpec>,
    pub cells: usize,
}

pub const MIN_CELLS: usize = 10;
pub const DEFAULT_CELLS: usize = 200;
pub const DEFAULT_TRACK_WIDTH: f64 = 6.5 * MM;
pub const DEFAULT_LOOP_GAP: f64 = 3.3 * MM;

impl ActuatorSpec {
    /// Dual-sided device: outer loop on the top face, inner loop on the
    /// bottom face, nested across the width with the default gap. The inner
    /// loop runs from the clamped root, where its leads exit, to one
    /// spacing short of the tip.
    pub fn meta_default(bopp_thickness: f64) -> Self {
        Self::meta_sized(100.0 * MM, 35.0 * MM, bopp_thickness)
    }

    /// [`ActuatorSpec::meta_default`] layout on a strip of another size.
    pub fn meta_sized(length: f64, width: f64, bopp_thickness: f64) -> Self {
        let w = DEFAULT_TRACK_WIDTH;
        let inset = w + DEFAULT_LOOP_GAP;
        let outer = HeaterLoopSpec::frame(
            LoopId::Outer,
            Side::Top,
            Rect::new(0.0, length, 0.0, width),
            w,
            Material::bopp(bopp_thickness),
        );
        let inner = HeaterLoopSpec::frame(
            LoopId::Inner,
            Side::Bottom,
            Rect::new(0.0, length - inset, inset, width - inset),
            w,
            Material::bopp(bopp_thickness),
        );
        ActuatorSpec {
            length,
            width,
            substrate: Material::paper(),
            loops: vec![outer, inner],
            cells: DEFAULT_CELLS,
        }
    }

    /// Single-sided baseline: the same device with its bottom loop removed.
    pub fn conventional_from(meta: &ActuatorSpec) -> Self {
        let mut spec = meta.clone();
        spec.loops.retain(|l| l.side != Side::Bottom);
        spec
    }

    pub fn loop_by_id(&self, id: LoopId) -> Option<&HeaterLoopSpec> {
        self.loops.iter().find(|l| l.id == id)
    }

    pub fn loop_by_id_mut(&mut self, id: LoopId) -> Option<&mut HeaterLoopSpec> {
        self.loops.iter_mut().find(|l| l.id == id)
    }

    /// Sets the thickness of the outermost layer (the BOPP strip) of every loop.
    pub fn set_cover_thickness(&mut self, thickness: f64) {
        for l in &mut self.loops {
            if let Some(cover) = l.layers.last_mut() {
                cover.thickness = thickness;
            }
        }
    }
}

/// A spec that passed [`validate_spec`], with derived diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedSpec {
    pub spec: ActuatorSpec,
    /// Centre-to-centre distance between the outer and inner loop rails,
    /// when both loops exist.
    pub center_spacing: Option<f64>,
    /// Edge-to-edge gap between the outer and inner loop rails.
    pub loop_gap: Option<f64>,
}

fn positive(field: &str, value: f64) -> Result<(), SpecError> {
    if !value.is_finite() {
        return Err(SpecError::NonFinite {
            field: field.into(),
        });
    }
    if value <= 0.0 {
        return Err(SpecError::NonPositive {
            field: field.into(),
            value,
        });
    }
    Ok(())
}

fn finite(field: &str, value: f64) -> Result<(), SpecError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(SpecError::NonFinite {
            field: field.into(),
        })
    }
}

pub fn validate_spec(spec: &ActuatorSpec) -> Result<CheckedSpec, SpecError> {
    positive("actuator.length", spec.length)?;
    positive("actuator.width", spec.width)?;
    if spec.cells < MIN_CELLS {
        return Err(SpecError::TooFewCells {
            got: spec.cells,
            min: MIN_CELLS,
        });
    }
    spec.substrate.validate()?;

    for (i, l) in spec.loops.iter().enumerate() {
        let name = l.id.as_str();
        if spec.loops[..i].iter().any(|o| o.side == l.side) {
            return Err(SpecError::DuplicateSide(l.side));
        }
        if spec.loops[..i].iter().any(|o| o.id == l.id) {
            return Err(SpecError::DuplicateLoop(l.id));
        }
        positive(&format!("loop.{name}.width"), l.width)?;
        positive(&format!("loop.{name}.resistance"), l.resistance)?;
        let (lo, hi) = RESISTANCE_RANGE;
        if l.resistance < lo || l.resistance > hi {
            return Err(SpecError::OutOfRange {
                field: format!("loop.{name}.resistance"),
                value: l.resistance,
                min: lo,
                max: hi,
            });
        }
        for m in &l.layers {
            m.validate()?;
        }
        let tol = 1e-12;
        for (k, r) in l.footprint.iter().enumerate() {
            for v in [r.x0, r.x1, r.y0, r.y1] {
                finite(&format!("loop.{name}.footprint[{k}]"), v)?;
            }
            let inside = r.x0 >= -tol
                && r.x1 <= spec.length + tol
                && r.y0 >= -tol
                && r.y1 <= spec.width + tol
                && r.x1 > r.x0
                && r.y1 > r.y0;
            if !inside {
                return Err(SpecError::FootprintOutOfBounds {
                    loop_name: name.into(),
                    index: k,
                });
            }
        }
    }

    // No overlap among all rectangles belonging to one side.
    for side in [Side::Top, Side::Bottom] {
        let rects: Vec<(&HeaterLoopSpec, usize, &Rect)> = spec
            .loops
            .iter()
            .filter(|l| l.side == side)
            .flat_map(|l| l.footprint.iter().enumerate().map(move |(k, r)| (l, k, r)))
            .collect();
        for (i, (la, a, ra)) in rects.iter().enumerate() {
            for (lb, b, rb) in &rects[i + 1..] {
                if ra.overlaps(rb) {
                    return Err(SpecError::SameSideOverlap {
                        side,
                        loop_a: la.id.as_str().into(),
                        a: *a,
                        loop_b: lb.id.as_str().into(),
                        b: *b,
                    });
                }
            }
        }
    }

    let (center_spacing, loop_gap) = match (
        spec.loop_by_id(LoopId::Outer),
        spec.loop_by_id(LoopId::Inner),
    ) {
        (Some(o), Some(i)) => match (o.outline(), i.outline()) {
            (Some(ro), Some(ri)) => {
                let gap = ri.y0 - (ro.y0 + o.width);
                let spacing = (ri.y0 + i.width / 2.0) - (ro.y0 + o.width / 2.0);
                (Some(spacing), Some(gap))
            }
            _ => (None, None),
        },
        _ => (None, None),
    };

    Ok(CheckedSpec {
        spec: spec.clone(),
        center_spacing,
        loop_gap,
    })
}

/// Parallel thermal lanes within one cell: the part of the plan covered only
/// by the top loop, only by the bottom loop, and by both. Bare substrate
/// outside the footprints is not a thermal unknown and stays at ambient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lane {
    Top = 0,
    Bottom = 1,
    Shared = 2,
}

pub const LANES: usize = 3;

impl Lane {
    pub const ALL: [Lane; LANES] = [Lane::Top, Lane::Bottom, Lane::Shared];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lanes that carry the footprint of a loop on `side`.
    pub fn of_side(side: Side) -> [Lane; 2] {
        match side {
            Side::Top => [Lane::Top, Lane::Shared],
            Side::Bottom => [Lane::Bottom, Lane::Shared],
        }
    }
}

/// Per-cell 1-D reduction of one heater loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopProfile {
    pub id: LoopId,
    pub side: Side,
    /// Width-coverage fraction per cell, in [0, 1].
    pub coverage: Vec<f64>,
    /// Fraction of loop power deposited per cell; sums to 1.
    pub weights: Vec<f64>,
    /// `weights` split over the lanes of each cell.
    pub lane_weights: Vec<[f64; LANES]>,
    pub footprint_area: f64,
    pub layers: Vec<Material>,
}

/// The shared 1-D geometry consumed by the thermal and mechanics modules.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedActuator {
    pub length: f64,
    pub width: f64,
    pub substrate: Material,
    pub x_center: Vec<f64>,
    pub dx: Vec<f64>,
    pub coverage_top: Vec<f64>,
    pub coverage_bottom: Vec<f64>,
    /// Width fraction covered by footprints on both faces.
    pub coverage_shared: Vec<f64>,
    /// Width fraction of each lane per cell.
    pub lane_fraction: Vec<[f64; LANES]>,
    /// J/K per cell and lane.
    pub heat_capacity: Vec<[f64; LANES]>,
    /// Convective area of both faces per cell and lane, m^2.
    pub convective_area: Vec<[f64; LANES]>,
    /// Substrate conductance along each lane between neighbouring cells, W/K.
    pub conductance: Vec<[f64; LANES]>,
    /// Substrate conductance across the gap between the top and bottom lanes
    /// of a cell, W/K.
    pub lateral_conductance: Vec<f64>,
    pub loops: Vec<LoopProfile>,
}

impl DiscretizedActuator {
    pub fn len(&self) -> usize {
        self.x_center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_center.is_empty()
    }

    pub fn loop_profile(&self, id: LoopId) -> Option<&LoopProfile> {
        self.loops.iter().find(|l| l.id == id)
    }

    pub fn side_profile(&self, side: Side) -> Option<&LoopProfile> {
        self.loops.iter().find(|l| l.side == side)
    }

    /// A lane takes part in the heat balance when it has any width.
    pub fn lane_active(&self, i: usize, lane: usize) -> bool {
        self.heat_capacity[i][lane] > 0.0
    }

    /// Uniform grid edges 0, L/N, ..., L.
    pub fn edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.len() + 1);
        let mut x = 0.0;
        e.push(x);
        for d in &self.dx {
            x += d;
            e.push(x);
        }
        e
    }
}

/// Uniform length-wise grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub length: f64,
    pub width: f64,
    pub cells: usize,
}

impl Grid {
    pub fn cell_bounds(&self, i: usize) -> (f64, f64) {
        let n = self.cells as f64;
        (self.length * i as f64 / n, self.length * (i + 1) as f64 / n)
    }
}

fn x_overlap(a: f64, b: f64, r: &Rect) -> f64 {
    (b.min(r.x1) - a.max(r.x0)).max(0.0)
}

/// Fractional width coverage of each cell by the loop footprint.
pub fn coverage_profile(loop_spec: &HeaterLoopSpec, grid: &Grid) -> Vec<f64> {
    (0..grid.cells)
        .map(|i| {
            let (a, b) = grid.cell_bounds(i);
            let covered: f64 = loop_spec
                .footprint
                .iter()
                .map(|r| x_overlap(a, b, r) * (r.y1 - r.y0))
                .sum();
            (covered / ((b - a) * grid.width)).clamp(0.0, 1.0)
        })
        .collect()
}

/// Fraction of each cell covered in plan by both footprints.
pub fn shared_coverage_profile(a: &HeaterLoopSpec, b: &HeaterLoopSpec, grid: &Grid) -> Vec<f64> {
    (0..grid.cells)
        .map(|i| {
            let (x0, x1) = grid.cell_bounds(i);
            let mut covered = 0.0;
            for ra in &a.footprint {
                for rb in &b.footprint {
                    let dy = (ra.y1.min(rb.y1) - ra.y0.max(rb.y0)).max(0.0);
                    let clip = Rect::new(ra.x0.max(rb.x0), ra.x1.min(rb.x1), 0.0, 0.0);
                    if clip.x1 > clip.x0 {
                        covered += x_overlap(x0, x1, &clip) * dy;
                    }
                }
            }
            (covered / ((x1 - x0) * grid.width)).clamp(0.0, 1.0)
        })
        .collect()
}

/// Conductance across the substrate between y-adjacent top and bottom
/// tracks in the cell `[a, b)`. Pairs separated by another track are skipped.
fn lateral_conductance(
    top: &HeaterLoopSpec,
    bottom: &HeaterLoopSpec,
    a: f64,
    b: f64,
    kt: f64,
) -> f64 {
    let present = |l: &HeaterLoopSpec| -> Vec<Rect> {
        l.footprint
            .iter()
            .filter(|r| x_overlap(a, b, r) > 0.0)
            .copied()
            .collect()
    };
    let tops = present(top);
    let bottoms = present(bottom);
    let all: Vec<Rect> = tops.iter().chain(&bottoms).copied().collect();
    let mut g = 0.0;
    for rt in &tops {
        for rb in &bottoms {
            let (lo, hi) = if rt.y1 <= rb.y0 {
                (rt, rb)
            } else if rb.y1 <= rt.y0 {
                (rb, rt)
            } else {
                continue;
            };
            let blocked = all
                .iter()
                .any(|r| r != lo && r != hi && r.y0 < hi.y0 && r.y1 > lo.y1);
            if blocked {
                continue;
            }
            let dist = 0.5 * (hi.y0 + hi.y1) - 0.5 * (lo.y0 + lo.y1);
            let shared_x = x_overlap(
                a,
                b,
                &Rect::new(rt.x0.max(rb.x0), rt.x1.min(rb.x1), 0.0, 0.0),
            );
            if shared_x > 0.0 && dist > 0.0 {
                g += kt * shared_x / dist;
            }
        }
    }
    g
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

pub fn discretize(checked: &CheckedSpec) -> DiscretizedActuator {
    let spec = &checked.spec;
    let n = spec.cells;
    let grid = Grid {
        length: spec.length,
        width: spec.width,
        cells: n,
    };
    let bounds: Vec<(f64, f64)> = (0..n).map(|i| grid.cell_bounds(i)).collect();
    let x_center: Vec<f64> = bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect();
    let dx: Vec<f64> = bounds.iter().map(|(a, b)| b - a).collect();

    let top = spec.loops.iter().find(|l| l.side == Side::Top);
    let bottom = spec.loops.iter().find(|l| l.side == Side::Bottom);
    let cov = |l: Option<&HeaterLoopSpec>| {
        l.map(|l| coverage_profile(l, &grid))
            .unwrap_or_else(|| vec![0.0; n])
    };
    let coverage_top = cov(top);
    let coverage_bottom = cov(bottom);
    let coverage_shared = match (top, bottom) {
        (Some(t), Some(b)) => shared_coverage_profile(t, b, &grid),
        _ => vec![0.0; n],
    };
    let lane_fraction: Vec<[f64; LANES]> = (0..n)
        .map(|i| {
            let s = coverage_shared[i];
            [
                (coverage_top[i] - s).max(0.0),
                (coverage_bottom[i] - s).max(0.0),
                s,
            ]
        })
        .collect();

    let loops: Vec<LoopProfile> = spec
        .loops
        .iter()
        .map(|l| {
            let coverage = coverage_profile(l, &grid);
            let lanes = Lane::of_side(l.side);
            let lane_area: Vec<[f64; LANES]> = (0..n)
                .map(|i| {
                    let mut a = [0.0; LANES];
                    for lane in lanes {
                        a[lane.index()] = lane_fraction[i][lane.index()] * dx[i] * spec.width;
                    }
                    a
                })
                .collect();
            let total: f64 = lane_area.iter().flatten().sum();
            let scale = if total > 0.0 { 1.0 / total } else { 0.0 };
            let lane_weights: Vec<[f64; LANES]> =
                lane_area.iter().map(|a| a.map(|v| v * scale)).collect();
            let weights = lane_weights.iter().map(|w| w.iter().sum()).collect();
            LoopProfile {
                id: l.id,
                side: l.side,
                coverage,
                weights,
                lane_weights,
                footprint_area: l.footprint_area(),
                layers: l.layers.clone(),
            }
        })
        .collect();

    let stack_c = |l: Option<&HeaterLoopSpec>| -> f64 {
        l.map(|l| l.layers.iter().map(Material::heat_capacity_per_area).sum())
            .unwrap_or(0.0)
    };
    let sub_c = spec.substrate.heat_capacity_per_area();
    let per_area = [
        sub_c + stack_c(top),
        sub_c + stack_c(bottom),
        sub_c + stack_c(top) + stack_c(bottom),
    ];
    let heat_capacity = (0..n)
        .map(|i| {
            let plan = dx[i] * spec.width;
            std::array::from_fn(|l| plan * lane_fraction[i][l] * per_area[l])
        })
        .collect();
    let convective_area = (0..n)
        .map(|i| std::array::from_fn(|l| 2.0 * dx[i] * spec.width * lane_fraction[i][l]))
        .collect();
    let kt = spec.substrate.conductivity * spec.substrate.thickness;
    let conductance = (0..n.saturating_sub(1))
        .map(|i| {
            let gap = x_center[i + 1] - x_center[i];
            std::array::from_fn(|l| {
                kt * spec.width * harmonic(lane_fraction[i][l], lane_fraction[i + 1][l]) / gap
            })
        })
        .collect();
    let lateral_conductance = match (top, bottom) {
        (Some(t), Some(b)) => bounds
            .iter()
            .map(|&(a, bb)| lateral_conductance(t, b, a, bb, kt))
            .collect(),
        _ => vec![0.0; n],
    };

    DiscretizedActuator {
        length: spec.length,
        width: spec.width,
        substrate: spec.substrate.clone(),
        x_center,
        dx,
        coverage_top,
        coverage_bottom,
        coverage_shared,
        lane_fraction,
        heat_capacity,
        convective_area,
        conductance,
        lateral_conductance,
        loops,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checked(spec: &ActuatorSpec) -> CheckedSpec {
        validate_spec(spec).expect("valid spec")
    }

    #[test]
    fn default_spec_is_valid_with_expected_spacing() {
        let c = checked(&ActuatorSpec::meta_default(51.0 * UM));
        let dd = c.center_spacing.unwrap();
        assert!((dd - 9.8 * MM).abs() < 1e-12, "spacing {dd}");
        assert!((c.loop_gap.unwrap() - 3.3 * MM).abs() < 1e-12);
    }

    #[test]
    fn zero_length_is_rejected() {
        let mut spec = ActuatorSpec::meta_default(51.0 * UM);
        spec.length = 0.0;
        match validate_spec(&spec) {
            Err(SpecError::NonPositive { field, .. }) => assert_eq!(field, "actuator.length"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overlapping_top_rectangles_are_rejected() {
        let mut spec = ActuatorSpec::meta_default(51.0 * UM);
        spec.loops[0]
            .footprint
            .push(Rect::new(10.0 * MM, 20.0 * MM, 2.0 * MM, 5.0 * MM));
        assert!(matches!(
            validate_spec(&spec),
            Err(SpecError::SameSideOverlap {
                side: Side::Top,
                ..
            })
        ));
    }

    #[test]
    fn footprint_outside_plan_is_rejected() {
        let mut spec = ActuatorSpec::meta_default(51.0 * UM);
        spec.loops[1].footprint[0].x1 = 0.2;
        assert!(matches!(
            validate_spec(&spec),
            Err(SpecError::FootprintOutOfBounds { .. })
        ));
    }

    #[test]
    fn two_loops_on_one_side_are_rejected() {
        let mut spec = ActuatorSpec::meta_default(51.0 * UM);
        spec.loops[1].side = Side::Top;
        assert!(matches!(
            validate_spec(&spec),
            Err(SpecError::DuplicateSide(Side::Top))
        ));
    }

    #[test]
    fn full_cover_loop_gives_unit_coverage() {
        let mut spec = ActuatorSpec::meta_default(51.0 * UM);
        spec.loops.truncate(1);
        spec.loops[0].footprint = vec![Rect::new(0.0, spec.length, 0.0, spec.width)];
        let d = discretize(&checked(&spec));
        assert!(d.coverage_top.iter().all(|f| (f - 1.0).abs() < 1e-12));
        assert!(d.coverage_bottom.iter().all(|f| *f == 0.0));
    }

    #[test]
    fn no_loops_leaves_every_lane_empty() {
        let mut spec = ActuatorSpec::meta_default(51.0 * UM);
        spec.loops.clear();
        let d = discretize(&checked(&spec));
        for i in 0..d.len() {
            assert_eq!(d.coverage_top[i], 0.0);
            assert_eq!(d.coverage_bottom[i], 0.0);
            assert_eq!(d.heat_capacity[i], [0.0; LANES]);
            assert_eq!(d.lateral_conductance[i], 0.0);
        }
    }

    #[test]
    fn nested_loops_overlap_only_at_the_root() {
        let d = discretize(&checked(&ActuatorSpec::meta_default(51.0 * UM)));
        // the inner loop passes under the outer root rung only
        for (i, s) in d.coverage_shared.iter().enumerate() {
            assert_eq!(*s > 0.0, d.x_center[i] < 6.5 * MM, "cell {i}");
        }
        for l in &d.loops {
            let total: f64 = l.lane_weights.iter().flatten().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        // rail span: two y-adjacent pairs 9.8 mm apart
        let spec = ActuatorSpec::meta_default(51.0 * UM);
        let kt = spec.substrate.conductivity * spec.substrate.thickness;
        let expected = 2.0 * kt * d.dx[100] / (9.8 * MM);
        assert!((d.lateral_conductance[100] - expected).abs() < 1e-12 * expected.max(1e-30));
        // between the root rung and the inner rails nothing is y-adjacent
        // across the gap except the rails themselves
        assert!((d.lateral_conductance[20] - expected).abs() < 1e-12 * expected);
        // the outer tip rung has no bottom neighbour
        assert_eq!(d.lateral_conductance[195], 0.0);
    }

    #[test]
    fn opposite_footprints_fill_the_shared_lane() {
        let mut spec = ActuatorSpec::meta_default(51.0 * UM);
        let rail = Rect::new(0.0, spec.length, 0.0, 10.0 * MM);
        spec.loops[0].footprint = vec![rail];
        spec.loops[1].footprint = vec![Rect::new(0.0, spec.length, 5.0 * MM, 15.0 * MM)];
        let d = discretize(&checked(&spec));
        let w = spec.width;
        for i in 0..d.len() {
            let f = d.lane_fraction[i];
            assert!((f[Lane::Shared.index()] - 5.0 * MM / w).abs() < 1e-12);
            assert!((f[Lane::Top.index()] - 5.0 * MM / w).abs() < 1e-12);
            assert!((f[Lane::Bottom.index()] - 5.0 * MM / w).abs() < 1e-12);
            assert_eq!(d.lateral_conductance[i], 0.0);
        }
        let top = d.loop_profile(LoopId::Outer).unwrap();
        let shared: f64 = top
            .lane_weights
            .iter()
            .map(|w| w[Lane::Shared.index()])
            .sum();
        assert!((shared - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rung_and_rail_coverage_match_area_integration() {
        let spec = ActuatorSpec::meta_default(51.0 * UM);
        let d = discretize(&checked(&spec));
        let outer = &spec.loops[0];
        // Oracle: direct area integration on a 100 x 100 subsample lattice per cell.
        let samples = 100;
        let check = |i: usize| {
            let x0 = d.dx[0] * i as f64;
            let mut hits = 0usize;
            for a in 0..samples {
                for b in 0..samples {
                    let x = x0 + (a as f64 + 0.5) / samples as f64 * d.dx[i];
                    let y = (b as f64 + 0.5) / samples as f64 * spec.width;
                    if outer
                        .footprint
                        .iter()
                        .any(|r| x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1)
                    {
                        hits += 1;
                    }
                }
            }
            hits as f64 / (samples * samples) as f64
        };
        for i in [0, 5, 12, 100, 187, 199] {
            let oracle = check(i);
            assert!(
                (d.coverage_top[i] - oracle).abs() < 0.011,
                "cell {i}: {} vs oracle {oracle}",
                d.coverage_top[i]
            );
        }
        assert!((d.coverage_top[0] - 1.0).abs() < 1e-12);
        assert!((d.coverage_top[199] - 1.0).abs() < 1e-12);
        assert!((d.coverage_top[100] - 2.0 * 6.5 / 35.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_profile_edge_cases() {
        let grid = Grid {
            length: 0.1,
            width: 0.035,
            cells: 100,
        };
        let mut l = HeaterLoopSpec::frame(
            LoopId::Outer,
            Side::Top,
            Rect::new(0.0, 0.1, 0.0, 0.035),
            0.005,
            Material::bopp(51.0 * UM),
        );
        l.footprint.clear();
        assert!(coverage_profile(&l, &grid).iter().all(|f| *f == 0.0));

        // cells 10..=20 exactly, full width
        l.footprint = vec![Rect::new(0.010, 0.021, 0.0, 0.035)];
        let f = coverage_profile(&l, &grid);
        for (i, fi) in f.iter().enumerate() {
            let expected = if (10..=20).contains(&i) { 1.0 } else { 0.0 };
            assert!((fi - expected).abs() < 1e-9, "cell {i}: {fi}");
        }

        // half-cell overlap at a boundary
        l.footprint = vec![Rect::new(0.0305, 0.05, 0.0, 0.035)];
        let f = coverage_profile(&l, &grid);
        assert!((f[30] - 0.5).abs() < 1e-9);
        assert!((f[31] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mirrored_footprint_mirrors_coverage() {
        let spec = ActuatorSpec::meta_default(51.0 * UM);
        let grid = Grid {
            length: spec.length,
            width: spec.width,
            cells: 200,
        };
        let mut l = spec.loops[1].clone();
        l.footprint = vec![
            Rect::new(3.3 * MM, 41.7 * MM, 2.0 * MM, 9.0 * MM),
            Rect::new(60.05 * MM, 61.0 * MM, 12.0 * MM, 30.0 * MM),
        ];
        let f = coverage_profile(&l, &grid);
        let mut m = l.clone();
        m.footprint = l
            .footprint
            .iter()
            .map(|r| r.mirrored_x(spec.length))
            .collect();
        let g = coverage_profile(&m, &grid);
        for i in 0..200 {
            assert!((f[i] - g[199 - i]).abs() < 1e-12);
        }
    }
}
