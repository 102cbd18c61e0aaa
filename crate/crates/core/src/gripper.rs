//! Two-finger gripper built from two actuators: jaw opening from the finger
//! tip deflections, and geometric feasibility of grasp strategies.
//!
//! Lengths here are in millimetres.

use thiserror::Error;

use crate::control::PowerSchedule;
use crate::engine::{run_scenario_detailed, Drive, EngineError, ScenarioConfig};
use crate::mechanics::Shape;
use crate::model::{LoopId, Side};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GripperError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Invalid(String),
}

/// Finger face that points into the jaw.
pub type MountFace = Side;

#[derive(Debug, Clone, PartialEq)]
pub struct GripperSpec {
    /// Rest distance between the finger tips, mm.
    pub separation: f64,
    pub mounts: [MountFace; 2],
    /// Loop power used for full opening and closing, W.
    pub power: f64,
    /// Activation time before the jaw is read, s.
    pub t_act: f64,
}

impl Default for GripperSpec {
    fn default() -> Self {
        GripperSpec {
            separation: 40.0,
            mounts: [Side::Top, Side::Top],
            power: 0.75,
            t_act: 300.0,
        }
    }
}

impl GripperSpec {
    pub fn validate(&self) -> Result<(), GripperError> {
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(GripperError::Invalid(format!(
                "gripper separation must be positive (got {})",
                self.separation
            )));
        }
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return Err(GripperError::Invalid(
                "gripper power must be non-negative".into(),
            ));
        }
        if !(self.t_act > 0.0 && self.t_act.is_finite()) {
            return Err(GripperError::Invalid(
                "gripper activation time must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Deflection of a finger tip away from the jaw centre, mm.
pub fn outward_deflection(shape: &Shape, mount: MountFace) -> f64 {
    let z = shape.tip().1 * 1e3;
    match mount {
        // the inward face is +z, so outward is -z
        Side::Top => -z,
        Side::Bottom => z,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jaw {
    /// Tip-to-tip distance, mm.
    pub opening: f64,
    /// Offset of the jaw centre towards finger B, mm.
    pub center: f64,
}

pub fn jaw_from_deflections(outward: [f64; 2], separation: f64) -> Jaw {
    Jaw {
        opening: separation + outward[0] + outward[1],
        center: 0.5 * (outward[1] - outward[0]),
    }
}

pub fn jaw_opening(a: &Shape, b: &Shape, spec: &GripperSpec) -> Jaw {
    jaw_from_deflections(
        [
            outward_deflection(a, spec.mounts[0]),
            outward_deflection(b, spec.mounts[1]),
        ],
        spec.separation,
    )
}

/// Extremes of the jaw opening, mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JawRange {
    /// Closing loops at full power; tips that would cross count as closed.
    pub min: f64,
    pub rest: f64,
    /// Opening loops at full power.
    pub max: f64,
}

/// Tip shapes of one finger after `t_act` with each loop driven at `power`.
fn activated_shapes(
    spec: &GripperSpec,
    finger: &ScenarioConfig,
) -> Result<[Shape; 2], GripperError> {
    let run = |id: LoopId| -> Result<Shape, GripperError> {
        let config = ScenarioConfig {
            drive: Drive::Schedule(
                PowerSchedule::step(id, spec.power, 0.0, spec.t_act).map_err(EngineError::from)?,
            ),
            duration: spec.t_act,
            ..finger.clone()
        };
        Ok(run_scenario_detailed(&config)?.final_shape)
    };
    let (outer, inner) = rayon::join(|| run(LoopId::Outer), || run(LoopId::Inner));
    Ok([outer?, inner?])
}

/// Simulates both fingers (identical actuators from `finger`) and returns the
/// achievable jaw range. Each finger uses whichever loop moves it outward to
/// open and the other to close.
pub fn jaw_range(spec: &GripperSpec, finger: &ScenarioConfig) -> Result<JawRange, GripperError> {
    spec.validate()?;
    let shapes = activated_shapes(spec, finger)?;
    let rest = Shape::straight(finger.actuator.length, finger.actuator.cells);
    let rest_out = spec.mounts.map(|m| outward_deflection(&rest, m));
    let mut open = [0.0; 2];
    let mut close = [0.0; 2];
    for f in 0..2 {
        let d: Vec<f64> = shapes
            .iter()
            .map(|s| outward_deflection(s, spec.mounts[f]))
            .collect();
        open[f] = d.iter().copied().fold(rest_out[f], f64::max);
        close[f] = d.iter().copied().fold(rest_out[f], f64::min);
    }
    Ok(JawRange {
        min: jaw_from_deflections(close, spec.separation)
            .opening
            .max(0.0),
        rest: jaw_from_deflections(rest_out, spec.separation).opening,
        max: jaw_from_deflections(open, spec.separation).opening,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    Solid,
    Hollow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Context {
    Free,
    /// Inside a tube of this inner diameter, mm.
    Tube(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    /// mm
    pub outer_width: f64,
    /// Width of the opening of a hollow object, mm.
    pub cavity_width: Option<f64>,
    pub context: Context,
}

impl ObjectSpec {
    pub fn solid(width: f64) -> Self {
        ObjectSpec {
            kind: ObjectKind::Solid,
            outer_width: width,
            cavity_width: None,
            context: Context::Free,
        }
    }

    pub fn hollow(width: f64, cavity: f64) -> Self {
        ObjectSpec {
            kind: ObjectKind::Hollow,
            outer_width: width,
            cavity_width: Some(cavity),
            context: Context::Free,
        }
    }

    pub fn in_tube(self, diameter: f64) -> Self {
        ObjectSpec {
            context: Context::Tube(diameter),
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), GripperError> {
        let bad = |m: String| Err(GripperError::Invalid(m));
        if !(self.outer_width > 0.0 && self.outer_width.is_finite()) {
            return bad(format!(
                "object width must be positive (got {})",
                self.outer_width
            ));
        }
        match (self.kind, self.cavity_width) {
            (ObjectKind::Hollow, Some(c)) if c > 0.0 && c < self.outer_width => {}
            (ObjectKind::Hollow, _) => {
                return bad("hollow object needs a cavity narrower than its outer width".into())
            }
            (ObjectKind::Solid, Some(_)) => return bad("solid object cannot have a cavity".into()),
            (ObjectKind::Solid, None) => {}
        }
        if let Context::Tube(d) = self.context {
            if !(d > self.outer_width) {
                return bad(format!("tube diameter {d} does not fit the object"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraspMode {
    CloseGrip,
    WallPress,
    PreOpenGrip,
    InsertExpand,
    Infeasible,
}

impl GraspMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GraspMode::CloseGrip => "close_grip",
            GraspMode::WallPress => "wall_press",
            GraspMode::PreOpenGrip => "pre_open_grip",
            GraspMode::InsertExpand => "insert_expand",
            GraspMode::Infeasible => "infeasible",
        }
    }
}

impl std::fmt::Display for GraspMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// First strategy whose geometric condition holds. In a tube, pressing the
/// object against the wall is tried before closing on it; hollow objects are
/// taken from inside before being spanned from outside.
pub fn grasp_mode(jaw: &JawRange, object: &ObjectSpec) -> GraspMode {
    let w = object.outer_width;
    if let Context::Tube(d) = object.context {
        if jaw.max >= d - w {
            return GraspMode::WallPress;
        }
    }
    if jaw.min < w && w < jaw.rest {
        return GraspMode::CloseGrip;
    }
    if let (ObjectKind::Hollow, Some(c)) = (object.kind, object.cavity_width) {
        if jaw.rest < c && jaw.max > c {
            return GraspMode::InsertExpand;
        }
    }
    if jaw.rest < w && w <= jaw.max {
        return GraspMode::PreOpenGrip;
    }
    GraspMode::Infeasible
}
