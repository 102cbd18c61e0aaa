//! Scenario runs: power command, thermal step, curvature, lag, shape and
//! observables, once per time step.

mod metrics;
mod presets;

pub(crate) use metrics::value_at;

pub use metrics::{
    cycle_extrema, first_time_normalized_below, linear_fit, normalize_displacement, rise_time,
    sensitivity_fit, series_value_at, time_to_fraction, CycleExtrema, LinearFit,
};
pub use presets::{
    preset, run_plan, Device, PresetName, PresetOutcome, PresetPlan, PresetRun, RunMeta, RunResult,
    Table, TableCell, PRESET_NAMES,
};

use thiserror::Error;

use crate::control::{
    ForcedReturnController, ForcedReturnPolicy, PowerSchedule, Powers, ScheduleError,
};
use crate::mechanics::{
    mech_lag, reference_displacement, shape_from_curvature, three_point_curvature, CurvatureField,
    CurvatureMap, MechError, MechParams, Shape,
};
use crate::model::{
    discretize, validate_spec, ActuatorSpec, DiscretizedActuator, LoopId, SpecError, UM,
};
use crate::thermal::{
    heater_mean_temp, steady_state, step_thermal, ThermalError, ThermalParams, ThermalState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Thermal(#[from] ThermalError),
    #[error(transparent)]
    Mech(#[from] MechError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("{0}")]
    Metric(String),
}

impl EngineError {
    /// True for failures of the numerical kernel rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            EngineError::Thermal(ThermalError::NonFinite { .. })
            | EngineError::Thermal(ThermalError::Unstable { .. })
            | EngineError::Mech(MechError::NonFinite(_))
            | EngineError::Mech(MechError::Singular)
            | EngineError::Metric(_) => true,
            _ => false,
        }
    }
}

/// What sets the loop powers over time.
#[derive(Debug, Clone, PartialEq)]
pub enum Drive {
    Schedule(PowerSchedule),
    ForcedReturn(ForcedReturnPolicy),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub actuator: ActuatorSpec,
    pub thermal: ThermalParams,
    pub mech: MechParams,
    pub drive: Drive,
    /// Ambient temperature, degC.
    pub ambient: f64,
    /// s
    pub duration: f64,
    /// Record every `stride`-th step.
    pub stride: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            actuator: ActuatorSpec::meta_default(51.0 * UM),
            thermal: ThermalParams::default(),
            mech: MechParams::default(),
            drive: Drive::Schedule(PowerSchedule::default()),
            ambient: 23.0,
            duration: 600.0,
            stride: 10,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(EngineError::Config("duration must be positive".into()));
        }
        if self.stride < 1 {
            return Err(EngineError::Config("stride must be at least 1".into()));
        }
        if !self.ambient.is_finite() {
            return Err(EngineError::Config(
                "ambient temperature must be finite".into(),
            ));
        }
        if !(self.mech.tau_mech >= 0.0 && self.mech.tau_mech.is_finite()) {
            return Err(EngineError::Config("tau_mech must be non-negative".into()));
        }
        self.thermal.validate()?;
        if let Drive::ForcedReturn(p) = &self.drive {
            p.validate()?;
        }
        validate_spec(&self.actuator)?;
        Ok(())
    }

    /// Ambient offset from the stress-free reference temperature, K.
    pub fn ambient_rise(&self) -> f64 {
        self.ambient - self.mech.t_ref
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.thermal.dt).round() as usize
    }
}

/// One output row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSeriesRecord {
    /// s
    pub t: f64,
    /// Outer heater mean rise, K.
    pub dt_outer: f64,
    /// Inner heater mean rise, K.
    pub dt_inner: f64,
    /// Signed tip displacement, mm.
    pub tip_disp: f64,
    /// Signed displacement of the mark 1 cm from the tip, mm.
    pub ref_disp: f64,
    /// Three-point fitted curvature, cm^-1.
    pub kappa_fit: f64,
    /// W
    pub p_outer: f64,
    /// W
    pub p_inner: f64,
}

/// Shape observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeObservables {
    /// m
    pub tip_disp: f64,
    /// m
    pub ref_disp: f64,
    /// Transverse tip deflection, m.
    pub tip_z: f64,
    /// m^-1
    pub kappa_fit: f64,
}

pub fn observe(shape: &Shape, rest: &Shape) -> ShapeObservables {
    ShapeObservables {
        tip_disp: crate::mechanics::point_displacement(shape, rest, 0.0),
        ref_disp: reference_displacement(shape, rest),
        tip_z: shape.tip().1,
        kappa_fit: three_point_curvature(shape),
    }
}

/// Geometry, curvature tables and rest shape shared by all runs of one
/// actuator spec.
#[derive(Debug, Clone)]
pub struct PreparedActuator {
    pub actuator: DiscretizedActuator,
    pub map: CurvatureMap,
    pub rest: Shape,
}

impl PreparedActuator {
    pub fn new(spec: &ActuatorSpec) -> Result<Self, EngineError> {
        let checked = validate_spec(spec)?;
        let actuator = discretize(&checked);
        let map = CurvatureMap::new(&actuator)?;
        let rest = Shape::straight(actuator.length, actuator.len());
        Ok(PreparedActuator {
            actuator,
            map,
            rest,
        })
    }

    pub fn heater_rise(&self, state: &ThermalState, id: LoopId) -> Result<f64, EngineError> {
        match self.actuator.loop_profile(id) {
            Some(lp) => Ok(heater_mean_temp(state, lp)?),
            None => Ok(0.0),
        }
    }

    pub fn shape(&self, kappa: Vec<f64>) -> Shape {
        shape_from_curvature(&CurvatureField(kappa), self.actuator.length)
    }

    /// Fully relaxed shape under constant powers.
    pub fn steady_shape(
        &self,
        powers: Powers,
        h: f64,
        ambient: f64,
        ambient_rise: f64,
    ) -> Result<(ThermalState, Shape), EngineError> {
        let state = steady_state(&self.actuator, powers.outer, powers.inner, h, ambient)?;
        let (kt, kh) = self.map.split(&state, ambient_rise);
        let kappa = kt.iter().zip(&kh).map(|(a, b)| a + b).collect();
        Ok((state, self.shape(kappa)))
    }
}

enum Commander {
    Schedule(PowerSchedule),
    Return(ForcedReturnController),
}

impl Commander {
    fn command(&mut self, t: f64, ref_disp: f64) -> Powers {
        match self {
            Commander::Schedule(s) => s.power_at(t),
            Commander::Return(c) => c.step(t, ref_disp).powers,
        }
    }

    fn needs_feedback(&self) -> bool {
        matches!(self, Commander::Return(_))
    }
}

/// Full scenario output.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub records: Vec<TimeSeriesRecord>,
    /// Time the forced-return latch engaged, s.
    pub return_done_at: Option<f64>,
    /// Shape at the end of the run.
    pub final_shape: Shape,
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<Vec<TimeSeriesRecord>, EngineError> {
    Ok(run_scenario_detailed(config)?.records)
}

pub fn run_scenario_detailed(config: &ScenarioConfig) -> Result<ScenarioResult, EngineError> {
    config.validate()?;
    let prepared = PreparedActuator::new(&config.actuator)?;
    simulate(config, &prepared)
}

/// Runs a validated config against an already prepared actuator.
pub fn simulate(
    config: &ScenarioConfig,
    prepared: &PreparedActuator,
) -> Result<ScenarioResult, EngineError> {
    let act = &prepared.actuator;
    let n = act.len();
    let dt = config.thermal.dt;
    let tau = config.mech.tau_mech;
    let ambient_rise = config.ambient_rise();
    let steps = config.steps();

    let mut commander = match &config.drive {
        Drive::Schedule(s) => Commander::Schedule(s.clone()),
        Drive::ForcedReturn(p) => Commander::Return(ForcedReturnController::new(*p)),
    };
    let feedback = commander.needs_feedback();

    let mut state = ThermalState::at_ambient(n, config.ambient);
    // The strip starts equilibrated with its surroundings.
    let (mut fast, mut hygro) = prepared.map.split(&state, ambient_rise);
    let mut current = observe(&prepared.shape(sum(&fast, &hygro)), &prepared.rest);

    let mut records = Vec::with_capacity(steps / config.stride + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let powers = commander.command(t, current.ref_disp);
        if k % config.stride == 0 {
            records.push(TimeSeriesRecord {
                t,
                dt_outer: prepared.heater_rise(&state, LoopId::Outer)?,
                dt_inner: prepared.heater_rise(&state, LoopId::Inner)?,
                tip_disp: current.tip_disp * 1e3,
                ref_disp: current.ref_disp * 1e3,
                kappa_fit: current.kappa_fit * 1e-2,
                p_outer: powers.outer,
                p_inner: powers.inner,
            });
        }
        if k == steps {
            break;
        }
        state = step_thermal(&state, powers.outer, powers.inner, &config.thermal, act)?;
        let (f, target) = prepared.map.split(&state, ambient_rise);
        fast = f;
        hygro = mech_lag(&hygro, &target, dt, tau);
        let next_k = k + 1;
        if feedback || next_k % config.stride == 0 {
            let kappa = sum(&fast, &hygro);
            if let Some(i) = kappa.iter().position(|v| !v.is_finite()) {
                return Err(MechError::NonFinite(i).into());
            }
            current = observe(&prepared.shape(kappa), &prepared.rest);
        }
    }

    let return_done_at = match &commander {
        Commander::Return(c) => c.done_at(),
        Commander::Schedule(_) => None,
    };
    Ok(ScenarioResult {
        records,
        return_done_at,
        final_shape: prepared.shape(sum(&fast, &hygro)),
    })
}

fn sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_config(id: LoopId, power: f64, on: f64, duration: f64) -> ScenarioConfig {
        ScenarioConfig {
            drive: Drive::Schedule(PowerSchedule::step(id, power, 0.0, on).unwrap()),
            duration,
            ..Default::default()
        }
    }

    #[test]
    fn zero_power_rest_is_exactly_zero() {
        let cfg = ScenarioConfig {
            duration: 60.0,
            ..Default::default()
        };
        let recs = run_scenario(&cfg).unwrap();
        assert_eq!(recs.len(), 61);
        for r in &recs {
            assert_eq!(r.tip_disp, 0.0);
            assert_eq!(r.ref_disp, 0.0);
            assert_eq!(r.kappa_fit, 0.0);
            assert_eq!(r.dt_outer, 0.0);
        }
        assert!(recs.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn step_response_rises_then_decays() {
        let cfg = ScenarioConfig {
            stride: 1,
            ..step_config(LoopId::Outer, 0.75, 600.0, 1200.0)
        };
        let recs = run_scenario(&cfg).unwrap();
        let mag: Vec<f64> = recs.iter().map(|r| r.ref_disp.abs()).collect();
        let split = recs.iter().position(|r| r.t >= 600.0).unwrap();
        assert!(mag[..=split].windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(mag[split..].windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(mag[split] > 1.0);
    }

    #[test]
    fn loops_bend_in_opposite_directions() {
        let o = run_scenario(&step_config(LoopId::Outer, 0.75, 300.0, 300.0)).unwrap();
        let i = run_scenario(&step_config(LoopId::Inner, 0.75, 300.0, 300.0)).unwrap();
        let zo = o.last().unwrap().tip_disp;
        let zi = i.last().unwrap().tip_disp;
        assert!(zo < 0.0 && zi > 0.0, "{zo} {zi}");
    }

    #[test]
    fn halving_dt_barely_moves_the_response() {
        let coarse = step_config(LoopId::Outer, 0.75, 600.0, 600.0);
        let mut fine = coarse.clone();
        fine.thermal.dt = 0.05;
        fine.stride = 20;
        let a = run_scenario(&coarse).unwrap().last().unwrap().ref_disp;
        let b = run_scenario(&fine).unwrap().last().unwrap().ref_disp;
        assert!(((a - b) / b).abs() < 5e-3, "{a} vs {b}");
    }

    #[test]
    fn identical_configs_give_identical_series() {
        let cfg = step_config(LoopId::Inner, 0.5, 200.0, 300.0);
        assert_eq!(run_scenario(&cfg).unwrap(), run_scenario(&cfg).unwrap());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.duration = 0.0;
        assert!(matches!(run_scenario(&cfg), Err(EngineError::Config(_))));
        let mut cfg = ScenarioConfig::default();
        cfg.stride = 0;
        assert!(run_scenario(&cfg).is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.actuator.width = -1.0;
        assert!(matches!(run_scenario(&cfg), Err(EngineError::Spec(_))));
    }
}
