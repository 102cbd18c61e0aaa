//! Experiment presets: batches of scenarios replicating the figure
//! protocols, plus the summary tables derived from their stored series.

use rayon::prelude::*;

use super::metrics::{
    cycle_extrema, first_time_normalized_below, linear_fit, rise_time, sensitivity_fit,
    series_value_at, time_to_fraction, value_at,
};
use super::{run_scenario_detailed, Drive, EngineError, ScenarioConfig, ScenarioResult};
use crate::control::{alternating_schedule, cyclic_schedule, ForcedReturnPolicy, PowerSchedule};
use crate::model::{ActuatorSpec, LoopId, UM};

pub const PRESET_NAMES: [&str; 6] = [
    "power_sweep",
    "step_response",
    "cyclic",
    "ambient_sweep",
    "forced_return",
    "alternating",
];

/// Activation time at which displacement is taken as saturated, s.
pub const T_SAT: f64 = 300.0;
/// Rated loop power, W.
pub const RATED_POWER: f64 = 0.75;
pub const BOPP_THICKNESSES_UM: [f64; 3] = [25.0, 38.0, 51.0];
pub const SWEEP_POWERS: [f64; 6] = [0.0, 0.15, 0.3, 0.45, 0.6, 0.75];
pub const RETURN_POWERS: [f64; 4] = [0.0, 0.25, 0.5, 0.75];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetName {
    PowerSweep,
    StepResponse,
    Cyclic,
    AmbientSweep,
    ForcedReturn,
    Alternating,
}

impl PresetName {
    pub const ALL: [PresetName; 6] = [
        PresetName::PowerSweep,
        PresetName::StepResponse,
        PresetName::Cyclic,
        PresetName::AmbientSweep,
        PresetName::ForcedReturn,
        PresetName::Alternating,
    ];

    pub fn as_str(self) -> &'static str {
        PRESET_NAMES[self as usize]
    }
}

impl std::fmt::Display for PresetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PresetName {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                EngineError::Config(format!(
                    "unknown preset `{s}` (known: {})",
                    PRESET_NAMES.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Device {
    Meta,
    Conventional,
}

impl Device {
    pub fn as_str(self) -> &'static str {
        match self {
            Device::Meta => "meta",
            Device::Conventional => "conventional",
        }
    }
}

/// What distinguishes one run of a preset from the others.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    /// File-name friendly identifier, unique within the preset.
    pub label: String,
    pub device: Device,
    pub bopp_um: f64,
    /// Driven loop, if any.
    pub drive_loop: Option<LoopId>,
    /// Drive power, W.
    pub power: f64,
    /// Ambient offset from the reference temperature, K.
    pub ambient_rise: f64,
    /// Forced-return power, W.
    pub return_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetRun {
    pub meta: RunMeta,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetPlan {
    pub name: PresetName,
    pub runs: Vec<PresetRun>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub meta: RunMeta,
    pub result: ScenarioResult,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableCell {
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for TableCell {
    fn from(v: f64) -> Self {
        TableCell::Num(v)
    }
}

impl From<Option<f64>> for TableCell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(TableCell::Empty, TableCell::Num)
    }
}

impl From<&str> for TableCell {
    fn from(v: &str) -> Self {
        TableCell::Text(v.into())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<TableCell>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<TableCell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetOutcome {
    pub name: PresetName,
    pub runs: Vec<RunResult>,
    /// One row per run or per derived group.
    pub summary: Table,
    /// Named scalar results (fits, ratios).
    pub metrics: Vec<(String, f64)>,
}

impl PresetOutcome {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

fn meta(label: String, base: &ScenarioConfig) -> RunMeta {
    RunMeta {
        label,
        device: Device::Meta,
        bopp_um: cover_um(&base.actuator),
        drive_loop: None,
        power: 0.0,
        ambient_rise: base.ambient_rise(),
        return_power: None,
    }
}

fn cover_um(spec: &ActuatorSpec) -> f64 {
    spec.loops
        .first()
        .and_then(|l| l.layers.last())
        .map_or(0.0, |m| (m.thickness / UM * 1e6).round() / 1e6)
}

fn scheduled(base: &ScenarioConfig, schedule: PowerSchedule, duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        drive: Drive::Schedule(schedule),
        duration,
        ..base.clone()
    }
}

/// Scenario set of a preset, built on `base` (device, parameters, ambient).
pub fn preset(name: PresetName, base: &ScenarioConfig) -> Result<PresetPlan, EngineError> {
    let mut runs = Vec::new();
    match name {
        PresetName::PowerSweep => {
            for bopp in BOPP_THICKNESSES_UM {
                for id in [LoopId::Outer, LoopId::Inner] {
                    for p in SWEEP_POWERS {
                        let mut config =
                            scheduled(base, PowerSchedule::step(id, p, 0.0, T_SAT)?, T_SAT);
                        config.actuator.set_cover_thickness(bopp * UM);
                        let mut m = meta(format!("bopp{bopp}_{id}_p{p:.2}"), base);
                        m.bopp_um = bopp;
                        m.drive_loop = Some(id);
                        m.power = p;
                        runs.push(PresetRun { meta: m, config });
                    }
                }
            }
        }
        PresetName::StepResponse => {
            for id in [LoopId::Outer, LoopId::Inner] {
                let config = scheduled(
                    base,
                    PowerSchedule::step(id, RATED_POWER, 0.0, 600.0)?,
                    1200.0,
                );
                let mut m = meta(format!("{id}"), base);
                m.drive_loop = Some(id);
                m.power = RATED_POWER;
                runs.push(PresetRun { meta: m, config });
            }
        }
        PresetName::Cyclic => {
            for id in [LoopId::Outer, LoopId::Inner] {
                let schedule = cyclic_schedule(id, RATED_POWER, CYCLE_ON, CYCLE_OFF, CYCLES)?;
                let config = scheduled(base, schedule, CYCLES as f64 * (CYCLE_ON + CYCLE_OFF));
                let mut m = meta(format!("{id}"), base);
                m.drive_loop = Some(id);
                m.power = RATED_POWER;
                runs.push(PresetRun { meta: m, config });
            }
        }
        PresetName::AmbientSweep => {
            let meta_spec = base.actuator.clone();
            let conv_spec = ActuatorSpec::conventional_from(&meta_spec);
            for (device, spec) in [
                (Device::Meta, &meta_spec),
                (Device::Conventional, &conv_spec),
            ] {
                for k in 0..=20 {
                    let rise = k as f64;
                    let mut config = scheduled(base, PowerSchedule::default(), 1.0);
                    config.actuator = spec.clone();
                    config.ambient = config.mech.t_ref + rise;
                    let mut m = meta(format!("{}_rest_amb{k}", device.as_str()), base);
                    m.device = device;
                    m.ambient_rise = rise;
                    runs.push(PresetRun { meta: m, config });
                }
            }
            for id in [LoopId::Outer, LoopId::Inner] {
                for k in (0..=20).step_by(5) {
                    let rise = k as f64;
                    let mut config = scheduled(
                        base,
                        PowerSchedule::step(id, RATED_POWER, 0.0, T_SAT)?,
                        T_SAT,
                    );
                    config.actuator = meta_spec.clone();
                    config.ambient = config.mech.t_ref + rise;
                    let mut m = meta(format!("meta_{id}_amb{k}"), base);
                    m.drive_loop = Some(id);
                    m.power = RATED_POWER;
                    m.ambient_rise = rise;
                    runs.push(PresetRun { meta: m, config });
                }
            }
        }
        PresetName::ForcedReturn => {
            for id in [LoopId::Outer, LoopId::Inner] {
                for p in RETURN_POWERS {
                    let policy = ForcedReturnPolicy {
                        drive_loop: id,
                        drive_power: RATED_POWER,
                        return_power: p,
                        t_act: T_SAT,
                        ..Default::default()
                    };
                    let config = ScenarioConfig {
                        drive: Drive::ForcedReturn(policy),
                        duration: T_SAT + 600.0,
                        ..base.clone()
                    };
                    let mut m = meta(format!("{id}_ret{p:.2}"), base);
                    m.drive_loop = Some(id);
                    m.power = RATED_POWER;
                    m.return_power = Some(p);
                    runs.push(PresetRun { meta: m, config });
                }
            }
        }
        PresetName::Alternating => {
            let schedule =
                alternating_schedule(LoopId::Outer, RATED_POWER, ALT_FIRST, ALT_SECOND, CYCLES)?;
            let config = scheduled(base, schedule, CYCLES as f64 * (ALT_FIRST + ALT_SECOND));
            let mut m = meta("outer_then_inner".into(), base);
            m.drive_loop = Some(LoopId::Outer);
            m.power = RATED_POWER;
            runs.push(PresetRun { meta: m, config });
        }
    }
    Ok(PresetPlan { name, runs })
}

pub const CYCLE_ON: f64 = 60.0;
pub const CYCLE_OFF: f64 = 60.0;
pub const CYCLES: usize = 5;
pub const ALT_FIRST: f64 = 50.0;
pub const ALT_SECOND: f64 = 30.0;

/// Runs every scenario of a plan (concurrently; results keep plan order)
/// and derives the summary.
pub fn run_plan(plan: &PresetPlan) -> Result<PresetOutcome, EngineError> {
    let runs = plan
        .runs
        .par_iter()
        .map(|r| {
            Ok(RunResult {
                meta: r.meta.clone(),
                result: run_scenario_detailed(&r.config)?,
            })
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    let (summary, metrics) = summarize(plan.name, &runs)?;
    Ok(PresetOutcome {
        name: plan.name,
        runs,
        summary,
        metrics,
    })
}

fn loop_name(id: Option<LoopId>) -> TableCell {
    id.map_or(TableCell::Text("none".into()), |l| {
        TableCell::Text(l.as_str().into())
    })
}

fn last_value(r: &RunResult, get: impl Fn(&super::TimeSeriesRecord) -> f64) -> f64 {
    r.result.records.last().map_or(0.0, get)
}

type Summary = (Table, Vec<(String, f64)>);

fn summarize(name: PresetName, runs: &[RunResult]) -> Result<Summary, EngineError> {
    match name {
        PresetName::PowerSweep => summarize_power_sweep(runs),
        PresetName::StepResponse => summarize_step(runs),
        PresetName::Cyclic => summarize_cyclic(runs),
        PresetName::AmbientSweep => summarize_ambient(runs),
        PresetName::ForcedReturn => summarize_return(runs),
        PresetName::Alternating => summarize_alternating(runs),
    }
}

fn summarize_power_sweep(runs: &[RunResult]) -> Result<Summary, EngineError> {
    let mut table = Table::new(&[
        "bopp_um",
        "loop",
        "power_W",
        "tip_disp_mm",
        "ref_disp_mm",
        "dT_K",
        "fit_slope_mm_per_W",
        "fit_r2",
    ]);
    let mut metrics = Vec::new();
    for bopp in BOPP_THICKNESSES_UM {
        for id in [LoopId::Outer, LoopId::Inner] {
            let group: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.meta.bopp_um == bopp && r.meta.drive_loop == Some(id))
                .collect();
            let xs: Vec<f64> = group.iter().map(|r| r.meta.power).collect();
            let ys: Vec<f64> = group
                .iter()
                .map(|r| last_value(r, |x| x.tip_disp))
                .collect();
            let fit = linear_fit(&xs, &ys).ok_or_else(|| {
                EngineError::Metric("power sweep needs two distinct powers".into())
            })?;
            metrics.push((format!("r2_bopp{bopp}_{id}"), fit.r_squared));
            metrics.push((format!("slope_bopp{bopp}_{id}"), fit.slope));
            for (r, y) in group.iter().zip(&ys) {
                let dt = last_value(r, |x| match id {
                    LoopId::Outer => x.dt_outer,
                    LoopId::Inner => x.dt_inner,
                });
                table.push(vec![
                    bopp.into(),
                    loop_name(Some(id)),
                    r.meta.power.into(),
                    (*y).into(),
                    last_value(r, |x| x.ref_disp).into(),
                    dt.into(),
                    fit.slope.into(),
                    fit.r_squared.into(),
                ]);
            }
        }
    }
    Ok((table, metrics))
}

fn summarize_step(runs: &[RunResult]) -> Result<Summary, EngineError> {
    let mut table = Table::new(&[
        "loop",
        "ref_disp_300s_mm",
        "tip_disp_300s_mm",
        "dT_300s_K",
        "rise_time_s",
        "relax_time_s",
        "normalized_30s_after_off",
    ]);
    let mut metrics = Vec::new();
    for r in runs {
        let id = r.meta.drive_loop.unwrap_or(LoopId::Outer);
        let series = &r.result.records;
        let sat = series_value_at(series, T_SAT)?;
        let tip = value_at(series, T_SAT, |x| x.tip_disp)?;
        let dt = value_at(series, T_SAT, |x| match id {
            LoopId::Outer => x.dt_outer,
            LoopId::Inner => x.dt_inner,
        })?;
        let rise = rise_time(series, 0.0, T_SAT, 0.9)?;
        let relax = time_to_fraction(series, 600.0, 0.1)?;
        let n30 = series_value_at(series, 630.0)? / series_value_at(series, 600.0)?;
        metrics.push((format!("sat_ref_disp_{id}_mm"), sat));
        metrics.push((format!("sat_dT_{id}_K"), dt));
        metrics.push((format!("rise_time_{id}_s"), rise));
        table.push(vec![
            loop_name(Some(id)),
            sat.into(),
            tip.into(),
            dt.into(),
            rise.into(),
            relax.into(),
            n30.into(),
        ]);
    }
    Ok((table, metrics))
}

fn summarize_cyclic(runs: &[RunResult]) -> Result<Summary, EngineError> {
    let mut table = Table::new(&[
        "loop",
        "cycle",
        "min_ref_disp_mm",
        "max_ref_disp_mm",
        "peak_to_peak_mm",
    ]);
    let mut metrics = Vec::new();
    for r in runs {
        let id = r.meta.drive_loop.unwrap_or(LoopId::Outer);
        let ext = cycle_extrema(&r.result.records, CYCLE_ON + CYCLE_OFF, CYCLES);
        for (k, e) in ext.iter().enumerate() {
            table.push(vec![
                loop_name(Some(id)),
                ((k + 1) as f64).into(),
                e.min.into(),
                e.max.into(),
                e.peak_to_peak().into(),
            ]);
        }
        if let [.., a, b] = ext.as_slice() {
            let change = (b.peak_to_peak() - a.peak_to_peak()).abs() / a.peak_to_peak().abs();
            metrics.push((format!("last_cycle_change_{id}"), change));
        }
    }
    Ok((table, metrics))
}

fn summarize_ambient(runs: &[RunResult]) -> Result<Summary, EngineError> {
    let mut table = Table::new(&[
        "device",
        "loop",
        "power_W",
        "dT_amb_K",
        "kappa_fit_per_cm",
        "tip_disp_mm",
        "ref_disp_mm",
    ]);
    let mut metrics = Vec::new();
    for r in runs {
        table.push(vec![
            r.meta.device.as_str().into(),
            loop_name(r.meta.drive_loop),
            r.meta.power.into(),
            r.meta.ambient_rise.into(),
            last_value(r, |x| x.kappa_fit).into(),
            last_value(r, |x| x.tip_disp).into(),
            last_value(r, |x| x.ref_disp).into(),
        ]);
    }
    for device in [Device::Meta, Device::Conventional] {
        // curvature magnitude (1/R) against ambient rise
        let points: Vec<(f64, f64)> = runs
            .iter()
            .filter(|r| r.meta.device == device && r.meta.drive_loop.is_none())
            .map(|r| (r.meta.ambient_rise, last_value(r, |x| x.kappa_fit).abs()))
            .collect();
        metrics.push((
            format!("c_{}_per_cm_K", device.as_str()),
            sensitivity_fit(&points)?,
        ));
    }
    Ok((table, metrics))
}

fn summarize_return(runs: &[RunResult]) -> Result<Summary, EngineError> {
    let mut table = Table::new(&[
        "drive_loop",
        "return_power_W",
        "time_to_0.1_s",
        "normalized_30s_after_switch",
        "return_done_s",
    ]);
    let mut metrics = Vec::new();
    for r in runs {
        let id = r.meta.drive_loop.unwrap_or(LoopId::Outer);
        let p = r.meta.return_power.unwrap_or(0.0);
        let series = &r.result.records;
        let t = first_time_normalized_below(series, T_SAT, 0.1)?;
        let n30 = series_value_at(series, T_SAT + 30.0)? / series_value_at(series, T_SAT)?;
        if let Some(t) = t {
            metrics.push((format!("t_return_{id}_p{p:.2}_s"), t));
        }
        metrics.push((format!("n30_{id}_p{p:.2}"), n30));
        table.push(vec![
            loop_name(Some(id)),
            p.into(),
            t.into(),
            n30.into(),
            r.result.return_done_at.into(),
        ]);
    }
    Ok((table, metrics))
}

fn summarize_alternating(runs: &[RunResult]) -> Result<Summary, EngineError> {
    let mut table = Table::new(&["cycle", "min_ref_disp_mm", "max_ref_disp_mm"]);
    let mut metrics = Vec::new();
    for r in runs {
        let ext = cycle_extrema(&r.result.records, ALT_FIRST + ALT_SECOND, CYCLES);
        for (k, e) in ext.iter().enumerate() {
            table.push(vec![((k + 1) as f64).into(), e.min.into(), e.max.into()]);
        }
        if let Some(last) = ext.last() {
            metrics.push(("last_cycle_min_mm".into(), last.min));
            metrics.push(("last_cycle_max_mm".into(), last.max));
        }
    }
    Ok((table, metrics))
}
