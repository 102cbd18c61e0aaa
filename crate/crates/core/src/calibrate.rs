//! Fitting the free physical parameters (convective coefficient, paper
//! expansion coefficient, moisture relaxation time) to measured scalars with
//! a bounded Nelder–Mead simplex.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::control::PowerSchedule;
use crate::engine::{
    rise_time, run_scenario, series_value_at, value_at, Drive, EngineError, ScenarioConfig,
};
use crate::model::{LoopId, PPM};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("objective is not finite at {0:?}")]
    NonFinite(Vec<f64>),
    #[error("parameter {name} = {value} is outside [{min}, {max}]")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("targets line {line}: {message}")]
    Targets { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// The three calibrated parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterSet {
    /// W m^-2 K^-1
    pub h: f64,
    /// K^-1
    pub alpha_eff_paper: f64,
    /// s
    pub tau_mech: f64,
}

pub const PARAM_NAMES: [&str; 3] = ["h", "alpha_eff_paper", "tau_mech"];

impl ParameterSet {
    pub const LOWER: ParameterSet = ParameterSet {
        h: 5.0,
        alpha_eff_paper: -200.0 * PPM,
        tau_mech: 0.0,
    };
    pub const UPPER: ParameterSet = ParameterSet {
        h: 30.0,
        alpha_eff_paper: 4.0 * PPM,
        tau_mech: 200.0,
    };

    pub fn to_array(self) -> [f64; 3] {
        [self.h, self.alpha_eff_paper, self.tau_mech]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        ParameterSet {
            h: x[0],
            alpha_eff_paper: x[1],
            tau_mech: x[2],
        }
    }

    /// Values currently set in a scenario.
    pub fn from_config(config: &ScenarioConfig) -> Self {
        ParameterSet {
            h: config.thermal.h,
            alpha_eff_paper: config.actuator.substrate.alpha_eff,
            tau_mech: config.mech.tau_mech,
        }
    }

    pub fn apply(&self, config: &mut ScenarioConfig) {
        config.thermal.h = self.h;
        config.actuator.substrate.alpha_eff = self.alpha_eff_paper;
        config.mech.tau_mech = self.tau_mech;
    }

    pub fn check_bounds(&self) -> Result<(), CalibError> {
        let (lo, hi) = (Self::LOWER.to_array(), Self::UPPER.to_array());
        for (k, v) in self.to_array().into_iter().enumerate() {
            if !(v >= lo[k] && v <= hi[k]) {
                return Err(CalibError::OutOfBounds {
                    name: PARAM_NAMES[k],
                    value: v,
                    min: lo[k],
                    max: hi[k],
                });
            }
        }
        Ok(())
    }

    /// Config fragment that sets these parameters when layered over a
    /// scenario file.
    pub fn to_fragment(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[thermal]\nh = {}\n", self.h);
        let _ = writeln!(s, "[mechanics]\ntau_mech = {}\n", self.tau_mech);
        let _ = writeln!(
            s,
            "[material.paper]\nalpha_eff_ppm = {}",
            self.alpha_eff_paper / PPM
        );
        s
    }
}

/// Scalars the fit can match, all taken from 0.75 W single-loop steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    /// |reference displacement| after 300 s, mm.
    OuterRefDisp,
    InnerRefDisp,
    /// Heater mean rise after 300 s, K.
    OuterDeltaT,
    InnerDeltaT,
    /// Inner over outer heater rise.
    DeltaTRatio,
    /// Time to 90 % of the 300 s displacement, s.
    OuterRiseTime,
    InnerRiseTime,
    /// Displacement 30 s after the power is cut, over its value at cutoff.
    OuterPassiveN30,
    InnerPassiveN30,
}

impl Observable {
    pub const ALL: [Observable; 9] = [
        Observable::OuterRefDisp,
        Observable::InnerRefDisp,
        Observable::OuterDeltaT,
        Observable::InnerDeltaT,
        Observable::DeltaTRatio,
        Observable::OuterRiseTime,
        Observable::InnerRiseTime,
        Observable::OuterPassiveN30,
        Observable::InnerPassiveN30,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Observable::OuterRefDisp => "outer_ref_disp",
            Observable::InnerRefDisp => "inner_ref_disp",
            Observable::OuterDeltaT => "outer_dT",
            Observable::InnerDeltaT => "inner_dT",
            Observable::DeltaTRatio => "dT_ratio",
            Observable::OuterRiseTime => "outer_rise_time",
            Observable::InnerRiseTime => "inner_rise_time",
            Observable::OuterPassiveN30 => "outer_passive_n30",
            Observable::InnerPassiveN30 => "inner_passive_n30",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Observable::OuterRefDisp | Observable::InnerRefDisp => "mm",
            Observable::OuterDeltaT | Observable::InnerDeltaT => "K",
            Observable::DeltaTRatio | Observable::OuterPassiveN30 | Observable::InnerPassiveN30 => {
                "1"
            }
            Observable::OuterRiseTime | Observable::InnerRiseTime => "s",
        }
    }
}

impl FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Observable::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| format!("unknown observable `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTarget {
    pub observable: Observable,
    pub value: f64,
    pub weight: f64,
}

impl CalibrationTarget {
    pub fn new(observable: Observable, value: f64, weight: f64) -> Result<Self, CalibError> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(CalibError::Invalid(format!(
                "weight must be positive (got {weight})"
            )));
        }
        if !(value.is_finite() && value != 0.0) {
            return Err(CalibError::Invalid(format!(
                "target value must be finite and non-zero (got {value})"
            )));
        }
        Ok(CalibrationTarget {
            observable,
            value,
            weight,
        })
    }
}

/// Measured anchors of the 51 um device.
pub fn default_targets() -> Vec<CalibrationTarget> {
    use Observable::*;
    [
        (OuterRefDisp, 28.0, 1.0),
        (InnerRefDisp, 37.0, 1.0),
        (DeltaTRatio, 1.32, 1.0),
        (InnerDeltaT, 12.5, 1.0),
        (OuterRiseTime, 200.0, 0.5),
        (InnerRiseTime, 150.0, 0.5),
        (OuterPassiveN30, 0.45, 0.5),
        (InnerPassiveN30, 0.45, 0.5),
    ]
    .into_iter()
    .map(|(o, v, w)| CalibrationTarget {
        observable: o,
        value: v,
        weight: w,
    })
    .collect()
}

/// Parses `name,value,unit,weight` rows (header required).
pub fn parse_targets(text: &str) -> Result<Vec<CalibrationTarget>, CalibError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CalibError::Targets {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if header.iter().collect::<Vec<_>>() != ["name", "value", "unit", "weight"] {
        return Err(CalibError::Targets {
            line: 1,
            message: "header must be `name,value,unit,weight`".into(),
        });
    }
    let mut targets = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CalibError::Targets {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let err = |message: String| CalibError::Targets { line, message };
        let observable: Observable = row[0].parse().map_err(err)?;
        if row[2] != *observable.unit() {
            return Err(err(format!(
                "{} is in {}, not `{}`",
                observable.as_str(),
                observable.unit(),
                &row[2]
            )));
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|_| err(format!("{what} `{s}` is not a number")))
        };
        let target =
            CalibrationTarget::new(observable, num(&row[1], "value")?, num(&row[3], "weight")?)
                .map_err(|e| err(e.to_string()))?;
        targets.push(target);
    }
    if targets.is_empty() {
        return Err(CalibError::Targets {
            line: 1,
            message: "no targets".into(),
        });
    }
    Ok(targets)
}

pub fn targets_to_csv(targets: &[CalibrationTarget]) -> String {
    let mut s = String::from("name,value,unit,weight\n");
    for t in targets {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            t.observable.as_str(),
            t.value,
            t.observable.unit(),
            t.weight
        );
    }
    s
}

/// Simulated values of every observable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub values: [f64; 9],
}

impl Observables {
    pub fn get(&self, o: Observable) -> f64 {
        self.values[o as usize]
    }
}

/// Length of the calibration steps and the time their values are read, s.
pub const STEP_SECONDS: f64 = 300.0;
pub const STEP_POWER: f64 = 0.75;
/// Passive cooling observed after each step, s.
pub const COOL_SECONDS: f64 = 30.0;

/// Runs the outer and inner 0.75 W steps (followed by passive cooling) on
/// `base` with `params` applied.
pub fn simulate_observables(
    params: &ParameterSet,
    base: &ScenarioConfig,
) -> Result<Observables, CalibError> {
    params.check_bounds()?;
    let step = |id: LoopId| -> Result<[f64; 4], CalibError> {
        let mut config = base.clone();
        params.apply(&mut config);
        config.drive = Drive::Schedule(
            PowerSchedule::step(id, STEP_POWER, 0.0, STEP_SECONDS).map_err(EngineError::from)?,
        );
        config.duration = STEP_SECONDS + COOL_SECONDS;
        let series = run_scenario(&config)?;
        let signed = series_value_at(&series, STEP_SECONDS)?;
        let dt = value_at(&series, STEP_SECONDS, |r| match id {
            LoopId::Outer => r.dt_outer,
            LoopId::Inner => r.dt_inner,
        })?;
        let rise = rise_time(&series, 0.0, STEP_SECONDS, 0.9)?;
        let n30 = series_value_at(&series, STEP_SECONDS + COOL_SECONDS)? / signed;
        Ok([signed.abs(), dt, rise, n30])
    };
    let (outer, inner) = rayon::join(|| step(LoopId::Outer), || step(LoopId::Inner));
    let ([d_o, t_o, r_o, n_o], [d_i, t_i, r_i, n_i]) = (outer?, inner?);
    let mut values = [0.0; 9];
    values[Observable::OuterRefDisp as usize] = d_o;
    values[Observable::InnerRefDisp as usize] = d_i;
    values[Observable::OuterDeltaT as usize] = t_o;
    values[Observable::InnerDeltaT as usize] = t_i;
    values[Observable::DeltaTRatio as usize] = t_i / t_o;
    values[Observable::OuterRiseTime as usize] = r_o;
    values[Observable::InnerRiseTime as usize] = r_i;
    values[Observable::OuterPassiveN30 as usize] = n_o;
    values[Observable::InnerPassiveN30 as usize] = n_i;
    Ok(Observables { values })
}

/// Weighted sum of squared relative misfits.
pub fn misfit(observed: &Observables, targets: &[CalibrationTarget]) -> f64 {
    targets
        .iter()
        .map(|t| {
            let rel = (observed.get(t.observable) - t.value) / t.value;
            t.weight * rel * rel
        })
        .sum()
}

pub fn objective(
    params: &ParameterSet,
    targets: &[CalibrationTarget],
    base: &ScenarioConfig,
) -> Result<f64, CalibError> {
    let value = misfit(&simulate_observables(params, base)?, targets);
    if !value.is_finite() {
        return Err(CalibError::NonFinite(params.to_array().to_vec()));
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Initial step along each axis, as a fraction of the bound range.
    pub initial_step: f64,
    /// Stop once every vertex is this close to the best one, per axis and
    /// relative to the bound range.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            initial_step: 0.05,
            tolerance: 1e-4,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Best value after initialization and after each iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Bounded Nelder–Mead. Trial points are projected onto the box.
pub fn nelder_mead<F>(
    f: F,
    init: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &SimplexOptions,
) -> Result<Minimum, CalibError>
where
    F: Fn(&[f64]) -> Result<f64, CalibError> + Sync,
{
    let n = init.len();
    if lower.len() != n || upper.len() != n {
        return Err(CalibError::Invalid(
            "bounds and start point differ in length".into(),
        ));
    }
    for k in 0..n {
        if !(lower[k] < upper[k]) {
            return Err(CalibError::Invalid(format!(
                "empty bound interval on axis {k}"
            )));
        }
        if !(init[k] >= lower[k] && init[k] <= upper[k]) {
            return Err(CalibError::Invalid(format!(
                "start point outside bounds on axis {k}"
            )));
        }
    }
    let range: Vec<f64> = lower.iter().zip(upper).map(|(a, b)| b - a).collect();
    let project = |x: Vec<f64>| -> Vec<f64> {
        x.into_iter()
            .enumerate()
            .map(|(k, v)| v.clamp(lower[k], upper[k]))
            .collect()
    };
    let eval = |x: &[f64]| -> Result<f64, CalibError> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CalibError::NonFinite(x.to_vec()))
        }
    };

    let f0 = eval(init)?;
    let mut evaluations = 1;
    if f0 == 0.0 {
        return Ok(Minimum {
            x: init.to_vec(),
            value: 0.0,
            trace: vec![0.0],
            iterations: 0,
            evaluations,
            converged: true,
        });
    }

    let mut vertices: Vec<Vec<f64>> = vec![init.to_vec()];
    for k in 0..n {
        let mut v = init.to_vec();
        let step = opts.initial_step * range[k];
        v[k] = if v[k] + step <= upper[k] {
            v[k] + step
        } else {
            v[k] - step
        };
        vertices.push(v);
    }
    let rest: Vec<f64> = vertices[1..]
        .par_iter()
        .map(|v| eval(v))
        .collect::<Result<_, _>>()?;
    evaluations += n;
    let mut simplex: Vec<(Vec<f64>, f64)> = vertices
        .into_iter()
        .zip(std::iter::once(f0).chain(rest))
        .collect();

    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);
    let mut trace = vec![simplex[0].1];
    let converged = |s: &[(Vec<f64>, f64)]| {
        s[1..].iter().all(|(v, _)| {
            v.iter()
                .zip(&s[0].0)
                .enumerate()
                .all(|(k, (a, b))| (a - b).abs() <= opts.tolerance * range[k])
        })
    };

    let mut iterations = 0;
    let mut done = converged(&simplex);
    while !done && iterations < opts.max_iterations {
        iterations += 1;
        let worst = simplex[n].clone();
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(v, _)| v[k]).sum::<f64>() / n as f64)
            .collect();
        let towards = |coef: f64, from: &[f64]| -> Vec<f64> {
            project(
                centroid
                    .iter()
                    .zip(from)
                    .map(|(c, w)| c + coef * (c - w))
                    .collect(),
            )
        };

        let xr = towards(opts.reflection, &worst.0);
        let fr = eval(&xr)?;
        evaluations += 1;
        let mut replacement = None;
        if fr < simplex[0].1 {
            let xe = towards(opts.reflection * opts.expansion, &worst.0);
            let fe = eval(&xe)?;
            evaluations += 1;
            replacement = Some(if fe < fr { (xe, fe) } else { (xr, fr) });
        } else if fr < simplex[n - 1].1 {
            replacement = Some((xr, fr));
        } else if fr < worst.1 {
            let xc = towards(opts.reflection * opts.contraction, &worst.0);
            let fc = eval(&xc)?;
            evaluations += 1;
            if fc <= fr {
                replacement = Some((xc, fc));
            }
        } else {
            let xc = towards(-opts.contraction, &worst.0);
            let fc = eval(&xc)?;
            evaluations += 1;
            if fc < worst.1 {
                replacement = Some((xc, fc));
            }
        }

        match replacement {
            Some(v) => simplex[n] = v,
            None => {
                let best = simplex[0].0.clone();
                let shrunk: Vec<Vec<f64>> = simplex[1..]
                    .iter()
                    .map(|(v, _)| {
                        project(
                            best.iter()
                                .zip(v)
                                .map(|(b, x)| b + opts.shrink * (x - b))
                                .collect(),
                        )
                    })
                    .collect();
                let values: Vec<f64> = shrunk
                    .par_iter()
                    .map(|v| eval(v))
                    .collect::<Result<_, _>>()?;
                evaluations += n;
                for (slot, pair) in simplex[1..].iter_mut().zip(shrunk.into_iter().zip(values)) {
                    *slot = pair;
                }
            }
        }
        order(&mut simplex);
        trace.push(simplex[0].1);
        done = converged(&simplex);
    }

    let (x, value) = simplex.swap_remove(0);
    Ok(Minimum {
        x,
        value,
        trace,
        iterations,
        evaluations,
        converged: done,
    })
}

/// Fitted parameters with the objective history.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: ParameterSet,
    pub objective: f64,
    pub observables: Observables,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits the three parameters to `targets`, starting at `init`, on the
/// device and settings of `base`.
pub fn fit(
    targets: &[CalibrationTarget],
    init: &ParameterSet,
    base: &ScenarioConfig,
    opts: &SimplexOptions,
) -> Result<FitResult, CalibError> {
    if targets.is_empty() {
        return Err(CalibError::Invalid("no calibration targets".into()));
    }
    init.check_bounds()?;
    let min = nelder_mead(
        |x| objective(&ParameterSet::from_slice(x), targets, base),
        &init.to_array(),
        &ParameterSet::LOWER.to_array(),
        &ParameterSet::UPPER.to_array(),
        opts,
    )?;
    let params = ParameterSet::from_slice(&min.x);
    Ok(FitResult {
        params,
        objective: min.value,
        observables: simulate_observables(&params, base)?,
        trace: min.trace,
        iterations: min.iterations,
        converged: min.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad(x: &[f64]) -> Result<f64, CalibError> {
        let m = [0.3, -0.7, 1.9];
        let s = [1.0, 4.0, 0.25];
        Ok(x.iter()
            .zip(m)
            .zip(s)
            .map(|((a, b), c)| c * (a - b) * (a - b))
            .sum())
    }

    #[test]
    fn finds_the_minimum_of_a_quadratic() {
        let lo = [-2.0, -2.0, -2.0];
        let hi = [3.0, 3.0, 3.0];
        let opts = SimplexOptions {
            tolerance: 1e-9,
            max_iterations: 2000,
            ..Default::default()
        };
        let m = nelder_mead(quad, &[1.0, 1.0, 1.0], &lo, &hi, &opts).unwrap();
        assert!(m.converged);
        for (a, b) in m.x.iter().zip([0.3, -0.7, 1.9]) {
            assert!((a - b).abs() < 1e-6, "{:?}", m.x);
        }
        assert!(m.value < 1e-12);
    }

    #[test]
    fn default_tolerance_reaches_the_minimum_value() {
        let m = nelder_mead(
            quad,
            &[1.0, 1.0, 1.0],
            &[-2.0; 3],
            &[3.0; 3],
            &Default::default(),
        )
        .unwrap();
        assert!(m.converged);
        assert!(m.value < 1e-6);
    }

    #[test]
    fn minimum_on_the_boundary_is_reached_by_projection() {
        // unconstrained minimum at x = 5, outside the box
        let f = |x: &[f64]| Ok((x[0] - 5.0).powi(2) + (x[1] - 0.5).powi(2));
        let opts = SimplexOptions {
            tolerance: 1e-9,
            ..Default::default()
        };
        let m = nelder_mead(f, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0], &opts).unwrap();
        assert!(
            (m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 0.5).abs() < 1e-6,
            "{:?}",
            m.x
        );
    }

    #[test]
    fn zero_at_start_returns_the_start() {
        let f = |x: &[f64]| Ok((x[0] - 0.5).powi(2));
        let m = nelder_mead(f, &[0.5], &[0.0], &[1.0], &Default::default()).unwrap();
        assert_eq!(m.x, vec![0.5]);
        assert_eq!(m.value, 0.0);
        assert_eq!(m.iterations, 0);
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let f = |x: &[f64]| Ok(if x[0] > 0.52 { f64::NAN } else { x[0] });
        let r = nelder_mead(f, &[0.5], &[0.0], &[1.0], &Default::default());
        assert!(matches!(r, Err(CalibError::NonFinite(_))));
    }

    #[test]
    fn invalid_start_is_rejected() {
        let r = nelder_mead(
            quad,
            &[5.0, 0.0, 0.0],
            &[-1.0; 3],
            &[1.0; 3],
            &Default::default(),
        );
        assert!(matches!(r, Err(CalibError::Invalid(_))));
    }

    #[test]
    fn rosenbrock_converges() {
        let f = |x: &[f64]| Ok(100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2));
        let opts = SimplexOptions {
            tolerance: 1e-8,
            max_iterations: 5000,
            ..Default::default()
        };
        let m = nelder_mead(f, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &opts).unwrap();
        assert!(
            (m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4,
            "{:?}",
            m.x
        );
    }

    #[test]
    fn misfit_is_zero_on_target_and_linear_in_weights() {
        let obs = Observables {
            values: [28.0, 37.0, 9.5, 12.5, 1.32, 200.0, 150.0, 0.45, 0.45],
        };
        let targets = default_targets();
        assert_eq!(misfit(&obs, &targets), 0.0);
        let off = Observables {
            values: [30.0, 33.0, 9.0, 12.0, 1.4, 180.0, 170.0, 0.4, 0.5],
        };
        let doubled: Vec<_> = targets
            .iter()
            .map(|t| CalibrationTarget {
                weight: 2.0 * t.weight,
                ..t.clone()
            })
            .collect();
        let a = misfit(&off, &targets);
        assert!(a > 0.0);
        assert!((misfit(&off, &doubled) - 2.0 * a).abs() < 1e-15 * a);
        // hand value for the outer displacement term alone
        let one = [targets[0].clone()];
        assert!((misfit(&off, &one) - (2.0f64 / 28.0).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn targets_round_trip_through_csv() {
        let t = default_targets();
        assert_eq!(parse_targets(&targets_to_csv(&t)).unwrap(), t);
    }

    #[test]
    fn malformed_targets_report_the_line() {
        let text = "name,value,unit,weight\nouter_ref_disp,28,mm,1\ninner_ref_disp,37,mm,0\n";
        match parse_targets(text) {
            Err(CalibError::Targets { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let wrong_unit = "name,value,unit,weight\nouter_ref_disp,28,cm,1\n";
        assert!(parse_targets(wrong_unit).is_err());
        let unknown = "name,value,unit,weight\ntip_angle,28,deg,1\n";
        assert!(parse_targets(unknown).is_err());
        assert!(parse_targets("name,value\n").is_err());
    }

    #[test]
    fn bounds_are_enforced() {
        let mut p = ParameterSet::from_config(&ScenarioConfig::default());
        assert!(p.check_bounds().is_ok());
        p.h = 40.0;
        assert!(matches!(
            p.check_bounds(),
            Err(CalibError::OutOfBounds { name: "h", .. })
        ));
        p.h = 10.0;
        p.alpha_eff_paper = 10.0 * PPM;
        assert!(p.check_bounds().is_err());
    }

    #[test]
    fn applied_parameters_read_back() {
        let p = ParameterSet {
            h: 17.0,
            alpha_eff_paper: -90.0 * PPM,
            tau_mech: 75.0,
        };
        let mut c = ScenarioConfig::default();
        p.apply(&mut c);
        assert_eq!(ParameterSet::from_config(&c), p);
    }

    #[test]
    fn matching_simulated_observables_gives_zero_objective() {
        let mut base = ScenarioConfig::default();
        base.actuator.cells = 40;
        base.thermal.dt = 0.5;
        let p = ParameterSet::from_config(&base);
        let obs = simulate_observables(&p, &base).unwrap();
        let targets: Vec<_> = Observable::ALL
            .iter()
            .map(|&o| CalibrationTarget::new(o, obs.get(o), 1.0).unwrap())
            .collect();
        assert_eq!(objective(&p, &targets, &base).unwrap(), 0.0);
        assert!(
            (obs.get(Observable::DeltaTRatio)
                - obs.get(Observable::InnerDeltaT) / obs.get(Observable::OuterDeltaT))
            .abs()
                < 1e-15
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn trace_is_monotone_and_result_in_bounds(
            m in prop::collection::vec(-3.0f64..3.0, 2),
            start in prop::collection::vec(-1.0f64..1.0, 2),
        ) {
            let f = |x: &[f64]| Ok((x[0] - m[0]).powi(2) + 3.0 * (x[1] - m[1]).powi(2) + 0.5 * x[0] * x[1]);
            let r = nelder_mead(f, &start, &[-1.0, -1.0], &[1.0, 1.0], &Default::default()).unwrap();
            prop_assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(r.x.iter().all(|v| (-1.0..=1.0).contains(v)));
            prop_assert_eq!(*r.trace.last().unwrap(), r.value);
            let again = nelder_mead(f, &start, &[-1.0, -1.0], &[1.0, 1.0], &Default::default()).unwrap();
            prop_assert_eq!(again, r);
        }
    }
}
