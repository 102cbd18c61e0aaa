//! Transient heat balance along the actuator length.
//!
//! Every cell holds one temperature per lane (through-thickness Biot number
//! h*t/k is about 0.02). Lanes exchange heat through the substrate along the
//! length and, between the top and bottom tracks, across the gap that
//! separates them. Joule power is apportioned by footprint area and both
//! faces lose heat by convection. Ends are adiabatic.

use thiserror::Error;

use crate::model::{DiscretizedActuator, LoopId, LoopProfile, LANES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThermalError {
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("explicit step dt = {dt} s exceeds the stability bound {limit} s")]
    Unstable { dt: f64, limit: f64 },
    #[error("non-finite temperature in cell {cell}")]
    NonFinite { cell: usize },
    #[error("loop power must be non-negative (got {0})")]
    NegativePower(f64),
    #[error("heater loop has an empty footprint")]
    EmptyFootprint,
    #[error("state has {state} cells but the actuator has {actuator}")]
    SizeMismatch { state: usize, actuator: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Backward Euler with a direct tridiagonal solve.
    Implicit,
    /// Forward Euler; `dt` is checked against the stability bound.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalParams {
    /// Convective coefficient, W m^-2 K^-1.
    pub h: f64,
    /// s
    pub dt: f64,
    pub scheme: Scheme,
}

impl Default for ThermalParams {
    fn default() -> Self {
        ThermalParams {
            h: 10.0,
            dt: 0.1,
            scheme: Scheme::Implicit,
        }
    }
}

impl ThermalParams {
    pub fn validate(&self) -> Result<(), ThermalError> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(ThermalError::NonPositive {
                name: "h",
                value: self.h,
            });
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ThermalError::NonPositive {
                name: "dt",
                value: self.dt,
            });
        }
        Ok(())
    }
}

/// Per-lane values of one cell.
pub type LaneValues = [f64; LANES];
type Block = [[f64; LANES]; LANES];

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    /// Lane temperatures per cell, degC. Lanes without width stay at ambient.
    pub temperature: Vec<LaneValues>,
    /// degC
    pub ambient: f64,
    /// Elapsed time, s.
    pub time: f64,
}

impl ThermalState {
    pub fn at_ambient(cells: usize, ambient: f64) -> Self {
        ThermalState {
            temperature: vec![[ambient; LANES]; cells],
            ambient,
            time: 0.0,
        }
    }

    /// Temperature rise above ambient per cell and lane.
    pub fn rise(&self) -> Vec<LaneValues> {
        self.temperature
            .iter()
            .map(|t| t.map(|v| v - self.ambient))
            .collect()
    }

    /// Hottest lane temperature of each cell.
    pub fn cell_max(&self) -> Vec<f64> {
        self.temperature
            .iter()
            .map(|t| t.iter().cloned().fold(f64::MIN, f64::max))
            .collect()
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ThermalError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ThermalError::NonPositive { name, value })
    }
}

fn check_powers(powers: [f64; 2]) -> Result<(), ThermalError> {
    for p in powers {
        if p < 0.0 || !p.is_finite() {
            return Err(ThermalError::NegativePower(p));
        }
    }
    Ok(())
}

/// Ratio of convective exchange to in-plane conduction between two heater
/// tracks, h*w*dd / (k*t). Values far above 1 mean negligible cross-talk.
pub fn crosstalk_ratio(
    h: f64,
    track_width: f64,
    center_spacing: f64,
    conductivity: f64,
    thickness: f64,
) -> Result<f64, ThermalError> {
    check_positive("h", h)?;
    check_positive("track_width", track_width)?;
    check_positive("center_spacing", center_spacing)?;
    check_positive("conductivity", conductivity)?;
    check_positive("thickness", thickness)?;
    Ok(h * track_width * center_spacing / (conductivity * thickness))
}

/// Through-thickness conductance under a loop footprint over the in-plane
/// substrate conductance across the loop spacing:
/// (k*A/t) / (k*W*t/dd) = A*dd / (W*t^2).
pub fn out_of_plane_ratio(
    footprint_area: f64,
    width: f64,
    thickness: f64,
    center_spacing: f64,
) -> Result<f64, ThermalError> {
    if !(footprint_area > 0.0) {
        return Err(ThermalError::EmptyFootprint);
    }
    check_positive("width", width)?;
    check_positive("thickness", thickness)?;
    check_positive("center_spacing", center_spacing)?;
    Ok(footprint_area * center_spacing / (width * thickness * thickness))
}

/// [`out_of_plane_ratio`] for one loop of a discretized actuator.
pub fn loop_out_of_plane_ratio(
    actuator: &DiscretizedActuator,
    id: LoopId,
    center_spacing: f64,
) -> Result<f64, ThermalError> {
    let lp = actuator
        .loop_profile(id)
        .ok_or(ThermalError::EmptyFootprint)?;
    out_of_plane_ratio(
        lp.footprint_area,
        actuator.width,
        actuator.substrate.thickness,
        center_spacing,
    )
}

/// Lumped steady rise P / (h*A).
pub fn lumped_saturation(power: f64, h: f64, area: f64) -> Result<f64, ThermalError> {
    if power < 0.0 {
        return Err(ThermalError::NegativePower(power));
    }
    check_positive("h", h)?;
    check_positive("area", area)?;
    Ok(power / (h * area))
}

/// Joule source per cell and lane for the given loop powers, W.
pub fn heat_sources(actuator: &DiscretizedActuator, p_outer: f64, p_inner: f64) -> Vec<LaneValues> {
    let mut q = vec![[0.0; LANES]; actuator.len()];
    for lp in &actuator.loops {
        let p = match lp.id {
            LoopId::Outer => p_outer,
            LoopId::Inner => p_inner,
        };
        if p == 0.0 {
            continue;
        }
        for (qi, w) in q.iter_mut().zip(&lp.lane_weights) {
            for l in 0..LANES {
                qi[l] += p * w[l];
            }
        }
    }
    q
}

fn lateral(actuator: &DiscretizedActuator, i: usize) -> f64 {
    if actuator.lane_active(i, 0) && actuator.lane_active(i, 1) {
        actuator.lateral_conductance[i]
    } else {
        0.0
    }
}

/// Explicit-scheme stability limit: min over active lanes of
/// C / (sum of conductances + h*A).
pub fn explicit_dt_limit(actuator: &DiscretizedActuator, h: f64) -> f64 {
    let op = Operator::assemble(actuator, h);
    let mut limit = f64::INFINITY;
    for i in 0..actuator.len() {
        for l in 0..LANES {
            if actuator.lane_active(i, l) {
                limit = limit.min(actuator.heat_capacity[i][l] / op.diag[i][l][l]);
            }
        }
    }
    limit
}

/// Conduction-convection operator without capacity terms. `lower[i]` and
/// `upper[i]` hold the (diagonal) couplings of cell i to cells i-1 and i+1.
struct Operator {
    lower: Vec<LaneValues>,
    diag: Vec<Block>,
    upper: Vec<LaneValues>,
}

impl Operator {
    fn assemble(actuator: &DiscretizedActuator, h: f64) -> Self {
        let n = actuator.len();
        let mut lower = vec![[0.0; LANES]; n];
        let mut diag = vec![[[0.0; LANES]; LANES]; n];
        let mut upper = vec![[0.0; LANES]; n];
        for i in 0..n {
            for l in 0..LANES {
                diag[i][l][l] = h * actuator.convective_area[i][l];
                if i > 0 {
                    let g = actuator.conductance[i - 1][l];
                    lower[i][l] = -g;
                    diag[i][l][l] += g;
                }
                if i + 1 < n {
                    let g = actuator.conductance[i][l];
                    upper[i][l] = -g;
                    diag[i][l][l] += g;
                }
            }
            let g = lateral(actuator, i);
            diag[i][0][0] += g;
            diag[i][1][1] += g;
            diag[i][0][1] -= g;
            diag[i][1][0] -= g;
        }
        Operator { lower, diag, upper }
    }

    fn apply(&self, x: &[LaneValues]) -> Vec<LaneValues> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut y = mat_vec(&self.diag[i], &x[i]);
                for l in 0..LANES {
                    if i > 0 {
                        y[l] += self.lower[i][l] * x[i - 1][l];
                    }
                    if i + 1 < n {
                        y[l] += self.upper[i][l] * x[i + 1][l];
                    }
                }
                y
            })
            .collect()
    }
}

fn mat_vec(m: &Block, v: &LaneValues) -> LaneValues {
    std::array::from_fn(|r| (0..LANES).map(|c| m[r][c] * v[c]).sum())
}

fn invert(m: &Block) -> Block {
    let mut a = *m;
    let mut inv: Block = std::array::from_fn(|r| std::array::from_fn(|c| (r == c) as u8 as f64));
    for col in 0..LANES {
        let pivot = (col..LANES)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for c in 0..LANES {
            a[col][c] /= d;
            inv[col][c] /= d;
        }
        for r in 0..LANES {
            if r != col {
                let f = a[r][col];
                for c in 0..LANES {
                    a[r][c] -= f * a[col][c];
                    inv[r][c] -= f * inv[col][c];
                }
            }
        }
    }
    inv
}

/// Block Thomas solve with dense diagonal blocks and diagonal off-diagonal
/// blocks. The solution overwrites `rhs`.
fn solve_block_tridiagonal(
    lower: &[LaneValues],
    diag: &[Block],
    upper: &[LaneValues],
    rhs: &mut [LaneValues],
) {
    let n = rhs.len();
    if n == 0 {
        return;
    }
    let mut c: Vec<Block> = vec![[[0.0; LANES]; LANES]; n];
    for i in 0..n {
        let mut m = diag[i];
        let mut r = rhs[i];
        if i > 0 {
            for row in 0..LANES {
                for col in 0..LANES {
                    m[row][col] -= lower[i][row] * c[i - 1][row][col];
                }
                r[row] -= lower[i][row] * rhs[i - 1][row];
            }
        }
        let inv = invert(&m);
        c[i] = std::array::from_fn(|row| std::array::from_fn(|col| inv[row][col] * upper[i][col]));
        rhs[i] = mat_vec(&inv, &r);
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        let corr = mat_vec(&c[i], &next);
        for l in 0..LANES {
            rhs[i][l] -= corr[l];
        }
    }
}

/// Pins lanes without width to zero rise.
fn pin_inactive(actuator: &DiscretizedActuator, diag: &mut [Block], rhs: &mut [LaneValues]) {
    for i in 0..actuator.len() {
        for l in 0..LANES {
            if !actuator.lane_active(i, l) {
                diag[i][l] = [0.0; LANES];
                diag[i][l][l] = 1.0;
                rhs[i][l] = 0.0;
            }
        }
    }
}

fn into_state(
    rise: Vec<LaneValues>,
    ambient: f64,
    time: f64,
) -> Result<ThermalState, ThermalError> {
    if let Some(cell) = rise.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(ThermalError::NonFinite { cell });
    }
    Ok(ThermalState {
        temperature: rise.into_iter().map(|r| r.map(|v| ambient + v)).collect(),
        ambient,
        time,
    })
}

/// Advances the temperature field by one `params.dt`.
pub fn step_thermal(
    state: &ThermalState,
    p_outer: f64,
    p_inner: f64,
    params: &ThermalParams,
    actuator: &DiscretizedActuator,
) -> Result<ThermalState, ThermalError> {
    params.validate()?;
    let n = actuator.len();
    if state.temperature.len() != n {
        return Err(ThermalError::SizeMismatch {
            state: state.temperature.len(),
            actuator: n,
        });
    }
    check_powers([p_outer, p_inner])?;
    let q = heat_sources(actuator, p_outer, p_inner);
    let rise = state.rise();
    let op = Operator::assemble(actuator, params.h);
    let dt = params.dt;

    let next = match params.scheme {
        Scheme::Implicit => {
            let mut rhs: Vec<LaneValues> = (0..n)
                .map(|i| {
                    std::array::from_fn(|l| {
                        actuator.heat_capacity[i][l] / dt * rise[i][l] + q[i][l]
                    })
                })
                .collect();
            let mut diag = op.diag.clone();
            for (i, d) in diag.iter_mut().enumerate() {
                for l in 0..LANES {
                    d[l][l] += actuator.heat_capacity[i][l] / dt;
                }
            }
            pin_inactive(actuator, &mut diag, &mut rhs);
            solve_block_tridiagonal(&op.lower, &diag, &op.upper, &mut rhs);
            rhs
        }
        Scheme::Explicit => {
            let limit = explicit_dt_limit(actuator, params.h);
            if dt > limit {
                return Err(ThermalError::Unstable { dt, limit });
            }
            let flux = op.apply(&rise);
            (0..n)
                .map(|i| {
                    std::array::from_fn(|l| {
                        if actuator.lane_active(i, l) {
                            rise[i][l] + dt * (q[i][l] - flux[i][l]) / actuator.heat_capacity[i][l]
                        } else {
                            0.0
                        }
                    })
                })
                .collect()
        }
    };
    into_state(next, state.ambient, state.time + dt)
}

/// Steady temperature field for constant loop powers.
pub fn steady_state(
    actuator: &DiscretizedActuator,
    p_outer: f64,
    p_inner: f64,
    h: f64,
    ambient: f64,
) -> Result<ThermalState, ThermalError> {
    check_positive("h", h)?;
    check_powers([p_outer, p_inner])?;
    let op = Operator::assemble(actuator, h);
    let mut diag = op.diag.clone();
    let mut rise = heat_sources(actuator, p_outer, p_inner);
    pin_inactive(actuator, &mut diag, &mut rise);
    solve_block_tridiagonal(&op.lower, &diag, &op.upper, &mut rise);
    into_state(rise, ambient, f64::INFINITY)
}

/// Total convective loss of a state, W.
pub fn convective_loss(state: &ThermalState, actuator: &DiscretizedActuator, h: f64) -> f64 {
    state
        .rise()
        .iter()
        .zip(&actuator.convective_area)
        .map(|(r, a)| (0..LANES).map(|l| h * a[l] * r[l]).sum::<f64>())
        .sum()
}

/// Footprint-weighted mean rise over a loop's tracks (emulates averaging
/// thermal-camera readings taken along the heater tracks).
pub fn heater_mean_temp(state: &ThermalState, profile: &LoopProfile) -> Result<f64, ThermalError> {
    let total: f64 = profile.lane_weights.iter().flatten().sum();
    if !(total > 0.0) {
        return Err(ThermalError::EmptyFootprint);
    }
    let sum: f64 = state
        .temperature
        .iter()
        .zip(&profile.lane_weights)
        .map(|(t, w)| {
            (0..LANES)
                .map(|l| w[l] * (t[l] - state.ambient))
                .sum::<f64>()
        })
        .sum();
    Ok(sum / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        discretize, validate_spec, ActuatorSpec, Lane, Material, Rect, Side, MM, UM,
    };

    fn default_actuator(cells: usize) -> DiscretizedActuator {
        let mut spec = ActuatorSpec::meta_default(51.0 * UM);
        spec.cells = cells;
        discretize(&validate_spec(&spec).unwrap())
    }

    /// One cell covering the whole plan, for comparison with the lumped
    /// exponential.
    fn single_cell() -> DiscretizedActuator {
        let spec = ActuatorSpec::meta_default(51.0 * UM);
        let plan = spec.length * spec.width;
        let c = spec.substrate.heat_capacity_per_area() * plan;
        DiscretizedActuator {
            length: spec.length,
            width: spec.width,
            substrate: spec.substrate.clone(),
            x_center: vec![spec.length / 2.0],
            dx: vec![spec.length],
            coverage_top: vec![1.0],
            coverage_bottom: vec![0.0],
            coverage_shared: vec![0.0],
            lane_fraction: vec![[1.0, 0.0, 0.0]],
            heat_capacity: vec![[c, 0.0, 0.0]],
            convective_area: vec![[2.0 * plan, 0.0, 0.0]],
            conductance: vec![],
            lateral_conductance: vec![0.0],
            loops: vec![LoopProfile {
                id: LoopId::Outer,
                side: Side::Top,
                coverage: vec![1.0],
                weights: vec![1.0],
                lane_weights: vec![[1.0, 0.0, 0.0]],
                footprint_area: plan,
                layers: vec![],
            }],
        }
    }

    fn mean(d: &DiscretizedActuator, s: &ThermalState, id: LoopId) -> f64 {
        heater_mean_temp(s, d.loop_profile(id).unwrap()).unwrap()
    }

    #[test]
    fn crosstalk_arithmetic() {
        let r = crosstalk_ratio(10.0, 6.5e-3, 9.8e-3, 0.05, 1e-4).unwrap();
        assert!((r - 127.4).abs() < 1e-9, "{r}");
        assert!((crosstalk_ratio(1.0, 1.0, 1.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let r2 = crosstalk_ratio(10.0, 6.5e-3, 9.8e-3, 0.05, 2e-4).unwrap();
        assert!((r2 - 63.7).abs() < 1e-9);
        assert!(crosstalk_ratio(10.0, 0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn out_of_plane_ratio_definition() {
        let d = default_actuator(200);
        let r = loop_out_of_plane_ratio(&d, LoopId::Outer, 9.8 * MM).unwrap();
        assert!((1e3..=1e5).contains(&r), "{r}");
        let (w, t, dd) = (0.035, 1e-4, 9.8e-3);
        let a = w * t * t / dd;
        assert!((out_of_plane_ratio(a, w, t, dd).unwrap() - 1.0).abs() < 1e-12);
        let full = out_of_plane_ratio(1.5e-3, w, t, dd).unwrap();
        let half = out_of_plane_ratio(1.5e-3, w, t / 2.0, dd).unwrap();
        assert!((half / full - 4.0).abs() < 1e-12);
        assert!(matches!(
            out_of_plane_ratio(0.0, w, t, dd),
            Err(ThermalError::EmptyFootprint)
        ));
    }

    #[test]
    fn lumped_saturation_arithmetic() {
        let dt = lumped_saturation(0.75, 10.0, 7e-3).unwrap();
        assert!((dt - 0.75 / 0.07).abs() < 1e-12);
        assert!((dt - 10.7).abs() < 0.05);
        assert_eq!(lumped_saturation(0.0, 10.0, 7e-3).unwrap(), 0.0);
        let d2 = lumped_saturation(1.5, 10.0, 7e-3).unwrap();
        assert!((d2 - 2.0 * dt).abs() < 1e-12);
    }

    #[test]
    fn block_solver_matches_dense_elimination() {
        let d = default_actuator(12);
        let op = Operator::assemble(&d, 10.0);
        let n = d.len();
        let mut diag = op.diag.clone();
        for (i, b) in diag.iter_mut().enumerate() {
            for l in 0..LANES {
                b[l][l] += d.heat_capacity[i][l] / 0.1;
            }
        }
        let mut rhs: Vec<LaneValues> = (0..n)
            .map(|i| std::array::from_fn(|l| ((i * 3 + l) % 7) as f64 - 2.0))
            .collect();
        pin_inactive(&d, &mut diag, &mut rhs);
        let b = rhs.clone();
        solve_block_tridiagonal(&op.lower, &diag, &op.upper, &mut rhs);
        // residual of the assembled system
        for i in 0..n {
            let mut y = mat_vec(&diag[i], &rhs[i]);
            for l in 0..LANES {
                if i > 0 {
                    y[l] += op.lower[i][l] * rhs[i - 1][l];
                }
                if i + 1 < n {
                    y[l] += op.upper[i][l] * rhs[i + 1][l];
                }
            }
            for l in 0..LANES {
                assert!(
                    (y[l] - b[i][l]).abs() < 1e-9 * (1.0 + b[i][l].abs()),
                    "cell {i} lane {l}"
                );
            }
        }
    }

    #[test]
    fn zero_power_at_ambient_is_a_fixed_point() {
        let d = default_actuator(200);
        let s0 = ThermalState::at_ambient(d.len(), 23.0);
        let s1 = step_thermal(&s0, 0.0, 0.0, &ThermalParams::default(), &d).unwrap();
        assert_eq!(s0.temperature, s1.temperature);
    }

    #[test]
    fn single_cell_matches_lumped_exponential() {
        let d = single_cell();
        let params = ThermalParams::default();
        let p = 0.75;
        let ha = params.h * d.convective_area[0][0];
        let tau = d.heat_capacity[0][0] / ha;
        let sat = p / ha;
        let mut s = ThermalState::at_ambient(1, 23.0);
        let mut worst: f64 = 0.0;
        for k in 1..=6000 {
            s = step_thermal(&s, p, 0.0, &params, &d).unwrap();
            let t = k as f64 * params.dt;
            let exact = sat * (1.0 - (-t / tau).exp());
            worst = worst.max((s.temperature[0][0] - 23.0 - exact).abs() / sat);
        }
        assert!(worst < 5e-3, "worst relative deviation {worst}");
    }

    #[test]
    fn explicit_scheme_checks_stability() {
        let d = default_actuator(200);
        let limit = explicit_dt_limit(&d, 10.0);
        let s0 = ThermalState::at_ambient(d.len(), 23.0);
        let bad = ThermalParams {
            dt: limit * 1.5,
            scheme: Scheme::Explicit,
            ..Default::default()
        };
        assert!(matches!(
            step_thermal(&s0, 0.75, 0.0, &bad, &d),
            Err(ThermalError::Unstable { .. })
        ));
        let good = ThermalParams {
            dt: limit * 0.5,
            scheme: Scheme::Explicit,
            ..Default::default()
        };
        let implicit = ThermalParams {
            dt: limit * 0.5,
            ..Default::default()
        };
        let mut a = s0.clone();
        let mut b = s0;
        for _ in 0..2000 {
            a = step_thermal(&a, 0.75, 0.3, &good, &d).unwrap();
            b = step_thermal(&b, 0.75, 0.3, &implicit, &d).unwrap();
        }
        for id in [LoopId::Outer, LoopId::Inner] {
            let (da, db) = (mean(&d, &a, id), mean(&d, &b, id));
            assert!((da - db).abs() < 0.01 * db, "{da} vs {db}");
        }
    }

    #[test]
    fn steady_energy_balance() {
        let d = default_actuator(200);
        let s = steady_state(&d, 0.75, 0.3, 10.0, 23.0).unwrap();
        let loss = convective_loss(&s, &d, 10.0);
        assert!(((1.05 - loss) / 1.05).abs() < 1e-6);
    }

    #[test]
    fn transient_converges_to_steady_with_energy_balance() {
        let d = default_actuator(200);
        let params = ThermalParams::default();
        let mut s = ThermalState::at_ambient(d.len(), 23.0);
        let mut rate = f64::INFINITY;
        let mut steps = 0;
        while rate >= 1e-9 {
            let next = step_thermal(&s, 0.0, 0.75, &params, &d).unwrap();
            rate = next
                .temperature
                .iter()
                .flatten()
                .zip(s.temperature.iter().flatten())
                .map(|(a, b)| ((a - b) / params.dt).abs())
                .fold(0.0, f64::max);
            s = next;
            steps += 1;
            assert!(steps < 200_000);
        }
        let loss = convective_loss(&s, &d, params.h);
        assert!(((0.75 - loss) / 0.75).abs() < 1e-6, "loss {loss}");
        let steady = steady_state(&d, 0.0, 0.75, params.h, 23.0).unwrap();
        let (a, b) = (
            mean(&d, &s, LoopId::Inner),
            mean(&d, &steady, LoopId::Inner),
        );
        assert!((a - b).abs() < 1e-5 * b);
    }

    #[test]
    fn uniform_track_heating_approaches_the_footprint_estimate() {
        // Power density is uniform over the footprint, so away from the loop
        // ends each track sits near P / (2 h A_fp).
        let d = default_actuator(200);
        for id in [LoopId::Outer, LoopId::Inner] {
            let (po, pi) = if id == LoopId::Outer {
                (0.75, 0.0)
            } else {
                (0.0, 0.75)
            };
            let s = steady_state(&d, po, pi, 10.0, 23.0).unwrap();
            let lp = d.loop_profile(id).unwrap();
            let estimate = lumped_saturation(0.75, 10.0, 2.0 * lp.footprint_area).unwrap();
            let got = mean(&d, &s, id);
            assert!(
                ((got - estimate) / estimate).abs() < 0.05,
                "{id}: {got} vs {estimate}"
            );
        }
    }

    #[test]
    fn powered_loop_barely_heats_the_other() {
        let d = default_actuator(200);
        for (po, pi, hot, cold) in [
            (0.75, 0.0, LoopId::Outer, LoopId::Inner),
            (0.0, 0.75, LoopId::Inner, LoopId::Outer),
        ] {
            let s = steady_state(&d, po, pi, 10.0, 23.0).unwrap();
            let (h, c) = (mean(&d, &s, hot), mean(&d, &s, cold));
            assert!(c > 0.0 && c < 0.15 * h, "cross-talk {c} vs {h}");
        }
    }

    #[test]
    fn opposite_footprints_heat_each_other_strongly() {
        let mut spec = ActuatorSpec::meta_default(51.0 * UM);
        spec.loops[0].footprint = vec![Rect::new(0.0, spec.length, 0.0, 6.5 * MM)];
        spec.loops[1].footprint = vec![Rect::new(0.0, spec.length, 0.0, 6.5 * MM)];
        let d = discretize(&validate_spec(&spec).unwrap());
        let s = steady_state(&d, 0.75, 0.0, 10.0, 23.0).unwrap();
        let (h, c) = (mean(&d, &s, LoopId::Outer), mean(&d, &s, LoopId::Inner));
        assert!((h - c).abs() < 1e-12 && h > 0.0);
        assert!(s.temperature.iter().all(|t| t[Lane::Top.index()] == 23.0));
    }

    #[test]
    fn heater_mean_temperature_cases() {
        let d = default_actuator(200);
        let outer = d.loop_profile(LoopId::Outer).unwrap();
        let mut s = ThermalState::at_ambient(d.len(), 20.0);
        assert_eq!(heater_mean_temp(&s, outer).unwrap(), 0.0);
        s.temperature.iter_mut().flatten().for_each(|t| *t += 5.0);
        assert!((heater_mean_temp(&s, outer).unwrap() - 5.0).abs() < 1e-12);

        // Linear profile over a rail-only loop: weighted mean equals the
        // direct sum over covered cells.
        let mut spec = ActuatorSpec::meta_default(51.0 * UM);
        spec.loops.truncate(1);
        spec.loops[0].footprint = vec![Rect::new(20.0 * MM, 60.0 * MM, 0.0, 6.5 * MM)];
        let d = discretize(&validate_spec(&spec).unwrap());
        let mut s = ThermalState::at_ambient(d.len(), 20.0);
        for (t, x) in s.temperature.iter_mut().zip(&d.x_center) {
            *t = [20.0 + 100.0 * x; LANES];
        }
        let lp = d.loop_profile(LoopId::Outer).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..d.len() {
            let area = lp.coverage[i] * d.dx[i] * d.width;
            num += area * 100.0 * d.x_center[i];
            den += area;
        }
        let got = heater_mean_temp(&s, lp).unwrap();
        assert!((got - num / den).abs() < 1e-12);
        assert!((got - 4.0).abs() < 1e-9);
    }

    #[test]
    fn empty_footprint_mean_is_an_error() {
        let lp = LoopProfile {
            id: LoopId::Outer,
            side: Side::Top,
            coverage: vec![0.0; 3],
            weights: vec![0.0; 3],
            lane_weights: vec![[0.0; LANES]; 3],
            footprint_area: 0.0,
            layers: vec![Material::bopp(51.0 * UM)],
        };
        let s = ThermalState::at_ambient(3, 20.0);
        assert!(matches!(
            heater_mean_temp(&s, &lp),
            Err(ThermalError::EmptyFootprint)
        ));
    }

    #[test]
    fn grid_convergence_of_heater_mean() {
        let coarse = default_actuator(200);
        let fine = default_actuator(400);
        for id in [LoopId::Outer, LoopId::Inner] {
            let (po, pi) = if id == LoopId::Outer {
                (0.75, 0.0)
            } else {
                (0.0, 0.75)
            };
            let a = steady_state(&coarse, po, pi, 10.0, 23.0).unwrap();
            let b = steady_state(&fine, po, pi, 10.0, 23.0).unwrap();
            let (ta, tb) = (mean(&coarse, &a, id), mean(&fine, &b, id));
            assert!(((ta - tb) / tb).abs() < 0.01, "{id}: {ta} vs {tb}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn implicit_steps_stay_bounded(dt in 1e-3f64..1e2, po in 0.0f64..1.0, pi in 0.0f64..1.0) {
                let d = default_actuator(50);
                let params = ThermalParams { dt, ..Default::default() };
                // max principle: no lane exceeds the largest local q / (h A)
                let q = heat_sources(&d, po, pi);
                let mut bound: f64 = 0.0;
                for i in 0..d.len() {
                    for l in 0..LANES {
                        if d.lane_active(i, l) {
                            bound = bound.max(q[i][l] / (params.h * d.convective_area[i][l]));
                        }
                    }
                }
                let mut s = ThermalState::at_ambient(d.len(), 23.0);
                for _ in 0..50 {
                    s = step_thermal(&s, po, pi, &params, &d).unwrap();
                    for t in s.temperature.iter().flatten() {
                        prop_assert!(*t <= 23.0 + bound + 1e-9);
                        prop_assert!(*t >= 23.0 - 1e-12);
                    }
                }
            }

            #[test]
            fn passive_cooling_is_monotone(dt in 0.01f64..10.0, seed in 0u64..1000) {
                let d = default_actuator(50);
                let params = ThermalParams { dt, ..Default::default() };
                let mut s = ThermalState::at_ambient(d.len(), 23.0);
                for (i, t) in s.temperature.iter_mut().enumerate() {
                    for l in 0..LANES {
                        if d.lane_active(i, l) {
                            t[l] += ((i as u64 * 7919 + l as u64 * 31 + seed) % 97) as f64 / 10.0;
                        }
                    }
                }
                for _ in 0..30 {
                    let next = step_thermal(&s, 0.0, 0.0, &params, &d).unwrap();
                    for a in next.temperature.iter().flatten() {
                        prop_assert!(*a >= 23.0 - 1e-12);
                    }
                    // the hottest lane never heats up
                    let max_next = next.temperature.iter().flatten().cloned().fold(f64::MIN, f64::max);
                    let max_prev = s.temperature.iter().flatten().cloned().fold(f64::MIN, f64::max);
                    prop_assert!(max_next <= max_prev + 1e-12);
                    s = next;
                }
            }
        }
    }
}
