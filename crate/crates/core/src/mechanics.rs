//! Temperature field to curvature field to shape.
//!
//! Each cell is a width-weighted multilayer strip whose width is split into
//! zones (the thermal lanes plus bare substrate), each at its own
//! temperature. Zones share the curvature of the cell but carry their own
//! mid-plane strain, so every zone bends about its own neutral axis; a
//! single-zone section reduces to the classical laminate balance. The
//! curvature field is integrated along arc length (elastica, root clamped
//! with zero slope).
//!
//! Sign convention: positive curvature turns the beam toward +z, the top
//! face. Heating a face's cover strip bends the tip away from that face.

use thiserror::Error;

use crate::model::{DiscretizedActuator, Lane, Material, Side, LANES};
use crate::thermal::ThermalState;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechError {
    #[error("cross-section has no bending stiffness")]
    Singular,
    #[error("state has {state} cells but the actuator has {actuator}")]
    SizeMismatch { state: usize, actuator: usize },
    #[error("non-finite curvature in cell {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechParams {
    /// Relaxation time of the moisture-driven strain, s. Zero disables the lag.
    pub tau_mech: f64,
    /// Stress-free reference temperature, degC.
    pub t_ref: f64,
}

impl Default for MechParams {
    fn default() -> Self {
        MechParams {
            tau_mech: 40.0,
            t_ref: 23.0,
        }
    }
}

/// Which part of each material's expansion coefficient loads the section.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// `alpha_eff`: full quasi-static response.
    Effective,
    /// `alpha_thermal`: instantaneous thermal expansion only.
    Thermal,
    /// `alpha_eff - alpha_thermal`: the lagged moisture-driven part.
    Hygro,
}

/// Width zones of a cell: the thermal lanes, then bare substrate.
pub const ZONES: usize = LANES + 1;
/// Zone index of bare substrate, which only sees the ambient offset.
pub const BARE: usize = LANES;

/// Temperature change per zone.
pub type ZoneValues = [f64; ZONES];

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub modulus: f64,
    pub alpha_eff: f64,
    pub alpha_thermal: f64,
    /// Bottom and top z of the layer, m.
    pub z0: f64,
    pub z1: f64,
    /// Fraction of the strip width the layer covers, (0, 1].
    pub width_fraction: f64,
    /// Temperature zone the layer belongs to.
    pub zone: usize,
}

impl Layer {
    fn alpha(&self, which: Expansion) -> f64 {
        match which {
            Expansion::Effective => self.alpha_eff,
            Expansion::Thermal => self.alpha_thermal,
            Expansion::Hygro => self.alpha_eff - self.alpha_thermal,
        }
    }
}

/// Layers ordered bottom to top with z measured from the substrate mid-plane.
/// Layers side by side at the same height appear consecutively.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub layers: Vec<Layer>,
}

/// Mid-plane strain and curvature of a loaded section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaminateResponse {
    pub mid_strain: f64,
    pub curvature: f64,
}

impl CrossSection {
    /// Builds a contiguous stack around a substrate centred on z = 0.
    /// `below` and `above` are listed from the substrate outward, each with
    /// its width fraction. All layers are in the bare zone.
    pub fn stacked(
        substrate: &Material,
        below: &[(Material, f64)],
        above: &[(Material, f64)],
    ) -> Self {
        let half = substrate.thickness / 2.0;
        let mut layers = Vec::with_capacity(1 + below.len() + above.len());
        let mut z = -half;
        for (m, b) in below {
            layers.push(layer(m, z - m.thickness, z, *b, BARE));
            z -= m.thickness;
        }
        layers.reverse();
        layers.push(layer(substrate, -half, half, 1.0, BARE));
        let mut z = half;
        for (m, b) in above {
            layers.push(layer(m, z, z + m.thickness, *b, BARE));
            z += m.thickness;
        }
        CrossSection { layers }
    }

    /// Section of cell `i`. The substrate is split by lane width; each
    /// side's loop stack sits over the lanes that carry that side's tracks.
    pub fn for_cell(actuator: &DiscretizedActuator, i: usize) -> Self {
        let f = actuator.lane_fraction[i];
        let bare = (1.0 - f.iter().sum::<f64>()).max(0.0);
        let sub = &actuator.substrate;
        let half = sub.thickness / 2.0;
        let stack = |side: Side| -> Vec<&Material> {
            actuator
                .side_profile(side)
                .map(|lp| lp.layers.iter().collect())
                .unwrap_or_default()
        };
        let zones_of = |side: Side| Lane::of_side(side).map(|l| (l.index(), f[l.index()]));

        let mut layers = Vec::new();
        let mut z = -half;
        let mut below = Vec::new();
        for m in stack(Side::Bottom) {
            for (zone, b) in zones_of(Side::Bottom) {
                if b > 0.0 {
                    below.push(layer(m, z - m.thickness, z, b, zone));
                }
            }
            z -= m.thickness;
        }
        below.reverse();
        layers.extend(below);
        for zone in 0..ZONES {
            let b = if zone == BARE { bare } else { f[zone] };
            if b > 0.0 {
                layers.push(layer(sub, -half, half, b, zone));
            }
        }
        let mut z = half;
        for m in stack(Side::Top) {
            for (zone, b) in zones_of(Side::Top) {
                if b > 0.0 {
                    layers.push(layer(m, z, z + m.thickness, b, zone));
                }
            }
            z += m.thickness;
        }
        CrossSection { layers }
    }

    /// The same section mirrored about the substrate mid-plane.
    pub fn flipped(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .rev()
            .map(|l| Layer {
                z0: -l.z1,
                z1: -l.z0,
                ..l.clone()
            })
            .collect();
        CrossSection { layers }
    }

    pub fn thickness(&self) -> f64 {
        match (self.layers.first(), self.layers.last()) {
            (Some(a), Some(b)) => b.z1 - a.z0,
            _ => 0.0,
        }
    }

    /// Solves
    ///   sum E b [eps0 - kappa z - alpha dT] dz = 0
    ///   sum E b [eps0 - kappa z - alpha dT] z dz = 0
    /// with exact per-layer polynomial moments, for a uniform change.
    /// Fibres on the +z side shorten under positive curvature.
    pub fn response(&self, delta_t: f64, which: Expansion) -> Result<LaminateResponse, MechError> {
        self.response_zoned(&[delta_t; ZONES], which)
    }

    /// As [`CrossSection::response`] with one temperature change per zone.
    /// Per zone, force balance fixes eps0_z; the summed moment then gives
    ///   kappa = sum(B N_T / A - M_T) / sum(D - B^2 / A).
    /// `mid_strain` is the axial-stiffness-weighted mean of the zone strains.
    pub fn response_zoned(
        &self,
        delta_t: &ZoneValues,
        which: Expansion,
    ) -> Result<LaminateResponse, MechError> {
        let mut acc = [[0.0; 5]; ZONES];
        for l in &self.layers {
            let eb = l.modulus * l.width_fraction;
            let m0 = l.z1 - l.z0;
            let m1 = 0.5 * (l.z1 * l.z1 - l.z0 * l.z0);
            let m2 = (l.z1.powi(3) - l.z0.powi(3)) / 3.0;
            let strain = l.alpha(which) * delta_t[l.zone];
            let z = &mut acc[l.zone];
            z[0] += eb * m0;
            z[1] += eb * m1;
            z[2] += eb * m2;
            z[3] += eb * strain * m0;
            z[4] += eb * strain * m1;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &[a, b, d, n, m] in acc.iter().filter(|z| z[0] > 0.0) {
            num += b * n / a - m;
            den += d - b * b / a;
        }
        if !(den > 0.0) || !den.is_finite() {
            return Err(MechError::Singular);
        }
        let curvature = num / den;
        let (mut force, mut axial) = (0.0, 0.0);
        for &[a, b, _, n, _] in acc.iter().filter(|z| z[0] > 0.0) {
            force += n + b * curvature;
            axial += a;
        }
        Ok(LaminateResponse {
            mid_strain: force / axial,
            curvature,
        })
    }
}

fn layer(m: &Material, z0: f64, z1: f64, b: f64, zone: usize) -> Layer {
    Layer {
        modulus: m.youngs_modulus,
        alpha_eff: m.alpha_eff,
        alpha_thermal: m.alpha_thermal,
        z0,
        z1,
        width_fraction: b,
        zone,
    }
}

/// Quasi-static curvature of a section under a uniform temperature change.
pub fn cell_curvature(section: &CrossSection, delta_t: f64) -> Result<f64, MechError> {
    Ok(section.response(delta_t, Expansion::Effective)?.curvature)
}

/// Per-cell curvature, m^-1.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField(pub Vec<f64>);

/// Zone temperature changes of cell `i`: lane rise plus the ambient offset
/// from the reference temperature; bare substrate sees the offset alone.
fn zone_rise(state: &ThermalState, i: usize, ambient_rise: f64) -> ZoneValues {
    let t = &state.temperature[i];
    std::array::from_fn(|z| {
        if z == BARE {
            ambient_rise
        } else {
            t[z] - state.ambient + ambient_rise
        }
    })
}

fn check_size(actuator: &DiscretizedActuator, state: &ThermalState) -> Result<(), MechError> {
    if state.temperature.len() != actuator.len() {
        return Err(MechError::SizeMismatch {
            state: state.temperature.len(),
            actuator: actuator.len(),
        });
    }
    Ok(())
}

/// Quasi-static curvature field of a thermal state.
pub fn curvature_field(
    actuator: &DiscretizedActuator,
    state: &ThermalState,
    ambient_rise: f64,
) -> Result<CurvatureField, MechError> {
    check_size(actuator, state)?;
    let kappa = (0..actuator.len())
        .map(|i| {
            let section = CrossSection::for_cell(actuator, i);
            let k = section
                .response_zoned(&zone_rise(state, i, ambient_rise), Expansion::Effective)?
                .curvature;
            if k.is_finite() {
                Ok(k)
            } else {
                Err(MechError::NonFinite(i))
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CurvatureField(kappa))
}

/// Curvature per kelvin of every cell and zone, split into the instantaneous
/// thermal part and the lagged moisture part. The section problem is linear
/// in the zone temperatures and in the expansion coefficients, so the sum of
/// all contributions is the full response.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureMap {
    pub thermal: Vec<ZoneValues>,
    pub hygro: Vec<ZoneValues>,
}

impl CurvatureMap {
    pub fn new(actuator: &DiscretizedActuator) -> Result<Self, MechError> {
        let mut thermal = Vec::with_capacity(actuator.len());
        let mut hygro = Vec::with_capacity(actuator.len());
        for i in 0..actuator.len() {
            let section = CrossSection::for_cell(actuator, i);
            let mut kt = [0.0; ZONES];
            let mut kh = [0.0; ZONES];
            for z in 0..ZONES {
                let mut unit = [0.0; ZONES];
                unit[z] = 1.0;
                kt[z] = section.response_zoned(&unit, Expansion::Thermal)?.curvature;
                kh[z] = section.response_zoned(&unit, Expansion::Hygro)?.curvature;
            }
            thermal.push(kt);
            hygro.push(kh);
        }
        Ok(CurvatureMap { thermal, hygro })
    }

    /// (thermal, hygro) quasi-static curvatures for a state.
    pub fn split(&self, state: &ThermalState, ambient_rise: f64) -> (Vec<f64>, Vec<f64>) {
        (0..self.thermal.len())
            .map(|i| {
                let dt = zone_rise(state, i, ambient_rise);
                let dot = |c: &ZoneValues| (0..ZONES).map(|z| c[z] * dt[z]).sum::<f64>();
                (dot(&self.thermal[i]), dot(&self.hygro[i]))
            })
            .unzip()
    }
}

/// First-order relaxation of `previous` toward `target` over `dt`, using the
/// exact exponential update. `tau == 0` returns the target.
pub fn mech_lag(previous: &[f64], target: &[f64], dt: f64, tau: f64) -> Vec<f64> {
    if tau <= 0.0 {
        return target.to_vec();
    }
    let keep = (-dt / tau).exp();
    previous
        .iter()
        .zip(target)
        .map(|(p, q)| q + (p - q) * keep)
        .collect()
}

/// Centre-line polyline of a deformed strip, clamped at the origin with zero
/// slope. Node `j` sits at arc length `s[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    /// Tangent angle at each node, rad.
    pub theta: Vec<f64>,
}

impl Shape {
    pub fn straight(length: f64, cells: usize) -> Self {
        shape_from_curvature(&CurvatureField(vec![0.0; cells]), length)
    }

    pub fn length(&self) -> f64 {
        *self.s.last().unwrap_or(&0.0)
    }

    pub fn tip(&self) -> (f64, f64) {
        (*self.x.last().unwrap(), *self.z.last().unwrap())
    }

    /// Position of the material point at arc length `s` (linear along the
    /// containing segment).
    pub fn point_at(&self, s: f64) -> (f64, f64) {
        let n = self.s.len();
        let s = s.clamp(0.0, self.length());
        let j = match self.s.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(j) => return (self.x[j], self.z[j]),
            Err(j) => j.clamp(1, n - 1),
        };
        let (s0, s1) = (self.s[j - 1], self.s[j]);
        let u = (s - s0) / (s1 - s0);
        (
            self.x[j - 1] + u * (self.x[j] - self.x[j - 1]),
            self.z[j - 1] + u * (self.z[j] - self.z[j - 1]),
        )
    }

    /// Sum of segment lengths.
    pub fn arc_length(&self) -> f64 {
        (1..self.x.len())
            .map(|j| (self.x[j] - self.x[j - 1]).hypot(self.z[j] - self.z[j - 1]))
            .sum()
    }
}

/// Integrates theta(s) = int kappa ds and (x, z)(s) = int (cos, sin) theta ds
/// on a uniform cell grid; each segment follows its mid-cell angle.
pub fn shape_from_curvature(field: &CurvatureField, length: f64) -> Shape {
    let n = field.0.len();
    let ds = length / n as f64;
    let mut s = Vec::with_capacity(n + 1);
    let mut x = Vec::with_capacity(n + 1);
    let mut z = Vec::with_capacity(n + 1);
    let mut theta = Vec::with_capacity(n + 1);
    s.push(0.0);
    x.push(0.0);
    z.push(0.0);
    theta.push(0.0);
    for (j, k) in field.0.iter().enumerate() {
        let th0 = theta[j];
        let mid = th0 + 0.5 * k * ds;
        x.push(x[j] + ds * mid.cos());
        z.push(z[j] + ds * mid.sin());
        theta.push(th0 + k * ds);
        s.push(length * (j + 1) as f64 / n as f64);
    }
    Shape { s, x, z, theta }
}

/// Displacement of the material point `from_tip` before the free end
/// between two shapes: Euclidean magnitude, signed by its z component.
pub fn point_displacement(shape: &Shape, rest: &Shape, from_tip: f64) -> f64 {
    let s = shape.length() - from_tip;
    let (x1, z1) = shape.point_at(s);
    let (x0, z0) = rest.point_at(s);
    let d = (x1 - x0).hypot(z1 - z0);
    if z1 < z0 {
        -d
    } else {
        d
    }
}

/// Offset of the tracked reference mark from the free end, m.
pub const REFERENCE_OFFSET: f64 = 0.01;

/// Displacement of the reference mark 1 cm from the tip, m.
pub fn reference_displacement(shape: &Shape, rest: &Shape) -> f64 {
    point_displacement(shape, rest, REFERENCE_OFFSET)
}

/// Signed curvature of the circle through three points; zero when collinear.
pub fn circumcircle_curvature(p1: (f64, f64), p2: (f64, f64), p3: (f64, f64)) -> f64 {
    let (ax, az) = (p2.0 - p1.0, p2.1 - p1.1);
    let (bx, bz) = (p3.0 - p1.0, p3.1 - p1.1);
    let cross = ax * bz - az * bx;
    let a = ax.hypot(az);
    let b = bx.hypot(bz);
    let c = (p3.0 - p2.0).hypot(p3.1 - p2.1);
    let denom = a * b * c;
    if denom == 0.0 || cross.abs() <= 1e-15 * denom.powf(2.0 / 3.0) {
        return 0.0;
    }
    2.0 * cross / denom
}

/// Curvature of the circle through the material points at L/4, L/2, 3L/4.
pub fn three_point_curvature(shape: &Shape) -> f64 {
    let l = shape.length();
    circumcircle_curvature(
        shape.point_at(0.25 * l),
        shape.point_at(0.5 * l),
        shape.point_at(0.75 * l),
    )
}
