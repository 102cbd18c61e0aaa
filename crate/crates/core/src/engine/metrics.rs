//! Post-hoc summary metrics over stored series.

use super::{EngineError, TimeSeriesRecord};

/// Linear interpolation of `ref_disp` at time `t`.
pub fn series_value_at(series: &[TimeSeriesRecord], t: f64) -> Result<f64, EngineError> {
    value_at(series, t, |r| r.ref_disp)
}

pub(crate) fn value_at(
    series: &[TimeSeriesRecord],
    t: f64,
    get: impl Fn(&TimeSeriesRecord) -> f64,
) -> Result<f64, EngineError> {
    let (first, last) = match (series.first(), series.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(EngineError::Metric("empty series".into())),
    };
    let eps = 1e-9 * last.t.abs().max(1.0);
    if t < first.t - eps || t > last.t + eps {
        return Err(EngineError::Metric(format!(
            "t = {t} s is outside the series [{}, {}] s",
            first.t, last.t
        )));
    }
    let j = series.partition_point(|r| r.t < t - eps);
    let r1 = &series[j.min(series.len() - 1)];
    if (r1.t - t).abs() <= eps || j == 0 {
        return Ok(get(r1));
    }
    let r0 = &series[j - 1];
    let u = (t - r0.t) / (r1.t - r0.t);
    Ok(get(r0) + u * (get(r1) - get(r0)))
}

/// Each reference displacement divided by the one at `t_norm`.
pub fn normalize_displacement(
    series: &[TimeSeriesRecord],
    t_norm: f64,
) -> Result<Vec<f64>, EngineError> {
    let base = series_value_at(series, t_norm)?;
    if base == 0.0 {
        return Err(EngineError::Metric(format!(
            "displacement at t = {t_norm} s is zero"
        )));
    }
    Ok(series.iter().map(|r| r.ref_disp / base).collect())
}

/// First time after `t_norm` at which the normalized displacement drops
/// below `level`, measured from `t_norm`.
pub fn first_time_normalized_below(
    series: &[TimeSeriesRecord],
    t_norm: f64,
    level: f64,
) -> Result<Option<f64>, EngineError> {
    let norm = normalize_displacement(series, t_norm)?;
    Ok(series
        .iter()
        .zip(&norm)
        .find(|(r, n)| r.t > t_norm && **n < level)
        .map(|(r, _)| r.t - t_norm))
}

/// Time from `t_on` until |ref_disp| first reaches `fraction` of its value
/// at `t_sat`.
pub fn rise_time(
    series: &[TimeSeriesRecord],
    t_on: f64,
    t_sat: f64,
    fraction: f64,
) -> Result<f64, EngineError> {
    let sat = series_value_at(series, t_sat)?.abs();
    if sat == 0.0 {
        return Err(EngineError::Metric("no displacement to rise to".into()));
    }
    let target = fraction * sat;
    let mut prev: Option<&TimeSeriesRecord> = None;
    for r in series.iter().filter(|r| r.t >= t_on) {
        if r.ref_disp.abs() >= target {
            // interpolate the crossing between the bracketing records
            return Ok(match prev {
                Some(p) => {
                    let (a, b) = (p.ref_disp.abs(), r.ref_disp.abs());
                    p.t + (target - a) / (b - a) * (r.t - p.t) - t_on
                }
                None => r.t - t_on,
            });
        }
        prev = Some(r);
    }
    Err(EngineError::Metric(format!(
        "displacement never reached {fraction} of saturation"
    )))
}

/// Time from `t_off` until |ref_disp| first falls to `fraction` of its value
/// at `t_off`.
pub fn time_to_fraction(
    series: &[TimeSeriesRecord],
    t_off: f64,
    fraction: f64,
) -> Result<Option<f64>, EngineError> {
    let start = series_value_at(series, t_off)?.abs();
    Ok(series
        .iter()
        .find(|r| r.t >= t_off && r.ref_disp.abs() <= fraction * start)
        .map(|r| r.t - t_off))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleExtrema {
    pub min: f64,
    pub max: f64,
}

impl CycleExtrema {
    pub fn peak_to_peak(&self) -> f64 {
        self.max - self.min
    }
}

/// Min and max of ref_disp within each period [k*period, (k+1)*period).
pub fn cycle_extrema(series: &[TimeSeriesRecord], period: f64, cycles: usize) -> Vec<CycleExtrema> {
    (0..cycles)
        .map(|k| {
            let (a, b) = (k as f64 * period, (k + 1) as f64 * period);
            series.iter().filter(|r| r.t >= a && r.t <= b).fold(
                CycleExtrema {
                    min: f64::INFINITY,
                    max: f64::NEG_INFINITY,
                },
                |acc, r| CycleExtrema {
                    min: acc.min.min(r.ref_disp),
                    max: acc.max.max(r.ref_disp),
                },
            )
        })
        .collect()
}

/// Least-squares slope of curvature against ambient rise through the
/// origin, over rises in [0, 10] K.
pub fn sensitivity_fit(points: &[(f64, f64)]) -> Result<f64, EngineError> {
    let window: Vec<&(f64, f64)> = points
        .iter()
        .filter(|(dt, _)| (0.0..=10.0).contains(dt))
        .collect();
    if window.len() < 3 {
        return Err(EngineError::Metric(format!(
            "sensitivity fit needs at least 3 points in [0, 10] K, got {}",
            window.len()
        )));
    }
    let sxx: f64 = window.iter().map(|(x, _)| x * x).sum();
    if sxx == 0.0 {
        return Err(EngineError::Metric("all fit points at zero rise".into()));
    }
    let sxy: f64 = window.iter().map(|(x, y)| x * y).sum();
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares y = a x + b with coefficient of determination.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}
