//! Loop power commands: piecewise schedules and the forced-return controller.

use thiserror::Error;

use crate::model::LoopId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("segment {index} has t_end <= t_start")]
    EmptySegment { index: usize },
    #[error("segment {index} starts before the previous one ends")]
    Overlap { index: usize },
    #[error("segment {index} has a negative or non-finite power")]
    BadPower { index: usize },
    #[error("segment {index} has a negative or non-finite time")]
    BadTime { index: usize },
    #[error("{0}")]
    Policy(String),
}

/// Power pair applied to the (outer, inner) loops, W.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Powers {
    pub outer: f64,
    pub inner: f64,
}

impl Powers {
    pub const OFF: Powers = Powers {
        outer: 0.0,
        inner: 0.0,
    };

    pub fn on(id: LoopId, power: f64) -> Self {
        match id {
            LoopId::Outer => Powers {
                outer: power,
                inner: 0.0,
            },
            LoopId::Inner => Powers {
                outer: 0.0,
                inner: power,
            },
        }
    }

    pub fn get(&self, id: LoopId) -> f64 {
        match id {
            LoopId::Outer => self.outer,
            LoopId::Inner => self.inner,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t_start: f64,
    pub t_end: f64,
    pub powers: Powers,
}

/// Ordered, non-overlapping segments; gaps mean zero power.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerSchedule {
    segments: Vec<Segment>,
}

impl PowerSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self, ScheduleError> {
        for (index, s) in segments.iter().enumerate() {
            if !(s.t_start.is_finite() && s.t_end.is_finite()) || s.t_start < 0.0 {
                return Err(ScheduleError::BadTime { index });
            }
            if s.t_end <= s.t_start {
                return Err(ScheduleError::EmptySegment { index });
            }
            let ok = |p: f64| p >= 0.0 && p.is_finite();
            if !ok(s.powers.outer) || !ok(s.powers.inner) {
                return Err(ScheduleError::BadPower { index });
            }
            if index > 0 && s.t_start < segments[index - 1].t_end {
                return Err(ScheduleError::Overlap { index });
            }
        }
        Ok(PowerSchedule { segments })
    }

    /// Single constant-power segment on one loop.
    pub fn step(id: LoopId, power: f64, t_start: f64, t_end: f64) -> Result<Self, ScheduleError> {
        PowerSchedule::new(vec![Segment {
            t_start,
            t_end,
            powers: Powers::on(id, power),
        }])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t_end)
    }

    /// Powers of the segment containing `t` (left-closed, right-open).
    pub fn power_at(&self, t: f64) -> Powers {
        let idx = self.segments.partition_point(|s| s.t_end <= t);
        match self.segments.get(idx) {
            Some(s) if s.t_start <= t => s.powers,
            _ => Powers::OFF,
        }
    }

    /// Electrical energy delivered to each loop, J.
    pub fn energy(&self) -> Powers {
        self.segments.iter().fold(Powers::OFF, |acc, s| {
            let d = s.t_end - s.t_start;
            Powers {
                outer: acc.outer + s.powers.outer * d,
                inner: acc.inner + s.powers.inner * d,
            }
        })
    }
}

/// On/off cycling of one loop: `cycles` periods of `t_on` at `power`
/// followed by `t_off` unpowered, starting at t = 0.
pub fn cyclic_schedule(
    id: LoopId,
    power: f64,
    t_on: f64,
    t_off: f64,
    cycles: usize,
) -> Result<PowerSchedule, ScheduleError> {
    if !(t_on > 0.0 && t_off > 0.0) {
        return Err(ScheduleError::Policy(
            "cyclic on and off durations must be positive".into(),
        ));
    }
    let period = t_on + t_off;
    let segments = (0..cycles)
        .map(|c| {
            let t0 = c as f64 * period;
            Segment {
                t_start: t0,
                t_end: t0 + t_on,
                powers: Powers::on(id, power),
            }
        })
        .collect();
    PowerSchedule::new(segments)
}

/// Back-to-back alternation: `first` loop for `t_first`, then the other loop
/// for `t_second`, repeated `cycles` times.
pub fn alternating_schedule(
    first: LoopId,
    power: f64,
    t_first: f64,
    t_second: f64,
    cycles: usize,
) -> Result<PowerSchedule, ScheduleError> {
    if !(t_first > 0.0 && t_second > 0.0) {
        return Err(ScheduleError::Policy(
            "alternating durations must be positive".into(),
        ));
    }
    let period = t_first + t_second;
    let mut segments = Vec::with_capacity(2 * cycles);
    for c in 0..cycles {
        let t0 = c as f64 * period;
        segments.push(Segment {
            t_start: t0,
            t_end: t0 + t_first,
            powers: Powers::on(first, power),
        });
        segments.push(Segment {
            t_start: t0 + t_first,
            t_end: t0 + period,
            powers: Powers::on(first.opposite(), power),
        });
    }
    PowerSchedule::new(segments)
}

/// Drive one loop, then switch to the opposite loop to push the strip back
/// to rest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcedReturnPolicy {
    /// Loop driven before `t_act`.
    pub drive_loop: LoopId,
    /// W
    pub drive_power: f64,
    /// Power on the opposite loop after `t_act`, W. Zero is passive cooling.
    pub return_power: f64,
    /// s
    pub t_act: f64,
    /// Rest tolerance on the reference displacement, m.
    pub tolerance: f64,
    /// Longest time the return loop stays on, s.
    pub max_duration: f64,
}

impl Default for ForcedReturnPolicy {
    fn default() -> Self {
        ForcedReturnPolicy {
            drive_loop: LoopId::Outer,
            drive_power: 0.75,
            return_power: 0.75,
            t_act: 300.0,
            tolerance: 0.1e-3,
            max_duration: 600.0,
        }
    }
}

impl ForcedReturnPolicy {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |m: &str| Err(ScheduleError::Policy(m.into()));
        if !(self.return_power >= 0.0 && self.return_power.is_finite()) {
            return bad("return power must be non-negative");
        }
        if !(self.drive_power >= 0.0 && self.drive_power.is_finite()) {
            return bad("drive power must be non-negative");
        }
        if !(self.tolerance > 0.0) {
            return bad("rest tolerance must be positive");
        }
        if !(self.t_act >= 0.0 && self.max_duration >= 0.0) {
            return bad("activation time and return duration must be non-negative");
        }
        Ok(())
    }
}

/// Controller output for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnCommand {
    pub powers: Powers,
    pub done: bool,
}

/// Forced-return controller with its latch. Once done it stays done.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcedReturnController {
    pub policy: ForcedReturnPolicy,
    done_at: Option<f64>,
}

impl ForcedReturnController {
    pub fn new(policy: ForcedReturnPolicy) -> Self {
        ForcedReturnController {
            policy,
            done_at: None,
        }
    }

    pub fn done_at(&self) -> Option<f64> {
        self.done_at
    }

    /// `displacement` is the sensed reference displacement, m.
    pub fn step(&mut self, t: f64, displacement: f64) -> ReturnCommand {
        let p = &self.policy;
        if self.done_at.is_some() {
            return ReturnCommand {
                powers: Powers::OFF,
                done: true,
            };
        }
        if t < p.t_act {
            return ReturnCommand {
                powers: Powers::on(p.drive_loop, p.drive_power),
                done: false,
            };
        }
        if displacement.abs() <= p.tolerance || t >= p.t_act + p.max_duration {
            self.done_at = Some(t);
            return ReturnCommand {
                powers: Powers::OFF,
                done: true,
            };
        }
        ReturnCommand {
            powers: Powers::on(p.drive_loop.opposite(), p.return_power),
            done: false,
        }
    }
}

/// Stateless form of [`ForcedReturnController::step`]; `latched` carries the
/// controller's done flag between calls.
pub fn forced_return_step(
    policy: &ForcedReturnPolicy,
    latched: &mut bool,
    t: f64,
    displacement: f64,
) -> ReturnCommand {
    let mut c = ForcedReturnController {
        policy: *policy,
        done_at: if *latched { Some(t) } else { None },
    };
    let out = c.step(t, displacement);
    *latched = out.done;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_schedule_is_off() {
        let s = PowerSchedule::default();
        assert_eq!(s.power_at(0.0), Powers::OFF);
        assert_eq!(s.power_at(123.4), Powers::OFF);
    }

    #[test]
    fn segments_are_right_open() {
        let s = PowerSchedule::step(LoopId::Outer, 0.75, 0.0, 300.0).unwrap();
        assert_eq!(s.power_at(0.0).outer, 0.75);
        assert_eq!(s.power_at(299.999).outer, 0.75);
        assert_eq!(s.power_at(300.0), Powers::OFF);
    }

    #[test]
    fn cyclic_outer_pattern() {
        let s = cyclic_schedule(LoopId::Outer, 0.75, 60.0, 60.0, 5).unwrap();
        assert_eq!(s.power_at(61.0), Powers::OFF);
        assert_eq!(s.power_at(130.0), Powers::on(LoopId::Outer, 0.75));
        let starts: Vec<f64> = s.segments().iter().map(|x| x.t_start).collect();
        assert_eq!(starts, vec![0.0, 120.0, 240.0, 360.0, 480.0]);
        assert!(s.segments().iter().all(|x| x.t_end - x.t_start == 60.0));
        assert!(cyclic_schedule(LoopId::Outer, 0.75, 60.0, 60.0, 0)
            .unwrap()
            .is_empty());
        assert!(cyclic_schedule(LoopId::Outer, 0.75, 0.0, 60.0, 2).is_err());
    }

    #[test]
    fn alternating_outer_then_inner() {
        let s = alternating_schedule(LoopId::Outer, 0.75, 50.0, 30.0, 3).unwrap();
        assert_eq!(s.power_at(10.0), Powers::on(LoopId::Outer, 0.75));
        assert_eq!(s.power_at(50.0), Powers::on(LoopId::Inner, 0.75));
        assert_eq!(s.power_at(80.0), Powers::on(LoopId::Outer, 0.75));
        assert_eq!(s.power_at(240.0), Powers::OFF);
        let e = s.energy();
        assert!((e.outer - 3.0 * 50.0 * 0.75).abs() < 1e-12);
        assert!((e.inner - 3.0 * 30.0 * 0.75).abs() < 1e-12);
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        let seg = |a: f64, b: f64, p: f64| Segment {
            t_start: a,
            t_end: b,
            powers: Powers::on(LoopId::Inner, p),
        };
        assert!(matches!(
            PowerSchedule::new(vec![seg(0.0, 10.0, 1.0), seg(5.0, 20.0, 1.0)]),
            Err(ScheduleError::Overlap { index: 1 })
        ));
        assert!(matches!(
            PowerSchedule::new(vec![seg(10.0, 10.0, 1.0)]),
            Err(ScheduleError::EmptySegment { .. })
        ));
        assert!(matches!(
            PowerSchedule::new(vec![seg(0.0, 10.0, -1.0)]),
            Err(ScheduleError::BadPower { .. })
        ));
    }

    #[test]
    fn controller_sequence() {
        let policy = ForcedReturnPolicy::default();
        let mut c = ForcedReturnController::new(policy);
        let cmd = c.step(10.0, 0.02);
        assert_eq!(cmd.powers, Powers::on(LoopId::Outer, 0.75));
        assert!(!cmd.done);
        let cmd = c.step(300.0, 0.028);
        assert_eq!(cmd.powers, Powers::on(LoopId::Inner, 0.75));
        let cmd = c.step(310.0, 0.00005);
        assert_eq!(
            cmd,
            ReturnCommand {
                powers: Powers::OFF,
                done: true
            }
        );
        // latched even if the strip moves again
        let cmd = c.step(320.0, 0.01);
        assert!(cmd.done && cmd.powers == Powers::OFF);
        assert_eq!(c.done_at(), Some(310.0));
    }

    #[test]
    fn passive_return_only_ends_at_rest_or_timeout() {
        let policy = ForcedReturnPolicy {
            return_power: 0.0,
            ..Default::default()
        };
        let mut c = ForcedReturnController::new(policy);
        for k in 0..100 {
            let t = 300.0 + k as f64;
            let cmd = c.step(t, 0.02 * (-(k as f64) / 1000.0).exp());
            assert!(!cmd.done);
            assert_eq!(cmd.powers, Powers::OFF);
        }
        assert!(c.step(950.0, 0.01).done);
    }

    #[test]
    fn stateless_step_latches() {
        let policy = ForcedReturnPolicy::default();
        let mut latched = false;
        assert!(!forced_return_step(&policy, &mut latched, 350.0, 0.01).done);
        assert!(forced_return_step(&policy, &mut latched, 351.0, 0.0).done);
        assert!(latched);
        let out = forced_return_step(&policy, &mut latched, 352.0, 0.05);
        assert!(out.done && out.powers == Powers::OFF);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn energy_is_sum_of_segments(
                durations in prop::collection::vec((0.1f64..100.0, 0.0f64..50.0, 0.0f64..1.0, 0.0f64..1.0), 0..10)
            ) {
                let mut t = 0.0;
                let mut segs = Vec::new();
                for (on, gap, po, pi) in durations {
                    segs.push(Segment { t_start: t, t_end: t + on, powers: Powers { outer: po, inner: pi } });
                    t += on + gap;
                }
                let s = PowerSchedule::new(segs.clone()).unwrap();
                // piecewise-constant integration on a fine midpoint grid
                let end = s.end();
                let n = 200_000usize;
                let mut num = 0.0;
                for k in 0..n {
                    let tm = (k as f64 + 0.5) * end / n as f64;
                    num += s.power_at(tm).outer * end / n as f64;
                }
                let e = s.energy();
                let exact: f64 = segs.iter().map(|g| g.powers.outer * (g.t_end - g.t_start)).sum();
                prop_assert!((e.outer - exact).abs() <= 1e-12 * exact.max(1.0));
                prop_assert!((num - exact).abs() <= 1e-3 * exact.max(1.0) + 1e-2);
            }

            #[test]
            fn controller_stays_done(disps in prop::collection::vec(-0.05f64..0.05, 1..200)) {
                let mut c = ForcedReturnController::new(ForcedReturnPolicy { t_act: 0.0, ..Default::default() });
                let mut seen_done = false;
                for (k, d) in disps.iter().enumerate() {
                    let cmd = c.step(k as f64, *d);
                    if seen_done {
                        prop_assert!(cmd.done && cmd.powers == Powers::OFF);
                    }
                    seen_done |= cmd.done;
                }
            }
        }
    }
}
