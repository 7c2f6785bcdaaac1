//! Online gain dispatch from telemetry.
//!
//! Each telemetry sample carries the IBR active-power outputs and STATCOM
//! reactive currents. Grid strength is recomputed per sample (participation
//! factors depend on the dispatch), the aggregate reactive current selects
//! a schedule interval by half-open membership, and a hysteresis band
//! prevents gain-switch thrash at interval boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{OperatingCondition, ReducedNetwork, grid_strength};
use crate::synthesis::{GainMatrix, GainSchedule};

/// Default hysteresis band on the aggregate reactive current.
pub const HYSTERESIS: f64 = 0.02;

/// One telemetry sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TelemetrySample {
    /// Timestamp in seconds.
    pub t: f64,
    /// Per-IBR active power, system base.
    pub p_e: Vec<f64>,
    /// Per-STATCOM reactive current, own base.
    pub i_qs: Vec<f64>,
}

/// The dispatch outcome for one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchDecision {
    pub t: f64,
    /// 1-based schedule interval index.
    pub interval_index: usize,
    pub gains: GainMatrix,
    pub iq_sigma: f64,
    pub gscr: f64,
    /// True when this decision changed the active interval.
    pub switched: bool,
    /// Set when telemetry was clamped into the modeled range.
    pub clamped: bool,
}

/// Selects the gain set for one sample, threading the previous decision for
/// hysteresis.
pub fn dispatch(
    schedule: &GainSchedule,
    red: &ReducedNetwork,
    s_b: &[f64],
    s_bs: &[f64],
    sample: &TelemetrySample,
    previous: Option<&DispatchDecision>,
    hysteresis: f64,
) -> Result<DispatchDecision> {
    if sample.p_e.len() != s_b.len() || sample.i_qs.len() != s_bs.len() {
        return Err(Error::Dimension("telemetry lengths do not match the case".into()));
    }
    if sample.p_e.iter().chain(&sample.i_qs).any(|v| !v.is_finite()) {
        return Err(Error::InvalidOperatingCondition(format!(
            "non-finite telemetry at t = {}",
            sample.t
        )));
    }
    let mut clamped = false;
    let p_e: Vec<f64> = sample
        .p_e
        .iter()
        .zip(s_b)
        .map(|(&p, &cap)| {
            let c = p.clamp(1e-6 * cap, cap);
            if c != p {
                clamped = true;
            }
            c
        })
        .collect();
    let i_qs: Vec<f64> = sample
        .i_qs
        .iter()
        .map(|&iq| {
            let c = iq.clamp(-1.0, 1.0);
            if c != iq {
                clamped = true;
            }
            c
        })
        .collect();
    let oc = OperatingCondition { p_e, i_qs, s_b: s_b.to_vec(), s_bs: s_bs.to_vec() };
    let report = grid_strength(red, &oc)?;
    let iq = report.iq_sigma;

    // Hysteresis: hold the previous interval while iq stays within its
    // widened band.
    if let Some(prev) = previous {
        let m = schedule.intervals.len();
        if prev.interval_index >= 1 && prev.interval_index <= m {
            let iv = &schedule.intervals[prev.interval_index - 1];
            if iq >= iv.lo - hysteresis && iq <= iv.hi + hysteresis {
                return Ok(DispatchDecision {
                    t: sample.t,
                    interval_index: prev.interval_index,
                    gains: iv.gains(),
                    iq_sigma: iq,
                    gscr: report.gscr,
                    switched: false,
                    clamped,
                });
            }
        }
    }

    let Some((index, iv)) = schedule.interval_for(iq) else {
        return Err(Error::ScheduleGap {
            iq_sigma: iq,
            sample_index: 0,
            last_safe_interval: previous.map(|p| p.interval_index),
        });
    };
    let switched = previous.map_or(true, |p| p.interval_index != index);
    Ok(DispatchDecision {
        t: sample.t,
        interval_index: index,
        gains: iv.gains(),
        iq_sigma: iq,
        gscr: report.gscr,
        switched,
        clamped,
    })
}

/// Folds [`dispatch`] over a time-ordered telemetry stream.
pub fn replay(
    schedule: &GainSchedule,
    red: &ReducedNetwork,
    s_b: &[f64],
    s_bs: &[f64],
    samples: &[TelemetrySample],
    hysteresis: f64,
) -> Result<Vec<DispatchDecision>> {
    let mut out: Vec<DispatchDecision> = Vec::with_capacity(samples.len());
    for (idx, sample) in samples.iter().enumerate() {
        if idx > 0 && sample.t < samples[idx - 1].t {
            return Err(Error::InvalidOperatingCondition(format!(
                "telemetry not time-ordered at sample {idx}"
            )));
        }
        let decision = dispatch(schedule, red, s_b, s_bs, sample, out.last(), hysteresis)
            .map_err(|e| match e {
                Error::ScheduleGap { iq_sigma, last_safe_interval, .. } => {
                    Error::ScheduleGap { iq_sigma, sample_index: idx, last_safe_interval }
                }
                other => other,
            })?;
        out.push(decision);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::ScheduleInterval;

    fn schedule_m(m: usize) -> GainSchedule {
        let intervals = crate::synthesis::iq_intervals(m)
            .into_iter()
            .map(|(lo, hi)| ScheduleInterval {
                lo,
                hi,
                k_acps: 1.0,
                k_acis: 5.0,
                k_pllps: 10.0 + lo,
                k_pllis: 5000.0,
                objective: -0.1,
                certified: true,
                feasible: true,
                worst_real_part: -0.1,
                hinf_norm: None,
                cgscr_max: None,
            })
            .collect();
        GainSchedule { m, intervals, rated_gscr: 1.68, no_statcom_cgscr: None }
    }

    fn tiny_red() -> (ReducedNetwork, Vec<f64>, Vec<f64>) {
        use crate::netmodel::*;
        let net = NetworkModel {
            nodes: vec![
                Node { id: "g".into(), kind: NodeKind::Ibr },
                Node { id: "s".into(), kind: NodeKind::Statcom },
                Node { id: "inf".into(), kind: NodeKind::InfiniteBus },
            ],
            branches: vec![
                Branch { from: "g".into(), to: "inf".into(), susceptance: 4.0 },
                Branch { from: "s".into(), to: "g".into(), susceptance: 30.0 },
            ],
            tau: 10.0,
            omega0: 100.0 * std::f64::consts::PI,
        };
        (kron_reduce(&net).unwrap(), vec![1.0], vec![0.3])
    }

    fn sample(t: f64, iq: f64) -> TelemetrySample {
        TelemetrySample { t, p_e: vec![1.0], i_qs: vec![iq] }
    }

    #[test]
    fn golden_interval_selection() {
        let (red, s_b, s_bs) = tiny_red();
        let schedule = schedule_m(4);
        // Single STATCOM: iq_sigma equals its reactive current.
        let d = dispatch(&schedule, &red, &s_b, &s_bs, &sample(0.0, -0.241), None, 0.0).unwrap();
        assert_eq!(d.interval_index, 2);
        let d = dispatch(&schedule, &red, &s_b, &s_bs, &sample(0.0, 0.19), None, 0.0).unwrap();
        assert_eq!(d.interval_index, 3);
    }

    #[test]
    fn boundary_belongs_to_upper_interval() {
        let (red, s_b, s_bs) = tiny_red();
        let schedule = schedule_m(4);
        let d = dispatch(&schedule, &red, &s_b, &s_bs, &sample(0.0, -0.5), None, 0.0).unwrap();
        assert_eq!(d.interval_index, 2, "-0.5 belongs to [-0.5, 0)");
        // Top of range is closed.
        let d = dispatch(&schedule, &red, &s_b, &s_bs, &sample(0.0, 1.0), None, 0.0).unwrap();
        assert_eq!(d.interval_index, 4);
    }

    #[test]
    fn hysteresis_suppresses_dither() {
        let (red, s_b, s_bs) = tiny_red();
        let schedule = schedule_m(4);
        let eps = 0.005;
        let h = 0.02;
        let samples: Vec<TelemetrySample> = (0..20)
            .map(|i| sample(i as f64, if i % 2 == 0 { -0.5 - eps } else { -0.5 + eps }))
            .collect();
        let log = replay(&schedule, &red, &s_b, &s_bs, &samples, h).unwrap();
        let switches = log.iter().filter(|d| d.switched).count();
        assert_eq!(switches, 1, "only the initial switch is allowed");
    }

    #[test]
    fn zero_hysteresis_matches_membership() {
        let (red, s_b, s_bs) = tiny_red();
        let schedule = schedule_m(4);
        for iq in [-0.9, -0.5, -0.2, 0.0, 0.3, 0.77, 1.0] {
            let d = dispatch(&schedule, &red, &s_b, &s_bs, &sample(0.0, iq), None, 0.0).unwrap();
            let want = schedule.interval_for(iq).unwrap().0;
            assert_eq!(d.interval_index, want);
        }
    }

    #[test]
    fn ramp_visits_every_interval_in_order() {
        let (red, s_b, s_bs) = tiny_red();
        let schedule = schedule_m(4);
        let samples: Vec<TelemetrySample> = (0..81)
            .map(|i| sample(i as f64, -1.0 + 2.0 * i as f64 / 80.0))
            .collect();
        let log = replay(&schedule, &red, &s_b, &s_bs, &samples, 0.0).unwrap();
        let mut seen = Vec::new();
        for d in &log {
            if seen.last() != Some(&d.interval_index) {
                seen.push(d.interval_index);
            }
        }
        assert_eq!(seen, vec![1, 2, 3, 4]);
    }

    #[test]
    fn constant_telemetry_switches_once() {
        let (red, s_b, s_bs) = tiny_red();
        let schedule = schedule_m(4);
        let samples: Vec<TelemetrySample> = (0..10).map(|i| sample(i as f64, 0.3)).collect();
        let log = replay(&schedule, &red, &s_b, &s_bs, &samples, HYSTERESIS).unwrap();
        assert!(log[0].switched);
        assert!(log[1..].iter().all(|d| !d.switched));
    }

    #[test]
    fn gap_error_carries_sample_index() {
        let (red, s_b, s_bs) = tiny_red();
        let mut schedule = schedule_m(4);
        schedule.intervals[2].feasible = false; // gap over [0, 0.5)
        let samples = vec![sample(0.0, -0.7), sample(1.0, 0.3)];
        let err = replay(&schedule, &red, &s_b, &s_bs, &samples, 0.0).unwrap_err();
        match err {
            Error::ScheduleGap { sample_index, last_safe_interval, .. } => {
                assert_eq!(sample_index, 1);
                assert_eq!(last_safe_interval, Some(1), "carries the last safe decision");
            }
            other => panic!("unexpected error {other}"),
        }
    }
}
