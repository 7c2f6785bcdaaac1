//! Scheduled-simulation behavior on the desk-scale case: constant
//! telemetry reduces to a plain run, and a mid-run interval crossing swaps
//! the state map exactly once without breaking the traces.

use weakgrid::cases;
use weakgrid::netmodel::kron_reduce;
use weakgrid::scheduler::TelemetrySample;
use weakgrid::sim::{Disturbance, simulate, simulate_with_schedule};
use weakgrid::stability::assemble_full_system;
use weakgrid::synthesis::{GainMatrix, GainSchedule, ScheduleInterval};

fn hand_schedule() -> GainSchedule {
    let make = |lo: f64, hi: f64, pllp: f64| ScheduleInterval {
        lo,
        hi,
        k_acps: 1.0,
        k_acis: 5.0,
        k_pllps: pllp,
        k_pllis: 7000.0,
        objective: -0.1,
        certified: true,
        feasible: true,
        worst_real_part: -0.1,
        hinf_norm: None,
        cgscr_max: None,
    };
    GainSchedule {
        m: 2,
        intervals: vec![make(-1.0, 0.0, 30.0), make(0.0, 1.0, 18.0)],
        rated_gscr: 2.0,
        no_statcom_cgscr: None,
    }
}

#[test]
fn constant_telemetry_equals_plain_simulation() {
    let (study, _) = cases::demo().resolve().unwrap();
    let oc = study.rated_condition(vec![-0.3, -0.3]).scaled_power(0.6);
    let red = kron_reduce(&study.net).unwrap();
    let schedule = hand_schedule();
    let dist = Disturbance::standard_dip();
    let telemetry =
        vec![TelemetrySample { t: 0.0, p_e: oc.p_e.clone(), i_qs: oc.i_qs.clone() }];

    let base = study.clone();
    let oc_run = oc.clone();
    let build = move |k: &GainMatrix| {
        assemble_full_system(&base.with_statcom_gains(k.pll(), k.avc()), &oc_run)
    };
    let scheduled = simulate_with_schedule(
        &build, &schedule, &red, &oc.s_b, &oc.s_bs, &telemetry, &dist, 2.0, 5e-4,
    )
    .unwrap();
    assert_eq!(scheduled.switches.len(), 1, "only the initial dispatch");

    // Plain run with the gains interval 1 carries.
    let k = schedule.intervals[0].gains();
    let tuned = study.with_statcom_gains(k.pll(), k.avc());
    let full = assemble_full_system(&tuned, &oc).unwrap();
    let plain = simulate(&full, &dist, 2.0, 5e-4).unwrap();
    assert_eq!(scheduled.time.len(), plain.time.len());
    for (a, b) in scheduled.traces[0].iter().zip(&plain.traces[0]) {
        assert_eq!(a, b, "constant telemetry must reproduce the plain run exactly");
    }
}

#[test]
fn boundary_crossing_swaps_once_with_continuous_trace() {
    let (study, _) = cases::demo().resolve().unwrap();
    let oc = study.rated_condition(vec![-0.3, -0.3]).scaled_power(0.6);
    let red = kron_reduce(&study.net).unwrap();
    let schedule = hand_schedule();
    let dist = Disturbance::standard_dip();
    let dt = 5e-4;
    let telemetry = vec![
        TelemetrySample { t: 0.0, p_e: oc.p_e.clone(), i_qs: vec![-0.3, -0.3] },
        TelemetrySample { t: 1.4, p_e: oc.p_e.clone(), i_qs: vec![0.4, 0.4] },
    ];
    let base = study.clone();
    let oc_run = oc.clone();
    let build = move |k: &GainMatrix| {
        assemble_full_system(&base.with_statcom_gains(k.pll(), k.avc()), &oc_run)
    };
    let run = simulate_with_schedule(
        &build, &schedule, &red, &oc.s_b, &oc.s_bs, &telemetry, &dist, 3.0, dt,
    )
    .unwrap();
    assert_eq!(run.switches.len(), 2, "initial dispatch plus one swap");
    let (t_swap, _) = run.switches[1];
    let k_swap = (t_swap / dt).round() as usize;

    // Trace continuity across the swap: the jump is no larger than the
    // largest neighboring inter-sample step.
    for trace in &run.traces {
        let jump = (trace[k_swap + 1] - trace[k_swap]).abs();
        let neighborhood: f64 = (k_swap.saturating_sub(20)..k_swap)
            .map(|i| (trace[i + 1] - trace[i]).abs())
            .fold(0.0, f64::max);
        assert!(
            jump <= neighborhood * 3.0 + 1e-12,
            "trace jumps {jump:.3e} at the swap vs neighborhood {neighborhood:.3e}"
        );
    }
}
