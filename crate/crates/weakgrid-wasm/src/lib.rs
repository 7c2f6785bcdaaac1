//! Browser bindings for the weakgrid toolkit.
//!
//! Exposes three interactive operations on the bundled desk-scale case,
//! each returning JSON for the static demo page to plot:
//! - `gscr_sweep`: dominant-mode and damping loci against a uniform
//!   power scaling (grid strength falls as output rises).
//! - `cgscr_curve`: the critical grid-strength boundary versus the
//!   aggregate STATCOM reactive current for user-chosen STATCOM gains.
//! - `simulate_dip`: time-domain active-power traces after an
//!   infinite-bus voltage dip.

use wasm_bindgen::prelude::*;

use weakgrid::cases;
use weakgrid::devices::PiGains;
use weakgrid::netmodel::{grid_strength, kron_reduce};
use weakgrid::sim::{Disturbance, simulate};
use weakgrid::stability::{
    self, CGSCR_RANGE, assemble_full_system, bounding_subsystems, build_critical_subsystem,
    dominant_eigenvalues,
};

fn err_json(e: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": e.to_string() }).to_string()
}

/// Rated grid-strength summary of the demo case.
#[wasm_bindgen]
pub fn case_summary() -> String {
    let run = || -> weakgrid::Result<String> {
        let (study, oc) = cases::demo().resolve()?;
        let red = kron_reduce(&study.net)?;
        let report = grid_strength(&red, &oc)?;
        Ok(serde_json::json!({
            "description": cases::demo().description,
            "n_ibr": study.ibrs.len(),
            "n_statcom": study.statcoms.len(),
            "gscr": report.gscr,
            "p_sigma": report.p_sigma,
        })
        .to_string())
    };
    run().unwrap_or_else(err_json)
}

/// Damping loci over a uniform power scaling of the demo case.
#[wasm_bindgen]
pub fn gscr_sweep(scale_lo: f64, scale_hi: f64, steps: usize, iq: f64) -> String {
    let run = || -> weakgrid::Result<String> {
        let (study, _) = cases::demo().resolve()?;
        let k = study.statcoms.len();
        let rated = study.rated_condition(vec![iq.clamp(-1.0, 1.0); k]);
        let mut rows = Vec::new();
        let steps = steps.clamp(2, 41);
        for i in 0..steps {
            let alpha = scale_lo + (scale_hi - scale_lo) * i as f64 / (steps - 1) as f64;
            let oc = rated.scaled_power(alpha.clamp(0.05, 1.0));
            let crit = build_critical_subsystem(&study, &oc)?;
            let full = assemble_full_system(&study, &oc)?;
            let vf = dominant_eigenvalues(&full);
            let vc = dominant_eigenvalues(&crit.sys);
            let subs = bounding_subsystems(&study, &oc)?;
            let dom = |v: &stability::StabilityVerdict| {
                v.dominant.first().copied().unwrap_or((v.max_real_part, 0.0))
            };
            rows.push(serde_json::json!({
                "alpha": alpha,
                "gscr": crit.report.gscr,
                "full": { "re": dom(&vf).0, "im": dom(&vf).1, "zeta": vf.damping_ratio },
                "critical": { "re": dom(&vc).0, "im": dom(&vc).1, "zeta": vc.damping_ratio },
                "weakest_zeta": subs.first().map(|s| s.verdict.damping_ratio),
                "strongest_zeta": subs.last().map(|s| s.verdict.damping_ratio),
            }));
        }
        Ok(serde_json::json!({ "rows": rows }).to_string())
    };
    run().unwrap_or_else(err_json)
}

/// CgSCR of the critical subsystem versus aggregate reactive current, with
/// the STATCOM PLL and AVC gains supplied by the page.
#[wasm_bindgen]
pub fn cgscr_curve(points: usize, pll_kp: f64, pll_ki: f64, avc_kp: f64, avc_ki: f64) -> String {
    let run = || -> weakgrid::Result<String> {
        let (study, _) = cases::demo().resolve()?;
        let study =
            study.with_statcom_gains(PiGains::new(pll_kp, pll_ki), PiGains::new(avc_kp, avc_ki));
        let red = kron_reduce(&study.net)?;
        let rated = study.rated_condition(vec![0.0; study.statcoms.len()]);
        let report = grid_strength(&red, &rated)?;
        let points = points.clamp(3, 41);
        let mut rows = Vec::new();
        for i in 0..points {
            let iq = -1.0 + 2.0 * i as f64 / (points - 1) as f64;
            let device =
                stability::critical_device(&study, &rated, &report, Some((report.p_sigma, iq)))?;
            let entry = match stability::cgscr_search(
                &|scr| {
                    stability::assemble_single_device(&device, scr, study.net.tau, study.net.omega0)
                },
                CGSCR_RANGE.0,
                CGSCR_RANGE.1,
                5e-3,
            ) {
                Ok(r) => serde_json::json!({ "iq": iq, "cgscr": r.cgscr }),
                Err(_) => serde_json::json!({ "iq": iq, "cgscr": null }),
            };
            rows.push(entry);
        }
        Ok(serde_json::json!({ "gscr": report.gscr, "rows": rows }).to_string())
    };
    run().unwrap_or_else(err_json)
}

/// Voltage-dip response of the demo case at a chosen dispatch and STATCOM
/// gain set. Returns decimated traces ready for a canvas plot.
#[wasm_bindgen]
pub fn simulate_dip(
    power_scale: f64,
    iq: f64,
    pll_kp: f64,
    pll_ki: f64,
    avc_kp: f64,
    avc_ki: f64,
) -> String {
    let run = || -> weakgrid::Result<String> {
        let (study, _) = cases::demo().resolve()?;
        let study =
            study.with_statcom_gains(PiGains::new(pll_kp, pll_ki), PiGains::new(avc_kp, avc_ki));
        let k = study.statcoms.len();
        let oc = study
            .rated_condition(vec![iq.clamp(-1.0, 1.0); k])
            .scaled_power(power_scale.clamp(0.05, 1.0));
        let full = assemble_full_system(&study, &oc)?;
        let dist = Disturbance::standard_dip();
        let result = simulate(&full, &dist, 4.0, 5e-4)?;
        let stride = (result.time.len() / 800).max(1);
        let time: Vec<f64> = result.time.iter().step_by(stride).copied().collect();
        let traces: Vec<Vec<f64>> = result
            .traces
            .iter()
            .map(|t| t.iter().step_by(stride).copied().collect())
            .collect();
        Ok(serde_json::json!({
            "time": time,
            "traces": traces,
            "labels": result.trace_labels,
            "classification": result.classification,
            "envelope_slope": result.envelope_slope,
        })
        .to_string())
    };
    run().unwrap_or_else(err_json)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_is_valid_json() {
        let v: serde_json::Value = serde_json::from_str(&case_summary()).unwrap();
        assert!(v.get("error").is_none(), "{v}");
        assert!(v["gscr"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn sweep_monotone_gscr() {
        let v: serde_json::Value = serde_json::from_str(&gscr_sweep(0.5, 1.0, 6, 0.0)).unwrap();
        let rows = v["rows"].as_array().unwrap();
        assert_eq!(rows.len(), 6);
        let g: Vec<f64> = rows.iter().map(|r| r["gscr"].as_f64().unwrap()).collect();
        for w in g.windows(2) {
            assert!(w[1] < w[0], "gscr must fall as loading rises");
        }
    }

    #[test]
    fn dip_simulation_returns_traces() {
        let v: serde_json::Value =
            serde_json::from_str(&simulate_dip(0.7, 0.0, 30.0, 7000.0, 1.0, 5.0)).unwrap();
        assert!(v.get("error").is_none(), "{v}");
        assert_eq!(v["traces"].as_array().unwrap().len(), 3);
    }
}
