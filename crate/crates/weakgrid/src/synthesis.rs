//! Structured STATCOM gain synthesis per reactive-current interval.
//!
//! For each interval of the aggregate reactive current, the n bounding
//! subsystems at the critical operating condition (all IBRs at rated power)
//! are stabilized simultaneously by one static gain matrix closing the
//! STATCOM's AVC and PLL loops. The search minimizes the worst-case
//! spectral abscissa over (subsystem, reactive-current sample) pairs with a
//! deterministic multi-start pattern search in log-scaled gain space, then
//! optionally polishes the worst-case H-infinity norm of the
//! disturbance-to-current channel. Infeasibility of an interval is a normal
//! outcome and is reported as a gap in the schedule.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::StudySystem;
use crate::error::{Error, Result};
use crate::lsys::{C64, LinearSystem, sigma_max};
use crate::netmodel::{grid_strength, kron_reduce};
use crate::stability::{self, CGSCR_RANGE};

/// Certification margin on the closed-loop spectral abscissa.
pub const CERT_MARGIN: f64 = 1e-4;

/// Which objective the interval solver minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    SpectralAbscissa,
    Hinf,
}

/// Box bounds for the four structured gains.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainBounds {
    pub k_acps: [f64; 2],
    pub k_acis: [f64; 2],
    pub k_pllps: [f64; 2],
    pub k_pllis: [f64; 2],
}

impl Default for GainBounds {
    fn default() -> Self {
        Self {
            k_acps: [0.5, 5.0],
            k_acis: [1.0, 20.0],
            k_pllps: [1.0, 120.0],
            k_pllis: [100.0, 20000.0],
        }
    }
}

/// Structured static gain: AVC PI and PLL PI of every STATCOM.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GainMatrix {
    pub k_acps: f64,
    pub k_acis: f64,
    pub k_pllps: f64,
    pub k_pllis: f64,
}

impl GainMatrix {
    pub fn pll(&self) -> crate::devices::PiGains {
        crate::devices::PiGains::new(self.k_pllps, self.k_pllis)
    }
    pub fn avc(&self) -> crate::devices::PiGains {
        crate::devices::PiGains::new(self.k_acps, self.k_acis)
    }
    /// 2x4 matrix mapping y = [u_qs, x_pll, u_err, x_avc] to
    /// u = [w_pll, i_qref].
    fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            4,
            &[
                self.k_pllps, self.k_pllis, 0.0, 0.0,
                0.0, 0.0, self.k_acps, self.k_acis,
            ],
        )
    }
}

/// Closes the STATCOM gain channels of an open subsystem: the `w_pll` and
/// `i_qref` inputs are fed by the measurement vector through the structured
/// gain. Remaining channels are preserved for norm evaluation.
pub fn closed_loop(sys: &LinearSystem, k: &GainMatrix) -> Result<LinearSystem> {
    let bu_cols = [sys.input_index("w_pll")?, sys.input_index("i_qref")?];
    let cy_rows = [
        sys.output_index("u_qs")?,
        sys.output_index("x_pll")?,
        sys.output_index("u_err")?,
        sys.output_index("x_avc")?,
    ];
    let bu = sys.b.select_columns(&bu_cols);
    let cy = sys.c.select_rows(&cy_rows);
    for &row in &cy_rows {
        for &col in &bu_cols {
            if sys.d[(row, col)] != 0.0 {
                return Err(Error::Numerical(
                    "measurement feedthrough from gain inputs; closure would be implicit".into(),
                ));
            }
        }
    }
    let a_cl = &sys.a + &bu * k.as_matrix() * &cy;
    let keep_inputs: Vec<&str> = sys
        .inputs
        .iter()
        .filter(|l| l.as_str() != "w_pll" && l.as_str() != "i_qref")
        .map(|s| s.as_str())
        .collect();
    let keep_idx: Vec<usize> = keep_inputs
        .iter()
        .map(|l| sys.input_index(l))
        .collect::<Result<_>>()?;
    let b = sys.b.select_columns(&keep_idx);
    let d = sys.d.select_columns(&keep_idx);
    LinearSystem::new(
        a_cl,
        b,
        sys.c.clone(),
        d,
        keep_inputs.iter().map(|s| s.to_string()).collect(),
        sys.outputs.clone(),
        sys.states.clone(),
    )
}

/// H-infinity norm via bisection on the Hamiltonian matrix's imaginary-axis
/// eigenvalues, cross-checkable against a frequency grid. Returns infinity
/// for systems with an eigenvalue in the closed right half-plane.
pub fn hinf_norm(sys: &LinearSystem) -> f64 {
    hinf_norm_tol(sys, 1e-4)
}

pub fn hinf_norm_tol(sys: &LinearSystem, rel_tol: f64) -> f64 {
    let eigs = sys.eigenvalues();
    if eigs.iter().any(|e| e.re >= 0.0) {
        return f64::INFINITY;
    }
    let n = sys.order();
    if n == 0 || sys.b.ncols() == 0 || sys.c.nrows() == 0 {
        return sigma_max(&sys.d.map(|x| C64::new(x, 0.0)));
    }
    let gain_at = |omega: f64| -> f64 {
        sys.frequency_response(omega).map(|g| sigma_max(&g)).unwrap_or(0.0)
    };
    // Lower bound from candidate peak frequencies.
    let sigma_d = sigma_max(&sys.d.map(|x| C64::new(x, 0.0)));
    let mut gamma_lo = sigma_d.max(gain_at(0.0));
    for e in &eigs {
        if e.im > 0.0 {
            gamma_lo = gamma_lo.max(gain_at(e.im));
        }
    }
    if gamma_lo <= 0.0 {
        return 0.0;
    }
    // Grow an upper bound until the Hamiltonian is free of imaginary axis
    // eigenvalues.
    let mut gamma_hi = gamma_lo * 1.01 + 1e-12;
    let mut guard = 0;
    while has_imaginary_eig(sys, gamma_hi, sigma_d).is_some() {
        gamma_hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return f64::INFINITY;
        }
    }
    let mut lo = gamma_lo;
    let mut hi = gamma_hi;
    while (hi - lo) > rel_tol * lo {
        let mid = 0.5 * (lo + hi);
        match has_imaginary_eig(sys, mid, sigma_d) {
            Some(freqs) => {
                lo = mid;
                // Sharpen with the actual gains at the crossing frequencies.
                for w in freqs {
                    let g = gain_at(w);
                    if g > lo {
                        lo = g;
                    }
                }
                if lo >= hi {
                    hi = lo * (1.0 + rel_tol);
                    if has_imaginary_eig(sys, hi, sigma_d).is_some() {
                        hi = lo * 2.0;
                    }
                }
            }
            None => hi = mid,
        }
    }
    0.5 * (lo + hi)
}

/// Frequencies of imaginary-axis eigenvalues of the gamma-Hamiltonian, or
/// `None` when there are none (gamma is an upper bound on the norm).
fn has_imaginary_eig(sys: &LinearSystem, gamma: f64, sigma_d: f64) -> Option<Vec<f64>> {
    if gamma <= sigma_d * (1.0 + 1e-12) {
        // R loses definiteness; gamma is certainly below the norm.
        return Some(vec![0.0]);
    }
    let n = sys.order();
    let m = sys.b.ncols();
    let r = DMatrix::<f64>::identity(m, m) * (gamma * gamma) - sys.d.transpose() * &sys.d;
    let r_inv = r.clone().try_inverse()?;
    let a_term = &sys.a + &sys.b * &r_inv * sys.d.transpose() * &sys.c;
    let p = sys.c.nrows();
    let s = DMatrix::<f64>::identity(p, p) + &sys.d * &r_inv * sys.d.transpose();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&a_term);
    h.view_mut((0, n), (n, n))
        .copy_from(&(&sys.b * &r_inv * sys.b.transpose()));
    h.view_mut((n, 0), (n, n))
        .copy_from(&(-(sys.c.transpose() * s * &sys.c)));
    h.view_mut((n, n), (n, n)).copy_from(&(-a_term.transpose()));
    let eigs = crate::lsys::eigenvalues(&h);
    let scale = h.norm() / (2.0 * n as f64).sqrt();
    let tol = 1e-8 * scale.max(1.0);
    let freqs: Vec<f64> = eigs
        .iter()
        .filter(|e| e.re.abs() <= tol && e.im > 0.0)
        .map(|e| e.im)
        .collect();
    if freqs.is_empty() { None } else { Some(freqs) }
}

/// One sub-condition of the min-max design: the open bounding subsystems at
/// every reactive-current sample of the interval.
pub struct SynthesisProblem {
    pub interval: (f64, f64),
    pub iq_samples: Vec<f64>,
    pub objective_mode: ObjectiveMode,
    pub bounds: GainBounds,
    plants: Vec<Plant>,
}

struct Plant {
    a: DMatrix<f64>,
    bu: DMatrix<f64>,
    cy: DMatrix<f64>,
    /// Disturbance channel for the norm objective.
    open_sys: LinearSystem,
}

/// Interval partition of [-1, 1]: `[-1 + 2(i-1)/m, -1 + 2i/m)`, the last
/// interval closed at 1.
pub fn iq_intervals(m: usize) -> Vec<(f64, f64)> {
    (0..m)
        .map(|i| {
            (
                -1.0 + 2.0 * i as f64 / m as f64,
                -1.0 + 2.0 * (i + 1) as f64 / m as f64,
            )
        })
        .collect()
}

/// Sample grid inside an interval; half-open intervals sample just inside
/// their upper edge.
pub fn interval_samples(lo: f64, hi: f64, count: usize, closed_hi: bool) -> Vec<f64> {
    let top = if closed_hi { hi } else { hi - 1e-9 };
    if count == 1 {
        return vec![0.5 * (lo + top)];
    }
    (0..count)
        .map(|i| lo + (top - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Builds the synthesis problem for one interval.
pub fn build_problem(
    study: &StudySystem,
    interval: (f64, f64),
    closed_hi: bool,
    samples: usize,
    mode: ObjectiveMode,
    bounds: GainBounds,
) -> Result<SynthesisProblem> {
    let iq_samples = interval_samples(interval.0, interval.1, samples, closed_hi);
    let mut plants = Vec::new();
    for &iq in &iq_samples {
        for sys in stability::bounding_subsystems_open(study, iq)? {
            let bu_cols = [sys.input_index("w_pll")?, sys.input_index("i_qref")?];
            let cy_rows = [
                sys.output_index("u_qs")?,
                sys.output_index("x_pll")?,
                sys.output_index("u_err")?,
                sys.output_index("x_avc")?,
            ];
            plants.push(Plant {
                a: sys.a.clone(),
                bu: sys.b.select_columns(&bu_cols),
                cy: sys.c.select_rows(&cy_rows),
                open_sys: sys,
            });
        }
    }
    Ok(SynthesisProblem { interval, iq_samples, objective_mode: mode, bounds, plants })
}

impl SynthesisProblem {
    /// Worst-case spectral abscissa over all plants.
    pub fn abscissa(&self, k: &GainMatrix) -> f64 {
        let km = k.as_matrix();
        let mut worst = f64::NEG_INFINITY;
        for plant in &self.plants {
            let a_cl = &plant.a + &plant.bu * &km * &plant.cy;
            let re = crate::lsys::eigenvalues(&a_cl)
                .iter()
                .map(|e| e.re)
                .fold(f64::NEG_INFINITY, f64::max);
            if re > worst {
                worst = re;
            }
        }
        worst
    }

    /// Worst-case closed-loop H-infinity norm of the infinite-bus-voltage
    /// to device-current channel.
    pub fn worst_hinf(&self, k: &GainMatrix) -> f64 {
        let mut worst = 0.0f64;
        for plant in &self.plants {
            let Ok(cl) = closed_loop(&plant.open_sys, k) else {
                return f64::INFINITY;
            };
            let Ok(chan) = cl.select(
                &["vinf_d", "vinf_q"],
                &["idev_dev_d", "idev_dev_q"],
            ) else {
                return f64::INFINITY;
            };
            let h = hinf_norm(&chan);
            if h > worst {
                worst = h;
            }
            if worst.is_infinite() {
                break;
            }
        }
        worst
    }
}

/// Outcome of one interval's min-max search.
#[derive(Debug, Clone, Serialize)]
pub struct IntervalSolution {
    pub feasible: bool,
    pub gains: GainMatrix,
    /// Achieved objective: worst-case abscissa, or worst-case norm in
    /// `Hinf` mode.
    pub objective: f64,
    pub worst_real_part: f64,
    pub hinf_norm: Option<f64>,
    pub evaluations: usize,
}

struct LogBox {
    lo: [f64; 4],
    ratio: [f64; 4],
}

impl LogBox {
    fn new(bounds: &GainBounds) -> Self {
        let pairs = [bounds.k_acps, bounds.k_acis, bounds.k_pllps, bounds.k_pllis];
        let mut lo = [0.0; 4];
        let mut ratio = [0.0; 4];
        for (i, p) in pairs.iter().enumerate() {
            lo[i] = p[0];
            ratio[i] = p[1] / p[0];
        }
        Self { lo, ratio }
    }
    fn gains(&self, z: &[f64; 4]) -> GainMatrix {
        let g = |i: usize| self.lo[i] * self.ratio[i].powf(z[i].clamp(0.0, 1.0));
        GainMatrix { k_acps: g(0), k_acis: g(1), k_pllps: g(2), k_pllis: g(3) }
    }
    fn z_of(&self, k: &GainMatrix) -> [f64; 4] {
        let vals = [k.k_acps, k.k_acis, k.k_pllps, k.k_pllis];
        let mut z = [0.0; 4];
        for i in 0..4 {
            z[i] = ((vals[i] / self.lo[i]).ln() / self.ratio[i].ln()).clamp(0.0, 1.0);
        }
        z
    }
}

/// Coordinate pattern search over the normalized log-gain box.
fn pattern_search(
    objective: &dyn Fn(&[f64; 4]) -> f64,
    z0: [f64; 4],
    budget: usize,
) -> ([f64; 4], f64, usize) {
    let mut z = z0;
    let mut f = objective(&z);
    let mut evals = 1usize;
    let mut step = 0.25f64;
    while step > 1e-3 && evals < budget {
        let mut best: Option<([f64; 4], f64)> = None;
        for dim in 0..4 {
            for sign in [-1.0, 1.0] {
                let mut cand = z;
                cand[dim] = (cand[dim] + sign * step).clamp(0.0, 1.0);
                if cand[dim] == z[dim] {
                    continue;
                }
                let fc = objective(&cand);
                evals += 1;
                if fc < f && best.as_ref().map_or(true, |(_, fb)| fc < *fb) {
                    best = Some((cand, fc));
                }
                if evals >= budget {
                    break;
                }
            }
            if evals >= budget {
                break;
            }
        }
        match best {
            Some((zb, fb)) => {
                z = zb;
                f = fb;
                step = (step * 1.6).min(0.25);
            }
            None => step *= 0.5,
        }
    }
    (z, f, evals)
}

/// Solves one interval: multi-start stabilization, then optional norm
/// polishing. Infeasible is a normal outcome.
pub fn solve_interval(problem: &SynthesisProblem, seed: u64) -> IntervalSolution {
    solve_interval_warm(problem, seed, None)
}

pub fn solve_interval_warm(
    problem: &SynthesisProblem,
    seed: u64,
    warm: Option<GainMatrix>,
) -> IntervalSolution {
    let log_box = LogBox::new(&problem.bounds);
    let obj = |z: &[f64; 4]| problem.abscissa(&log_box.gains(z));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut starts: Vec<[f64; 4]> = Vec::new();
    if let Some(k) = warm {
        starts.push(log_box.z_of(&k));
    }
    // Reference-flavored start and box center.
    starts.push(log_box.z_of(&GainMatrix {
        k_acps: 1.0,
        k_acis: 5.0,
        k_pllps: 30.0,
        k_pllis: 7000.0,
    }));
    starts.push([0.5; 4]);
    for _ in 0..3 {
        starts.push([
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
        ]);
    }

    let budget_each = 320usize;
    let mut best_z = starts[0];
    let mut best_f = f64::INFINITY;
    let mut evals_total = 0usize;
    for start in &starts {
        let (z, f, evals) = pattern_search(&obj, *start, budget_each);
        evals_total += evals;
        if f < best_f {
            best_f = f;
            best_z = z;
        }
    }

    let mut gains = log_box.gains(&best_z);
    let mut worst_re = best_f;
    let feasible = worst_re < -CERT_MARGIN;

    let mut hinf = None;
    let mut objective = worst_re;
    if feasible {
        if problem.objective_mode == ObjectiveMode::Hinf {
            // Norm phase from the stabilizing point; unstable iterates cost
            // infinity so stabilization is preserved.
            let hobj = |z: &[f64; 4]| {
                let k = log_box.gains(z);
                if problem.abscissa(&k) >= -CERT_MARGIN {
                    return f64::INFINITY;
                }
                problem.worst_hinf(&k)
            };
            let (z2, f2, evals2) = pattern_search(&hobj, best_z, 160);
            evals_total += evals2;
            if f2.is_finite() {
                gains = log_box.gains(&z2);
                worst_re = problem.abscissa(&gains);
                objective = f2;
                hinf = Some(f2);
            } else {
                hinf = Some(problem.worst_hinf(&gains));
            }
        } else {
            hinf = Some(problem.worst_hinf(&gains));
        }
    }

    IntervalSolution {
        feasible,
        gains,
        objective,
        worst_real_part: worst_re,
        hinf_norm: hinf,
        evaluations: evals_total,
    }
}

/// Scheduled gains for one reactive-current interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleInterval {
    pub lo: f64,
    pub hi: f64,
    pub k_acps: f64,
    pub k_acis: f64,
    pub k_pllps: f64,
    pub k_pllis: f64,
    pub objective: f64,
    pub certified: bool,
    pub feasible: bool,
    pub worst_real_part: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hinf_norm: Option<f64>,
    /// Largest CgSCR over the verification sweep of this interval, when the
    /// post-hoc check ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cgscr_max: Option<f64>,
}

impl ScheduleInterval {
    pub fn gains(&self) -> GainMatrix {
        GainMatrix {
            k_acps: self.k_acps,
            k_acis: self.k_acis,
            k_pllps: self.k_pllps,
            k_pllis: self.k_pllis,
        }
    }
    pub fn contains(&self, iq: f64, closed_hi: bool) -> bool {
        if closed_hi {
            iq >= self.lo && iq <= self.hi
        } else {
            iq >= self.lo && iq < self.hi
        }
    }
}

/// The full gain schedule over [-1, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainSchedule {
    pub m: usize,
    pub intervals: Vec<ScheduleInterval>,
    /// Rated grid-strength index of the design case.
    pub rated_gscr: f64,
    /// CgSCR of the design case with STATCOMs disconnected, when computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_statcom_cgscr: Option<f64>,
}

impl GainSchedule {
    pub fn complete(&self) -> bool {
        self.intervals.iter().all(|iv| iv.feasible && iv.certified)
    }
    pub fn any_feasible(&self) -> bool {
        self.intervals.iter().any(|iv| iv.feasible)
    }
    /// Finds the certified interval containing `iq` (1-based index).
    pub fn interval_for(&self, iq: f64) -> Option<(usize, &ScheduleInterval)> {
        let m = self.intervals.len();
        self.intervals
            .iter()
            .enumerate()
            .find(|(i, iv)| iv.contains(iq, *i == m - 1) && iv.feasible && iv.certified)
            .map(|(i, iv)| (i + 1, iv))
    }
}

/// Offline schedule synthesis: partitions [-1, 1] into `m` intervals,
/// solves each min-max problem at the critical operating condition,
/// certifies on a refined sample grid, and (optionally) verifies that each
/// gain set keeps CgSCR below the rated gSCR across its interval.
pub fn synthesize_schedule(
    study: &StudySystem,
    m: usize,
    seed: u64,
    mode: ObjectiveMode,
    bounds: &GainBounds,
    verify: bool,
) -> Result<GainSchedule> {
    if m == 0 {
        return Err(Error::Config("interval count m must be >= 1".into()));
    }
    let red = kron_reduce(&study.net)?;
    let rated = study.rated_condition(vec![0.0; study.statcoms.len()]);
    let rated_report = grid_strength(&red, &rated)?;
    let rated_gscr = rated_report.gscr;

    let no_statcom_cgscr = if verify {
        let bare = study.without_statcoms();
        let bare_rated = bare.rated_condition(vec![]);
        let crit = stability::build_critical_subsystem(&bare, &bare_rated)?;
        Some(crit.cgscr(CGSCR_RANGE.0, CGSCR_RANGE.1)?.cgscr)
    } else {
        None
    };

    let mut intervals = Vec::with_capacity(m);
    let mut previous: Option<GainMatrix> = None;
    for (i, (lo, hi)) in iq_intervals(m).into_iter().enumerate() {
        let closed_hi = i == m - 1;
        let problem = build_problem(study, (lo, hi), closed_hi, 3, mode, bounds.clone())?;
        let mut sol = solve_interval_warm(&problem, seed.wrapping_add(i as u64), previous);
        let mut certified = false;
        if sol.feasible {
            // Certification on a denser, freshly built grid.
            let cert = build_problem(study, (lo, hi), closed_hi, 5, mode, bounds.clone())?;
            let worst = cert.abscissa(&sol.gains);
            if worst < -CERT_MARGIN {
                certified = true;
                sol.worst_real_part = worst;
            } else {
                // Retry the search on the densified grid.
                let retry =
                    solve_interval_warm(&cert, seed.wrapping_add(1000 + i as u64), Some(sol.gains));
                if retry.feasible {
                    let worst = cert.abscissa(&retry.gains);
                    if worst < -CERT_MARGIN {
                        sol = retry;
                        sol.worst_real_part = worst;
                        certified = true;
                    }
                }
            }
        }
        if sol.feasible && certified {
            previous = Some(sol.gains);
        }

        let cgscr_max = if verify && sol.feasible && certified {
            Some(verify_interval_cgscr(study, &sol.gains, lo, hi, closed_hi, 21)?)
        } else {
            None
        };

        intervals.push(ScheduleInterval {
            lo,
            hi,
            k_acps: sol.gains.k_acps,
            k_acis: sol.gains.k_acis,
            k_pllps: sol.gains.k_pllps,
            k_pllis: sol.gains.k_pllis,
            objective: sol.objective,
            certified,
            feasible: sol.feasible,
            worst_real_part: sol.worst_real_part,
            hinf_norm: sol.hinf_norm,
            cgscr_max,
        });
    }

    Ok(GainSchedule { m, intervals, rated_gscr, no_statcom_cgscr })
}

/// Largest CgSCR of the critical subsystem over an interval sweep with the
/// scheduled gains applied to every STATCOM.
pub fn verify_interval_cgscr(
    study: &StudySystem,
    k: &GainMatrix,
    lo: f64,
    hi: f64,
    closed_hi: bool,
    points: usize,
) -> Result<f64> {
    let tuned = study.with_statcom_gains(k.pll(), k.avc());
    let red = kron_reduce(&tuned.net)?;
    let rated = tuned.rated_condition(vec![0.0; tuned.statcoms.len()]);
    let report = grid_strength(&red, &rated)?;
    let mut worst: f64 = 0.0;
    for iq in interval_samples(lo, hi, points, closed_hi) {
        let device =
            stability::critical_device(&tuned, &rated, &report, Some((report.p_sigma, iq)))?;
        let result = stability::cgscr_search(
            &|scr| stability::assemble_single_device(&device, scr, tuned.net.tau, tuned.net.omega0),
            CGSCR_RANGE.0,
            CGSCR_RANGE.1,
            CGSCR_TOL_VERIFY,
        )?;
        worst = worst.max(result.cgscr);
    }
    Ok(worst)
}

/// Coarser bisection tolerance for the verification sweeps.
const CGSCR_TOL_VERIFY: f64 = 5e-3;
