//! Command-line pipeline: grid-strength analysis, CgSCR search, gain
//! scheduling, dispatch replay, disturbance simulation and black-box
//! device fitting.
//!
//! Exit codes: 0 ok, 2 config error, 3 infeasible/schedule gap,
//! 4 numerical failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use weakgrid::config::{CaseConfig, StudySystem};
use weakgrid::devices::{FreqSample, PiGains, fit_rational_best};
use weakgrid::error::Error;
use weakgrid::lsys::C64;
use weakgrid::netmodel::{OperatingCondition, grid_strength, kron_reduce};
use weakgrid::scheduler::{HYSTERESIS, TelemetrySample, replay};
use weakgrid::sim::{Disturbance, SimulationResult, simulate, simulate_with_schedule};
use weakgrid::stability::{
    self, CGSCR_RANGE, assemble_full_system, bounding_subsystems, build_critical_subsystem,
    dominant_eigenvalues,
};
use weakgrid::synthesis::{GainMatrix, GainSchedule, synthesize_schedule};

#[derive(Parser)]
#[command(name = "weakgrid", version, about = "Grid-strength stability analysis and adaptive STATCOM gain scheduling")]
struct Cli {
    /// Case configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (falls back to the config's output_dir, then `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed for the synthesis search.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Report format for tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Grid-strength report; optionally sweep a uniform power scaling.
    Gscr(GscrArgs),
    /// Critical grid-strength boundary of the critical subsystem.
    Cgscr(CgscrArgs),
    /// Damping-ranked single-IBR bounding subsystems.
    Subsystems,
    /// Offline gain-schedule synthesis.
    Synthesize(SynthArgs),
    /// Replay telemetry through the online dispatcher.
    DispatchReplay(ReplayArgs),
    /// Linear disturbance simulation.
    Simulate(SimArgs),
    /// Rational fit of a scanned admittance (CSV import).
    Fit(FitArgs),
}

#[derive(Args)]
struct GscrArgs {
    /// Power sweep `lo:hi:steps` on a uniform scaling of rated power.
    #[arg(long)]
    sweep: Option<String>,
}

#[derive(Args)]
struct CgscrArgs {
    /// Disconnect all STATCOMs first.
    #[arg(long)]
    no_statcom: bool,
    /// Override every STATCOM's reactive current.
    #[arg(long, allow_hyphen_values = true)]
    iq: Option<f64>,
    /// Emit a CgSCR-versus-IqSigma curve with this many points.
    #[arg(long)]
    iq_sweep: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of reactive-current intervals (overrides the config).
    #[arg(long)]
    m: Option<usize>,
    /// Skip the post-hoc CgSCR verification sweep.
    #[arg(long)]
    no_verify: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Gain schedule JSON produced by `synthesize`.
    #[arg(long)]
    schedule: PathBuf,
    /// Telemetry CSV: timestamp, p_e_1..p_e_n, i_qs_1..i_qs_k.
    #[arg(long)]
    telemetry: PathBuf,
    /// Hysteresis band on the aggregate reactive current.
    #[arg(long, default_value_t = HYSTERESIS)]
    hysteresis: f64,
}

#[derive(Args)]
struct SimArgs {
    /// Uniform scaling of rated active power.
    #[arg(long, default_value_t = 1.0)]
    power_scale: f64,
    /// Override every STATCOM's reactive current.
    #[arg(long, allow_hyphen_values = true)]
    iq: Option<f64>,
    /// Use the fixed reference STATCOM gains (PLL PI 22, 7300).
    #[arg(long)]
    reference_gains: bool,
    /// Gain schedule JSON; gains are dispatched online.
    #[arg(long)]
    schedule: Option<PathBuf>,
    /// Telemetry CSV driving the dispatcher during the run.
    #[arg(long)]
    telemetry: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    horizon: f64,
    #[arg(long, default_value_t = 2e-4)]
    dt: f64,
    /// Disturbance onset, s.
    #[arg(long, default_value_t = 1.0)]
    dist_start: f64,
    /// Disturbance length, s.
    #[arg(long, default_value_t = 0.05)]
    dist_duration: f64,
    /// Voltage drop, per-unit.
    #[arg(long, default_value_t = 0.05)]
    dist_magnitude: f64,
}

#[derive(Args)]
struct FitArgs {
    /// Frequency-scan CSV: omega_rad_s, re_Y11, im_Y11, ..., re_Y22, im_Y22.
    #[arg(long)]
    scan: PathBuf,
    /// Model order (number of poles).
    #[arg(long)]
    order: usize,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    });
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidNetwork(_)
        | Error::InvalidOperatingCondition(_)
        | Error::Dimension(_)
        | Error::Io(_) => 2,
        Error::ScheduleGap { .. } => 3,
        _ => 4,
    }
}

fn load_case(
    cli_config: &Option<PathBuf>,
) -> Result<(CaseConfig, StudySystem, OperatingCondition), Error> {
    let path = cli_config
        .as_ref()
        .ok_or_else(|| Error::Config("--config PATH is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = CaseConfig::from_json(&text)?;
    let (study, oc) = cfg.resolve()?;
    Ok((cfg, study, oc))
}

fn out_dir(cli: &Cli, cfg: &CaseConfig) -> Result<PathBuf, Error> {
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

fn run(cli: Cli) -> Result<i32, Error> {
    match &cli.command {
        Command::Gscr(args) => cmd_gscr(&cli, args),
        Command::Cgscr(args) => cmd_cgscr(&cli, args),
        Command::Subsystems => cmd_subsystems(&cli),
        Command::Synthesize(args) => cmd_synthesize(&cli, args),
        Command::DispatchReplay(args) => cmd_dispatch_replay(&cli, args),
        Command::Simulate(args) => cmd_simulate(&cli, args),
        Command::Fit(args) => cmd_fit(&cli, args),
    }
}

fn cmd_gscr(cli: &Cli, args: &GscrArgs) -> Result<i32, Error> {
    let (cfg, study, oc) = load_case(&cli.config)?;
    let out = out_dir(cli, &cfg)?;
    let red = kron_reduce(&study.net)?;
    let report = grid_strength(&red, &oc)?;
    println!(
        "gscr = {:.4}  p_sigma = {:.4}  iq_sigma = {:+.4}",
        report.gscr, report.p_sigma, report.iq_sigma
    );
    write_file(
        &out.join("gscr_report.json"),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;

    if let Some(spec) = &args.sweep {
        let (lo, hi, steps) = parse_sweep(spec)?;
        let mut csv = String::from("gscr,re,im,zeta,system_tag\n");
        let mut gscr_rows = String::from("scale,gscr\n");
        let rated = study.rated_condition(oc.i_qs.clone());
        for k in 0..steps {
            let alpha = lo + (hi - lo) * k as f64 / (steps - 1) as f64;
            let swept = rated.scaled_power(alpha);
            let crit = build_critical_subsystem(&study, &swept)?;
            let full = assemble_full_system(&study, &swept)?;
            let subs = bounding_subsystems(&study, &swept)?;
            let rows: Vec<(&str, stability::StabilityVerdict)> = vec![
                ("full", dominant_eigenvalues(&full)),
                ("critical", dominant_eigenvalues(&crit.sys)),
                ("weakest", subs.first().map(|s| s.verdict.clone()).unwrap()),
                ("strongest", subs.last().map(|s| s.verdict.clone()).unwrap()),
            ];
            gscr_rows.push_str(&format!("{alpha},{}\n", crit.report.gscr));
            for (tag, v) in rows {
                let (re, im) = v.dominant.first().copied().unwrap_or((v.max_real_part, 0.0));
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    crit.report.gscr, re, im, v.damping_ratio, tag
                ));
            }
        }
        write_file(&out.join("damping_loci.csv"), &csv)?;
        write_file(&out.join("gscr_sweep.csv"), &gscr_rows)?;
        println!("wrote damping_loci.csv and gscr_sweep.csv ({steps} sweep points)");
    }
    Ok(0)
}

/// Parses `lo:hi:steps`; the sweep scales rated power uniformly.
fn parse_sweep(spec: &str) -> Result<(f64, f64, usize), Error> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("bad sweep spec `{spec}`, expected lo:hi:steps")));
    }
    let lo: f64 = parts[0].parse().map_err(|_| Error::Config("bad sweep lo".into()))?;
    let hi: f64 = parts[1].parse().map_err(|_| Error::Config("bad sweep hi".into()))?;
    let steps: usize = parts[2].parse().map_err(|_| Error::Config("bad sweep steps".into()))?;
    if !(lo > 0.0) || hi < lo || steps < 2 {
        return Err(Error::Config("sweep needs 0 < lo <= hi and steps >= 2".into()));
    }
    Ok((lo, hi, steps))
}

fn cmd_cgscr(cli: &Cli, args: &CgscrArgs) -> Result<i32, Error> {
    let (cfg, study, oc) = load_case(&cli.config)?;
    let out = out_dir(cli, &cfg)?;
    let study = if args.no_statcom { study.without_statcoms() } else { study };
    let mut oc = if args.no_statcom {
        OperatingCondition { i_qs: vec![], s_bs: vec![], ..oc }
    } else {
        oc
    };
    if let Some(iq) = args.iq {
        oc.i_qs = vec![iq; oc.i_qs.len()];
    }
    let verdict = stability::verdict(&study, &oc)?;
    println!(
        "gscr = {:.4}  cgscr = {:.4}  margin = {:+.4}  omega_c = {:.1} rad/s  stable = {}",
        verdict.gscr, verdict.cgscr, verdict.margin, verdict.omega_c, verdict.stable_by_criterion
    );
    if !verdict.consistent {
        eprintln!(
            "warning: grid-strength criterion and full-system eigenvalues disagree (margin {:+.4}, full-system stable = {})",
            verdict.margin, verdict.full_system.stable
        );
    }
    write_file(
        &out.join("cgscr_report.json"),
        &serde_json::to_string_pretty(&verdict).expect("verdict serializes"),
    )?;

    if let Some(points) = args.iq_sweep {
        if points < 2 {
            return Err(Error::Config("--iq-sweep needs at least 2 points".into()));
        }
        let red = kron_reduce(&study.net)?;
        let rated = study.rated_condition(vec![0.0; study.statcoms.len()]);
        let report = grid_strength(&red, &rated)?;
        let mut csv = String::from("iq_sigma,cgscr\n");
        for k in 0..points {
            let iq = -1.0 + 2.0 * k as f64 / (points - 1) as f64;
            let device =
                stability::critical_device(&study, &rated, &report, Some((report.p_sigma, iq)))?;
            let r = stability::cgscr_search(
                &|scr| {
                    stability::assemble_single_device(&device, scr, study.net.tau, study.net.omega0)
                },
                CGSCR_RANGE.0,
                CGSCR_RANGE.1,
                1e-3,
            )?;
            csv.push_str(&format!("{iq},{}\n", r.cgscr));
        }
        write_file(&out.join("cgscr_vs_iq.csv"), &csv)?;
        println!("wrote cgscr_vs_iq.csv ({points} points)");
    }
    Ok(0)
}

fn cmd_subsystems(cli: &Cli) -> Result<i32, Error> {
    let (cfg, study, oc) = load_case(&cli.config)?;
    let out = out_dir(cli, &cfg)?;
    let subs = bounding_subsystems(&study, &oc)?;
    #[derive(serde::Serialize)]
    struct Row {
        rank: usize,
        ibr_index: usize,
        damping_ratio: f64,
        dominant_re: f64,
        dominant_im: f64,
        gscr: f64,
        stable: bool,
    }
    let rows: Vec<Row> = subs
        .iter()
        .enumerate()
        .map(|(rank, s)| {
            let (re, im) =
                s.verdict.dominant.first().copied().unwrap_or((s.verdict.max_real_part, 0.0));
            Row {
                rank: rank + 1,
                ibr_index: s.ibr_index + 1,
                damping_ratio: s.verdict.damping_ratio,
                dominant_re: re,
                dominant_im: im,
                gscr: s.gscr,
                stable: s.verdict.stable,
            }
        })
        .collect();
    match cli.format {
        Format::Json => write_file(
            &out.join("subsystems.json"),
            &serde_json::to_string_pretty(&rows).expect("rows serialize"),
        )?,
        Format::Csv => {
            let mut csv =
                String::from("rank,ibr_index,damping_ratio,dominant_re,dominant_im,gscr,stable\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    r.rank, r.ibr_index, r.damping_ratio, r.dominant_re, r.dominant_im, r.gscr,
                    r.stable
                ));
            }
            write_file(&out.join("subsystems.csv"), &csv)?;
        }
    }
    for r in &rows {
        println!(
            "rank {}: ibr {} zeta {:+.4} dominant {:+.3} {:+.1}j",
            r.rank, r.ibr_index, r.damping_ratio, r.dominant_re, r.dominant_im
        );
    }
    Ok(0)
}

fn cmd_synthesize(cli: &Cli, args: &SynthArgs) -> Result<i32, Error> {
    let (cfg, study, _) = load_case(&cli.config)?;
    let out = out_dir(cli, &cfg)?;
    let section = study.synthesis.clone();
    let m = args.m.unwrap_or(section.m);
    let seed = cli.seed.unwrap_or(section.seed);
    let schedule = synthesize_schedule(
        &study,
        m,
        seed,
        section.objective_mode,
        &section.bounds,
        !args.no_verify,
    )?;
    for iv in &schedule.intervals {
        println!(
            "[{:+.3}, {:+.3}) feasible={} certified={} worst_re={:+.5} pll {:.1}+{:.1}/s avc {:.2}+{:.2}/s{}",
            iv.lo,
            iv.hi,
            iv.feasible,
            iv.certified,
            iv.worst_real_part,
            iv.k_pllps,
            iv.k_pllis,
            iv.k_acps,
            iv.k_acis,
            iv.cgscr_max.map(|c| format!(" cgscr_max={c:.3}")).unwrap_or_default()
        );
    }
    write_file(
        &out.join("schedule.json"),
        &serde_json::to_string_pretty(&schedule).expect("schedule serializes"),
    )?;
    if schedule.complete() {
        println!("schedule complete: {} certified intervals", schedule.m);
        Ok(0)
    } else if schedule.any_feasible() {
        eprintln!("schedule is partial: some intervals are infeasible or uncertified");
        Ok(3)
    } else {
        eprintln!("schedule infeasible: no interval could be stabilized");
        Ok(3)
    }
}

fn read_telemetry(path: &Path, n: usize, k: usize) -> Result<Vec<TelemetrySample>, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with("timestamp")) {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Config(format!("telemetry line {}: {e}", ln + 1)))?;
        if fields.len() != 1 + n + k {
            return Err(Error::Config(format!(
                "telemetry line {} has {} fields, expected {}",
                ln + 1,
                fields.len(),
                1 + n + k
            )));
        }
        out.push(TelemetrySample {
            t: fields[0],
            p_e: fields[1..1 + n].to_vec(),
            i_qs: fields[1 + n..].to_vec(),
        });
    }
    if out.is_empty() {
        return Err(Error::Config("telemetry file has no samples".into()));
    }
    Ok(out)
}

fn read_schedule(path: &Path) -> Result<GainSchedule, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad schedule JSON: {e}")))
}

fn cmd_dispatch_replay(cli: &Cli, args: &ReplayArgs) -> Result<i32, Error> {
    let (cfg, study, oc) = load_case(&cli.config)?;
    let out = out_dir(cli, &cfg)?;
    let schedule = read_schedule(&args.schedule)?;
    let telemetry = read_telemetry(&args.telemetry, oc.s_b.len(), oc.s_bs.len())?;
    let red = kron_reduce(&study.net)?;
    let decisions = replay(&schedule, &red, &oc.s_b, &oc.s_bs, &telemetry, args.hysteresis)?;
    let mut log = String::new();
    for d in &decisions {
        log.push_str(&serde_json::to_string(d).expect("decision serializes"));
        log.push('\n');
    }
    write_file(&out.join("decisions.jsonl"), &log)?;
    let switches = decisions.iter().filter(|d| d.switched).count();
    println!("replayed {} samples, {} switches", decisions.len(), switches);
    Ok(0)
}

fn apply_sim_condition(oc: &OperatingCondition, scale: f64, iq: Option<f64>) -> OperatingCondition {
    let mut out =
        OperatingCondition { p_e: oc.s_b.iter().map(|s| s * scale).collect(), ..oc.clone() };
    if let Some(v) = iq {
        out.i_qs = vec![v; out.i_qs.len()];
    }
    out
}

fn cmd_simulate(cli: &Cli, args: &SimArgs) -> Result<i32, Error> {
    let (cfg, study, oc0) = load_case(&cli.config)?;
    let out = out_dir(cli, &cfg)?;
    let study = if args.reference_gains {
        study.with_statcom_gains(PiGains::new(22.0, 7300.0), PiGains::new(1.0, 5.0))
    } else {
        study
    };
    let oc = apply_sim_condition(&oc0, args.power_scale, args.iq);
    oc.validate()?;
    let dist = Disturbance::InfiniteBusVoltageDip {
        start: args.dist_start,
        duration: args.dist_duration,
        magnitude: args.dist_magnitude,
    };

    let result: SimulationResult = if let Some(schedule_path) = &args.schedule {
        let schedule = read_schedule(schedule_path)?;
        let red = kron_reduce(&study.net)?;
        let telemetry = match &args.telemetry {
            Some(path) => read_telemetry(path, oc.s_b.len(), oc.s_bs.len())?,
            None => vec![TelemetrySample { t: 0.0, p_e: oc.p_e.clone(), i_qs: oc.i_qs.clone() }],
        };
        let base = study.clone();
        let oc_run = oc.clone();
        let build = move |k: &GainMatrix| {
            let tuned = base.with_statcom_gains(k.pll(), k.avc());
            assemble_full_system(&tuned, &oc_run)
        };
        simulate_with_schedule(
            &build,
            &schedule,
            &red,
            &oc.s_b,
            &oc.s_bs,
            &telemetry,
            &dist,
            args.horizon,
            args.dt,
        )?
    } else {
        let full = assemble_full_system(&study, &oc)?;
        simulate(&full, &dist, args.horizon, args.dt)?
    };

    // Trace CSV: time, then one column per IBR.
    let mut csv = String::from("time");
    for label in &result.trace_labels {
        csv.push(',');
        csv.push_str(label);
    }
    csv.push('\n');
    for (i, t) in result.time.iter().enumerate() {
        csv.push_str(&format!("{t}"));
        for trace in &result.traces {
            csv.push_str(&format!(",{}", trace[i]));
        }
        csv.push('\n');
    }
    write_file(&out.join("traces.csv"), &csv)?;

    #[derive(serde::Serialize)]
    struct Manifest<'a> {
        case_description: &'a Option<String>,
        power_scale: f64,
        iq_override: Option<f64>,
        reference_gains: bool,
        schedule: Option<String>,
        horizon: f64,
        dt: f64,
        disturbance: &'a Disturbance,
        classification: &'a weakgrid::sim::Classification,
        envelope_slope: f64,
        switches: &'a Vec<(f64, usize)>,
        timestamp_unix: u64,
    }
    let manifest = Manifest {
        case_description: &cfg.description,
        power_scale: args.power_scale,
        iq_override: args.iq,
        reference_gains: args.reference_gains,
        schedule: args.schedule.as_ref().map(|p| p.display().to_string()),
        horizon: args.horizon,
        dt: args.dt,
        disturbance: &dist,
        classification: &result.classification,
        envelope_slope: result.envelope_slope,
        switches: &result.switches,
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    write_file(
        &out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    println!(
        "classification: {:?} (envelope slope {:+.3} 1/s)",
        result.classification, result.envelope_slope
    );
    Ok(0)
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<i32, Error> {
    let (cfg, study, _) = load_case(&cli.config)?;
    let out = out_dir(cli, &cfg)?;
    let text = std::fs::read_to_string(&args.scan)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.scan.display())))?;
    let mut samples = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with("omega")) {
            continue;
        }
        let f: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| Error::Config(format!("scan line {}: {e}", ln + 1)))?;
        if f.len() != 9 {
            return Err(Error::Config(format!(
                "scan line {} has {} fields, expected 9 (omega + 4 complex entries)",
                ln + 1,
                f.len()
            )));
        }
        samples.push(FreqSample {
            omega: f[0],
            y: nalgebra::Matrix2::new(
                C64::new(f[1], f[2]),
                C64::new(f[3], f[4]),
                C64::new(f[5], f[6]),
                C64::new(f[7], f[8]),
            ),
        });
    }
    let fit = fit_rational_best(&samples, args.order, study.net.omega0)?;
    #[derive(serde::Serialize)]
    struct FitReport {
        order: usize,
        converged: bool,
        iterations: usize,
        max_rel_error: f64,
        poles: Vec<(f64, f64)>,
        shunt_b: f64,
        a: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
    }
    let to_rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
        (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
    };
    let report = FitReport {
        order: args.order,
        converged: fit.converged,
        iterations: fit.iterations,
        max_rel_error: fit.max_rel_error,
        poles: fit.poles.iter().map(|p| (p.re, p.im)).collect(),
        shunt_b: fit.model.shunt_b,
        a: to_rows(&fit.model.sys.a),
        b: to_rows(&fit.model.sys.b),
        c: to_rows(&fit.model.sys.c),
        d: to_rows(&fit.model.sys.d),
    };
    write_file(
        &out.join("fit.json"),
        &serde_json::to_string_pretty(&report).expect("fit serializes"),
    )?;
    println!(
        "fit order {}: max relative error {:.3e}, converged = {}",
        args.order, fit.max_rel_error, fit.converged
    );
    if fit.converged {
        Ok(0)
    } else {
        eprintln!("fit did not converge; best-so-far model written");
        Ok(4)
    }
}
