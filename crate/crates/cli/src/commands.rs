//! One function per subcommand. Each validates the whole configuration
//! before starting any computation and returns its tables unwritten.

use annealtherm::ame::{
    evolve, minimal_quench_rate, quench_sweep, sample_measurements, AmeRun, NormSearch, QuenchSweep, AME_MAX_SITES,
    NORM_MAX_SITES,
};
use annealtherm::exact::{free_fermion_e_ising, ThermalPoint, ThermalSpectrum};
use annealtherm::model::{apply_gauge_config, random_gauge, ChainSpec};
use annealtherm::qmc::{run_qmc, QmcConfig};
use annealtherm::schedule::{
    check_hardware_limits, forward_protocol, reverse_protocol, AnnealSchedule, Direction, HardwareLimits,
    ProtocolParams, ScheduleProtocol,
};
use annealtherm::stats::{bootstrap_ci, observable_mean, GaugeEnsemble, Observable};
use rayon::prelude::*;
use std::path::Path;

use crate::config::{Config, Method};
use crate::output::{num, Table};
use crate::CliError;

const THERMAL_HEADER: &[&str] = &["n", "s", "A_GHz", "B_GHz", "T_mK", "e_ising", "m2", "source"];
const QMC_HEADER: &[&str] =
    &["n", "s", "A_GHz", "B_GHz", "T_mK", "M", "e_ising", "e_err", "m2", "m2_err", "tau_int", "seed"];

/// How a command finished once its tables are ready.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// Some sweep cells failed; their rows are missing from the table.
    Partial { failed: usize, total: usize },
    /// `protocol-check` found constraint violations.
    Violations(usize),
}

pub struct Outcome {
    pub tables: Vec<Table>,
    pub status: Status,
}

fn complete(tables: Vec<Table>) -> Outcome {
    Outcome { tables, status: Status::Complete }
}

/// Seed of the `k`-th task: one splitmix64 step away from `seed + k`, so
/// neighbouring tasks get unrelated streams.
pub fn task_seed(seed: u64, k: u64) -> u64 {
    let mut z = seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn schedule_point(sched: &AnnealSchedule, s: f64) -> (f64, f64) {
    sched.evaluate(s).expect("grid validated to [0, 1]")
}

struct ThermalJob {
    spec: ChainSpec,
    s: f64,
    a: f64,
    b: f64,
}

fn thermal_jobs(cfg: &Config, base: &Path) -> Result<(Vec<ThermalJob>, Vec<f64>), CliError> {
    let chains = cfg.chains()?;
    let sched = cfg.load_schedule(base)?;
    let grid = cfg.s_grid()?;
    let temps = cfg.temperatures()?;
    let mut jobs = Vec::new();
    for spec in chains {
        for &s in &grid {
            let (a, b) = schedule_point(&sched, s);
            for &t in &temps {
                ThermalPoint::new(a, b, t).map_err(|e| validation(format!("s = {s}, T = {t}: {e}")))?;
            }
            jobs.push(ThermalJob { spec: spec.clone(), s, a, b });
        }
    }
    Ok((jobs, temps))
}

/// ED or free-fermion rows over `model.n x solver.s_grid x solver.temperatures`.
fn thermal_table(name: &'static str, method: Method, jobs: &[ThermalJob], temps: &[f64]) -> Result<Table, CliError> {
    let rows: Vec<Vec<Vec<String>>> = jobs
        .par_iter()
        .map(|job| {
            let n = job.spec.n();
            let spectrum = match method {
                Method::Ed => Some(ThermalSpectrum::compute(&job.spec, job.a, job.b).map_err(runtime)?),
                _ => None,
            };
            temps
                .iter()
                .map(|&t| {
                    let pt = ThermalPoint::new(job.a, job.b, t).map_err(runtime)?;
                    let (e, m2) = match &spectrum {
                        Some(sp) => {
                            let g = sp.thermal(pt.beta_h).map_err(runtime)?;
                            (g.e_ising, num(g.m2))
                        }
                        None => (free_fermion_e_ising(&job.spec, &pt).map_err(runtime)?, String::new()),
                    };
                    Ok(vec![n.to_string(), num(job.s), num(job.a), num(job.b), num(t), num(e), m2, method.name().into()])
                })
                .collect()
        })
        .collect::<Result<_, CliError>>()?;
    let mut table = Table::new(name, THERMAL_HEADER);
    rows.into_iter().flatten().for_each(|r| table.push(r));
    Ok(table)
}

fn qmc_config(cfg: &Config) -> Result<QmcConfig, CliError> {
    let q = &cfg.solver.qmc;
    let qc = QmcConfig {
        slices: q.slices,
        max_dtau: q.max_dtau,
        therm_sweeps: q.therm_sweeps,
        measure_sweeps: q.measure_sweeps,
        seed: cfg.seed,
        bins: q.bins,
    };
    qc.validate().map_err(|e| validation(format!("solver.qmc: {e}")))?;
    Ok(qc)
}

fn qmc_table(name: &'static str, cfg: &Config, jobs: &[ThermalJob], temps: &[f64]) -> Result<Table, CliError> {
    let base = qmc_config(cfg)?;
    if let Some(job) = jobs.iter().find(|j| !(j.a > 0.0)) {
        return Err(validation(format!("qmc needs A > 0, but A = {} at s = {}", job.a, job.s)));
    }
    let tasks: Vec<(&ThermalJob, f64)> = jobs.iter().flat_map(|j| temps.iter().map(move |&t| (j, t))).collect();
    let rows: Vec<Vec<String>> = tasks
        .par_iter()
        .enumerate()
        .map(|(k, (job, t))| {
            let pt = ThermalPoint::new(job.a, job.b, *t).map_err(runtime)?;
            let seed = task_seed(cfg.seed, k as u64);
            let r = run_qmc(&job.spec, &pt, &QmcConfig { seed, ..base.clone() }).map_err(runtime)?;
            for w in &r.warnings {
                eprintln!("warning: n = {}, s = {}, T = {t}: {w}", job.spec.n(), job.s);
            }
            Ok(vec![
                job.spec.n().to_string(),
                num(job.s),
                num(job.a),
                num(job.b),
                num(*t),
                r.slices.to_string(),
                num(r.e_ising.mean),
                num(r.e_ising.stderr),
                num(r.m2.mean),
                num(r.m2.stderr),
                num(r.e_ising.tau_int),
                seed.to_string(),
            ])
        })
        .collect::<Result<_, CliError>>()?;
    let mut table = Table::new(name, QMC_HEADER);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

pub fn exact(cfg: &Config, base: &Path) -> Result<Outcome, CliError> {
    let method = cfg.method(Method::Ed, &[Method::Ed, Method::Fermion])?;
    let (jobs, temps) = thermal_jobs(cfg, base)?;
    Ok(complete(vec![thermal_table("exact", method, &jobs, &temps)?]))
}

pub fn qmc(cfg: &Config, base: &Path) -> Result<Outcome, CliError> {
    cfg.method(Method::Qmc, &[Method::Qmc])?;
    let (jobs, temps) = thermal_jobs(cfg, base)?;
    Ok(complete(vec![qmc_table("qmc", cfg, &jobs, &temps)?]))
}

pub fn temp_sweep(cfg: &Config, base: &Path) -> Result<Outcome, CliError> {
    let method = cfg.method(Method::Fermion, &[Method::Ed, Method::Fermion, Method::Qmc])?;
    let (jobs, temps) = thermal_jobs(cfg, base)?;
    let table = match method {
        Method::Qmc => qmc_table("temp_sweep", cfg, &jobs, &temps)?,
        _ => thermal_table("temp_sweep", method, &jobs, &temps)?,
    };
    Ok(complete(vec![table]))
}

fn check_ame_size(spec: &ChainSpec) -> Result<(), CliError> {
    if spec.n() > AME_MAX_SITES {
        return Err(validation(format!("master-equation runs are limited to n <= {AME_MAX_SITES}, got n = {}", spec.n())));
    }
    Ok(())
}

fn single<T: Copy + std::fmt::Display>(list: Vec<T>, key: &str) -> Result<T, CliError> {
    match list.as_slice() {
        [x] => Ok(*x),
        _ => Err(validation(format!("{key} must hold exactly one value for this command, got {}", list.len()))),
    }
}

fn protocol(cfg: &Config, s_p: f64, rate_f: f64) -> Result<ScheduleProtocol, CliError> {
    let p = ProtocolParams { s_p, t_p: cfg.protocol.t_p, rate_i: cfg.protocol.rate_i, rate_f };
    let proto = match Direction::from(cfg.protocol.direction) {
        Direction::Forward => forward_protocol(&p),
        Direction::Reverse => reverse_protocol(&p),
    };
    proto.map_err(|e| validation(format!("protocol (s_p = {s_p}, rate = {rate_f}): {e}")))
}

pub fn ame_evolve(cfg: &Config, base: &Path) -> Result<Outcome, CliError> {
    cfg.method(Method::Ame, &[Method::Ame])?;
    let spec = single(cfg.sizes(), "model.n").and_then(|n| cfg.build_chain(n))?;
    check_ame_size(&spec)?;
    let sched = cfg.load_schedule(base)?;
    let s_p = single(cfg.s_p_list()?, "protocol.s_p")?;
    let rate = single(cfg.rates()?, "protocol.rates")?;
    let proto = protocol(cfg, s_p, rate)?;
    let bath = cfg.bath()?;
    let points = cfg.solver.ame.record_points;
    if points < 2 {
        return Err(validation("solver.ame.record_points must be at least 2"));
    }
    let st = &cfg.stats;
    if st.gauges == 1 || (st.gauges > 1 && st.shots == 0) {
        return Err(validation("stats needs at least 2 gauges and 1 shot, or gauges = 0"));
    }
    if st.gauges > 0 && (st.resamples == 0 || !(st.level > 0.0 && st.level < 1.0)) {
        return Err(validation("stats needs resamples >= 1 and a level in (0, 1)"));
    }
    let end = proto.duration();
    let mut run = AmeRun::new(spec.clone(), sched, proto, bath);
    run.rtol = cfg.solver.ame.rtol;
    run.atol = cfg.solver.ame.atol;
    run.record_grid = (0..points).map(|k| end * k as f64 / (points - 1) as f64).collect();
    run.record_grid[points - 1] = end;
    run.validate().map_err(validation)?;

    let out = evolve(&run).map_err(runtime)?;
    let mut traj = Table::new("trajectory", &["t_us", "s", "e_ising", "trace"]);
    for k in 0..out.times.len() {
        traj.push(vec![num(out.times[k]), num(out.s[k]), num(out.e_ising[k]), num(out.trace[k])]);
    }
    let mut tables = vec![traj];
    if st.gauges > 0 {
        tables.push(gauge_statistics(cfg, &spec, s_p, &out.populations_final)?);
    }
    Ok(complete(tables))
}

/// Samples the final populations once per gauge. The gauge maps the problem
/// onto an equivalent one, so samples of the gauged run are the original
/// samples with the gauge applied; the ensemble maps them back.
fn gauge_statistics(cfg: &Config, spec: &ChainSpec, s_p: f64, populations: &[f64]) -> Result<Table, CliError> {
    let st = &cfg.stats;
    let n = spec.n();
    let mut gauges = Vec::with_capacity(st.gauges);
    let mut gauged = Vec::with_capacity(st.gauges);
    for g in 0..st.gauges as u64 {
        let gauge = random_gauge(n, task_seed(cfg.seed, 2 * g));
        let shots = sample_measurements(populations, st.shots, task_seed(cfg.seed, 2 * g + 1)).map_err(runtime)?;
        gauged.push(shots.iter().map(|c| apply_gauge_config(c, &gauge)).collect::<Result<Vec<_>, _>>().map_err(runtime)?);
        gauges.push(gauge);
    }
    let ens = GaugeEnsemble::from_gauged_samples(spec.clone(), gauges, gauged).map_err(runtime)?;
    let mut table = Table::new("sample_stats", &["observable", "s_p", "mean", "ci_lo", "ci_hi", "n_gauges", "samples_per_gauge"]);
    for obs in [Observable::IsingEnergy, Observable::SquaredMagnetization] {
        let means = observable_mean(&ens, obs).map_err(runtime)?;
        let ci = bootstrap_ci(&means.per_gauge, st.level, st.resamples, cfg.seed).map_err(runtime)?;
        table.push(vec![
            obs.name().into(),
            num(s_p),
            num(means.grand_mean),
            num(ci.lo),
            num(ci.hi),
            st.gauges.to_string(),
            ens.samples_per_gauge().to_string(),
        ]);
    }
    Ok(table)
}

pub fn quench_sweep_cmd(cfg: &Config, base: &Path) -> Result<Outcome, CliError> {
    cfg.method(Method::Ame, &[Method::Ame])?;
    let chains = cfg.chains()?;
    chains.iter().try_for_each(check_ame_size)?;
    if cfg.protocol.direction != crate::config::DirectionName::Forward {
        return Err(validation("quench-sweep runs forward protocols only"));
    }
    let sched = cfg.load_schedule(base)?;
    let s_p = cfg.s_p_list()?;
    let rates = cfg.rates()?;
    for &sp in s_p.iter().filter(|&&sp| sp < 1.0) {
        for &r in &rates {
            protocol(cfg, sp, r)?;
        }
    }
    let bath = cfg.bath()?;
    let ame = &cfg.solver.ame;
    if !(ame.rtol > 0.0 && ame.rtol <= 1e-3 && ame.atol > 0.0 && ame.atol <= 1e-3) {
        return Err(validation("solver.ame tolerances must lie in (0, 1e-3]"));
    }
    let opt = QuenchSweep {
        s_p,
        rates,
        rate_i: cfg.protocol.rate_i,
        t_p: cfg.protocol.t_p,
        rtol: ame.rtol,
        atol: ame.atol,
        closed_quench: ame.closed_quench,
    };
    let mut table = Table::new(
        "quench_sweep",
        &["n", "s_p", "rate_us_inv", "e_ising", "pause_effective_us", "trace_error", "e_ising_gibbs"],
    );
    let (mut failed, mut total) = (0, 0);
    for spec in &chains {
        for cell in quench_sweep(spec, &sched, &bath, &opt) {
            total += 1;
            match cell.result {
                Ok(row) => table.push(vec![
                    cell.n.to_string(),
                    num(cell.s_p),
                    num(cell.rate),
                    num(row.e_ising),
                    num(row.pause_effective),
                    num(row.trace_error),
                    num(row.e_ising_gibbs),
                ]),
                Err(e) => {
                    failed += 1;
                    eprintln!("cell n = {}, s_p = {}, rate = {} failed: {e}", cell.n, cell.s_p, cell.rate);
                }
            }
        }
    }
    if failed == total {
        return Err(CliError::Runtime(format!("all {total} sweep cells failed")));
    }
    let status = if failed > 0 { Status::Partial { failed, total } } else { Status::Complete };
    Ok(Outcome { tables: vec![table], status })
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn norm_scaling(cfg: &Config, base: &Path) -> Result<Outcome, CliError> {
    let chains = cfg.chains()?;
    if let Some(spec) = chains.iter().find(|c| c.n() > NORM_MAX_SITES) {
        return Err(validation(format!("norm-scaling is limited to n <= {NORM_MAX_SITES}, got n = {}", spec.n())));
    }
    let sched = cfg.load_schedule(base)?;
    let s_p = single(cfg.s_p_list()?, "protocol.s_p")?;
    let nc = &cfg.solver.norm;
    if !(nc.epsilon > 0.0) {
        return Err(validation("solver.norm.epsilon must be positive"));
    }
    if !(nc.rate_lo > 0.0 && nc.rate_hi > nc.rate_lo && nc.rel_tol > 0.0) {
        return Err(validation("solver.norm needs 0 < rate_lo < rate_hi and rel_tol > 0"));
    }
    let search = NormSearch { lo: nc.rate_lo, hi: nc.rate_hi, rel_tol: nc.rel_tol };
    let rates: Vec<f64> = chains
        .par_iter()
        .map(|spec| minimal_quench_rate(spec, &sched, s_p, nc.epsilon, search).map_err(runtime))
        .collect::<Result<_, _>>()?;
    let mut table = Table::new("norm_scaling", &["n", "s_p", "epsilon", "rate_min_us_inv"]);
    let mut points = Vec::new();
    for (spec, r) in chains.iter().zip(&rates) {
        table.push(vec![spec.n().to_string(), num(s_p), num(nc.epsilon), num(*r)]);
        points.push((spec.n() as f64, *r));
    }
    let mut fit = Table::new("norm_scaling_fit", &["s_p", "epsilon", "n_points", "slope"]);
    let slope = log_log_slope(&points).map(num).unwrap_or_default();
    fit.push(vec![num(s_p), num(nc.epsilon), points.len().to_string(), slope]);
    Ok(complete(vec![table, fit]))
}

pub fn protocol_check(cfg: &Config, _base: &Path) -> Result<Outcome, CliError> {
    let s_p = cfg.s_p_list()?;
    let rates = cfg.rates()?;
    let p = &cfg.protocol;
    let limits = HardwareLimits {
        enforce: p.hardware_limits,
        rate_cap: p.rate_cap,
        max_anneal_us: p.max_anneal_us,
        max_total_ms: p.max_total_ms,
    };
    let mut table = Table::new(
        "protocol_check",
        &["s_p", "rate_f_us_inv", "t_p_us", "anneals", "duration_us", "pause_total_ms", "ok", "violations"],
    );
    let mut violations = 0;
    for &sp in &s_p {
        for &r in &rates {
            let proto = protocol(cfg, sp, r)?;
            let report = check_hardware_limits(&proto, p.anneals, &limits);
            violations += report.violations.len();
            let text: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            table.push(vec![
                num(sp),
                num(r),
                num(p.t_p),
                p.anneals.to_string(),
                num(proto.duration()),
                num(p.anneals as f64 * proto.pause_time() / 1000.0),
                report.is_ok().to_string(),
                text.join("; "),
            ]);
        }
    }
    let status = if violations > 0 { Status::Violations(violations) } else { Status::Complete };
    Ok(Outcome { tables: vec![table], status })
}
