//! Protocol integration.
//!
//! Pause segments use the exact block exponential of the fixed generator.
//! Ramps and quenches use a symmetric splitting per step: half a step of
//! dissipation, the unitary propagator, half a step of dissipation, all in
//! the eigenbasis of `H` at the step midpoint. The unitary factor is a
//! first-order Magnus step in the interaction picture of the midpoint
//! Hamiltonian, with the oscillatory integrals done in closed form, so the
//! step size is set by how fast `H` changes rather than by its GHz phases.
//! Step sizes come from step doubling.

use super::bath::BathParams;
use super::generator::{DaviesGenerator, Frame, Operators, AME_MAX_SITES};
use super::{AmeError, OMEGA_PER_GHZ};
use crate::density::DensityMatrix;
use crate::exact::{gibbs_expectations, ThermalPoint};
use crate::linalg::{self, C64};
use crate::model::ChainSpec;
use crate::schedule::{AnnealSchedule, ScheduleProtocol};
use ndarray::Array2;
use rayon::prelude::*;

/// Pause convergence: trace distance between doubling checkpoints.
const PAUSE_TOL: f64 = 1e-6;
const FIRST_CHECKPOINT_US: f64 = 1.0;
const MAX_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Gibbs state of `H(s(0))` at the bath temperature.
    Gibbs,
    /// Ground state of `H(s(0))`.
    Ground,
    Density(DensityMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmeRun {
    pub spec: ChainSpec,
    pub sched: AnnealSchedule,
    pub proto: ScheduleProtocol,
    pub bath: BathParams,
    pub rtol: f64,
    pub atol: f64,
    /// Times (us) at which `e_ising` and the trace are recorded.
    pub record_grid: Vec<f64>,
    pub initial: InitialState,
}

impl AmeRun {
    pub fn new(spec: ChainSpec, sched: AnnealSchedule, proto: ScheduleProtocol, bath: BathParams) -> Self {
        Self { spec, sched, proto, bath, rtol: 1e-6, atol: 1e-9, record_grid: Vec::new(), initial: InitialState::Gibbs }
    }

    pub fn validate(&self) -> Result<(), AmeError> {
        let n = self.spec.n();
        if n > AME_MAX_SITES {
            return Err(AmeError::SizeCap { n, cap: AME_MAX_SITES });
        }
        self.bath.validate()?;
        for (name, tol) in [("rtol", self.rtol), ("atol", self.atol)] {
            if !(tol > 0.0 && tol <= 1e-3) {
                return Err(AmeError::InvalidRun(format!("{name} must lie in (0, 1e-3], got {tol}")));
            }
        }
        if self.proto.vertices().len() < 2 {
            return Err(AmeError::InvalidRun("protocol has no segments".into()));
        }
        let end = self.proto.duration();
        if self.record_grid.iter().any(|t| !(0.0..=end).contains(t)) {
            return Err(AmeError::InvalidRun(format!("record times must lie in [0, {end}]")));
        }
        if self.record_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(AmeError::InvalidRun("record times must be strictly increasing".into()));
        }
        if let InitialState::Density(rho) = &self.initial {
            if rho.dim() != 1 << n {
                return Err(AmeError::InvalidRun("initial state has the wrong dimension".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutput {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub e_ising: Vec<f64>,
    pub trace: Vec<f64>,
    /// Computational-basis populations at the end of the protocol.
    pub populations_final: Vec<f64>,
    /// `<H_IM>` of the final populations.
    pub e_ising_final: f64,
    /// Largest `|Tr rho - 1|` seen at recorded times and at the end.
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// Pause time actually simulated before the fixed point was detected,
    /// summed over pause segments.
    pub pause_effective: f64,
    pub steps: usize,
    pub final_state: DensityMatrix,
}

/// One linear piece of `s(t)`.
#[derive(Debug, Clone, Copy)]
struct Segment {
    t0: f64,
    duration: f64,
    s0: f64,
    s1: f64,
}

impl Segment {
    fn s_at(&self, t: f64) -> f64 {
        let f = ((t - self.t0) / self.duration).clamp(0.0, 1.0);
        (self.s0 + (self.s1 - self.s0) * f).clamp(0.0, 1.0)
    }

    fn end(&self) -> f64 {
        self.t0 + self.duration
    }
}

fn segments(proto: &ScheduleProtocol) -> Vec<Segment> {
    proto
        .vertices()
        .windows(2)
        .zip(proto.durations())
        .map(|(w, &duration)| Segment { t0: w[0].0, duration, s0: w[0].1, s1: w[1].1 })
        .collect()
}

struct Recorder<'a> {
    grid: &'a [f64],
    next: usize,
    e_diag: &'a [f64],
    out: TrajectoryOutput,
}

impl Recorder<'_> {
    fn pending(&self) -> Option<f64> {
        self.grid.get(self.next).copied()
    }

    fn record(&mut self, t: f64, s: f64, rho: &Array2<C64>) -> Result<(), AmeError> {
        let dm = DensityMatrix::from_matrix(rho.clone());
        let tr = dm.trace().re;
        self.out.times.push(t);
        self.out.s.push(s);
        self.out.e_ising.push(dm.expectation_diag(self.e_diag));
        self.out.trace.push(tr);
        self.observe(&dm)?;
        self.next += 1;
        Ok(())
    }

    fn observe(&mut self, dm: &DensityMatrix) -> Result<(), AmeError> {
        let o = &mut self.out;
        o.trace_error = o.trace_error.max((dm.trace().re - 1.0).abs());
        o.hermiticity_error = o.hermiticity_error.max(dm.hermiticity_error());
        o.min_eigenvalue = o.min_eigenvalue.min(dm.min_eigenvalue()?);
        Ok(())
    }
}

/// Integrates the master equation along a protocol.
struct Integrator<'a> {
    ops: Operators,
    sched: &'a AnnealSchedule,
    bath: BathParams,
    rtol: f64,
    atol: f64,
    steps: usize,
}

impl<'a> Integrator<'a> {
    fn new(spec: &ChainSpec, sched: &'a AnnealSchedule, bath: BathParams, rtol: f64, atol: f64) -> Result<Self, AmeError> {
        Ok(Self { ops: Operators::new(spec, AME_MAX_SITES)?, sched, bath, rtol, atol, steps: 0 })
    }

    fn bath(&self, open: bool) -> BathParams {
        if open {
            self.bath
        } else {
            BathParams { coupling: 0.0, ..self.bath }
        }
    }

    fn frame_at(&self, s: f64) -> Result<Frame, AmeError> {
        let (a, b) = self.sched.eval_unchecked(s);
        Frame::new(&self.ops, a, b)
    }

    fn initial_state(&self, s: f64, init: &InitialState) -> Result<Array2<C64>, AmeError> {
        Ok(match init {
            InitialState::Density(rho) => rho.matrix().clone(),
            InitialState::Gibbs | InitialState::Ground => {
                let f = self.frame_at(s)?;
                let d = self.ops.dim;
                let mut diag = Array2::<C64>::zeros((d, d));
                if *init == InitialState::Ground {
                    diag[[0, 0]] = C64::new(1.0, 0.0);
                } else {
                    let beta = self.bath.beta_h();
                    let w: Vec<f64> = f.energies.iter().map(|e| (-beta * (e - f.energies[0])).exp()).collect();
                    let z: f64 = w.iter().sum();
                    for (k, wk) in w.iter().enumerate() {
                        diag[[k, k]] = C64::new(wk / z, 0.0);
                    }
                }
                f.from_eigen(&diag)
            }
        })
    }

    /// Runs `segs` in order; segments with index `>= closed_from` ignore the bath.
    fn run(
        &mut self,
        mut rho: Array2<C64>,
        segs: &[Segment],
        closed_from: usize,
        rec: &mut Recorder,
    ) -> Result<(Array2<C64>, f64), AmeError> {
        let mut pause_effective = 0.0;
        for (k, seg) in segs.iter().enumerate() {
            let open = k < closed_from;
            // Record points sitting exactly at the segment start.
            while let Some(t) = rec.pending() {
                if t > seg.t0 {
                    break;
                }
                rec.record(t, seg.s0, &rho)?;
            }
            if seg.s0 == seg.s1 {
                let (r, eff) = self.pause(rho, seg, open, rec)?;
                rho = r;
                pause_effective += eff;
            } else {
                rho = self.sweep(rho, seg, open, rec)?;
            }
        }
        while let Some(t) = rec.pending() {
            let s = segs.last().map_or(1.0, |g| g.s1);
            rec.record(t, s, &rho)?;
        }
        Ok((rho, pause_effective))
    }

    fn pause(&mut self, rho: Array2<C64>, seg: &Segment, open: bool, rec: &mut Recorder) -> Result<(Array2<C64>, f64), AmeError> {
        let gen = DaviesGenerator::new(&self.ops, self.frame_at(seg.s0)?, &self.bath(open))?;
        let end = seg.end();
        let mut cur = gen.frame.to_eigen(&rho);
        let mut tc = seg.t0;
        let mut last_check = cur.clone();
        let mut next_check = seg.t0 + FIRST_CHECKPOINT_US;
        let mut converged = false;
        while tc < end && !converged {
            let rec_t = rec.pending().filter(|&t| t <= end);
            let target = [Some(next_check), rec_t, Some(end)].into_iter().flatten().fold(f64::INFINITY, f64::min);
            cur = gen.propagate(&cur, target - tc)?;
            tc = target;
            self.steps += 1;
            if rec_t == Some(target) {
                rec.record(target, seg.s0, &gen.frame.from_eigen(&cur))?;
            }
            if target == next_check {
                let dist = DensityMatrix::from_matrix(&cur - &last_check);
                let td = 0.5 * dist.eigenvalues()?.iter().map(|x| x.abs()).sum::<f64>();
                converged = td < PAUSE_TOL;
                last_check = cur.clone();
                next_check = seg.t0 + 2.0 * (next_check - seg.t0);
            }
        }
        let out = gen.frame.from_eigen(&cur);
        while let Some(t) = rec.pending() {
            if t > end {
                break;
            }
            rec.record(t, seg.s0, &out)?;
        }
        Ok((out, tc - seg.t0))
    }

    fn sweep(&mut self, mut rho: Array2<C64>, seg: &Segment, open: bool, rec: &mut Recorder) -> Result<Array2<C64>, AmeError> {
        let bath = self.bath(open);
        let end = seg.end();
        let mut t = seg.t0;
        let mut h = seg.duration / 8.0;
        while t < end {
            let stop = rec.pending().filter(|&r| r > t && r < end).unwrap_or(end);
            let last = h >= stop - t;
            let h_try = if last { stop - t } else { h };
            let full = self.step(&rho, seg, t, h_try, &bath)?;
            let mid = self.step(&rho, seg, t, 0.5 * h_try, &bath)?;
            let half = self.step(&mid, seg, t + 0.5 * h_try, 0.5 * h_try, &bath)?;
            self.steps += 3;
            let err = linalg::max_abs(&(&full - &half));
            let tol = self.atol + self.rtol * linalg::max_abs(&half);
            if err <= tol {
                rho = hermitize(half);
                t = if last { stop } else { t + h_try };
                if last && stop < end {
                    rec.record(t, seg.s_at(t), &rho)?;
                }
            }
            let factor = if err == 0.0 { 4.0 } else { (0.9 * (tol / err).cbrt()).clamp(0.2, 4.0) };
            h = h_try * factor;
            if h < 1e-15 * end.max(1.0) || self.steps > MAX_STEPS {
                return Err(AmeError::Integrator { t, reason: format!("step size collapsed to {h:e} us") });
            }
        }
        Ok(rho)
    }

    /// One split step of length `h` starting at `t0`.
    fn step(&self, rho: &Array2<C64>, seg: &Segment, t0: f64, h: f64, bath: &BathParams) -> Result<Array2<C64>, AmeError> {
        let c = 0.5 * h;
        let tm = t0 + c;
        let frame = self.frame_at(seg.s_at(tm))?;
        let (am, bm) = (frame.a, frame.b);
        // Deviations of A and B from their midpoint values at u = tau / c.
        let mut da = [0.0; 4];
        let mut db = [0.0; 4];
        for (k, u) in [-1.0, -0.5, 0.5, 1.0].into_iter().enumerate() {
            let (a, b) = self.sched.eval_unchecked(seg.s_at(tm + u * c));
            da[k] = a - am;
            db[k] = b - bm;
        }
        let pa = quartic_coefficients(&da);
        let pb = quartic_coefficients(&db);

        let d = self.ops.dim;
        let tf = frame.op(&self.ops.driver);
        let hp = frame.diag_op(&self.ops.problem);
        let mut omega = Array2::<C64>::zeros((d, d));
        for m in 0..d {
            for nn in 0..d {
                let w = OMEGA_PER_GHZ * (frame.energies[m] - frame.energies[nn]);
                let mom = moments(w * c);
                let ia: C64 = (0..4).map(|k| mom[k + 1] * pa[k]).sum::<C64>() * c;
                let ib: C64 = (0..4).map(|k| mom[k + 1] * pb[k]).sum::<C64>() * c;
                omega[[m, nn]] = C64::new(0.0, -OMEGA_PER_GHZ) * (ia * tf[[m, nn]] + ib * hp[[m, nn]]);
            }
        }
        let w = linalg::expm(&omega)?;
        let phase: Vec<C64> = frame.energies.iter().map(|e| C64::from_polar(1.0, -OMEGA_PER_GHZ * e * c)).collect();
        let mut u = w;
        for m in 0..d {
            for nn in 0..d {
                u[[m, nn]] *= phase[m] * phase[nn];
            }
        }

        let gen = if bath.coupling > 0.0 { Some(DaviesGenerator::new(&self.ops, frame.clone(), bath)?) } else { None };
        let mut r = frame.to_eigen(rho);
        if let Some(g) = &gen {
            r = dissipate_for(g, &r, c);
        }
        r = u.dot(&r).dot(&linalg::dagger(&u));
        if let Some(g) = &gen {
            r = dissipate_for(g, &r, c);
        }
        Ok(frame.from_eigen(&r))
    }
}

fn hermitize(m: Array2<C64>) -> Array2<C64> {
    (&m + &linalg::dagger(&m)).mapv(|z| z * 0.5)
}

/// `exp(t D) rho` by Taylor series, split so that each piece has `t |D| <= 1/2`.
fn dissipate_for(gen: &DaviesGenerator, rho: &Array2<C64>, t: f64) -> Array2<C64> {
    let scale = gen.dissipator_scale();
    let pieces = ((t * scale / 0.5).ceil() as usize).max(1);
    let h = t / pieces as f64;
    let mut r = rho.clone();
    for _ in 0..pieces {
        let mut term = r.clone();
        let mut acc = r.clone();
        for k in 1..40 {
            term = gen.dissipate(&term).mapv(|z| z * (h / k as f64));
            acc += &term;
            if linalg::max_abs(&term) < 1e-17 {
                break;
            }
        }
        r = acc;
    }
    r
}

/// Coefficients `[a1, a2, a3, a4]` of `f(u) = sum a_k u^k` through `f(0) = 0`
/// and the samples `f(-1), f(-1/2), f(1/2), f(1)`.
fn quartic_coefficients(f: &[f64; 4]) -> [f64; 4] {
    let (e1, eh) = (0.5 * (f[3] + f[0]), 0.5 * (f[2] + f[1]));
    let (o1, oh) = (0.5 * (f[3] - f[0]), 0.5 * (f[2] - f[1]));
    let a4 = 16.0 / 3.0 * (0.25 * e1 - eh);
    let a2 = e1 - a4;
    let a3 = 8.0 / 3.0 * (0.5 * o1 - oh);
    let a1 = o1 - a3;
    [a1, a2, a3, a4]
}

/// `m_k = int_{-1}^{1} u^k e^{i theta u} du` for `k = 0..=4`.
fn moments(theta: f64) -> [C64; 5] {
    let mut m = [C64::new(0.0, 0.0); 5];
    if theta.abs() < 2.0 {
        // Only even powers of u survive the symmetric integral.
        let mut coef = C64::new(1.0, 0.0); // (i theta)^j / j!
        for j in 0..40 {
            for (k, mk) in m.iter_mut().enumerate() {
                if (k + j) % 2 == 0 {
                    *mk += coef * (2.0 / (k + j + 1) as f64);
                }
            }
            coef *= C64::new(0.0, theta) / (j + 1) as f64;
        }
    } else {
        let it = C64::new(0.0, theta);
        let (ep, em) = (C64::from_polar(1.0, theta), C64::from_polar(1.0, -theta));
        m[0] = C64::new(2.0 * theta.sin() / theta, 0.0);
        for k in 1..5 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            m[k] = (ep - em * sign) / it - m[k - 1] * (k as f64) / it;
        }
    }
    m
}

fn ising_diag(ops: &Operators) -> &[f64] {
    &ops.problem
}

fn empty_output(dim: usize) -> TrajectoryOutput {
    TrajectoryOutput {
        times: Vec::new(),
        s: Vec::new(),
        e_ising: Vec::new(),
        trace: Vec::new(),
        populations_final: Vec::new(),
        e_ising_final: 0.0,
        trace_error: 0.0,
        hermiticity_error: 0.0,
        min_eigenvalue: f64::INFINITY,
        pause_effective: 0.0,
        steps: 0,
        final_state: DensityMatrix::maximally_mixed(dim),
    }
}

fn run_protocol(run: &AmeRun, closed_from: Option<usize>, initial: Option<Array2<C64>>) -> Result<TrajectoryOutput, AmeError> {
    run.validate()?;
    let mut integ = Integrator::new(&run.spec, &run.sched, run.bath, run.rtol, run.atol)?;
    let segs = segments(&run.proto);
    let rho0 = match initial {
        Some(r) => r,
        None => integ.initial_state(segs[0].s0, &run.initial)?,
    };
    let e_diag = ising_diag(&integ.ops).to_vec();
    let mut rec = Recorder { grid: &run.record_grid, next: 0, e_diag: &e_diag, out: empty_output(integ.ops.dim) };
    let (rho, pause) = integ.run(rho0, &segs, closed_from.unwrap_or(segs.len()), &mut rec)?;
    let dm = DensityMatrix::from_matrix(rho);
    rec.observe(&dm)?;
    let mut out = rec.out;
    out.populations_final = dm.populations();
    out.e_ising_final = dm.expectation_diag(&e_diag);
    out.pause_effective = pause;
    out.steps = integ.steps;
    out.final_state = dm;
    Ok(out)
}

/// Open-system evolution along `run.proto`.
pub fn evolve(run: &AmeRun) -> Result<TrajectoryOutput, AmeError> {
    run_protocol(run, None, None)
}

/// Schrödinger evolution. With `pure = None` the protocol up to the end of
/// its last pause runs with the bath, so the closed dynamics start from the
/// pause-converged state; with a supplied pure state the whole protocol is
/// closed.
pub fn closed_system_evolve(run: &AmeRun, pure: Option<&[C64]>) -> Result<TrajectoryOutput, AmeError> {
    match pure {
        Some(psi) => {
            if psi.len() != 1 << run.spec.n() {
                return Err(AmeError::InvalidRun("state vector has the wrong dimension".into()));
            }
            let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let psi: Vec<C64> = psi.iter().map(|z| z / norm).collect();
            run_protocol(run, Some(0), Some(DensityMatrix::from_pure(&psi).into_matrix()))
        }
        None => {
            let segs = segments(&run.proto);
            let closed_from = segs.iter().rposition(|g| g.s0 == g.s1).map_or(0, |k| k + 1);
            run_protocol(run, Some(closed_from), None)
        }
    }
}

/// Holds `s` fixed and relaxes `initial` for at most `t_max` us, stopping at
/// the fixed point. Returns the state and the time actually simulated.
pub fn relax_at(
    spec: &ChainSpec,
    sched: &AnnealSchedule,
    bath: &BathParams,
    s: f64,
    initial: &DensityMatrix,
    t_max: f64,
) -> Result<(DensityMatrix, f64), AmeError> {
    if !(0.0..=1.0).contains(&s) || !(t_max > 0.0 && t_max.is_finite()) {
        return Err(AmeError::InvalidRun(format!("need s in [0, 1] and t_max > 0, got {s}, {t_max}")));
    }
    let mut integ = Integrator::new(spec, sched, *bath, 1e-6, 1e-9)?;
    if initial.dim() != integ.ops.dim {
        return Err(AmeError::InvalidRun("initial state has the wrong dimension".into()));
    }
    let e_diag = integ.ops.problem.clone();
    let mut rec = Recorder { grid: &[], next: 0, e_diag: &e_diag, out: empty_output(integ.ops.dim) };
    let seg = Segment { t0: 0.0, duration: t_max, s0: s, s1: s };
    let (rho, eff) = integ.pause(initial.matrix().clone(), &seg, true, &mut rec)?;
    Ok((DensityMatrix::from_matrix(rho), eff))
}

/// Options of a pause-and-quench sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct QuenchSweep {
    pub s_p: Vec<f64>,
    pub rates: Vec<f64>,
    pub rate_i: f64,
    /// Upper bound on the pause; the pause stops early at the fixed point.
    pub t_p: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Quench without the bath.
    pub closed_quench: bool,
}

impl Default for QuenchSweep {
    fn default() -> Self {
        Self { s_p: Vec::new(), rates: Vec::new(), rate_i: 1.0, t_p: 1900.0, rtol: 1e-6, atol: 1e-9, closed_quench: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub e_ising: f64,
    pub pause_effective: f64,
    pub trace_error: f64,
    /// `<H_IM>` of the diagonal of the state at the end of the pause.
    pub e_ising_projected: f64,
    /// Exact Gibbs `<H_IM>` at `s_p`.
    pub e_ising_gibbs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub n: usize,
    pub s_p: f64,
    pub rate: f64,
    pub result: Result<SweepRow, AmeError>,
}

struct Paused {
    state: DensityMatrix,
    pause_effective: f64,
    trace_error: f64,
    projected: f64,
    gibbs: f64,
}

fn pause_at(spec: &ChainSpec, sched: &AnnealSchedule, bath: &BathParams, s_p: f64, opt: &QuenchSweep) -> Result<Paused, AmeError> {
    let mut integ = Integrator::new(spec, sched, *bath, opt.rtol, opt.atol)?;
    let ramp = Segment { t0: 0.0, duration: s_p / opt.rate_i, s0: 0.0, s1: s_p };
    let mut list = vec![ramp];
    if opt.t_p > 0.0 {
        list.push(Segment { t0: ramp.end(), duration: opt.t_p, s0: s_p, s1: s_p });
    }
    let rho0 = integ.initial_state(0.0, &InitialState::Gibbs)?;
    let e_diag = integ.ops.problem.clone();
    let mut rec = Recorder { grid: &[], next: 0, e_diag: &e_diag, out: empty_output(integ.ops.dim) };
    let (rho, pause) = integ.run(rho0, &list, list.len(), &mut rec)?;
    let state = DensityMatrix::from_matrix(rho);
    rec.observe(&state)?;
    let (a, b) = sched.evaluate(s_p)?;
    let gibbs = gibbs_expectations(spec, &ThermalPoint::new(a, b, bath.temperature)?)?.e_ising;
    Ok(Paused {
        projected: state.expectation_diag(&e_diag),
        state,
        pause_effective: pause,
        trace_error: rec.out.trace_error,
        gibbs,
    })
}

fn quench_from(
    spec: &ChainSpec,
    sched: &AnnealSchedule,
    bath: &BathParams,
    paused: &Paused,
    s_p: f64,
    rate: f64,
    opt: &QuenchSweep,
) -> Result<SweepRow, AmeError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(AmeError::InvalidRun(format!("quench rate must be positive, got {rate}")));
    }
    let row = |e_ising, trace_error: f64| SweepRow {
        e_ising,
        pause_effective: paused.pause_effective,
        trace_error,
        e_ising_projected: paused.projected,
        e_ising_gibbs: paused.gibbs,
    };
    if s_p == 1.0 {
        return Ok(row(paused.projected, paused.trace_error));
    }
    let mut integ = Integrator::new(spec, sched, *bath, opt.rtol, opt.atol)?;
    let seg = Segment { t0: 0.0, duration: (1.0 - s_p) / rate, s0: s_p, s1: 1.0 };
    let e_diag = integ.ops.problem.clone();
    let mut rec = Recorder { grid: &[], next: 0, e_diag: &e_diag, out: empty_output(integ.ops.dim) };
    let closed_from = if opt.closed_quench { 0 } else { 1 };
    let (rho, _) = integ.run(paused.state.matrix().clone(), &[seg], closed_from, &mut rec)?;
    let dm = DensityMatrix::from_matrix(rho);
    rec.observe(&dm)?;
    Ok(row(dm.expectation_diag(&e_diag), rec.out.trace_error.max(paused.trace_error)))
}

/// Forward pause-and-quench for every `(s_p, rate)`. The ramp and pause are
/// shared by all rates at one `s_p`; failures are reported per cell.
pub fn quench_sweep(spec: &ChainSpec, sched: &AnnealSchedule, bath: &BathParams, opt: &QuenchSweep) -> Vec<SweepCell> {
    let n = spec.n();
    opt.s_p
        .par_iter()
        .flat_map_iter(|&s_p| {
            let paused = check_point(s_p, opt).and_then(|_| pause_at(spec, sched, bath, s_p, opt));
            let cells: Vec<SweepCell> = opt
                .rates
                .iter()
                .map(|&rate| SweepCell {
                    n,
                    s_p,
                    rate,
                    result: paused.as_ref().map_err(Clone::clone).and_then(|p| quench_from(spec, sched, bath, p, s_p, rate, opt)),
                })
                .collect();
            cells
        })
        .collect()
}

fn check_point(s_p: f64, opt: &QuenchSweep) -> Result<(), AmeError> {
    if !(s_p > 0.0 && s_p <= 1.0) {
        return Err(AmeError::InvalidRun(format!("s_p must lie in (0, 1], got {s_p}")));
    }
    if !(opt.rate_i > 0.0 && opt.rate_i.is_finite()) {
        return Err(AmeError::InvalidRun(format!("rate_i must be positive, got {}", opt.rate_i)));
    }
    if !(opt.t_p >= 0.0 && opt.t_p.is_finite()) {
        return Err(AmeError::InvalidRun(format!("t_p must be finite and >= 0, got {}", opt.t_p)));
    }
    Ok(())
}
