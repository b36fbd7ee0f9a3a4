//! Annealing schedules `A(s)`, `B(s)` and piecewise-linear `s(t)` protocols.
//!
//! Energies are in GHz (E/h) and times in microseconds.

use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("schedule needs at least 4 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot s values must be strictly increasing (row {0})")]
    NonMonotone(usize),
    #[error("knot s = {0} outside [0, 1]")]
    SOutOfRange(f64),
    #[error("schedule must start at s = 0 and end at s = 1")]
    BadEndpoints,
    #[error("negative or non-finite energy in row {0}")]
    BadEnergy(usize),
    #[error("s = {0} outside [0, 1]")]
    EvalOutOfRange(f64),
    #[error("A - B does not change sign on [0, 1]")]
    NoCrossing,
    #[error("invalid protocol parameters: {0}")]
    InvalidParams(String),
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("t = {t} outside [0, {end}]")]
    TimeOutOfRange { t: f64, end: f64 },
    #[error("schedule file: {0}")]
    Format(String),
}

/// Tabulated schedule with monotone piecewise-cubic (Fritsch-Carlson PCHIP)
/// interpolation of each of `A` and `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealSchedule {
    s: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    da: Vec<f64>,
    db: Vec<f64>,
}

impl AnnealSchedule {
    pub fn from_knots(knots: &[(f64, f64, f64)]) -> Result<Self, ScheduleError> {
        if knots.len() < 4 {
            return Err(ScheduleError::TooFewKnots(knots.len()));
        }
        for (row, &(s, a, b)) in knots.iter().enumerate() {
            if !(0.0..=1.0).contains(&s) || !s.is_finite() {
                return Err(ScheduleError::SOutOfRange(s));
            }
            if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0) {
                return Err(ScheduleError::BadEnergy(row));
            }
            if row > 0 && s <= knots[row - 1].0 {
                return Err(ScheduleError::NonMonotone(row));
            }
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(ScheduleError::BadEndpoints);
        }
        let s: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let a: Vec<f64> = knots.iter().map(|k| k.1).collect();
        let b: Vec<f64> = knots.iter().map(|k| k.2).collect();
        let da = pchip_slopes(&s, &a);
        let db = pchip_slopes(&s, &b);
        Ok(Self { s, a, b, da, db })
    }

    pub fn knots(&self) -> Vec<(f64, f64, f64)> {
        (0..self.s.len()).map(|i| (self.s[i], self.a[i], self.b[i])).collect()
    }

    /// `(A(s), B(s))` in GHz.
    pub fn evaluate(&self, s: f64) -> Result<(f64, f64), ScheduleError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(ScheduleError::EvalOutOfRange(s));
        }
        Ok(self.eval_unchecked(s))
    }

    pub(crate) fn eval_unchecked(&self, s: f64) -> (f64, f64) {
        let k = self.segment(s);
        if s == self.s[k] {
            return (self.a[k], self.b[k]);
        }
        let h = self.s[k + 1] - self.s[k];
        let t = (s - self.s[k]) / h;
        let herm = |y: &[f64], d: &[f64]| {
            let t2 = t * t;
            let t3 = t2 * t;
            let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
            let h10 = t3 - 2.0 * t2 + t;
            let h01 = -2.0 * t3 + 3.0 * t2;
            let h11 = t3 - t2;
            (h00 * y[k] + h10 * h * d[k] + h01 * y[k + 1] + h11 * h * d[k + 1]).max(0.0)
        };
        (herm(&self.a, &self.da), herm(&self.b, &self.db))
    }

    /// Index `k` with `s_k <= s < s_{k+1}` (last segment for `s = 1`).
    fn segment(&self, s: f64) -> usize {
        let last = self.s.len() - 2;
        match self.s.binary_search_by(|x| x.partial_cmp(&s).expect("finite knots")) {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        }
    }

    /// Root of `A(s) = B(s)` by bisection, to `|A - B| < 1e-6` GHz.
    pub fn crossing_point(&self) -> Result<f64, ScheduleError> {
        let f = |s: f64| {
            let (a, b) = self.eval_unchecked(s);
            a - b
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        let (flo, fhi) = (f(lo), f(hi));
        if !(flo > 0.0 && fhi < 0.0) {
            return Err(ScheduleError::NoCrossing);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            if fm.abs() < 1e-6 && hi - lo < 1e-9 {
                return Ok(mid);
            }
            if fm > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// Shape-preserving derivative estimates (Fritsch-Carlson with the
/// three-point end conditions used by common PCHIP implementations).
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if del[k - 1] * del[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
        }
    }
    let end = |h0: f64, h1: f64, m0: f64, m1: f64| {
        let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
        if d.signum() != m0.signum() || m0 == 0.0 {
            0.0
        } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
            3.0 * m0
        } else {
            d
        }
    };
    d[0] = end(h[0], h[1], del[0], del[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    d
}

pub fn load_schedule<R: Read>(source: R) -> Result<AnnealSchedule, ScheduleError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers().map_err(|e| ScheduleError::Format(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["s", "A_GHz", "B_GHz"] {
        return Err(ScheduleError::Format(format!("expected header `s,A_GHz,B_GHz`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut knots = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ScheduleError::Format(e.to_string()))?;
        let field = |i: usize| -> Result<f64, ScheduleError> {
            rec.get(i)
                .ok_or_else(|| ScheduleError::Format(format!("row {}: missing column", row + 1)))?
                .parse::<f64>()
                .map_err(|e| ScheduleError::Format(format!("row {}: {e}", row + 1)))
        };
        knots.push((field(0)?, field(1)?, field(2)?));
    }
    AnnealSchedule::from_knots(&knots)
}

pub fn save_schedule<W: Write>(sched: &AnnealSchedule, sink: W) -> Result<(), ScheduleError> {
    let mut w = csv::Writer::from_writer(sink);
    let err = |e: csv::Error| ScheduleError::Format(e.to_string());
    w.write_record(["s", "A_GHz", "B_GHz"]).map_err(err)?;
    for (s, a, b) in sched.knots() {
        w.write_record([s.to_string(), a.to_string(), b.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| ScheduleError::Format(e.to_string()))
}

pub const DEFAULT_CROSSING_S: f64 = 0.346;
pub const DEFAULT_CROSSING_GHZ: f64 = 1.05;

/// Synthetic schedule shipped with the crate (`data/default_schedule.csv`).
///
/// Tabulated on `s = 0, 0.01, ..., 1` plus the crossing knot from
///
/// ```text
/// A(s) = (A0 - A1) (1 - s)^2 exp(-c s) + A1,   A0 = 6.5, A1 = 0.005
/// B(s) = B0 + (B1 - B0) s^g,                   B0 = 0.04, B1 = 12
/// ```
///
/// with `c` and `g` solved so that `A = B = 1.05` GHz at `s = 0.346`.
/// Device-accurate tables can be loaded with [`load_schedule`].
pub fn default_schedule() -> AnnealSchedule {
    load_schedule(DEFAULT_SCHEDULE_CSV.as_bytes()).expect("shipped schedule is valid")
}

pub const DEFAULT_SCHEDULE_CSV: &str = include_str!("../data/default_schedule.csv");

pub fn synthetic_schedule_knots() -> Vec<(f64, f64, f64)> {
    const A0: f64 = 6.5;
    const A1: f64 = 0.005;
    const B0: f64 = 0.04;
    const B1: f64 = 12.0;
    let (sx, x) = (DEFAULT_CROSSING_S, DEFAULT_CROSSING_GHZ);
    let c = -((x - A1) / ((A0 - A1) * (1.0 - sx).powi(2))).ln() / sx;
    let g = ((x - B0) / (B1 - B0)).ln() / sx.ln();
    let mut knots: Vec<(f64, f64, f64)> = (0..=100)
        .map(|i| {
            let s = i as f64 / 100.0;
            let a = (A0 - A1) * (1.0 - s).powi(2) * (-c * s).exp() + A1;
            let b = B0 + (B1 - B0) * s.powf(g);
            (s, a, b)
        })
        .collect();
    let pos = knots.iter().position(|k| k.0 > sx).expect("crossing inside grid");
    knots.insert(pos, (sx, x, x));
    knots
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    pub s_p: f64,
    pub t_p: f64,
    pub rate_i: f64,
    pub rate_f: f64,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ScheduleError> {
        let bad = |m: &str| Err(ScheduleError::InvalidParams(m.to_string()));
        if !(self.s_p > 0.0 && self.s_p < 1.0) {
            return bad("s_p must lie in (0, 1)");
        }
        if !(self.t_p >= 0.0 && self.t_p.is_finite()) {
            return bad("t_p must be finite and >= 0");
        }
        if !(self.rate_i > 0.0 && self.rate_i.is_finite()) {
            return bad("rate_i must be positive");
        }
        if !(self.rate_f > 0.0 && self.rate_f.is_finite()) {
            return bad("rate_f must be positive");
        }
        Ok(())
    }
}

/// Piecewise-linear `s(t)` given by `(t_us, s)` vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleProtocol {
    vertices: Vec<(f64, f64)>,
    // Segment lengths kept separately so that short quench segments late in a
    // long protocol do not lose precision to `t_{k+1} - t_k` cancellation.
    durations: Vec<f64>,
    direction: Direction,
}

impl ScheduleProtocol {
    pub fn new(vertices: Vec<(f64, f64)>, direction: Direction) -> Result<Self, ScheduleError> {
        let bad = |m: &str| Err(ScheduleError::InvalidProtocol(m.to_string()));
        if vertices.is_empty() {
            return Ok(Self { vertices, durations: Vec::new(), direction });
        }
        if vertices[0].0 != 0.0 {
            return bad("first vertex must be at t = 0");
        }
        if vertices.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return bad("vertex times must be strictly increasing");
        }
        if vertices.iter().any(|v| !(0.0..=1.0).contains(&v.1)) {
            return bad("s must lie in [0, 1]");
        }
        if vertices.last().unwrap().1 != 1.0 {
            return bad("final vertex must have s = 1");
        }
        let durations = vertices.windows(2).map(|w| w[1].0 - w[0].0).collect();
        Ok(Self { vertices, durations, direction })
    }

    /// Builds a protocol from a starting `s` and `(duration, s_end)` segments.
    pub fn from_segments(s0: f64, segments: &[(f64, f64)], direction: Direction) -> Result<Self, ScheduleError> {
        let mut vertices = vec![(0.0, s0)];
        let mut t = 0.0;
        for &(dt, s) in segments {
            t += dt;
            vertices.push((t, s));
        }
        let mut proto = Self::new(vertices, direction)?;
        if segments.iter().any(|&(dt, _)| !(dt > 0.0)) {
            return Err(ScheduleError::InvalidProtocol("segment durations must be positive".into()));
        }
        proto.durations = segments.iter().map(|&(dt, _)| dt).collect();
        Ok(proto)
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn duration(&self) -> f64 {
        self.vertices.last().map_or(0.0, |v| v.0)
    }

    /// `ds/dt` of every segment.
    pub fn slopes(&self) -> Vec<f64> {
        self.vertices.windows(2).zip(&self.durations).map(|(w, dt)| (w[1].1 - w[0].1) / dt).collect()
    }

    /// Total time spent in zero-slope segments.
    pub fn pause_time(&self) -> f64 {
        self.vertices.windows(2).zip(&self.durations).filter(|(w, _)| w[1].1 == w[0].1).map(|(_, dt)| dt).sum()
    }

    pub fn s_of_t(&self, t: f64) -> Result<f64, ScheduleError> {
        let end = self.duration();
        if self.vertices.is_empty() || !(0.0..=end).contains(&t) {
            return Err(ScheduleError::TimeOutOfRange { t, end });
        }
        let k = match self.vertices.binary_search_by(|v| v.0.partial_cmp(&t).expect("finite")) {
            Ok(i) => return Ok(self.vertices[i].1),
            Err(i) => i - 1,
        };
        let (t0, s0) = self.vertices[k];
        let (t1, s1) = self.vertices[k + 1];
        Ok(s0 + (s1 - s0) * (t - t0) / (t1 - t0))
    }

    /// Writes `t_us,s` rows.
    pub fn export<W: Write>(&self, sink: W) -> Result<(), ScheduleError> {
        let mut w = csv::Writer::from_writer(sink);
        let err = |e: csv::Error| ScheduleError::Format(e.to_string());
        w.write_record(["t_us", "s"]).map_err(err)?;
        for (t, s) in &self.vertices {
            w.write_record([t.to_string(), s.to_string()]).map_err(err)?;
        }
        w.flush().map_err(|e| ScheduleError::Format(e.to_string()))
    }
}

fn pause_and_quench(mut segments: Vec<(f64, f64)>, p: &ProtocolParams) -> Vec<(f64, f64)> {
    if p.t_p > 0.0 {
        segments.push((p.t_p, p.s_p));
    }
    segments.push(((1.0 - p.s_p) / p.rate_f, 1.0));
    segments
}

pub fn forward_protocol(p: &ProtocolParams) -> Result<ScheduleProtocol, ScheduleError> {
    p.validate()?;
    let segs = pause_and_quench(vec![(p.s_p / p.rate_i, p.s_p)], p);
    ScheduleProtocol::from_segments(0.0, &segs, Direction::Forward)
}

pub fn reverse_protocol(p: &ProtocolParams) -> Result<ScheduleProtocol, ScheduleError> {
    p.validate()?;
    let segs = pause_and_quench(vec![((1.0 - p.s_p) / p.rate_i, p.s_p)], p);
    ScheduleProtocol::from_segments(1.0, &segs, Direction::Reverse)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardwareLimits {
    /// When false no constraint is checked.
    pub enforce: bool,
    pub rate_cap: f64,
    pub max_anneal_us: f64,
    pub max_total_ms: f64,
}

impl Default for HardwareLimits {
    fn default() -> Self {
        Self { enforce: true, rate_cap: 1.0, max_anneal_us: 2000.0, max_total_ms: 3000.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SegmentRate { segment: usize, rate: f64, cap: f64 },
    AnnealDuration { duration_us: f64, max_us: f64 },
    TotalTime { total_ms: f64, max_ms: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::SegmentRate { segment, rate, cap } => {
                write!(f, "segment {segment}: |ds/dt| = {rate} us^-1 exceeds cap {cap}")
            }
            Violation::AnnealDuration { duration_us, max_us } => {
                write!(f, "anneal duration {duration_us} us exceeds {max_us} us")
            }
            Violation::TotalTime { total_ms, max_ms } => {
                write!(f, "total pause time {total_ms} ms exceeds {max_ms} ms")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LimitReport {
    pub violations: Vec<Violation>,
}

impl LimitReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks per-segment rate, per-anneal duration and `n_a * t_p` against the
/// device limits.
pub fn check_hardware_limits(proto: &ScheduleProtocol, n_a: u64, limits: &HardwareLimits) -> LimitReport {
    let mut report = LimitReport::default();
    if !limits.enforce || proto.vertices().is_empty() {
        return report;
    }
    for (segment, slope) in proto.slopes().into_iter().enumerate() {
        // Rates computed from vertex differences carry rounding noise.
        if slope.abs() > limits.rate_cap * (1.0 + 1e-12) {
            report.violations.push(Violation::SegmentRate { segment, rate: slope.abs(), cap: limits.rate_cap });
        }
    }
    let duration = proto.duration();
    if duration > limits.max_anneal_us {
        report.violations.push(Violation::AnnealDuration { duration_us: duration, max_us: limits.max_anneal_us });
    }
    let total_ms = n_a as f64 * proto.pause_time() / 1000.0;
    if total_ms > limits.max_total_ms * (1.0 + 1e-12) {
        report.violations.push(Violation::TotalTime { total_ms, max_ms: limits.max_total_ms });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear(a: impl Fn(f64) -> f64, b: impl Fn(f64) -> f64) -> AnnealSchedule {
        let k: Vec<_> = (0..=10).map(|i| i as f64 / 10.0).map(|s| (s, a(s), b(s))).collect();
        AnnealSchedule::from_knots(&k).unwrap()
    }

    #[test]
    fn shipped_table_matches_generator() {
        let shipped = default_schedule();
        let generated = AnnealSchedule::from_knots(&synthetic_schedule_knots()).unwrap();
        assert_eq!(shipped, generated);
    }

    #[test]
    fn default_schedule_targets() {
        let d = default_schedule();
        let (a, b) = d.evaluate(0.346).unwrap();
        assert!((a - 1.05).abs() <= 0.0105 && (b - 1.05).abs() <= 0.0105);
        let sx = d.crossing_point().unwrap();
        assert!((sx - 0.346).abs() <= 1e-3, "crossing {sx}");
        let (a0, b0) = d.evaluate(0.0).unwrap();
        let (a1, b1) = d.evaluate(1.0).unwrap();
        assert!(a0 / b0 >= 100.0);
        assert!(a1 <= 1e-3 * b1);
    }

    #[test]
    fn default_schedule_is_monotone_without_overshoot() {
        let d = default_schedule();
        let mut prev = d.evaluate(0.0).unwrap();
        for i in 1..=20_000 {
            let cur = d.evaluate(i as f64 / 20_000.0).unwrap();
            assert!(cur.0 <= prev.0 + 1e-15, "A increases at step {i}");
            assert!(cur.1 >= prev.1 - 1e-15, "B decreases at step {i}");
            prev = cur;
        }
    }

    #[test]
    fn knots_are_reproduced_exactly() {
        let d = default_schedule();
        for (s, a, b) in d.knots() {
            assert_eq!(d.evaluate(s).unwrap(), (a, b));
        }
        assert!(d.evaluate(1.5).is_err());
        assert!(d.evaluate(-0.1).is_err());
    }

    #[test]
    fn load_validation() {
        let two = "s,A_GHz,B_GHz\n0,1,0\n1,0,1\n";
        assert_eq!(load_schedule(two.as_bytes()), Err(ScheduleError::TooFewKnots(2)));
        let desc = "s,A_GHz,B_GHz\n0,1,0\n0.5,1,0\n0.4,1,0\n1,0,1\n";
        assert_eq!(load_schedule(desc.as_bytes()), Err(ScheduleError::NonMonotone(2)));
        let neg = "s,A_GHz,B_GHz\n0,1,0\n0.3,-1,0\n0.6,1,0\n1,0,1\n";
        assert_eq!(load_schedule(neg.as_bytes()), Err(ScheduleError::BadEnergy(1)));
        let out = "s,A_GHz,B_GHz\n0,1,0\n0.3,1,0\n0.6,1,0\n1.2,0,1\n";
        assert_eq!(load_schedule(out.as_bytes()), Err(ScheduleError::SOutOfRange(1.2)));
        assert!(load_schedule("s,A,B\n".as_bytes()).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let d = default_schedule();
        let mut buf = Vec::new();
        save_schedule(&d, &mut buf).unwrap();
        let back = load_schedule(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        assert_eq!(String::from_utf8(buf).unwrap(), DEFAULT_SCHEDULE_CSV);
    }

    #[test]
    fn crossing_examples() {
        let sym = linear(|s| 2.0 * (1.0 - s), |s| 2.0 * s);
        assert!((sym.crossing_point().unwrap() - 0.5).abs() < 1e-9);
        let flat = linear(|_| 3.0, |_| 1.0);
        assert_eq!(flat.crossing_point(), Err(ScheduleError::NoCrossing));
    }

    #[test]
    fn forward_and_reverse_shapes() {
        let p = ProtocolParams { s_p: 0.2, t_p: 1900.0, rate_i: 1.0, rate_f: 1.0 };
        let f = forward_protocol(&p).unwrap();
        assert!((f.duration() - 1901.0).abs() < 1e-9);
        assert_eq!(f.vertices().len(), 4);
        assert!((f.s_of_t(0.1).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(f.s_of_t(1000.0).unwrap(), 0.2);
        let f0 = forward_protocol(&ProtocolParams { t_p: 0.0, ..p }).unwrap();
        assert_eq!(f0.vertices().len(), 3);
        let q = forward_protocol(&ProtocolParams { rate_f: 1e3, ..p }).unwrap();
        assert_eq!(q.durations()[2], 0.8 / 1e3);

        let r = reverse_protocol(&ProtocolParams { s_p: 0.6, ..p }).unwrap();
        assert!((r.duration() - 1900.8).abs() < 1e-9);
        assert_eq!(r.s_of_t(0.0).unwrap(), 1.0);
        assert_eq!(r.s_of_t(r.duration()).unwrap(), 1.0);
        assert!(r.s_of_t(r.duration() + 1.0).is_err());

        assert!(forward_protocol(&ProtocolParams { s_p: 1.0, ..p }).is_err());
        assert!(forward_protocol(&ProtocolParams { rate_f: 0.0, ..p }).is_err());
    }

    #[test]
    fn hardware_limits() {
        let lim = HardwareLimits::default();
        let p = ProtocolParams { s_p: 0.2, t_p: 1900.0, rate_i: 1.0, rate_f: 1.0 };
        assert!(check_hardware_limits(&forward_protocol(&p).unwrap(), 1500, &lim).is_ok());
        let long = forward_protocol(&ProtocolParams { t_p: 2100.0, ..p }).unwrap();
        let rep = check_hardware_limits(&long, 1, &lim);
        assert!(matches!(rep.violations[..], [Violation::AnnealDuration { .. }]));
        let fast = forward_protocol(&ProtocolParams { rate_f: 10.0, ..p }).unwrap();
        let rep = check_hardware_limits(&fast, 1, &lim);
        assert!(matches!(rep.violations[..], [Violation::SegmentRate { segment: 2, .. }]));
        let off = HardwareLimits { enforce: false, ..lim };
        let fastest = forward_protocol(&ProtocolParams { rate_f: 1e5, ..p }).unwrap();
        assert!(check_hardware_limits(&fastest, 1, &off).is_ok());
        let total = check_hardware_limits(&forward_protocol(&p).unwrap(), 1600, &lim);
        assert!(matches!(total.violations[..], [Violation::TotalTime { .. }]));
        let empty = ScheduleProtocol::new(vec![], Direction::Forward).unwrap();
        assert!(check_hardware_limits(&empty, 1500, &lim).is_ok());
    }

    proptest! {
        #[test]
        fn protocol_slopes_recover_rates(
            s_p in 0.01f64..0.99, t_p in 0.0f64..3000.0,
            rate_i in 1e-3f64..1.0, rate_f in 1e-3f64..1e5, reverse in any::<bool>()
        ) {
            let p = ProtocolParams { s_p, t_p, rate_i, rate_f };
            let proto = if reverse { reverse_protocol(&p) } else { forward_protocol(&p) }.unwrap();
            let v = proto.vertices();
            prop_assert_eq!(v[0].1, if reverse { 1.0 } else { 0.0 });
            prop_assert_eq!(v.last().unwrap().1, 1.0);
            let slopes = proto.slopes();
            let first = slopes[0].abs();
            let last = *slopes.last().unwrap();
            prop_assert!((first - rate_i).abs() <= 1e-12 * rate_i);
            prop_assert!((last - rate_f).abs() <= 1e-12 * rate_f);
            for (w, slope) in v.windows(2).zip(&slopes) {
                prop_assert_eq!(proto.s_of_t(w[0].0).unwrap(), w[0].1);
                let mid = proto.s_of_t(0.5 * (w[0].0 + w[1].0)).unwrap();
                // Rounding of the midpoint time is amplified by the slope.
                let tol = 1e-12 + slope.abs() * w[1].0 * 4.0 * f64::EPSILON;
                prop_assert!((mid - 0.5 * (w[0].1 + w[1].1)).abs() < tol);
            }
        }
    }
}
