//! Distance of the quench propagator from the identity.

use super::generator::Operators;
use super::{AmeError, OMEGA_PER_GHZ};
use crate::linalg::{self, C64};
use crate::model::ChainSpec;
use crate::schedule::AnnealSchedule;
use ndarray::Array2;

/// Largest chain for the dense unitary.
pub const NORM_MAX_SITES: usize = 8;

const CONVERGED: f64 = 1e-11;
/// Round-off added to the propagator per elementary step.
const ROUNDOFF_PER_STEP: f64 = 1e-15;

/// `|| T exp(-i 2 pi / rate * int_{s_p}^1 H(s) ds) - 1 ||`, operator norm.
///
/// The driver part is a product of single-qubit rotations and the problem
/// part is diagonal, so each Strang step is applied exactly; steps are
/// composed to fourth order (Yoshida) and refined until the propagator
/// stops changing.
pub fn unitary_quench_norm(spec: &ChainSpec, sched: &AnnealSchedule, s_p: f64, rate: f64) -> Result<f64, AmeError> {
    if !(0.0..=1.0).contains(&s_p) {
        return Err(AmeError::InvalidRun(format!("s_p must lie in [0, 1], got {s_p}")));
    }
    if !(rate > 0.0) || rate.is_nan() {
        return Err(AmeError::InvalidRun(format!("rate must be positive, got {rate}")));
    }
    let ops = Operators::new(spec, NORM_MAX_SITES)?;
    if s_p == 1.0 || rate.is_infinite() {
        return Ok(0.0);
    }
    let kappa = OMEGA_PER_GHZ / rate;
    let pmax = ops.problem.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let (a0, _) = sched.eval_unchecked(s_p);
    let (_, b1) = sched.eval_unchecked(1.0);
    let (amax, bmax) = sched.knots().iter().filter(|k| k.0 >= s_p).fold((a0, b1), |(a, b), k| (a.max(k.1), b.max(k.2)));
    let phase = kappa * (1.0 - s_p) * (ops.n as f64 * amax + pmax * bmax);
    let pieces = sched.knots().iter().filter(|k| k.0 > s_p && k.0 < 1.0).count() + 1;
    let mut steps = ((phase / 0.5 / pieces as f64).ceil() as usize).max(1);
    let mut u = propagate(&ops, sched, s_p, kappa, steps);
    loop {
        steps *= 2;
        let finer = propagate(&ops, sched, s_p, kappa, steps);
        let diff = linalg::max_abs(&(&finer - &u));
        u = finer;
        if diff < CONVERGED.max(ROUNDOFF_PER_STEP * (steps * pieces) as f64) {
            break;
        }
        if steps > 1 << 16 {
            return Err(AmeError::Integrator { t: 0.0, reason: format!("unitary did not converge, change {diff:e}") });
        }
    }
    let d = ops.dim;
    let mut m = linalg::identity(d).mapv(|z| z * 2.0) - &u - linalg::dagger(&u);
    // Exactly zero for the identity propagator; keep it Hermitian to the bit.
    m = (&m + &linalg::dagger(&m)).mapv(|z| z * 0.5);
    let top = linalg::eigvalsh_complex(&m)?.last().copied().unwrap_or(0.0);
    Ok(top.max(0.0).sqrt())
}

/// `per_piece` steps on each stretch between schedule knots, so that no step
/// straddles a knot where the interpolant loses smoothness.
fn propagate(ops: &Operators, sched: &AnnealSchedule, s_p: f64, kappa: f64, per_piece: usize) -> Array2<C64> {
    let d = ops.dim;
    let mut u: Vec<C64> = linalg::identity(d).into_raw_vec_and_offset().0;
    let cbrt2 = 2f64.cbrt();
    let w1 = 1.0 / (2.0 - cbrt2);
    let w0 = -cbrt2 / (2.0 - cbrt2);
    let mut cuts = vec![s_p];
    cuts.extend(sched.knots().iter().map(|k| k.0).filter(|&k| k > s_p && k < 1.0));
    cuts.push(1.0);
    for w in cuts.windows(2) {
        let h = (w[1] - w[0]) / per_piece as f64;
        for k in 0..per_piece {
            let mut s = w[0] + k as f64 * h;
            for c in [w1, w0, w1] {
                strang(ops, sched, &mut u, s, c * h, kappa);
                s += c * h;
            }
        }
    }
    Array2::from_shape_vec((d, d), u).expect("square")
}

/// `exp(-i k A H_TF h/2) exp(-i k B H_p h) exp(-i k A H_TF h/2)` at the
/// midpoint of `[s, s + h]`, applied to the row-major matrix `u`.
fn strang(ops: &Operators, sched: &AnnealSchedule, u: &mut [C64], s: f64, h: f64, kappa: f64) {
    let d = ops.dim;
    let (a, b) = sched.eval_unchecked((s + 0.5 * h).clamp(0.0, 1.0));
    // H_TF = -sum X_i, so each factor is exp(+i theta X_i).
    let theta = 0.5 * kappa * a * h;
    let (cs, sn) = (theta.cos(), C64::new(0.0, theta.sin()));
    let rotate = |u: &mut [C64]| {
        for q in 0..ops.n {
            let mask = 1usize << q;
            for x in (0..d).filter(|x| x & mask == 0) {
                // Rows x and x | mask, disjoint since mask > 0.
                let (head, tail) = u.split_at_mut((x | mask) * d);
                let rx = &mut head[x * d..(x + 1) * d];
                let ry = &mut tail[..d];
                for (ux, uy) in rx.iter_mut().zip(ry.iter_mut()) {
                    let (a, b) = (*ux, *uy);
                    *ux = a * cs + b * sn;
                    *uy = b * cs + a * sn;
                }
            }
        }
    };
    rotate(u);
    for (x, p) in ops.problem.iter().enumerate() {
        let ph = C64::from_polar(1.0, -kappa * b * p * h);
        for z in &mut u[x * d..(x + 1) * d] {
            *z *= ph;
        }
    }
    rotate(u);
}

/// Rate bracket and relative resolution for [`minimal_quench_rate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSearch {
    pub lo: f64,
    pub hi: f64,
    pub rel_tol: f64,
}

impl Default for NormSearch {
    fn default() -> Self {
        Self { lo: 1.0, hi: 1e12, rel_tol: 1e-4 }
    }
}

/// Smallest rate with `unitary_quench_norm <= eps`. Walks down from
/// `search.hi` in factors of two until the bound fails, then bisects in
/// `log(rate)`; returns `search.lo` if even that rate satisfies the bound.
pub fn minimal_quench_rate(
    spec: &ChainSpec,
    sched: &AnnealSchedule,
    s_p: f64,
    eps: f64,
    search: NormSearch,
) -> Result<f64, AmeError> {
    if !(eps > 0.0) || !(search.lo > 0.0 && search.hi > search.lo) || !(search.rel_tol > 0.0) {
        return Err(AmeError::InvalidRun("need eps > 0 and 0 < lo < hi".into()));
    }
    // `||U - 1|| <= 2` for every unitary.
    if eps >= 2.0 {
        return Ok(search.lo);
    }
    let norm = |r: f64| unitary_quench_norm(spec, sched, s_p, r);
    let top = norm(search.hi)?;
    if top > eps {
        return Err(AmeError::NoBracket { rate: search.hi, norm: top, eps });
    }
    let mut hi = search.hi;
    let mut lo = loop {
        let r = (hi * 0.5).max(search.lo);
        if norm(r)? > eps {
            break r;
        }
        if r == search.lo {
            return Ok(search.lo);
        }
        hi = r;
    };
    while hi / lo > 1.0 + search.rel_tol {
        let mid = (lo * hi).sqrt();
        if norm(mid)? <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_ferromagnetic_chain;
    use crate::schedule::default_schedule;

    #[test]
    fn limits() {
        let spec = build_ferromagnetic_chain(4).unwrap();
        let sched = default_schedule();
        assert_eq!(unitary_quench_norm(&spec, &sched, 0.5, f64::INFINITY).unwrap(), 0.0);
        let a = unitary_quench_norm(&spec, &sched, 0.5, 1e6).unwrap();
        let b = unitary_quench_norm(&spec, &sched, 0.5, 1e8).unwrap();
        assert!(b < a && b < 1e-2, "{a} {b}");
        let zero = AnnealSchedule::from_knots(&[(0.0, 0.0, 0.0), (0.3, 0.0, 0.0), (0.6, 0.0, 0.0), (1.0, 0.0, 0.0)]).unwrap();
        assert_eq!(unitary_quench_norm(&spec, &zero, 0.2, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn matches_dense_exponential_for_constant_hamiltonian() {
        let flat = AnnealSchedule::from_knots(&[(0.0, 0.8, 0.3), (0.3, 0.8, 0.3), (0.6, 0.8, 0.3), (1.0, 0.8, 0.3)]).unwrap();
        let spec = build_ferromagnetic_chain(3).unwrap();
        let ops = Operators::new(&spec, 8).unwrap();
        let rate = 3e3;
        let t = 0.6 / rate;
        let hm = ops.hamiltonian(0.8, 0.3).mapv(|x| C64::new(0.0, -OMEGA_PER_GHZ * t * x));
        let u = linalg::expm(&hm).unwrap();
        let m = linalg::identity(8).mapv(|z| z * 2.0) - &u - linalg::dagger(&u);
        let want = linalg::eigvalsh_complex(&m).unwrap().last().unwrap().sqrt();
        let got = unitary_quench_norm(&spec, &flat, 0.4, rate).unwrap();
        assert!((got - want).abs() < 1e-9, "{got} {want}");
    }

    #[test]
    fn minimal_rate_brackets_eps() {
        let spec = build_ferromagnetic_chain(3).unwrap();
        let sched = default_schedule();
        let r = minimal_quench_rate(&spec, &sched, 0.5, 0.1, NormSearch::default()).unwrap();
        assert!(unitary_quench_norm(&spec, &sched, 0.5, r).unwrap() <= 0.1);
        assert!(unitary_quench_norm(&spec, &sched, 0.5, r * 0.999).unwrap() > 0.1);
        let easy = NormSearch { lo: 2.0 * r, hi: 1e12, rel_tol: 1e-4 };
        assert_eq!(minimal_quench_rate(&spec, &sched, 0.5, 0.1, easy).unwrap(), 2.0 * r);
        assert_eq!(minimal_quench_rate(&spec, &sched, 0.5, 2.0, NormSearch::default()).unwrap(), 1.0);
    }

    #[test]
    fn slow_quench_converges() {
        let spec = build_ferromagnetic_chain(4).unwrap();
        let n = unitary_quench_norm(&spec, &default_schedule(), 0.5, 10.0).unwrap();
        assert!(n <= 2.0 + 1e-9, "{n}");
    }
}
