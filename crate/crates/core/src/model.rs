//! Periodic Ising chains, classical spin configurations and gauge maps.
//!
//! The problem Hamiltonian is `H_IM = sum_e J_e s_e s_{e+1} + sum_i h_i s_i`
//! with edge `e` joining sites `e` and `(e + 1) % n`. A ferromagnet has every
//! `J_e = -1`, so its ground energy is `-n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use thiserror::Error;

pub const MIN_SITES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("chain needs at least {MIN_SITES} sites, got {0}")]
    InvalidSize(usize),
    #[error("edge index {edge} out of range for n = {n}")]
    EdgeOutOfRange { edge: usize, n: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("coupling must be +1 or -1, got {0}")]
    BadCoupling(i64),
    #[error("spin must be +1 or -1, got {0}")]
    BadSpin(i64),
    #[error("field h[{0}] is not finite")]
    NonFiniteField(usize),
    #[error("chain file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    couplings: Vec<i8>,
    fields: Vec<f64>,
}

impl ChainSpec {
    pub fn new(couplings: Vec<i8>, fields: Vec<f64>) -> Result<Self, ModelError> {
        let n = couplings.len();
        if n < MIN_SITES {
            return Err(ModelError::InvalidSize(n));
        }
        if fields.len() != n {
            return Err(ModelError::LengthMismatch { expected: n, got: fields.len() });
        }
        if let Some(&j) = couplings.iter().find(|&&j| j != 1 && j != -1) {
            return Err(ModelError::BadCoupling(j as i64));
        }
        if let Some(i) = fields.iter().position(|h| !h.is_finite()) {
            return Err(ModelError::NonFiniteField(i));
        }
        Ok(Self { couplings, fields })
    }

    pub fn n(&self) -> usize {
        self.couplings.len()
    }

    pub fn couplings(&self) -> &[i8] {
        &self.couplings
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn has_fields(&self) -> bool {
        self.fields.iter().any(|&h| h != 0.0)
    }

    pub fn is_ferromagnetic(&self) -> bool {
        self.couplings.iter().all(|&j| j == -1)
    }

    pub fn is_frustrated(&self) -> bool {
        self.couplings.iter().filter(|&&j| j == 1).count() == 1
    }

    /// Sites joined by edge `e`.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        (e, (e + 1) % self.n())
    }

    /// Writes the plain-text chain format. Fields are written only when non-zero
    /// and use Rust's shortest round-trip float formatting.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        w.write_all(self.to_text().as_bytes()).map_err(|e| ModelError::Io(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "n {}", self.n()).unwrap();
        for (e, j) in self.couplings.iter().enumerate() {
            writeln!(out, "J {e} {j:+}").unwrap();
        }
        for (i, h) in self.fields.iter().enumerate() {
            if *h != 0.0 {
                writeln!(out, "h {i} {h:?}").unwrap();
            }
        }
        out
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self, ModelError> {
        let parse_err = |line: usize, msg: &str| ModelError::Parse { line, msg: msg.to_string() };
        let mut n: Option<usize> = None;
        let mut couplings: Vec<Option<i8>> = Vec::new();
        let mut fields: Vec<f64> = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|e| ModelError::Io(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            match (tok[0], n) {
                ("n", None) => {
                    if tok.len() != 2 {
                        return Err(parse_err(lineno, "expected `n <int>`"));
                    }
                    let v: usize = tok[1].parse().map_err(|_| parse_err(lineno, "bad site count"))?;
                    if v < MIN_SITES {
                        return Err(ModelError::InvalidSize(v));
                    }
                    n = Some(v);
                    couplings = vec![None; v];
                    fields = vec![0.0; v];
                }
                ("n", Some(_)) => return Err(parse_err(lineno, "duplicate `n` line")),
                (_, None) => return Err(parse_err(lineno, "first line must be `n <int>`")),
                ("J", Some(nv)) | ("h", Some(nv)) => {
                    if tok.len() != 3 {
                        return Err(parse_err(lineno, "expected `<J|h> <index> <value>`"));
                    }
                    let i: usize = tok[1].parse().map_err(|_| parse_err(lineno, "bad index"))?;
                    if i >= nv {
                        return Err(parse_err(lineno, "index out of range"));
                    }
                    if tok[0] == "J" {
                        let j: i64 = tok[2].parse().map_err(|_| parse_err(lineno, "bad coupling"))?;
                        if j != 1 && j != -1 {
                            return Err(ModelError::BadCoupling(j));
                        }
                        if couplings[i].replace(j as i8).is_some() {
                            return Err(parse_err(lineno, "duplicate coupling"));
                        }
                    } else {
                        let h: f64 = tok[2].parse().map_err(|_| parse_err(lineno, "bad field"))?;
                        fields[i] = h;
                    }
                }
                _ => return Err(parse_err(lineno, "unknown record")),
            }
        }
        let n = n.ok_or_else(|| parse_err(0, "missing `n` line"))?;
        let couplings = couplings
            .into_iter()
            .enumerate()
            .map(|(e, j)| j.ok_or_else(|| parse_err(0, &format!("missing coupling for edge {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        debug_assert_eq!(couplings.len(), n);
        Self::new(couplings, fields)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self, ModelError> {
        if let Some(&s) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(ModelError::BadSpin(s as i64));
        }
        Ok(Self(spins))
    }

    pub fn all_up(n: usize) -> Self {
        Self(vec![1; n])
    }

    /// Decodes a computational basis index. Site 0 is the most significant
    /// bit and a 0 bit is spin +1.
    pub fn from_index(index: usize, n: usize) -> Self {
        Self((0..n).map(|i| if (index >> (n - 1 - i)) & 1 == 0 { 1 } else { -1 }).collect())
    }

    pub fn to_index(&self) -> usize {
        self.0.iter().fold(0usize, |acc, &s| (acc << 1) | usize::from(s == -1))
    }

    pub fn spins(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn flipped(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GaugeVector(Vec<i8>);

impl GaugeVector {
    pub fn new(a: Vec<i8>) -> Result<Self, ModelError> {
        if let Some(&s) = a.iter().find(|&&s| s != 1 && s != -1) {
            return Err(ModelError::BadSpin(s as i64));
        }
        Ok(Self(a))
    }

    pub fn identity(n: usize) -> Self {
        Self(vec![1; n])
    }

    pub fn entries(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn build_ferromagnetic_chain(n: usize) -> Result<ChainSpec, ModelError> {
    if n < MIN_SITES {
        return Err(ModelError::InvalidSize(n));
    }
    ChainSpec::new(vec![-1; n], vec![0.0; n])
}

pub fn build_frustrated_chain(n: usize, flipped_edge: usize) -> Result<ChainSpec, ModelError> {
    if n < MIN_SITES {
        return Err(ModelError::InvalidSize(n));
    }
    if flipped_edge >= n {
        return Err(ModelError::EdgeOutOfRange { edge: flipped_edge, n });
    }
    let mut j = vec![-1; n];
    j[flipped_edge] = 1;
    ChainSpec::new(j, vec![0.0; n])
}

fn check_len(expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::LengthMismatch { expected, got });
    }
    Ok(())
}

/// Bond part of the Ising energy as an exact integer.
pub fn bond_energy(spec: &ChainSpec, spins: &[i8]) -> i64 {
    let n = spec.n();
    spec.couplings
        .iter()
        .enumerate()
        .map(|(e, &j)| (j * spins[e] * spins[(e + 1) % n]) as i64)
        .sum()
}

pub fn ising_energy(spec: &ChainSpec, config: &SpinConfig) -> Result<f64, ModelError> {
    check_len(spec.n(), config.len())?;
    let bonds = bond_energy(spec, config.spins()) as f64;
    if !spec.has_fields() {
        return Ok(bonds);
    }
    let field: f64 = spec.fields.iter().zip(config.spins()).map(|(h, &s)| h * s as f64).sum();
    Ok(bonds + field)
}

pub fn magnetization(config: &SpinConfig) -> f64 {
    let m: i64 = config.spins().iter().map(|&s| s as i64).sum();
    m as f64 / config.len() as f64
}

pub fn squared_magnetization(config: &SpinConfig) -> f64 {
    let m: i64 = config.spins().iter().map(|&s| s as i64).sum();
    let n = config.len() as f64;
    (m * m) as f64 / (n * n)
}

pub fn apply_gauge_spec(spec: &ChainSpec, g: &GaugeVector) -> Result<ChainSpec, ModelError> {
    check_len(spec.n(), g.len())?;
    let a = g.entries();
    let n = spec.n();
    let couplings = spec.couplings.iter().enumerate().map(|(e, &j)| a[e] * a[(e + 1) % n] * j).collect();
    let fields = spec.fields.iter().zip(a).map(|(h, &ai)| h * ai as f64).collect();
    Ok(ChainSpec { couplings, fields })
}

pub fn apply_gauge_config(config: &SpinConfig, g: &GaugeVector) -> Result<SpinConfig, ModelError> {
    check_len(config.len(), g.len())?;
    Ok(SpinConfig(config.0.iter().zip(g.entries()).map(|(s, a)| s * a).collect()))
}

pub fn random_gauge(n: usize, seed: u64) -> GaugeVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GaugeVector((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
}

/// Ground energy and all minimizing configurations by exhaustive search.
pub fn brute_force_ground_states(spec: &ChainSpec) -> (f64, Vec<SpinConfig>) {
    let n = spec.n();
    assert!(n <= 24, "brute force limited to n <= 24");
    let mut best = f64::INFINITY;
    let mut minimizers = Vec::new();
    for idx in 0..(1usize << n) {
        let c = SpinConfig::from_index(idx, n);
        let e = ising_energy(spec, &c).expect("length matches");
        if e < best - 1e-12 {
            best = e;
            minimizers.clear();
        }
        if (e - best).abs() <= 1e-12 {
            minimizers.push(c);
        }
    }
    (best, minimizers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(s: &[i8]) -> SpinConfig {
        SpinConfig::new(s.to_vec()).unwrap()
    }

    #[test]
    fn builders() {
        let f = build_ferromagnetic_chain(4).unwrap();
        assert_eq!(f.couplings(), &[-1, -1, -1, -1]);
        assert!(f.is_ferromagnetic());
        assert_eq!(build_ferromagnetic_chain(138).unwrap().couplings().len(), 138);
        assert_eq!(build_ferromagnetic_chain(2), Err(ModelError::InvalidSize(2)));
        let fr = build_frustrated_chain(4, 0).unwrap();
        assert_eq!(fr.couplings(), &[1, -1, -1, -1]);
        assert!(fr.is_frustrated());
        assert!(build_frustrated_chain(4, 4).is_err());
    }

    #[test]
    fn energies_and_magnetization() {
        let f4 = build_ferromagnetic_chain(4).unwrap();
        assert_eq!(ising_energy(&f4, &SpinConfig::all_up(4)).unwrap(), -4.0);
        let fr4 = build_frustrated_chain(4, 0).unwrap();
        assert_eq!(ising_energy(&fr4, &SpinConfig::all_up(4)).unwrap(), -2.0);
        let f6 = build_ferromagnetic_chain(6).unwrap();
        assert_eq!(ising_energy(&f6, &cfg(&[1, -1, 1, -1, 1, -1])).unwrap(), 6.0);
        assert!(ising_energy(&f6, &SpinConfig::all_up(4)).is_err());

        assert_eq!(squared_magnetization(&SpinConfig::all_up(7)), 1.0);
        assert_eq!(squared_magnetization(&cfg(&[1, 1, -1, -1])), 0.0);
        assert_eq!(squared_magnetization(&cfg(&[1, 1, 1, -1])), 0.25);
    }

    #[test]
    fn fields_enter_energy() {
        let spec = ChainSpec::new(vec![-1; 3], vec![0.5, 0.0, -0.25]).unwrap();
        // Bonds: -(1) - (-1) - (-1) = 1.
        assert_eq!(ising_energy(&spec, &cfg(&[1, 1, -1])).unwrap(), 1.0 + 0.5 + 0.25);
    }

    #[test]
    fn gauge_examples() {
        let f4 = build_ferromagnetic_chain(4).unwrap();
        let g = GaugeVector::new(vec![1, -1, 1, 1]).unwrap();
        assert_eq!(apply_gauge_spec(&f4, &g).unwrap().couplings(), &[1, 1, -1, -1]);
        assert_eq!(apply_gauge_spec(&f4, &GaugeVector::identity(4)).unwrap(), f4);
        let down = apply_gauge_config(&SpinConfig::all_up(3), &GaugeVector::new(vec![-1; 3]).unwrap()).unwrap();
        assert_eq!(down.spins(), &[-1, -1, -1]);
    }

    #[test]
    fn random_gauge_is_seeded_and_balanced() {
        assert_eq!(random_gauge(50, 7), random_gauge(50, 7));
        assert_eq!(random_gauge(1, 3).len(), 1);
        let draws = 10_000;
        let n = 5;
        let mut sums = vec![0i64; n];
        for seed in 0..draws {
            for (s, a) in sums.iter_mut().zip(random_gauge(n, seed).entries()) {
                *s += *a as i64;
            }
        }
        // Sum of 10^4 fair ±1 draws has standard deviation 100.
        for s in sums {
            assert!(s.abs() <= 500, "per-site sum {s}");
        }
    }

    #[test]
    fn index_round_trip() {
        assert_eq!(SpinConfig::from_index(0, 4).spins(), &[1, 1, 1, 1]);
        assert_eq!(SpinConfig::from_index(0b1000, 4).spins(), &[-1, 1, 1, 1]);
        for i in 0..32 {
            assert_eq!(SpinConfig::from_index(i, 5).to_index(), i);
        }
    }

    #[test]
    fn ground_spaces() {
        for n in 3..=12 {
            let (e, gs) = brute_force_ground_states(&build_ferromagnetic_chain(n).unwrap());
            assert_eq!(e, -(n as f64));
            assert_eq!(gs.len(), 2);
        }
        let (e, gs) = brute_force_ground_states(&build_frustrated_chain(6, 2).unwrap());
        assert_eq!(e, -4.0);
        assert_eq!(gs.len(), 12);
    }

    #[test]
    fn text_format_round_trips() {
        let spec = ChainSpec::new(vec![-1, 1, -1, -1], vec![0.1, 0.0, -1e-300, 1.0 / 3.0]).unwrap();
        let text = spec.to_text();
        let back = ChainSpec::read_text(text.as_bytes()).unwrap();
        assert_eq!(back, spec);
        for (a, b) in back.fields().iter().zip(spec.fields()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(ChainSpec::read_text("J 0 -1\n".as_bytes()).is_err());
        assert!(ChainSpec::read_text("n 3\nJ 0 -1\nJ 1 -1\n".as_bytes()).is_err());
        assert!(ChainSpec::read_text("n 3\nJ 0 2\nJ 1 -1\nJ 2 -1\n".as_bytes()).is_err());
    }

    fn spec_strategy() -> impl Strategy<Value = (ChainSpec, SpinConfig, GaugeVector)> {
        (3usize..16).prop_flat_map(|n| {
            let pm = || prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), n);
            (pm(), prop::collection::vec(-2.0f64..2.0, n), pm(), pm()).prop_map(|(j, h, s, a)| {
                (ChainSpec::new(j, h).unwrap(), SpinConfig::new(s).unwrap(), GaugeVector::new(a).unwrap())
            })
        })
    }

    proptest! {
        #[test]
        fn gauge_covariance((spec, c, g) in spec_strategy()) {
            let gs = apply_gauge_spec(&spec, &g).unwrap();
            let gc = apply_gauge_config(&c, &g).unwrap();
            prop_assert_eq!(bond_energy(&gs, gc.spins()), bond_energy(&spec, c.spins()));
            // a_i h_i a_i s_i = h_i s_i exactly, so the full energy agrees bit for bit.
            prop_assert_eq!(ising_energy(&gs, &gc).unwrap(), ising_energy(&spec, &c).unwrap());
            prop_assert_eq!(apply_gauge_spec(&gs, &g).unwrap(), spec);
        }

        #[test]
        fn global_flip_symmetry((spec, c, _g) in spec_strategy()) {
            let zero = ChainSpec::new(spec.couplings().to_vec(), vec![0.0; spec.n()]).unwrap();
            prop_assert_eq!(ising_energy(&zero, &c.flipped()).unwrap(), ising_energy(&zero, &c).unwrap());
            prop_assert_eq!(squared_magnetization(&c.flipped()), squared_magnetization(&c));
        }
    }
}
