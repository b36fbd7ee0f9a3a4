//! Experiment configuration: a sectioned TOML file with every key checked.

use annealtherm::exact::ED_MAX_SITES;
use annealtherm::model::{build_ferromagnetic_chain, build_frustrated_chain, ChainSpec, MIN_SITES};
use annealtherm::schedule::{default_schedule, load_schedule, AnnealSchedule, Direction};
use serde::Deserialize;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub bath: BathSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A single value or a list in the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

impl<T> Default for OneOrMany<T> {
    fn default() -> Self {
        OneOrMany::Many(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Ferromagnetic,
    Frustrated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: OneOrMany<usize>,
    #[serde(default = "ferromagnetic")]
    pub kind: ChainKind,
    #[serde(default)]
    pub flipped_edge: usize,
}

fn ferromagnetic() -> ChainKind {
    ChainKind::Ferromagnetic
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    /// `default` or a path to an `s,A_GHz,B_GHz` file, relative to the config.
    pub source: String,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { source: "default".into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionName {
    Forward,
    Reverse,
}

impl From<DirectionName> for Direction {
    fn from(d: DirectionName) -> Self {
        match d {
            DirectionName::Forward => Direction::Forward,
            DirectionName::Reverse => Direction::Reverse,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub direction: DirectionName,
    pub s_p: OneOrMany<f64>,
    pub t_p: f64,
    pub rate_i: f64,
    pub rates: OneOrMany<f64>,
    pub anneals: u64,
    /// When false, `protocol-check` reports every protocol as feasible.
    pub hardware_limits: bool,
    pub rate_cap: f64,
    pub max_anneal_us: f64,
    pub max_total_ms: f64,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            direction: DirectionName::Forward,
            s_p: OneOrMany::default(),
            t_p: 1900.0,
            rate_i: 1.0,
            rates: OneOrMany::default(),
            anneals: 1500,
            hardware_limits: true,
            rate_cap: 1.0,
            max_anneal_us: 2000.0,
            max_total_ms: 3000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ed,
    Fermion,
    Qmc,
    Ame,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ed => "ed",
            Method::Fermion => "fermion",
            Method::Qmc => "qmc",
            Method::Ame => "ame",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub method: Option<Method>,
    pub s_grid: OneOrMany<f64>,
    pub temperatures: OneOrMany<f64>,
    pub qmc: QmcSection,
    pub ame: AmeSection,
    pub norm: NormSection,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            method: None,
            s_grid: OneOrMany::default(),
            temperatures: OneOrMany::One(12.0),
            qmc: QmcSection::default(),
            ame: AmeSection::default(),
            norm: NormSection::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QmcSection {
    pub slices: Option<usize>,
    pub max_dtau: f64,
    pub therm_sweeps: usize,
    pub measure_sweeps: usize,
    pub bins: usize,
}

impl Default for QmcSection {
    fn default() -> Self {
        let d = annealtherm::qmc::QmcConfig::default();
        Self {
            slices: d.slices,
            max_dtau: d.max_dtau,
            therm_sweeps: d.therm_sweeps,
            measure_sweeps: d.measure_sweeps,
            bins: d.bins,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmeSection {
    pub rtol: f64,
    pub atol: f64,
    /// Trajectory rows written by `ame-evolve`, evenly spaced in time.
    pub record_points: usize,
    /// Switch the bath off for the final quench in `quench-sweep`.
    pub closed_quench: bool,
}

impl Default for AmeSection {
    fn default() -> Self {
        Self { rtol: 1e-6, atol: 1e-9, record_points: 201, closed_quench: false }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormSection {
    pub epsilon: f64,
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub rel_tol: f64,
}

impl Default for NormSection {
    fn default() -> Self {
        let d = annealtherm::ame::NormSearch::default();
        Self { epsilon: 0.1, rate_lo: d.lo, rate_hi: d.hi, rel_tol: d.rel_tol }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BathSection {
    pub temperature: f64,
    pub coupling: f64,
    pub cutoff: f64,
}

impl Default for BathSection {
    fn default() -> Self {
        let d = annealtherm::ame::BathParams::default();
        Self { temperature: d.temperature, coupling: d.coupling, cutoff: d.cutoff }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    /// Gauge count for sampled statistics; 0 disables sampling.
    pub gauges: usize,
    pub shots: usize,
    pub resamples: usize,
    pub level: f64,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self { gauges: 0, shots: 1000, resamples: 10_000, level: 0.95 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: PathBuf::from("out") }
    }
}

impl Config {
    pub fn from_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.model.n.to_vec()
    }

    pub fn build_chain(&self, n: usize) -> Result<ChainSpec, CliError> {
        if n < MIN_SITES {
            return Err(CliError::Validation(format!("model.n = {n} is below the minimum of {MIN_SITES}")));
        }
        let spec = match self.model.kind {
            ChainKind::Ferromagnetic => build_ferromagnetic_chain(n),
            ChainKind::Frustrated => build_frustrated_chain(n, self.model.flipped_edge),
        };
        spec.map_err(|e| CliError::Validation(format!("model: {e}")))
    }

    pub fn chains(&self) -> Result<Vec<ChainSpec>, CliError> {
        let sizes = self.sizes();
        if sizes.is_empty() {
            return Err(CliError::Validation("model.n must not be empty".into()));
        }
        sizes.into_iter().map(|n| self.build_chain(n)).collect()
    }

    /// Loads the schedule, resolving file paths against `base`.
    pub fn load_schedule(&self, base: &Path) -> Result<AnnealSchedule, CliError> {
        if self.schedule.source == "default" {
            return Ok(default_schedule());
        }
        let path = base.join(&self.schedule.source);
        let file = std::fs::File::open(&path)
            .map_err(|e| CliError::Validation(format!("schedule.source {}: {e}", path.display())))?;
        load_schedule(file).map_err(|e| CliError::Validation(format!("schedule.source {}: {e}", path.display())))
    }

    pub fn s_grid(&self) -> Result<Vec<f64>, CliError> {
        let grid = self.solver.s_grid.to_vec();
        if grid.is_empty() {
            return Err(CliError::Validation("solver.s_grid must not be empty".into()));
        }
        if let Some(s) = grid.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(CliError::Validation(format!("solver.s_grid value {s} is outside [0, 1]")));
        }
        Ok(grid)
    }

    pub fn temperatures(&self) -> Result<Vec<f64>, CliError> {
        let ts = self.solver.temperatures.to_vec();
        if ts.is_empty() {
            return Err(CliError::Validation("solver.temperatures must not be empty".into()));
        }
        if let Some(t) = ts.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(CliError::Validation(format!("solver.temperatures value {t} must be positive")));
        }
        Ok(ts)
    }

    pub fn s_p_list(&self) -> Result<Vec<f64>, CliError> {
        let list = self.protocol.s_p.to_vec();
        if list.is_empty() {
            return Err(CliError::Validation("protocol.s_p must not be empty".into()));
        }
        if let Some(s) = list.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return Err(CliError::Validation(format!("protocol.s_p value {s} is outside (0, 1]")));
        }
        Ok(list)
    }

    pub fn rates(&self) -> Result<Vec<f64>, CliError> {
        let list = self.protocol.rates.to_vec();
        if list.is_empty() {
            return Err(CliError::Validation("protocol.rates must not be empty".into()));
        }
        if let Some(r) = list.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(CliError::Validation(format!("protocol.rates value {r} must be positive")));
        }
        Ok(list)
    }

    /// The solver method, falling back to `default` and checking it against
    /// `allowed` and every model size.
    pub fn method(&self, default: Method, allowed: &[Method]) -> Result<Method, CliError> {
        let m = self.solver.method.unwrap_or(default);
        if !allowed.contains(&m) {
            let names: Vec<_> = allowed.iter().map(|m| m.name()).collect();
            return Err(CliError::Validation(format!("solver.method `{}` is not one of {}", m.name(), names.join(", "))));
        }
        for spec in self.chains()? {
            match m {
                Method::Ed if spec.n() > ED_MAX_SITES => {
                    return Err(CliError::Validation(format!(
                        "solver.method `ed` is limited to n <= {ED_MAX_SITES}, got n = {}",
                        spec.n()
                    )));
                }
                Method::Fermion if !spec.is_ferromagnetic() || spec.has_fields() => {
                    return Err(CliError::Validation("solver.method `fermion` needs the uniform ferromagnetic chain".into()));
                }
                _ => {}
            }
        }
        Ok(m)
    }

    pub fn bath(&self) -> Result<annealtherm::ame::BathParams, CliError> {
        let b = annealtherm::ame::BathParams {
            temperature: self.bath.temperature,
            coupling: self.bath.coupling,
            cutoff: self.bath.cutoff,
        };
        b.validate().map_err(|e| CliError::Validation(format!("bath: {e}")))?;
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = Config::from_str("[model]\nn = 4\n").unwrap();
        assert_eq!(c.sizes(), vec![4]);
        assert_eq!(c.seed, 0);
        assert_eq!(c.solver.temperatures.to_vec(), vec![12.0]);
        assert_eq!(c.protocol.t_p, 1900.0);
        assert_eq!(c.output.directory, PathBuf::from("out"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["[model]\nn = 4\nsize = 3\n", "[model]\nn = 4\n[bath]\ntemp = 3\n", "[model]\nn = 4\n[colour]\nx = 1\n"] {
            assert!(matches!(Config::from_str(text), Err(CliError::Validation(_))), "{text}");
        }
    }

    #[test]
    fn lists_and_scalars() {
        let c = Config::from_str("[model]\nn = [3, 4]\n[protocol]\ns_p = 0.3\nrates = [1, 10]\n").unwrap();
        assert_eq!(c.sizes(), vec![3, 4]);
        assert_eq!(c.s_p_list().unwrap(), vec![0.3]);
        assert_eq!(c.rates().unwrap(), vec![1.0, 10.0]);
    }

    #[test]
    fn method_checks() {
        let c = Config::from_str("[model]\nn = 20\n[solver]\nmethod = \"ed\"\n").unwrap();
        assert!(c.method(Method::Ed, &[Method::Ed, Method::Fermion]).is_err());
        let c = Config::from_str("[model]\nn = 6\nkind = \"frustrated\"\n[solver]\nmethod = \"fermion\"\n").unwrap();
        assert!(c.method(Method::Ed, &[Method::Ed, Method::Fermion]).is_err());
        let c = Config::from_str("[model]\nn = 2\n").unwrap();
        assert!(c.chains().is_err());
    }
}
