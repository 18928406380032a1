//! Run configuration read from TOML.
//!
//! Every key is optional; missing values take the defaults of the selected
//! problem. See the README for the full key list.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fe_space::THSpace;
use crate::fom::{FomConfig, NonlinearMethod, Scheme};
use crate::mesh::Mesh;
use crate::pod::InnerProduct;
use crate::problems::{Cylinder, FlowProblem, NoFlow};
use crate::rom::PressureMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    NoFlow,
    Cylinder,
}

impl ProblemId {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::NoFlow => "noflow",
            ProblemId::Cylinder => "cylinder",
        }
    }

    pub fn problem(self) -> &'static dyn FlowProblem {
        match self {
            ProblemId::NoFlow => &NoFlow,
            ProblemId::Cylinder => &Cylinder,
        }
    }

    pub fn mesh(self, level: usize) -> Result<Mesh<f64>> {
        match self {
            ProblemId::NoFlow => NoFlow::mesh(level),
            ProblemId::Cylinder => Cylinder::mesh(level),
        }
    }

    pub fn space(self, level: usize) -> Result<THSpace> {
        THSpace::new(self.mesh(level)?, &self.problem().boundary_spec())
    }

    pub fn fom_defaults(self) -> FomConfig {
        match self {
            ProblemId::NoFlow => FomConfig::noflow(),
            ProblemId::Cylinder => FomConfig::cylinder(),
        }
    }

    /// POD time scale.
    pub fn default_tau(self) -> f64 {
        match self {
            ProblemId::NoFlow => 1.0 / 6.0,
            ProblemId::Cylinder => 0.3,
        }
    }

    /// Whether the scaled snapshot mean is a POD generator.
    pub fn mean_in_generators(self) -> bool {
        self == ProblemId::NoFlow
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noflow" => Ok(ProblemId::NoFlow),
            "cylinder" => Ok(ProblemId::Cylinder),
            _ => Err(Error::InvalidConfig(format!("unknown problem `{s}`"))),
        }
    }
}

/// A reduced dimension, or all retained modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rank {
    Fixed(usize),
    All,
}

impl Rank {
    pub fn resolve(self, available: usize) -> usize {
        match self {
            Rank::All => available,
            Rank::Fixed(r) => r.min(available),
        }
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rank::All => f.write_str("all"),
            Rank::Fixed(r) => write!(f, "{r}"),
        }
    }
}

impl FromStr for Rank {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Rank::All);
        }
        s.parse()
            .ok()
            .filter(|&r| r > 0)
            .map(Rank::Fixed)
            .ok_or_else(|| Error::InvalidConfig(format!("rank must be a positive integer or `all`, got `{s}`")))
    }
}

impl Serialize for Rank {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Rank::All => s.serialize_str("all"),
            Rank::Fixed(r) => s.serialize_u64(*r as u64),
        }
    }
}

impl<'de> Deserialize<'de> for Rank {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        let s = match Raw::deserialize(d)? {
            Raw::Int(i) => i.to_string(),
            Raw::Str(s) => s,
        };
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodSelection {
    Se,
    Sm,
    Both,
}

impl MethodSelection {
    pub fn methods(self) -> &'static [PressureMethod] {
        match self {
            MethodSelection::Se => &[PressureMethod::Se],
            MethodSelection::Sm => &[PressureMethod::Sm],
            MethodSelection::Both => &[PressureMethod::Se, PressureMethod::Sm],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    name: Option<ProblemId>,
    level: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FomSection {
    nu: Option<f64>,
    mu: Option<f64>,
    dt: Option<f64>,
    scheme: Option<Scheme>,
    t_end: Option<f64>,
    record_start: Option<f64>,
    nonlinear: Option<NonlinearMethod>,
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PodSection {
    inner_product: Option<InnerProduct>,
    tau: Option<f64>,
    cutoff: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RomSection {
    rank: Option<Rank>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PressureSection {
    method: Option<MethodSelection>,
    rank: Option<Rank>,
    tau_c: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    levels: Option<Vec<usize>>,
    full_levels: Option<Vec<usize>>,
    nu: Option<Vec<f64>>,
    mu: Option<Vec<f64>>,
    ranks: Option<Vec<Rank>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    problem: ProblemSection,
    #[serde(default)]
    fom: FomSection,
    #[serde(default)]
    pod: PodSection,
    #[serde(default)]
    rom: RomSection,
    #[serde(default)]
    pressure: PressureSection,
    #[serde(default)]
    output: OutputSection,
    #[serde(default)]
    sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PodSettings {
    pub inner_product: InnerProduct,
    pub tau: f64,
    pub cutoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub levels: Vec<usize>,
    /// Levels added by `--full`.
    pub full_levels: Vec<usize>,
    pub nu: Vec<f64>,
    pub mu: Vec<f64>,
    /// Pressure ranks evaluated on each run.
    pub ranks: Vec<Rank>,
}

/// A validated run description with all defaults filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: ProblemId,
    pub level: usize,
    pub fom: FomConfig,
    pub pod: PodSettings,
    pub velocity_rank: Rank,
    pub pressure_rank: Rank,
    pub methods: MethodSelection,
    /// `tau_K = tau_c h_K^2` in the stabilization-motivated recovery.
    pub tau_c: f64,
    pub out: PathBuf,
    pub sweep: SweepGrid,
}

impl RunConfig {
    /// Defaults of a problem at level 1.
    pub fn defaults(problem: ProblemId) -> Self {
        Self::resolve(RawConfig {
            problem: ProblemSection { name: Some(problem), level: None },
            ..Default::default()
        })
        .expect("defaults are valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Self::resolve(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    fn resolve(raw: RawConfig) -> Result<Self> {
        let problem = raw.problem.name.unwrap_or(ProblemId::NoFlow);
        let mut fom = problem.fom_defaults();
        let f = raw.fom;
        fom.nu = f.nu.unwrap_or(fom.nu);
        fom.mu = f.mu.unwrap_or(fom.mu);
        fom.dt = f.dt.unwrap_or(fom.dt);
        fom.scheme = f.scheme.unwrap_or(fom.scheme);
        fom.t_end = f.t_end.unwrap_or(fom.t_end);
        fom.record_start = f.record_start.unwrap_or(fom.record_start);
        fom.nonlinear.method = f.nonlinear.unwrap_or(fom.nonlinear.method);
        fom.nonlinear.tolerance = f.tolerance.unwrap_or(fom.nonlinear.tolerance);
        fom.nonlinear.max_iterations = f.max_iterations.unwrap_or(fom.nonlinear.max_iterations);
        let s = raw.sweep;
        let default_levels = match problem {
            ProblemId::NoFlow => (vec![1, 2, 3], vec![4]),
            ProblemId::Cylinder => (vec![1], vec![2, 3]),
        };
        let cfg = Self {
            problem,
            level: raw.problem.level.unwrap_or(1),
            fom,
            pod: PodSettings {
                inner_product: raw.pod.inner_product.unwrap_or(InnerProduct::L2),
                tau: raw.pod.tau.unwrap_or_else(|| problem.default_tau()),
                cutoff: raw.pod.cutoff.unwrap_or(1e-10),
            },
            velocity_rank: raw.rom.rank.unwrap_or(Rank::All),
            pressure_rank: raw.pressure.rank.unwrap_or(Rank::All),
            methods: raw.pressure.method.unwrap_or(MethodSelection::Both),
            tau_c: raw.pressure.tau_c.unwrap_or(1.0),
            out: raw.output.dir.unwrap_or_else(|| PathBuf::from("runs").join(problem.as_str())),
            sweep: SweepGrid {
                levels: s.levels.unwrap_or(default_levels.0),
                full_levels: s.full_levels.unwrap_or(default_levels.1),
                nu: s.nu.unwrap_or_else(|| match problem {
                    ProblemId::NoFlow => vec![1.0, 0.1, 0.01, 1e-4, 1e-6, 1e-8],
                    ProblemId::Cylinder => vec![Cylinder::VISCOSITY],
                }),
                mu: s.mu.unwrap_or_else(|| vec![0.0, 0.1]),
                ranks: s.ranks.unwrap_or_else(|| {
                    [2, 3, 4, 6, 8, 12, 16, 24, 32].into_iter().map(Rank::Fixed).chain([Rank::All]).collect()
                }),
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.fom.validate()?;
        if !(1..=5).contains(&self.level) {
            return bad(format!("level {} outside 1..=5", self.level));
        }
        if !(self.pod.tau > 0.0) {
            return bad("pod.tau must be positive".into());
        }
        if !(self.pod.cutoff >= 0.0) {
            return bad("pod.cutoff must be nonnegative".into());
        }
        if !(self.tau_c > 0.0) {
            return bad("pressure.tau_c must be positive".into());
        }
        let g = &self.sweep;
        if g.levels.is_empty() || g.nu.is_empty() || g.mu.is_empty() || g.ranks.is_empty() {
            return bad("sweep lists must be nonempty".into());
        }
        if let Some(l) = g.levels.iter().chain(&g.full_levels).find(|l| !(1..=5).contains(*l)) {
            return bad(format!("sweep level {l} outside 1..=5"));
        }
        if g.nu.iter().any(|v| !(*v > 0.0)) || g.mu.iter().any(|v| !(*v >= 0.0)) {
            return bad("sweep viscosities must be positive and grad-div parameters nonnegative".into());
        }
        Ok(())
    }

    /// The same run at another level, viscosity and grad-div parameter.
    pub fn variant(&self, level: usize, nu: f64, mu: f64) -> Self {
        let mut c = self.clone();
        c.level = level;
        c.fom.nu = nu;
        c.fom.mu = mu;
        c
    }

    /// Subdirectory name of a sweep member.
    pub fn run_name(&self) -> String {
        format!("{}_L{}_nu{:e}_mu{:e}", self.problem, self.level, self.fom.nu, self.fom.mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_noflow_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c.problem, ProblemId::NoFlow);
        assert_eq!((c.fom.nu, c.fom.mu, c.fom.dt), (0.01, 0.1, 0.005));
        assert_eq!(c.fom.scheme, Scheme::Bdf2);
        assert_eq!(c.pod.tau, 1.0 / 6.0);
        assert_eq!(c.pod.cutoff, 1e-10);
        assert_eq!(c.velocity_rank, Rank::All);
        assert_eq!(c.methods, MethodSelection::Both);
        assert_eq!(c.sweep.levels, vec![1, 2, 3]);
        assert_eq!(c.sweep.nu.len(), 6);
        assert_eq!(c.sweep.ranks.len(), 10);
    }

    #[test]
    fn cylinder_defaults() {
        let c = RunConfig::defaults(ProblemId::Cylinder);
        assert_eq!((c.fom.nu, c.pod.tau, c.fom.dt), (1e-3, 0.3, 0.005));
        assert_eq!(c.fom.record_start, 8.0);
        assert!(!c.problem.mean_in_generators());
    }

    #[test]
    fn sections_override_defaults() {
        let c = RunConfig::from_toml(
            r#"
            [problem]
            name = "noflow"
            level = 2
            [fom]
            nu = 1e-4
            mu = 0.0
            scheme = "implicit_euler"
            nonlinear = "newton"
            [pod]
            inner_product = "H1"
            [rom]
            rank = 12
            [pressure]
            method = "sm"
            rank = "all"
            [output]
            dir = "out/x"
            [sweep]
            levels = [1, 2]
            ranks = [2, "all"]
            "#,
        )
        .unwrap();
        assert_eq!(c.level, 2);
        assert_eq!(c.fom.nu, 1e-4);
        assert_eq!(c.fom.nonlinear.method, NonlinearMethod::Newton);
        assert_eq!(c.pod.inner_product, InnerProduct::H1);
        assert_eq!(c.velocity_rank, Rank::Fixed(12));
        assert_eq!(c.methods.methods(), &[PressureMethod::Sm]);
        assert_eq!(c.out, PathBuf::from("out/x"));
        assert_eq!(c.sweep.ranks, vec![Rank::Fixed(2), Rank::All]);
    }

    #[test]
    fn invalid_values_are_rejected() {
        for text in [
            "[fom]\nnu = -1.0",
            "[problem]\nname = \"pipe\"",
            "[problem]\nlevel = 9",
            "[rom]\nrank = 0",
            "[rom]\nrank = \"most\"",
            "[pod]\nunknown = 1",
            "[fom]\ndt = 0.003",
            "[sweep]\nnu = []",
        ] {
            assert!(matches!(RunConfig::from_toml(text), Err(Error::InvalidConfig(_))), "{text}");
        }
    }

    #[test]
    fn rank_resolution_and_names() {
        assert_eq!(Rank::All.resolve(7), 7);
        assert_eq!(Rank::Fixed(32).resolve(7), 7);
        assert_eq!(Rank::Fixed(3).resolve(7), 3);
        let c = RunConfig::defaults(ProblemId::NoFlow).variant(2, 1e-6, 0.0);
        assert_eq!(c.run_name(), "noflow_L2_nu1e-6_mu0e0");
    }
}
