//! Run configuration: TOML parsing, per-scenario defaults and validation.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Scenario {
    Landau,
    TwoStream,
    BracketCheck,
    GnhDemo,
    EcStability,
    ControlledStabilization,
    Convergence,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Landau,
        Scenario::TwoStream,
        Scenario::BracketCheck,
        Scenario::GnhDemo,
        Scenario::EcStability,
        Scenario::ControlledStabilization,
        Scenario::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Landau => "landau",
            Scenario::TwoStream => "two_stream",
            Scenario::BracketCheck => "bracket_check",
            Scenario::GnhDemo => "gnh_demo",
            Scenario::EcStability => "ec_stability",
            Scenario::ControlledStabilization => "controlled_stabilization",
            Scenario::Convergence => "convergence",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Grid presets selectable from the command line as `(Nx, Nv)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Low,
    Ref,
    High,
}

impl Resolution {
    pub fn sizes(self) -> (usize, usize) {
        match self {
            Resolution::Low => (32, 128),
            Resolution::Ref => (64, 256),
            Resolution::High => (128, 512),
        }
    }
}

/// Electrostatic grid block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub length: f64,
    pub nx: usize,
    pub nv: usize,
    pub v_max: f64,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
struct GridOverrides {
    length: Option<f64>,
    nx: Option<usize>,
    nv: Option<usize>,
    v_max: Option<f64>,
}

impl GridConfig {
    pub fn defaults(s: Scenario) -> Self {
        let ref_grid = GridConfig { length: 4.0 * PI, nx: 64, nv: 256, v_max: 6.0 };
        match s {
            Scenario::Landau | Scenario::GnhDemo => ref_grid,
            Scenario::ControlledStabilization => GridConfig { v_max: 8.0, ..ref_grid },
            Scenario::TwoStream => GridConfig { length: 10.0 * PI, v_max: 9.0, ..ref_grid },
            Scenario::BracketCheck => GridConfig { nx: 32, nv: 64, v_max: 8.0, ..ref_grid },
            Scenario::EcStability => GridConfig { nx: 32, v_max: 8.0, ..ref_grid },
            Scenario::Convergence => GridConfig { nx: 32, nv: 128, ..ref_grid },
        }
    }

    fn overlay(self, o: GridOverrides) -> Self {
        GridConfig {
            length: o.length.unwrap_or(self.length),
            nx: o.nx.unwrap_or(self.nx),
            nv: o.nv.unwrap_or(self.nv),
            v_max: o.v_max.unwrap_or(self.v_max),
        }
    }

    pub fn phase_grid(&self) -> vmgeom::grid::PhaseGrid {
        vmgeom::grid::PhaseGrid::es(self.length, self.nx, self.v_max, self.nv)
    }

    /// Fundamental wavenumber.
    pub fn k1(&self) -> f64 {
        2.0 * PI / self.length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandauParams {
    pub mode: usize,
    pub amplitude: f64,
    pub dt: f64,
    pub t_end: f64,
    pub cadence: usize,
    /// Window `[t_lo, t_hi]` for the peak fit of the field energy.
    pub fit_window: [f64; 2],
    /// Duration of the unperturbed equilibrium run.
    pub equilibrium_t_end: f64,
}

impl Default for LandauParams {
    fn default() -> Self {
        LandauParams {
            mode: 1,
            amplitude: 1e-3,
            dt: 0.025,
            t_end: 40.0,
            cadence: 2,
            fit_window: [5.0, 35.0],
            equilibrium_t_end: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoStreamParams {
    pub u0: f64,
    pub sigma: f64,
    pub mode: usize,
    pub amplitude: f64,
    pub dt: f64,
    pub t_end: f64,
    pub cadence: usize,
    /// Window `[t_lo, t_hi]` for the log-linear fit of the field energy.
    pub fit_window: [f64; 2],
}

impl Default for TwoStreamParams {
    fn default() -> Self {
        TwoStreamParams {
            u0: 2.4,
            sigma: 1.0,
            mode: 1,
            amplitude: 1e-5,
            dt: 0.025,
            t_end: 45.0,
            cadence: 4,
            fit_window: [20.0, 40.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BracketCheckParams {
    pub triples: usize,
    /// Refinement ladder `(Nx, Nv)` for the Casimir-annihilation order.
    pub ladder: Vec<[usize; 2]>,
}

impl Default for BracketCheckParams {
    fn default() -> Self {
        BracketCheckParams { triples: 100, ladder: vec![[32, 64], [64, 128], [128, 256]] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnhParams {
    pub systems: usize,
    pub max_dim: usize,
    /// `(k, ρ)` for each of the two modes of the electromagnetic toy.
    pub em_modes: [[f64; 2]; 2],
}

impl Default for GnhParams {
    fn default() -> Self {
        GnhParams { systems: 50, max_dim: 6, em_modes: [[1.0, 0.3], [2.0, -0.2]] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcParams {
    pub mode: usize,
    pub two_stream_u0: f64,
    pub random_profiles: usize,
}

impl Default for EcParams {
    fn default() -> Self {
        EcParams { mode: 1, two_stream_u0: 2.4, random_profiles: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlParams {
    pub mode: usize,
    /// Velocity of the node made marginal.
    pub v_node: f64,
    /// Width of the velocity bump of the shaping channel.
    pub width: f64,
    /// Constant amplitude of the current channel in the power-balance run.
    pub amplitude: f64,
    pub power_dt: f64,
    pub power_steps: usize,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams { mode: 1, v_node: 1.0, width: 0.3, amplitude: 0.2, power_dt: 0.01, power_steps: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceParams {
    pub mode: usize,
    pub eps: Vec<f64>,
    pub bgk_amplitude: f64,
    pub bgk_harmonics: usize,
    pub bgk_nx: usize,
    pub bgk_nv: usize,
    pub bgk_v_max: f64,
    /// Amplitude of the density perturbation in the non-equilibrium control.
    pub control_amplitude: f64,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        ConvergenceParams {
            mode: 1,
            eps: vec![1e-3, 1e-4, 1e-5],
            bgk_amplitude: 0.1,
            bgk_harmonics: 6,
            bgk_nx: 32,
            bgk_nv: 256,
            bgk_v_max: 10.0,
            control_amplitude: 0.1,
        }
    }
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub grid: GridConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landau: Option<LandauParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub two_stream: Option<TwoStreamParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bracket_check: Option<BracketCheckParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gnh_demo: Option<GnhParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ec_stability: Option<EcParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controlled_stabilization: Option<ControlParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceParams>,
}

#[derive(Debug, Deserialize)]
struct RawConfig {
    scenario: Option<Scenario>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    #[serde(default)]
    grid: GridOverrides,
    landau: Option<LandauParams>,
    two_stream: Option<TwoStreamParams>,
    bracket_check: Option<BracketCheckParams>,
    gnh_demo: Option<GnhParams>,
    ec_stability: Option<EcParams>,
    controlled_stabilization: Option<ControlParams>,
    convergence: Option<ConvergenceParams>,
}

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    /// TOML syntax or type error; the message carries line and column.
    Parse(String),
    /// Every violation found, one per entry.
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Invalid(v) => {
                writeln!(f, "invalid config ({} problem{}):", v.len(), if v.len() == 1 { "" } else { "s" })?;
                for p in v {
                    writeln!(f, "  - {p}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    /// Defaults for `scenario`.
    pub fn defaults(scenario: Scenario) -> Self {
        let mut c = RunConfig {
            scenario,
            seed: DEFAULT_SEED,
            out: None,
            grid: GridConfig::defaults(scenario),
            landau: None,
            two_stream: None,
            bracket_check: None,
            gnh_demo: None,
            ec_stability: None,
            controlled_stabilization: None,
            convergence: None,
        };
        match scenario {
            Scenario::Landau => c.landau = Some(Default::default()),
            Scenario::TwoStream => c.two_stream = Some(Default::default()),
            Scenario::BracketCheck => c.bracket_check = Some(Default::default()),
            Scenario::GnhDemo => c.gnh_demo = Some(Default::default()),
            Scenario::EcStability => c.ec_stability = Some(Default::default()),
            Scenario::ControlledStabilization => c.controlled_stabilization = Some(Default::default()),
            Scenario::Convergence => c.convergence = Some(Default::default()),
        }
        c
    }

    /// Parse TOML text. `expected` is the scenario chosen on the command
    /// line; the text may omit `scenario` but must not contradict it.
    pub fn parse(text: &str, expected: Option<Scenario>) -> Result<Self, ConfigError> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let raw: RawConfig = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut problems: Vec<String> = unknown.into_iter().map(|k| format!("unknown key \"{k}\"")).collect();
        let scenario = match (raw.scenario, expected) {
            (Some(a), Some(b)) if a != b => {
                problems.push(format!("config scenario \"{a}\" contradicts the requested scenario \"{b}\""));
                b
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => {
                problems.push("missing key \"scenario\"".into());
                return Err(ConfigError::Invalid(problems));
            }
        };
        let mut cfg = RunConfig::defaults(scenario);
        cfg.seed = raw.seed.unwrap_or(DEFAULT_SEED);
        cfg.out = raw.out;
        cfg.grid = cfg.grid.overlay(raw.grid);
        macro_rules! block {
            ($field:ident, $s:expr) => {
                if let Some(b) = raw.$field {
                    if scenario == $s {
                        cfg.$field = Some(b);
                    } else {
                        problems
                            .push(format!("block [{}] does not apply to scenario \"{scenario}\"", stringify!($field)));
                    }
                }
            };
        }
        block!(landau, Scenario::Landau);
        block!(two_stream, Scenario::TwoStream);
        block!(bracket_check, Scenario::BracketCheck);
        block!(gnh_demo, Scenario::GnhDemo);
        block!(ec_stability, Scenario::EcStability);
        block!(controlled_stabilization, Scenario::ControlledStabilization);
        block!(convergence, Scenario::Convergence);
        problems.extend(cfg.violations());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    /// Replace the grid sizes with a preset.
    pub fn apply_resolution(&mut self, r: Resolution) {
        let (nx, nv) = r.sizes();
        self.grid.nx = nx;
        self.grid.nv = nv;
    }

    /// Every violated requirement.
    pub fn violations(&self) -> Vec<String> {
        fn positive(p: &mut Vec<String>, name: &str, x: f64) {
            if !(x > 0.0 && x.is_finite()) {
                p.push(format!("{name} must be positive (got {x})"));
            }
        }
        fn at_least(p: &mut Vec<String>, name: &str, x: usize, min: usize) {
            if x < min {
                p.push(format!("{name} must be at least {min} (got {x})"));
            }
        }
        fn window(p: &mut Vec<String>, name: &str, w: [f64; 2], t_end: f64) {
            if !(w[0] >= 0.0 && w[0] < w[1] && w[1] <= t_end) {
                p.push(format!("{name} must satisfy 0 <= t_lo < t_hi <= t_end (got [{}, {}])", w[0], w[1]));
            }
        }
        fn mode(p: &mut Vec<String>, name: &str, m: usize) {
            if !(1..=4).contains(&m) {
                p.push(format!("{name} must lie in 1..=4, the recorded modes (got {m})"));
            }
        }
        let mut p = Vec::new();
        let g = &self.grid;
        positive(&mut p, "grid.length", g.length);
        positive(&mut p, "grid.v_max", g.v_max);
        if g.nx < 4 || !g.nx.is_multiple_of(2) {
            p.push(format!("grid.nx must be even and at least 4 (got {})", g.nx));
        }
        at_least(&mut p, "grid.nv", g.nv, 8);
        if let Some(l) = &self.landau {
            mode(&mut p, "landau.mode", l.mode);
            positive(&mut p, "landau.amplitude", l.amplitude);
            positive(&mut p, "landau.dt", l.dt);
            positive(&mut p, "landau.t_end", l.t_end);
            positive(&mut p, "landau.equilibrium_t_end", l.equilibrium_t_end);
            at_least(&mut p, "landau.cadence", l.cadence, 1);
            window(&mut p, "landau.fit_window", l.fit_window, l.t_end);
        }
        if let Some(t) = &self.two_stream {
            mode(&mut p, "two_stream.mode", t.mode);
            positive(&mut p, "two_stream.u0", t.u0);
            positive(&mut p, "two_stream.sigma", t.sigma);
            positive(&mut p, "two_stream.amplitude", t.amplitude);
            positive(&mut p, "two_stream.dt", t.dt);
            positive(&mut p, "two_stream.t_end", t.t_end);
            at_least(&mut p, "two_stream.cadence", t.cadence, 1);
            window(&mut p, "two_stream.fit_window", t.fit_window, t.t_end);
        }
        if let Some(b) = &self.bracket_check {
            at_least(&mut p, "bracket_check.triples", b.triples, 1);
            at_least(&mut p, "bracket_check.ladder length", b.ladder.len(), 2);
            for (i, [nx, nv]) in b.ladder.iter().enumerate() {
                if *nx < 4 || nx % 2 != 0 || *nv < 8 {
                    p.push(format!("bracket_check.ladder[{i}] needs even nx >= 4 and nv >= 8 (got [{nx}, {nv}])"));
                }
            }
        }
        if let Some(gp) = &self.gnh_demo {
            at_least(&mut p, "gnh_demo.max_dim", gp.max_dim, 2);
            for (i, [k, rho]) in gp.em_modes.iter().enumerate() {
                positive(&mut p, &format!("gnh_demo.em_modes[{i}] wavenumber"), *k);
                if !rho.is_finite() {
                    p.push(format!("gnh_demo.em_modes[{i}] charge must be finite"));
                }
            }
        }
        if let Some(e) = &self.ec_stability {
            at_least(&mut p, "ec_stability.mode", e.mode, 1);
            positive(&mut p, "ec_stability.two_stream_u0", e.two_stream_u0);
        }
        if let Some(c) = &self.controlled_stabilization {
            at_least(&mut p, "controlled_stabilization.mode", c.mode, 1);
            positive(&mut p, "controlled_stabilization.width", c.width);
            positive(&mut p, "controlled_stabilization.power_dt", c.power_dt);
            at_least(&mut p, "controlled_stabilization.power_steps", c.power_steps, 1);
            if !c.amplitude.is_finite() || !c.v_node.is_finite() {
                p.push("controlled_stabilization.amplitude and v_node must be finite".into());
            }
        }
        if let Some(c) = &self.convergence {
            at_least(&mut p, "convergence.mode", c.mode, 1);
            at_least(&mut p, "convergence.eps length", c.eps.len(), 2);
            for (i, e) in c.eps.iter().enumerate() {
                positive(&mut p, &format!("convergence.eps[{i}]"), *e);
            }
            positive(&mut p, "convergence.bgk_amplitude", c.bgk_amplitude);
            positive(&mut p, "convergence.bgk_v_max", c.bgk_v_max);
            positive(&mut p, "convergence.control_amplitude", c.control_amplitude);
            at_least(&mut p, "convergence.bgk_harmonics", c.bgk_harmonics, 1);
            if c.bgk_nx < 4 || c.bgk_nx % 2 != 0 {
                p.push(format!("convergence.bgk_nx must be even and at least 4 (got {})", c.bgk_nx));
            }
            at_least(&mut p, "convergence.bgk_nv", c.bgk_nv, 8);
        }
        p
    }

    /// Effective configuration echoed next to the outputs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_landau_config_gets_reference_defaults() {
        let c = RunConfig::parse("scenario = \"landau\"\n", None).unwrap();
        assert_eq!((c.grid.nx, c.grid.nv), (64, 256));
        assert!((c.grid.length - 4.0 * PI).abs() < 1e-15);
        assert_eq!(c.landau, Some(LandauParams::default()));
    }

    #[test]
    fn negative_dt_is_named() {
        let e = RunConfig::parse("scenario = \"landau\"\n[landau]\ndt = -0.1\n", None).unwrap_err();
        assert!(e.to_string().contains("landau.dt"), "{e}");
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let e = RunConfig::parse("scenario = \"landau\"\ndx = 0.1\n[grid]\nnz = 3\n", None).unwrap_err();
        let s = e.to_string();
        assert!(s.contains("\"dx\"") && s.contains("grid.nz"), "{s}");
    }

    #[test]
    fn every_violation_is_reported() {
        let e =
            RunConfig::parse("scenario = \"two_stream\"\n[grid]\nnx = 7\nv_max = 0\n[two_stream]\nsigma = -1\n", None)
                .unwrap_err();
        let ConfigError::Invalid(v) = e else { panic!("expected validation error") };
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let e = RunConfig::parse("scenario = \"landau\"\n[grid\n", None).unwrap_err();
        assert!(matches!(e, ConfigError::Parse(_)));
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn foreign_blocks_and_contradictions_are_rejected() {
        let e =
            RunConfig::parse("scenario = \"landau\"\n[two_stream]\nu0 = 3.0\n", Some(Scenario::GnhDemo)).unwrap_err();
        let ConfigError::Invalid(v) = e else { panic!() };
        assert_eq!(v.len(), 2, "{v:?}");
    }

    #[test]
    fn effective_config_round_trips() {
        for s in Scenario::ALL {
            let c = RunConfig::defaults(s);
            let back = RunConfig::parse(&c.to_toml(), None).unwrap();
            assert_eq!(back, c, "{s}");
        }
    }

    #[test]
    fn resolution_presets() {
        let mut c = RunConfig::defaults(Scenario::Landau);
        c.apply_resolution(Resolution::High);
        assert_eq!((c.grid.nx, c.grid.nv), (128, 512));
    }
}
