//! INI run configuration: parsing, validation, overrides and echo.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use ini::Ini;
use rfgf::density::ExtractionOptions;
use rfgf::quadrature::{linspace, logspace};
use rfgf::{hermite_coefficients, Activation, Complex64, Error, ModelConfig};

/// How the activation enters: explicit Hermite coefficients or a named
/// activation whose coefficients are computed.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationSpec {
    Coefficients { mu: f64, nu: f64 },
    Named(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub activation: ActivationSpec,
    pub psi: f64,
    pub phi: f64,
    pub r: f64,
    pub s: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Log { from: f64, to: f64, count: usize },
    Linear { from: f64, to: f64, count: usize },
    List(Vec<f64>),
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Log { from, to, count } => logspace(*from, *to, *count),
            Grid::Linear { from, to, count } => linspace(*from, *to, *count),
            Grid::List(v) => v.clone(),
        }
    }

    fn is_log(&self) -> bool {
        matches!(self, Grid::Log { .. })
    }
}

impl FromStr for Grid {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Grid> {
        let s = s.trim();
        let call = |name: &str| -> Option<Result<(f64, f64, usize)>> {
            let inner = s.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')')?;
            let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
            Some((|| {
                if parts.len() != 3 {
                    bail!("{name}(from, to, count) takes three arguments");
                }
                Ok((parts[0].parse()?, parts[1].parse()?, parts[2].parse()?))
            })())
        };
        if let Some(r) = call("logspace") {
            let (from, to, count) = r.with_context(|| format!("bad grid '{s}'"))?;
            if !(from > 0.0 && to >= from) || count == 0 {
                bail!("logspace needs 0 < from <= to and count >= 1, got '{s}'");
            }
            return Ok(Grid::Log { from, to, count });
        }
        if let Some(r) = call("linspace") {
            let (from, to, count) = r.with_context(|| format!("bad grid '{s}'"))?;
            if !(to >= from) || count == 0 {
                bail!("linspace needs from <= to and count >= 1, got '{s}'");
            }
            return Ok(Grid::Linear { from, to, count });
        }
        let v = parse_list(s)?;
        if v.is_empty() {
            bail!("empty grid");
        }
        Ok(Grid::List(v))
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Grid::Log { from, to, count } => write!(f, "logspace({from:e}, {to:e}, {count})"),
            Grid::Linear { from, to, count } => write!(f, "linspace({from:e}, {to:e}, {count})"),
            Grid::List(v) => write!(f, "{}", join(v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericsSection {
    pub grid_points: usize,
    pub grid_points_2d: usize,
    pub offset: f64,
    pub offset_2d: f64,
    pub offset_diagonal: f64,
    /// Offsets of the atom extrapolation; `None` picks them from the support.
    pub eps: Option<Vec<f64>>,
    pub times: Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepName {
    Psi,
    Phi,
    Lambda,
    T,
}

impl SweepName {
    fn parse(s: &str) -> Result<SweepName> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "psi" => SweepName::Psi,
            "phi" => SweepName::Phi,
            "lambda" => SweepName::Lambda,
            "t" => SweepName::T,
            other => return Err(Error::InvalidConfig(format!("unknown sweep parameter '{other}' (psi, phi, lambda, t)")).into()),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepName::Psi => "psi",
            SweepName::Phi => "phi",
            SweepName::Lambda => "lambda",
            SweepName::T => "t",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub param: SweepName,
    pub from: f64,
    pub to: f64,
    pub count: usize,
    pub log: bool,
}

impl SweepSection {
    pub fn values(&self) -> Vec<f64> {
        if self.log {
            logspace(self.from, self.to, self.count)
        } else {
            linspace(self.from, self.to, self.count)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSection {
    pub d: usize,
    pub seeds: usize,
    pub seed: u64,
    /// Euler step; `None` integrates the flow exactly.
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PencilSection {
    pub x: Complex64,
    pub y: Complex64,
    pub d: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub numerics: NumericsSection,
    pub sweep: Option<SweepSection>,
    pub simulate: SimulateSection,
    pub pencil: PencilSection,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ext = ExtractionOptions::default();
        RunConfig {
            model: ModelSection {
                activation: ActivationSpec::Named("relu-centered".into()),
                psi: 1.4,
                phi: 1.8,
                r: 1.0,
                s: 0.0,
                lambda: 0.01,
            },
            numerics: NumericsSection {
                grid_points: ext.grid_points,
                grid_points_2d: ext.grid_points_2d,
                offset: ext.offset,
                offset_2d: ext.offset_2d,
                offset_diagonal: ext.offset_diagonal,
                eps: None,
                times: Grid::Log {
                    from: 1e-2,
                    to: 1e2,
                    count: 200,
                },
            },
            sweep: None,
            simulate: SimulateSection {
                d: 200,
                seeds: 10,
                seed: 0,
                dt: None,
            },
            pencil: PencilSection {
                x: Complex64::new(1.0, 0.2),
                y: Complex64::new(2.0, 0.2),
                d: 400,
                seeds: 20,
            },
            output: OutputSection {
                directory: PathBuf::from("."),
                prefix: String::new(),
            },
        }
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    ("model", &["mu", "nu", "activation", "psi", "phi", "r", "s", "lambda"]),
    (
        "numerics",
        &["grid_points", "grid_points_2d", "offset", "offset_2d", "offset_diagonal", "eps", "times"],
    ),
    ("sweep", &["param", "range", "count", "log"]),
    ("simulate", &["d", "seeds", "seed", "dt"]),
    ("pencil", &["x", "y", "d", "seeds"]),
    ("output", &["directory", "prefix"]),
];

fn invalid(msg: String) -> anyhow::Error {
    Error::InvalidConfig(msg).into()
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|e| invalid(format!("bad number '{t}': {e}"))))
        .collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ")
}

fn parse_complex(s: &str) -> Result<Complex64> {
    let t = s.trim();
    if let Some((re, im)) = t.split_once(',') {
        return Ok(Complex64::new(
            re.trim().parse().map_err(|e| invalid(format!("bad complex '{s}': {e}")))?,
            im.trim().parse().map_err(|e| invalid(format!("bad complex '{s}': {e}")))?,
        ));
    }
    t.parse::<Complex64>().map_err(|e| invalid(format!("bad complex '{s}': {e}")))
}

pub fn complex_arg(s: &str) -> Result<Complex64> {
    parse_complex(s)
}

fn fmt_complex(z: Complex64) -> String {
    format!("{:e}, {:e}", z.re, z.im)
}

struct Section<'a> {
    name: &'static str,
    props: Option<&'a ini::Properties>,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.props.and_then(|p| p.get(key)).map(str::trim)
    }

    fn get<T: FromStr>(&self, key: &str, into: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.raw(key) {
            *into = v.parse().map_err(|e| invalid(format!("{}.{key} = '{v}': {e}", self.name)))?;
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parses INI text on top of the defaults.
    pub fn from_ini(ini: &Ini) -> Result<RunConfig> {
        for (sec, props) in ini.iter() {
            let Some(sec) = sec else {
                if let Some((k, _)) = props.iter().next() {
                    bail!(invalid(format!("key '{k}' outside of any section")));
                }
                continue;
            };
            let Some((_, keys)) = KNOWN.iter().find(|(s, _)| *s == sec) else {
                bail!(invalid(format!("unknown section [{sec}]")));
            };
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    bail!(invalid(format!("unknown key '{k}' in [{sec}]")));
                }
            }
        }
        let section = |name: &'static str| Section {
            name,
            props: ini.section(Some(name)),
        };
        let mut cfg = RunConfig::default();

        let m = section("model");
        let (mu, nu, act) = (m.raw("mu"), m.raw("nu"), m.raw("activation"));
        match (mu, nu, act) {
            (None, None, None) => {}
            (None, None, Some(a)) => cfg.model.activation = ActivationSpec::Named(a.to_string()),
            (Some(_), Some(_), None) => {
                let (mut mu, mut nu) = (0.0, 0.0);
                m.get("mu", &mut mu)?;
                m.get("nu", &mut nu)?;
                cfg.model.activation = ActivationSpec::Coefficients { mu, nu };
            }
            (_, _, Some(_)) => bail!(invalid("give either mu and nu or an activation name, not both".into())),
            _ => bail!(invalid("mu and nu must be given together".into())),
        }
        m.get("psi", &mut cfg.model.psi)?;
        m.get("phi", &mut cfg.model.phi)?;
        m.get("r", &mut cfg.model.r)?;
        m.get("s", &mut cfg.model.s)?;
        m.get("lambda", &mut cfg.model.lambda)?;

        let n = section("numerics");
        n.get("grid_points", &mut cfg.numerics.grid_points)?;
        n.get("grid_points_2d", &mut cfg.numerics.grid_points_2d)?;
        n.get("offset", &mut cfg.numerics.offset)?;
        n.get("offset_2d", &mut cfg.numerics.offset_2d)?;
        n.get("offset_diagonal", &mut cfg.numerics.offset_diagonal)?;
        if let Some(e) = n.raw("eps") {
            cfg.numerics.eps = if e.eq_ignore_ascii_case("auto") { None } else { Some(parse_list(e)?) };
        }
        if let Some(t) = n.raw("times") {
            cfg.numerics.times = t.parse().map_err(|e: anyhow::Error| invalid(format!("numerics.times: {e:#}")))?;
        }

        let s = section("sweep");
        if s.props.is_some() {
            let param = SweepName::parse(s.raw("param").ok_or_else(|| invalid("sweep.param is required".into()))?)?;
            let range = parse_list(s.raw("range").ok_or_else(|| invalid("sweep.range is required".into()))?)?;
            if range.len() != 2 {
                bail!(invalid("sweep.range takes two values: from, to".into()));
            }
            let mut sw = SweepSection {
                param,
                from: range[0],
                to: range[1],
                count: 30,
                log: false,
            };
            s.get("count", &mut sw.count)?;
            s.get("log", &mut sw.log)?;
            cfg.sweep = Some(sw);
        }

        let s = section("simulate");
        s.get("d", &mut cfg.simulate.d)?;
        s.get("seeds", &mut cfg.simulate.seeds)?;
        s.get("seed", &mut cfg.simulate.seed)?;
        if let Some(dt) = s.raw("dt") {
            cfg.simulate.dt = if dt.eq_ignore_ascii_case("exact") {
                None
            } else {
                Some(dt.parse().map_err(|e| invalid(format!("simulate.dt = '{dt}': {e}")))?)
            };
        }

        let p = section("pencil");
        if let Some(v) = p.raw("x") {
            cfg.pencil.x = parse_complex(v)?;
        }
        if let Some(v) = p.raw("y") {
            cfg.pencil.y = parse_complex(v)?;
        }
        p.get("d", &mut cfg.pencil.d)?;
        p.get("seeds", &mut cfg.pencil.seeds)?;

        let o = section("output");
        if let Some(v) = o.raw("directory") {
            cfg.output.directory = PathBuf::from(v);
        }
        if let Some(v) = o.raw("prefix") {
            cfg.output.prefix = v.to_string();
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut ini = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ini::load_from_str(&text).map_err(|e| invalid(format!("{}: {e}", p.display())))?
            }
            None => Ini::new(),
        };
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| invalid(format!("override '{o}' is not section.key=value")))?;
            let (sec, key) = key
                .trim()
                .split_once('.')
                .ok_or_else(|| invalid(format!("override '{o}' is not section.key=value")))?;
            // Switching between coefficients and a named activation drops
            // the other form.
            if sec == "model" {
                let drop: &[&str] = match key {
                    "mu" | "nu" => &["activation"],
                    "activation" => &["mu", "nu"],
                    _ => &[],
                };
                if let Some(props) = ini.section_mut(Some("model")) {
                    for k in drop {
                        props.remove(*k);
                    }
                }
            }
            ini.with_section(Some(sec)).set(key, value.trim());
        }
        RunConfig::from_ini(&ini)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        for (name, v) in [("psi", m.psi), ("phi", m.phi)] {
            if !(v > 0.0 && v.is_finite()) {
                bail!(invalid(format!("model.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("r", m.r), ("s", m.s), ("lambda", m.lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                bail!(invalid(format!("model.{name} must be nonnegative, got {v}")));
            }
        }
        if let ActivationSpec::Named(name) = &m.activation {
            Activation::by_name(name)?;
        }
        let n = &self.numerics;
        if n.grid_points < 3 || n.grid_points_2d < 3 {
            bail!(invalid("grid sizes must be at least 3".into()));
        }
        for (name, v) in [("offset", n.offset), ("offset_2d", n.offset_2d), ("offset_diagonal", n.offset_diagonal)] {
            if !(v > 0.0) {
                bail!(invalid(format!("numerics.{name} must be positive, got {v}")));
            }
        }
        if let Some(eps) = &n.eps {
            if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0)) {
                bail!(invalid("numerics.eps must list positive offsets".into()));
            }
        }
        if n.times.values().iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            bail!(invalid("times must be finite and nonnegative".into()));
        }
        if let Some(s) = &self.sweep {
            if s.count == 0 || !(s.to >= s.from) || (s.log && !(s.from > 0.0)) {
                bail!(invalid(format!("bad sweep range {}..{} ({} points)", s.from, s.to, s.count)));
            }
        }
        if self.simulate.seeds == 0 || self.pencil.seeds == 0 {
            bail!(invalid("seed counts must be positive".into()));
        }
        if let Some(dt) = self.simulate.dt {
            if !(dt > 0.0) {
                bail!(invalid(format!("simulate.dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }

    /// The activation used by the simulator.
    pub fn activation(&self) -> Result<Activation> {
        Ok(match &self.model.activation {
            ActivationSpec::Coefficients { mu, nu } => Activation::hermite(*mu, *nu),
            ActivationSpec::Named(name) => Activation::by_name(name)?,
        })
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let (mu, nu) = match &self.model.activation {
            ActivationSpec::Coefficients { mu, nu } => (*mu, *nu),
            ActivationSpec::Named(name) => {
                let h = hermite_coefficients(&Activation::by_name(name)?, rfgf::model::DEFAULT_HERMITE_NODES)?;
                (h.mu, h.nu)
            }
        };
        let m = &self.model;
        let cfg = ModelConfig::new(mu, nu, m.psi, m.phi, m.r, m.s, m.lambda)?;
        if cfg.is_trivial_activation() && m.r == 0.0 && m.s == 0.0 {
            bail!(invalid("degenerate model: mu = nu = r = s = 0".into()));
        }
        Ok(cfg)
    }

    pub fn extraction(&self) -> ExtractionOptions {
        let n = &self.numerics;
        ExtractionOptions {
            grid_points: n.grid_points,
            grid_points_2d: n.grid_points_2d,
            offset: n.offset,
            offset_2d: n.offset_2d,
            offset_diagonal: n.offset_diagonal,
            eps: n.eps.clone(),
            ..ExtractionOptions::default()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        match &self.sweep {
            Some(s) if s.param == SweepName::T => s.values(),
            _ => self.numerics.times.values(),
        }
    }

    pub fn times_are_log(&self) -> bool {
        match &self.sweep {
            Some(s) if s.param == SweepName::T => s.log,
            _ => self.numerics.times.is_log(),
        }
    }

    /// Canonical INI text; parsing it back yields an identical config.
    pub fn to_ini_string(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        s.push_str("[model]\n");
        match &m.activation {
            ActivationSpec::Coefficients { mu, nu } => {
                let _ = writeln!(s, "mu = {mu:e}\nnu = {nu:e}");
            }
            ActivationSpec::Named(n) => {
                let _ = writeln!(s, "activation = {n}");
            }
        }
        let _ = writeln!(
            s,
            "psi = {:e}\nphi = {:e}\nr = {:e}\ns = {:e}\nlambda = {:e}\n",
            m.psi, m.phi, m.r, m.s, m.lambda
        );
        let n = &self.numerics;
        let _ = writeln!(
            s,
            "[numerics]\ngrid_points = {}\ngrid_points_2d = {}\noffset = {:e}\noffset_2d = {:e}\noffset_diagonal = {:e}\neps = {}\ntimes = {}\n",
            n.grid_points,
            n.grid_points_2d,
            n.offset,
            n.offset_2d,
            n.offset_diagonal,
            n.eps.as_deref().map(join).unwrap_or_else(|| "auto".into()),
            n.times
        );
        if let Some(sw) = &self.sweep {
            let _ = writeln!(
                s,
                "[sweep]\nparam = {}\nrange = {:e}, {:e}\ncount = {}\nlog = {}\n",
                sw.param.name(),
                sw.from,
                sw.to,
                sw.count,
                sw.log
            );
        }
        let sim = &self.simulate;
        let _ = writeln!(
            s,
            "[simulate]\nd = {}\nseeds = {}\nseed = {}\ndt = {}\n",
            sim.d,
            sim.seeds,
            sim.seed,
            sim.dt.map(|v| format!("{v:e}")).unwrap_or_else(|| "exact".into())
        );
        let p = &self.pencil;
        let _ = writeln!(
            s,
            "[pencil]\nx = {}\ny = {}\nd = {}\nseeds = {}\n",
            fmt_complex(p.x),
            fmt_complex(p.y),
            p.d,
            p.seeds
        );
        let _ = writeln!(
            s,
            "[output]\ndirectory = {}\nprefix = {}",
            self.output.directory.display(),
            self.output.prefix
        );
        s
    }
}
