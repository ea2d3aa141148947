//! Flat key-value run configuration.
//!
//! ```text
//! # comment
//! section.key = value        # trailing comments are allowed
//! ```
//!
//! Keys (defaults in brackets):
//!
//! | key | value |
//! |-----|-------|
//! | `kernel.lambda1`, `kernel.lambda2` | required exponents |
//! | `kernel.truncation` | optional positive integer `n`, restricts Φ to `(1/n, n)²` |
//! | `daughter.nu`, `daughter.k0` | required |
//! | `grid.x_min`, `grid.x_max`, `grid.n_cells` | [1e-4], [10], [128] |
//! | `init.kind` | `monodisperse`, `exponential` [default] or `table` |
//! | `init.size`, `init.mass`, `init.mean`, `init.path` | [1], [1], [1], – |
//! | `time.t_end` | [1] |
//! | `time.snapshots` | interval count [10] or comma-separated times |
//! | `time.rel_tol`, `time.abs_tol` | [1e-8], [1e-12] |
//! | `time.integrator` | `rk23` [default] or `picard` |
//! | `picard.max_iter`, `picard.tol` | [100], [1e-10] |
//! | `output.dir` | [`out`] |
//! | `output.moments` | comma-separated orders [k0, 1, 1+k0] |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::daughter::DaughterLaw;
use crate::error::{ConfigError, Error, Result};
use crate::grid::{InitialCondition, SizeGrid};
use crate::integrate::Tolerances;
use crate::kernel::KernelSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Snapshots {
    /// Uniformly spaced, this many intervals.
    Count(usize),
    /// Explicit times; 0 and `t_end` are always added.
    Times(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk23,
    Picard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSpec {
    pub t_end: f64,
    pub snapshots: Snapshots,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardSpec {
    pub max_iter: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub moments: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub kernel: KernelSpec,
    pub law: DaughterLaw,
    pub grid: GridSpec,
    pub init: InitialCondition,
    pub time: TimeSpec,
    pub picard: PicardSpec,
    pub output: OutputSpec,
}

const KEYS: &[&str] = &[
    "kernel.lambda1",
    "kernel.lambda2",
    "kernel.truncation",
    "daughter.nu",
    "daughter.k0",
    "grid.x_min",
    "grid.x_max",
    "grid.n_cells",
    "init.kind",
    "init.size",
    "init.mass",
    "init.mean",
    "init.path",
    "time.t_end",
    "time.snapshots",
    "time.rel_tol",
    "time.abs_tol",
    "time.integrator",
    "picard.max_iter",
    "picard.tol",
    "output.dir",
    "output.moments",
];

struct Entries {
    values: BTreeMap<String, (String, usize)>,
}

impl Entries {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let e = ConfigError::new(key, message);
        match self.values.get(key) {
            Some((_, line)) => e.at(*line),
            None => e,
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn float(&self, key: &str) -> std::result::Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(self.err(key, format!("expected a finite number, got `{v}`"))),
            },
        }
    }

    fn required_float(&self, key: &str) -> std::result::Result<f64, ConfigError> {
        self.float(key)?
            .ok_or_else(|| ConfigError::new(key, "required key is missing"))
    }

    fn integer(&self, key: &str) -> std::result::Result<Option<usize>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<usize>()
                .map(Some)
                .map_err(|_| self.err(key, format!("expected a non-negative integer, got `{v}`"))),
        }
    }

    fn float_list(&self, key: &str) -> std::result::Result<Option<Vec<f64>>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    let s = s.trim();
                    s.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| self.err(key, format!("expected comma-separated numbers, got `{s}`")))
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some),
        }
    }
}

impl SimConfig {
    /// Reads and validates a configuration file. Relative `init.path` and
    /// `output.dir` values are resolved against the file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::path::absolute(&base).map_err(|e| Error::io(&base, e))?;
        Ok(Self::parse_with_base(&text, Some(&base))?)
    }

    /// Parses configuration text; relative paths are kept as written.
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        Self::parse_with_base(text, None)
    }

    fn parse_with_base(text: &str, base: Option<&Path>) -> std::result::Result<Self, ConfigError> {
        let mut values = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError::new("", format!("line {line_no}: expected `section.key = value`, got `{line}`"))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::new(key, "unknown key").at(line_no));
            }
            if value.is_empty() {
                return Err(ConfigError::new(key, "missing value").at(line_no));
            }
            if values.insert(key.to_string(), (value.to_string(), line_no)).is_some() {
                return Err(ConfigError::new(key, "key given twice").at(line_no));
            }
        }
        let e = Entries { values };
        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };

        // daughter law
        let nu = e.required_float("daughter.nu")?;
        if !(nu > -2.0 && nu <= 0.0) {
            return Err(e.err(
                "daughter.nu",
                format!("nu = {nu} violates the power-law hypothesis nu ∈ (-2, 0]"),
            ));
        }
        let k0 = e.required_float("daughter.k0")?;
        if !(k0 > 0.0 && k0 < 1.0) {
            return Err(e.err("daughter.k0", format!("k0 = {k0} violates the hypothesis k0 ∈ (0, 1)")));
        }
        if !(k0 > -nu - 1.0) {
            return Err(e.err(
                "daughter.k0",
                format!("k0 = {k0} violates the non-integrability hypothesis k0 > |nu| - 1 = {}", -nu - 1.0),
            ));
        }
        let law = DaughterLaw::new(nu, k0).map_err(|err| e.err("daughter.k0", err.to_string()))?;

        // kernel
        let l1 = e.required_float("kernel.lambda1")?;
        let l2 = e.required_float("kernel.lambda2")?;
        for (key, v) in [("kernel.lambda1", l1), ("kernel.lambda2", l2)] {
            if v > 1.0 {
                return Err(e.err(key, format!("{v} violates the kernel hypothesis lambda1 <= lambda2 <= 1")));
            }
            if v < -2.0 {
                return Err(e.err(key, format!("{v} is below the supported exponent range [-2, 1]")));
            }
        }
        let mut kernel = KernelSpec::new(l1, l2).map_err(|err| e.err("kernel.lambda1", err.to_string()))?;
        if let Some(n) = e.integer("kernel.truncation")? {
            let n = u32::try_from(n)
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| e.err("kernel.truncation", "truncation index must be a positive integer"))?;
            kernel = kernel.truncated(n).expect("positive truncation");
        }

        // grid
        let grid = GridSpec {
            x_min: e.float("grid.x_min")?.unwrap_or(1e-4),
            x_max: e.float("grid.x_max")?.unwrap_or(10.0),
            n_cells: e.integer("grid.n_cells")?.unwrap_or(128),
        };
        if !(grid.x_min > 0.0) {
            return Err(e.err("grid.x_min", format!("must be positive, got {}", grid.x_min)));
        }
        if !(grid.x_max > grid.x_min) {
            return Err(e.err("grid.x_max", format!("must exceed grid.x_min = {}, got {}", grid.x_min, grid.x_max)));
        }
        if grid.n_cells < 2 {
            return Err(e.err("grid.n_cells", format!("need at least 2 cells, got {}", grid.n_cells)));
        }

        // initial data
        let positive = |key: &str, default: f64| -> std::result::Result<f64, ConfigError> {
            let v = e.float(key)?.unwrap_or(default);
            if v > 0.0 {
                Ok(v)
            } else {
                Err(e.err(key, format!("must be positive, got {v}")))
            }
        };
        let kind = e.raw("init.kind").unwrap_or("exponential");
        let allowed: &[&str] = match kind {
            "monodisperse" => &["init.kind", "init.size", "init.mass"],
            "exponential" => &["init.kind", "init.mean", "init.mass"],
            "table" => &["init.kind", "init.path", "init.mass"],
            other => {
                return Err(e.err(
                    "init.kind",
                    format!("expected `monodisperse`, `exponential` or `table`, got `{other}`"),
                ))
            }
        };
        for key in ["init.size", "init.mean", "init.path"] {
            if e.raw(key).is_some() && !allowed.contains(&key) {
                return Err(e.err(key, format!("not used by init.kind = {kind}")));
            }
        }
        let init = match kind {
            "monodisperse" => {
                let size = positive("init.size", 1.0)?;
                if size < grid.x_min || size > grid.x_max {
                    return Err(e.err(
                        "init.size",
                        format!("size {size} lies outside the grid [{}, {}]", grid.x_min, grid.x_max),
                    ));
                }
                InitialCondition::Monodisperse {
                    size,
                    mass: positive("init.mass", 1.0)?,
                }
            }
            "exponential" => InitialCondition::Exponential {
                mean: positive("init.mean", 1.0)?,
                mass: positive("init.mass", 1.0)?,
            },
            _ => InitialCondition::Table {
                path: resolve(
                    e.raw("init.path")
                        .ok_or_else(|| e.err("init.path", "required when init.kind = table"))?,
                ),
                mass: match e.raw("init.mass") {
                    Some(_) => Some(positive("init.mass", 1.0)?),
                    None => None,
                },
            },
        };

        // time
        let t_end = e.float("time.t_end")?.unwrap_or(1.0);
        if !(t_end >= 0.0) {
            return Err(e.err("time.t_end", format!("must be non-negative, got {t_end}")));
        }
        let snapshots = match e.raw("time.snapshots") {
            None => Snapshots::Count(10),
            Some(v) if !v.contains(',') && v.parse::<usize>().is_ok() => {
                let n = v.parse::<usize>().expect("checked");
                if n == 0 {
                    return Err(e.err("time.snapshots", "interval count must be positive"));
                }
                Snapshots::Count(n)
            }
            Some(_) => {
                let times = e.float_list("time.snapshots")?.expect("present");
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(e.err("time.snapshots", "snapshot times must be strictly increasing"));
                }
                if times.iter().any(|&t| t < 0.0 || t > t_end) {
                    return Err(e.err("time.snapshots", format!("snapshot times must lie in [0, t_end = {t_end}]")));
                }
                Snapshots::Times(times)
            }
        };
        let rel_tol = positive("time.rel_tol", 1e-8)?;
        let abs_tol = positive("time.abs_tol", 1e-12)?;
        let integrator = match e.raw("time.integrator").unwrap_or("rk23") {
            "rk23" => Integrator::Rk23,
            "picard" => Integrator::Picard,
            other => return Err(e.err("time.integrator", format!("expected `rk23` or `picard`, got `{other}`"))),
        };
        if integrator == Integrator::Picard && kernel.truncation().is_none() {
            return Err(e.err(
                "time.integrator",
                "the Picard mode needs bounded rates: set kernel.truncation",
            ));
        }
        let picard = PicardSpec {
            max_iter: e.integer("picard.max_iter")?.unwrap_or(100),
            tol: positive("picard.tol", 1e-10)?,
        };
        if picard.max_iter == 0 {
            return Err(e.err("picard.max_iter", "must be positive"));
        }

        // output
        let moments = e
            .float_list("output.moments")?
            .unwrap_or_else(|| vec![k0, 1.0, 1.0 + k0]);
        if let Some(&k) = moments.iter().find(|&&k| !(k > -nu - 1.0)) {
            return Err(e.err(
                "output.moments",
                format!("moment order {k} violates k > |nu| - 1 = {} (the moment diverges)", -nu - 1.0),
            ));
        }
        let output = OutputSpec {
            dir: resolve(e.raw("output.dir").unwrap_or("out")),
            moments,
        };

        Ok(SimConfig {
            kernel,
            law,
            grid,
            init,
            time: TimeSpec {
                t_end,
                snapshots,
                rel_tol,
                abs_tol,
                integrator,
            },
            picard,
            output,
        })
    }

    pub fn build_grid(&self) -> Result<SizeGrid> {
        SizeGrid::new(self.grid.x_min, self.grid.x_max, self.grid.n_cells)
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            rel_tol: self.time.rel_tol,
            abs_tol: self.time.abs_tol,
        }
    }

    /// Sorted output times, always including 0 and `t_end`.
    pub fn snapshot_times(&self) -> Vec<f64> {
        let t_end = self.time.t_end;
        if t_end == 0.0 {
            return vec![0.0];
        }
        let mut times = match &self.time.snapshots {
            Snapshots::Count(n) => (0..=*n).map(|i| t_end * i as f64 / *n as f64).collect(),
            Snapshots::Times(ts) => {
                let mut v = vec![0.0];
                v.extend(ts.iter().copied());
                v.push(t_end);
                v
            }
        };
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    }

    /// Resolved key-value pairs, in canonical order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let f = |x: f64| format!("{x:?}");
        let list = |v: &[f64]| v.iter().map(|x| f(*x)).collect::<Vec<_>>().join(", ");
        let mut out = vec![
            ("kernel.lambda1", f(self.kernel.lambda1())),
            ("kernel.lambda2", f(self.kernel.lambda2())),
        ];
        if let Some(n) = self.kernel.truncation() {
            out.push(("kernel.truncation", n.to_string()));
        }
        out.push(("daughter.nu", f(self.law.nu())));
        out.push(("daughter.k0", f(self.law.k0())));
        out.push(("grid.x_min", f(self.grid.x_min)));
        out.push(("grid.x_max", f(self.grid.x_max)));
        out.push(("grid.n_cells", self.grid.n_cells.to_string()));
        match &self.init {
            InitialCondition::Monodisperse { size, mass } => {
                out.push(("init.kind", "monodisperse".into()));
                out.push(("init.size", f(*size)));
                out.push(("init.mass", f(*mass)));
            }
            InitialCondition::Exponential { mean, mass } => {
                out.push(("init.kind", "exponential".into()));
                out.push(("init.mean", f(*mean)));
                out.push(("init.mass", f(*mass)));
            }
            InitialCondition::Table { path, mass } => {
                out.push(("init.kind", "table".into()));
                out.push(("init.path", path.display().to_string()));
                if let Some(m) = mass {
                    out.push(("init.mass", f(*m)));
                }
            }
        }
        out.push(("time.t_end", f(self.time.t_end)));
        out.push((
            "time.snapshots",
            match &self.time.snapshots {
                Snapshots::Count(n) => n.to_string(),
                Snapshots::Times(ts) if ts.len() == 1 => format!("{},", f(ts[0])),
                Snapshots::Times(ts) => list(ts),
            },
        ));
        out.push(("time.rel_tol", f(self.time.rel_tol)));
        out.push(("time.abs_tol", f(self.time.abs_tol)));
        out.push((
            "time.integrator",
            match self.time.integrator {
                Integrator::Rk23 => "rk23".into(),
                Integrator::Picard => "picard".into(),
            },
        ));
        out.push(("picard.max_iter", self.picard.max_iter.to_string()));
        out.push(("picard.tol", f(self.picard.tol)));
        out.push(("output.dir", self.output.dir.display().to_string()));
        out.push(("output.moments", list(&self.output.moments)));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Serializes to the configuration format; parsing the result gives back
    /// an equal configuration.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Same configuration on a grid starting at `x_min`, with the cell count
    /// adjusted so the edge ratio stays (as nearly as possible) unchanged.
    pub fn with_x_min(&self, x_min: f64) -> Self {
        let mut c = self.clone();
        let per_cell = (self.grid.x_max / self.grid.x_min).ln() / self.grid.n_cells as f64;
        c.grid.x_min = x_min;
        c.grid.n_cells = ((self.grid.x_max / x_min).ln() / per_cell).round().max(2.0) as usize;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "kernel.lambda1 = 0.6\nkernel.lambda2 = 0.6\ndaughter.nu = -1.2\ndaughter.k0 = 0.5\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let c = SimConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.grid, GridSpec { x_min: 1e-4, x_max: 10.0, n_cells: 128 });
        assert_eq!(c.init, InitialCondition::Exponential { mean: 1.0, mass: 1.0 });
        assert_eq!(c.time.t_end, 1.0);
        assert_eq!(c.snapshot_times().len(), 11);
        assert_eq!(c.output.moments, vec![0.5, 1.0, 1.5]);
        assert_eq!(c.time.integrator, Integrator::Rk23);
    }

    #[test]
    fn nu_out_of_range_cites_hypothesis() {
        let text = MINIMAL.replace("daughter.nu = -1.2", "daughter.nu = -2.5");
        let err = SimConfig::parse(&text).unwrap_err();
        assert_eq!(err.key, "daughter.nu");
        assert_eq!(err.line, Some(3));
        assert!(err.message.contains("(-2, 0]"), "{err}");
    }

    #[test]
    fn k0_below_threshold_cites_hypothesis() {
        let text = MINIMAL
            .replace("daughter.nu = -1.2", "daughter.nu = -1.5")
            .replace("daughter.k0 = 0.5", "daughter.k0 = 0.4");
        let err = SimConfig::parse(&text).unwrap_err();
        assert_eq!(err.key, "daughter.k0");
        assert!(err.message.contains("k0 > |nu| - 1"), "{err}");
        assert!(err.to_string().starts_with("line 4:"));
    }

    #[test]
    fn unknown_key_and_type_errors_have_lines() {
        let err = SimConfig::parse(&format!("{MINIMAL}grid.cells = 4\n")).unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("grid.cells", Some(5)));
        let err = SimConfig::parse(&format!("{MINIMAL}\n# note\ngrid.n_cells = many\n")).unwrap_err();
        assert_eq!((err.key.as_str(), err.line), ("grid.n_cells", Some(7)));
        let err = SimConfig::parse("kernel.lambda1 = 0.5\n").unwrap_err();
        assert_eq!(err.key, "daughter.nu");
        let err = SimConfig::parse(&format!("{MINIMAL}kernel.lambda2 = 0.7\n")).unwrap_err();
        assert!(err.message.contains("twice"));
    }

    #[test]
    fn kernel_and_moment_hypotheses() {
        let err = SimConfig::parse(&MINIMAL.replace("kernel.lambda2 = 0.6", "kernel.lambda2 = 1.2")).unwrap_err();
        assert!(err.message.contains("lambda2 <= 1"));
        let err = SimConfig::parse(&format!("{MINIMAL}output.moments = 0.1, 1\n")).unwrap_err();
        assert!(err.message.contains("k > |nu| - 1"));
        let err = SimConfig::parse(&format!("{MINIMAL}time.integrator = picard\n")).unwrap_err();
        assert_eq!(err.key, "time.integrator");
        let err = SimConfig::parse(&format!("{MINIMAL}time.snapshots = 0.5, 2\n")).unwrap_err();
        assert_eq!(err.key, "time.snapshots");
    }

    #[test]
    fn round_trip() {
        let texts = [
            MINIMAL.to_string(),
            format!(
                "{MINIMAL}kernel.truncation = 4\ninit.kind = monodisperse\ninit.size = 1\n\
                 time.snapshots = 0.1, 0.25\ntime.integrator = picard\noutput.moments = 0.7, 1.3\n"
            ),
            format!("{MINIMAL}init.kind = table\ninit.path = data/in.csv\ntime.snapshots = 0.3,\n"),
        ];
        for t in texts {
            let a = SimConfig::parse(&t).unwrap();
            let b = SimConfig::parse(&a.to_config_string()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn snapshot_lists_include_endpoints() {
        let c = SimConfig::parse(&format!("{MINIMAL}time.t_end = 2\ntime.snapshots = 0.5, 1\n")).unwrap();
        assert_eq!(c.snapshot_times(), vec![0.0, 0.5, 1.0, 2.0]);
        let c = SimConfig::parse(&format!("{MINIMAL}time.t_end = 0\n")).unwrap();
        assert_eq!(c.snapshot_times(), vec![0.0]);
    }

    #[test]
    fn x_min_sweep_keeps_ratio() {
        let c = SimConfig::parse(&format!("{MINIMAL}grid.x_min = 1e-2\ngrid.x_max = 10\ngrid.n_cells = 60\n")).unwrap();
        let d = c.with_x_min(1e-4);
        assert_eq!(d.grid.n_cells, 100);
    }
}
