//! Geometric size grid, discrete state, and initial-data ingestion.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{ConfigError, Error, Result};
use crate::power::pow;
use crate::quadrature::gauss_kronrod;

/// Geometric partition of `[x_min, x_max]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeGrid {
    edges: Vec<f64>,
    reps: Vec<f64>,
}

impl SizeGrid {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_min > 0.0 && x_min.is_finite()) {
            return Err(ConfigError::new("grid.x_min", format!("must be positive, got {x_min}")).into());
        }
        if !(x_max > x_min && x_max.is_finite()) {
            return Err(ConfigError::new(
                "grid.x_max",
                format!("must exceed grid.x_min = {x_min}, got {x_max}"),
            )
            .into());
        }
        if n_cells < 2 {
            return Err(ConfigError::new("grid.n_cells", format!("need at least 2 cells, got {n_cells}")).into());
        }
        let log_span = (x_max / x_min).ln();
        let n = n_cells as f64;
        let mut edges: Vec<f64> = (0..=n_cells)
            .map(|i| x_min * (log_span * i as f64 / n).exp())
            .collect();
        edges[0] = x_min;
        edges[n_cells] = x_max;
        let reps = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        Ok(Self { edges, reps })
    }

    pub fn n_cells(&self) -> usize {
        self.reps.len()
    }

    pub fn x_min(&self) -> f64 {
        self.edges[0]
    }

    pub fn x_max(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Representative sizes, the geometric means of the cell edges.
    pub fn reps(&self) -> &[f64] {
        &self.reps
    }

    /// Constant edge ratio `edges[i+1] / edges[i]`.
    pub fn ratio(&self) -> f64 {
        (self.x_max() / self.x_min()).powf(1.0 / self.n_cells() as f64)
    }

    /// Index of the cell containing `x`, if any (cells are `[lo, hi)`, the last
    /// one closed).
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.x_min() && x <= self.x_max()) {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= x);
        Some(i.saturating_sub(1).min(self.n_cells() - 1))
    }

    /// `max(x^k0, x^(1+k0))` at every representative size.
    pub fn uniqueness_weights(&self, k0: f64) -> Vec<f64> {
        self.reps
            .iter()
            .map(|&r| pow(r, k0).max(pow(r, 1.0 + k0)))
            .collect()
    }

    /// `Σ_i reps[i]^k contents[i]`.
    pub fn moment(&self, state: &State, k: f64) -> f64 {
        self.moment_of(&state.contents, k)
    }

    pub fn moment_of(&self, contents: &[f64], k: f64) -> f64 {
        self.reps
            .iter()
            .zip(contents)
            .map(|(&r, &c)| pow(r, k) * c)
            .sum()
    }

    /// `Σ_{reps[i] >= x} reps[i]^k contents[i]`.
    pub fn tail_moment(&self, state: &State, k: f64, x: f64) -> f64 {
        let start = self.reps.partition_point(|&r| r < x);
        self.reps[start..]
            .iter()
            .zip(&state.contents[start..])
            .map(|(&r, &c)| pow(r, k) * c)
            .sum()
    }
}

/// Discrete solution at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct State {
    pub time: f64,
    /// Particle number in each cell.
    pub contents: Vec<f64>,
    /// Mass that has left the grid below `x_min`.
    pub dust_mass: f64,
    /// Mass added back by clipping round-off negatives to zero.
    pub clip_mass: f64,
}

impl State {
    pub fn zeros(n_cells: usize) -> Self {
        Self {
            time: 0.0,
            contents: vec![0.0; n_cells],
            dust_mass: 0.0,
            clip_mass: 0.0,
        }
    }

    pub fn from_contents(contents: Vec<f64>) -> Self {
        Self {
            time: 0.0,
            contents,
            dust_mass: 0.0,
            clip_mass: 0.0,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.contents.len()
    }

    /// Multiplies every cell content and the dust mass by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            time: self.time,
            contents: self.contents.iter().map(|c| c * factor).collect(),
            dust_mass: self.dust_mass * factor,
            clip_mass: self.clip_mass * factor,
        }
    }
}

/// Initial size distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// All mass at one size, placed in the enclosing cell.
    Monodisperse { size: f64, mass: f64 },
    /// Density `(mass/mean²) exp(-x/mean)`, whose first moment on `(0, ∞)`
    /// is `mass`.
    Exponential { mean: f64, mass: f64 },
    /// Tabulated density read from a CSV file. Either two columns
    /// `(size, density)`, interpolated linearly and zero outside the table, or
    /// a snapshot file written by this crate, read as a piecewise-constant
    /// density over its recorded cells.
    Table { path: PathBuf, mass: Option<f64> },
}

/// Relative accuracy of the per-cell integrals of a density.
pub const SAMPLING_TOLERANCE: f64 = 1e-12;

impl InitialCondition {
    /// Discretizes the initial data on `grid`.
    ///
    /// Cell contents are `∫_cell u_in dx`. When a target mass is given (always
    /// for the analytic kinds) the contents are then rescaled so that the grid
    /// mass `Σ reps[i] contents[i]` equals it exactly.
    pub fn discretize(&self, grid: &SizeGrid) -> Result<State> {
        let (contents, mass) = match self {
            InitialCondition::Monodisperse { size, mass } => {
                let i = grid.cell_of(*size).ok_or_else(|| {
                    ConfigError::new(
                        "init.size",
                        format!("size {size} lies outside the grid [{}, {}]", grid.x_min(), grid.x_max()),
                    )
                })?;
                let mut c = vec![0.0; grid.n_cells()];
                c[i] = mass / grid.reps()[i];
                (c, Some(*mass))
            }
            InitialCondition::Exponential { mean, mass } => {
                let amplitude = mass / (mean * mean);
                let density = |x: f64| amplitude * (-x / mean).exp();
                let c = sample_density(grid, density)?;
                (c, Some(*mass))
            }
            InitialCondition::Table { path, mass } => (read_table(grid, path)?, *mass),
        };
        let mut state = State::from_contents(contents);
        if let Some(target) = mass {
            let grid_mass = grid.moment(&state, 1.0);
            if !(grid_mass > 0.0) {
                return Err(ConfigError::new("init", "initial data has no mass on the grid").into());
            }
            let factor = target / grid_mass;
            for c in &mut state.contents {
                *c *= factor;
            }
        }
        Ok(state)
    }
}

/// Per-cell integrals of `density` by adaptive quadrature.
pub fn sample_density<F: Fn(f64) -> f64>(grid: &SizeGrid, density: F) -> Result<Vec<f64>> {
    grid.edges()
        .windows(2)
        .map(|w| gauss_kronrod(&density, w[0], w[1], SAMPLING_TOLERANCE, 0.0))
        .collect()
}

fn read_table(grid: &SizeGrid, path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::format(path, e.to_string()))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::format(path, "empty table"));
    }
    let header_like = rows[0].iter().any(|f| f.parse::<f64>().is_err());
    let header = if header_like { Some(rows.remove(0)) } else { None };
    let col = |name: &str| header.as_ref().and_then(|h| h.iter().position(|f| f == name));
    let parse = |row: &[String], i: usize, line: usize| -> Result<f64> {
        row.get(i)
            .and_then(|f| f.parse::<f64>().ok())
            .ok_or_else(|| Error::format(path, format!("row {line}: expected a number in column {}", i + 1)))
    };

    if let (Some(lo), Some(hi), Some(d)) = (col("edge_lo"), col("edge_hi"), col("density")) {
        // snapshot file: piecewise-constant density on recorded cells
        let mut cells = Vec::with_capacity(rows.len());
        for (n, row) in rows.iter().enumerate() {
            cells.push((parse(row, lo, n + 1)?, parse(row, hi, n + 1)?, parse(row, d, n + 1)?));
        }
        return Ok(grid
            .edges()
            .windows(2)
            .map(|w| {
                cells
                    .iter()
                    .map(|&(a, b, dens)| {
                        if a == w[0] && b == w[1] {
                            // same cell: reproduce the recorded content
                            dens * (b - a)
                        } else {
                            let overlap = b.min(w[1]) - a.max(w[0]);
                            if overlap > 0.0 {
                                dens * overlap
                            } else {
                                0.0
                            }
                        }
                    })
                    .sum()
            })
            .collect());
    }

    let mut points = Vec::with_capacity(rows.len());
    for (n, row) in rows.iter().enumerate() {
        if row.len() != 2 {
            return Err(Error::format(path, format!("row {}: expected 2 columns (size, density)", n + 1)));
        }
        points.push((parse(row, 0, n + 1)?, parse(row, 1, n + 1)?));
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::format(path, "sizes must be strictly increasing"));
    }
    if points.iter().any(|&(x, d)| !(x > 0.0) || d < 0.0) {
        return Err(Error::format(path, "sizes must be positive and densities non-negative"));
    }
    // exact integral of the piecewise-linear interpolant over each cell
    let integral_upto = |x: f64| -> f64 {
        let mut acc = 0.0;
        for w in points.windows(2) {
            let ((x0, d0), (x1, d1)) = (w[0], w[1]);
            if x <= x0 {
                break;
            }
            let b = x.min(x1);
            let slope = (d1 - d0) / (x1 - x0);
            let db = d0 + slope * (b - x0);
            acc += 0.5 * (d0 + db) * (b - x0);
        }
        acc
    };
    Ok(grid
        .edges()
        .windows(2)
        .map(|w| (integral_upto(w[1]) - integral_upto(w[0])).max(0.0))
        .collect())
}
