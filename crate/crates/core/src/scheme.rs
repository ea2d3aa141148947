//! Conservative sectional right-hand side.
//!
//! With `R_jl = Φ(r_j, r_l) c_j c_l` the discrete equation is
//!
//! ```text
//! dc_i/dt  = ½ Σ_jl R_jl (n_i|j + n_i|l) - c_i Σ_l Φ(r_i, r_l) c_l
//! dust/dt  = ½ Σ_jl R_jl (dust_j + dust_l)
//! ```
//!
//! where `n_i|j` is the number of fragments a parent at `r_j` leaves in cell
//! `i`, defined from the deposited mass so that `Σ_i r_i n_i|j + dust_j = r_j`.
//! By symmetry of `R` the gain reduces to `Σ_j n_i|j c_j L_j` with
//! `L_j = Σ_l Φ(r_j, r_l) c_l`, so one evaluation costs `O(N²)`.

use rayon::prelude::*;

use crate::daughter::DaughterLaw;
use crate::error::Result;
use crate::grid::{SizeGrid, State};
use crate::kernel::KernelSpec;
use crate::power::pow;

/// Below this many cells the row loops run on the calling thread.
const PARALLEL_MIN_CELLS: usize = 48;

#[derive(Debug, Clone)]
pub struct RhsWorkspace {
    grid: SizeGrid,
    kernel: KernelSpec,
    law: DaughterLaw,
    /// `n[i * N + j]`, zero for `i > j`.
    deposit: Vec<f64>,
    dust_row: Vec<f64>,
    kernel_matrix: Vec<f64>,
}

/// Time derivative of a [`State`].
#[derive(Debug, Clone, PartialEq)]
pub struct Rhs {
    pub d_contents: Vec<f64>,
    pub d_dust: f64,
}

impl RhsWorkspace {
    pub fn precompute(grid: &SizeGrid, kernel: &KernelSpec, law: &DaughterLaw) -> Result<Self> {
        let n = grid.n_cells();
        let edges = grid.edges();
        let reps = grid.reps();
        let mut deposit = vec![0.0; n * n];
        let mut dust_row = vec![0.0; n];
        for j in 0..n {
            let parent = reps[j];
            for i in 0..=j {
                let hi = edges[i + 1].min(parent);
                deposit[i * n + j] = law.cell_mass_deposit(parent, edges[i], hi)? / reps[i];
            }
            dust_row[j] = law.cell_mass_deposit(parent, 0.0, edges[0])?;
        }
        let mut kernel_matrix = vec![0.0; n * n];
        for j in 0..n {
            for l in j..n {
                let phi = kernel.eval(reps[j], reps[l])?;
                kernel_matrix[j * n + l] = phi;
                kernel_matrix[l * n + j] = phi;
            }
        }
        Ok(Self {
            grid: grid.clone(),
            kernel: *kernel,
            law: *law,
            deposit,
            dust_row,
            kernel_matrix,
        })
    }

    /// Multiplies every collision rate by `s`; the dynamics then run `s`
    /// times faster.
    pub fn scale_rates(&mut self, s: f64) {
        for k in &mut self.kernel_matrix {
            *k *= s;
        }
    }

    pub fn grid(&self) -> &SizeGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn law(&self) -> &DaughterLaw {
        &self.law
    }

    pub fn n_cells(&self) -> usize {
        self.dust_row.len()
    }

    /// Fragments left in cell `i` by one breakup of a parent in cell `j`.
    pub fn deposit(&self, i: usize, j: usize) -> f64 {
        self.deposit[i * self.n_cells() + j]
    }

    /// Mass sent below `x_min` by one breakup of a parent in cell `j`.
    pub fn dust_row(&self) -> &[f64] {
        &self.dust_row
    }

    pub fn kernel_entry(&self, j: usize, l: usize) -> f64 {
        self.kernel_matrix[j * self.n_cells() + l]
    }

    /// Per-cell loss rates `c_j Σ_l Φ(r_j, r_l) c_l`.
    pub fn loss_rates(&self, contents: &[f64]) -> Vec<f64> {
        let n = self.n_cells();
        let row = |j: usize| -> f64 {
            let k = &self.kernel_matrix[j * n..(j + 1) * n];
            let mut acc = 0.0;
            for (kl, cl) in k.iter().zip(contents) {
                acc += kl * cl;
            }
            contents[j] * acc
        };
        if n >= PARALLEL_MIN_CELLS {
            (0..n).into_par_iter().map(row).collect()
        } else {
            (0..n).map(row).collect()
        }
    }

    /// Writes the content derivatives into `out` and returns the dust rate.
    ///
    /// Every output entry is a fixed-order sequential sum, so the result does
    /// not depend on how rows are spread over threads.
    pub fn rhs_into(&self, contents: &[f64], out: &mut [f64]) -> f64 {
        let n = self.n_cells();
        assert_eq!(contents.len(), n, "state does not match the workspace grid");
        assert_eq!(out.len(), n, "output buffer does not match the workspace grid");
        let loss = self.loss_rates(contents);
        let row = |i: usize, o: &mut f64| {
            let dep = &self.deposit[i * n..(i + 1) * n];
            let mut gain = 0.0;
            for j in i..n {
                gain += dep[j] * loss[j];
            }
            *o = gain - loss[i];
        };
        if n >= PARALLEL_MIN_CELLS {
            out.par_iter_mut().enumerate().for_each(|(i, o)| row(i, o));
        } else {
            out.iter_mut().enumerate().for_each(|(i, o)| row(i, o));
        }
        let mut d_dust = 0.0;
        for (d, l) in self.dust_row.iter().zip(&loss) {
            d_dust += d * l;
        }
        d_dust
    }

    pub fn rhs(&self, state: &State) -> Rhs {
        let mut d_contents = vec![0.0; self.n_cells()];
        let d_dust = self.rhs_into(&state.contents, &mut d_contents);
        Rhs { d_contents, d_dust }
    }

    /// `Σ_i r_i^k dc_i/dt`, the rate of change of the grid moment.
    pub fn moment_production(&self, state: &State, k: f64) -> f64 {
        let rhs = self.rhs(state);
        self.grid.moment_of(&rhs.d_contents, k)
    }

    /// `½ Σ_jl Υ_{W_k}(r_j, r_l) R_jl`, the moment production of the
    /// continuum weak form evaluated on the grid pairs.
    pub fn continuum_production(&self, state: &State, k: f64) -> Result<f64> {
        let coef = self.law.upsilon_coefficient(k)?;
        let loss = self.loss_rates(&state.contents);
        let mut acc = 0.0;
        for (r, l) in self.grid.reps().iter().zip(&loss) {
            acc += pow(*r, k) * l;
        }
        Ok(coef * acc)
    }

    /// Gap between the scheme's `k`-moment production and the continuum weak
    /// form. Fragments sent to dust are not counted, so at `k = 1` this equals
    /// `-dust/dt`.
    pub fn weak_form_residual(&self, state: &State, k: f64) -> Result<f64> {
        let continuum = self.continuum_production(state, k)?;
        Ok(self.moment_production(state, k) - continuum)
    }

    /// [`Self::weak_form_residual`] with the exact `k`-moment of the fragments
    /// sent below `x_min` added back. What remains is the discretisation
    /// error alone.
    pub fn dust_corrected_residual(&self, state: &State, k: f64) -> Result<f64> {
        let rhs = self.rhs(state);
        let produced = self.grid.moment_of(&rhs.d_contents, k);
        let dust = self.dust_moment_factor(k)? * rhs.d_dust;
        Ok(produced + dust - self.continuum_production(state, k)?)
    }

    /// `k`-moment carried by unit dust mass.
    pub fn dust_moment_factor(&self, k: f64) -> Result<f64> {
        self.law.subcutoff_moment_per_mass(k, self.grid.x_min())
    }
}
