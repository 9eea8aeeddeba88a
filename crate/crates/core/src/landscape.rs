//! Synthetic entropy landscapes built from mixtures of 2-D Gaussians.
//!
//! ```text
//! H(x, y) = Σ K_i exp(-½ [A_i (x-x_i)² + B_i (y-y_i)² + 2 C_i (x-x_i)(y-y_i)])
//! ```
//!
//! Landscapes are evaluated at cell centers and are the benchmark fields for
//! the entropy search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpace};
use crate::objective::Objective;

/// Absolute tolerance used to collect ties for the global maximum.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    #[serde(rename = "K")]
    pub amplitude: f64,
    pub x: f64,
    pub y: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

impl GaussianComponent {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.amplitude, self.x, self.y, self.a, self.b, self.c]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("gaussian component has non-finite parameters"));
        }
        if self.amplitude <= 0.0 {
            return Err(Error::config(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        if self.a <= 0.0 || self.b <= 0.0 || self.a * self.b - self.c * self.c <= 0.0 {
            return Err(Error::config(format!(
                "quadratic form (A={}, B={}, C={}) is not positive definite",
                self.a, self.b, self.c
            )));
        }
        Ok(())
    }

    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.x;
        let dy = y - self.y;
        let q = self.a * dx * dx + self.b * dy * dy + 2.0 * self.c * dx * dy;
        self.amplitude * (-0.5 * q).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureLandscape {
    grid: GridSpace,
    components: Vec<GaussianComponent>,
}

#[derive(Deserialize)]
struct RawLandscape {
    grid: GridSpace,
    components: Vec<GaussianComponent>,
}

impl<'de> Deserialize<'de> for MixtureLandscape {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawLandscape::deserialize(d)?;
        MixtureLandscape::new(raw.grid, raw.components).map_err(serde::de::Error::custom)
    }
}

impl MixtureLandscape {
    pub fn new(grid: GridSpace, components: Vec<GaussianComponent>) -> Result<Self> {
        if grid.dims() != 2 {
            return Err(Error::config(format!(
                "mixture landscapes are 2-D, grid has {} dimensions",
                grid.dims()
            )));
        }
        if components.is_empty() {
            return Err(Error::config("landscape needs at least one component"));
        }
        let ext = grid.extents();
        for comp in &components {
            comp.validate()?;
            let inside = (ext[0][0]..=ext[0][1]).contains(&comp.x)
                && (ext[1][0]..=ext[1][1]).contains(&comp.y);
            if !inside {
                return Err(Error::config(format!(
                    "component center ({}, {}) lies outside the grid",
                    comp.x, comp.y
                )));
            }
        }
        Ok(Self { grid, components })
    }

    /// Draws `num_components` random components.
    ///
    /// Amplitudes are `U(0.5, 2)`, centers uniform over the central 90% of each
    /// extent, and the quadratic form is `A = a², B = b², C = ρab` with
    /// `a, b ~ U(0.5, 3)` and `ρ ~ U(-0.9, 0.9)`, so it is positive definite.
    pub fn random(num_components: usize, grid: GridSpace, seed: u64) -> Result<Self> {
        if num_components == 0 {
            return Err(Error::config("num_components must be at least 1"));
        }
        if grid.dims() != 2 {
            return Err(Error::config("mixture landscapes are 2-D"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ext = grid.extents().to_vec();
        let interior = |[lo, hi]: [f64; 2]| {
            let margin = 0.05 * (hi - lo);
            (lo + margin, hi - margin)
        };
        let (x0, x1) = interior(ext[0]);
        let (y0, y1) = interior(ext[1]);
        let components = (0..num_components)
            .map(|_| {
                let amplitude = rng.random_range(0.5..2.0);
                let x = rng.random_range(x0..x1);
                let y = rng.random_range(y0..y1);
                let a: f64 = rng.random_range(0.5..3.0);
                let b: f64 = rng.random_range(0.5..3.0);
                let rho: f64 = rng.random_range(-0.9..0.9);
                GaussianComponent {
                    amplitude,
                    x,
                    y,
                    a: a * a,
                    b: b * b,
                    c: rho * a * b,
                }
            })
            .collect();
        Self::new(grid, components)
    }

    pub fn grid(&self) -> &GridSpace {
        &self.grid
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        self.components.iter().map(|c| c.value_at(x, y)).sum()
    }

    /// Landscape value at the center of `cell`.
    pub fn evaluate(&self, cell: Cell) -> Result<f64> {
        let p = self.grid.center(cell)?;
        Ok(self.value_at(p[0], p[1]))
    }

    /// Upper bound `Σ K_i` on the landscape.
    pub fn amplitude_sum(&self) -> f64 {
        self.components.iter().map(|c| c.amplitude).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl Objective for MixtureLandscape {
    fn evaluate(&self, cell: Cell) -> Result<f64> {
        MixtureLandscape::evaluate(self, cell)
    }
}

/// Every cell value of a field plus the cells attaining its maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceMap {
    pub values: Vec<f64>,
    pub max_value: f64,
    pub argmax: Vec<Cell>,
    pub evaluations: usize,
}

impl BruteForceMap {
    /// Writes the map as a dense CSV grid, one row per index of the second
    /// dimension. Only defined for 2-D grids.
    pub fn write_dense_csv<W: std::io::Write>(&self, grid: &GridSpace, out: W) -> Result<()> {
        if grid.dims() != 2 {
            return Err(Error::config("dense CSV maps need a 2-D grid"));
        }
        let nx = grid.cells_per_dim()[0];
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        for row in self.values.chunks(nx) {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Evaluates `objective` at every cell of `grid`, exactly once each.
pub fn brute_force_map<O: Objective + ?Sized>(objective: &O, grid: &GridSpace) -> Result<BruteForceMap> {
    let values = grid
        .cells()
        .map(|c| objective.evaluate(c))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(values))
}

fn summarize(values: Vec<f64>) -> BruteForceMap {
    let max_value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let argmax = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == max_value || (max_value - v).abs() <= TIE_TOLERANCE)
        .map(|(i, _)| Cell(i))
        .collect();
    let evaluations = values.len();
    BruteForceMap {
        values,
        max_value,
        argmax,
        evaluations,
    }
}

/// Parallel variant of [`brute_force_map`] for pure objectives.
pub fn brute_force_map_par<O>(objective: &O, grid: &GridSpace) -> Result<BruteForceMap>
where
    O: Objective + Sync + ?Sized,
{
    use rayon::prelude::*;
    let values = (0..grid.total_cells())
        .into_par_iter()
        .map(|i| objective.evaluate(Cell(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(values))
}
