//! Discretized experiment spaces.
//!
//! A [`GridSpace`] divides a box in `p` dimensions into a regular lattice of
//! cells. Cells are addressed by a flat row-major [`Cell`] index (the first
//! dimension varies fastest), which is also the ordering used to break ties.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat index of a grid cell.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Cell(pub usize);

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Closed real interval `[lo, hi]`.
pub type Extent = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpace {
    extents: Vec<Extent>,
    cells_per_dim: Vec<usize>,
}

#[derive(Deserialize)]
struct RawGrid {
    extents: Vec<Extent>,
    cells_per_dim: Vec<usize>,
}

impl<'de> Deserialize<'de> for GridSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawGrid::deserialize(d)?;
        GridSpace::new(raw.extents, raw.cells_per_dim).map_err(serde::de::Error::custom)
    }
}

impl GridSpace {
    pub fn new(extents: Vec<Extent>, cells_per_dim: Vec<usize>) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::config("grid needs at least one dimension"));
        }
        if extents.len() != cells_per_dim.len() {
            return Err(Error::config(format!(
                "grid has {} extents but {} cell counts",
                extents.len(),
                cells_per_dim.len()
            )));
        }
        for (d, (&[lo, hi], &cells)) in extents.iter().zip(&cells_per_dim).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!(
                    "dimension {d}: extent [{lo}, {hi}] is not a proper finite interval"
                )));
            }
            if cells < 2 {
                return Err(Error::config(format!(
                    "dimension {d}: need at least 2 cells, got {cells}"
                )));
            }
        }
        cells_per_dim
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| Error::config("grid cell count overflows"))?;
        Ok(Self {
            extents,
            cells_per_dim,
        })
    }

    /// Square 2-D grid with `cells` cells per side over `[-half_width, half_width]²`.
    pub fn square(half_width: f64, cells: usize) -> Result<Self> {
        Self::new(
            vec![[-half_width, half_width]; 2],
            vec![cells, cells],
        )
    }

    /// The 61×61 grid over `[-3, 3]²` (3721 cells) used as the default everywhere.
    pub fn default_2d() -> Self {
        Self::square(3.0, 61).expect("default grid is valid")
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[Extent] {
        &self.extents
    }

    pub fn cells_per_dim(&self) -> &[usize] {
        &self.cells_per_dim
    }

    pub fn total_cells(&self) -> usize {
        self.cells_per_dim.iter().product()
    }

    pub fn cell_width(&self, dim: usize) -> f64 {
        let [lo, hi] = self.extents[dim];
        (hi - lo) / self.cells_per_dim[dim] as f64
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.0 < self.total_cells()
    }

    pub fn check(&self, cell: Cell) -> Result<()> {
        if self.contains(cell) {
            Ok(())
        } else {
            Err(Error::Index {
                cell,
                total: self.total_cells(),
            })
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> {
        (0..self.total_cells()).map(Cell)
    }

    /// Per-dimension integer indices of a cell.
    pub fn indices(&self, cell: Cell) -> Result<Vec<usize>> {
        self.check(cell)?;
        let mut rest = cell.0;
        Ok(self
            .cells_per_dim
            .iter()
            .map(|&n| {
                let i = rest % n;
                rest /= n;
                i
            })
            .collect())
    }

    pub fn cell_at(&self, indices: &[usize]) -> Result<Cell> {
        if indices.len() != self.dims() {
            return Err(Error::config(format!(
                "expected {} indices, got {}",
                self.dims(),
                indices.len()
            )));
        }
        let mut flat = 0;
        for (d, (&i, &n)) in indices.iter().zip(&self.cells_per_dim).enumerate().rev() {
            if i >= n {
                return Err(Error::config(format!(
                    "index {i} out of range in dimension {d} ({n} cells)"
                )));
            }
            flat = flat * n + i;
        }
        Ok(Cell(flat))
    }

    /// Coordinates of the cell center.
    pub fn center(&self, cell: Cell) -> Result<Vec<f64>> {
        let idx = self.indices(cell)?;
        Ok(idx
            .iter()
            .enumerate()
            .map(|(d, &i)| self.extents[d][0] + (i as f64 + 0.5) * self.cell_width(d))
            .collect())
    }

    /// Cell containing a point; points on the upper boundary map to the last cell.
    pub fn locate(&self, point: &[f64]) -> Result<Cell> {
        if point.len() != self.dims() {
            return Err(Error::config(format!(
                "expected a {}-dimensional point, got {}",
                self.dims(),
                point.len()
            )));
        }
        let mut idx = Vec::with_capacity(self.dims());
        for (d, &x) in point.iter().enumerate() {
            let [lo, hi] = self.extents[d];
            if !(lo..=hi).contains(&x) {
                return Err(Error::config(format!(
                    "coordinate {x} outside extent [{lo}, {hi}] in dimension {d}"
                )));
            }
            let i = ((x - lo) / self.cell_width(d)).floor() as usize;
            idx.push(i.min(self.cells_per_dim[d] - 1));
        }
        self.cell_at(&idx)
    }

    /// Largest useful step (in cells) along a dimension.
    pub fn span(&self, dim: usize) -> usize {
        self.cells_per_dim[dim] - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpace::new(vec![[0.0, 1.0]], vec![1]).is_err());
        assert!(GridSpace::new(vec![[1.0, 1.0]], vec![4]).is_err());
        assert!(GridSpace::new(vec![], vec![]).is_err());
        assert!(GridSpace::new(vec![[0.0, 1.0]], vec![3, 3]).is_err());
    }

    #[test]
    fn default_grid_has_3721_cells() {
        let g = GridSpace::default_2d();
        assert_eq!(g.total_cells(), 3721);
        // the middle cell is centered on the origin
        let c = g.cell_at(&[30, 30]).unwrap();
        let x = g.center(c).unwrap();
        assert!(x[0].abs() < 1e-12 && x[1].abs() < 1e-12);
    }

    #[test]
    fn out_of_range_cell_is_an_index_error() {
        let g = GridSpace::square(1.0, 3).unwrap();
        assert!(matches!(g.center(Cell(9)), Err(Error::Index { .. })));
    }

    proptest! {
        #[test]
        fn index_coordinate_round_trip(
            nx in 2usize..20, ny in 2usize..20, nz in 2usize..5, pick in 0usize..10_000
        ) {
            let g = GridSpace::new(vec![[-1.0, 2.0], [0.0, 5.0], [3.0, 4.0]], vec![nx, ny, nz]).unwrap();
            let cell = Cell(pick % g.total_cells());
            let idx = g.indices(cell).unwrap();
            prop_assert_eq!(g.cell_at(&idx).unwrap(), cell);
            let x = g.center(cell).unwrap();
            prop_assert_eq!(g.locate(&x).unwrap(), cell);
        }
    }
}
