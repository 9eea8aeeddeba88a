//! The simulated measurement world: a bright circle hidden in a dark field,
//! probed by a point intensity sensor.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, Extent, GridSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleModel {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl CircleModel {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Self { cx, cy, r }
    }

    /// Closed disk membership.
    pub fn covers(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        dx * dx + dy * dy <= self.r * self.r
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.cx, self.cy, self.r]
    }
}

/// The field of candidate measurement locations and the sensor response.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    grid: GridSpace,
    centers: Vec<[f64; 2]>,
    pub intensity_inside: f64,
    pub intensity_outside: f64,
    pub noise_sigma: f64,
}

impl FieldSpec {
    pub fn new(grid: GridSpace, intensity_inside: f64, intensity_outside: f64, noise_sigma: f64) -> Result<Self> {
        if grid.dims() != 2 {
            return Err(Error::config("the measurement field is 2-D"));
        }
        if !(intensity_inside > intensity_outside) {
            return Err(Error::config(format!(
                "intensity_inside ({intensity_inside}) must exceed intensity_outside ({intensity_outside})"
            )));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma must be finite and nonnegative"));
        }
        let centers = grid
            .cells()
            .map(|c| {
                let p = grid.center(c).expect("cell from grid");
                [p[0], p[1]]
            })
            .collect();
        Ok(Self {
            grid,
            centers,
            intensity_inside,
            intensity_outside,
            noise_sigma,
        })
    }

    pub fn grid(&self) -> &GridSpace {
        &self.grid
    }

    pub fn extents(&self) -> &[Extent] {
        self.grid.extents()
    }

    /// Cell-center coordinates of a location.
    pub fn location(&self, cell: Cell) -> Result<[f64; 2]> {
        self.centers.get(cell.0).copied().ok_or(Error::Index {
            cell,
            total: self.centers.len(),
        })
    }

    /// Noiseless predicted intensity for `model` at `location`.
    pub fn forward(&self, model: &CircleModel, location: Cell) -> Result<f64> {
        let [x, y] = self.location(location)?;
        Ok(self.intensity_at(model, x, y))
    }

    pub fn intensity_at(&self, model: &CircleModel, x: f64, y: f64) -> f64 {
        if model.covers(x, y) {
            self.intensity_inside
        } else {
            self.intensity_outside
        }
    }

    /// A noisy sensor reading of `truth` at `location`.
    pub fn measure<R: Rng + ?Sized>(&self, truth: &CircleModel, location: Cell, rng: &mut R) -> Result<Measurement> {
        let clean = self.forward(truth, location)?;
        let intensity = if self.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, self.noise_sigma).map_err(|e| Error::config(e.to_string()))?;
            clean + noise.sample(rng)
        } else {
            clean
        };
        Ok(Measurement { location, intensity })
    }

    pub fn validate_model(&self, model: &CircleModel) -> Result<()> {
        let ext = self.extents();
        let inside = (ext[0][0]..=ext[0][1]).contains(&model.cx) && (ext[1][0]..=ext[1][1]).contains(&model.cy);
        if !(model.r > 0.0) || !inside {
            return Err(Error::config(format!(
                "circle ({}, {}, {}) needs r > 0 and a center inside the field",
                model.cx, model.cy, model.r
            )));
        }
        Ok(())
    }
}

impl Default for FieldSpec {
    /// 61×61 cells over `[-3, 3]²`, intensities 1.0 / 0.1, noise 0.05.
    fn default() -> Self {
        Self::new(GridSpace::default_2d(), 1.0, 0.1, 0.05).expect("default field is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub location: Cell,
    pub intensity: f64,
}

/// Ground truth plus field description, as stored in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub extents: Vec<Extent>,
    pub cells_per_dim: Vec<usize>,
    pub intensity_inside: f64,
    pub intensity_outside: f64,
    pub noise_sigma: f64,
}

impl WorldSpec {
    pub fn new(truth: CircleModel, field: &FieldSpec) -> Self {
        Self {
            cx: truth.cx,
            cy: truth.cy,
            r: truth.r,
            extents: field.extents().to_vec(),
            cells_per_dim: field.grid().cells_per_dim().to_vec(),
            intensity_inside: field.intensity_inside,
            intensity_outside: field.intensity_outside,
            noise_sigma: field.noise_sigma,
        }
    }

    pub fn build(&self) -> Result<(CircleModel, FieldSpec)> {
        let grid = GridSpace::new(self.extents.clone(), self.cells_per_dim.clone())?;
        let field = FieldSpec::new(grid, self.intensity_inside, self.intensity_outside, self.noise_sigma)?;
        let truth = CircleModel::new(self.cx, self.cy, self.r);
        field.validate_model(&truth)?;
        Ok((truth, field))
    }
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self::new(CircleModel::new(0.6, -0.4, 1.2), &FieldSpec::default())
    }
}

/// Ordered measurements collected so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeasurementLog(pub Vec<Measurement>);

#[derive(Debug, Serialize, Deserialize)]
struct LogRow {
    step: usize,
    cell_x: usize,
    cell_y: usize,
    intensity: f64,
}

impl MeasurementLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, m: Measurement) {
        self.0.push(m);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Measurement> {
        self.0.iter()
    }

    pub fn validate(&self, field: &FieldSpec) -> Result<()> {
        self.0.iter().try_for_each(|m| field.grid().check(m.location))
    }

    /// CSV with columns `step,cell_x,cell_y,intensity`.
    pub fn write_csv<W: std::io::Write>(&self, field: &FieldSpec, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (step, m) in self.0.iter().enumerate() {
            let idx = field.grid().indices(m.location)?;
            w.serialize(LogRow {
                step,
                cell_x: idx[0],
                cell_y: idx[1],
                intensity: m.intensity,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(field: &FieldSpec, input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut log = Self::new();
        for row in r.deserialize::<LogRow>() {
            let row = row?;
            let location = field.grid().cell_at(&[row.cell_x, row.cell_y])?;
            log.push(Measurement {
                location,
                intensity: row.intensity,
            });
        }
        Ok(log)
    }
}
