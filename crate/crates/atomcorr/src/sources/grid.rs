//! Sampling grid shared by the speckle and determinantal samplers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sources::FarFieldModel;

/// Resolution and extent rules for the sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Grid cells per coherence length. Below 4 the discretization bias is
    /// no longer negligible against statistical error; rejected.
    pub cells_per_coherence: f64,
    /// Grid extent in units of the envelope width, per axis.
    pub envelope_extent: f64,
    /// Hard cap on cells per axis, to keep FFT and kernel sizes desk-scale.
    pub max_cells_per_axis: usize,
    /// Cap on the number of 3D modes retained by the fermion spectrum.
    pub max_modes: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            cells_per_coherence: 4.0,
            envelope_extent: 6.0,
            max_cells_per_axis: 192,
            max_modes: 1024,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells_per_coherence < 4.0 {
            return Err(Error::Config(format!(
                "grid too coarse: {} cells per coherence length (minimum 4)",
                self.cells_per_coherence
            )));
        }
        if self.envelope_extent < 6.0 {
            return Err(Error::Config(format!(
                "grid extent {} envelope widths is below the minimum of 6",
                self.envelope_extent
            )));
        }
        if self.max_modes == 0 {
            return Err(Error::Config("max_modes must be >= 1".into()));
        }
        Ok(())
    }
}

/// A rectangular cell grid centered on the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// Cells per axis.
    pub n: [usize; 3],
    /// Cell size per axis (m).
    pub h: [f64; 3],
    /// Coordinate of the low corner (m); cell centers sit at
    /// min + (j + 0.5) h.
    pub min: [f64; 3],
}

impl Grid {
    pub fn for_model(model: &FarFieldModel, config: &SamplerConfig) -> Result<Grid> {
        config.validate()?;
        model.validate()?;
        let mut n = [0usize; 3];
        let mut h = [0.0; 3];
        let mut min = [0.0; 3];
        for i in 0..3 {
            let cell = model.coherence_lengths[i] / config.cells_per_coherence;
            let extent = config.envelope_extent * model.envelope_widths[i];
            let cells = (extent / cell).ceil() as usize;
            if cells > config.max_cells_per_axis {
                return Err(Error::Config(format!(
                    "grid needs {cells} cells on axis {i} (cap {}); increase \
                     degeneracy_parameter or the cap",
                    config.max_cells_per_axis
                )));
            }
            n[i] = cells.max(4);
            h[i] = cell;
            min[i] = -(n[i] as f64) * cell / 2.0;
        }
        Ok(Grid { n, h, min })
    }

    pub fn total_cells(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    /// Center of the cell with per-axis indices `idx`.
    pub fn center(&self, idx: [usize; 3]) -> [f64; 3] {
        core::array::from_fn(|i| self.min[i] + (idx[i] as f64 + 0.5) * self.h[i])
    }

    /// Per-axis coordinates of cell centers.
    pub fn axis_centers(&self, axis: usize) -> Vec<f64> {
        (0..self.n[axis]).map(|j| self.min[axis] + (j as f64 + 0.5) * self.h[axis]).collect()
    }

    /// Split a flat cell index (x-major, z fastest) into per-axis indices.
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let iz = flat % self.n[2];
        let iy = (flat / self.n[2]) % self.n[1];
        let ix = flat / (self.n[1] * self.n[2]);
        [ix, iy, iz]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> FarFieldModel {
        FarFieldModel {
            envelope_widths: [2e-4; 3],
            coherence_lengths: [1e-4; 3],
            mean_detected_atoms: 50.0,
        }
    }

    #[test]
    fn grid_respects_resolution_rules() {
        let grid = Grid::for_model(&model(), &SamplerConfig::default()).unwrap();
        for i in 0..3 {
            assert!(grid.h[i] <= 1e-4 / 4.0 + 1e-18);
            assert!(grid.n[i] as f64 * grid.h[i] >= 6.0 * 2e-4 - 1e-12);
        }
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let config = SamplerConfig { cells_per_coherence: 3.0, ..SamplerConfig::default() };
        assert!(Grid::for_model(&model(), &config).is_err());
    }

    #[test]
    fn unflatten_roundtrip() {
        let grid = Grid::for_model(&model(), &SamplerConfig::default()).unwrap();
        let idx = [3, 5, 7];
        let flat = (idx[0] * grid.n[1] + idx[1]) * grid.n[2] + idx[2];
        assert_eq!(grid.unflatten(flat), idx);
    }
}
