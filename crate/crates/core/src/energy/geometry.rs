use std::ops::Range;

use crate::spectral::{SpectralGrid, VectorField};

use super::EnergyError;

/// The film `ω × layers` embedded in the periodic box: an in-plane mask for
/// the cross section and a contiguous range of `x₃` layers.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGeometry {
    grid: SpectralGrid,
    mask: Vec<bool>,
    layers: Range<usize>,
}

impl SampleGeometry {
    /// `mask` is indexed `i₁ * N₂ + i₂`.
    pub fn new(
        grid: SpectralGrid,
        mask: Vec<bool>,
        layers: Range<usize>,
    ) -> Result<Self, EnergyError> {
        let [n1, n2, n3] = grid.counts();
        if mask.len() != n1 * n2 {
            return Err(EnergyError::Geometry(format!(
                "mask has {} entries, grid cross section has {}",
                mask.len(),
                n1 * n2
            )));
        }
        if !mask.iter().any(|&b| b) {
            return Err(EnergyError::Geometry("cross section mask is empty".into()));
        }
        if layers.is_empty() || layers.end > n3 {
            return Err(EnergyError::Geometry(format!(
                "layer range {layers:?} invalid for N₃ = {n3}"
            )));
        }
        Ok(Self { grid, mask, layers })
    }

    /// Film filling the whole box.
    pub fn full(grid: SpectralGrid) -> Self {
        let [n1, n2, n3] = grid.counts();
        Self {
            grid,
            mask: vec![true; n1 * n2],
            layers: 0..n3,
        }
    }

    /// Rectangular `ω` of `omega_cells` cells and `film_layers` layers, both
    /// centered in the box.
    pub fn centered(
        grid: SpectralGrid,
        omega_cells: [usize; 2],
        film_layers: usize,
    ) -> Result<Self, EnergyError> {
        let [n1, n2, n3] = grid.counts();
        if omega_cells[0] > n1 || omega_cells[1] > n2 || film_layers > n3 {
            return Err(EnergyError::Geometry(format!(
                "film {omega_cells:?}×{film_layers} does not fit in {:?}",
                grid.counts()
            )));
        }
        let (o1, o2, o3) = (
            (n1 - omega_cells[0]) / 2,
            (n2 - omega_cells[1]) / 2,
            (n3 - film_layers) / 2,
        );
        let mut mask = vec![false; n1 * n2];
        for i1 in o1..o1 + omega_cells[0] {
            for i2 in o2..o2 + omega_cells[1] {
                mask[i1 * n2 + i2] = true;
            }
        }
        Self::new(grid, mask, o3..o3 + film_layers)
    }

    /// The 2-D cross section as a one-layer grid of unit thickness, the
    /// domain of the reduced limit functional.
    pub fn cross_section(&self) -> Self {
        let [n1, n2, _] = self.grid.counts();
        let [l1, l2, _] = self.grid.lengths();
        let grid = SpectralGrid::new([n1, n2, 1], [l1, l2, 1.0], 1.0).expect("valid plane grid");
        Self {
            grid,
            mask: self.mask.clone(),
            layers: 0..1,
        }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    /// Same geometry with the thickness parameter replaced.
    pub fn with_eps(&self, eps: f64) -> Result<Self, EnergyError> {
        Ok(Self {
            grid: self.grid.with_eps(eps)?,
            ..self.clone()
        })
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn layers(&self) -> Range<usize> {
        self.layers.clone()
    }

    pub fn in_omega(&self, i1: usize, i2: usize) -> bool {
        self.mask[i1 * self.grid.counts()[1] + i2]
    }

    pub fn contains(&self, i: [usize; 3]) -> bool {
        self.layers.contains(&i[2]) && self.in_omega(i[0], i[1])
    }

    pub fn contains_index(&self, idx: usize) -> bool {
        self.contains(self.grid.multi_index(idx))
    }

    /// Flat indices of all film cells.
    pub fn film_cells(&self) -> Vec<usize> {
        (0..self.grid.len())
            .filter(|&i| self.contains_index(i))
            .collect()
    }

    /// `|ω|`.
    pub fn omega_area(&self) -> f64 {
        let cells = self.mask.iter().filter(|&&b| b).count();
        cells as f64 * self.grid.spacing(0) * self.grid.spacing(1)
    }

    /// Rescaled film thickness; 1 for the reference cell `ω × (0, 1)`.
    pub fn thickness(&self) -> f64 {
        self.layers.len() as f64 * self.grid.spacing(2)
    }

    pub fn film_volume(&self) -> f64 {
        self.omega_area() * self.thickness()
    }

    /// Copy of `u` with every channel zeroed outside the film.
    pub fn restrict(&self, u: &VectorField) -> VectorField {
        let mut out = u.clone();
        for idx in 0..self.grid.len() {
            if !self.contains_index(idx) {
                out.at_mut(idx).fill(0.0);
            }
        }
        out
    }

    /// Field equal to `value` on the film and zero elsewhere.
    pub fn uniform(&self, value: [f64; 3]) -> VectorField {
        let mut out = VectorField::zeros(self.grid, 3);
        for idx in self.film_cells() {
            out.at_mut(idx).copy_from_slice(&value);
        }
        out
    }

    pub(crate) fn check_field(&self, u: &VectorField, channels: usize) -> Result<(), EnergyError> {
        if u.grid().counts() != self.grid.counts() || u.grid().lengths() != self.grid.lengths() {
            return Err(EnergyError::Geometry(
                "field grid differs from the sample grid".into(),
            ));
        }
        if u.channels() != channels {
            return Err(EnergyError::Geometry(format!(
                "field has {} channels, expected {channels}",
                u.channels()
            )));
        }
        Ok(())
    }
}
