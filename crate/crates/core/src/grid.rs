//! Dense multi-channel grids and skeleton masks.

use crate::{Error, Result};

/// Skeleton probabilities are clamped to `[EPS, 1 - EPS]`.
pub const SKELETON_EPS: f64 = 1e-4;

/// A dense `height × width × channels` grid stored row-major as
/// `(row, column, channel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f64>,
    cell_size: Option<f64>,
}

impl Grid2D {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        check_dims(height, width, channels)?;
        Ok(Grid2D {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
            cell_size: None,
        })
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        check_dims(height, width, channels)?;
        if values.len() != height * width * channels {
            return Err(Error::invalid(format!(
                "grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("grid value at index {bad} is not finite")));
        }
        Ok(Grid2D {
            height,
            width,
            channels,
            values,
            cell_size: None,
        })
    }

    pub fn with_cell_size(mut self, cell_size: Option<f64>) -> Self {
        self.cell_size = cell_size;
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn cell_size(&self) -> Option<f64> {
        self.cell_size
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_square(&self) -> bool {
        self.height == self.width
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.values[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        let i = self.index(row, col, ch);
        self.values[i] = value;
    }

    /// The `channels` values stored for one cell.
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let i = self.index(row, col, 0);
        &self.values[i..i + self.channels]
    }

    pub fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let i = self.index(row, col, 0);
        &mut self.values[i..i + self.channels]
    }

    /// One channel copied out as a `height × width` plane.
    pub fn channel(&self, ch: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(ch)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// A single-channel grid holding channel `ch`.
    pub fn select_channel(&self, ch: usize) -> Grid2D {
        Grid2D {
            height: self.height,
            width: self.width,
            channels: 1,
            values: self.channel(ch),
            cell_size: self.cell_size,
        }
    }

    /// Central `size × size` window. Both dimensions must be at least `size`.
    pub fn center_crop(&self, size: usize) -> Result<Grid2D> {
        if size == 0 || size > self.height || size > self.width {
            return Err(Error::invalid(format!(
                "crop {size} does not fit a {}x{} grid",
                self.height, self.width
            )));
        }
        let r0 = (self.height - size) / 2;
        let c0 = (self.width - size) / 2;
        let mut out = Grid2D::zeros(size, size, self.channels)?;
        for r in 0..size {
            let src = self.index(r0 + r, c0, 0);
            let dst = out.index(r, 0, 0);
            out.values[dst..dst + size * self.channels]
                .copy_from_slice(&self.values[src..src + size * self.channels]);
        }
        out.cell_size = self.cell_size;
        Ok(out)
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::invalid(format!(
            "grid dimensions must be positive, got {height}x{width}x{channels}"
        )));
    }
    Ok(())
}

/// Two-channel per-cell skeleton probabilities. Channel 1 is the skeleton
/// probability, channel 0 its complement; the two always sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonMask(Grid2D);

impl SkeletonMask {
    /// Builds a mask from skeleton probabilities, clamping each into
    /// `[SKELETON_EPS, 1 - SKELETON_EPS]`.
    pub fn from_probabilities(height: usize, width: usize, probs: &[f64]) -> Result<Self> {
        if probs.len() != height * width {
            return Err(Error::invalid(format!(
                "skeleton {height}x{width} needs {} probabilities, got {}",
                height * width,
                probs.len()
            )));
        }
        let mut values = Vec::with_capacity(probs.len() * 2);
        for &p in probs {
            if !p.is_finite() {
                return Err(Error::invalid("skeleton probability is not finite"));
            }
            let q = p.clamp(SKELETON_EPS, 1.0 - SKELETON_EPS);
            values.push(1.0 - q);
            values.push(q);
        }
        Grid2D::from_vec(height, width, 2, values).map(SkeletonMask)
    }

    pub fn from_indicator(height: usize, width: usize, on: &[bool]) -> Result<Self> {
        let probs: Vec<f64> = on.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Self::from_probabilities(height, width, &probs)
    }

    pub fn grid(&self) -> &Grid2D {
        &self.0
    }

    pub fn into_grid(self) -> Grid2D {
        self.0
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    /// Skeleton probability (channel 1) as a plane.
    pub fn probabilities(&self) -> Vec<f64> {
        self.0.channel(1)
    }

    /// Cells whose skeleton probability exceeds one half.
    pub fn indicator(&self) -> Vec<bool> {
        self.probabilities().into_iter().map(|p| p > 0.5).collect()
    }

    /// True when no cell carries skeleton mass above the clamp floor.
    pub fn is_blank(&self) -> bool {
        self.probabilities().iter().all(|&p| p <= SKELETON_EPS)
    }
}
