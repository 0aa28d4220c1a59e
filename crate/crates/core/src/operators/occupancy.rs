//! Analytic occupancy volumes.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::OperatorError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    /// Ring around the z axis.
    Torus { major: f64, minor: f64 },
    TwoSpheres { offset: f64, radius: f64 },
}

impl Shape {
    pub fn sphere(radius: f64) -> Self {
        Shape::Sphere {
            center: [0.0; 3],
            radius,
        }
    }

    pub fn torus() -> Self {
        Shape::Torus { major: 0.5, minor: 0.2 }
    }

    pub fn two_spheres() -> Self {
        Shape::TwoSpheres {
            offset: 0.4,
            radius: 0.3,
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let sq = |c: [f64; 3], p: [f64; 3]| (0..3).map(|i| (p[i] - c[i]).powi(2)).sum::<f64>();
        match *self {
            Shape::Sphere { center, radius } => sq(center, p) <= radius * radius,
            Shape::Torus { major, minor } => {
                let ring = (p[0] * p[0] + p[1] * p[1]).sqrt() - major;
                ring * ring + p[2] * p[2] <= minor * minor
            }
            Shape::TwoSpheres { offset, radius } => {
                sq([offset, 0.0, 0.0], p) <= radius * radius || sq([-offset, 0.0, 0.0], p) <= radius * radius
            }
        }
    }
}

impl std::str::FromStr for Shape {
    type Err = OperatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sphere" => Ok(Shape::sphere(0.5)),
            "torus" => Ok(Shape::torus()),
            "two_spheres" => Ok(Shape::two_spheres()),
            _ => Err(OperatorError::InvalidParameter(format!("unknown shape '{s}'"))),
        }
    }
}

/// Binary `R^3` grid indexed `[(i * R + j) * R + k]` for voxel `(x_i, y_j, z_k)`,
/// centers at `(2 i + 1) / R - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    data: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(resolution: usize, data: Vec<f64>) -> Result<Self, OperatorError> {
        if data.len() != resolution.pow(3) {
            return Err(OperatorError::ShapeMismatch(format!(
                "{} values for a {resolution}^3 grid",
                data.len()
            )));
        }
        if data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(OperatorError::InvalidParameter("voxel values must be 0 or 1".into()));
        }
        Ok(Self { resolution, data })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        let r = self.resolution;
        self.data[(i * r + j) * r + k]
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Voxel centers, one row per voxel, in storage order.
    pub fn coords(&self) -> Array2<f64> {
        voxel_coords(self.resolution)
    }

    pub fn values(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.data.len(), 1), self.data.clone()).expect("shape")
    }
}

pub fn voxel_coords(r: usize) -> Array2<f64> {
    let c = |i: usize| (2 * i + 1) as f64 / r as f64 - 1.0;
    let mut out = Array2::zeros((r * r * r, 3));
    for i in 0..r {
        for j in 0..r {
            for k in 0..r {
                let row = (i * r + j) * r + k;
                out[[row, 0]] = c(i);
                out[[row, 1]] = c(j);
                out[[row, 2]] = c(k);
            }
        }
    }
    out
}

pub fn occupancy_analytic(shape: &Shape, resolution: usize) -> Result<VoxelGrid, OperatorError> {
    if resolution < 8 {
        return Err(OperatorError::TooSmall(format!("resolution must be >= 8, got {resolution}")));
    }
    let coords = voxel_coords(resolution);
    let data = coords
        .rows()
        .into_iter()
        .map(|p| if shape.contains([p[0], p[1], p[2]]) { 1.0 } else { 0.0 })
        .collect();
    VoxelGrid::new(resolution, data)
}
