//! Uniform sampling on the unit cube and its boundary, plus deterministic
//! evaluation lattices.
//!
//! Every consumer draws from its own counter-based stream derived from the
//! master seed ([`stream_rng`]), so runs are reproducible and adding draws
//! to one phase never perturbs another.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Named stream of the master seed (ChaCha8 streams).
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// One training batch: interior points, boundary points with their face
/// attribution, and the measures |Omega| = 1 and |Gamma| = 2d of the unit
/// cube used to scale Monte Carlo means into integrals.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `n x d`, every point strictly inside `(0,1)^d`.
    pub interior: Array2<f64>,
    /// `m x d`, every point on exactly one face.
    pub boundary: Array2<f64>,
    /// Face of each boundary point: `2*axis + side` with side 0 at
    /// coordinate 0 and side 1 at coordinate 1.
    pub face_ids: Vec<usize>,
    pub interior_measure: f64,
    pub boundary_measure: f64,
}

fn unit_open(rng: &mut impl Rng) -> f64 {
    // Uniform(0,1), strictly inside: reject the (measure-zero) exact 0.0
    loop {
        let u: f64 = rng.gen();
        if u != 0.0 {
            return u;
        }
    }
}

/// `n` i.i.d. uniform points in the open cube `(0,1)^d`.
pub fn sample_interior(d: usize, n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut pts = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            pts[[i, j]] = unit_open(rng);
        }
    }
    pts
}

/// `n_per_face` uniform points on each of the `2d` faces, face-major order.
/// Faces have equal measure, so equal counts realize the uniform law on the
/// whole boundary.
pub fn sample_boundary(d: usize, n_per_face: usize, rng: &mut impl Rng) -> (Array2<f64>, Vec<usize>) {
    let total = 2 * d * n_per_face;
    let mut pts = Array2::zeros((total, d));
    let mut faces = Vec::with_capacity(total);
    let mut row = 0;
    for face in 0..2 * d {
        let axis = face / 2;
        let side = (face % 2) as f64;
        for _ in 0..n_per_face {
            for j in 0..d {
                pts[[row, j]] = if j == axis { side } else { unit_open(rng) };
            }
            faces.push(face);
            row += 1;
        }
    }
    (pts, faces)
}

/// Draw a full batch: interior first, then boundary (fixed order).
pub fn sample_batch(d: usize, n_interior: usize, n_per_face: usize, rng: &mut impl Rng) -> Batch {
    let interior = sample_interior(d, n_interior, rng);
    let (boundary, face_ids) = sample_boundary(d, n_per_face, rng);
    Batch {
        interior,
        boundary,
        face_ids,
        interior_measure: 1.0,
        boundary_measure: 2.0 * d as f64,
    }
}

/// The uniform lattice `{ih : 0 <= i <= n}^d` with `n = 1/h`, split into
/// interior and boundary subsets.
#[derive(Clone, Debug)]
pub struct Grid {
    pub dim: usize,
    /// Cells per axis (`n = 1/h`).
    pub n: usize,
    pub h: f64,
    /// All `(n+1)^d` lattice points, odometer order (last axis fastest).
    pub points: Array2<f64>,
    /// Row indices of points strictly inside the cube.
    pub interior_idx: Vec<usize>,
    /// Row indices of points with at least one coordinate at 0 or 1.
    pub boundary_idx: Vec<usize>,
}

impl Grid {
    /// Composite-trapezoid quadrature weight of each lattice point:
    /// `h^d * prod_axis (1/2 at the ends, 1 inside)`.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let scale = self.h.powi(self.dim as i32);
        self.points
            .rows()
            .into_iter()
            .map(|row| {
                let mut w = scale;
                for &c in row {
                    if c == 0.0 || c == 1.0 {
                        w *= 0.5;
                    }
                }
                w
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Build the evaluation lattice for spacing `h`; `1/h` must be an integer.
pub fn grid_points(d: usize, h: f64) -> Result<Grid> {
    if d < 1 {
        return Err(Error::Config("grid dimension must be >= 1".into()));
    }
    if h.is_nan() || h <= 0.0 || h > 1.0 {
        return Err(Error::Config(format!("grid spacing h={h} out of (0, 1]")));
    }
    let n_f = 1.0 / h;
    let n = n_f.round() as usize;
    if n == 0 || (n_f - n as f64).abs() > 1e-9 {
        return Err(Error::Config(format!("1/h must be an integer, got 1/{h} = {n_f}")));
    }
    let side = n + 1;
    let total = side.pow(d as u32);
    let mut points = Array2::zeros((total, d));
    let mut interior_idx = Vec::new();
    let mut boundary_idx = Vec::new();
    let mut idx = vec![0usize; d];
    for row in 0..total {
        let mut on_boundary = false;
        for j in 0..d {
            points[[row, j]] = idx[j] as f64 * h;
            if idx[j] == 0 || idx[j] == n {
                on_boundary = true;
            }
        }
        if on_boundary {
            boundary_idx.push(row);
        } else {
            interior_idx.push(row);
        }
        // odometer: last axis fastest
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < side {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(Grid { dim: d, n, h, points, interior_idx, boundary_idx })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_sampling_stays_strictly_inside_and_is_deterministic() {
        let mut rng = stream_rng(7, 0);
        let a = sample_interior(3, 100, &mut rng);
        assert!(a.iter().all(|&x| x > 0.0 && x < 1.0));
        let mut rng2 = stream_rng(7, 0);
        let b = sample_interior(3, 100, &mut rng2);
        assert_eq!(a, b);
        assert_eq!(sample_interior(2, 0, &mut rng).nrows(), 0);
    }

    #[test]
    fn interior_mean_is_near_half() {
        // CLT bound: 0.5 +- 3 * (1/sqrt(12)) / sqrt(1e6)
        let mut rng = stream_rng(123, 0);
        let pts = sample_interior(2, 1_000_000, &mut rng);
        for j in 0..2 {
            let mean = pts.column(j).mean().unwrap();
            assert!((mean - 0.5).abs() < 3.0 * (1.0 / 12f64.sqrt()) / 1e3);
        }
    }

    #[test]
    fn boundary_points_sit_on_their_assigned_face() {
        let mut rng = stream_rng(9, 1);
        let (pts, faces) = sample_boundary(2, 1, &mut rng);
        assert_eq!(pts.nrows(), 4);
        for (i, &f) in faces.iter().enumerate() {
            let axis = f / 2;
            let side = (f % 2) as f64;
            assert_eq!(pts[[i, axis]], side);
            // exactly one clamped coordinate per sample
            let clamped = (0..2).filter(|&j| pts[[i, j]] == 0.0 || pts[[i, j]] == 1.0).count();
            assert_eq!(clamped, 1);
        }
    }

    #[test]
    fn boundary_counts_and_measure_3d() {
        let mut rng = stream_rng(1, 2);
        let b = sample_batch(3, 4, 256, &mut rng);
        assert_eq!(b.boundary.nrows(), 1536);
        assert_eq!(b.boundary_measure, 6.0);
        for face in 0..6 {
            assert_eq!(b.face_ids.iter().filter(|&&f| f == face).count(), 256);
        }
    }

    #[test]
    fn boundary_free_coordinate_mean_is_near_half() {
        let mut rng = stream_rng(77, 3);
        let (pts, faces) = sample_boundary(2, 100_000, &mut rng);
        let mut sum = 0.0;
        let mut count = 0;
        for (i, &f) in faces.iter().enumerate() {
            if f == 0 {
                sum += pts[[i, 1]];
                count += 1;
            }
        }
        assert!((sum / count as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn grid_1d_partition() {
        let g = grid_points(1, 0.5).unwrap();
        assert_eq!(g.points.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(g.interior_idx, vec![1]);
        assert_eq!(g.boundary_idx, vec![0, 2]);
    }

    #[test]
    fn grid_counts_match_lattice_formulas() {
        let g = grid_points(2, 1.0 / 64.0).unwrap();
        assert_eq!(g.len(), 65 * 65);
        assert_eq!(g.interior_idx.len(), 63 * 63);
        assert_eq!(g.interior_idx.len() + g.boundary_idx.len(), g.len());
        let g3 = grid_points(3, 1.0 / 64.0).unwrap();
        assert_eq!(g3.len(), 274_625);
    }

    #[test]
    fn grid_rejects_non_integer_reciprocal() {
        assert!(grid_points(2, 0.3).is_err());
    }

    #[test]
    fn trapezoid_weights_sum_to_unit_volume() {
        let g = grid_points(2, 1.0 / 8.0).unwrap();
        let total: f64 = g.trapezoid_weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn streams_are_independent() {
        let a = sample_interior(2, 4, &mut stream_rng(5, 0));
        let b = sample_interior(2, 4, &mut stream_rng(5, 1));
        assert_ne!(a, b);
    }
}
