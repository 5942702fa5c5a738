//! Independent finite-difference reference solvers: second-order stencils
//! on the unit cube, conjugate gradients, inverse power iteration, and the
//! normalized gradient flow for the Gross-Pitaevskii ground state. Used as
//! test oracles and as the reference solution where no closed form exists.

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::problems::{Family, ProblemSpec};
use crate::sampling::{grid_points, Grid};

/// Reference solution on a lattice. Values cover the full lattice in the
/// same odometer order as [`Grid::points`]; boundary entries carry the
/// Dirichlet data.
#[derive(Clone, Debug)]
pub struct GridSolution {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// Eigenvalue, for the eigen solvers.
    pub rho: Option<f64>,
}

impl GridSolution {
    pub fn spacing(&self) -> f64 {
        self.grid.h
    }
}

/// Second-order stencil for `-div(A grad u) + c u` on the interior lattice,
/// with edge-midpoint diffusion coefficients. Dirichlet data enters the
/// right-hand side.
struct Stencil {
    dim: usize,
    n: usize,
    h: f64,
    /// Interior points per axis (`n - 1`).
    m: usize,
    size: usize,
    /// Per interior point: `2*dim` edge coefficients, minus/plus per axis.
    edge: Vec<f64>,
    react: Vec<f64>,
    /// Interior lattice coordinates of each flat index (1..=m per axis).
    coords: Vec<u32>,
}

impl Stencil {
    fn build(spec: &ProblemSpec, n: usize) -> Result<Self> {
        if spec.diffusion_matrix.is_some() {
            return Err(Error::Config(
                "finite-difference solvers support scalar diffusion only".into(),
            ));
        }
        let d = spec.dim;
        if d < 1 || d > 3 {
            return Err(Error::Config(format!("finite-difference solvers support d in 1..=3, got {d}")));
        }
        if n < 2 {
            return Err(Error::Config(format!("lattice size n must be >= 2, got {n}")));
        }
        let h = 1.0 / n as f64;
        let m = n - 1;
        let size = m.pow(d as u32);
        let mut edge = vec![0.0; size * 2 * d];
        let mut react = vec![0.0; size];
        let mut coords = vec![0u32; size * d];
        let mut li = vec![1usize; d];
        let mut x = vec![0.0; d];
        let mut xm = vec![0.0; d];
        for k in 0..size {
            for a in 0..d {
                coords[k * d + a] = li[a] as u32;
                x[a] = li[a] as f64 * h;
            }
            react[k] = (spec.reaction)(&x);
            for a in 0..d {
                xm.copy_from_slice(&x);
                xm[a] = x[a] - 0.5 * h;
                edge[(k * d + a) * 2] = (spec.diffusion)(&xm);
                xm[a] = x[a] + 0.5 * h;
                edge[(k * d + a) * 2 + 1] = (spec.diffusion)(&xm);
            }
            for a in (0..d).rev() {
                li[a] += 1;
                if li[a] <= m {
                    break;
                }
                li[a] = 1;
            }
        }
        Ok(Stencil { dim: d, n, h, m, size, edge, react, coords })
    }

    fn stride(&self, axis: usize) -> usize {
        self.m.pow((self.dim - 1 - axis) as u32)
    }

    /// `out = (-div(A grad) + c) u` with zero boundary values.
    fn apply(&self, u: &[f64], out: &mut [f64]) {
        let inv_h2 = 1.0 / (self.h * self.h);
        let d = self.dim;
        for k in 0..self.size {
            let mut acc = self.react[k] * u[k];
            for a in 0..d {
                let li = self.coords[k * d + a] as usize;
                let s = self.stride(a);
                let em = self.edge[(k * d + a) * 2];
                let ep = self.edge[(k * d + a) * 2 + 1];
                let um = if li > 1 { u[k - s] } else { 0.0 };
                let up = if li < self.m { u[k + s] } else { 0.0 };
                acc += (em * (u[k] - um) + ep * (u[k] - up)) * inv_h2;
            }
            out[k] = acc;
        }
    }

    /// Interior coordinates of flat index `k`.
    fn point(&self, k: usize, x: &mut [f64]) {
        for a in 0..self.dim {
            x[a] = self.coords[k * self.dim + a] as f64 * self.h;
        }
    }

    /// Map the interior flat index to the full-lattice row index.
    fn full_index(&self, k: usize) -> usize {
        let side = self.n + 1;
        let mut idx = 0;
        for a in 0..self.dim {
            idx = idx * side + self.coords[k * self.dim + a] as usize;
        }
        idx
    }

    fn boundary_rhs(&self, spec: &ProblemSpec, rhs: &mut [f64]) {
        let inv_h2 = 1.0 / (self.h * self.h);
        let d = self.dim;
        let mut x = vec![0.0; d];
        for k in 0..self.size {
            for a in 0..d {
                let li = self.coords[k * d + a] as usize;
                if li == 1 {
                    self.point(k, &mut x);
                    x[a] = 0.0;
                    rhs[k] += self.edge[(k * d + a) * 2] * (spec.boundary)(&x) * inv_h2;
                }
                if li == self.m {
                    self.point(k, &mut x);
                    x[a] = 1.0;
                    rhs[k] += self.edge[(k * d + a) * 2 + 1] * (spec.boundary)(&x) * inv_h2;
                }
            }
        }
    }
}

/// Conjugate gradients on an SPD operator, relative residual `tol`.
fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rs: f64 = r.iter().map(|v| v * v).sum();
    let mut iter = 0;
    while rs.sqrt() / bnorm > tol {
        if iter >= max_iter {
            return Err(Error::NoConvergence(format!(
                "conjugate gradients: residual {} after {max_iter} iterations",
                rs.sqrt() / bnorm
            )));
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
        iter += 1;
    }
    Ok(x)
}

const CG_TOL: f64 = 1e-10;

fn assemble_solution(stencil: &Stencil, spec: &ProblemSpec, interior: &[f64], rho: Option<f64>) -> Result<GridSolution> {
    let grid = grid_points(spec.dim, stencil.h)?;
    let mut values = vec![0.0; grid.len()];
    for k in 0..stencil.size {
        values[stencil.full_index(k)] = interior[k];
    }
    for &bi in &grid.boundary_idx {
        let row = grid.points.row(bi);
        values[bi] = (spec.boundary)(row.as_slice().unwrap());
    }
    Ok(GridSolution { grid, values, rho })
}

/// Solve the elliptic problem on an `n`-cell lattice by conjugate
/// gradients (residual 1e-10, at most `10 n^2` iterations).
pub fn fd_poisson(spec: &ProblemSpec, n: usize) -> Result<GridSolution> {
    if spec.family != Family::Elliptic {
        return Err(Error::Config("fd_poisson expects an elliptic problem".into()));
    }
    let stencil = Stencil::build(spec, n)?;
    let mut rhs = vec![0.0; stencil.size];
    let mut x = vec![0.0; spec.dim];
    for k in 0..stencil.size {
        stencil.point(k, &mut x);
        rhs[k] = (spec.source)(&x);
    }
    stencil.boundary_rhs(spec, &mut rhs);
    let u = conjugate_gradient(|v, out| stencil.apply(v, out), &rhs, CG_TOL, 10 * n * n)?;
    assemble_solution(&stencil, spec, &u, None)
}

/// Smallest eigenpair by inverse power iteration (shift 0), eigenvalue
/// tolerance 1e-10, at most 10^4 outer iterations. The returned
/// eigenfunction has discrete L2 norm `sqrt(h^d sum u^2) = 1` and positive
/// mean.
pub fn fd_eigen_smallest(spec: &ProblemSpec, n: usize) -> Result<GridSolution> {
    if spec.family != Family::LinearEigen {
        return Err(Error::Config("fd_eigen_smallest expects the linear eigen family".into()));
    }
    let stencil = Stencil::build(spec, n)?;
    let hd = stencil.h.powi(spec.dim as i32);
    let mut u = vec![1.0; stencil.size];
    normalize(&mut u, hd);
    let mut au = vec![0.0; stencil.size];
    let mut rho_old = f64::INFINITY;
    for _ in 0..10_000 {
        let mut w = conjugate_gradient(|v, out| stencil.apply(v, out), &u, CG_TOL, 10 * n * n)?;
        normalize(&mut w, hd);
        stencil.apply(&w, &mut au);
        let rho = hd * w.iter().zip(&au).map(|(a, b)| a * b).sum::<f64>();
        u = w;
        if (rho - rho_old).abs() < 1e-10 {
            if u.iter().sum::<f64>() < 0.0 {
                u.iter_mut().for_each(|v| *v = -*v);
            }
            return assemble_solution(&stencil, spec, &u, Some(rho));
        }
        rho_old = rho;
    }
    Err(Error::NoConvergence("inverse power iteration: 10^4 iterations".into()))
}

fn normalize(u: &mut [f64], hd: f64) {
    let norm = (hd * u.iter().map(|v| v * v).sum::<f64>()).sqrt();
    u.iter_mut().for_each(|v| *v /= norm);
}

/// Flow diagnostics for the ground-state solver.
pub struct GpFlow {
    pub solution: GridSolution,
    /// Energy after every accepted step (non-increasing after the first).
    pub energies: Vec<f64>,
    pub steps: usize,
}

/// Ground state by normalized gradient flow with the cubic term weighted by
/// `kappa` (1 = the full problem; smaller values continue toward the linear
/// ground state). Step `tau = h^2/8`, stop when the energy changes by less
/// than 1e-10, at most 10^6 steps.
pub fn fd_gp_flow(spec: &ProblemSpec, n: usize, kappa: f64) -> Result<GpFlow> {
    if spec.family != Family::NonlinearEigen {
        return Err(Error::Config("fd_gp_ground_state expects the nonlinear eigen family".into()));
    }
    let stencil = Stencil::build(spec, n)?;
    let d = spec.dim;
    let hd = stencil.h.powi(d as i32);
    let tau = stencil.h * stencil.h / 8.0;

    // positive initial profile: product of sines, normalized
    let mut u = vec![0.0; stencil.size];
    let mut x = vec![0.0; d];
    for k in 0..stencil.size {
        stencil.point(k, &mut x);
        u[k] = x.iter().map(|&t| (std::f64::consts::PI * t).sin()).product();
    }
    normalize(&mut u, hd);

    let mut op = vec![0.0; stencil.size];
    let energy = |u: &[f64], op: &mut [f64], stencil: &Stencil| -> f64 {
        stencil.apply(u, op);
        let mut e = 0.0;
        for k in 0..stencil.size {
            // react already sits inside apply; energy splits it back out as
            // 1/2 V u^2, so use the pure second-order part op - react*u
            let lap = op[k] - stencil.react[k] * u[k];
            e += 0.5 * u[k] * lap
                + 0.5 * stencil.react[k] * u[k] * u[k]
                + 0.25 * kappa * u[k].powi(4);
        }
        e * hd
    };

    let mut e_old = energy(&u, &mut op, &stencil);
    let mut energies = vec![e_old];
    let max_steps = 1_000_000;
    for step in 0..max_steps {
        stencil.apply(&u, &mut op);
        let mut w = vec![0.0; stencil.size];
        for k in 0..stencil.size {
            w[k] = u[k] - tau * (op[k] + kappa * u[k].powi(3));
        }
        normalize(&mut w, hd);
        let e = energy(&w, &mut op, &stencil);
        if step > 0 && e > e_old + 1e-12 * e_old.abs().max(1.0) {
            return Err(Error::Numeric(format!(
                "gradient flow energy increased at step {step}: {e_old} -> {e}"
            )));
        }
        energies.push(e);
        u = w;
        if (e - e_old).abs() < 1e-10 {
            stencil.apply(&u, &mut op);
            let mut rho = 0.0;
            for k in 0..stencil.size {
                rho += u[k] * op[k] + kappa * u[k].powi(4);
            }
            rho *= hd;
            let solution = assemble_solution(&stencil, spec, &u, Some(rho))?;
            return Ok(GpFlow { solution, energies, steps: step + 1 });
        }
        e_old = e;
    }
    Err(Error::NoConvergence(format!("gradient flow: {max_steps} steps")))
}

/// Ground state of the Gross-Pitaevskii problem (full cubic term).
pub fn fd_gp_ground_state(spec: &ProblemSpec, n: usize) -> Result<GridSolution> {
    Ok(fd_gp_flow(spec, n, 1.0)?.solution)
}

/// Multilinear interpolation of a grid solution at an arbitrary point of
/// the closed cube.
pub fn interpolate(sol: &GridSolution, x: &[f64]) -> Result<f64> {
    let d = sol.grid.dim;
    if x.len() != d {
        return Err(Error::Dimension(format!("point has dimension {}, grid has {d}", x.len())));
    }
    for &c in x {
        if !(-1e-12..=1.0 + 1e-12).contains(&c) {
            return Err(Error::Config(format!("point {x:?} outside the closed unit cube")));
        }
    }
    let n = sol.grid.n;
    let side = n + 1;
    let mut cell = [0usize; 3];
    let mut t = [0.0f64; 3];
    for a in 0..d {
        let scaled = (x[a].clamp(0.0, 1.0)) * n as f64;
        let i = (scaled.floor() as usize).min(n - 1);
        cell[a] = i;
        t[a] = scaled - i as f64;
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = 0;
        for a in 0..d {
            let bit = (corner >> a) & 1;
            w *= if bit == 1 { t[a] } else { 1.0 - t[a] };
            idx = idx * side + cell[a] + bit;
        }
        acc += w * sol.values[idx];
    }
    Ok(acc)
}

/// A grid solution viewed as a scalar field (multilinear interpolation;
/// gradients are the interpolant's cellwise derivatives).
pub struct OracleField<'a>(pub &'a GridSolution);

impl ScalarField for OracleField<'_> {
    fn dim(&self) -> usize {
        self.0.grid.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        interpolate(self.0, x).expect("point inside the cube")
    }

    fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.0.grid.dim;
        let n = self.0.grid.n;
        let side = n + 1;
        let mut cell = [0usize; 3];
        let mut t = [0.0f64; 3];
        for a in 0..d {
            let scaled = x[a].clamp(0.0, 1.0) * n as f64;
            let i = (scaled.floor() as usize).min(n - 1);
            cell[a] = i;
            t[a] = scaled - i as f64;
        }
        let mut value = 0.0;
        grad[..d].fill(0.0);
        for corner in 0..(1usize << d) {
            let mut idx = 0;
            for a in 0..d {
                idx = idx * side + cell[a] + ((corner >> a) & 1);
            }
            let u = self.0.values[idx];
            let mut w = 1.0;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                w *= if bit == 1 { t[a] } else { 1.0 - t[a] };
            }
            value += w * u;
            for a in 0..d {
                let mut dw = 1.0;
                for b in 0..d {
                    let bit = (corner >> b) & 1;
                    if b == a {
                        dw *= if bit == 1 { 1.0 } else { -1.0 };
                    } else {
                        dw *= if bit == 1 { t[b] } else { 1.0 - t[b] };
                    }
                }
                grad[a] += dw * u * n as f64;
            }
        }
        value
    }
}

/// Export lattice values in the plain-text checkpoint format (one decimal
/// value per line, 17 significant digits).
pub fn export_text(sol: &GridSolution, path: &std::path::Path) -> Result<()> {
    let header = format!(
        "varsolve-grid v1; d={}; n={}; rho={}",
        sol.grid.dim,
        sol.grid.n,
        sol.rho.map_or("none".to_string(), |r| format!("{r:.16e}"))
    );
    checkpoint::write_text_raw(path, &header, &sol.values)
}
