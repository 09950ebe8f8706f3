//! Uniform 1-d grids, midpoint-sampled coefficient fields, discrete
//! Dirichlet eigenpairs of v -> -(a v_x)_x, and the tridiagonal lift solve.
//!
//! The coefficient lives at cell midpoints so the conservative operator
//! (a_{j+1/2}(y_{j+1}-y_j) - a_{j-1/2}(y_j-y_{j-1}))/h^2 is self-adjoint in
//! the discrete L^2 inner product h * sum u_j v_j; the eigen machinery and
//! the control solver both lean on that.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Grids are dense-eigensolved; keep them at desk scale.
pub const MAX_CELLS: usize = 4096;

/// Uniform discretization of (x_left, x_right) into n_cells cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub x_left: f64,
    pub x_right: f64,
    pub n_cells: usize,
    pub h: f64,
}

impl Grid1D {
    /// Coordinate of node j, j = 0..=n_cells.
    pub fn node(&self, j: usize) -> f64 {
        self.x_left + j as f64 * self.h
    }

    /// Coordinate of the midpoint of cell j, j = 0..n_cells.
    pub fn midpoint(&self, j: usize) -> f64 {
        self.x_left + (j as f64 + 0.5) * self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    pub fn n_interior(&self) -> usize {
        self.n_cells - 1
    }

    pub fn length(&self) -> f64 {
        self.x_right - self.x_left
    }

    /// Nodes as a vector, for samplers and CSV output.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|j| self.node(j)).collect()
    }

    /// Index interval of nodes inside [a, b] (used for omega supports).
    pub fn node_range(&self, a: f64, b: f64) -> Result<(usize, usize)> {
        if !(a < b) {
            return Err(Error::config(format!("empty subinterval ({a}, {b})")));
        }
        let lo = ((a - self.x_left) / self.h).ceil().max(0.0) as usize;
        let hi = ((b - self.x_left) / self.h).floor() as usize;
        let hi = hi.min(self.n_cells);
        if lo > hi {
            return Err(Error::config(format!(
                "subinterval ({a}, {b}) contains no grid node"
            )));
        }
        Ok((lo, hi))
    }
}

pub fn build_grid(x_left: f64, x_right: f64, n_cells: usize) -> Result<Grid1D> {
    if !(x_left < x_right) {
        return Err(Error::config(format!("degenerate interval ({x_left}, {x_right})")));
    }
    if n_cells < 4 {
        return Err(Error::config(format!("need at least 4 cells, got {n_cells}")));
    }
    if n_cells > MAX_CELLS {
        return Err(Error::config(format!("grid capped at {MAX_CELLS} cells, got {n_cells}")));
    }
    let h = (x_right - x_left) / n_cells as f64;
    Ok(Grid1D { x_left, x_right, n_cells, h })
}

/// Wave-speed coefficient a(x) sampled at cell midpoints, with the certified
/// bounds and total variation the variable-coefficient estimates consume.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub values: Vec<f64>,
    pub a0: f64,
    pub a1: f64,
    pub total_variation: f64,
}

impl CoefficientField {
    /// a at the boundary node of the given end; the last midpoint sample
    /// stands in for the nodal value in boundary formulas.
    pub fn at_left_end(&self) -> f64 {
        self.values[0]
    }

    pub fn at_right_end(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

pub fn sample_coefficient(grid: &Grid1D, a: impl Fn(f64) -> f64) -> Result<CoefficientField> {
    let values: Vec<f64> = (0..grid.n_cells).map(|j| a(grid.midpoint(j))).collect();
    finish_field(values)
}

/// Constant-one coefficient.
pub fn unit_coefficient(grid: &Grid1D) -> CoefficientField {
    sample_coefficient(grid, |_| 1.0).expect("constant 1 is a valid coefficient")
}

fn finish_field(values: Vec<f64>) -> Result<CoefficientField> {
    let mut a0 = f64::INFINITY;
    let mut a1 = f64::NEG_INFINITY;
    for (j, &v) in values.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::config(format!(
                "coefficient sample a({j}) = {v} violates a(x) >= a0 > 0"
            )));
        }
        a0 = a0.min(v);
        a1 = a1.max(v);
    }
    let total_variation = values.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(CoefficientField { values, a0, a1, total_variation })
}

/// Reads a (x, a) table from CSV text and resamples it to cell midpoints by
/// linear interpolation. A header line `x,a` is accepted and skipped.
pub fn coefficient_from_csv(grid: &Grid1D, text: &str) -> Result<CoefficientField> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let sx = parts.next().unwrap_or("").trim();
        let sy = parts.next().unwrap_or("").trim();
        if lineno == 0 && sx.parse::<f64>().is_err() {
            continue; // header
        }
        let x: f64 = sx
            .parse()
            .map_err(|_| Error::config(format!("bad x value {sx:?} on line {}", lineno + 1)))?;
        let y: f64 = sy
            .parse()
            .map_err(|_| Error::config(format!("bad a value {sy:?} on line {}", lineno + 1)))?;
        xs.push(x);
        ys.push(y);
    }
    if xs.len() < 2 {
        return Err(Error::config("coefficient table needs at least two rows"));
    }
    if !xs.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::config("coefficient table x column must be strictly increasing"));
    }
    let interp = |x: f64| -> f64 {
        if x <= xs[0] {
            return ys[0];
        }
        if x >= *xs.last().unwrap() {
            return *ys.last().unwrap();
        }
        let i = xs.partition_point(|&v| v <= x) - 1;
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        ys[i] + t * (ys[i + 1] - ys[i])
    };
    sample_coefficient(grid, interp)
}

/// Eigenpairs of the discrete operator v -> -(a v_x)_x with homogeneous
/// Dirichlet ends, ascending, orthonormal in the discrete L^2 inner product.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub eigenvalues: Vec<f64>,
    /// Row-major: mode k occupies vectors[k * n_interior .. (k+1) * n_interior].
    vectors: Vec<f64>,
    pub n_interior: usize,
    pub k_max: usize,
}

impl ModeSet {
    pub fn mode(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n_interior..(k + 1) * self.n_interior]
    }

    /// Discrete L^2 coefficient of an interior vector against mode k.
    pub fn coefficient(&self, h: f64, v: &[f64], k: usize) -> f64 {
        h * dot(self.mode(k), v)
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Assembles the (negated) conservative operator as a symmetric tridiagonal
/// matrix on interior nodes and eigensolves it densely.
pub fn dirichlet_eigenpairs(
    grid: &Grid1D,
    field: &CoefficientField,
    k_max: usize,
) -> Result<ModeSet> {
    let m = grid.n_interior();
    if k_max == 0 || k_max > m {
        return Err(Error::config(format!("k_max = {k_max} out of range 1..={m}")));
    }
    let h2 = grid.h * grid.h;
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        a[(i, i)] = (field.values[i] + field.values[i + 1]) / h2;
        if i + 1 < m {
            a[(i, i + 1)] = -field.values[i + 1] / h2;
            a[(i + 1, i)] = -field.values[i + 1] / h2;
        }
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let mut eigenvalues = Vec::with_capacity(k_max);
    let mut vectors = Vec::with_capacity(k_max * m);
    let scale = 1.0 / grid.h.sqrt(); // unit 2-norm -> unit L^2_h norm
    for &idx in order.iter().take(k_max) {
        eigenvalues.push(eig.eigenvalues[idx]);
        let col = eig.eigenvectors.column(idx);
        // Deterministic sign: first entry of visible magnitude positive.
        let lead = col.iter().find(|v| v.abs() > 1e-12).copied().unwrap_or(1.0);
        let s = if lead < 0.0 { -scale } else { scale };
        vectors.extend(col.iter().map(|v| v * s));
    }
    Ok(ModeSet { eigenvalues, vectors, n_interior: m, k_max })
}

/// Closed-form discrete eigenvalue for a == 1 on an interval of length L:
/// lambda_k = (4/h^2) sin^2(k pi h / (2 L)).
pub fn uniform_eigenvalue(grid: &Grid1D, k: usize) -> f64 {
    let s = (k as f64 * std::f64::consts::PI * grid.h / (2.0 * grid.length())).sin();
    4.0 / (grid.h * grid.h) * s * s
}

/// Solves the tridiagonal system (a X_x)_x = phi1 with homogeneous Dirichlet
/// conditions (Thomas algorithm on the SPD negated operator).
pub fn poisson_lift(grid: &Grid1D, field: &CoefficientField, phi1: &[f64]) -> Result<Vec<f64>> {
    let m = grid.n_interior();
    if phi1.len() != m {
        return Err(Error::config(format!(
            "phi1 length {} does not match {} interior nodes",
            phi1.len(),
            m
        )));
    }
    // -(a X_x)_x = -phi1, assembled as A X = -phi1 with A SPD tridiagonal.
    let h2 = grid.h * grid.h;
    let mut diag: Vec<f64> = (0..m).map(|i| (field.values[i] + field.values[i + 1]) / h2).collect();
    let off: Vec<f64> = (0..m - 1).map(|i| -field.values[i + 1] / h2).collect();
    let mut rhs: Vec<f64> = phi1.iter().map(|v| -v).collect();
    // Forward elimination.
    for i in 1..m {
        let w = off[i - 1] / diag[i - 1];
        diag[i] -= w * off[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    // Back substitution.
    let mut x = vec![0.0; m];
    x[m - 1] = rhs[m - 1] / diag[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = (rhs[i] - off[i] * x[i + 1]) / diag[i];
    }
    Ok(x)
}

/// Applies the interior operator (a v_x)_x to an interior vector (zero ends).
pub fn apply_operator(grid: &Grid1D, field: &CoefficientField, v: &[f64]) -> Vec<f64> {
    let m = grid.n_interior();
    debug_assert_eq!(v.len(), m);
    let h2 = grid.h * grid.h;
    (0..m)
        .map(|i| {
            let left = if i == 0 { 0.0 } else { v[i - 1] };
            let right = if i + 1 == m { 0.0 } else { v[i + 1] };
            (field.values[i + 1] * (right - v[i]) - field.values[i] * (v[i] - left)) / h2
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn grid_arithmetic() {
        let g = build_grid(0.0, 1.0, 10).unwrap();
        assert_relative_eq!(g.h, 0.1);
        assert_eq!(g.n_nodes(), 11);
        assert!(build_grid(0.0, 1.0, 3).is_err());
        let g2 = build_grid(-1.0, 1.0, 8).unwrap();
        assert_relative_eq!(g2.h, 0.25);
    }

    #[test]
    fn coefficient_sampling() {
        let g = build_grid(0.0, 1.0, 10).unwrap();
        let c = sample_coefficient(&g, |_| 1.0).unwrap();
        assert_eq!((c.a0, c.a1, c.total_variation), (1.0, 1.0, 0.0));

        let c = sample_coefficient(&g, |x| 1.0 + x).unwrap();
        assert_relative_eq!(c.a0, 1.05, max_relative = 1e-15);
        assert_relative_eq!(c.a1, 1.95, max_relative = 1e-15);
        assert_relative_eq!(c.total_variation, 0.9, max_relative = 1e-12);

        assert!(sample_coefficient(&g, |_| -1.0).is_err());
    }

    #[test]
    fn csv_roundtrip_resampling() {
        let g = build_grid(0.0, 1.0, 8).unwrap();
        let table = "x,a\n0.0,1.0\n0.5,1.0\n0.5000001,4.0\n1.0,4.0\n";
        let c = coefficient_from_csv(&g, table).unwrap();
        assert_relative_eq!(c.a0, 1.0);
        assert_relative_eq!(c.a1, 4.0);
        assert_relative_eq!(c.total_variation, 3.0, max_relative = 1e-6);
    }

    #[test]
    fn eigenvalues_match_closed_form() {
        let g = build_grid(0.0, 1.0, 100).unwrap();
        let f = unit_coefficient(&g);
        let modes = dirichlet_eigenpairs(&g, &f, 20).unwrap();
        for k in 1..=20 {
            assert_relative_eq!(
                modes.eigenvalues[k - 1],
                uniform_eigenvalue(&g, k),
                max_relative = 1e-10
            );
        }
        // lambda_1^h = (4/h^2) sin^2(pi h / 2) = 9.868792685... at n = 100,
        // just below pi^2.
        assert_relative_eq!(modes.eigenvalues[0], 9.868792685368858, max_relative = 1e-10);
        assert!(modes.eigenvalues[0] < PI * PI);
    }

    #[test]
    fn eigenvectors_orthonormal() {
        let g = build_grid(0.0, 1.0, 60).unwrap();
        let f = sample_coefficient(&g, |x| 1.0 + 0.5 * (3.0 * x).sin().abs()).unwrap();
        let modes = dirichlet_eigenpairs(&g, &f, 59).unwrap();
        for i in 0..modes.k_max {
            for j in i..modes.k_max {
                let gram = g.h * dot(modes.mode(i), modes.mode(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (gram - expect).abs() < 1e-10,
                    "gram({i},{j}) = {gram}"
                );
            }
        }
    }

    #[test]
    fn first_eigenvalue_second_order() {
        // lambda_1^h -> pi^2 at observed order 2 across three grids.
        let mut errs = Vec::new();
        for n in [50, 100, 200] {
            let g = build_grid(0.0, 1.0, n).unwrap();
            let f = unit_coefficient(&g);
            let modes = dirichlet_eigenpairs(&g, &f, 1).unwrap();
            errs.push((PI * PI - modes.eigenvalues[0]).abs());
        }
        let order1 = (errs[0] / errs[1]).log2();
        let order2 = (errs[1] / errs[2]).log2();
        assert!(order1 > 1.9 && order1 < 2.1, "order {order1}");
        assert!(order2 > 1.9 && order2 < 2.1, "order {order2}");
    }

    #[test]
    fn lift_solves_the_discrete_equation() {
        let g = build_grid(0.0, 1.0, 64).unwrap();
        let f = sample_coefficient(&g, |x| 1.0 + x * x).unwrap();
        let phi1: Vec<f64> = (1..g.n_cells).map(|j| (2.5 * g.node(j)).cos()).collect();
        let x = poisson_lift(&g, &f, &phi1).unwrap();
        let back = apply_operator(&g, &f, &x);
        let scale = phi1.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (b, p) in back.iter().zip(&phi1) {
            assert!((b - p).abs() <= 1e-12 * scale);
        }
        // Zero in, zero out; linearity to roundoff.
        let zero = poisson_lift(&g, &f, &vec![0.0; g.n_interior()]).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let twice = poisson_lift(&g, &f, &phi1.iter().map(|v| 2.0 * v).collect::<Vec<_>>()).unwrap();
        for (t, x) in twice.iter().zip(&x) {
            assert_relative_eq!(*t, 2.0 * x, max_relative = 1e-13);
        }
    }

    #[test]
    fn lift_matches_analytic_solution() {
        // X'' = -pi^2 sin(pi x) has solution sin(pi x).
        let g = build_grid(0.0, 1.0, 200).unwrap();
        let f = unit_coefficient(&g);
        let phi1: Vec<f64> = (1..g.n_cells).map(|j| -PI * PI * (PI * g.node(j)).sin()).collect();
        let x = poisson_lift(&g, &f, &phi1).unwrap();
        let mut worst = 0.0f64;
        for (j, v) in x.iter().enumerate() {
            worst = worst.max((v - (PI * g.node(j + 1)).sin()).abs());
        }
        assert!(worst < 5.0 * g.h * g.h, "max error {worst}");
    }
}
