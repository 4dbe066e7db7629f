//! Tensor-product discretization of the slab Omega = T^2 x (0,1).
//!
//! Periodic directions x1, x2 carry uniform Fourier nodes; the wall-normal
//! direction x3 carries Chebyshev-Gauss-Lobatto nodes mapped affinely to
//! [0,1], which clusters resolution at the vacuum faces where the density
//! degenerates. Differentiation is spectral in every direction and is
//! realized by dense per-axis matrices (exact for resolved trigonometric
//! modes and for polynomials up to degree n3-1); quadrature is trapezoid in
//! x1, x2 and Clenshaw-Curtis in x3.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Shared handle to a grid; fields keep one of these.
pub type Grid = Arc<GridSpec>;

/// Fixed discretization of the slab.
#[derive(Debug)]
pub struct GridSpec {
    /// Fourier mode/node count in x1 (even, >= 4).
    pub n1: usize,
    /// Fourier mode/node count in x2 (even, >= 4).
    pub n2: usize,
    /// Chebyshev-Lobatto node count in x3 (odd, >= 5, includes both faces).
    pub n3: usize,
    /// x3 collocation nodes, strictly increasing, first 0, last 1.
    pub x3_nodes: Vec<f64>,
    /// Clenshaw-Curtis weights on [0,1], positive, summing to 1.
    pub quadrature_weights: Vec<f64>,
    /// Periodic spectral differentiation matrix for x1 (n1 x n1, row-major).
    d1: Vec<f64>,
    /// Periodic spectral differentiation matrix for x2.
    d2: Vec<f64>,
    /// Chebyshev analysis matrix: x3 samples -> coefficients.
    cheb_analysis: Vec<f64>,
    /// Chebyshev synthesis matrix: coefficients -> x3 samples.
    cheb_synthesis: Vec<f64>,
    /// 2/3-rule dealiasing projection for x1.
    p1: Vec<f64>,
    /// 2/3-rule dealiasing projection for x2.
    p2: Vec<f64>,
}

/// Chebyshev-Gauss-Lobatto nodes mapped to [0,1], increasing.
pub fn lobatto_nodes_01(n: usize) -> Vec<f64> {
    let big_n = n - 1;
    (0..n)
        .map(|j| {
            // 0.5*(1 - cos(j*pi/N)) evaluated stably; endpoints exact.
            if j == 0 {
                0.0
            } else if j == big_n {
                1.0
            } else if 2 * j == big_n {
                0.5
            } else {
                0.5 * (1.0 - (j as f64 * PI / big_n as f64).cos())
            }
        })
        .collect()
}

/// Clenshaw-Curtis weights on [0,1] for the mapped Lobatto nodes.
///
/// Exact for polynomials of degree <= n-1; the weights sum to 1.
pub fn clenshaw_curtis_weights_01(n: usize) -> Vec<f64> {
    let big_n = n - 1;
    let mut w = vec![0.0; n];
    for (j, wj) in w.iter_mut().enumerate() {
        let cj = if j == 0 || j == big_n { 1.0 } else { 2.0 };
        let mut s = 1.0;
        for k in 1..=big_n / 2 {
            let bk = if 2 * k == big_n { 1.0 } else { 2.0 };
            s -= bk / ((4 * k * k - 1) as f64)
                * (2.0 * k as f64 * j as f64 * PI / big_n as f64).cos();
        }
        // Factor 1/2 maps the classical [-1,1] weights to [0,1].
        *wj = 0.5 * cj * s / big_n as f64;
    }
    w
}

/// Spectral differentiation matrix on the mapped Lobatto nodes of [0,1].
///
/// Built from the barycentric weights of the Chebyshev points, which are
/// invariant under the affine map; differentiates polynomials of degree
/// <= n-1 exactly.
pub fn cheb_diff_matrix_01(n: usize) -> Vec<f64> {
    let nodes = lobatto_nodes_01(n);
    let big_n = n - 1;
    let mut bary = vec![0.0; n];
    for (j, b) in bary.iter_mut().enumerate() {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        *b = if j == 0 || j == big_n { 0.5 * sign } else { sign };
    }
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                d[i * n + j] = v;
                diag -= v;
            }
        }
        d[i * n + i] = diag;
    }
    d
}

/// Chebyshev analysis matrix: samples on the increasing mapped nodes to
/// series coefficients of F(s), s = 2 x3 - 1 (DCT-I with the node reversal
/// folded in).
fn cheb_analysis_matrix(n: usize) -> Vec<f64> {
    let big_n = n - 1;
    let mut a = vec![0.0; n * n];
    for k in 0..n {
        let gamma = if k == 0 || k == big_n { big_n as f64 } else { big_n as f64 / 2.0 };
        for j in 0..n {
            // Our node j sits at s = -cos(j pi / N) = cos((N - j) pi / N).
            let jj = big_n - j;
            let half = if jj == 0 || jj == big_n { 0.5 } else { 1.0 };
            a[k * n + j] = half * (PI * (k * jj) as f64 / big_n as f64).cos() / gamma;
        }
    }
    a
}

/// Chebyshev synthesis matrix: coefficients to samples on the mapped nodes.
fn cheb_synthesis_matrix(n: usize) -> Vec<f64> {
    let big_n = n - 1;
    let mut s = vec![0.0; n * n];
    for j in 0..n {
        let jj = big_n - j;
        for k in 0..n {
            s[j * n + k] = (PI * (k * jj) as f64 / big_n as f64).cos();
        }
    }
    s
}

/// Coefficient recurrence for the derivative of a Chebyshev series on
/// [-1,1]; exact in exact arithmetic, numerically far stabler than a dense
/// differentiation matrix under repeated application.
fn cheb_coeff_derivative(c: &[f64], d: &mut [f64]) {
    let n = c.len();
    let big_n = n - 1;
    d[big_n] = 0.0;
    if big_n >= 1 {
        d[big_n - 1] = 2.0 * big_n as f64 * c[big_n];
    }
    for k in (1..big_n.saturating_sub(1)).rev() {
        d[k] = d[k + 2] + 2.0 * (k + 1) as f64 * c[k + 1];
    }
    if big_n >= 2 {
        d[0] = c[1] + d[2] / 2.0;
    } else if big_n >= 1 {
        d[0] = c[1];
    }
}

/// Periodic spectral differentiation matrix for period-1 uniform nodes.
fn fourier_diff_matrix(n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let k = i as isize - j as isize;
                let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                d[i * n + j] = PI * sign / (PI * k as f64 / n as f64).tan();
            }
        }
    }
    d
}

/// 2/3-rule truncation as a real projection matrix (modes |k| <= n/3 kept).
fn dealias_projection_matrix(n: usize) -> Vec<f64> {
    let kc = n / 3;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = i as isize - j as isize;
            let mut s = 1.0;
            for k in 1..=kc {
                s += 2.0 * (2.0 * PI * k as f64 * d as f64 / n as f64).cos();
            }
            p[i * n + j] = s / n as f64;
        }
    }
    p
}

/// Build the tensor-product grid.
pub fn make_grid(n1: usize, n2: usize, n3: usize) -> Result<Grid> {
    if n1 < 4 || n1 % 2 != 0 || n2 < 4 || n2 % 2 != 0 {
        return Err(Error::InvalidResolution(format!(
            "n1, n2 must be even and >= 4, got ({n1}, {n2})"
        )));
    }
    if n3 < 5 || n3 % 2 == 0 {
        return Err(Error::InvalidResolution(format!(
            "n3 must be odd and >= 5 (collocation includes the midpoint), got {n3}"
        )));
    }
    Ok(Arc::new(GridSpec {
        n1,
        n2,
        n3,
        x3_nodes: lobatto_nodes_01(n3),
        quadrature_weights: clenshaw_curtis_weights_01(n3),
        d1: fourier_diff_matrix(n1),
        d2: fourier_diff_matrix(n2),
        cheb_analysis: cheb_analysis_matrix(n3),
        cheb_synthesis: cheb_synthesis_matrix(n3),
        p1: dealias_projection_matrix(n1),
        p2: dealias_projection_matrix(n2),
    }))
}

impl GridSpec {
    /// Nodes per scalar component.
    pub fn node_count(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    /// Uniform x1 coordinate of column i1.
    pub fn x1(&self, i1: usize) -> f64 {
        i1 as f64 / self.n1 as f64
    }

    /// Uniform x2 coordinate of column i2.
    pub fn x2(&self, i2: usize) -> f64 {
        i2 as f64 / self.n2 as f64
    }

    /// Flat node index with i1 fastest.
    #[inline]
    pub fn node_index(&self, i3: usize, i2: usize, i1: usize) -> usize {
        (i3 * self.n2 + i2) * self.n1 + i1
    }
}

/// Samples of a scalar/vector/tensor quantity on a grid.
///
/// Values are indexed `(component, i3, i2, i1)` with i1 fastest. Map-like
/// fields (flow maps, shear test velocities) additionally carry a constant
/// `linear_trend` L so that `values = L . x + periodic part`; spectral
/// differentiation along the periodic axes subtracts the trend before the
/// transform, which keeps derivatives of non-periodic affine parts exact.
#[derive(Debug, Clone)]
pub struct Field {
    pub grid: Grid,
    pub components: usize,
    pub values: Vec<f64>,
    /// Row-major `components x 3` gradient of the affine part.
    pub linear_trend: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid, components: usize) -> Field {
        Field {
            grid: grid.clone(),
            components,
            values: vec![0.0; components * grid.node_count()],
            linear_trend: vec![0.0; components * 3],
        }
    }

    /// Scalar field from a closure of the coordinates.
    pub fn scalar_from_fn(grid: &Grid, f: impl Fn(f64, f64, f64) -> f64) -> Field {
        let mut out = Field::zeros(grid, 1);
        out.fill_component(0, &f);
        out
    }

    /// Vector field from three coordinate closures.
    pub fn vector_from_fn(
        grid: &Grid,
        f: impl Fn(f64, f64, f64) -> [f64; 3],
    ) -> Field {
        let mut out = Field::zeros(grid, 3);
        let (n1, n2, n3) = (grid.n1, grid.n2, grid.n3);
        for i3 in 0..n3 {
            let x3 = grid.x3_nodes[i3];
            for i2 in 0..n2 {
                let x2 = grid.x2(i2);
                for i1 in 0..n1 {
                    let v = f(grid.x1(i1), x2, x3);
                    let node = grid.node_index(i3, i2, i1);
                    for c in 0..3 {
                        out.values[c * grid.node_count() + node] = v[c];
                    }
                }
            }
        }
        out
    }

    fn fill_component(&mut self, c: usize, f: &impl Fn(f64, f64, f64) -> f64) {
        let grid = self.grid.clone();
        let base = c * grid.node_count();
        for i3 in 0..grid.n3 {
            let x3 = grid.x3_nodes[i3];
            for i2 in 0..grid.n2 {
                let x2 = grid.x2(i2);
                for i1 in 0..grid.n1 {
                    self.values[base + grid.node_index(i3, i2, i1)] = f(grid.x1(i1), x2, x3);
                }
            }
        }
    }

    /// Declare the gradient of the field's affine (non-periodic) part.
    pub fn with_linear_trend(mut self, trend: &[f64]) -> Field {
        assert_eq!(trend.len(), self.components * 3);
        self.linear_trend.copy_from_slice(trend);
        self
    }

    /// Read-only view of one component.
    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.node_count();
        &self.values[c * n..(c + 1) * n]
    }

    /// Mutable view of one component.
    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.grid.node_count();
        &mut self.values[c * n..(c + 1) * n]
    }

    /// Value of component `c` at node `(i3, i2, i1)`.
    #[inline]
    pub fn at(&self, c: usize, i3: usize, i2: usize, i1: usize) -> f64 {
        self.values[c * self.grid.node_count() + self.grid.node_index(i3, i2, i1)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// In-place `self += scale * other`; linear trends add as well.
    pub fn add_scaled(&mut self, other: &Field, scale: f64) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a += scale * b;
        }
        for (a, b) in self.linear_trend.iter_mut().zip(other.linear_trend.iter()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.values.iter_mut() {
            *v *= s;
        }
        for v in self.linear_trend.iter_mut() {
            *v *= s;
        }
    }

    /// Pointwise product of two scalar-compatible fields (componentwise
    /// against a scalar multiplier).
    pub fn mul_scalar_field(&self, scalar: &Field) -> Field {
        assert_eq!(scalar.components, 1);
        let mut out = self.clone();
        out.linear_trend.iter_mut().for_each(|t| *t = 0.0);
        let n = self.grid.node_count();
        for c in 0..self.components {
            for i in 0..n {
                out.values[c * n + i] = self.values[c * n + i] * scalar.values[i];
            }
        }
        out
    }
}

/// Apply an `n x n` row-major matrix along one axis of a component.
///
/// A per-line reference value is subtracted before the product and the
/// matrix's exact action on constants (`const_gain`: 0 for differentiation,
/// 1 for projections) is restored afterwards. Rounding noise then scales
/// with the line's variation rather than its magnitude, which matters in
/// chained spectral derivatives.
fn apply_along_axis(
    grid: &GridSpec,
    mat: &[f64],
    const_gain: f64,
    axis: usize,
    input: &[f64],
    output: &mut [f64],
) {
    let (n1, n2, n3) = (grid.n1, grid.n2, grid.n3);
    match axis {
        1 => {
            for line in 0..n2 * n3 {
                let base = line * n1;
                let refv = input[base];
                for i in 0..n1 {
                    let row = &mat[i * n1..(i + 1) * n1];
                    let mut s = 0.0;
                    for j in 0..n1 {
                        s += row[j] * (input[base + j] - refv);
                    }
                    output[base + i] = s + const_gain * refv;
                }
            }
        }
        2 => {
            for i3 in 0..n3 {
                for i1 in 0..n1 {
                    let base = i3 * n2 * n1 + i1;
                    let refv = input[base];
                    for i in 0..n2 {
                        let row = &mat[i * n2..(i + 1) * n2];
                        let mut s = 0.0;
                        for j in 0..n2 {
                            s += row[j] * (input[base + j * n1] - refv);
                        }
                        output[base + i * n1] = s + const_gain * refv;
                    }
                }
            }
        }
        _ => unreachable!("axis must be 1 or 2; axis 3 goes through the transform"),
    }
}

/// Spectral x3 derivative of one component via Chebyshev coefficient space.
fn diff_axis3(grid: &GridSpec, input: &[f64], output: &mut [f64]) {
    let n3 = grid.n3;
    let plane = grid.n1 * grid.n2;
    let mut col = vec![0.0; n3];
    let mut coeff = vec![0.0; n3];
    let mut dcoeff = vec![0.0; n3];
    for p in 0..plane {
        // Subtract the midpoint sample: the derivative of the constant part
        // is exactly zero and the transform then only sees the variation.
        let refv = input[p + (n3 / 2) * plane];
        for i in 0..n3 {
            col[i] = input[p + i * plane] - refv;
        }
        for k in 0..n3 {
            let row = &grid.cheb_analysis[k * n3..(k + 1) * n3];
            let mut s = 0.0;
            for j in 0..n3 {
                s += row[j] * col[j];
            }
            coeff[k] = s;
        }
        cheb_coeff_derivative(&coeff, &mut dcoeff);
        for i in 0..n3 {
            let row = &grid.cheb_synthesis[i * n3..(i + 1) * n3];
            let mut s = 0.0;
            for k in 0..n3 {
                s += row[k] * dcoeff[k];
            }
            // d/dx3 = 2 d/ds under the affine map to [0,1].
            output[p + i * plane] = 2.0 * s;
        }
    }
}

/// Spectral derivative along `axis` (1, 2 periodic; 3 Chebyshev).
///
/// The result carries no linear trend: derivatives of affine-plus-periodic
/// fields are periodic.
pub fn diff(f: &Field, axis: usize) -> Field {
    assert!((1..=3).contains(&axis), "axis must be 1, 2, or 3");
    let grid = &f.grid;
    let n = grid.node_count();
    let mut out = Field::zeros(grid, f.components);
    let mut buf = vec![0.0; n];
    for c in 0..f.components {
        if axis == 3 {
            diff_axis3(grid, f.component(c), out.component_mut(c));
            continue;
        }
        let mat = if axis == 1 { &grid.d1 } else { &grid.d2 };
        let trend = f.linear_trend[c * 3 + (axis - 1)];
        let src: &[f64] = if trend != 0.0 {
            // Strip the sawtooth before the periodic transform.
            buf.copy_from_slice(f.component(c));
            for i3 in 0..grid.n3 {
                for i2 in 0..grid.n2 {
                    for i1 in 0..grid.n1 {
                        let x = if axis == 1 { grid.x1(i1) } else { grid.x2(i2) };
                        buf[grid.node_index(i3, i2, i1)] -= trend * x;
                    }
                }
            }
            &buf
        } else {
            f.component(c)
        };
        apply_along_axis(grid, mat, 0.0, axis, src, out.component_mut(c));
        if trend != 0.0 {
            for v in out.component_mut(c) {
                *v += trend;
            }
        }
    }
    debug_assert!(out.is_finite());
    out
}

/// Gradient of every component: returns a field with `3 * f.components`
/// components ordered `(c, axis)`.
pub fn gradient(f: &Field) -> Field {
    let mut out = Field::zeros(&f.grid, 3 * f.components);
    for axis in 1..=3 {
        let d = diff(f, axis);
        let n = f.grid.node_count();
        for c in 0..f.components {
            out.values[(3 * c + axis - 1) * n..(3 * c + axis) * n]
                .copy_from_slice(d.component(c));
        }
    }
    out
}

/// Quadrature of a scalar field over the slab.
pub fn integrate(f: &Field) -> f64 {
    assert_eq!(f.components, 1, "integrate expects a scalar field");
    let grid = &f.grid;
    let plane = grid.n1 * grid.n2;
    let mut total = 0.0;
    for i3 in 0..grid.n3 {
        let mut s = 0.0;
        for p in 0..plane {
            s += f.values[i3 * plane + p];
        }
        total += grid.quadrature_weights[i3] * s;
    }
    total / plane as f64
}

/// L2 inner product of two scalar fields.
pub fn inner_product(f: &Field, g: &Field) -> f64 {
    assert_eq!(f.components, 1);
    assert_eq!(g.components, 1);
    let grid = &f.grid;
    let plane = grid.n1 * grid.n2;
    let mut total = 0.0;
    for i3 in 0..grid.n3 {
        let mut s = 0.0;
        for p in 0..plane {
            let i = i3 * plane + p;
            s += f.values[i] * g.values[i];
        }
        total += grid.quadrature_weights[i3] * s;
    }
    total / plane as f64
}

/// Quadrature of a scalar field over one face of Gamma (x3 = 0 or 1).
pub fn integrate_face(f: &Field, top: bool) -> f64 {
    assert_eq!(f.components, 1, "integrate_face expects a scalar field");
    let grid = &f.grid;
    let plane = grid.n1 * grid.n2;
    let i3 = if top { grid.n3 - 1 } else { 0 };
    let mut s = 0.0;
    for p in 0..plane {
        s += f.values[i3 * plane + p];
    }
    s / plane as f64
}

/// 2/3-rule truncation in the periodic directions (x3 untouched).
pub fn dealias_xy(f: &Field) -> Field {
    let grid = &f.grid;
    let n = grid.node_count();
    let mut mid = vec![0.0; n];
    let mut out = f.clone();
    for c in 0..f.components {
        apply_along_axis(grid, &grid.p1, 1.0, 1, f.component(c), &mut mid);
        apply_along_axis(grid, &grid.p2, 1.0, 2, &mid, out.component_mut(c));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_PI: f64 = 2.0 * PI;

    #[test]
    fn lobatto_nodes_of_five() {
        let g = make_grid(4, 4, 5).unwrap();
        let h = (1.0 - std::f64::consts::SQRT_2 / 2.0) / 2.0;
        let expect = [0.0, h, 0.5, 1.0 - h, 1.0];
        for (a, b) in g.x3_nodes.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn even_n3_rejected() {
        assert!(matches!(make_grid(4, 4, 4), Err(Error::InvalidResolution(_))));
        assert!(matches!(make_grid(5, 4, 5), Err(Error::InvalidResolution(_))));
        assert!(matches!(make_grid(4, 2, 5), Err(Error::InvalidResolution(_))));
    }

    #[test]
    fn weights_positive_and_normalized() {
        for n3 in [5usize, 9, 17, 33] {
            let w = clenshaw_curtis_weights_01(n3);
            assert!(w.iter().all(|&x| x > 0.0));
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "n3={n3} sum={sum}");
        }
    }

    #[test]
    fn clenshaw_curtis_exact_for_polynomials() {
        // Independent oracle: exact monomial integrals 1/(p+1) up to degree 32.
        let n3 = 33;
        let w = clenshaw_curtis_weights_01(n3);
        let x = lobatto_nodes_01(n3);
        for p in 0..=32usize {
            let q: f64 = x.iter().zip(w.iter()).map(|(xi, wi)| wi * xi.powi(p as i32)).sum();
            let exact = 1.0 / (p as f64 + 1.0);
            assert!((q - exact).abs() < 1e-12, "degree {p}: {q} vs {exact}");
        }
    }

    #[test]
    fn fourier_derivative_of_sine() {
        let g = make_grid(16, 4, 5).unwrap();
        let f = Field::scalar_from_fn(&g, |x1, _, _| (TWO_PI * x1).sin());
        let d = diff(&f, 1);
        let expect = Field::scalar_from_fn(&g, |x1, _, _| TWO_PI * (TWO_PI * x1).cos());
        for (a, b) in d.values.iter().zip(expect.values.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = make_grid(8, 8, 9).unwrap();
        let f = Field::scalar_from_fn(&g, |_, _, _| 3.25);
        for axis in 1..=3 {
            assert!(diff(&f, axis).max_abs() < 1e-12, "axis {axis}");
        }
    }

    #[test]
    fn chebyshev_derivative_of_cubic() {
        let g = make_grid(4, 4, 5).unwrap();
        let f = Field::scalar_from_fn(&g, |_, _, x3| x3.powi(3));
        let d = diff(&f, 3);
        let expect = Field::scalar_from_fn(&g, |_, _, x3| 3.0 * x3 * x3);
        for (a, b) in d.values.iter().zip(expect.values.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_trend_makes_sawtooth_derivative_exact() {
        let g = make_grid(8, 8, 5).unwrap();
        let f = Field::scalar_from_fn(&g, |x1, _, _| 2.0 * x1).with_linear_trend(&[2.0, 0.0, 0.0]);
        let d = diff(&f, 1);
        for v in &d.values {
            assert!((v - 2.0).abs() < 1e-11);
        }
    }

    #[test]
    fn mixed_partials_commute() {
        let g = make_grid(16, 16, 9).unwrap();
        let f = Field::scalar_from_fn(&g, |x1, x2, x3| {
            (TWO_PI * x1).sin() * (TWO_PI * x2).cos() * (1.0 + x3 * x3)
        });
        let d12 = diff(&diff(&f, 1), 2);
        let d21 = diff(&diff(&f, 2), 1);
        for (a, b) in d12.values.iter().zip(d21.values.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn integral_examples() {
        let g = make_grid(8, 8, 9).unwrap();
        let one = Field::scalar_from_fn(&g, |_, _, _| 1.0);
        assert!((integrate(&one) - 1.0).abs() < 1e-12);
        let s = Field::scalar_from_fn(&g, |x1, _, _| (TWO_PI * x1).sin());
        assert!(integrate(&s).abs() < 1e-12);
        let d = Field::scalar_from_fn(&g, |_, _, x3| x3 * (1.0 - x3));
        assert!((integrate(&d) - 1.0 / 6.0).abs() < 1e-10);
    }

    #[test]
    fn integral_of_periodic_derivative_vanishes() {
        let g = make_grid(16, 8, 9).unwrap();
        let f = Field::scalar_from_fn(&g, |x1, x2, _| {
            (TWO_PI * x1).sin() * (1.3 + (TWO_PI * x2).cos()) + 0.7
        });
        assert!(integrate(&diff(&f, 1)).abs() < 1e-10);
    }

    #[test]
    fn quadrature_exact_for_poly_times_fourier() {
        // x3^6 * cos(2 pi x1)^2 integrates to (1/7)(1/2).
        let g = make_grid(16, 8, 9).unwrap();
        let f = Field::scalar_from_fn(&g, |x1, _, x3| {
            x3.powi(6) * (TWO_PI * x1).cos().powi(2)
        });
        assert!((integrate(&f) - 0.5 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn dealias_keeps_low_modes() {
        let g = make_grid(12, 12, 5).unwrap();
        let f = Field::scalar_from_fn(&g, |x1, x2, _| {
            1.0 + (TWO_PI * x1).sin() + 0.5 * (2.0 * TWO_PI * x2).cos()
        });
        let p = dealias_xy(&f);
        for (a, b) in p.values.iter().zip(f.values.iter()) {
            assert!((a - b).abs() < 1e-11);
        }
        // Mode k = 5 > 12/3 must be removed.
        let hi = Field::scalar_from_fn(&g, |x1, _, _| (5.0 * TWO_PI * x1).sin());
        assert!(dealias_xy(&hi).max_abs() < 1e-11);
    }
}
