//! Fourier x Chebyshev Galerkin bases.
//!
//! Velocity modes span a discrete H^1 subspace with no boundary constraint:
//! real Fourier modes in x1, x2 times Chebyshev polynomials T_n(2 x3 - 1).
//! Temperature modes span a discrete H^1_0 subspace: the same tangential
//! modes times T_n - T_{n+2}, which vanishes at both faces exactly. The
//! stress boundary condition stays natural in the weak form, matching the
//! function spaces H^1 versus H^1_0 of the analysis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

/// One scalar mode: tangential Fourier indices and the wall-normal index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeDescriptor {
    /// Fourier index in x1: 0 is the constant, odd p is cos(2 pi k x) with
    /// k = (p+1)/2, even p >= 2 is sin(2 pi k x) with k = p/2.
    pub p1: usize,
    pub p2: usize,
    /// Chebyshev index: T_nz for velocity, T_nz - T_{nz+2} for temperature.
    pub nz: usize,
}

/// A family of scalar modes sampled on the grid, with analytic gradients.
#[derive(Debug, Clone)]
pub struct ModeFamily {
    pub descriptors: Vec<ModeDescriptor>,
    /// nodes x n_modes value matrix.
    pub values: DMatrix<f64>,
    /// nodes x n_modes gradient matrices, one per axis.
    pub grads: [DMatrix<f64>; 3],
}

/// The velocity (H^1) and temperature (H^1_0) mode families.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub m: usize,
    pub velocity: ModeFamily,
    pub temperature: ModeFamily,
}

fn fourier_eval(p: usize, x: f64) -> (f64, f64) {
    use std::f64::consts::PI;
    if p == 0 {
        (1.0, 0.0)
    } else if p % 2 == 1 {
        let k = 2.0 * PI * ((p + 1) / 2) as f64;
        ((k * x).cos(), -k * (k * x).sin())
    } else {
        let k = 2.0 * PI * (p / 2) as f64;
        ((k * x).sin(), k * (k * x).cos())
    }
}

/// T_n and dT_n/ds at s via the three-term recurrences (T'_n = n U_{n-1}).
fn cheb_eval(n: usize, s: f64) -> (f64, f64) {
    let mut t0 = 1.0;
    let mut t1 = s;
    let mut u0 = 1.0;
    let mut u1 = 2.0 * s;
    if n == 0 {
        return (1.0, 0.0);
    }
    if n == 1 {
        return (s, 1.0);
    }
    for _ in 2..=n {
        let t2 = 2.0 * s * t1 - t0;
        t0 = t1;
        t1 = t2;
        let u2 = 2.0 * s * u1 - u0;
        u0 = u1;
        u1 = u2;
    }
    (t1, n as f64 * u0)
}

/// Mode value and x3-derivative of the wall-normal factor at x3.
fn z_eval(nz: usize, x3: f64, zero_trace: bool) -> (f64, f64) {
    let s = 2.0 * x3 - 1.0;
    let (t, dt) = cheb_eval(nz, s);
    if zero_trace {
        let (t2, dt2) = cheb_eval(nz + 2, s);
        // Chain rule: d/dx3 = 2 d/ds.
        (t - t2, 2.0 * (dt - dt2))
    } else {
        (t, 2.0 * dt)
    }
}

fn build_family(g: &Grid, mx: usize, my: usize, mz: usize, zero_trace: bool) -> ModeFamily {
    let nodes = g.node_count();
    let n_modes = mx * my * mz;
    let mut descriptors = Vec::with_capacity(n_modes);
    let mut values = DMatrix::<f64>::zeros(nodes, n_modes);
    let mut g1 = DMatrix::<f64>::zeros(nodes, n_modes);
    let mut g2 = DMatrix::<f64>::zeros(nodes, n_modes);
    let mut g3 = DMatrix::<f64>::zeros(nodes, n_modes);
    let mut col = 0;
    for p1 in 0..mx {
        for p2 in 0..my {
            for nz in 0..mz {
                descriptors.push(ModeDescriptor { p1, p2, nz });
                for i3 in 0..g.n3 {
                    let (fz, dfz) = z_eval(nz, g.x3_nodes[i3], zero_trace);
                    for i2 in 0..g.n2 {
                        let (fy, dfy) = fourier_eval(p2, g.x2(i2));
                        for i1 in 0..g.n1 {
                            let (fx, dfx) = fourier_eval(p1, g.x1(i1));
                            let idx = g.node_index(i3, i2, i1);
                            values[(idx, col)] = fx * fy * fz;
                            g1[(idx, col)] = dfx * fy * fz;
                            g2[(idx, col)] = fx * dfy * fz;
                            g3[(idx, col)] = fx * fy * dfz;
                        }
                    }
                }
                col += 1;
            }
        }
    }
    ModeFamily { descriptors, values, grads: [g1, g2, g3] }
}

/// Build both families at truncation order m per direction.
pub fn build_basis(g: &Grid, m: usize) -> Result<BasisSet> {
    build_basis_orders(g, m, m, m)
}

/// Anisotropic variant: mx, my tangential orders and mz wall-normal order.
pub fn build_basis_orders(g: &Grid, mx: usize, my: usize, mz: usize) -> Result<BasisSet> {
    if mx == 0 || my == 0 || mz == 0 {
        return Err(Error::InvalidResolution("basis orders must be positive".into()));
    }
    // Highest Fourier wavenumber must stay below the grid Nyquist mode and
    // the highest polynomial degree (mz+1 for the H^1_0 family) must be
    // representable on the Lobatto nodes.
    let k1 = mx / 2;
    let k2 = my / 2;
    if 2 * k1 >= g.n1 || 2 * k2 >= g.n2 {
        return Err(Error::InvalidResolution(format!(
            "Fourier order ({mx}, {my}) unresolvable on a {}x{} tangential grid",
            g.n1, g.n2
        )));
    }
    if mz + 1 > g.n3 - 1 {
        return Err(Error::InvalidResolution(format!(
            "wall-normal order {mz} needs degree {} but the grid resolves {}",
            mz + 1,
            g.n3 - 1
        )));
    }
    Ok(BasisSet {
        m: mx.max(my).max(mz),
        velocity: build_family(g, mx, my, mz, false),
        temperature: build_family(g, mx, my, mz, true),
    })
}

/// Quadrature weight of every node (flattened), i.e. w3(i3) / (n1 n2).
pub fn node_weights(g: &Grid) -> DVector<f64> {
    let plane = g.n1 * g.n2;
    let mut w = DVector::zeros(g.node_count());
    for i3 in 0..g.n3 {
        let wv = g.quadrature_weights[i3] / plane as f64;
        for p in 0..plane {
            w[i3 * plane + p] = wv;
        }
    }
    w
}

impl ModeFamily {
    pub fn n_modes(&self) -> usize {
        self.descriptors.len()
    }

    /// L2 Gram matrix, optionally weighted by a scalar field.
    pub fn gram(&self, g: &Grid, weight: Option<&Field>) -> DMatrix<f64> {
        let w = node_weights(g);
        let nodes = self.values.nrows();
        let mut scaled = self.values.clone();
        for r in 0..nodes {
            let s = match weight {
                Some(f) => w[r] * f.values[r],
                None => w[r],
            };
            for c in 0..self.n_modes() {
                scaled[(r, c)] *= s;
            }
        }
        self.values.transpose() * scaled
    }

    /// L2-orthonormalized copy (Cholesky of the Gram matrix).
    pub fn orthonormalized(&self, g: &Grid) -> ModeFamily {
        let gram = self.gram(g, None);
        let chol = gram.cholesky().expect("gram matrix must be positive definite");
        let linv_t = chol
            .l()
            .try_inverse()
            .expect("triangular inverse")
            .transpose();
        ModeFamily {
            descriptors: self.descriptors.clone(),
            values: &self.values * &linv_t,
            grads: [
                &self.grads[0] * &linv_t,
                &self.grads[1] * &linv_t,
                &self.grads[2] * &linv_t,
            ],
        }
    }

    /// Synthesize a scalar field from one coefficient vector.
    pub fn synthesize(&self, g: &Grid, coeffs: &DVector<f64>) -> Field {
        let mut out = Field::zeros(g, 1);
        let v = &self.values * coeffs;
        out.values.copy_from_slice(v.as_slice());
        out
    }

    /// L2 projection of a scalar field onto the span.
    pub fn project(&self, g: &Grid, f: &[f64]) -> Result<DVector<f64>> {
        let w = node_weights(g);
        let mut wf = DVector::zeros(f.len());
        for i in 0..f.len() {
            wf[i] = w[i] * f[i];
        }
        let rhs = self.values.transpose() * wf;
        let gram = self.gram(g, None);
        gram.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Validation("basis Gram matrix is singular".into()))
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = nalgebra::SymmetricEigen::new(m.clone());
    sym.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
}
