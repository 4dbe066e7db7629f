//! Flow map evolution and the deformation triple (A, J, a).
//!
//! In Lagrangian coordinates the flow map obeys eta_t(x, t) = v(x, t) with
//! eta(0) = Id, so a time step is a quadrature of the velocity history. The
//! deformation matrix A = [D eta]^-1, the Jacobian J = det(D eta) and the
//! cofactor matrix a = J A carry all metric information of the moving
//! domain; their rate identities and the Piola identity a^k_i,k = 0 are
//! monitored at runtime.

use crate::error::{Error, Result};
use crate::grid::{diff, Field, Grid};
use crate::tensor;

/// Lagrangian positions y = eta(x) at one instant.
#[derive(Debug, Clone)]
pub struct FlowMap {
    /// 3-component position field; carries the identity as its linear trend.
    pub eta: Field,
    pub time: f64,
}

/// Deformation data at one instant.
#[derive(Debug, Clone)]
pub struct Deformation {
    /// D eta, 9 components, entry (i,j) = eta^i_{,j}.
    pub deta: Field,
    /// [D eta]^-1, entry (k,i) = A^k_i.
    pub a_inv: Field,
    /// det(D eta), scalar.
    pub jac: Field,
    /// Cofactor matrix a = J A, entry (k,i) = a^k_i.
    pub cof: Field,
}

/// Rates (J_t, a_t) induced by a velocity field.
#[derive(Debug, Clone)]
pub struct DeformationRates {
    pub j_t: Field,
    pub a_t: Field,
}

/// Result of the a priori assumption check (1/2 <= J <= 3/2, |D eta| bounded).
#[derive(Debug, Clone, Copy)]
pub struct AprioriReport {
    pub ok: bool,
    pub j_min: f64,
    pub j_max: f64,
    pub deta_max: f64,
}

impl FlowMap {
    /// The identity map at t = 0.
    pub fn identity(grid: &Grid) -> FlowMap {
        let eta = Field::vector_from_fn(grid, |x1, x2, x3| [x1, x2, x3]).with_linear_trend(&[
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0,
        ]);
        FlowMap { eta, time: 0.0 }
    }
}

/// Advance the flow map by classical 4-stage Runge-Kutta over one step.
///
/// `velocity` evaluates the Lagrangian velocity field at an arbitrary stage
/// time; eta_t = v(x, t) does not depend on eta itself, so RK4 reduces to a
/// Simpson quadrature of the velocity history and is exact for velocities
/// constant in time.
pub fn advance_flow_map(
    m: &FlowMap,
    velocity: &mut dyn FnMut(f64) -> Field,
    dt: f64,
) -> Result<FlowMap> {
    assert!(dt > 0.0, "dt must be positive");
    let k1 = velocity(m.time);
    let k2 = velocity(m.time + 0.5 * dt);
    let k4 = velocity(m.time + dt);
    let mut eta = m.eta.clone();
    eta.add_scaled(&k1, dt / 6.0);
    // Stages 2 and 3 coincide because the right-hand side is eta-independent.
    eta.add_scaled(&k2, 4.0 * dt / 6.0);
    eta.add_scaled(&k4, dt / 6.0);
    if !eta.is_finite() {
        return Err(Error::NonFiniteState("flow map advance".into()));
    }
    Ok(FlowMap { eta, time: m.time + dt })
}

/// Advance with a velocity frozen in time.
pub fn advance_flow_map_const(m: &FlowMap, v: &Field, dt: f64) -> Result<FlowMap> {
    advance_flow_map(m, &mut |_| v.clone(), dt)
}

/// Compute (D eta, A, J, a) by spectral differentiation and pointwise algebra.
pub fn compute_deformation(m: &FlowMap) -> Result<Deformation> {
    let grid = m.eta.grid.clone();
    let mut deta = Field::zeros(&grid, 9);
    for axis in 1..=3 {
        let d = diff(&m.eta, axis);
        let n = grid.node_count();
        for i in 0..3 {
            deta.values[(3 * i + axis - 1) * n..(3 * i + axis) * n]
                .copy_from_slice(d.component(i));
        }
    }
    let n = grid.node_count();
    let mut a_inv = Field::zeros(&grid, 9);
    let mut jac = Field::zeros(&grid, 1);
    let mut cof = Field::zeros(&grid, 9);
    for idx in 0..n {
        let mut f = [0.0; 9];
        for e in 0..9 {
            f[e] = deta.values[e * n + idx];
        }
        let det = tensor::det3(&f);
        if det < 1e-10 {
            let i1 = idx % grid.n1;
            let i2 = (idx / grid.n1) % grid.n2;
            let i3 = idx / (grid.n1 * grid.n2);
            return Err(Error::DegenerateJacobian { value: det, node: (i3, i2, i1) });
        }
        let adj = tensor::adjugate3(&f);
        jac.values[idx] = det;
        for e in 0..9 {
            cof.values[e * n + idx] = adj[e];
            a_inv.values[e * n + idx] = adj[e] / det;
        }
    }
    Ok(Deformation { deta, a_inv, jac, cof })
}

/// Rate identities J_t = a^s_r v^r_{,s} and
/// (a_t)^k_i = J^-1 v^r_{,s} (a^s_r a^k_i - a^s_i a^k_r).
pub fn deformation_rates(d: &Deformation, v: &Field) -> Result<DeformationRates> {
    let grid = d.jac.grid.clone();
    let n = grid.node_count();
    let mut dv = Field::zeros(&grid, 9);
    for axis in 1..=3 {
        let g = diff(v, axis);
        for r in 0..3 {
            dv.values[(3 * r + axis - 1) * n..(3 * r + axis) * n].copy_from_slice(g.component(r));
        }
    }
    let mut j_t = Field::zeros(&grid, 1);
    let mut a_t = Field::zeros(&grid, 9);
    for idx in 0..n {
        let mut a = [0.0; 9];
        let mut g = [0.0; 9];
        for e in 0..9 {
            a[e] = d.cof.values[e * n + idx];
            g[e] = dv.values[e * n + idx];
        }
        let jac = d.jac.values[idx];
        if jac.abs() < 1e-10 {
            return Err(Error::DegenerateJacobian { value: jac, node: (0, 0, 0) });
        }
        let mut jt = 0.0;
        for s in 0..3 {
            for r in 0..3 {
                jt += a[3 * s + r] * g[3 * r + s];
            }
        }
        j_t.values[idx] = jt;
        for k in 0..3 {
            for i in 0..3 {
                let mut s_acc = 0.0;
                for r in 0..3 {
                    for s in 0..3 {
                        s_acc += g[3 * r + s]
                            * (a[3 * s + r] * a[3 * k + i] - a[3 * s + i] * a[3 * k + r]);
                    }
                }
                a_t.values[(3 * k + i) * n + idx] = s_acc / jac;
            }
        }
    }
    Ok(DeformationRates { j_t, a_t })
}

/// Piola residual a^k_i,k, one component per i; identically zero in exact
/// arithmetic for any smooth map.
pub fn piola_residual(d: &Deformation) -> Field {
    let grid = d.cof.grid.clone();
    let n = grid.node_count();
    let mut out = Field::zeros(&grid, 3);
    for k in 0..3 {
        // Column (k,i) of the cofactor field, differentiated along x_k.
        let mut col = Field::zeros(&grid, 3);
        for i in 0..3 {
            col.values[i * n..(i + 1) * n]
                .copy_from_slice(&d.cof.values[(3 * k + i) * n..(3 * k + i + 1) * n]);
        }
        let dcol = diff(&col, k + 1);
        for i in 0..3 {
            for idx in 0..n {
                out.values[i * n + idx] += dcol.values[i * n + idx];
            }
        }
    }
    out
}

/// Check the a priori assumption 1/2 <= J <= 3/2 (inclusive) and
/// max |D eta| <= deta_bound, with |D eta| the largest entry magnitude.
///
/// The closed-interval comparison carries a 1e-12 slack so that maps sitting
/// exactly on the boundary pass despite spectral roundoff.
pub fn check_apriori(d: &Deformation, deta_bound: f64) -> AprioriReport {
    const SLACK: f64 = 1e-12;
    let mut j_min = f64::INFINITY;
    let mut j_max = f64::NEG_INFINITY;
    for &j in &d.jac.values {
        j_min = j_min.min(j);
        j_max = j_max.max(j);
    }
    let deta_max = d.deta.max_abs();
    AprioriReport {
        ok: j_min >= 0.5 - SLACK && j_max <= 1.5 + SLACK && deta_max <= deta_bound + SLACK,
        j_min,
        j_max,
        deta_max,
    }
}
