//! Lagrangian differential operators, the viscous stress tensor, and
//! pointwise residuals of the momentum/temperature system.
//!
//! All operators take a `Deformation` and reduce to their flat counterparts
//! when eta = Id. Residuals are reported on interior nodes only; the
//! boundary planes are governed by the stress and temperature boundary
//! conditions, not by the bulk equations.

use crate::grid::{dealias_xy, diff, Field};
use crate::initial_data::PhysParams;
use crate::kinematics::Deformation;

/// One instant of the Lagrangian state (v, Theta) with its deformation.
#[derive(Debug, Clone)]
pub struct StateSlice {
    pub v: Field,
    pub theta: Field,
    pub defm: Deformation,
    pub time: f64,
}

/// Max |a^3_j S^ij| over each face of Gamma.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryStressRecord {
    pub bottom: f64,
    pub top: f64,
}

/// Lagrangian gradient (grad_eta F)^i = A^k_i F_{,k}.
pub fn grad_eta(f: &Field, d: &Deformation) -> Field {
    assert_eq!(f.components, 1);
    let grid = f.grid.clone();
    let n = grid.node_count();
    let mut out = Field::zeros(&grid, 3);
    for k in 0..3 {
        let df = diff(f, k + 1);
        for i in 0..3 {
            let a_ki = &d.a_inv.values[(3 * k + i) * n..(3 * k + i + 1) * n];
            let dst = out.component_mut(i);
            for idx in 0..n {
                dst[idx] += a_ki[idx] * df.values[idx];
            }
        }
    }
    out
}

/// Lagrangian divergence div_eta W = A^k_l W^l_{,k}.
pub fn div_eta(w: &Field, d: &Deformation) -> Field {
    assert_eq!(w.components, 3);
    let grid = w.grid.clone();
    let n = grid.node_count();
    let mut out = Field::zeros(&grid, 1);
    for k in 0..3 {
        let dw = diff(w, k + 1);
        for l in 0..3 {
            let a_kl = &d.a_inv.values[(3 * k + l) * n..(3 * k + l + 1) * n];
            for idx in 0..n {
                out.values[idx] += a_kl[idx] * dw.values[l * n + idx];
            }
        }
    }
    out
}

/// Cofactor-weighted divergence a^r_i W^i_{,r} (enters the compression term).
pub fn cof_div(w: &Field, d: &Deformation) -> Field {
    assert_eq!(w.components, 3);
    let grid = w.grid.clone();
    let n = grid.node_count();
    let mut out = Field::zeros(&grid, 1);
    for r in 0..3 {
        let dw = diff(w, r + 1);
        for i in 0..3 {
            let a_ri = &d.cof.values[(3 * r + i) * n..(3 * r + i + 1) * n];
            for idx in 0..n {
                out.values[idx] += a_ri[idx] * dw.values[i * n + idx];
            }
        }
    }
    out
}

/// Viscous stress S^ij_eta[W] = mu (A^k_j W^i_{,k} + A^k_i W^j_{,k})
/// + lambda (A^k_l W^l_{,k}) delta^ij.
pub fn stress(w: &Field, d: &Deformation, p: &PhysParams) -> Field {
    assert_eq!(w.components, 3);
    let grid = w.grid.clone();
    let n = grid.node_count();
    let mut dw = Vec::with_capacity(3);
    for k in 0..3 {
        dw.push(diff(w, k + 1));
    }
    let mut divw = vec![0.0; n];
    for k in 0..3 {
        for l in 0..3 {
            let a_kl = &d.a_inv.values[(3 * k + l) * n..(3 * k + l + 1) * n];
            for idx in 0..n {
                divw[idx] += a_kl[idx] * dw[k].values[l * n + idx];
            }
        }
    }
    let mut out = Field::zeros(&grid, 9);
    for i in 0..3 {
        for j in 0..3 {
            let dst = &mut out.values[(3 * i + j) * n..(3 * i + j + 1) * n];
            for k in 0..3 {
                let a_kj = &d.a_inv.values[(3 * k + j) * n..(3 * k + j + 1) * n];
                let a_ki = &d.a_inv.values[(3 * k + i) * n..(3 * k + i + 1) * n];
                for idx in 0..n {
                    dst[idx] += p.mu
                        * (a_kj[idx] * dw[k].values[i * n + idx]
                            + a_ki[idx] * dw[k].values[j * n + idx]);
                }
            }
            if i == j {
                for (d_idx, dv) in dst.iter_mut().enumerate() {
                    *dv += p.lambda * divw[d_idx];
                }
            }
        }
    }
    out
}

/// Quadratic stress-work S^ij_eta[v] a^r_j v^i_{,r}, dealiased in x1, x2.
pub fn stress_work_field(v: &Field, d: &Deformation, p: &PhysParams) -> Field {
    let grid = v.grid.clone();
    let n = grid.node_count();
    let s = stress(v, d, p);
    let mut out = Field::zeros(&grid, 1);
    for r in 0..3 {
        let dv = diff(v, r + 1);
        for i in 0..3 {
            for j in 0..3 {
                let a_rj = &d.cof.values[(3 * r + j) * n..(3 * r + j + 1) * n];
                let s_ij = &s.values[(3 * i + j) * n..(3 * i + j + 1) * n];
                for idx in 0..n {
                    out.values[idx] += s_ij[idx] * a_rj[idx] * dv.values[i * n + idx];
                }
            }
        }
    }
    dealias_xy(&out)
}

/// Compression term (R rho0 Theta / J) a^r_i v^i_{,r}, dealiased in x1, x2.
pub fn compression_field(
    v: &Field,
    theta: &Field,
    d: &Deformation,
    rho0: &Field,
    p: &PhysParams,
) -> Field {
    let grid = v.grid.clone();
    let n = grid.node_count();
    let cdiv = cof_div(v, d);
    let mut out = Field::zeros(&grid, 1);
    for idx in 0..n {
        out.values[idx] =
            p.gas_r * rho0.values[idx] * theta.values[idx] / d.jac.values[idx] * cdiv.values[idx];
    }
    dealias_xy(&out)
}

fn zero_boundary_planes(f: &mut Field) {
    let grid = f.grid.clone();
    let plane = grid.n1 * grid.n2;
    let n = grid.node_count();
    for c in 0..f.components {
        for p in 0..plane {
            f.values[c * n + p] = 0.0;
            f.values[c * n + (grid.n3 - 1) * plane + p] = 0.0;
        }
    }
}

/// Pointwise momentum residual rho0 v_t^i + a^r_i (R rho0 Theta / J)_{,r}
/// - a^r_j S^ij_{,r} on interior nodes (boundary planes zeroed).
pub fn momentum_residual(s: &StateSlice, v_t: &Field, rho0: &Field, p: &PhysParams) -> Field {
    momentum_residual_full(s, v_t, rho0, p, true)
}

/// Same as `momentum_residual` but optionally keeping the boundary rows,
/// which the weak-strong consistency check needs for its surface terms.
pub fn momentum_residual_full(
    s: &StateSlice,
    v_t: &Field,
    rho0: &Field,
    p: &PhysParams,
    zero_boundary: bool,
) -> Field {
    let grid = s.v.grid.clone();
    let n = grid.node_count();
    let d = &s.defm;
    let mut press = Field::zeros(&grid, 1);
    for idx in 0..n {
        press.values[idx] =
            p.gas_r * rho0.values[idx] * s.theta.values[idx] / d.jac.values[idx];
    }
    let st = stress(&s.v, d, p);
    let mut out = Field::zeros(&grid, 3);
    for i in 0..3 {
        let dst = out.component_mut(i);
        let vt_i = v_t.component(i);
        for idx in 0..n {
            dst[idx] = rho0.values[idx] * vt_i[idx];
        }
    }
    for r in 0..3 {
        let dpress = diff(&press, r + 1);
        let dstress = diff(&st, r + 1);
        for i in 0..3 {
            let a_ri = &d.cof.values[(3 * r + i) * n..(3 * r + i + 1) * n];
            {
                let dst = out.component_mut(i);
                for idx in 0..n {
                    dst[idx] += a_ri[idx] * dpress.values[idx];
                }
            }
            for j in 0..3 {
                let a_rj = &d.cof.values[(3 * r + j) * n..(3 * r + j + 1) * n];
                let ds_start = (3 * i + j) * n;
                let dst = out.component_mut(i);
                for idx in 0..n {
                    dst[idx] -= a_rj[idx] * dstress.values[ds_start + idx];
                }
            }
        }
    }
    if zero_boundary {
        zero_boundary_planes(&mut out);
    }
    out
}

/// Pointwise temperature residual c_v rho0 Theta_t + compression
/// - stress work - kappa a^r_i (grad_eta Theta)^i_{,r} on interior nodes.
pub fn temperature_residual(
    s: &StateSlice,
    theta_t: &Field,
    rho0: &Field,
    p: &PhysParams,
) -> Field {
    let grid = s.theta.grid.clone();
    let n = grid.node_count();
    let d = &s.defm;
    let compr = compression_field(&s.v, &s.theta, d, rho0, p);
    let work = stress_work_field(&s.v, d, p);
    let gt = grad_eta(&s.theta, d);
    let mut out = Field::zeros(&grid, 1);
    for idx in 0..n {
        out.values[idx] = p.c_v * rho0.values[idx] * theta_t.values[idx] + compr.values[idx]
            - work.values[idx];
    }
    for r in 0..3 {
        let dg = diff(&gt, r + 1);
        for i in 0..3 {
            let a_ri = &d.cof.values[(3 * r + i) * n..(3 * r + i + 1) * n];
            for idx in 0..n {
                out.values[idx] -= p.kappa * a_ri[idx] * dg.values[i * n + idx];
            }
        }
    }
    zero_boundary_planes(&mut out);
    out
}

/// Max |a^3_j S^ij[v]| over each face (the natural stress boundary condition).
pub fn boundary_stress_residual(
    v: &Field,
    d: &Deformation,
    p: &PhysParams,
) -> BoundaryStressRecord {
    let grid = v.grid.clone();
    let n = grid.node_count();
    let plane = grid.n1 * grid.n2;
    let st = stress(v, d, p);
    let mut rec = BoundaryStressRecord { bottom: 0.0, top: 0.0 };
    for i in 0..3 {
        for j in 0..3 {
            let a_3j = &d.cof.values[(3 * 2 + j) * n..(3 * 2 + j + 1) * n];
            let s_ij = &st.values[(3 * i + j) * n..(3 * i + j + 1) * n];
            for pidx in 0..plane {
                rec.bottom = rec.bottom.max((a_3j[pidx] * s_ij[pidx]).abs());
                let t = (grid.n3 - 1) * plane + pidx;
                rec.top = rec.top.max((a_3j[t] * s_ij[t]).abs());
            }
        }
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gradient, integrate, integrate_face, make_grid, Grid};
    use crate::kinematics::{compute_deformation, FlowMap};
    use std::f64::consts::PI;

    fn params() -> PhysParams {
        PhysParams {
            mu: 1.0,
            lambda: 0.5,
            kappa: 1.0,
            gas_r: 1.0,
            c_v: 1.0,
            gamma: 2.0,
            a_bar: 1.0,
        }
    }

    fn identity_defm(g: &Grid) -> Deformation {
        compute_deformation(&FlowMap::identity(g)).unwrap()
    }

    fn stretch_defm(g: &Grid) -> Deformation {
        let mut m = FlowMap::identity(g);
        m.eta = Field::vector_from_fn(g, |x1, x2, x3| [x1, x2, 2.0 * x3])
            .with_linear_trend(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        compute_deformation(&m).unwrap()
    }

    #[test]
    fn grad_eta_flat_and_stretched() {
        let g = make_grid(8, 8, 9).unwrap();
        let f = Field::scalar_from_fn(&g, |_, _, x3| x3).with_linear_trend(&[0.0, 0.0, 1.0]);
        let flat = grad_eta(&f, &identity_defm(&g));
        let grad = gradient(&f);
        for (a, b) in flat.values.iter().zip(grad.values.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let stretched = grad_eta(&f, &stretch_defm(&g));
        for idx in 0..g.node_count() {
            assert!((stretched.component(2)[idx] - 0.5).abs() < 1e-11);
            assert!(stretched.component(0)[idx].abs() < 1e-12);
        }
        let c = Field::scalar_from_fn(&g, |_, _, _| 4.2);
        assert!(grad_eta(&c, &identity_defm(&g)).max_abs() < 1e-12);
    }

    #[test]
    fn div_eta_examples() {
        let g = make_grid(8, 8, 9).unwrap();
        let w = Field::vector_from_fn(&g, |x1, x2, x3| [x1, x2, x3]).with_linear_trend(&[
            1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ]);
        let d = div_eta(&w, &identity_defm(&g));
        for v in &d.values {
            assert!((v - 3.0).abs() < 1e-11);
        }
        let c = Field::vector_from_fn(&g, |_, _, _| [1.0, -2.0, 0.5]);
        assert!(div_eta(&c, &identity_defm(&g)).max_abs() < 1e-12);
        let wz = Field::vector_from_fn(&g, |_, _, x3| [0.0, 0.0, x3]);
        let dz = div_eta(&wz, &stretch_defm(&g));
        for v in &dz.values {
            assert!((v - 0.5).abs() < 1e-11);
        }
    }

    #[test]
    fn stress_examples() {
        let g = make_grid(8, 8, 9).unwrap();
        let p = params();
        let d = identity_defm(&g);
        assert!(stress(&Field::zeros(&g, 3), &d, &p).max_abs() < 1e-14);

        let w = Field::vector_from_fn(&g, |x1, x2, x3| [x1, x2, x3]).with_linear_trend(&[
            1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0,
        ]);
        let s = stress(&w, &d, &p);
        let diag = 2.0 * p.mu + 3.0 * p.lambda;
        let n = g.node_count();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { diag } else { 0.0 };
                for idx in 0..n {
                    assert!((s.values[(3 * i + j) * n + idx] - expect).abs() < 1e-10);
                }
            }
        }

        let shear = Field::vector_from_fn(&g, |_, x2, _| [x2, 0.0, 0.0])
            .with_linear_trend(&[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let s = stress(&shear, &d, &p);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if (i, j) == (0, 1) || (i, j) == (1, 0) { p.mu } else { 0.0 };
                for idx in 0..n {
                    assert!((s.values[(3 * i + j) * n + idx] - expect).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn stress_is_symmetric() {
        let g = make_grid(12, 12, 9).unwrap();
        let p = params();
        let mut m = FlowMap::identity(&g);
        m.eta = Field::vector_from_fn(&g, |x1, x2, x3| {
            [x1 + 0.02 * (2.0 * PI * x2).sin(), x2, x3 + 0.02 * x3 * (1.0 - x3)]
        })
        .with_linear_trend(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let d = compute_deformation(&m).unwrap();
        let v = Field::vector_from_fn(&g, |x1, x2, x3| {
            [(2.0 * PI * x1).sin() * x3, (2.0 * PI * x2).cos(), x3 * x3]
        });
        let s = stress(&v, &d, &p);
        let n = g.node_count();
        for i in 0..3 {
            for j in (i + 1)..3 {
                for idx in 0..n {
                    let delta =
                        (s.values[(3 * i + j) * n + idx] - s.values[(3 * j + i) * n + idx]).abs();
                    assert!(delta < 1e-12);
                }
            }
        }
    }

    #[test]
    fn laplacian_consistency_flat() {
        let g = make_grid(16, 16, 17).unwrap();
        let d = identity_defm(&g);
        let f = Field::scalar_from_fn(&g, |x1, x2, x3| {
            (2.0 * PI * x1).sin() * (2.0 * PI * x2).cos() + x3.powi(4)
        });
        let lap_eta = div_eta(&grad_eta(&f, &d), &d);
        let mut lap = Field::zeros(&g, 1);
        for axis in 1..=3 {
            let dd = diff(&diff(&f, axis), axis);
            for (o, v) in lap.values.iter_mut().zip(dd.values.iter()) {
                *o += v;
            }
        }
        for (a, b) in lap_eta.values.iter().zip(lap.values.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_state_residuals_vanish() {
        let g = make_grid(8, 8, 9).unwrap();
        let p = params();
        let s = StateSlice {
            v: Field::zeros(&g, 3),
            theta: Field::zeros(&g, 1),
            defm: identity_defm(&g),
            time: 0.0,
        };
        let rho0 = Field::scalar_from_fn(&g, |_, _, x3| x3 * (1.0 - x3));
        assert!(momentum_residual(&s, &Field::zeros(&g, 3), &rho0, &p).max_abs() < 1e-14);
        assert!(temperature_residual(&s, &Field::zeros(&g, 1), &rho0, &p).max_abs() < 1e-14);
    }

    #[test]
    fn boundary_stress_examples() {
        let g = make_grid(8, 8, 9).unwrap();
        let p = params();
        let d = identity_defm(&g);
        let rec = boundary_stress_residual(&Field::zeros(&g, 3), &d, &p);
        assert!(rec.bottom < 1e-14 && rec.top < 1e-14);
        let shear = Field::vector_from_fn(&g, |_, _, x3| [x3, 0.0, 0.0]);
        let rec = boundary_stress_residual(&shear, &d, &p);
        assert!((rec.bottom - p.mu).abs() < 1e-10, "bottom {}", rec.bottom);
        assert!((rec.top - p.mu).abs() < 1e-10, "top {}", rec.top);
    }

    #[test]
    fn weak_strong_consistency() {
        // integrate(residual . phi) must match the weak pairing after
        // discrete integration by parts plus the surface terms; this
        // exercises the Piola identity.
        let g = make_grid(16, 16, 17).unwrap();
        let p = params();
        let mut m = FlowMap::identity(&g);
        m.eta = Field::vector_from_fn(&g, |x1, x2, x3| {
            [
                x1 + 0.03 * (2.0 * PI * x2).cos() * x3,
                x2 + 0.02 * (2.0 * PI * x1).sin(),
                x3 + 0.04 * x3 * (1.0 - x3),
            ]
        })
        .with_linear_trend(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let defm = compute_deformation(&m).unwrap();
        let v = Field::vector_from_fn(&g, |x1, x2, x3| {
            [
                0.2 * (2.0 * PI * x1).sin() * x3,
                0.1 * (2.0 * PI * (x1 + x2)).cos(),
                0.3 * x3 * x3 * (1.0 - x3),
            ]
        });
        let theta = Field::scalar_from_fn(&g, |x1, _, x3| {
            x3 * (1.0 - x3) * (1.0 + 0.3 * (2.0 * PI * x1).sin())
        });
        let v_t = Field::vector_from_fn(&g, |_, x2, x3| {
            [0.1 * x3, 0.2 * (2.0 * PI * x2).sin(), -0.1 * x3 * x3]
        });
        let rho0 = Field::scalar_from_fn(&g, |_, _, x3| x3 * (1.0 - x3));
        let phi = Field::vector_from_fn(&g, |x1, x2, x3| {
            [(2.0 * PI * x2).cos() * (1.0 + x3), 0.5 * (2.0 * PI * x1).sin(), x3 * x3]
        });

        let slice = StateSlice { v: v.clone(), theta: theta.clone(), defm, time: 0.0 };
        let r = momentum_residual_full(&slice, &v_t, &rho0, &p, false);
        let mut lhs = 0.0;
        for i in 0..3 {
            let mut prod = Field::zeros(&g, 1);
            prod.values.copy_from_slice(r.component(i));
            for (pv, ph) in prod.values.iter_mut().zip(phi.component(i)) {
                *pv *= ph;
            }
            lhs += integrate(&prod);
        }

        let d = &slice.defm;
        let n = g.node_count();
        let mut press = Field::zeros(&g, 1);
        for idx in 0..n {
            press.values[idx] = p.gas_r * rho0.values[idx] * theta.values[idx] / d.jac.values[idx];
        }
        let st = stress(&v, d, &p);
        let mut rhs = 0.0;
        for i in 0..3 {
            let mut f = Field::zeros(&g, 1);
            for idx in 0..n {
                f.values[idx] = rho0.values[idx] * v_t.component(i)[idx] * phi.component(i)[idx];
            }
            rhs += integrate(&f);
        }
        for r_ax in 0..3 {
            let dphi = diff(&phi, r_ax + 1);
            for i in 0..3 {
                let a_ri = &d.cof.values[(3 * r_ax + i) * n..(3 * r_ax + i + 1) * n];
                let mut f = Field::zeros(&g, 1);
                for idx in 0..n {
                    f.values[idx] = -a_ri[idx] * press.values[idx] * dphi.values[i * n + idx];
                }
                rhs += integrate(&f);
                for j in 0..3 {
                    let a_rj = &d.cof.values[(3 * r_ax + j) * n..(3 * r_ax + j + 1) * n];
                    let s_ij = &st.values[(3 * i + j) * n..(3 * i + j + 1) * n];
                    let mut fs = Field::zeros(&g, 1);
                    for idx in 0..n {
                        fs.values[idx] = a_rj[idx] * s_ij[idx] * dphi.values[i * n + idx];
                    }
                    rhs += integrate(&fs);
                }
            }
        }
        // Surface terms: + [a^3_i p phi^i] - [a^3_j S^ij phi^i] over the faces.
        for i in 0..3 {
            let mut f = Field::zeros(&g, 1);
            let a_3i = &d.cof.values[(3 * 2 + i) * n..(3 * 2 + i + 1) * n];
            for idx in 0..n {
                f.values[idx] = a_3i[idx] * press.values[idx] * phi.component(i)[idx];
            }
            rhs += integrate_face(&f, true) - integrate_face(&f, false);
            for j in 0..3 {
                let a_3j = &d.cof.values[(3 * 2 + j) * n..(3 * 2 + j + 1) * n];
                let s_ij = &st.values[(3 * i + j) * n..(3 * i + j + 1) * n];
                let mut fs = Field::zeros(&g, 1);
                for idx in 0..n {
                    fs.values[idx] = a_3j[idx] * s_ij[idx] * phi.component(i)[idx];
                }
                rhs -= integrate_face(&fs, true) - integrate_face(&fs, false);
            }
        }
        assert!(
            (lhs - rhs).abs() < 1e-7,
            "weak-strong mismatch: lhs {lhs} rhs {rhs} diff {}",
            (lhs - rhs).abs()
        );
    }
}
