//! Energy functionals, weighted Sobolev norms, entropy and physical-vacuum
//! monitors, and numerical Hardy/Korn inequality checks.
//!
//! The inequality checks report ratios rather than pass/fail: the analysis
//! constants are generic, so the artifact only measures them and verifies
//! their stability under refinement.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{
    cheb_diff_matrix_01, clenshaw_curtis_weights_01, diff, integrate, lobatto_nodes_01, Field,
};
use crate::initial_data::{DerivedInitials, PhysParams};
use crate::kinematics::Deformation;
use crate::picard::Trajectory;

/// Discrete H^k norm via spectral derivatives and quadrature.
///
/// Every multi-index of total order <= k is counted once; an optional weight
/// multiplies the integrand of each term (with the weight and k = 0 this is
/// the degenerate norm ||weight^(1/2) f||_L2). With `zero_trace` the field
/// must vanish on the boundary planes within 1e-8.
pub fn sobolev_norm(f: &Field, k: usize, weight: Option<&Field>, zero_trace: bool) -> Result<f64> {
    Ok(sobolev_norm_sq(f, k, weight, zero_trace)?.sqrt())
}

/// Squared version of [`sobolev_norm`]; the energy functionals sum these.
pub fn sobolev_norm_sq(
    f: &Field,
    k: usize,
    weight: Option<&Field>,
    zero_trace: bool,
) -> Result<f64> {
    assert!(k <= 3, "only H^0..H^3 norms are used");
    if zero_trace {
        let grid = &f.grid;
        let plane = grid.n1 * grid.n2;
        let n = grid.node_count();
        let mut worst = 0.0_f64;
        for c in 0..f.components {
            for p in 0..plane {
                worst = worst.max(f.values[c * n + p].abs());
                worst = worst.max(f.values[c * n + (grid.n3 - 1) * plane + p].abs());
            }
        }
        if worst > 1e-8 {
            return Err(Error::TraceViolation(worst));
        }
    }
    let mut total = 0.0;
    for c in 0..f.components {
        let mut comp = Field::zeros(&f.grid, 1);
        comp.values.copy_from_slice(f.component(c));
        comp.linear_trend.copy_from_slice(&f.linear_trend[c * 3..(c + 1) * 3]);
        total += scalar_sobolev_sq(&comp, k, weight);
    }
    Ok(total)
}

fn scalar_sobolev_sq(f: &Field, k: usize, weight: Option<&Field>) -> f64 {
    let mut total = l2_sq(f, weight);
    if k == 0 {
        return total;
    }
    // Walk multi-indices in nondecreasing axis order so each is visited once.
    let mut frontier = vec![(f.clone(), 1usize)];
    for _order in 1..=k {
        let mut next = Vec::new();
        for (g, min_axis) in &frontier {
            for axis in *min_axis..=3 {
                let dg = diff(g, axis);
                total += l2_sq(&dg, weight);
                next.push((dg, axis));
            }
        }
        frontier = next;
    }
    total
}

fn l2_sq(f: &Field, weight: Option<&Field>) -> f64 {
    let mut sq = Field::zeros(&f.grid, 1);
    match weight {
        Some(w) => {
            for ((o, v), wv) in sq.values.iter_mut().zip(f.values.iter()).zip(w.values.iter()) {
                *o = wv * v * v;
            }
        }
        None => {
            for (o, v) in sq.values.iter_mut().zip(f.values.iter()) {
                *o = v * v;
            }
        }
    }
    integrate(&sq)
}

/// The six terms of the energy functional at one step.
#[derive(Debug, Clone, Copy)]
pub struct EnergyEntry {
    pub time: f64,
    /// ||rho0^(1/2) v_tt||_L2^2, ||v_t||_H1^2, ||v||_H3^2,
    /// ||rho0^(1/2) Theta_tt||_L2^2, ||Theta_t||_H10^2, ||Theta||_H3^2.
    pub terms: [f64; 6],
}

impl EnergyEntry {
    pub fn total(&self) -> f64 {
        self.terms.iter().sum()
    }
}

/// Time-derivative samples at one step, from the stored backward stencils
/// or, at steps 0 and 1, from the derived initial fields. With
/// `allow_forward` (used for the F integrand, a monitoring quantity) the
/// early steps fall back to forward/centered stencils instead of erroring.
fn time_derivatives_at(
    traj: &Trajectory,
    step: usize,
    derived: Option<&DerivedInitials>,
    allow_forward: bool,
) -> Result<(Field, Field, Field, Field)> {
    let dt = traj.tg.dt();
    let second_forward = |fields: &[Field]| -> Field {
        // (f_2 - 2 f_1 + f_0) / dt^2, valid at steps 0 and 1.
        let mut out = fields[2].clone();
        out.scale(1.0 / (dt * dt));
        out.add_scaled(&fields[1], -2.0 / (dt * dt));
        out.add_scaled(&fields[0], 1.0 / (dt * dt));
        out
    };
    match step {
        0 => {
            if let Some(di) = derived {
                return Ok((
                    di.u0t.clone(),
                    di.u0tt.clone(),
                    di.theta0t.clone(),
                    di.theta0tt.clone(),
                ));
            }
            if allow_forward && traj.tg.n_steps >= 2 {
                let forward = |fields: &[Field]| {
                    let mut out = fields[1].clone();
                    out.scale(1.0 / dt);
                    out.add_scaled(&fields[0], -1.0 / dt);
                    out
                };
                return Ok((
                    forward(&traj.vs),
                    second_forward(&traj.vs),
                    forward(&traj.thetas),
                    second_forward(&traj.thetas),
                ));
            }
            Err(Error::InsufficientHistory { step: 0, need: "derived initial time derivatives" })
        }
        1 => {
            let v_t = traj.v_t(1)?;
            let th_t = traj.theta_t(1)?;
            if let Some(di) = derived {
                // Bridge: f_tt(t1) ~ (f_t(t1) - f_t(t0)) / dt.
                let mut v_tt = v_t.clone();
                v_tt.add_scaled(&di.u0t, -1.0);
                v_tt.scale(1.0 / dt);
                let mut th_tt = th_t.clone();
                th_tt.add_scaled(&di.theta0t, -1.0);
                th_tt.scale(1.0 / dt);
                return Ok((v_t, v_tt, th_t, th_tt));
            }
            if allow_forward && traj.tg.n_steps >= 2 {
                return Ok((v_t, second_forward(&traj.vs), th_t, second_forward(&traj.thetas)));
            }
            Err(Error::InsufficientHistory {
                step: 1,
                need: "derived initial time derivatives for the bridge stencil",
            })
        }
        _ => Ok((traj.v_t(step)?, traj.v_tt(step)?, traj.theta_t(step)?, traj.theta_tt(step)?)),
    }
}

/// The energy functional E at one step.
///
/// At step 0 the derived initial fields must be supplied so that
/// E(0) = M0 - 1 holds by construction; from step 2 on the stored
/// backward-difference stencils are used. The H10 norm is evaluated as the
/// discrete H1 norm (trace membership is monitored separately).
pub fn energy_e(
    traj: &Trajectory,
    step: usize,
    rho0: &Field,
    derived: Option<&DerivedInitials>,
) -> Result<EnergyEntry> {
    let (v, theta) = if step == 0 && derived.is_some() {
        // Use the trajectory's stored initial state (identical to the data).
        (&traj.vs[0], &traj.thetas[0])
    } else {
        (&traj.vs[step], &traj.thetas[step])
    };
    let (v_t, v_tt, th_t, th_tt) = time_derivatives_at(traj, step, derived, false)?;
    let terms = [
        sobolev_norm_sq(&v_tt, 0, Some(rho0), false)?,
        sobolev_norm_sq(&v_t, 1, None, false)?,
        sobolev_norm_sq(v, 3, None, false)?,
        sobolev_norm_sq(&th_tt, 0, Some(rho0), false)?,
        sobolev_norm_sq(&th_t, 1, None, false)?,
        sobolev_norm_sq(theta, 3, None, false)?,
    ];
    Ok(EnergyEntry { time: step as f64 * traj.tg.dt(), terms })
}

/// H3 norm squared of the tangential derivatives of a field.
fn tangential_h3_sq(f: &Field) -> Result<f64> {
    let mut total = 0.0;
    for axis in 1..=2 {
        total += sobolev_norm_sq(&diff(f, axis), 3, None, false)?;
    }
    Ok(total)
}

/// The functional F at one step: E plus the trapezoid time integrals of
/// ||v_tt||_H1^2, ||v_t||_H3^2, ||tangential v||_H3^2, ||Theta_tt||_H10^2,
/// ||Theta_t||_H3^2, ||tangential Theta||_H3^2.
pub fn energy_f(
    traj: &Trajectory,
    upto_step: usize,
    rho0: &Field,
    derived: Option<&DerivedInitials>,
) -> Result<f64> {
    let e = energy_e(traj, upto_step, rho0, derived)?.total();
    if upto_step == 0 {
        return Ok(e);
    }
    let dt = traj.tg.dt();
    let mut series = Vec::with_capacity(upto_step + 1);
    for k in 0..=upto_step {
        let (v_t, v_tt, th_t, th_tt) = time_derivatives_at(traj, k, derived, true)?;
        let val = sobolev_norm_sq(&v_tt, 1, None, false)?
            + sobolev_norm_sq(&v_t, 3, None, false)?
            + tangential_h3_sq(&traj.vs[k])?
            + sobolev_norm_sq(&th_tt, 1, None, false)?
            + sobolev_norm_sq(&th_t, 3, None, false)?
            + tangential_h3_sq(&traj.thetas[k])?;
        series.push(val);
    }
    let mut integral = 0.0;
    for k in 0..upto_step {
        integral += 0.5 * dt * (series[k] + series[k + 1]);
    }
    Ok(e + integral)
}

/// Eulerian density rho = rho0 / J pulled back to the reference nodes.
pub fn eulerian_density(rho0: &Field, d: &Deformation) -> Result<Field> {
    let mut out = rho0.clone();
    for (o, j) in out.values.iter_mut().zip(d.jac.values.iter()) {
        if j.abs() < 1e-10 {
            return Err(Error::DegenerateJacobian { value: *j, node: (0, 0, 0) });
        }
        *o /= j;
    }
    Ok(out)
}

/// Entropy samples plus min/max statistics over the near-boundary band.
#[derive(Debug, Clone)]
pub struct EntropyField {
    /// S on interior nodes (boundary planes hold 0; S is undefined there).
    pub s: Field,
    pub band_min: f64,
    pub band_max: f64,
}

/// S = (R / (gamma - 1)) ln(R Theta / (A_bar rho^(gamma-1))) on interior
/// nodes; band statistics over nodes with d(x) < band.
pub fn entropy_field(
    theta: &Field,
    rho: &Field,
    p: &PhysParams,
    band: f64,
) -> Result<EntropyField> {
    let grid = theta.grid.clone();
    let plane = grid.n1 * grid.n2;
    let mut s = Field::zeros(&grid, 1);
    let mut band_min = f64::INFINITY;
    let mut band_max = f64::NEG_INFINITY;
    let coef = p.gas_r / (p.gamma - 1.0);
    for i3 in 1..grid.n3 - 1 {
        let x3 = grid.x3_nodes[i3];
        let dist = x3 * (1.0 - x3);
        for pidx in 0..plane {
            let idx = i3 * plane + pidx;
            let th = theta.values[idx];
            let rh = rho.values[idx];
            if th <= 0.0 {
                return Err(Error::NonPositiveState { field: "Theta", value: th });
            }
            if rh <= 0.0 {
                return Err(Error::NonPositiveState { field: "rho", value: rh });
            }
            let val = coef * (p.gas_r * th / (p.a_bar * rh.powf(p.gamma - 1.0))).ln();
            s.values[idx] = val;
            if dist < band {
                band_min = band_min.min(val);
                band_max = band_max.max(val);
            }
        }
    }
    Ok(EntropyField { s, band_min, band_max })
}

/// Outward normal derivative of Theta over both faces of Gamma.
#[derive(Debug, Clone, Copy)]
pub struct VacuumBoundaryRecord {
    pub min: f64,
    pub max: f64,
    /// Set when max >= 0, i.e. the physical-vacuum condition fails somewhere.
    pub violated: bool,
}

pub fn vacuum_boundary_monitor(theta: &Field) -> VacuumBoundaryRecord {
    let grid = theta.grid.clone();
    let plane = grid.n1 * grid.n2;
    let d3 = diff(theta, 3);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for pidx in 0..plane {
        // Outward normal is -e3 at x3 = 0 and +e3 at x3 = 1.
        let bottom = -d3.values[pidx];
        let top = d3.values[(grid.n3 - 1) * plane + pidx];
        min = min.min(bottom).min(top);
        max = max.max(bottom).max(top);
    }
    VacuumBoundaryRecord { min, max, violated: max >= 0.0 }
}

/// One-dimensional Hardy inequality data on [0,1].
#[derive(Debug, Clone, Copy)]
pub struct HardyReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Evaluate the Hardy quotient for samples of g on the Lobatto nodes.
///
/// For k > 1: lhs = int s^(k-2) g^2, rhs = int s^k (g^2 + g'^2).
/// For k < 1: lhs = int s^(k-2) (g - g(0))^2, rhs = int s^k g'^2.
/// The s = 0 node uses the limit ((g - g(0))/s)^2 s^k -> g'(0)^2 s^k with
/// the convention 0^0 = 1.
pub fn hardy_check(g: &[f64], k: f64) -> Result<HardyReport> {
    if k == 1.0 {
        return Err(Error::UnsupportedExponent);
    }
    let n = g.len();
    assert!(n >= 5, "need at least 5 samples");
    let nodes = lobatto_nodes_01(n);
    let w = clenshaw_curtis_weights_01(n);
    let dmat = cheb_diff_matrix_01(n);
    let mut gp = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            s += dmat[i * n + j] * g[j];
        }
        gp[i] = s;
    }
    let pow0 = |e: f64| -> f64 {
        // 0^e with the quadrature convention 0^0 = 1, 0^(e>0) = 0; negative
        // exponents never reach this path with weight w[0] > 0 because the
        // numerators vanish at least quadratically there.
        if e == 0.0 {
            1.0
        } else {
            0.0
        }
    };
    let (mut lhs, mut rhs) = (0.0, 0.0);
    if k > 1.0 {
        for i in 0..n {
            let s = nodes[i];
            let wk2 = if s == 0.0 { pow0(k - 2.0) } else { s.powf(k - 2.0) };
            let wk = if s == 0.0 { pow0(k) } else { s.powf(k) };
            lhs += w[i] * wk2 * g[i] * g[i];
            rhs += w[i] * wk * (g[i] * g[i] + gp[i] * gp[i]);
        }
    } else {
        let g0 = g[0];
        for i in 0..n {
            let s = nodes[i];
            let wk = if s == 0.0 { pow0(k) } else { s.powf(k) };
            let quot = if s == 0.0 { gp[0] } else { (g[i] - g0) / s };
            lhs += w[i] * wk * quot * quot;
            rhs += w[i] * wk * gp[i] * gp[i];
        }
    }
    Ok(HardyReport { lhs, rhs, ratio: lhs / rhs })
}

/// Largest discrete Hardy quotient for k > 1, from the generalized
/// symmetric eigenproblem of the two quadratic forms.
pub fn hardy_max_ratio(n: usize, k: f64) -> f64 {
    assert!(k > 1.0);
    let nodes = lobatto_nodes_01(n);
    let w = clenshaw_curtis_weights_01(n);
    let dmat = cheb_diff_matrix_01(n);
    let mut lhs = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let s = nodes[i];
        let wk2 = if s == 0.0 {
            if k == 2.0 {
                1.0
            } else {
                0.0
            }
        } else {
            s.powf(k - 2.0)
        };
        let wk = if s == 0.0 { 0.0 } else { s.powf(k) };
        lhs[(i, i)] = w[i] * wk2;
        rhs[(i, i)] += w[i] * wk;
        for a in 0..n {
            for b in 0..n {
                rhs[(a, b)] += dmat[i * n + a] * w[i] * wk * dmat[i * n + b];
            }
        }
    }
    // Regularize rhs against the k-weight null direction at s = 0.
    for i in 0..n {
        rhs[(i, i)] += 1e-14;
    }
    let chol = rhs.cholesky().expect("hardy rhs form must be positive definite");
    let linv = chol.l().try_inverse().expect("triangular inverse");
    let m = &linv * lhs * linv.transpose();
    let sym = nalgebra::SymmetricEigen::new(m);
    sym.eigenvalues.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

/// Korn inequality data: lhs = ||v||_H1^2 against the symmetric-gradient
/// energy plus a lower-order tail.
#[derive(Debug, Clone, Copy)]
pub struct KornReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Evaluate the (optionally density-weighted) Korn quotient.
pub fn korn_check(v: &Field, weighted: bool, rho0: Option<&Field>) -> KornReport {
    let grid = v.grid.clone();
    let n = grid.node_count();
    let mut dv = Vec::with_capacity(3);
    for axis in 1..=3 {
        dv.push(diff(v, axis));
    }
    let mut sym = Field::zeros(&grid, 1);
    for i in 0..3 {
        for j in 0..3 {
            for idx in 0..n {
                // v^i_{,j} + v^j_{,i}
                let e = dv[j].values[i * n + idx] + dv[i].values[j * n + idx];
                sym.values[idx] += e * e;
            }
        }
    }
    let tail = if weighted {
        let w = rho0.expect("weighted Korn check needs rho0");
        sobolev_norm_sq(v, 0, Some(w), false).expect("weighted L2")
    } else {
        sobolev_norm_sq(v, 0, None, false).expect("L2")
    };
    let lhs = sobolev_norm_sq(v, 1, None, false).expect("H1");
    let rhs = integrate(&sym) + tail;
    KornReport { lhs, rhs, ratio: lhs / rhs }
}

/// Discrete embedding constant max ||D psi||_Linf(Gamma) / ||psi||_H3 over a
/// seeded probe set; used once by the vacuum-boundary drift monitor.
pub fn boundary_embedding_constant(probes: &[Field]) -> f64 {
    let mut worst: f64 = 0.0;
    for f in probes {
        let grid = f.grid.clone();
        let plane = grid.n1 * grid.n2;
        let d3 = diff(f, 3);
        let mut trace: f64 = 0.0;
        for p in 0..plane {
            trace = trace.max(d3.values[p].abs());
            trace = trace.max(d3.values[(grid.n3 - 1) * plane + p].abs());
        }
        let h3 = sobolev_norm(f, 3, None, false).expect("H3 norm");
        if h3 > 1e-30 {
            worst = worst.max(trace / h3);
        }
    }
    worst
}
