//! Galerkin discretization and implicit time integration of the linearized
//! system: given a frozen trajectory (v~, Theta~) through its flow map, the
//! solving operator integrates the linear parabolic problem for v, then for
//! Theta, in the Fourier x Chebyshev bases.
//!
//! The two equations are solved sequentially (the velocity equation does
//! not involve the new temperature). Per-step linear systems are dense and
//! solved by LU at verification scale. The stress boundary condition is
//! natural in the weak form; the temperature basis is essentially H^1_0.

use nalgebra::{DMatrix, DVector};

use crate::basis::{min_symmetric_eigenvalue, node_weights, BasisSet, ModeFamily};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::initial_data::{InitialData, PhysParams};
use crate::kinematics::{compute_deformation, Deformation, FlowMap};
use crate::operators::{compression_field, stress, stress_work_field};

/// Implicit time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    BackwardEuler,
    CrankNicolson,
}

/// Uniform time grid on [0, T].
#[derive(Debug, Clone, Copy)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_steps: usize, scheme: Scheme) -> Result<TimeGrid> {
        if t_final <= 0.0 || n_steps == 0 {
            return Err(Error::Validation(format!(
                "time grid needs T > 0 and n_steps >= 1, got T = {t_final}, n_steps = {n_steps}"
            )));
        }
        Ok(TimeGrid { t_final, n_steps, scheme })
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| k as f64 * self.dt()).collect()
    }
}

/// Time-sampled flow maps and frozen temperature along the input
/// trajectory; deformations are computed on demand at the scheme's stage
/// points. The solve refuses to start when J~ leaves the a priori bounds.
#[derive(Debug, Clone)]
pub struct FrozenCoefficients {
    pub etas: Vec<Field>,
    pub thetas: Vec<Field>,
    pub tg: TimeGrid,
    /// Set when all samples are identical (saves reassembly).
    static_in_time: bool,
}

const J_SLACK: f64 = 1e-12;

fn check_j_bounds(d: &Deformation, what: &str) -> Result<()> {
    let mut j_min = f64::INFINITY;
    let mut j_max = f64::NEG_INFINITY;
    for &j in &d.jac.values {
        j_min = j_min.min(j);
        j_max = j_max.max(j);
    }
    if j_min < 0.5 - J_SLACK || j_max > 1.5 + J_SLACK {
        return Err(Error::AprioriViolated(format!(
            "frozen Jacobian out of [1/2, 3/2] at {what}: range [{j_min:.6}, {j_max:.6}]"
        )));
    }
    Ok(())
}

impl FrozenCoefficients {
    /// Freeze a trajectory given its flow maps and temperatures at the step
    /// times (n_steps + 1 samples each).
    pub fn new(etas: Vec<Field>, thetas: Vec<Field>, tg: TimeGrid) -> Result<FrozenCoefficients> {
        if etas.len() != tg.n_steps + 1 || thetas.len() != tg.n_steps + 1 {
            return Err(Error::GridMismatch(format!(
                "frozen coefficients need {} samples, got {} / {}",
                tg.n_steps + 1,
                etas.len(),
                thetas.len()
            )));
        }
        for (k, eta) in etas.iter().enumerate() {
            let d = compute_deformation(&FlowMap { eta: eta.clone(), time: 0.0 })?;
            check_j_bounds(&d, &format!("step {k}"))?;
        }
        Ok(FrozenCoefficients { etas, thetas, tg, static_in_time: false })
    }

    /// Frozen state at rest: eta = Id at every step, constant temperature.
    pub fn at_rest(g: &Grid, theta: Field, tg: TimeGrid) -> Result<FrozenCoefficients> {
        let id = FlowMap::identity(g);
        let etas = vec![id.eta; tg.n_steps + 1];
        let thetas = vec![theta; tg.n_steps + 1];
        let mut out = FrozenCoefficients::new(etas, thetas, tg)?;
        out.static_in_time = true;
        Ok(out)
    }

    /// Stage sample for step k: the midpoint for Crank-Nicolson, the right
    /// endpoint for backward Euler.
    pub fn stage(&self, k: usize) -> Result<(Deformation, Field, f64)> {
        let dt = self.tg.dt();
        match self.tg.scheme {
            Scheme::BackwardEuler => {
                let d = compute_deformation(&FlowMap {
                    eta: self.etas[k + 1].clone(),
                    time: 0.0,
                })?;
                check_j_bounds(&d, &format!("stage {k}"))?;
                Ok((d, self.thetas[k + 1].clone(), (k + 1) as f64 * dt))
            }
            Scheme::CrankNicolson => {
                let mut eta = self.etas[k].clone();
                eta.scale(0.5);
                eta.add_scaled(&self.etas[k + 1], 0.5);
                let d = compute_deformation(&FlowMap { eta, time: 0.0 })?;
                check_j_bounds(&d, &format!("stage {k}"))?;
                let mut theta = self.thetas[k].clone();
                theta.scale(0.5);
                theta.add_scaled(&self.thetas[k + 1], 0.5);
                Ok((d, theta, (k as f64 + 0.5) * dt))
            }
        }
    }

    /// Deformation at a step endpoint (used by the weak-residual check).
    pub fn endpoint_defm(&self, k: usize) -> Result<Deformation> {
        compute_deformation(&FlowMap { eta: self.etas[k].clone(), time: 0.0 })
    }
}

/// Coefficients and synthesized fields of one Galerkin solve.
#[derive(Debug, Clone)]
pub struct GalerkinTrajectory {
    pub times: Vec<f64>,
    pub coeffs: Vec<DVector<f64>>,
    pub fields: Vec<Field>,
}

/// Number of worker threads (env SOLVER_THREADS, default 1 for
/// deterministic output ordering; results are identical either way).
pub fn solver_threads() -> usize {
    std::env::var("SOLVER_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(1)
        .min(16)
}

/// Run `n_tasks` independent jobs on up to `threads` workers; outputs are
/// indexed, so the result does not depend on scheduling.
fn parallel_map<R: Send>(n_tasks: usize, threads: usize, f: impl Fn(usize) -> R + Sync) -> Vec<R> {
    if threads <= 1 || n_tasks <= 1 {
        return (0..n_tasks).map(f).collect();
    }
    let mut out: Vec<Option<R>> = (0..n_tasks).map(|_| None).collect();
    let chunk = n_tasks.div_ceil(threads);
    std::thread::scope(|scope| {
        for (t, slot) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            scope.spawn(move || {
                for (i, s) in slot.iter_mut().enumerate() {
                    *s = Some(f(t * chunk + i));
                }
            });
        }
    });
    out.into_iter().map(|o| o.expect("every task ran")).collect()
}

/// Mass matrix (rho0 w_l, w_s); symmetric positive definite for admissible
/// densities.
pub fn assemble_mass(rho0: &Field, family: &ModeFamily, g: &Grid) -> Result<DMatrix<f64>> {
    let m = family.gram(g, Some(rho0));
    let min_eig = min_symmetric_eigenvalue(&m);
    if min_eig <= 1e-14 {
        return Err(Error::SingularMass(min_eig));
    }
    Ok(m)
}

/// P_i = sum_r diag(a^r_i) G_r and w-weighted Q_i = diag(w) sum_r
/// diag(A^r_i) G_r for one mode family and one frozen deformation.
fn pq_matrices(
    defm: &Deformation,
    family: &ModeFamily,
    w: &DVector<f64>,
) -> ([DMatrix<f64>; 3], [DMatrix<f64>; 3]) {
    let nodes = family.values.nrows();
    let n = family.n_modes();
    let nn = defm.jac.grid.node_count();
    let build = |use_cof: bool, i: usize, weight: bool| -> DMatrix<f64> {
        let mut out = DMatrix::<f64>::zeros(nodes, n);
        for r in 0..3 {
            let coef = if use_cof {
                &defm.cof.values[(3 * r + i) * nn..(3 * r + i + 1) * nn]
            } else {
                &defm.a_inv.values[(3 * r + i) * nn..(3 * r + i + 1) * nn]
            };
            let g = &family.grads[r];
            for row in 0..nodes {
                let c = coef[row];
                if c != 0.0 {
                    for col in 0..n {
                        out[(row, col)] += c * g[(row, col)];
                    }
                }
            }
        }
        if weight {
            for row in 0..nodes {
                let wv = w[row];
                for col in 0..n {
                    out[(row, col)] *= wv;
                }
            }
        }
        out
    };
    (
        [build(true, 0, false), build(true, 1, false), build(true, 2, false)],
        [build(false, 0, true), build(false, 1, true), build(false, 2, true)],
    )
}

/// The nine mixed blocks M2[j][i] = int (P_s)_j (Q_l)_i dx.
fn mixed_blocks(
    p_mats: &[DMatrix<f64>; 3],
    wq_mats: &[DMatrix<f64>; 3],
) -> Vec<DMatrix<f64>> {
    let threads = solver_threads();
    parallel_map(9, threads, |t| {
        let (j, i) = (t / 3, t % 3);
        p_mats[j].transpose() * &wq_mats[i]
    })
}

/// Velocity stiffness: 3N x 3N coupling of the viscous weak form
/// (a^r_j S^ij[v], w_{s,r}).
fn velocity_stiffness(
    defm: &Deformation,
    family: &ModeFamily,
    p: &PhysParams,
    w: &DVector<f64>,
) -> DMatrix<f64> {
    let n = family.n_modes();
    let (pm, wqm) = pq_matrices(defm, family, w);
    let m2 = mixed_blocks(&pm, &wqm);
    let mut trace = DMatrix::<f64>::zeros(n, n);
    for d in 0..3 {
        trace += &m2[d * 3 + d];
    }
    let mut k = DMatrix::<f64>::zeros(3 * n, 3 * n);
    for i in 0..3 {
        for j in 0..3 {
            let mut block = p.mu * &m2[j * 3 + i] + p.lambda * &m2[i * 3 + j];
            if i == j {
                block += p.mu * &trace;
            }
            k.view_mut((i * n, j * n), (n, n)).copy_from(&block);
        }
    }
    k
}

/// Temperature stiffness kappa (a^r_i (grad_eta psi_l)^i, psi_{s,r}).
fn temperature_stiffness(
    defm: &Deformation,
    family: &ModeFamily,
    p: &PhysParams,
    w: &DVector<f64>,
) -> DMatrix<f64> {
    let (pm, wqm) = pq_matrices(defm, family, w);
    let m2 = mixed_blocks(&pm, &wqm);
    let n = family.n_modes();
    let mut k = DMatrix::<f64>::zeros(n, n);
    for d in 0..3 {
        k += &m2[d * 3 + d];
    }
    k * p.kappa
}

/// Pressure data (a^r_i R rho0 Theta~ / J~, w_{s,r}) for all components.
fn velocity_pressure_rhs(
    defm: &Deformation,
    theta: &Field,
    rho0: &Field,
    p: &PhysParams,
    family: &ModeFamily,
    w: &DVector<f64>,
) -> DVector<f64> {
    let nn = defm.jac.grid.node_count();
    let n = family.n_modes();
    let mut press = vec![0.0; nn];
    for idx in 0..nn {
        press[idx] =
            w[idx] * p.gas_r * rho0.values[idx] * theta.values[idx] / defm.jac.values[idx];
    }
    let mut rhs = DVector::<f64>::zeros(3 * n);
    for i in 0..3 {
        // (P_s)_i against the weighted pressure.
        for r in 0..3 {
            let coef = &defm.cof.values[(3 * r + i) * nn..(3 * r + i + 1) * nn];
            let g = &family.grads[r];
            for col in 0..n {
                let mut s = 0.0;
                for row in 0..nn {
                    s += press[row] * coef[row] * g[(row, col)];
                }
                rhs[i * n + col] += s;
            }
        }
    }
    rhs
}

/// Weighted load vector (f, w_s) for each component of a forcing field.
fn load_vector(f: &Field, family: &ModeFamily, w: &DVector<f64>) -> DVector<f64> {
    let n = family.n_modes();
    let nn = f.grid.node_count();
    let comps = f.components;
    let mut rhs = DVector::<f64>::zeros(comps * n);
    for c in 0..comps {
        let vals = f.component(c);
        for col in 0..n {
            let mut s = 0.0;
            for row in 0..nn {
                s += w[row] * vals[row] * family.values[(row, col)];
            }
            rhs[c * n + col] += s;
        }
    }
    rhs
}

fn synthesize_vector(family: &ModeFamily, g: &Grid, coeffs: &DVector<f64>, comps: usize) -> Field {
    let n = family.n_modes();
    let mut out = Field::zeros(g, comps);
    for c in 0..comps {
        let sub = DVector::from_iterator(n, (0..n).map(|i| coeffs[c * n + i]));
        let vals = &family.values * sub;
        out.component_mut(c).copy_from_slice(vals.as_slice());
    }
    out
}

/// Galerkin solve of the linearized momentum equation along the frozen
/// trajectory; the optional forcing supports manufactured solutions and
/// enters the weak form as (g, w_s).
pub fn solve_velocity(
    frozen: &FrozenCoefficients,
    data: &InitialData,
    p: &PhysParams,
    tg: &TimeGrid,
    basis: &BasisSet,
    forcing: Option<&dyn Fn(f64) -> Field>,
) -> Result<GalerkinTrajectory> {
    let g = data.grid();
    let family = &basis.velocity;
    let n = family.n_modes();
    let w = node_weights(&g);
    let mass = assemble_mass(&data.rho0, family, &g)?;
    let dt = tg.dt();

    // Initial coefficients: componentwise L2 projection of u0.
    let mut c = DVector::<f64>::zeros(3 * n);
    for comp in 0..3 {
        let proj = family.project(&g, data.u0.component(comp))?;
        for i in 0..n {
            c[comp * n + i] = proj[i];
        }
    }

    let mut coeffs = vec![c.clone()];
    let mut fields = vec![synthesize_vector(family, &g, &c, 3)];

    let mut cached: Option<(DMatrix<f64>, nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)> = None;
    for k in 0..tg.n_steps {
        let (defm, theta_stage, t_stage) = frozen.stage(k)?;
        if cached.is_none() || !frozen.static_in_time {
            let k_mat = velocity_stiffness(&defm, family, p, &w);
            let mut a = DMatrix::<f64>::zeros(3 * n, 3 * n);
            for i in 0..3 {
                a.view_mut((i * n, i * n), (n, n)).copy_from(&mass);
            }
            a /= dt;
            match tg.scheme {
                Scheme::BackwardEuler => a += &k_mat,
                Scheme::CrankNicolson => a += 0.5 * &k_mat,
            }
            cached = Some((k_mat, a.lu()));
        }
        let (k_mat, lu) = cached.as_ref().unwrap();

        let mut b = velocity_pressure_rhs(&defm, &theta_stage, &data.rho0, p, family, &w);
        if let Some(f) = forcing {
            b += load_vector(&f(t_stage), family, &w);
        }
        // rhs = M/dt c_k (+ CN correction) + b.
        let mut rhs = DVector::<f64>::zeros(3 * n);
        for i in 0..3 {
            let sub = DVector::from_iterator(n, (0..n).map(|q| c[i * n + q]));
            let mv = &mass * sub;
            for q in 0..n {
                rhs[i * n + q] = mv[q] / dt;
            }
        }
        if tg.scheme == Scheme::CrankNicolson {
            rhs -= 0.5 * (k_mat * &c);
        }
        rhs += b;
        c = lu.solve(&rhs).ok_or(Error::LinearSolveFailure {
            step: k,
            context: "velocity Crank-Nicolson/backward-Euler system".into(),
        })?;
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState(format!("velocity solve at step {k}")));
        }
        coeffs.push(c.clone());
        fields.push(synthesize_vector(family, &g, &c, 3));
    }
    Ok(GalerkinTrajectory { times: tg.times(), coeffs, fields })
}

/// Galerkin solve of the linearized temperature equation in the H^1_0
/// basis; the compression and stress-work terms are data computed from the
/// already-solved velocity.
pub fn solve_temperature(
    v_fields: &[Field],
    frozen: &FrozenCoefficients,
    data: &InitialData,
    p: &PhysParams,
    tg: &TimeGrid,
    basis: &BasisSet,
    forcing: Option<&dyn Fn(f64) -> Field>,
) -> Result<GalerkinTrajectory> {
    let g = data.grid();
    let family = &basis.temperature;
    let w = node_weights(&g);
    let mut mass = assemble_mass(&data.rho0, family, &g)?;
    mass *= p.c_v;
    let dt = tg.dt();

    let mut c = family.project(&g, data.theta0.component(0))?;
    let mut coeffs = vec![c.clone()];
    let mut fields = vec![family.synthesize(&g, &c)];

    let mut cached: Option<(DMatrix<f64>, nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)> = None;
    for k in 0..tg.n_steps {
        let (defm, theta_stage, t_stage) = frozen.stage(k)?;
        if cached.is_none() || !frozen.static_in_time {
            let k_mat = temperature_stiffness(&defm, family, p, &w);
            let mut a = &mass / dt;
            match tg.scheme {
                Scheme::BackwardEuler => a += &k_mat,
                Scheme::CrankNicolson => a += 0.5 * &k_mat,
            }
            cached = Some((k_mat, a.lu()));
        }
        let (k_mat, lu) = cached.as_ref().unwrap();

        // Velocity at the stage point.
        let v_stage = match tg.scheme {
            Scheme::BackwardEuler => v_fields[k + 1].clone(),
            Scheme::CrankNicolson => {
                let mut v = v_fields[k].clone();
                v.scale(0.5);
                v.add_scaled(&v_fields[k + 1], 0.5);
                v
            }
        };
        let compr = compression_field(&v_stage, &theta_stage, &defm, &data.rho0, p);
        let work = stress_work_field(&v_stage, &defm, p);
        let mut source = work;
        source.add_scaled(&compr, -1.0);
        if let Some(f) = forcing {
            source.add_scaled(&f(t_stage), 1.0);
        }
        let b = load_vector(&source, family, &w);

        let mut rhs = (&mass * &c) / dt;
        if tg.scheme == Scheme::CrankNicolson {
            rhs -= 0.5 * (k_mat * &c);
        }
        rhs += b;
        c = lu.solve(&rhs).ok_or(Error::LinearSolveFailure {
            step: k,
            context: "temperature implicit system".into(),
        })?;
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState(format!("temperature solve at step {k}")));
        }
        coeffs.push(c.clone());
        fields.push(family.synthesize(&g, &c));
    }
    Ok(GalerkinTrajectory { times: tg.times(), coeffs, fields })
}

/// Absolute defects of the two weak-form identities for supplied static
/// test functions (velocity tests free on the boundary, temperature tests
/// vanishing there).
#[derive(Debug, Clone)]
pub struct WeakDefects {
    pub velocity: Vec<f64>,
    pub temperature: Vec<f64>,
}

pub fn weak_residual(
    v_fields: &[Field],
    theta_fields: &[Field],
    frozen: &FrozenCoefficients,
    data: &InitialData,
    p: &PhysParams,
    velocity_tests: &[Field],
    temperature_tests: &[Field],
) -> Result<WeakDefects> {
    let g = data.grid();
    let n_steps = frozen.tg.n_steps;
    assert_eq!(v_fields.len(), n_steps + 1, "velocity trajectory length");
    assert_eq!(theta_fields.len(), n_steps + 1, "temperature trajectory length");
    let dt = frozen.tg.dt();
    let nn = g.node_count();

    // Endpoint deformations once.
    let mut defms = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        defms.push(frozen.endpoint_defm(k)?);
    }

    let trapz = |vals: &[f64]| -> f64 {
        let mut s = 0.0;
        for k in 0..vals.len() - 1 {
            s += 0.5 * dt * (vals[k] + vals[k + 1]);
        }
        s
    };

    let mut velocity = Vec::with_capacity(velocity_tests.len());
    for phi in velocity_tests {
        let dphi: Vec<Field> = (1..=3).map(|ax| crate::grid::diff(phi, ax)).collect();
        let mut stress_series = Vec::with_capacity(n_steps + 1);
        let mut press_series = Vec::with_capacity(n_steps + 1);
        for k in 0..=n_steps {
            let st = stress(&v_fields[k], &defms[k], p);
            let mut s_acc = 0.0;
            let mut p_acc = 0.0;
            let mut integrand = Field::zeros(&g, 1);
            for r in 0..3 {
                for i in 0..3 {
                    let a_ri = &defms[k].cof.values[(3 * r + i) * nn..(3 * r + i + 1) * nn];
                    // pressure: a^r_i ptilde phi^i_{,r}
                    for idx in 0..nn {
                        integrand.values[idx] = a_ri[idx]
                            * (p.gas_r * data.rho0.values[idx] * frozen.thetas[k].values[idx]
                                / defms[k].jac.values[idx])
                            * dphi[r].values[i * nn + idx];
                    }
                    p_acc += crate::grid::integrate(&integrand);
                    for j in 0..3 {
                        let a_rj =
                            &defms[k].cof.values[(3 * r + j) * nn..(3 * r + j + 1) * nn];
                        let s_ij = &st.values[(3 * i + j) * nn..(3 * i + j + 1) * nn];
                        if i == 0 {
                            // accumulate once per (r, j, i-loop) pairing below
                        }
                        for idx in 0..nn {
                            integrand.values[idx] =
                                a_rj[idx] * s_ij[idx] * dphi[r].values[i * nn + idx];
                        }
                        s_acc += crate::grid::integrate(&integrand);
                    }
                }
            }
            stress_series.push(s_acc);
            press_series.push(p_acc);
        }
        let mut defect = 0.0;
        for i in 0..3 {
            let mut fin = Field::zeros(&g, 1);
            let mut init = Field::zeros(&g, 1);
            for idx in 0..nn {
                fin.values[idx] = data.rho0.values[idx]
                    * v_fields[n_steps].component(i)[idx]
                    * phi.component(i)[idx];
                init.values[idx] =
                    data.rho0.values[idx] * data.u0.component(i)[idx] * phi.component(i)[idx];
            }
            defect += crate::grid::integrate(&fin) - crate::grid::integrate(&init);
        }
        defect += trapz(&stress_series) - trapz(&press_series);
        velocity.push(defect.abs());
    }

    let mut temperature = Vec::with_capacity(temperature_tests.len());
    for psi in temperature_tests {
        let dpsi: Vec<Field> = (1..=3).map(|ax| crate::grid::diff(psi, ax)).collect();
        let mut cond_series = Vec::with_capacity(n_steps + 1);
        let mut src_series = Vec::with_capacity(n_steps + 1);
        for k in 0..=n_steps {
            // kappa (a^r_i (grad_eta Theta)^i, psi_{,r})
            let gt = crate::operators::grad_eta(&theta_fields[k], &defms[k]);
            let mut acc = 0.0;
            let mut integrand = Field::zeros(&g, 1);
            for r in 0..3 {
                for i in 0..3 {
                    let a_ri = &defms[k].cof.values[(3 * r + i) * nn..(3 * r + i + 1) * nn];
                    for idx in 0..nn {
                        integrand.values[idx] =
                            a_ri[idx] * gt.values[i * nn + idx] * dpsi[r].values[idx];
                    }
                    acc += crate::grid::integrate(&integrand);
                }
            }
            cond_series.push(p.kappa * acc);
            let compr =
                compression_field(&v_fields[k], &frozen.thetas[k], &defms[k], &data.rho0, p);
            let work = stress_work_field(&v_fields[k], &defms[k], p);
            for idx in 0..nn {
                integrand.values[idx] = (work.values[idx] - compr.values[idx]) * psi.values[idx];
            }
            src_series.push(crate::grid::integrate(&integrand));
        }
        let mut fin = Field::zeros(&g, 1);
        let mut init = Field::zeros(&g, 1);
        for idx in 0..nn {
            fin.values[idx] =
                p.c_v * data.rho0.values[idx] * theta_fields[n_steps].values[idx] * psi.values[idx];
            init.values[idx] =
                p.c_v * data.rho0.values[idx] * data.theta0.values[idx] * psi.values[idx];
        }
        let defect = crate::grid::integrate(&fin) - crate::grid::integrate(&init)
            + trapz(&cond_series)
            - trapz(&src_series);
        temperature.push(defect.abs());
    }

    Ok(WeakDefects { velocity, temperature })
}

/// Weighted L2 norm of a trajectory difference at matching steps, used by
/// the self-convergence tests.
pub fn discrete_l2_difference(a: &[Field], b: &[Field]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut worst = 0.0_f64;
    for (fa, fb) in a.iter().zip(b.iter()) {
        let mut diff = fa.clone();
        diff.add_scaled(fb, -1.0);
        let mut sq = Field::zeros(&fa.grid, 1);
        let nn = fa.grid.node_count();
        for c in 0..fa.components {
            for idx in 0..nn {
                sq.values[idx] += diff.values[c * nn + idx] * diff.values[c * nn + idx];
            }
        }
        worst = worst.max(crate::grid::integrate(&sq).sqrt());
    }
    worst
}

/// Max discrete L2 norm over a trajectory (for relative errors).
pub fn discrete_l2_max(a: &[Field]) -> f64 {
    let zero: Vec<Field> = a.iter().map(|f| Field::zeros(&f.grid, f.components)).collect();
    discrete_l2_difference(a, &zero)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis_orders;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn phys() -> PhysParams {
        PhysParams::default()
    }

    #[test]
    fn mass_matrix_examples() {
        let g = make_grid(8, 8, 17).unwrap();
        let b = build_basis_orders(&g, 3, 3, 3).unwrap();
        // Orthonormalized basis with rho0 = 1: identity matrix.
        let on = b.velocity.orthonormalized(&g);
        let one = Field::scalar_from_fn(&g, |_, _, _| 1.0);
        let m = assemble_mass(&one, &on, &g).unwrap();
        for i in 0..on.n_modes() {
            for j in 0..on.n_modes() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((m[(i, j)] - expect).abs() < 1e-10);
            }
        }
        // rho0 = 0: singular.
        let zero = Field::zeros(&g, 1);
        assert!(matches!(assemble_mass(&zero, &b.velocity, &g), Err(Error::SingularMass(_))));
        // rho0 = d: SPD with min eigenvalue matching a fine-grid quadrature.
        let d = crate::initial_data::distance_function(&g);
        let m = assemble_mass(&d, &b.velocity, &g).unwrap();
        let eig = min_symmetric_eigenvalue(&m);
        assert!(eig > 0.0);
        let g_fine = make_grid(8, 8, 65).unwrap();
        let b_fine = build_basis_orders(&g_fine, 3, 3, 3).unwrap();
        let d_fine = crate::initial_data::distance_function(&g_fine);
        let m_fine = assemble_mass(&d_fine, &b_fine.velocity, &g_fine).unwrap();
        let eig_fine = min_symmetric_eigenvalue(&m_fine);
        assert!((eig - eig_fine).abs() < 1e-8, "{eig} vs {eig_fine}");
    }

    #[test]
    fn zero_data_zero_solution() {
        let g = make_grid(8, 8, 17).unwrap();
        let b = build_basis_orders(&g, 2, 2, 3).unwrap();
        let tg = TimeGrid::new(0.01, 5, Scheme::CrankNicolson).unwrap();
        let d = crate::initial_data::distance_function(&g);
        let data = InitialData::new_unchecked(
            d,
            Field::zeros(&g, 3),
            Field::zeros(&g, 1),
            1.0,
        );
        let frozen = FrozenCoefficients::at_rest(&g, Field::zeros(&g, 1), tg).unwrap();
        let v = solve_velocity(&frozen, &data, &phys(), &tg, &b, None).unwrap();
        for f in &v.fields {
            assert!(f.max_abs() < 1e-14);
        }
        let th = solve_temperature(&v.fields, &frozen, &data, &phys(), &tg, &b, None).unwrap();
        for f in &th.fields {
            assert!(f.max_abs() < 1e-14);
        }
    }

    #[test]
    fn heat_mode_decay_is_exact() {
        // rho0 = 1 override, theta0 = sin(pi x3): Theta(t) = e^{-kappa pi^2
        // t / c_v} sin(pi x3). The mode is 1-D, so tangential order 1 and a
        // wall-normal order large enough to resolve the sine.
        let g = make_grid(4, 4, 33).unwrap();
        let b = build_basis_orders(&g, 1, 1, 12).unwrap();
        let p = phys();
        let t_end = 0.1;
        let tg = TimeGrid::new(t_end, 1000, Scheme::CrankNicolson).unwrap();
        let one = Field::scalar_from_fn(&g, |_, _, _| 1.0);
        let theta0 = Field::scalar_from_fn(&g, |_, _, x3| (PI * x3).sin());
        let data = InitialData::new_unchecked(one, Field::zeros(&g, 3), theta0, 1.0);
        let frozen = FrozenCoefficients::at_rest(&g, Field::zeros(&g, 1), tg).unwrap();
        let v = solve_velocity(&frozen, &data, &p, &tg, &b, None).unwrap();
        let th = solve_temperature(&v.fields, &frozen, &data, &p, &tg, &b, None).unwrap();
        let decay = (-p.kappa * PI * PI * t_end / p.c_v).exp();
        let last = th.fields.last().unwrap();
        let mut worst = 0.0_f64;
        for i3 in 0..g.n3 {
            let expect = decay * (PI * g.x3_nodes[i3]).sin();
            for i2 in 0..g.n2 {
                for i1 in 0..g.n1 {
                    worst = worst.max((last.at(0, i3, i2, i1) - expect).abs());
                }
            }
        }
        assert!(worst / decay < 1e-6, "relative heat-mode error {}", worst / decay);
    }

    #[test]
    fn velocity_fine_step_self_oracle() {
        // Frozen at rest, u0 = single Fourier-Chebyshev mode, Theta~ = 0.
        // The horizon keeps dt * lambda_max within the asymptotic regime of
        // the scheme (the degenerate density makes the fast modes stiff).
        let g = make_grid(8, 8, 17).unwrap();
        let b = build_basis_orders(&g, 3, 3, 4).unwrap();
        let p = phys();
        let d = crate::initial_data::distance_function(&g);
        let u0 = Field::vector_from_fn(&g, |x1, _, x3| {
            let s = 2.0 * x3 - 1.0;
            [(2.0 * PI * x1).cos() * (2.0 * s * s - 1.0), 0.0, 0.0]
        });
        let data = InitialData::new_unchecked(d, u0, Field::zeros(&g, 1), 1.0);
        let coarse_tg = TimeGrid::new(0.002, 400, Scheme::CrankNicolson).unwrap();
        let fine_tg = TimeGrid::new(0.002, 4000, Scheme::CrankNicolson).unwrap();
        let coarse_frozen =
            FrozenCoefficients::at_rest(&g, Field::zeros(&g, 1), coarse_tg).unwrap();
        let fine_frozen = FrozenCoefficients::at_rest(&g, Field::zeros(&g, 1), fine_tg).unwrap();
        let coarse = solve_velocity(&coarse_frozen, &data, &p, &coarse_tg, &b, None).unwrap();
        let fine = solve_velocity(&fine_frozen, &data, &p, &fine_tg, &b, None).unwrap();
        // Compare the final fields in discrete L2.
        let diff = discrete_l2_difference(
            &coarse.fields[coarse.fields.len() - 1..],
            &fine.fields[fine.fields.len() - 1..],
        );
        let scale = discrete_l2_max(&fine.fields[fine.fields.len() - 1..]);
        assert!(diff / scale < 1e-6, "self-oracle relative error {}", diff / scale);
    }

    #[test]
    fn backward_euler_energy_decays() {
        let g = make_grid(8, 8, 17).unwrap();
        let b = build_basis_orders(&g, 3, 3, 4).unwrap();
        let p = phys();
        let d = crate::initial_data::distance_function(&g);
        let u0 = Field::vector_from_fn(&g, |x1, x2, x3| {
            [
                0.3 * (2.0 * PI * x1).sin() * x3,
                0.2 * (2.0 * PI * x2).cos(),
                0.1 * (2.0 * x3 - 1.0),
            ]
        });
        let data = InitialData::new_unchecked(d.clone(), u0, Field::zeros(&g, 1), 1.0);
        let tg = TimeGrid::new(0.02, 10, Scheme::BackwardEuler).unwrap();
        let frozen = FrozenCoefficients::at_rest(&g, Field::zeros(&g, 1), tg).unwrap();
        let sol = solve_velocity(&frozen, &data, &p, &tg, &b, None).unwrap();
        let mass = assemble_mass(&d, &b.velocity, &g).unwrap();
        let energy = |c: &DVector<f64>| -> f64 {
            let n = b.velocity.n_modes();
            let mut e = 0.0;
            for i in 0..3 {
                let sub = DVector::from_iterator(n, (0..n).map(|q| c[i * n + q]));
                e += (&mass * &sub).dot(&sub);
            }
            e
        };
        for k in 0..tg.n_steps {
            let e0 = energy(&sol.coeffs[k]);
            let e1 = energy(&sol.coeffs[k + 1]);
            assert!(e1 <= e0 + 1e-12, "step {k}: {e1} > {e0}");
        }
    }

    #[test]
    fn weak_residual_of_zero_is_zero() {
        let g = make_grid(8, 8, 9).unwrap();
        let tg = TimeGrid::new(0.01, 4, Scheme::CrankNicolson).unwrap();
        let d = crate::initial_data::distance_function(&g);
        let data =
            InitialData::new_unchecked(d, Field::zeros(&g, 3), Field::zeros(&g, 1), 1.0);
        let frozen = FrozenCoefficients::at_rest(&g, Field::zeros(&g, 1), tg).unwrap();
        let zeros_v: Vec<Field> = (0..=tg.n_steps).map(|_| Field::zeros(&g, 3)).collect();
        let zeros_t: Vec<Field> = (0..=tg.n_steps).map(|_| Field::zeros(&g, 1)).collect();
        let phi = Field::vector_from_fn(&g, |x1, _, x3| [(2.0 * PI * x1).sin(), x3, 1.0]);
        let psi = Field::scalar_from_fn(&g, |_, _, x3| x3 * (1.0 - x3));
        let defects = weak_residual(
            &zeros_v,
            &zeros_t,
            &frozen,
            &data,
            &phys(),
            &[phi],
            &[psi],
        )
        .unwrap();
        assert!(defects.velocity[0] < 1e-15);
        assert!(defects.temperature[0] < 1e-15);
    }

    #[test]
    fn temporal_self_convergence_is_second_order() {
        // Smooth frozen problem (constant density override keeps the
        // spectrum mild) over dt in {4e-3, 2e-3, 1e-3}.
        let g = make_grid(4, 4, 17).unwrap();
        let b = build_basis_orders(&g, 1, 1, 6).unwrap();
        let p = phys();
        let one = Field::scalar_from_fn(&g, |_, _, _| 1.0);
        let theta0 = Field::scalar_from_fn(&g, |_, _, x3| (PI * x3).sin());
        let data = InitialData::new_unchecked(
            one,
            Field::zeros(&g, 3),
            theta0.clone(),
            1.0,
        );
        let t_end = 0.04;
        let mut finals = Vec::new();
        for n_steps in [10usize, 20, 40] {
            let tg = TimeGrid::new(t_end, n_steps, Scheme::CrankNicolson).unwrap();
            let frozen = FrozenCoefficients::at_rest(&g, theta0.clone(), tg).unwrap();
            let v = solve_velocity(&frozen, &data, &p, &tg, &b, None).unwrap();
            let th = solve_temperature(&v.fields, &frozen, &data, &p, &tg, &b, None).unwrap();
            finals.push(th.fields.last().unwrap().clone());
        }
        let e01 = discrete_l2_difference(&finals[0..1], &finals[1..2]);
        let e12 = discrete_l2_difference(&finals[1..2], &finals[2..3]);
        let order = (e01 / e12).log2();
        assert!(
            (1.8..=2.2).contains(&order),
            "CN self-convergence order {order} (e01 {e01}, e12 {e12})"
        );
    }
}
