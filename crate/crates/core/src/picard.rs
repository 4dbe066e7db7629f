//! The solving operator, the V_T metric, and the fixed-point construction
//! of the strong solution.
//!
//! One application of the operator freezes the input trajectory's flow map,
//! solves the linearized system for (v, Theta), and advances a new flow map
//! with the new velocity. The iteration contracts in the V_T norm for small
//! enough horizons; the report records every distance and ratio so that the
//! contraction-versus-horizon shape can be studied directly.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::basis::BasisSet;
use crate::diagnostics::sobolev_norm_sq;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::initial_data::{InitialData, PhysParams};
use crate::kinematics::{check_apriori, compute_deformation, AprioriReport, Deformation, FlowMap};
use crate::operators::{momentum_residual, temperature_residual, StateSlice};
use crate::solver::{solve_temperature, solve_velocity, FrozenCoefficients, TimeGrid};

/// Time-sampled history of (eta, v, Theta) with its deformation cache.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tg: TimeGrid,
    pub etas: Vec<Field>,
    pub vs: Vec<Field>,
    pub thetas: Vec<Field>,
    pub defms: Vec<Deformation>,
}

/// Per-iteration distances, ratios, and end-state residual records.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub iterations: usize,
    /// Max-norm of the momentum residual on interior nodes at the final step.
    pub final_momentum_residual: f64,
    /// Max-norm of the temperature residual on interior nodes at the final step.
    pub final_temperature_residual: f64,
    pub apriori: Vec<AprioriReport>,
    /// Set when some ratio reached 1 (without two in a row, which aborts).
    pub non_contraction_flag: bool,
}

/// Knobs of the fixed-point loop.
#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Bound for max |D eta| in the a priori check (the analysis leaves the
    /// constant unspecified; 2 is the default working value).
    pub deta_bound: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { tol: 1e-8, max_iter: 20, deta_bound: 2.0 }
    }
}

/// One row of the contraction study table.
#[derive(Debug, Clone, Copy)]
pub struct StudyRow {
    pub horizon: f64,
    /// None marks a skip entry (identical perturbed pair).
    pub ratio: Option<f64>,
}

impl Trajectory {
    /// Build from parts, computing the deformation cache.
    pub fn from_parts(
        tg: TimeGrid,
        etas: Vec<Field>,
        vs: Vec<Field>,
        thetas: Vec<Field>,
    ) -> Result<Trajectory> {
        assert_eq!(etas.len(), tg.n_steps + 1);
        assert_eq!(vs.len(), tg.n_steps + 1);
        assert_eq!(thetas.len(), tg.n_steps + 1);
        let mut defms = Vec::with_capacity(etas.len());
        for eta in &etas {
            defms.push(compute_deformation(&FlowMap { eta: eta.clone(), time: 0.0 })?);
        }
        Ok(Trajectory { tg, etas, vs, thetas, defms })
    }

    /// The starting iterate: transport of the initial data, i.e. eta
    /// advanced by the constant velocity u0 with v and Theta held at their
    /// initial values. Step 0 is exactly (Id, u0, theta0).
    pub fn initial(data: &InitialData, tg: TimeGrid) -> Result<Trajectory> {
        let g = data.grid();
        let id = FlowMap::identity(&g);
        let mut etas = Vec::with_capacity(tg.n_steps + 1);
        for k in 0..=tg.n_steps {
            let mut eta = id.eta.clone();
            eta.add_scaled(&data.u0, k as f64 * tg.dt());
            etas.push(eta);
        }
        let vs = vec![data.u0.clone(); tg.n_steps + 1];
        let thetas = vec![data.theta0.clone(); tg.n_steps + 1];
        Trajectory::from_parts(tg, etas, vs, thetas)
    }

    /// Order-1/2 backward difference of a stored series at one step.
    fn backward_diff(fields: &[Field], k: usize, dt: f64, order2: bool) -> Result<Field> {
        if k == 0 {
            return Err(Error::InsufficientHistory { step: 0, need: "one earlier step" });
        }
        let mut out = fields[k].clone();
        if order2 && k >= 2 {
            // (3 f_k - 4 f_{k-1} + f_{k-2}) / (2 dt)
            out.scale(3.0 / (2.0 * dt));
            out.add_scaled(&fields[k - 1], -4.0 / (2.0 * dt));
            out.add_scaled(&fields[k - 2], 1.0 / (2.0 * dt));
        } else {
            out.scale(1.0 / dt);
            out.add_scaled(&fields[k - 1], -1.0 / dt);
        }
        Ok(out)
    }

    /// Second backward difference (f_k - 2 f_{k-1} + f_{k-2}) / dt^2.
    fn backward_diff2(fields: &[Field], k: usize, dt: f64) -> Result<Field> {
        if k < 2 {
            return Err(Error::InsufficientHistory { step: k, need: "two earlier steps" });
        }
        let mut out = fields[k].clone();
        out.scale(1.0 / (dt * dt));
        out.add_scaled(&fields[k - 1], -2.0 / (dt * dt));
        out.add_scaled(&fields[k - 2], 1.0 / (dt * dt));
        Ok(out)
    }

    pub fn v_t(&self, k: usize) -> Result<Field> {
        Trajectory::backward_diff(&self.vs, k, self.tg.dt(), true)
    }

    pub fn theta_t(&self, k: usize) -> Result<Field> {
        Trajectory::backward_diff(&self.thetas, k, self.tg.dt(), true)
    }

    pub fn v_tt(&self, k: usize) -> Result<Field> {
        Trajectory::backward_diff2(&self.vs, k, self.tg.dt())
    }

    pub fn theta_tt(&self, k: usize) -> Result<Field> {
        Trajectory::backward_diff2(&self.thetas, k, self.tg.dt())
    }
}

/// Rebuild the flow map history from a velocity series (trapezoid in time,
/// consistent with linear interpolation of the stage velocities).
fn flow_maps_from_velocity(vs: &[Field], tg: &TimeGrid) -> Vec<Field> {
    let g = vs[0].grid.clone();
    let id = FlowMap::identity(&g);
    let dt = tg.dt();
    let mut etas = Vec::with_capacity(vs.len());
    let mut eta = id.eta.clone();
    etas.push(eta.clone());
    for k in 0..tg.n_steps {
        eta.add_scaled(&vs[k], 0.5 * dt);
        eta.add_scaled(&vs[k + 1], 0.5 * dt);
        etas.push(eta.clone());
    }
    etas
}

/// One application of the solving operator: freeze the input, solve for the
/// new velocity and temperature, advance the output flow map with the new
/// velocity. The output's step 0 is exactly (Id, u0, theta0).
pub fn apply_xi(
    input: &Trajectory,
    data: &InitialData,
    p: &PhysParams,
    basis: &BasisSet,
    opts: &PicardOptions,
) -> Result<Trajectory> {
    for (k, d) in input.defms.iter().enumerate() {
        let rep = check_apriori(d, opts.deta_bound);
        if !rep.ok {
            return Err(Error::AprioriViolated(format!(
                "input trajectory fails the a priori check at step {k}: J in [{:.4}, {:.4}], max |D eta| {:.4}",
                rep.j_min, rep.j_max, rep.deta_max
            )));
        }
    }
    // Freeze: rebuild eta~ from the input's velocity history.
    let frozen_etas = flow_maps_from_velocity(&input.vs, &input.tg);
    let frozen = FrozenCoefficients::new(frozen_etas, input.thetas.clone(), input.tg)?;
    let v_sol = solve_velocity(&frozen, data, p, &input.tg, basis, None)?;
    let th_sol = solve_temperature(&v_sol.fields, &frozen, data, p, &input.tg, basis, None)?;

    let mut vs = v_sol.fields;
    let mut thetas = th_sol.fields;
    vs[0] = data.u0.clone();
    thetas[0] = data.theta0.clone();
    let etas = flow_maps_from_velocity(&vs, &input.tg);
    Trajectory::from_parts(input.tg, etas, vs, thetas)
}

/// The V_T distance: sup-in-time weighted L2 plus time-integrated H1.
pub fn vt_distance(t1: &Trajectory, t2: &Trajectory, rho0: &Field) -> Result<f64> {
    if t1.tg.n_steps != t2.tg.n_steps || (t1.tg.t_final - t2.tg.t_final).abs() > 1e-15 {
        return Err(Error::GridMismatch(format!(
            "trajectories live on different time grids: {} x {} vs {} x {}",
            t1.tg.n_steps, t1.tg.t_final, t2.tg.n_steps, t2.tg.t_final
        )));
    }
    if t1.vs[0].grid.node_count() != t2.vs[0].grid.node_count() {
        return Err(Error::GridMismatch("trajectories live on different grids".into()));
    }
    let dt = t1.tg.dt();
    let mut sup = 0.0_f64;
    let mut h1_series = Vec::with_capacity(t1.tg.n_steps + 1);
    for k in 0..=t1.tg.n_steps {
        let mut dv = t1.vs[k].clone();
        dv.add_scaled(&t2.vs[k], -1.0);
        let mut dth = t1.thetas[k].clone();
        dth.add_scaled(&t2.thetas[k], -1.0);
        let weighted = sobolev_norm_sq(&dv, 0, Some(rho0), false)?
            + sobolev_norm_sq(&dth, 0, Some(rho0), false)?;
        sup = sup.max(weighted);
        h1_series.push(sobolev_norm_sq(&dv, 1, None, false)? + sobolev_norm_sq(&dth, 1, None, false)?);
    }
    let mut integral = 0.0;
    for k in 0..t1.tg.n_steps {
        integral += 0.5 * dt * (h1_series[k] + h1_series[k + 1]);
    }
    Ok((sup + integral).sqrt())
}

fn final_residuals(
    traj: &Trajectory,
    data: &InitialData,
    p: &PhysParams,
) -> Result<(f64, f64)> {
    let k = traj.tg.n_steps;
    let slice = StateSlice {
        v: traj.vs[k].clone(),
        theta: traj.thetas[k].clone(),
        defm: traj.defms[k].clone(),
        time: traj.tg.t_final,
    };
    let v_t = traj.v_t(k)?;
    let th_t = traj.theta_t(k)?;
    let mom = momentum_residual(&slice, &v_t, &data.rho0, p);
    let tem = temperature_residual(&slice, &th_t, &data.rho0, p);
    Ok((mom.max_abs(), tem.max_abs()))
}

/// Picard iteration from the transported initial trajectory to the fixed
/// point of the solving operator.
pub fn iterate_to_fixed_point(
    data: &InitialData,
    p: &PhysParams,
    basis: &BasisSet,
    tg: TimeGrid,
    opts: &PicardOptions,
) -> Result<(Trajectory, IterationReport)> {
    if opts.tol <= 0.0 {
        return Err(Error::Validation("Picard tolerance must be positive".into()));
    }
    let mut current = Trajectory::initial(data, tg)?;
    let mut distances = Vec::new();
    let mut ratios = Vec::new();
    let mut non_contraction_flag = false;
    for _iter in 1..=opts.max_iter {
        let next = match apply_xi(&current, data, p, basis, opts) {
            Ok(t) => t,
            // Leaving the a priori regime mid-iteration signals a horizon
            // beyond the contraction window, not a programming error.
            Err(Error::AprioriViolated(msg)) => return Err(Error::NonContraction(msg)),
            Err(Error::DegenerateJacobian { value, .. }) => {
                return Err(Error::NonContraction(format!(
                    "flow map degenerated (J = {value:.3e}) while iterating"
                )))
            }
            Err(e) => return Err(e),
        };
        let delta = vt_distance(&next, &current, &data.rho0)?;
        distances.push(delta);
        if distances.len() >= 2 {
            let prev = distances[distances.len() - 2];
            if prev > 0.0 {
                let r = delta / prev;
                ratios.push(r);
                if r >= 1.0 {
                    non_contraction_flag = true;
                    if ratios.len() >= 2 && ratios[ratios.len() - 2] >= 1.0 {
                        return Err(Error::NonContraction(format!(
                            "two consecutive V_T ratios >= 1 (last {r:.3})"
                        )));
                    }
                }
            }
        }
        current = next;
        if delta <= opts.tol {
            let apriori =
                current.defms.iter().map(|d| check_apriori(d, opts.deta_bound)).collect();
            let (mom, tem) = final_residuals(&current, data, p)?;
            let report = IterationReport {
                iterations: distances.len(),
                distances,
                ratios,
                final_momentum_residual: mom,
                final_temperature_residual: tem,
                apriori,
                non_contraction_flag,
            };
            return Ok((current, report));
        }
    }
    Err(Error::MaxIterExceeded {
        max_iter: opts.max_iter,
        last: distances.last().copied().unwrap_or(f64::NAN),
    })
}

/// Random span field used to perturb the study iterates.
fn random_span_field(
    basis: &BasisSet,
    g: &crate::grid::Grid,
    rng: &mut impl Rng,
    velocity: bool,
) -> Field {
    if velocity {
        let n = basis.velocity.n_modes();
        let mut out = Field::zeros(g, 3);
        for c in 0..3 {
            let coeffs = nalgebra::DVector::from_iterator(
                n,
                (0..n).map(|_| rng.gen_range(-1.0..1.0)),
            );
            let f = basis.velocity.synthesize(g, &coeffs);
            out.component_mut(c).copy_from_slice(f.component(0));
        }
        out
    } else {
        let n = basis.temperature.n_modes();
        let coeffs =
            nalgebra::DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-1.0..1.0)));
        basis.temperature.synthesize(g, &coeffs)
    }
}

/// Perturb a base trajectory by time-ramped span fields (zero at t = 0 so
/// the initial data stay exact).
fn perturbed_trajectory(
    base: &Trajectory,
    basis: &BasisSet,
    amplitude: f64,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let g = base.vs[0].grid.clone();
    let vmode = random_span_field(basis, &g, rng, true);
    let tmode = random_span_field(basis, &g, rng, false);
    let mut vs = base.vs.clone();
    let mut thetas = base.thetas.clone();
    for k in 1..vs.len() {
        let ramp = k as f64 / base.tg.n_steps as f64;
        vs[k].add_scaled(&vmode, amplitude * ramp);
        thetas[k].add_scaled(&tmode, amplitude * ramp);
    }
    Trajectory::from_parts(base.tg, base.etas.clone(), vs, thetas)
}

/// For each horizon, push two perturbed iterates through one application of
/// the solving operator and record the contraction ratio.
pub fn contraction_study(
    data: &InitialData,
    p: &PhysParams,
    basis: &BasisSet,
    horizons: &[f64],
    n_steps: usize,
    seed: u64,
    opts: &PicardOptions,
) -> Result<Vec<StudyRow>> {
    if horizons.is_empty() {
        return Err(Error::Validation("contraction study needs at least one horizon".into()));
    }
    if horizons.iter().any(|&t| t <= 0.0) {
        return Err(Error::Validation("horizons must be positive".into()));
    }
    let mut rows = Vec::with_capacity(horizons.len());
    for &horizon in horizons {
        // Fresh rng per horizon: every row sees the same perturbation
        // directions, so the table isolates the T-dependence of the ratio.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let tg = TimeGrid::new(horizon, n_steps, data_scheme())?;
        let base = Trajectory::initial(data, tg)?;
        let x1 = perturbed_trajectory(&base, basis, 1e-3, &mut rng)?;
        let x2 = perturbed_trajectory(&base, basis, 1e-3, &mut rng)?;
        let d_in = vt_distance(&x1, &x2, &data.rho0)?;
        if d_in == 0.0 {
            rows.push(StudyRow { horizon, ratio: None });
            continue;
        }
        let y1 = apply_xi(&x1, data, p, basis, opts)?;
        let y2 = apply_xi(&x2, data, p, basis, opts)?;
        let d_out = vt_distance(&y1, &y2, &data.rho0)?;
        rows.push(StudyRow { horizon, ratio: Some(d_out / d_in) });
    }
    Ok(rows)
}

fn data_scheme() -> crate::solver::Scheme {
    crate::solver::Scheme::CrankNicolson
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis_orders;
    use crate::grid::make_grid;
    use crate::solver::Scheme;
    use std::f64::consts::PI;

    fn zero_bypass_data(g: &crate::grid::Grid) -> InitialData {
        InitialData::new_unchecked(
            crate::initial_data::distance_function(g),
            Field::zeros(g, 3),
            Field::zeros(g, 1),
            1.0,
        )
    }

    #[test]
    fn zero_fixed_point_in_one_iteration() {
        let g = make_grid(8, 8, 9).unwrap();
        let b = build_basis_orders(&g, 2, 2, 2).unwrap();
        let tg = TimeGrid::new(0.01, 4, Scheme::CrankNicolson).unwrap();
        let data = zero_bypass_data(&g);
        let (sol, report) =
            iterate_to_fixed_point(&data, &PhysParams::default(), &b, tg, &PicardOptions::default())
                .unwrap();
        assert_eq!(report.iterations, 1);
        assert_eq!(report.distances[0], 0.0);
        for f in &sol.vs {
            assert!(f.max_abs() < 1e-14);
        }
    }

    #[test]
    fn apply_xi_is_identity_on_zero_data() {
        let g = make_grid(8, 8, 9).unwrap();
        let b = build_basis_orders(&g, 2, 2, 2).unwrap();
        let tg = TimeGrid::new(0.01, 4, Scheme::CrankNicolson).unwrap();
        let data = zero_bypass_data(&g);
        let x = Trajectory::initial(&data, tg).unwrap();
        let y = apply_xi(&x, &data, &PhysParams::default(), &b, &PicardOptions::default()).unwrap();
        let d = vt_distance(&x, &y, &data.rho0).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn vt_distance_examples() {
        let g = make_grid(8, 8, 17).unwrap();
        let tg = TimeGrid::new(0.5, 5, Scheme::CrankNicolson).unwrap();
        let data = zero_bypass_data(&g);
        let base = Trajectory::initial(&data, tg).unwrap();
        assert_eq!(vt_distance(&base, &base, &data.rho0).unwrap(), 0.0);

        // Shift v by the constant c e1: dist^2 = c^2 int rho0 + T c^2.
        let c = 0.7;
        let shift = Field::vector_from_fn(&g, |_, _, _| [c, 0.0, 0.0]);
        let mut vs = base.vs.clone();
        for v in vs.iter_mut() {
            v.add_scaled(&shift, 1.0);
        }
        let shifted = Trajectory::from_parts(tg, base.etas.clone(), vs, base.thetas.clone()).unwrap();
        let got = vt_distance(&shifted, &base, &data.rho0).unwrap();
        let expect = (c * c / 6.0 + tg.t_final * c * c).sqrt();
        assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
    }

    #[test]
    fn vt_distance_is_a_pseudometric() {
        use rand::{Rng, SeedableRng};
        let g = make_grid(8, 8, 9).unwrap();
        let b = build_basis_orders(&g, 2, 2, 3).unwrap();
        let tg = TimeGrid::new(0.02, 4, Scheme::CrankNicolson).unwrap();
        let data = zero_bypass_data(&g);
        let base = Trajectory::initial(&data, tg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = perturbed_trajectory(&base, &b, rng.gen_range(0.1..1.0), &mut rng).unwrap();
            let bb = perturbed_trajectory(&base, &b, rng.gen_range(0.1..1.0), &mut rng).unwrap();
            let cc = perturbed_trajectory(&base, &b, rng.gen_range(0.1..1.0), &mut rng).unwrap();
            let dab = vt_distance(&a, &bb, &data.rho0).unwrap();
            let dba = vt_distance(&bb, &a, &data.rho0).unwrap();
            assert_eq!(dab, dba, "symmetry must be exact");
            let dac = vt_distance(&a, &cc, &data.rho0).unwrap();
            let dcb = vt_distance(&cc, &bb, &data.rho0).unwrap();
            assert!(dab <= dac + dcb + 1e-10, "triangle: {dab} > {dac} + {dcb}");
        }
    }

    #[test]
    fn grid_mismatch_detected() {
        let g = make_grid(8, 8, 9).unwrap();
        let data = zero_bypass_data(&g);
        let t1 = Trajectory::initial(&data, TimeGrid::new(0.01, 4, Scheme::CrankNicolson).unwrap())
            .unwrap();
        let t2 = Trajectory::initial(&data, TimeGrid::new(0.01, 5, Scheme::CrankNicolson).unwrap())
            .unwrap();
        assert!(matches!(
            vt_distance(&t1, &t2, &data.rho0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn default_dataset_converges_at_small_horizon() {
        let g = make_grid(8, 8, 17).unwrap();
        let b = build_basis_orders(&g, 2, 2, 4).unwrap();
        let tg = TimeGrid::new(0.002, 10, Scheme::CrankNicolson).unwrap();
        let data = crate::initial_data::default_dataset(&g).unwrap();
        let p = PhysParams::default();
        let (sol, report) =
            iterate_to_fixed_point(&data, &p, &b, tg, &PicardOptions::default()).unwrap();
        assert!(report.iterations <= 20, "{} iterations", report.iterations);
        for r in &report.ratios {
            assert!(*r < 1.0, "ratio {r} >= 1");
        }
        // Step 0 preserved exactly.
        for (a, bb) in sol.vs[0].values.iter().zip(data.u0.values.iter()) {
            assert_eq!(a, bb);
        }
        for (a, bb) in sol.thetas[0].values.iter().zip(data.theta0.values.iter()) {
            assert_eq!(a, bb);
        }
        // One further application moves the trajectory by at most ~2 tol.
        let once_more = apply_xi(&sol, &data, &p, &b, &PicardOptions::default()).unwrap();
        let drift = vt_distance(&once_more, &sol, &data.rho0).unwrap();
        assert!(drift <= 2.0 * 1e-8, "fixed-point drift {drift}");
    }

    #[test]
    fn long_horizon_raises_non_contraction() {
        // The default demonstration data are dissipative enough to settle
        // even at large T, so the out-of-regime path is exercised with a
        // hotter temperature profile whose induced displacement drives the
        // Jacobian out of the a priori window.
        let g = make_grid(8, 8, 17).unwrap();
        let b = build_basis_orders(&g, 2, 2, 4).unwrap();
        let tg = TimeGrid::new(10.0, 20, Scheme::CrankNicolson).unwrap();
        let (rho0, _) =
            crate::initial_data::build_density(&g, 1.0, &|_, _, _| 1.0).unwrap();
        let (theta0, _) =
            crate::initial_data::build_temperature(&g, &|_, _, x3| 10.0 * x3 * (1.0 - x3))
                .unwrap();
        let data = InitialData::new(rho0, Field::zeros(&g, 3), theta0, 1.0).unwrap();
        let err = iterate_to_fixed_point(
            &data,
            &PhysParams::default(),
            &b,
            tg,
            &PicardOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonContraction(_)), "got {err:?}");
    }

    #[test]
    fn contraction_study_rows() {
        let g = make_grid(8, 8, 17).unwrap();
        let b = build_basis_orders(&g, 2, 2, 3).unwrap();
        let data = crate::initial_data::default_dataset(&g).unwrap();
        let p = PhysParams::default();
        let rows = contraction_study(
            &data,
            &p,
            &b,
            &[0.02, 0.01, 0.005],
            10,
            7,
            &PicardOptions::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 3);
        let r: Vec<f64> = rows.iter().map(|r| r.ratio.unwrap()).collect();
        assert!(r[0] > r[1] && r[1] > r[2], "ratios not decreasing: {r:?}");

        // Single horizon gives a single row.
        let one = contraction_study(&data, &p, &b, &[0.01], 10, 7, &PicardOptions::default())
            .unwrap();
        assert_eq!(one.len(), 1);

        // Empty horizon list is a validation error.
        assert!(matches!(
            contraction_study(&data, &p, &b, &[], 10, 7, &PicardOptions::default()),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn kinematic_rate_identity_along_converged_run() {
        // |J_t - a^s_r v^r_{,s}| small pointwise at time-interior steps past
        // the stiff startup transient, with J_t from centered differences of
        // the stored Jacobians.
        let g = make_grid(8, 8, 17).unwrap();
        let b = build_basis_orders(&g, 2, 2, 4).unwrap();
        let tg = TimeGrid::new(0.004, 80, Scheme::CrankNicolson).unwrap();
        let data = crate::initial_data::default_dataset(&g).unwrap();
        let (sol, _) = iterate_to_fixed_point(
            &data,
            &PhysParams::default(),
            &b,
            tg,
            &PicardOptions::default(),
        )
        .unwrap();
        let dt = tg.dt();
        let mut worst = 0.0_f64;
        for k in tg.n_steps / 2..tg.n_steps {
            let rates = crate::kinematics::deformation_rates(&sol.defms[k], &sol.vs[k]).unwrap();
            for idx in 0..g.node_count() {
                let fd = (sol.defms[k + 1].jac.values[idx] - sol.defms[k - 1].jac.values[idx])
                    / (2.0 * dt);
                worst = worst.max((fd - rates.j_t.values[idx]).abs());
            }
        }
        assert!(worst < 1e-6, "kinematic identity violation {worst}");
    }

    #[test]
    fn initial_trajectory_transports_u0() {
        let g = make_grid(8, 8, 9).unwrap();
        let d = crate::initial_data::distance_function(&g);
        let u0 = Field::vector_from_fn(&g, |_, _, x3| [0.1 * (2.0 * PI * x3).cos(), 0.0, 0.0]);
        let theta0 = Field::scalar_from_fn(&g, |_, _, x3| x3 * (1.0 - x3));
        let data = InitialData::new_unchecked(d, u0.clone(), theta0, 1.0);
        let tg = TimeGrid::new(0.1, 4, Scheme::CrankNicolson).unwrap();
        let traj = Trajectory::initial(&data, tg).unwrap();
        // eta_k = Id + t_k u0.
        let id = FlowMap::identity(&g).eta;
        for k in 0..=tg.n_steps {
            let mut expect = id.clone();
            expect.add_scaled(&u0, k as f64 * tg.dt());
            for (a, bb) in traj.etas[k].values.iter().zip(expect.values.iter()) {
                assert!((a - bb).abs() < 1e-15);
            }
        }
    }
}
