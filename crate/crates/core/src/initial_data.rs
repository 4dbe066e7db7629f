//! Construction and validation of initial data (rho0, u0, theta0) with
//! degenerate density at the vacuum faces, plus the derived initial time
//! derivatives and the initial-energy constant M0.
//!
//! The density decays like d(x)^alpha towards the boundary and the
//! temperature vanishes there with a strictly negative, finite outward
//! normal derivative (the physical-vacuum condition). Divisions by rho0 are
//! evaluated on interior nodes and extrapolated one-sidedly to the faces.

use crate::diagnostics::{sobolev_norm_sq, vacuum_boundary_monitor};
use crate::error::{Error, Result};
use crate::grid::{diff, integrate, Field, Grid};
use crate::kinematics::{compute_deformation, deformation_rates, FlowMap};
use crate::operators::{div_eta, grad_eta, stress};

/// Physical parameters of the polytropic, heat-conductive gas.
#[derive(Debug, Clone, Copy)]
pub struct PhysParams {
    /// Shear viscosity mu > 0.
    pub mu: f64,
    /// Bulk parameter lambda with 2 mu + 3 lambda > 0.
    pub lambda: f64,
    /// Heat conductivity kappa > 0.
    pub kappa: f64,
    /// Gas constant R > 0.
    pub gas_r: f64,
    /// Specific heat c_v > 0.
    pub c_v: f64,
    /// Adiabatic exponent gamma > 1.
    pub gamma: f64,
    /// Entropy reference constant A_bar > 0.
    pub a_bar: f64,
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        if self.mu <= 0.0 {
            return Err(Error::Validation(format!("mu must be positive, got {}", self.mu)));
        }
        if 2.0 * self.mu + 3.0 * self.lambda <= 0.0 {
            return Err(Error::Validation(format!(
                "2 mu + 3 lambda must be positive, got {}",
                2.0 * self.mu + 3.0 * self.lambda
            )));
        }
        if self.kappa <= 0.0 {
            return Err(Error::Validation(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.gas_r <= 0.0 {
            return Err(Error::Validation(format!("R must be positive, got {}", self.gas_r)));
        }
        if self.c_v <= 0.0 {
            return Err(Error::Validation(format!("c_v must be positive, got {}", self.c_v)));
        }
        if self.gamma <= 1.0 {
            return Err(Error::Validation(format!("gamma must exceed 1, got {}", self.gamma)));
        }
        if self.a_bar <= 0.0 {
            return Err(Error::Validation(format!("A_bar must be positive, got {}", self.a_bar)));
        }
        Ok(())
    }
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams {
            mu: 1.0,
            lambda: 0.0,
            kappa: 1.0,
            gas_r: 1.0,
            c_v: 1.0,
            gamma: 2.0,
            a_bar: 1.0,
        }
    }
}

/// Validated initial data (rho0, u0, theta0) and the decay exponent alpha.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub rho0: Field,
    pub u0: Field,
    pub theta0: Field,
    pub alpha: f64,
    /// Set by `new_unchecked`; lets tests bypass the vacuum invariants.
    pub validated: bool,
}

/// Discrete surrogates of the density regularity norms, reported without a
/// pass/fail threshold (the analysis constant is generic).
#[derive(Debug, Clone, Copy)]
pub struct DensityRecord {
    pub linf: f64,
    pub grad_l3: f64,
    pub tangential_h1: f64,
    pub weighted_second_l2: f64,
}

/// Min/max of the outward normal derivative of theta0 over Gamma.
#[derive(Debug, Clone, Copy)]
pub struct NormalDerivativeRecord {
    pub min: f64,
    pub max: f64,
}

/// Derived initial time derivatives and the constant M0.
#[derive(Debug, Clone)]
pub struct DerivedInitials {
    pub u0t: Field,
    pub u0tt: Field,
    pub theta0t: Field,
    pub theta0tt: Field,
    pub m0: f64,
}

/// Per-condition residuals of the compatibility condition.
#[derive(Debug, Clone)]
pub struct CompatibilityReport {
    pub entries: Vec<CompatibilityEntry>,
    pub all_pass: bool,
}

#[derive(Debug, Clone)]
pub struct CompatibilityEntry {
    pub name: &'static str,
    pub residual: f64,
    pub pass: bool,
}

/// d(x) = x3 (1 - x3), the distance surrogate to the vacuum faces.
pub fn distance_function(g: &Grid) -> Field {
    Field::scalar_from_fn(g, |_, _, x3| x3 * (1.0 - x3))
}

/// rho0 = envelope(x) d(x)^alpha with its validation record.
pub fn build_density(
    g: &Grid,
    alpha: f64,
    envelope: &dyn Fn(f64, f64, f64) -> f64,
) -> Result<(Field, DensityRecord)> {
    if alpha <= 0.0 {
        return Err(Error::DecayViolation(alpha));
    }
    let rho0 = Field::scalar_from_fn(g, |x1, x2, x3| {
        let d = x3 * (1.0 - x3);
        envelope(x1, x2, x3) * d.powf(alpha)
    });
    let record = density_record(&rho0)?;
    Ok((rho0, record))
}

fn density_record(rho0: &Field) -> Result<DensityRecord> {
    let g = rho0.grid.clone();
    let n = g.node_count();
    let d1 = diff(rho0, 1);
    let d2 = diff(rho0, 2);
    let d3 = diff(rho0, 3);
    // |D rho0| is the entry sum; L3 norm by quadrature.
    let mut cube = Field::zeros(&g, 1);
    for idx in 0..n {
        let s = d1.values[idx].abs() + d2.values[idx].abs() + d3.values[idx].abs();
        cube.values[idx] = s * s * s;
    }
    let grad_l3 = integrate(&cube).cbrt();
    let mut tang = Field::zeros(&g, 2);
    tang.component_mut(0).copy_from_slice(&d1.values);
    tang.component_mut(1).copy_from_slice(&d2.values);
    let tangential_h1 = sobolev_norm_sq(&tang, 1, None, false)?.sqrt();
    // d (|D^2 rho0| + |tangential D^2 rho0|) in L2, entry sums again.
    let seconds = [
        diff(&d1, 1),
        diff(&d1, 2),
        diff(&d1, 3),
        diff(&d2, 1),
        diff(&d2, 2),
        diff(&d2, 3),
        diff(&d3, 1),
        diff(&d3, 2),
        diff(&d3, 3),
    ];
    let mut abs_sum = vec![0.0; n];
    for s in &seconds {
        for idx in 0..n {
            abs_sum[idx] += s.values[idx].abs();
        }
    }
    for s in &seconds {
        for axis in 1..=2 {
            let t = diff(s, axis);
            for idx in 0..n {
                abs_sum[idx] += t.values[idx].abs();
            }
        }
    }
    let mut sq = Field::zeros(&g, 1);
    for i3 in 0..g.n3 {
        let x3 = g.x3_nodes[i3];
        let dist = x3 * (1.0 - x3);
        for i2 in 0..g.n2 {
            for i1 in 0..g.n1 {
                let idx = g.node_index(i3, i2, i1);
                let w = dist * abs_sum[idx];
                sq.values[idx] = w * w;
            }
        }
    }
    Ok(DensityRecord {
        linf: rho0.max_abs(),
        grad_l3,
        tangential_h1,
        weighted_second_l2: integrate(&sq).sqrt(),
    })
}

/// Sample theta0 from a profile and verify the physical-vacuum condition.
pub fn build_temperature(
    g: &Grid,
    profile: &dyn Fn(f64, f64, f64) -> f64,
) -> Result<(Field, NormalDerivativeRecord)> {
    let theta0 = Field::scalar_from_fn(g, profile);
    let record = vacuum_boundary_monitor(&theta0);
    if !record.max.is_finite() || !record.min.is_finite() {
        return Err(Error::VacuumConditionViolation { value: record.max, node: (0, 0, 0) });
    }
    if record.max >= -1e-12 {
        return Err(Error::VacuumConditionViolation { value: record.max, node: (0, 0, 0) });
    }
    Ok((theta0, NormalDerivativeRecord { min: record.min, max: record.max }))
}

impl InitialData {
    /// Validate the vacuum invariants and assemble the data.
    pub fn new(rho0: Field, u0: Field, theta0: Field, alpha: f64) -> Result<InitialData> {
        if alpha <= 0.0 {
            return Err(Error::DecayViolation(alpha));
        }
        let g = rho0.grid.clone();
        let plane = g.n1 * g.n2;
        for f in [(&rho0, "rho0"), (&theta0, "theta0")] {
            for p in 0..plane {
                let bottom = f.0.values[p];
                let top = f.0.values[(g.n3 - 1) * plane + p];
                if bottom.abs() > 1e-14 || top.abs() > 1e-14 {
                    return Err(Error::Validation(format!(
                        "{} must vanish on the boundary (got {:.3e})",
                        f.1,
                        bottom.abs().max(top.abs())
                    )));
                }
            }
            for i3 in 1..g.n3 - 1 {
                for p in 0..plane {
                    let v = f.0.values[i3 * plane + p];
                    if v <= 0.0 {
                        return Err(Error::Validation(format!(
                            "{} must be positive on interior nodes (got {v:.3e})",
                            f.1
                        )));
                    }
                }
            }
        }
        let rec = vacuum_boundary_monitor(&theta0);
        if !rec.max.is_finite() || rec.max >= -1e-12 {
            return Err(Error::VacuumConditionViolation { value: rec.max, node: (0, 0, 0) });
        }
        Ok(InitialData { rho0, u0, theta0, alpha, validated: true })
    }

    /// Bypass validation (test overrides such as rho0 = const).
    pub fn new_unchecked(rho0: Field, u0: Field, theta0: Field, alpha: f64) -> InitialData {
        InitialData { rho0, u0, theta0, alpha, validated: false }
    }

    pub fn grid(&self) -> Grid {
        self.rho0.grid.clone()
    }
}

/// The demonstration dataset: alpha = 1/(gamma-1) with gamma = 2, envelope
/// one, theta0 = d, u0 = 0, chosen so the entropy monitor applies.
pub fn default_dataset(g: &Grid) -> Result<InitialData> {
    let (rho0, _) = build_density(g, 1.0, &|_, _, _| 1.0)?;
    let (theta0, _) = build_temperature(g, &|_, _, x3| x3 * (1.0 - x3))?;
    InitialData::new(rho0, Field::zeros(g, 3), theta0, 1.0)
}

/// Divide `num / (scale * rho0)` on interior nodes; boundary values come
/// from one-sided polynomial extrapolation along x3 unless rho0 itself is
/// bounded away from zero there.
fn divide_by_rho0(
    num: &Field,
    rho0: &Field,
    scale: f64,
    field_name: &'static str,
) -> Result<Field> {
    let g = num.grid.clone();
    let plane = g.n1 * g.n2;
    let n = g.node_count();
    let mut out = Field::zeros(&g, num.components);
    for c in 0..num.components {
        for i3 in 1..g.n3 - 1 {
            for p in 0..plane {
                let idx = i3 * plane + p;
                let v = num.values[c * n + idx] / (scale * rho0.values[idx]);
                if v.abs() > 1e12 {
                    return Err(Error::UnboundedDerivative { field: field_name, value: v });
                }
                out.values[c * n + idx] = v;
            }
        }
        // Boundary planes.
        for (i3, at_zero) in [(0usize, true), (g.n3 - 1, false)] {
            for p in 0..plane {
                let idx = i3 * plane + p;
                let rho_b = rho0.values[idx];
                if rho_b.abs() > 1e-13 {
                    out.values[c * n + idx] = num.values[c * n + idx] / (scale * rho_b);
                } else {
                    out.values[c * n + idx] =
                        extrapolate_column(&out, c, p, &g, at_zero);
                }
            }
        }
    }
    Ok(out)
}

/// Barycentric extrapolation to a face from the nearest interior nodes.
fn extrapolate_column(f: &Field, c: usize, p: usize, g: &Grid, at_zero: bool) -> f64 {
    let n = g.node_count();
    let plane = g.n1 * g.n2;
    let q = 6.min(g.n3 - 2);
    let (target, idxs): (f64, Vec<usize>) = if at_zero {
        (0.0, (1..=q).collect())
    } else {
        (1.0, ((g.n3 - 1 - q)..=(g.n3 - 2)).collect())
    };
    // Lagrange weights for the small node set.
    let xs: Vec<f64> = idxs.iter().map(|&i| g.x3_nodes[i]).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, &ia) in idxs.iter().enumerate() {
        let mut w = 1.0;
        for (b, _) in idxs.iter().enumerate() {
            if a != b {
                w /= xs[a] - xs[b];
            }
        }
        let t = w / (target - xs[a]);
        num += t * f.values[c * n + ia * plane + p];
        den += t;
    }
    num / den
}

/// u0t, theta0t, u0tt, theta0tt from the equations at t = 0 (eta = Id),
/// expanding the time derivative of the right-hand sides with the rate
/// identities for (a, A, J); M0 is filled in via [`compute_m0`].
pub fn initial_time_derivatives(
    data: &InitialData,
    p: &PhysParams,
    g: &Grid,
) -> Result<DerivedInitials> {
    let n = g.node_count();
    let defm = compute_deformation(&FlowMap::identity(g))?;
    let rho0 = &data.rho0;
    let u0 = &data.u0;
    let theta0 = &data.theta0;

    // First-order fields.
    // u0t = (1/rho0)[-grad(R rho0 theta0) + div S_Id[u0]].
    let mut press = Field::zeros(g, 1);
    for idx in 0..n {
        press.values[idx] = p.gas_r * rho0.values[idx] * theta0.values[idx];
    }
    let s_u0 = stress(u0, &defm, p);
    let mut num_u0t = Field::zeros(g, 3);
    for axis in 1..=3 {
        let dp = diff(&press, axis);
        let ds = diff(&s_u0, axis);
        for i in 0..3 {
            let dst = num_u0t.component_mut(i);
            if axis == i + 1 {
                for idx in 0..n {
                    dst[idx] -= dp.values[idx];
                }
            }
            // div S: sum_j d_j S^ij; here axis plays the role of j.
            let j = axis - 1;
            let ds_ij = &ds.values[(3 * i + j) * n..(3 * i + j + 1) * n];
            for idx in 0..n {
                dst[idx] += ds_ij[idx];
            }
        }
    }
    let u0t = divide_by_rho0(&num_u0t, rho0, 1.0, "u0t")?;

    // theta0t = (1/(c_v rho0))[-R rho0 theta0 div u0 + S:Du0 + kappa lap theta0].
    let div_u0 = div_eta(u0, &defm);
    let mut num_th0t = Field::zeros(g, 1);
    for idx in 0..n {
        num_th0t.values[idx] = -press.values[idx] * div_u0.values[idx];
    }
    let mut du0 = Vec::with_capacity(3);
    for axis in 1..=3 {
        du0.push(diff(u0, axis));
    }
    for i in 0..3 {
        for j in 0..3 {
            let s_ij = &s_u0.values[(3 * i + j) * n..(3 * i + j + 1) * n];
            for idx in 0..n {
                num_th0t.values[idx] += s_ij[idx] * du0[j].values[i * n + idx];
            }
        }
    }
    for axis in 1..=3 {
        let dd = diff(&diff(theta0, axis), axis);
        for idx in 0..n {
            num_th0t.values[idx] += p.kappa * dd.values[idx];
        }
    }
    let theta0t = divide_by_rho0(&num_th0t, rho0, p.c_v, "theta0t")?;

    // Rates of the deformation quantities at t = 0 with v = u0.
    let rates = deformation_rates(&defm, u0)?;
    let a_t = &rates.a_t;
    let j_t = &rates.j_t;
    // A_t = a_t - J_t I at the identity.
    let mut cap_a_t = a_t.clone();
    for i in 0..3 {
        let dst_range = (3 * i + i) * n..(3 * i + i + 1) * n;
        for (o, jt) in cap_a_t.values[dst_range].iter_mut().zip(j_t.values.iter()) {
            *o -= jt;
        }
    }

    // dS/dt at t = 0: S_Id[u0t] + mu(A_t^k_j u0^i_k + A_t^k_i u0^j_k)
    // + lambda (A_t^k_l u0^l_k) delta^ij.
    let s_u0t = stress(&u0t, &defm, p);
    let mut s_dot = s_u0t.clone();
    let mut trace_term = vec![0.0; n];
    for k in 0..3 {
        for l in 0..3 {
            let at_kl = &cap_a_t.values[(3 * k + l) * n..(3 * k + l + 1) * n];
            for idx in 0..n {
                trace_term[idx] += at_kl[idx] * du0[k].values[l * n + idx];
            }
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let dst = &mut s_dot.values[(3 * i + j) * n..(3 * i + j + 1) * n];
            for k in 0..3 {
                let at_kj = &cap_a_t.values[(3 * k + j) * n..(3 * k + j + 1) * n];
                let at_ki = &cap_a_t.values[(3 * k + i) * n..(3 * k + i + 1) * n];
                for idx in 0..n {
                    dst[idx] += p.mu
                        * (at_kj[idx] * du0[k].values[i * n + idx]
                            + at_ki[idx] * du0[k].values[j * n + idx]);
                }
            }
            if i == j {
                for (o, t) in dst.iter_mut().zip(trace_term.iter()) {
                    *o += p.lambda * t;
                }
            }
        }
    }

    // d/dt (R rho0 Theta / J) at t = 0.
    let mut press_dot = Field::zeros(g, 1);
    for idx in 0..n {
        press_dot.values[idx] = p.gas_r
            * rho0.values[idx]
            * (theta0t.values[idx] - theta0.values[idx] * j_t.values[idx]);
    }

    // u0tt numerator.
    let mut num_u0tt = Field::zeros(g, 3);
    for r in 0..3 {
        let dp = diff(&press, r + 1);
        let ds_u0 = diff(&s_u0, r + 1);
        for i in 0..3 {
            let at_ri = &a_t.values[(3 * r + i) * n..(3 * r + i + 1) * n];
            {
                let dst = num_u0tt.component_mut(i);
                for idx in 0..n {
                    dst[idx] -= at_ri[idx] * dp.values[idx];
                }
            }
            for j in 0..3 {
                let at_rj = &a_t.values[(3 * r + j) * n..(3 * r + j + 1) * n];
                let ds_ij = &ds_u0.values[(3 * i + j) * n..(3 * i + j + 1) * n];
                let dst = num_u0tt.component_mut(i);
                for idx in 0..n {
                    dst[idx] += at_rj[idx] * ds_ij[idx];
                }
            }
        }
    }
    for axis in 1..=3 {
        let dpd = diff(&press_dot, axis);
        let dsd = diff(&s_dot, axis);
        for i in 0..3 {
            let dst = num_u0tt.component_mut(i);
            if axis == i + 1 {
                for idx in 0..n {
                    dst[idx] -= dpd.values[idx];
                }
            }
            let j = axis - 1;
            let ds_ij = &dsd.values[(3 * i + j) * n..(3 * i + j + 1) * n];
            for idx in 0..n {
                dst[idx] += ds_ij[idx];
            }
        }
    }
    let u0tt = divide_by_rho0(&num_u0tt, rho0, 1.0, "u0tt")?;

    // theta0tt numerator, term by term.
    let mut du0t = Vec::with_capacity(3);
    for axis in 1..=3 {
        du0t.push(diff(&u0t, axis));
    }
    let mut div_u0t = vec![0.0; n];
    for i in 0..3 {
        for idx in 0..n {
            div_u0t[idx] += du0t[i].values[i * n + idx];
        }
    }
    // a_t^r_i u0^i_{,r}.
    let mut at_contract = vec![0.0; n];
    for r in 0..3 {
        for i in 0..3 {
            let at_ri = &a_t.values[(3 * r + i) * n..(3 * r + i + 1) * n];
            for idx in 0..n {
                at_contract[idx] += at_ri[idx] * du0[r].values[i * n + idx];
            }
        }
    }
    let mut num_th0tt = Field::zeros(g, 1);
    for idx in 0..n {
        // -d/dt[(R rho0 Theta / J) a^r_i v^i_{,r}]
        num_th0tt.values[idx] = -press_dot.values[idx] * div_u0.values[idx]
            - press.values[idx] * (at_contract[idx] + div_u0t[idx]);
    }
    // +d/dt[S^ij a^r_j v^i_{,r}]
    for i in 0..3 {
        for j in 0..3 {
            let sd_ij = &s_dot.values[(3 * i + j) * n..(3 * i + j + 1) * n];
            let s_ij = &s_u0.values[(3 * i + j) * n..(3 * i + j + 1) * n];
            for idx in 0..n {
                num_th0tt.values[idx] += sd_ij[idx] * du0[j].values[i * n + idx]
                    + s_ij[idx] * du0t[j].values[i * n + idx];
            }
            for r in 0..3 {
                let at_rj = &a_t.values[(3 * r + j) * n..(3 * r + j + 1) * n];
                for idx in 0..n {
                    num_th0tt.values[idx] +=
                        s_ij[idx] * at_rj[idx] * du0[r].values[i * n + idx];
                }
            }
        }
    }
    // +kappa d/dt[a^r_i (grad_eta Theta)^i_{,r}].
    let gtheta = grad_eta(theta0, &defm);
    for r in 0..3 {
        let dg = diff(&gtheta, r + 1);
        for i in 0..3 {
            let at_ri = &a_t.values[(3 * r + i) * n..(3 * r + i + 1) * n];
            for idx in 0..n {
                num_th0tt.values[idx] += p.kappa * at_ri[idx] * dg.values[i * n + idx];
            }
        }
    }
    // A_t^k_i theta0_{,k} divergence part plus lap theta0t.
    let mut flux_dot = Field::zeros(g, 3);
    let dth: Vec<Field> = (1..=3).map(|axis| diff(theta0, axis)).collect();
    for i in 0..3 {
        let dst = flux_dot.component_mut(i);
        for k in 0..3 {
            let at_ki = &cap_a_t.values[(3 * k + i) * n..(3 * k + i + 1) * n];
            for idx in 0..n {
                dst[idx] += at_ki[idx] * dth[k].values[idx];
            }
        }
    }
    for i in 0..3 {
        let mut fi = Field::zeros(g, 1);
        fi.values.copy_from_slice(flux_dot.component(i));
        let d = diff(&fi, i + 1);
        for idx in 0..n {
            num_th0tt.values[idx] += p.kappa * d.values[idx];
        }
    }
    for axis in 1..=3 {
        let dd = diff(&diff(&theta0t, axis), axis);
        for idx in 0..n {
            num_th0tt.values[idx] += p.kappa * dd.values[idx];
        }
    }
    let theta0tt = divide_by_rho0(&num_th0tt, rho0, p.c_v, "theta0tt")?;

    let mut derived =
        DerivedInitials { u0t, u0tt, theta0t, theta0tt, m0: 0.0 };
    derived.m0 = compute_m0(&derived, data)?;
    Ok(derived)
}

/// M0 = ||rho0^(1/2) u0tt||^2 + ||u0t||_H1^2 + ||u0||_H3^2
/// + ||rho0^(1/2) theta0tt||^2 + ||theta0t||_H10^2 + ||theta0||_H3^2 + 1.
pub fn compute_m0(di: &DerivedInitials, data: &InitialData) -> Result<f64> {
    let rho0 = &data.rho0;
    // The H10 norm of theta0t is evaluated as the discrete H1 norm; trace
    // membership is reported by the compatibility check rather than
    // enforced here, so incompatible data still get a finite M0.
    Ok(sobolev_norm_sq(&di.u0tt, 0, Some(rho0), false)?
        + sobolev_norm_sq(&di.u0t, 1, None, false)?
        + sobolev_norm_sq(&data.u0, 3, None, false)?
        + sobolev_norm_sq(&di.theta0tt, 0, Some(rho0), false)?
        + sobolev_norm_sq(&di.theta0t, 1, None, false)?
        + sobolev_norm_sq(&data.theta0, 3, None, false)?
        + 1.0)
}

/// Verify the compatibility condition: theta0 and its tangential derivatives
/// up to second order plus theta0t lie in H^1_0, and the i3-stress
/// components of u0 and of its tangential derivatives vanish on Gamma.
pub fn check_compatibility(
    data: &InitialData,
    di: &DerivedInitials,
    g: &Grid,
) -> Result<CompatibilityReport> {
    const TOL: f64 = 1e-8;
    let defm = compute_deformation(&FlowMap::identity(g))?;
    let p_unit = PhysParams::default();
    let mut entries = Vec::new();
    let mut push = |name: &'static str, residual: f64| {
        entries.push(CompatibilityEntry { name, residual, pass: residual <= TOL });
    };

    push("theta0 boundary trace", boundary_max(&data.theta0));
    let th1 = diff(&data.theta0, 1);
    let th2 = diff(&data.theta0, 2);
    push("tangential grad theta0 trace", boundary_max(&th1).max(boundary_max(&th2)));
    let mut second = 0.0_f64;
    for f in [&th1, &th2] {
        for axis in 1..=2 {
            second = second.max(boundary_max(&diff(f, axis)));
        }
    }
    push("tangential hessian theta0 trace", second);
    push("theta0t boundary trace", boundary_max(&di.theta0t));

    // S_Id[u0]^i3 and S_Id[tangential derivative of u0]^i3 on Gamma. The
    // stress scale is mu/lambda independent only through the caller's
    // parameters; unit coefficients make the residual the raw symmetric
    // gradient combination.
    push("stress i3 of u0", stress_i3_boundary_max(&data.u0, &defm, &p_unit));
    let mut tangential = 0.0_f64;
    for axis in 1..=2 {
        let du = diff(&data.u0, axis);
        tangential = tangential.max(stress_i3_boundary_max(&du, &defm, &p_unit));
    }
    push("stress i3 of tangential u0", tangential);

    let all_pass = entries.iter().all(|e| e.pass);
    Ok(CompatibilityReport { entries, all_pass })
}

fn boundary_max(f: &Field) -> f64 {
    let g = f.grid.clone();
    let plane = g.n1 * g.n2;
    let n = g.node_count();
    let mut worst = 0.0_f64;
    for c in 0..f.components {
        for p in 0..plane {
            worst = worst.max(f.values[c * n + p].abs());
            worst = worst.max(f.values[c * n + (g.n3 - 1) * plane + p].abs());
        }
    }
    worst
}

fn stress_i3_boundary_max(
    w: &Field,
    defm: &crate::kinematics::Deformation,
    p: &PhysParams,
) -> f64 {
    let g = w.grid.clone();
    let n = g.node_count();
    let plane = g.n1 * g.n2;
    let s = stress(w, defm, p);
    let mut worst = 0.0_f64;
    for i in 0..3 {
        let s_i3 = &s.values[(3 * i + 2) * n..(3 * i + 2 + 1) * n];
        for pidx in 0..plane {
            worst = worst.max(s_i3[pidx].abs());
            worst = worst.max(s_i3[(g.n3 - 1) * plane + pidx].abs());
        }
    }
    worst
}
