//! Run configuration: a flat `key = value` text format with dotted
//! sections, friendly to diffs and independent of any host language.
//!
//! Unknown keys are rejected with their line number; physics invariants are
//! re-validated at load so a bad file never reaches the solver.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{make_grid, Field, Grid};
use crate::initial_data::{
    build_density, build_temperature, DensityRecord, InitialData, NormalDerivativeRecord,
    PhysParams,
};
use crate::solver::{Scheme, TimeGrid};

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub basis_m: usize,
    pub physics: PhysParams,
    pub density_profile: DensityProfile,
    pub temperature_profile: TemperatureProfile,
    pub velocity_profile: VelocityProfile,
    pub t_final: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub deta_bound: f64,
    pub output_dir: String,
    pub snapshot_stride: usize,
    /// Near-boundary band (in d units) for the entropy monitor.
    pub entropy_band: f64,
}

#[derive(Debug, Clone)]
pub enum DensityProfile {
    /// envelope 1 times d^alpha.
    PowerLaw { alpha: f64 },
    /// (1 + amplitude sin(2 pi x1)) d^alpha.
    PowerLawFourier { alpha: f64, amplitude: f64 },
}

#[derive(Debug, Clone)]
pub enum TemperatureProfile {
    /// amplitude * d(x).
    Distance { amplitude: f64 },
    /// amplitude * sin(pi x3).
    Sine { amplitude: f64 },
    /// d(x) (1 + amplitude cos(2 pi x2)).
    DistanceCos { amplitude: f64 },
}

#[derive(Debug, Clone)]
pub enum VelocityProfile {
    Zero,
    /// amplitude cos(2 pi x1) T_2(2 x3 - 1) e1 (a single basis mode).
    Mode { amplitude: f64 },
    /// amplitude (x3, 0, 0); violates the compatibility condition, kept for
    /// exploring the warning path.
    Shear { amplitude: f64 },
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            n1: 16,
            n2: 16,
            n3: 33,
            basis_m: 4,
            physics: PhysParams::default(),
            density_profile: DensityProfile::PowerLaw { alpha: 1.0 },
            temperature_profile: TemperatureProfile::Distance { amplitude: 1.0 },
            velocity_profile: VelocityProfile::Zero,
            t_final: 0.005,
            n_steps: 50,
            scheme: Scheme::CrankNicolson,
            picard_tol: 1e-8,
            picard_max_iter: 20,
            deta_bound: 2.0,
            output_dir: "out".into(),
            snapshot_stride: 10,
            entropy_band: 0.05,
        }
    }
}

fn parse_f64(v: &str, line: usize) -> Result<f64> {
    v.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("expected a number, got '{v}'") })
}

fn parse_usize(v: &str, line: usize) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| Error::Parse { line, msg: format!("expected a nonnegative integer, got '{v}'") })
}

/// Parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    load_config_str(&text)
}

/// Parse and validate configuration text (file contents).
pub fn load_config_str(text: &str) -> Result<RunConfig> {
    let mut entries: BTreeMap<String, (String, usize)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(Error::Parse {
            line: line_no,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if entries.insert(key.clone(), (value, line_no)).is_some() {
            return Err(Error::Parse { line: line_no, msg: format!("duplicate key '{key}'") });
        }
    }

    let mut cfg = RunConfig::default();
    let mut density_name = "powerlaw".to_string();
    let mut density_alpha = 1.0;
    let mut density_amp = 0.1;
    let mut temp_name = "distance".to_string();
    let mut temp_amp = 1.0;
    let mut vel_name = "zero".to_string();
    let mut vel_amp = 0.0;

    for (key, (value, line)) in &entries {
        let line = *line;
        match key.as_str() {
            "grid.n1" => cfg.n1 = parse_usize(value, line)?,
            "grid.n2" => cfg.n2 = parse_usize(value, line)?,
            "grid.n3" => cfg.n3 = parse_usize(value, line)?,
            "basis.m" => cfg.basis_m = parse_usize(value, line)?,
            "physics.mu" => cfg.physics.mu = parse_f64(value, line)?,
            "physics.lambda" => cfg.physics.lambda = parse_f64(value, line)?,
            "physics.kappa" => cfg.physics.kappa = parse_f64(value, line)?,
            "physics.R" => cfg.physics.gas_r = parse_f64(value, line)?,
            "physics.c_v" => cfg.physics.c_v = parse_f64(value, line)?,
            "physics.gamma" => cfg.physics.gamma = parse_f64(value, line)?,
            "physics.A_bar" => cfg.physics.a_bar = parse_f64(value, line)?,
            "initial.density.name" => density_name = value.clone(),
            "initial.density.alpha" => density_alpha = parse_f64(value, line)?,
            "initial.density.amplitude" => density_amp = parse_f64(value, line)?,
            "initial.temperature.name" => temp_name = value.clone(),
            "initial.temperature.amplitude" => temp_amp = parse_f64(value, line)?,
            "initial.velocity.name" => vel_name = value.clone(),
            "initial.velocity.amplitude" => vel_amp = parse_f64(value, line)?,
            "time.T" => cfg.t_final = parse_f64(value, line)?,
            "time.n_steps" => cfg.n_steps = parse_usize(value, line)?,
            "time.scheme" => {
                cfg.scheme = match value.as_str() {
                    "crank-nicolson" => Scheme::CrankNicolson,
                    "backward-euler" => Scheme::BackwardEuler,
                    other => {
                        return Err(Error::Parse {
                            line,
                            msg: format!(
                                "unknown scheme '{other}' (crank-nicolson | backward-euler)"
                            ),
                        })
                    }
                }
            }
            "picard.tol" => cfg.picard_tol = parse_f64(value, line)?,
            "picard.max_iter" => cfg.picard_max_iter = parse_usize(value, line)?,
            "picard.deta_bound" => cfg.deta_bound = parse_f64(value, line)?,
            "output.directory" => cfg.output_dir = value.clone(),
            "output.snapshot_stride" => cfg.snapshot_stride = parse_usize(value, line)?,
            "diagnostics.entropy_band" => cfg.entropy_band = parse_f64(value, line)?,
            other => {
                return Err(Error::Parse { line, msg: format!("unknown key '{other}'") });
            }
        }
    }

    cfg.density_profile = match density_name.as_str() {
        "powerlaw" => DensityProfile::PowerLaw { alpha: density_alpha },
        "powerlaw-fourier" => {
            DensityProfile::PowerLawFourier { alpha: density_alpha, amplitude: density_amp }
        }
        other => {
            return Err(Error::Validation(format!("unknown density profile '{other}'")));
        }
    };
    cfg.temperature_profile = match temp_name.as_str() {
        "distance" => TemperatureProfile::Distance { amplitude: temp_amp },
        "sine" => TemperatureProfile::Sine { amplitude: temp_amp },
        "distance-cos" => TemperatureProfile::DistanceCos { amplitude: temp_amp },
        other => {
            return Err(Error::Validation(format!("unknown temperature profile '{other}'")));
        }
    };
    cfg.velocity_profile = match vel_name.as_str() {
        "zero" => VelocityProfile::Zero,
        "mode" => VelocityProfile::Mode { amplitude: vel_amp },
        "shear" => VelocityProfile::Shear { amplitude: vel_amp },
        other => {
            return Err(Error::Validation(format!("unknown velocity profile '{other}'")));
        }
    };

    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<()> {
    if cfg.physics.gamma <= 1.0 {
        return Err(Error::Validation(format!(
            "gamma must exceed 1, got {}",
            cfg.physics.gamma
        )));
    }
    cfg.physics.validate()?;
    if cfg.t_final <= 0.0 || cfg.n_steps == 0 {
        return Err(Error::Validation("time.T must be positive and time.n_steps >= 1".into()));
    }
    if cfg.picard_tol <= 0.0 {
        return Err(Error::Validation("picard.tol must be positive".into()));
    }
    if cfg.basis_m == 0 {
        return Err(Error::Validation("basis.m must be >= 1".into()));
    }
    if cfg.snapshot_stride == 0 {
        return Err(Error::Validation("output.snapshot_stride must be >= 1".into()));
    }
    // Grid invariants are enforced by make_grid; check here so load fails
    // early with the configuration error class.
    make_grid(cfg.n1, cfg.n2, cfg.n3)?;
    Ok(())
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        make_grid(self.n1, self.n2, self.n3)
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_final, self.n_steps, self.scheme)
    }

    /// Build the configured initial data with its validation records.
    pub fn initial_data(
        &self,
        g: &Grid,
    ) -> Result<(InitialData, DensityRecord, NormalDerivativeRecord)> {
        let (rho0, density_record) = match &self.density_profile {
            DensityProfile::PowerLaw { alpha } => build_density(g, *alpha, &|_, _, _| 1.0)?,
            DensityProfile::PowerLawFourier { alpha, amplitude } => {
                let a = *amplitude;
                build_density(g, *alpha, &move |x1: f64, _, _| {
                    1.0 + a * (2.0 * std::f64::consts::PI * x1).sin()
                })?
            }
        };
        let (theta0, temp_record) = match &self.temperature_profile {
            TemperatureProfile::Distance { amplitude } => {
                let a = *amplitude;
                build_temperature(g, &move |_, _, x3: f64| a * x3 * (1.0 - x3))?
            }
            TemperatureProfile::Sine { amplitude } => {
                let a = *amplitude;
                build_temperature(g, &move |_, _, x3: f64| {
                    a * (std::f64::consts::PI * x3).sin()
                })?
            }
            TemperatureProfile::DistanceCos { amplitude } => {
                let a = *amplitude;
                build_temperature(g, &move |_, x2: f64, x3: f64| {
                    x3 * (1.0 - x3) * (1.0 + a * (2.0 * std::f64::consts::PI * x2).cos())
                })?
            }
        };
        let u0 = match &self.velocity_profile {
            VelocityProfile::Zero => Field::zeros(g, 3),
            VelocityProfile::Mode { amplitude } => {
                let a = *amplitude;
                Field::vector_from_fn(g, move |x1, _, x3| {
                    let s = 2.0 * x3 - 1.0;
                    [
                        a * (2.0 * std::f64::consts::PI * x1).cos() * (2.0 * s * s - 1.0),
                        0.0,
                        0.0,
                    ]
                })
            }
            VelocityProfile::Shear { amplitude } => {
                let a = *amplitude;
                Field::vector_from_fn(g, move |_, _, x3| [a * x3, 0.0, 0.0])
            }
        };
        let alpha = match &self.density_profile {
            DensityProfile::PowerLaw { alpha } | DensityProfile::PowerLawFourier { alpha, .. } => {
                *alpha
            }
        };
        let data = InitialData::new(rho0, u0, theta0, alpha)?;
        Ok((data, density_record, temp_record))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = load_config_str("grid.n1 = 16\n").unwrap();
        assert_eq!(cfg.scheme, Scheme::CrankNicolson);
        assert_eq!(cfg.picard_tol, 1e-8);
        assert_eq!(cfg.n3, 33);
    }

    #[test]
    fn gamma_below_one_rejected() {
        let err = load_config_str("physics.gamma = 0.5\n").unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("gamma must exceed 1"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn viscosity_boundary_excluded() {
        // 2 mu + 3 lambda = 0 is invalid.
        let err = load_config_str("physics.mu = 1.5\nphysics.lambda = -1.0\n").unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let err = load_config_str("grid.n1 = 16\nbogus line\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let err = load_config_str("grid.n1 = sixteen\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = load_config_str("no.such.key = 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn bad_grid_is_configuration_error() {
        let err = load_config_str("grid.n3 = 4\n").unwrap_err();
        assert!(matches!(err, Error::InvalidResolution(_)));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = load_config_str("# header\n\ngrid.n1 = 8 # inline\n").unwrap();
        assert_eq!(cfg.n1, 8);
    }
}
