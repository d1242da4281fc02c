//! Run configuration: TOML file mapped onto the core library's option
//! structs. Unknown keys are rejected. Every field has a default, so all
//! commands run without a config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use fourwis::calib::{CalibrateOptions, GaOptions, IpOptions, KindWeights, LmOptions, PsoOptions};
use fourwis::filter::{EstimatorConfig, UkfConfig};
use fourwis::kinematics::KinematicParams;
use fourwis::sim::DisturbanceConfig;
use fourwis::trajectory::{default_calibration_specs, TrajectorySpec};

use crate::error::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub robot: RobotConfig,
    pub disturbance: DisturbanceConfig<f64>,
    pub trajectories: TrajectoryConfig,
    pub simulate: SimulateConfig,
    pub calibration: CalibrationConfig,
    pub filter: FilterConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(CliError::io(p))?;
                let config: RunConfig = toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                config.validate()?;
                Ok(config)
            }
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.disturbance
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.calibration.bounds_fraction > 0.0 && self.calibration.bounds_fraction < 1.0) {
            return Err(CliError::Config(
                "calibration.bounds_fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Robot parameters from the configured source.
    pub fn robot_params(&self) -> Result<KinematicParams<f64>, CliError> {
        match &self.robot.params_file {
            None => Ok(KinematicParams::nominal()),
            Some(path) => load_params(path),
        }
    }

    /// The six trajectory specs with the configured overrides applied.
    pub fn trajectory_specs(&self) -> [TrajectorySpec<f64>; 6] {
        let t = &self.trajectories;
        let mut specs = default_calibration_specs::<f64>();
        for s in &mut specs {
            s.sample_dt = t.sample_dt;
            if s.kind.is_circle() {
                s.displacement = t.circle_angle;
                s.radius = t.circle_radius;
                s.duration = t.circle_duration;
            } else if s.kind.is_spin() {
                s.displacement = t.spin_angle;
                s.duration = t.spin_duration;
            } else {
                s.displacement = t.line_length;
                s.duration = t.line_duration;
            }
        }
        specs
    }

    /// Disturbance config for a simulate run; gravity drift is active only in
    /// wall mode.
    pub fn effective_disturbance(&self, wall: bool, seed: Option<u64>) -> DisturbanceConfig<f64> {
        let mut d = self.disturbance;
        d.gravity_drift = if wall {
            self.simulate.wall_gravity_drift
        } else {
            d.gravity_drift
        };
        if let Some(s) = seed {
            d.rng_seed = s;
        }
        d
    }

    pub fn calibrate_options(&self, seed: Option<u64>) -> CalibrateOptions<f64> {
        let c = &self.calibration;
        let mut options = CalibrateOptions {
            lm: LmOptions {
                max_iterations: c.lm.max_iterations,
                ..LmOptions::default()
            },
            interior_point: IpOptions {
                mu_min: c.interior_point.mu_min,
                ..IpOptions::default()
            },
            ga: GaOptions {
                population: c.ga.population,
                generations: c.ga.generations,
                seed: c.ga.seed,
                ..GaOptions::default()
            },
            pso: PsoOptions {
                particles: c.pso.particles,
                iterations: c.pso.iterations,
                seed: c.pso.seed,
                ..PsoOptions::default()
            },
            kind_weights: c.weights.to_kind_weights(),
        };
        if let Some(s) = seed {
            options.ga.seed = s;
            options.pso.seed = s;
        }
        options
    }

    /// Estimator noise config: measurement noise matched to the config's own
    /// disturbance section unless overridden.
    pub fn estimator_config(&self) -> EstimatorConfig<f64> {
        self.estimator_config_for(&self.disturbance)
    }

    /// Estimator noise config matched to the given disturbance (normally the
    /// dataset's manifest), with any explicit `[filter]` overrides applied.
    pub fn estimator_config_for(
        &self,
        disturbance: &DisturbanceConfig<f64>,
    ) -> EstimatorConfig<f64> {
        let f = &self.filter;
        let mut config = EstimatorConfig::matched_to(disturbance);
        config.process_noise =
            nalgebra_diag(f.process_noise[0], f.process_noise[1], f.process_noise[2]);
        config.initial_covariance =
            nalgebra_diag(f.initial_cov[0], f.initial_cov[1], f.initial_cov[2]);
        if let Some(v) = f.imu_yaw_variance {
            config.imu_yaw_variance = v;
        }
        if let (Some(p), Some(y)) = (f.vo_pos_variance, f.vo_yaw_variance) {
            config.vo_covariance = nalgebra_diag(p, p, y);
        }
        config.ukf = UkfConfig {
            alpha: f.ukf.alpha,
            beta: f.ukf.beta,
            kappa: f.ukf.kappa,
        };
        config
    }
}

fn nalgebra_diag(a: f64, b: f64, c: f64) -> nalgebra::Matrix3<f64> {
    nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(a, b, c))
}

/// Load robot parameters from a JSON file.
pub fn load_params(path: &Path) -> Result<KinematicParams<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let params: KinematicParams<f64> = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    params
        .validate()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(params)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    /// Path to a parameter JSON file; nominal CAD values when absent.
    pub params_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub line_length: f64,
    pub line_duration: f64,
    pub circle_angle: f64,
    pub circle_radius: f64,
    pub circle_duration: f64,
    pub spin_angle: f64,
    pub spin_duration: f64,
    pub sample_dt: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        let d = default_calibration_specs::<f64>();
        TrajectoryConfig {
            line_length: d[0].displacement,
            line_duration: d[0].duration,
            circle_angle: d[2].displacement,
            circle_radius: d[2].radius,
            circle_duration: d[2].duration,
            spin_angle: d[4].displacement,
            spin_duration: d[4].duration,
            sample_dt: d[0].sample_dt,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Gravity drift magnitude (m/s^2) applied when `--wall` is passed.
    pub wall_gravity_drift: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            wall_gravity_drift: 0.0012,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Half-width of the parameter box as a fraction of nominal.
    pub bounds_fraction: f64,
    /// Per-trajectory-kind cost weights (all-equal joint fit by default).
    pub weights: WeightsSection,
    pub lm: LmConfig,
    pub interior_point: IpConfig,
    pub ga: GaConfig,
    pub pso: PsoConfig,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            bounds_fraction: 0.05,
            weights: WeightsSection::default(),
            lm: LmConfig::default(),
            interior_point: IpConfig::default(),
            ga: GaConfig::default(),
            pso: PsoConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsSection {
    pub line_x: f64,
    pub line_y: f64,
    pub circle_ccw: f64,
    pub circle_cw: f64,
    pub spin_ccw: f64,
    pub spin_cw: f64,
}

impl Default for WeightsSection {
    fn default() -> Self {
        WeightsSection {
            line_x: 1.0,
            line_y: 1.0,
            circle_ccw: 1.0,
            circle_cw: 1.0,
            spin_ccw: 1.0,
            spin_cw: 1.0,
        }
    }
}

impl WeightsSection {
    fn to_kind_weights(&self) -> KindWeights {
        KindWeights([
            self.line_x,
            self.line_y,
            self.circle_ccw,
            self.circle_cw,
            self.spin_ccw,
            self.spin_cw,
        ])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub max_iterations: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            max_iterations: LmOptions::<f64>::default().max_iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IpConfig {
    pub mu_min: f64,
}

impl Default for IpConfig {
    fn default() -> Self {
        IpConfig {
            mu_min: IpOptions::<f64>::default().mu_min,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        let d = GaOptions::default();
        GaConfig {
            population: d.population,
            generations: d.generations,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        let d = PsoOptions::default();
        PsoConfig {
            particles: d.particles,
            iterations: d.iterations,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Process noise diagonal (covariance per second).
    pub process_noise: [f64; 3],
    /// Initial covariance diagonal.
    pub initial_cov: [f64; 3],
    /// IMU yaw variance override; matched to the disturbance sigma when absent.
    pub imu_yaw_variance: Option<f64>,
    /// VO position variance override (per axis).
    pub vo_pos_variance: Option<f64>,
    /// VO yaw variance override.
    pub vo_yaw_variance: Option<f64>,
    pub ukf: UkfSection,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            process_noise: [1e-4, 1e-4, 1e-4],
            initial_cov: [1e-6, 1e-6, 1e-6],
            imu_yaw_variance: None,
            vo_pos_variance: None,
            vo_yaw_variance: None,
            ukf: UkfSection::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UkfSection {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfSection {
    fn default() -> Self {
        let d = UkfConfig::<f64>::default();
        UkfSection {
            alpha: d.alpha,
            beta: d.beta,
            kappa: d.kappa,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Default output directory; overridden by `--out` and the `FOURWIS_OUT`
    /// environment variable.
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}
