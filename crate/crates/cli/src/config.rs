use std::fs;
use std::path::{Path, PathBuf};

use liouville_disk::curvature_model::CurvatureData;
use liouville_disk::identity_lab::default_ladder;
use liouville_disk::spectral_solver::{LinearMethod, DEFAULT_MODES, DEFAULT_RADIAL};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "LIOUVILLE_DISK_OUT";

/// One JSON document describing an experiment. Every field has a default, so
/// `{}` is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Fixture name or path to a curvature JSON file.
    pub curvature: String,
    pub output_dir: Option<PathBuf>,
    /// Seed for randomly drawn check points.
    pub seed: u64,
    pub identities: IdentityConfig,
    pub residual: ResidualConfig,
    pub solve: SolveConfig,
    pub profile: ProfileConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            curvature: "canonical".into(),
            output_dir: None,
            seed: 0,
            identities: IdentityConfig::default(),
            residual: ResidualConfig::default(),
            solve: SolveConfig::default(),
            profile: ProfileConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    pub gaussians: Vec<f64>,
    pub geodesics: Vec<f64>,
    pub deltas: Vec<f64>,
    pub resolvent_a: Vec<f64>,
    pub rel_tol: f64,
    pub resolvent_tol: f64,
    pub zero_tol: f64,
    /// δ ladder for the asymptotic checks, decreasing.
    pub ladder: Vec<f64>,
    /// Angle of the concentration point used by the asymptotic checks.
    pub xi_angle: f64,
    /// Random concentration points for the kernel-norm identity.
    pub kernel_points: usize,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            gaussians: vec![0.5, 1.0, 2.0],
            geodesics: vec![0.5, 1.0],
            deltas: vec![0.1, 0.01],
            resolvent_a: vec![1.1, 2.0, 10.0],
            rel_tol: 1e-8,
            resolvent_tol: 1e-12,
            zero_tol: 1e-12,
            ladder: default_ladder(),
            xi_angle: 0.0,
            kernel_points: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualConfig {
    pub p: f64,
    /// ε ladder; defaults to `2^{-5}, …, 2^{-10}` on the branch of the
    /// reduced solution.
    pub epsilons: Option<Vec<f64>>,
    /// Fail (exit 2) when the ratio band exceeds this value.
    pub band_max: Option<f64>,
    pub nr: usize,
    pub ntheta: usize,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self { p: 1.25, epsilons: None, band_max: None, nr: 64, ntheta: 256 }
    }
}

/// Explicit ansatz parameters, bypassing the reduced system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartConfig {
    pub delta: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Defaults to `2^{-7}` on the branch of the reduced solution.
    pub epsilon: Option<f64>,
    pub chart: Option<ChartConfig>,
    pub max_iter: usize,
    pub tol: f64,
    pub modes: usize,
    pub radial: usize,
    pub linear: LinearMethod,
    pub grid_nr: usize,
    pub grid_ntheta: usize,
    /// Also write `phi.csv` sampled on a `dump_nr × dump_ntheta` lattice.
    pub dump_field: bool,
    pub dump_nr: usize,
    pub dump_ntheta: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            chart: None,
            max_iter: 50,
            tol: 1e-10,
            modes: DEFAULT_MODES,
            radial: DEFAULT_RADIAL,
            linear: LinearMethod::Auto,
            grid_nr: 64,
            grid_ntheta: 256,
            dump_field: false,
            dump_nr: 32,
            dump_ntheta: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub epsilon: Option<f64>,
    pub chart: Option<ChartConfig>,
    pub nr: usize,
    pub ntheta: usize,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { epsilon: None, chart: None, nr: 64, ntheta: 128 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let id = &self.identities;
        for (name, v) in [("gaussians", &id.gaussians), ("geodesics", &id.geodesics), ("deltas", &id.deltas)] {
            if v.is_empty() {
                return Err(CliError::Usage(format!("identities.{name} must be nonempty")));
            }
        }
        check_decreasing("identities.ladder", &id.ladder)?;
        if let Some(e) = &self.residual.epsilons {
            let mags: Vec<f64> = e.iter().map(|v| v.abs()).collect();
            check_decreasing("residual.epsilons", &mags)?;
        }
        if !(self.residual.p > 1.0 && self.residual.p < 2.0) {
            return Err(CliError::Usage(format!("residual.p = {} must lie in (1, 2)", self.residual.p)));
        }
        Ok(())
    }

    /// Fixture name, else a path to a curvature JSON file.
    pub fn curvature_data(&self) -> Result<CurvatureData, CliError> {
        if let Some(d) = CurvatureData::fixture(&self.curvature) {
            return Ok(d);
        }
        let path = Path::new(&self.curvature);
        if !path.is_file() {
            return Err(CliError::Usage(format!("unknown fixture or missing curvature file: {}", self.curvature)));
        }
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        CurvatureData::from_json(&text).map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Flag, then config, then the environment variable, then `.`; created if
    /// missing.
    pub fn output_dir(&self, flag: Option<&Path>) -> Result<PathBuf, CliError> {
        let dir = flag
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir)
            .map_err(|e| CliError::Usage(format!("output directory {} is not writable: {e}", dir.display())))?;
        Ok(dir)
    }
}

fn check_decreasing(name: &str, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::Usage(format!("{name} must be nonempty")));
    }
    if values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::Usage(format!("{name} must be strictly decreasing in magnitude")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"curvatures": "canonical"}"#).is_err());
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"solve": {"eps": 0.1}}"#).is_err());
    }

    #[test]
    fn ladders_must_decrease() {
        let mut c = ExperimentConfig::default();
        c.identities.ladder = vec![0.01, 0.1];
        assert!(c.validate().is_err());
        c.identities.ladder = default_ladder();
        c.residual.epsilons = Some(vec![-0.01, -0.02]);
        assert!(c.validate().is_err());
        c.residual.epsilons = Some(vec![-0.02, -0.01]);
        c.validate().unwrap();
    }

    #[test]
    fn curvature_source_resolution() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.curvature_data().unwrap(), CurvatureData::canonical());
        c.curvature = "no-such-fixture".into();
        assert!(matches!(c.curvature_data(), Err(CliError::Usage(_))));
    }
}
