//! TOML run configuration: `[problem]`, `[solver]` and `[run]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov_perron::LpConfig;
use crate::spectral_problem::{build_problem, ProblemSpec, SpectralProblem};

fn default_t0() -> f64 {
    0.1
}

fn default_slack() -> f64 {
    0.25
}

fn default_pairs() -> usize {
    4
}

fn default_radius() -> f64 {
    1.0
}

fn default_scales() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0]
}

fn default_lambdas() -> Vec<f64> {
    vec![1e2, 1e3, 1e4]
}

/// Per-subcommand inputs that are not solver parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Unstable-side anchor, full modal vector. Defaults to 0.1 on each
    /// unstable mode.
    pub anchor: Option<Vec<f64>>,
    /// Stable-side anchor, full modal vector. Defaults to 0.1 on each stable
    /// mode.
    pub stable_anchor: Option<Vec<f64>>,
    /// Flow time of the invariance test.
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_pairs")]
    pub lipschitz_pairs: usize,
    /// Anchor pairs are drawn from the ball of this radius.
    #[serde(default = "default_radius")]
    pub lipschitz_radius: f64,
    #[serde(default = "default_slack")]
    pub lipschitz_slack: f64,
    /// Multiples of the stable anchor tested for membership.
    #[serde(default = "default_scales")]
    pub membership_scales: Vec<f64>,
    /// Joint `(dt, n_samples)` levels of the invariance refinement, coarse first.
    pub refine_dt: Vec<f64>,
    pub refine_samples: Vec<usize>,
    /// λ values of the resolvent study.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            anchor: None,
            stable_anchor: None,
            t0: default_t0(),
            lipschitz_pairs: default_pairs(),
            lipschitz_radius: default_radius(),
            lipschitz_slack: default_slack(),
            membership_scales: default_scales(),
            refine_dt: Vec::new(),
            refine_samples: Vec::new(),
            lambdas: default_lambdas(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: LpConfig,
    #[serde(default)]
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(s).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        let p = build_problem(&self.problem)?;
        for a in [&self.run.anchor, &self.run.stable_anchor].into_iter().flatten() {
            if a.len() != p.n_modes() {
                return Err(Error::InvalidConfig(format!(
                    "anchor has {} coordinates, problem has {}",
                    a.len(),
                    p.n_modes()
                )));
            }
        }
        if !(self.run.t0 > 0.0) {
            return Err(Error::InvalidConfig(format!("t0 must be positive, got {}", self.run.t0)));
        }
        if self.run.refine_dt.len() != self.run.refine_samples.len() {
            return Err(Error::InvalidConfig(
                "refine_dt and refine_samples must have equal length".into(),
            ));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<SpectralProblem> {
        build_problem(&self.problem)
    }

    pub fn unstable_anchor(&self, p: &SpectralProblem) -> Vec<f64> {
        self.run.anchor.clone().unwrap_or_else(|| {
            (0..p.n_modes()).map(|k| if p.is_unstable(k) { 0.1 } else { 0.0 }).collect()
        })
    }

    pub fn stable_anchor(&self, p: &SpectralProblem) -> Vec<f64> {
        self.run.stable_anchor.clone().unwrap_or_else(|| {
            (0..p.n_modes()).map(|k| if p.is_unstable(k) { 0.0 } else { 0.1 }).collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_problem::NonlinearitySpec;

    const MINIMAL: &str = r#"
[problem]
eigenvalues = [1.0, -1.0]
alpha = 1.0
beta = -1.0
gamma = 0.0
zeta = -0.5

[problem.nonlinearity]
kind = "linear"
matrix = [[0.0, 0.0], [0.1, 0.0]]

[solver]
n_samples = 10
tol = 1e-6
"#;

    #[test]
    fn partial_tables_fill_defaults() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.solver.n_samples, 10);
        assert_eq!(c.solver.max_iter, LpConfig::default().max_iter);
        assert_eq!(c.run, RunSection::default());
        assert!(matches!(c.problem.nonlinearity, NonlinearitySpec::Linear { .. }));
        let p = c.build().unwrap();
        assert_eq!(c.unstable_anchor(&p), vec![0.1, 0.0]);
        assert_eq!(c.stable_anchor(&p), vec![0.0, 0.1]);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let typo = MINIMAL.replace("tol = 1e-6", "tolerance = 1e-6");
        assert!(matches!(RunConfig::from_toml_str(&typo), Err(Error::InvalidConfig(_))));
        let neg = MINIMAL.replace("tol = 1e-6", "tol = -1.0");
        assert!(RunConfig::from_toml_str(&neg).is_err());
        let anchor = format!("{MINIMAL}\n[run]\nanchor = [1.0]\n");
        assert!(RunConfig::from_toml_str(&anchor).is_err());
    }
}
