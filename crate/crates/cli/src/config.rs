use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use stablelike::parametrix::{GridOptions, Method, SolverOptions};
use stablelike::verification::VerifyOptions;
use stablelike::{Error, ModelSpec, Point, Result};

const SECTIONS: [&str; 7] = ["model", "grid", "solver", "verify", "sim", "rho", "output"];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub n_max: usize,
    pub method: Method,
    /// Defaults to β₀/(4α₂).
    pub gamma: Option<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverSection {
            tol: d.tol,
            n_max: d.n_max,
            method: d.method,
            gamma: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub t: f64,
    pub x0: Vec<f64>,
    pub n_paths: usize,
    pub h_step: f64,
    pub seed: u64,
    /// KDE evaluation points are y = x0 + k·y_spacing with |y - x0| ≤ y_radius.
    pub y_radius: f64,
    pub y_spacing: f64,
    pub bandwidth: Option<f64>,
    pub compare: bool,
    pub exit_radii: Vec<f64>,
    pub exit_a: f64,
    pub exit_paths: usize,
    pub levy_delta: f64,
    pub levy_paths: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            t: 0.5,
            x0: vec![0.0],
            n_paths: 100_000,
            h_step: 1.0 / 256.0,
            seed: 0,
            y_radius: 2.0,
            y_spacing: 0.2,
            bandwidth: None,
            compare: true,
            exit_radii: vec![0.05, 0.1, 0.2],
            exit_a: 1.0,
            exit_paths: 20_000,
            levy_delta: 1.0,
            levy_paths: 20_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RhoSection {
    pub draws: usize,
}

impl Default for RhoSection {
    fn default() -> Self {
        RhoSection { draws: 100 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

/// A parsed run configuration with every default filled in.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub grid: GridOptions,
    pub solver: SolverSection,
    pub verify: VerifyOptions,
    pub sim: SimSection,
    pub rho: RhoSection,
    #[serde(skip)]
    pub output: OutputSection,
}

fn section<T: serde::de::DeserializeOwned + Default>(root: &Value, name: &str) -> Result<T> {
    match root.get(name) {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Validation(format!("{name}: {e}"))),
    }
}

impl RunConfig {
    pub fn from_value(root: &Value) -> Result<Self> {
        let obj = root
            .as_object()
            .ok_or_else(|| Error::Validation("config must be a table".into()))?;
        for k in obj.keys() {
            if !SECTIONS.contains(&k.as_str()) {
                return Err(Error::Validation(format!("unknown section {k}")));
            }
        }
        let cfg = RunConfig {
            model: ModelSpec::from_value(root)?,
            grid: section(root, "grid")?,
            solver: section(root, "solver")?,
            verify: section(root, "verify")?,
            sim: section(root, "sim")?,
            rho: section(root, "rho")?,
            output: section(root, "output")?,
        };
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads TOML, or JSON when the file is `.json` or starts with `{`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Validation(format!("cannot read {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        let root: Value = if is_json {
            serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?
        };
        Self::from_value(&root)
    }

    fn check(&self) -> Result<()> {
        let s = &self.solver;
        if !(s.tol > 0.0) || s.n_max == 0 {
            return Err(Error::Validation("solver: need tol > 0 and n_max >= 1".into()));
        }
        if let Some(g) = s.gamma {
            if !(g > 0.0 && g < self.model.bounds.beta0 / self.model.bounds.alpha_hi) {
                return Err(Error::Validation("solver.gamma must lie in (0, beta0/alpha_hi)".into()));
            }
        }
        if self.sim.x0.len() != self.model.dim {
            return Err(Error::Validation(format!("sim.x0 must have {} coordinates", self.model.dim)));
        }
        if !(self.sim.y_spacing > 0.0 && self.sim.y_radius >= 0.0) {
            return Err(Error::Validation("sim: need y_spacing > 0 and y_radius >= 0".into()));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.solver
            .gamma
            .unwrap_or(self.model.bounds.beta0 / (4.0 * self.model.bounds.alpha_hi))
    }

    pub fn solver_options(&self, threads: usize) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            n_max: self.solver.n_max,
            method: self.solver.method,
            threads,
        }
    }

    pub fn x0(&self) -> Point {
        let mut p = [0.0; 2];
        for (i, v) in self.sim.x0.iter().enumerate() {
            p[i] = *v;
        }
        p
    }

    /// SHA-256 of the effective configuration, output directory excluded.
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serialises");
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    /// Short hash used in file names.
    pub fn tag(&self) -> String {
        self.hash()[..12].to_string()
    }
}
