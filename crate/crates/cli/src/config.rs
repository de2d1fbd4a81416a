//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use msmfe_core::{CellType, SolvePath};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Example2,
    SimplicialMms,
    Footing,
    Cantilever,
    Custom,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Example2 => "example2",
            ExperimentKind::SimplicialMms => "simplicial_mms",
            ExperimentKind::Footing => "footing",
            ExperimentKind::Cantilever => "cantilever",
            ExperimentKind::Custom => "custom",
        }
    }

    pub fn is_manufactured(self) -> bool {
        matches!(self, ExperimentKind::Example2 | ExperimentKind::SimplicialMms)
    }
}

impl FromStr for ExperimentKind {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "example2" => ExperimentKind::Example2,
            "simplicial_mms" => ExperimentKind::SimplicialMms,
            "footing" => ExperimentKind::Footing,
            "cantilever" => ExperimentKind::Cantilever,
            "custom" => ExperimentKind::Custom,
            other => return Err(CliError::Config(format!("unknown experiment '{other}'"))),
        })
    }
}

/// Which solver(s) to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathChoice {
    One(SolvePath),
    /// Reduced for the reported results, full as a cross-check.
    Both,
}

impl FromStr for PathChoice {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "both" => Ok(PathChoice::Both),
            other => other
                .parse::<SolvePath>()
                .map(PathChoice::One)
                .map_err(|e| CliError::Config(e.to_string())),
        }
    }
}

impl PathChoice {
    pub fn primary(self) -> SolvePath {
        match self {
            PathChoice::One(p) => p,
            PathChoice::Both => SolvePath::Reduced,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MeshSource {
    Generated,
    File(PathBuf),
}

/// Homogeneous material overrides (`E`, `nu`, `K`, `c0`, `alpha`).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MaterialOverrides {
    pub young: Option<f64>,
    pub poisson: Option<f64>,
    pub permeability: Option<f64>,
    pub c0: Option<f64>,
    pub alpha: Option<f64>,
}

impl MaterialOverrides {
    pub fn any(&self) -> bool {
        [self.young, self.poisson, self.permeability, self.c0, self.alpha]
            .iter()
            .any(Option::is_some)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub mesh: MeshSource,
    pub cell: Option<CellType>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub levels: usize,
    pub t_final: Option<f64>,
    pub dt: Option<f64>,
    pub tol: f64,
    pub path: PathChoice,
    pub out: PathBuf,
    pub snapshot_every: usize,
    /// Named material preset: `example2`, `example3` or `example4`.
    pub material: Option<String>,
    pub overrides: MaterialOverrides,
}

const KEYS: &[&str] = &[
    "experiment",
    "mesh",
    "cell",
    "nx",
    "ny",
    "levels",
    "T",
    "dt",
    "tol",
    "path",
    "out",
    "snapshot_every",
    "material",
    "E",
    "nu",
    "K",
    "c0",
    "alpha",
];

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Config(format!("invalid value '{v}' for '{key}'")))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // relative mesh paths are resolved against the config's directory
        if let MeshSource::File(p) = &cfg.mesh {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.mesh = MeshSource::File(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(CliError::Config(format!("line {}: unknown key '{k}'", i + 1)));
            }
            if v.is_empty() {
                return Err(CliError::Config(format!("line {}: empty value for '{k}'", i + 1)));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key '{k}'", i + 1)));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let opt_f64 = |k: &str| get(k).map(|v| parse_value::<f64>(k, v)).transpose();
        let opt_usize = |k: &str| get(k).map(|v| parse_value::<usize>(k, v)).transpose();

        let experiment: ExperimentKind = get("experiment")
            .ok_or_else(|| CliError::Config("missing required key 'experiment'".into()))?
            .parse()?;
        let cell = get("cell")
            .map(|v| CellType::parse(v).ok_or_else(|| CliError::Config(format!("unknown cell type '{v}'"))))
            .transpose()?;
        let mesh = match get("mesh") {
            None | Some("generated") => MeshSource::Generated,
            Some(p) => MeshSource::File(PathBuf::from(p)),
        };
        let cfg = RunConfig {
            experiment,
            mesh,
            cell,
            nx: opt_usize("nx")?,
            ny: opt_usize("ny")?,
            levels: opt_usize("levels")?.unwrap_or(4),
            t_final: opt_f64("T")?,
            dt: opt_f64("dt")?,
            tol: opt_f64("tol")?.unwrap_or(1e-10),
            path: get("path")
                .map(str::parse)
                .transpose()?
                .unwrap_or(PathChoice::One(SolvePath::Reduced)),
            out: PathBuf::from(get("out").unwrap_or(".")),
            snapshot_every: opt_usize("snapshot_every")?.unwrap_or(1),
            material: get("material").map(str::to_string),
            overrides: MaterialOverrides {
                young: opt_f64("E")?,
                poisson: opt_f64("nu")?,
                permeability: opt_f64("K")?,
                c0: opt_f64("c0")?,
                alpha: opt_f64("alpha")?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt must be positive, got {dt}"));
            }
        }
        if let (Some(t), Some(dt)) = (self.t_final, self.dt) {
            if t.is_nan() || t < dt {
                return bad(format!("T = {t} must be at least dt = {dt}"));
            }
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return bad(format!("tol must lie in (0, 1), got {}", self.tol));
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be at least 1".into());
        }
        if matches!(self.nx, Some(0)) || matches!(self.ny, Some(0)) {
            return bad("nx and ny must be positive".into());
        }
        if let Some(m) = &self.material {
            if !["example2", "example3", "example4"].contains(&m.as_str()) {
                return bad(format!("unknown material preset '{m}'"));
            }
            if self.overrides.any() {
                return bad("'material' cannot be combined with E, nu, K, c0 or alpha".into());
            }
        }
        if self.experiment.is_manufactured() && (self.material.is_some() || self.overrides.any()) {
            return bad(format!(
                "the material of '{}' is fixed by its exact solution",
                self.experiment.name()
            ));
        }
        if matches!(self.mesh, MeshSource::File(_))
            && matches!(self.experiment, ExperimentKind::Footing | ExperimentKind::Cantilever)
        {
            return bad(format!(
                "'{}' builds its own mesh; use nx, ny and cell",
                self.experiment.name()
            ));
        }
        Ok(())
    }

    /// Applies command-line overrides.
    pub fn with_flags(
        mut self,
        out: Option<PathBuf>,
        path: Option<PathChoice>,
        tol: Option<f64>,
        levels: Option<usize>,
    ) -> Result<Self, CliError> {
        if let Some(o) = out {
            self.out = o;
        }
        if let Some(p) = path {
            self.path = p;
        }
        if let Some(t) = tol {
            self.tol = t;
        }
        if let Some(l) = levels {
            self.levels = l;
        }
        self.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_comments() {
        let c = RunConfig::parse("# comment\nexperiment = footing  # trailing\n\nT=10\n").unwrap();
        assert_eq!(c.experiment, ExperimentKind::Footing);
        assert_eq!(c.t_final, Some(10.0));
        assert_eq!(c.levels, 4);
        assert_eq!(c.path, PathChoice::One(SolvePath::Reduced));
        assert_eq!(c.mesh, MeshSource::Generated);
    }

    #[test]
    fn rejects_malformed_input() {
        for text in [
            "",
            "T = 1",
            "experiment = nothing",
            "experiment = footing\nbogus = 1",
            "experiment = footing\nexperiment = cantilever",
            "experiment = footing\ndt = -1",
            "experiment = footing\nT = 0.5\ndt = 1",
            "experiment = footing\nlevels = 0",
            "experiment = footing\nnx = two",
            "experiment = footing\nno equals sign",
            "experiment = example2\nE = 3",
            "experiment = custom\nmaterial = example3\nnu = 0.3",
            "experiment = custom\npath = sideways",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text:?}");
        }
    }

    #[test]
    fn flags_override_file_values() {
        let c = RunConfig::parse("experiment = example2\nlevels = 3\ntol = 1e-8")
            .unwrap()
            .with_flags(Some("o".into()), Some(PathChoice::Both), Some(1e-11), Some(2))
            .unwrap();
        assert_eq!((c.levels, c.tol, c.path), (2, 1e-11, PathChoice::Both));
        assert_eq!(c.out, PathBuf::from("o"));
    }
}
