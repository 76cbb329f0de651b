use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _};
use serde::Deserialize;
use tweedie_core::gaussian::{HeteroJointSpec, SeriesOptions};
use tweedie_core::{BandwidthRule, EvalOptions, FunctionalSpec, NoiseSpec, PriorSpec};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Denoise,
    Validate,
    Simulate,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn points(&self) -> anyhow::Result<Vec<f64>> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) || self.n == 0 {
            bail!("grid needs finite lo <= hi and n >= 1");
        }
        if self.n == 1 {
            return Ok(vec![self.lo]);
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        Ok((0..self.n).map(|i| self.lo + step * i as f64).collect())
    }
}

/// Observations of `Y` whose kernel density estimate stands in for the marginal.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFile {
    pub file: PathBuf,
    #[serde(default = "default_column")]
    pub column: String,
    #[serde(default)]
    pub bandwidth: Bandwidth,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthName {
    #[default]
    Silverman,
    FirstDerivative,
}

/// A named bandwidth rule or a fixed positive bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Rule(BandwidthName),
    Fixed(f64),
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Rule(BandwidthName::Silverman)
    }
}

impl Bandwidth {
    pub fn rule(self) -> BandwidthRule {
        match self {
            Bandwidth::Rule(BandwidthName::Silverman) => BandwidthRule::Silverman,
            Bandwidth::Rule(BandwidthName::FirstDerivative) => BandwidthRule::FirstDerivative,
            Bandwidth::Fixed(h) => BandwidthRule::Fixed(h),
        }
    }
}

fn default_column() -> String {
    "y".into()
}

/// Where the marginal density comes from.
#[derive(Debug, Clone)]
pub enum PriorSource {
    Spec(PriorSpec),
    Samples(SampleFile),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    command: Command,
    noise: Option<NoiseSpec>,
    prior: Option<serde_json::Value>,
    joint: Option<HeteroJointSpec>,
    #[serde(default)]
    functionals: Vec<FunctionalSpec>,
    grid: Option<Grid>,
    data_file: Option<PathBuf>,
    tol: Option<f64>,
    series: Option<SeriesOptions>,
    #[serde(default)]
    seed: u64,
    n: Option<usize>,
    suite: Option<String>,
    suite_file: Option<PathBuf>,
    out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub noise: Option<NoiseSpec>,
    pub prior: Option<PriorSource>,
    pub joint: Option<HeteroJointSpec>,
    pub functionals: Vec<FunctionalSpec>,
    pub grid: Option<Grid>,
    pub data_file: Option<PathBuf>,
    pub options: EvalOptions,
    pub seed: u64,
    pub n: Option<usize>,
    pub suite: Option<String>,
    pub suite_file: Option<PathBuf>,
    pub out: PathBuf,
}

fn parse_prior(value: serde_json::Value, base: &Path) -> anyhow::Result<PriorSource> {
    if value.get("type").and_then(|t| t.as_str()) == Some("file") {
        let mut obj = value;
        obj.as_object_mut()
            .expect("has a type field")
            .remove("type");
        let mut file: SampleFile = serde_json::from_value(obj).context("prior file")?;
        file.file = base.join(&file.file);
        Ok(PriorSource::Samples(file))
    } else {
        Ok(PriorSource::Spec(
            serde_json::from_value(value).context("prior")?,
        ))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Failure> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(Failure::malformed)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(Failure::malformed)
    }

    /// Parses a config, resolving relative paths against `base`.
    pub fn parse(text: &str, base: &Path) -> anyhow::Result<RunConfig> {
        let raw: RawConfig = serde_json::from_str(text).context("parsing config")?;
        let prior = raw.prior.map(|v| parse_prior(v, base)).transpose()?;
        let mut options = EvalOptions::default();
        if let Some(tol) = raw.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                bail!("tol must be positive, got {tol}");
            }
            options.tol = tol;
        }
        if let Some(series) = raw.series {
            options.series = series;
        }
        let cfg = RunConfig {
            command: raw.command,
            noise: raw.noise,
            prior,
            joint: raw.joint,
            functionals: raw.functionals,
            grid: raw.grid,
            data_file: raw.data_file.map(|p| base.join(p)),
            options,
            seed: raw.seed,
            n: raw.n,
            suite: raw.suite,
            suite_file: raw.suite_file.map(|p| base.join(p)),
            out: base.join(raw.out),
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> anyhow::Result<()> {
        match self.command {
            Command::Denoise => {
                if self.prior.is_some() == self.joint.is_some() {
                    bail!("denoise needs exactly one of prior or joint");
                }
                if self.joint.is_some() && self.noise.is_some() {
                    bail!("a heteroskedastic joint fixes the noise per row; drop the noise field");
                }
                if self.joint.is_none() && self.noise.is_none() {
                    bail!("denoise needs a noise law");
                }
                if self.data_file.is_some() == self.grid.is_some() {
                    bail!("denoise needs exactly one of data_file or grid");
                }
                if self.functionals.is_empty() {
                    bail!("denoise needs at least one functional");
                }
            }
            Command::Validate => {
                if self.suite.is_some() == self.suite_file.is_some() {
                    bail!("validate needs exactly one of suite or suite_file");
                }
            }
            Command::Simulate => {
                if self.prior.is_some() == self.joint.is_some() {
                    bail!("simulate needs exactly one of prior or joint");
                }
                if let Some(PriorSource::Samples(_)) = self.prior {
                    bail!("simulate needs a prior law, not a sample file");
                }
                if self.joint.is_none() && self.noise.is_none() {
                    bail!("simulate needs a noise law");
                }
                if self.n.unwrap_or(0) == 0 {
                    bail!("simulate needs n >= 1");
                }
            }
        }
        Ok(())
    }

    /// Creates the parent directory of an output file, or the directory itself.
    pub fn prepare_out(&self, is_dir: bool) -> Result<(), Failure> {
        let dir = if is_dir {
            Some(self.out.as_path())
        } else {
            self.out.parent()
        };
        if let Some(dir) = dir.filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)
                .with_context(|| format!("output directory {} is not writable", dir.display()))
                .map_err(Failure::malformed)?;
        }
        Ok(())
    }

    pub fn noise(&self) -> anyhow::Result<&NoiseSpec> {
        self.noise
            .as_ref()
            .ok_or_else(|| anyhow!("missing noise law"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_prior_and_joint_together() {
        let text = r#"{"command":"simulate","noise":{"family":"gaussian","sd":1},
            "prior":{"type":"atomic","atoms":[{"location":0,"weight":1}]},
            "joint":{"atoms":[{"location":0,"variance":1,"weight":1}]},"n":3,"out":"x.csv"}"#;
        assert!(RunConfig::parse(text, Path::new(".")).is_err());
    }

    #[test]
    fn file_prior_resolves_against_base() {
        let text = r#"{"command":"denoise","noise":{"family":"gaussian","sd":1},
            "prior":{"type":"file","file":"sim.csv"},"functionals":[{"target":"mean"}],
            "grid":{"lo":-1,"hi":1,"n":3},"out":"o.csv"}"#;
        let cfg = RunConfig::parse(text, Path::new("/data")).unwrap();
        let Some(PriorSource::Samples(f)) = cfg.prior else {
            panic!()
        };
        assert_eq!(f.file, PathBuf::from("/data/sim.csv"));
        assert_eq!(f.column, "y");
        assert_eq!(f.bandwidth.rule(), BandwidthRule::Silverman);
        assert_eq!(cfg.out, PathBuf::from("/data/o.csv"));
    }

    #[test]
    fn bandwidth_accepts_rules_and_numbers() {
        let parse = |b: &str| {
            serde_json::from_str::<SampleFile>(&format!(r#"{{"file":"a.csv","bandwidth":{b}}}"#))
        };
        assert_eq!(
            parse(r#""first_derivative""#).unwrap().bandwidth.rule(),
            BandwidthRule::FirstDerivative
        );
        assert_eq!(
            parse("0.25").unwrap().bandwidth.rule(),
            BandwidthRule::Fixed(0.25)
        );
        assert!(parse(r#""scott""#).is_err());
    }

    #[test]
    fn unknown_fields_are_malformed() {
        let text = r#"{"command":"validate","suite":"table2","out":"r","colour":1}"#;
        assert!(RunConfig::parse(text, Path::new(".")).is_err());
    }

    #[test]
    fn grid_points_span_the_range() {
        let g = Grid {
            lo: -1.0,
            hi: 1.0,
            n: 5,
        };
        assert_eq!(g.points().unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(Grid {
            lo: 1.0,
            hi: 0.0,
            n: 2
        }
        .points()
        .is_err());
    }
}
