use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lattice::{AffineMap, BoxShape};
use crate::potential::{GrowthConstants, PatchKind, PotentialKind, PotentialSpec};

/// Declarative experiment description; a JSON file on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    pub potential: PotentialConfig,
    pub domain: DomainConfig,
    #[serde(default)]
    pub deformation: Option<DeformationConfig>,
    #[serde(default)]
    pub constraint: Option<ConstraintConfig>,
    #[serde(default)]
    pub budget: BudgetConfig,
    #[serde(default)]
    pub nonconvex: Option<NonconvexConfig>,
    #[serde(default)]
    pub tightness: Option<TightnessConfig>,
    #[serde(default)]
    pub ldp: Option<LdpConfig>,
    #[serde(default)]
    pub windows: Option<WindowsConfig>,
    #[serde(default)]
    pub split: Option<SplitConfig>,
}

fn default_output() -> String {
    "out".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FreeEnergy,
    Subadditivity,
    Tightness,
    Quasiconvexity,
    Nonconvex,
    Ldp,
    YoungGibbs,
    CheckConstants,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::FreeEnergy => "free-energy",
            ExperimentKind::Subadditivity => "subadditivity",
            ExperimentKind::Tightness => "tightness",
            ExperimentKind::Quasiconvexity => "quasiconvexity",
            ExperimentKind::Nonconvex => "nonconvex",
            ExperimentKind::Ldp => "ldp",
            ExperimentKind::YoungGibbs => "young-gibbs",
            ExperimentKind::CheckConstants => "check-constants",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: String,
    pub d: usize,
    pub m: usize,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub patch: Option<String>,
    /// override for the declared growth constants
    #[serde(default)]
    pub constants: Option<GrowthConstants>,
}

impl PotentialConfig {
    pub fn build(&self) -> Result<PotentialSpec> {
        let mut spec = match self.kind.as_str() {
            "gaussian_gradient" => PotentialSpec::gaussian(self.d, self.m),
            "p_power_gradient" => {
                let p = self.p.ok_or_else(|| Error::Config {
                    path: "potential.p".into(),
                    msg: "p_power_gradient needs the exponent p".into(),
                })?;
                PotentialSpec::p_power(self.d, self.m, p)
            }
            other => {
                return Err(Error::Config {
                    path: "potential.kind".into(),
                    msg: format!("unknown potential kind '{other}'"),
                })
            }
        };
        match self.patch.as_deref() {
            None | Some("full_cross") => {}
            Some("forward_bonds") => spec = spec.with_forward_patch(),
            Some(other) => {
                return Err(Error::Config {
                    path: "potential.patch".into(),
                    msg: format!("unknown patch '{other}'"),
                })
            }
        }
        if let Some(g) = self.constants {
            g.validate().map_err(|e| Error::Config {
                path: "potential.constants".into(),
                msg: e.to_string(),
            })?;
            spec.growth = g;
        }
        if spec.kind == PotentialKind::GaussianGradient && spec.patch == PatchKind::FullCross {
            // nothing to check; defaults are valid
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// per-axis `[lo, hi)` pairs
    pub shape: Vec<[f64; 2]>,
    pub eps_list: Vec<f64>,
}

impl DomainConfig {
    pub fn build_shape(&self) -> Result<BoxShape> {
        if self.shape.is_empty() || self.shape.len() > 2 {
            return Err(Error::Config {
                path: "domain.shape".into(),
                msg: "shape needs 1 or 2 axes".into(),
            });
        }
        for (k, ax) in self.shape.iter().enumerate() {
            if !(ax[1] > ax[0]) {
                return Err(Error::Config {
                    path: format!("domain.shape[{k}]"),
                    msg: "axis must have positive extent".into(),
                });
            }
        }
        Ok(BoxShape::new(
            self.shape.iter().map(|a| a[0]).collect(),
            self.shape.iter().map(|a| a[1]).collect(),
        ))
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_list.is_empty() {
            return Err(Error::Config {
                path: "domain.eps_list".into(),
                msg: "eps_list must not be empty".into(),
            });
        }
        for (i, w) in self.eps_list.windows(2).enumerate() {
            if w[1] >= w[0] {
                return Err(Error::Config {
                    path: format!("domain.eps_list[{}]", i + 1),
                    msg: "eps_list must be strictly decreasing".into(),
                });
            }
        }
        for (i, &e) in self.eps_list.iter().enumerate() {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::Config {
                    path: format!("domain.eps_list[{i}]"),
                    msg: format!("eps must lie in (0,1), got {e}"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationConfig {
    pub matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub offset: Option<Vec<f64>>,
}

impl DeformationConfig {
    pub fn build(&self, m: usize, d: usize) -> Result<AffineMap> {
        if self.matrix.len() != m || self.matrix.iter().any(|r| r.len() != d) {
            return Err(Error::Config {
                path: "deformation.matrix".into(),
                msg: format!("matrix must be {m} x {d}"),
            });
        }
        let flat: Vec<f64> = self.matrix.iter().flatten().copied().collect();
        let offset = self.offset.clone().unwrap_or_else(|| vec![0.0; m]);
        if offset.len() != m {
            return Err(Error::Config {
                path: "deformation.offset".into(),
                msg: format!("offset must have {m} entries"),
            });
        }
        Ok(AffineMap::new(m, d, flat, offset))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    /// any of: soft_clamp, lr_neighborhood, combined, periodic, hard_clamp
    pub formulations: Vec<String>,
    #[serde(default)]
    pub kappa_list: Vec<f64>,
    #[serde(default = "default_r")]
    pub r: f64,
}

fn default_r() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_path_points")]
    pub path_points: usize,
    #[serde(default = "default_ref_draws")]
    pub ref_draws: usize,
    #[serde(default = "default_chains")]
    pub chains: usize,
}

fn default_sweeps() -> usize {
    8_000
}
fn default_path_points() -> usize {
    8
}
fn default_ref_draws() -> usize {
    200_000
}
fn default_chains() -> usize {
    1
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            sweeps: default_sweeps(),
            path_points: default_path_points(),
            ref_draws: default_ref_draws(),
            chains: default_chains(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonconvexConfig {
    /// plaquette weight; defaults to the printed threshold plus ten
    #[serde(default)]
    pub m_weight: Option<f64>,
    #[serde(default)]
    pub scan_eps: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TightnessConfig {
    pub k_list: Vec<f64>,
    #[serde(default)]
    pub mc_eps: Option<f64>,
    #[serde(default = "default_mc_sweeps")]
    pub mc_sweeps: usize,
}

fn default_mc_sweeps() -> usize {
    20_000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpConfig {
    #[serde(default = "default_wedge_amp")]
    pub wedge_amp: f64,
    #[serde(default = "default_mesh")]
    pub mesh: usize,
    pub kappa_list: Vec<f64>,
}

fn default_wedge_amp() -> f64 {
    0.5
}
fn default_mesh() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowsConfig {
    pub centers: Vec<Vec<f64>>,
    #[serde(default = "default_side")]
    pub side: usize,
    #[serde(default = "default_dlr_sweeps")]
    pub dlr_inner_sweeps: usize,
}

fn default_side() -> usize {
    3
}
fn default_dlr_sweeps() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub axis: usize,
    pub cut: i64,
}

impl ExperimentConfig {
    /// Parse and validate; schema errors carry the field path.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_validated(&text)
    }

    pub fn from_str_validated(text: &str) -> Result<Self> {
        // two-stage parse so unknown-field and type errors carry a path
        let value: Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("config JSON: {e}")))?;
        let cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::Config {
                path: "<schema>".into(),
                msg: e.to_string(),
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.potential.build()?;
        self.domain.validate()?;
        let shape = self.domain.build_shape()?;
        if shape.dim() != spec.d {
            return Err(Error::Config {
                path: "domain.shape".into(),
                msg: format!(
                    "shape dimension {} does not match potential.d = {}",
                    shape.dim(),
                    spec.d
                ),
            });
        }
        if let Some(dl) = &self.deformation {
            dl.build(spec.m, spec.d)?;
        }
        if let Some(c) = &self.constraint {
            for f in &c.formulations {
                match f.as_str() {
                    "soft_clamp" | "lr_neighborhood" | "combined" | "periodic"
                    | "hard_clamp" => {}
                    other => {
                        return Err(Error::Config {
                            path: "constraint.formulations".into(),
                            msg: format!("unknown formulation '{other}'"),
                        })
                    }
                }
            }
            if c.formulations.iter().any(|f| f == "lr_neighborhood" || f == "combined")
                && c.kappa_list.is_empty()
            {
                return Err(Error::Config {
                    path: "constraint.kappa_list".into(),
                    msg: "lr formulations need a kappa_list".into(),
                });
            }
            if c.r < 1.0 {
                return Err(Error::Config {
                    path: "constraint.r".into(),
                    msg: "r must be >= 1".into(),
                });
            }
        }
        match self.experiment {
            ExperimentKind::Tightness if self.tightness.is_none() => Err(Error::Config {
                path: "tightness".into(),
                msg: "tightness experiment needs a tightness block".into(),
            }),
            ExperimentKind::Ldp if self.ldp.is_none() => Err(Error::Config {
                path: "ldp".into(),
                msg: "ldp experiment needs an ldp block".into(),
            }),
            ExperimentKind::YoungGibbs if self.windows.is_none() => Err(Error::Config {
                path: "windows".into(),
                msg: "young-gibbs experiment needs a windows block".into(),
            }),
            _ => Ok(()),
        }
    }

    /// Canonical content hash over the JSON value (key order is sorted by
    /// the default map), used for idempotence keys.
    pub fn content_hash(&self) -> u64 {
        let canon = serde_json::to_string(self).expect("config serializes");
        crate::numeric::fnv1a64(canon.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
        "experiment": "free-energy",
        "seed": 7,
        "potential": {"kind": "gaussian_gradient", "d": 2, "m": 2},
        "domain": {"shape": [[0.0, 1.0], [0.0, 1.0]], "eps_list": [0.25, 0.125]},
        "deformation": {"matrix": [[1.0, 0.0], [0.0, 1.0]]},
        "constraint": {"formulations": ["soft_clamp", "periodic"], "kappa_list": [0.5]}
    }"#;

    #[test]
    fn parses_valid_config() {
        let cfg = ExperimentConfig::from_str_validated(GOOD).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::FreeEnergy);
        assert_eq!(cfg.potential.build().unwrap().m, 2);
        assert_eq!(cfg.content_hash(), cfg.content_hash());
    }

    #[test]
    fn missing_potential_is_schema_error() {
        let text = r#"{"experiment": "free-energy", "seed": 1,
            "domain": {"shape": [[0.0, 1.0]], "eps_list": [0.5]}}"#;
        let err = ExperimentConfig::from_str_validated(text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("potential"), "{err}");
    }

    #[test]
    fn unknown_kind_is_config_error_with_path() {
        let text = GOOD.replace("gaussian_gradient", "lennard_jones");
        let err = ExperimentConfig::from_str_validated(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("potential.kind"), "{err}");
    }

    #[test]
    fn increasing_eps_list_rejected() {
        let text = GOOD.replace("[0.25, 0.125]", "[0.125, 0.25]");
        let err = ExperimentConfig::from_str_validated(&text).unwrap_err();
        assert!(err.to_string().contains("eps_list"), "{err}");
    }
}
