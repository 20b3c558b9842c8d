//! Settings resolution: preset defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use graphodex_core::aggregate::Method;
use graphodex_core::experiments::{Protocol, TestSelection};
use graphodex_core::model::{ArchConfig, Hyper};
use graphodex_core::patching::{PatchShape, PatchSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 200 patches of 400×400 at factor 4, conv 64/128/64/128, dense 128.
    #[default]
    Paper,
    /// 32 patches of 64×64 at factor 4, conv 8/16/8/16, dense 32, 10 epochs.
    Synthetic,
}

impl Preset {
    pub fn protocol(self) -> Protocol {
        match self {
            Preset::Paper => Protocol::default(),
            Preset::Synthetic => {
                let spec = PatchSpec {
                    count: 32,
                    height: 64,
                    width: 64,
                    downscale_factor: 4,
                    ..PatchSpec::default()
                };
                let (h, w) = spec.output_dims();
                Protocol {
                    arch: ArchConfig {
                        conv_filters: vec![8, 16, 8, 16],
                        dense_units: 32,
                        ..ArchConfig::default()
                    }
                    .with_input(h, w),
                    hyper: Hyper {
                        epochs: 10,
                        batch_size: 8,
                        ..Hyper::default()
                    },
                    spec,
                    ..Protocol::default()
                }
            }
        }
    }
}

fn parse_shape(s: &str) -> std::result::Result<PatchShape, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "square" => Ok(PatchShape::Square),
        "rectangle" => Ok(PatchShape::Rectangle),
        other => Err(format!("unknown patch shape {other:?} (square or rectangle)")),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecOverrides {
    /// Patches kept per form.
    #[arg(long = "spec.count", global = true)]
    pub count: Option<usize>,
    /// Source patch height in pixels.
    #[arg(long = "spec.height", global = true)]
    pub height: Option<usize>,
    /// Source patch width in pixels.
    #[arg(long = "spec.width", global = true)]
    pub width: Option<usize>,
    #[arg(long = "spec.downscale-factor", global = true)]
    pub downscale_factor: Option<usize>,
    #[arg(long = "spec.shape", global = true, value_parser = parse_shape)]
    pub shape: Option<PatchShape>,
    #[arg(long = "spec.min-ink-ratio", global = true)]
    pub min_ink_ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    #[arg(long = "hyper.epochs", global = true)]
    pub epochs: Option<usize>,
    #[arg(long = "hyper.batch-size", global = true)]
    pub batch_size: Option<usize>,
    #[arg(long = "hyper.rho", global = true)]
    pub rho: Option<f64>,
    #[arg(long = "hyper.epsilon", global = true)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchOverrides {
    /// Comma-separated filter counts of the four conv layers.
    #[arg(long = "arch.conv-filters", global = true, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv_filters: Option<Vec<usize>>,
    #[arg(long = "arch.dense-units", global = true)]
    pub dense_units: Option<usize>,
    /// Comma-separated dropout rates: one per pooling stage, then dense.
    #[arg(long = "arch.dropouts", global = true, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropouts: Option<Vec<f64>>,
}

/// Settings shared by every subcommand. Each one may come from the config
/// file; flags win.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Defaults to start from.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Global seed [default: 42].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// same-writers or test-partition.
    #[arg(long, global = true, value_parser = TestSelection::from_str)]
    pub test_selection: Option<TestSelection>,
    #[arg(long, global = true)]
    pub crop_margin: Option<usize>,
    /// majority_vote or average_softmax; both when absent.
    #[arg(long, global = true, value_parser = Method::from_str)]
    pub method: Option<Method>,
    /// Listen address for `serve` [default: 127.0.0.1:8080].
    #[arg(long, global = true)]
    pub addr: Option<String>,
    #[command(flatten)]
    #[serde(default)]
    pub spec: SpecOverrides,
    #[command(flatten)]
    #[serde(default)]
    pub hyper: HyperOverrides,
    #[command(flatten)]
    #[serde(default)]
    pub arch: ArchOverrides,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),+) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )+
    };
}

/// Assigns `Some` fields of `$src` to the plain fields of `$dst`.
macro_rules! set {
    ($dst:expr, $src:expr, $($f:ident),+) => {
        $( if let Some(v) = &$src.$f { $dst.$f = v.clone(); } )+
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// `self` with every field set in `top` replaced.
    pub fn overlaid(mut self, top: &Settings) -> Settings {
        overlay!(self, top, preset, manifest, out, seed, folds, test_selection, crop_margin, method, addr);
        overlay!(self.spec, top.spec, count, height, width, downscale_factor, shape, min_ink_ratio);
        overlay!(self.hyper, top.hyper, epochs, batch_size, rho, epsilon);
        overlay!(self.arch, top.arch, conv_filters, dense_units, dropouts);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }

    /// The experiment protocol; the network input follows the patch size.
    pub fn protocol(&self) -> Result<Protocol> {
        let mut p = self.preset.unwrap_or_default().protocol();
        p.seed = self.seed();
        p.hyper.seed = p.seed;
        set!(p, self, folds, test_selection, crop_margin);
        set!(p.spec, self.spec, count, height, width, downscale_factor, shape, min_ink_ratio);
        set!(p.hyper, self.hyper, epochs, batch_size);
        if let Some(v) = self.hyper.rho {
            p.hyper.optimizer.rho = v;
        }
        if let Some(v) = self.hyper.epsilon {
            p.hyper.optimizer.epsilon = v;
        }
        set!(p.arch, self.arch, conv_filters, dense_units, dropouts);
        if p.spec.downscale_factor > 0 {
            let (oh, ow) = p.spec.output_dims();
            p.arch = p.arch.with_input(oh, ow);
        }
        p.validate().map_err(CliError::from)?;
        Ok(p)
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| CliError::Usage("--manifest is required".into()))
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| CliError::Usage("--out is required".into()))
    }

    pub fn methods(&self) -> Vec<Method> {
        match self.method {
            Some(m) => vec![m],
            None => Method::ALL.to_vec(),
        }
    }
}
