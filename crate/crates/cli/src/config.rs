//! Flag resolution: command-line flag, then `--config` TOML, then default.

use std::path::{Path, PathBuf};

use deductive_core::engine::DEFAULT_EPSILON;
use deductive_core::sim::GenerativeModel;
use deductive_core::Variant;
use serde::{Deserialize, Serialize};

use crate::args::{EstimateArgs, Method, SimulateArgs};
use crate::error::CliError;

/// Keys accepted in a config file; one flat table shared by all commands.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub z_cols: Option<Vec<String>>,
    pub w_cols: Option<Vec<String>>,
    pub variant: Option<String>,
    pub t: Option<Vec<f64>>,
    pub t_grid: Option<String>,
    pub epsilon: Option<f64>,
    pub alpha_zero: Option<bool>,
    pub wrong_s: Option<bool>,
    pub w_in_observed: Option<bool>,
    pub gamma: Option<f64>,
    pub gamma_col: Option<String>,
    pub estimator: Option<Method>,
    pub n_boot: Option<usize>,
    pub seed: Option<u64>,
    pub gm: Option<Vec<u8>>,
    pub n: Option<Vec<usize>>,
    pub reps: Option<usize>,
    pub estimators: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateConfig {
    pub data: PathBuf,
    pub z_cols: Vec<String>,
    pub w_cols: Vec<String>,
    pub variant: Variant,
    pub t: Vec<f64>,
    pub epsilon: f64,
    pub alpha_zero: bool,
    pub wrong_s: bool,
    pub w_in_observed: bool,
    pub gamma: Option<f64>,
    pub gamma_col: Option<String>,
    pub estimator: Method,
    pub n_boot: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
}

/// Parses `a:b:step` into `a, a + step, ...` up to `b` inclusive.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::usage(format!("--t-grid expects a:b:step, got '{spec}'"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [a, b, step] = parts[..] else {
        return Err(bad());
    };
    if step.is_nan() || step <= 0.0 || b < a || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    let k = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=k).map(|i| a + i as f64 * step).collect())
}

fn sidecar_for(out: &Option<PathBuf>, explicit: Option<PathBuf>) -> Option<PathBuf> {
    explicit.or_else(|| {
        out.as_ref().map(|o| {
            let mut s = o.clone().into_os_string();
            s.push(".json");
            PathBuf::from(s)
        })
    })
}

impl EstimateConfig {
    pub fn resolve(args: EstimateArgs) -> Result<Self, CliError> {
        let file = FileConfig::load(args.config.as_deref())?;
        let data = args
            .data
            .or(file.data)
            .ok_or_else(|| CliError::usage("--data is required"))?;
        let variant_name = args.variant.or(file.variant).unwrap_or_else(|| "cox".into());
        let variant: Variant = variant_name.parse().map_err(CliError::usage)?;
        let t = match (args.t, args.t_grid) {
            (Some(t), _) => t,
            (None, Some(g)) => parse_grid(&g)?,
            (None, None) => match (file.t, file.t_grid) {
                (Some(t), _) => t,
                (None, Some(g)) => parse_grid(&g)?,
                (None, None) => return Err(CliError::usage("one of --t or --t-grid is required")),
            },
        };
        if t.is_empty() || t.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(CliError::usage("time points must be finite and nonnegative"));
        }
        let epsilon = args.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON);
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(CliError::usage(format!("--epsilon must lie in (0, 1), got {epsilon}")));
        }
        let gamma = args.gamma.or(file.gamma);
        if let Some(g) = gamma {
            if g.is_nan() || g <= 0.0 {
                return Err(CliError::usage(format!("--gamma must be positive, got {g}")));
            }
        }
        let out = args.out.or(file.out);
        let sidecar = sidecar_for(&out, args.sidecar.or(file.sidecar));
        Ok(Self {
            data,
            z_cols: args.z_cols.or(file.z_cols).unwrap_or_default(),
            w_cols: args.w_cols.or(file.w_cols).unwrap_or_default(),
            variant,
            t,
            epsilon,
            alpha_zero: args.alpha_zero || file.alpha_zero.unwrap_or(false),
            wrong_s: args.wrong_s || file.wrong_s.unwrap_or(false),
            w_in_observed: args.w_in_observed || file.w_in_observed.unwrap_or(false),
            gamma,
            gamma_col: args.gamma_col.or(file.gamma_col),
            estimator: args.estimator.or(file.estimator).unwrap_or(Method::De),
            n_boot: args.n_boot.or(file.n_boot).unwrap_or(deductive_core::baseline::DEFAULT_BOOTSTRAP),
            seed: args.seed.or(file.seed).unwrap_or(1),
            out,
            sidecar,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateConfig {
    pub gm: Vec<GenerativeModel>,
    pub n: Vec<usize>,
    pub reps: usize,
    pub estimators: Vec<String>,
    pub seed: u64,
    pub t: f64,
    pub epsilon: f64,
    pub n_boot: usize,
    pub out: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
}

impl SimulateConfig {
    pub fn resolve(args: SimulateArgs) -> Result<Self, CliError> {
        let file = FileConfig::load(args.config.as_deref())?;
        let gm = args
            .gm
            .or(file.gm)
            .unwrap_or_else(|| vec![1, 2])
            .into_iter()
            .map(|k| GenerativeModel::from_number(k).ok_or_else(|| CliError::usage(format!("--gm must be 1 or 2, got {k}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let n = args.n.or(file.n).unwrap_or_else(|| vec![200]);
        if n.is_empty() || n.contains(&0) {
            return Err(CliError::usage("--n values must be positive"));
        }
        let reps = args.reps.or(file.reps).unwrap_or(1000);
        if reps == 0 {
            return Err(CliError::usage("--reps must be at least 1"));
        }
        let estimators = args
            .estimators
            .or(file.estimators)
            .unwrap_or_else(|| ["de-cox", "de-ln", "km-s", "km-c"].map(String::from).to_vec());
        let epsilon = args.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON);
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(CliError::usage(format!("--epsilon must lie in (0, 1), got {epsilon}")));
        }
        let t = args
            .t
            .or_else(|| file.t.as_ref().and_then(|v| v.first().copied()))
            .unwrap_or(deductive_core::sim::gm::DEFAULT_T);
        if t < 0.0 || !t.is_finite() {
            return Err(CliError::usage(format!("--t must be nonnegative, got {t}")));
        }
        let out = args.out.or(file.out);
        let sidecar = sidecar_for(&out, args.sidecar.or(file.sidecar));
        Ok(Self {
            gm,
            n,
            reps,
            estimators,
            seed: args.seed.or(file.seed).unwrap_or(1),
            t,
            epsilon,
            n_boot: args.n_boot.or(file.n_boot).unwrap_or(deductive_core::baseline::DEFAULT_BOOTSTRAP),
            out,
            sidecar,
        })
    }
}
