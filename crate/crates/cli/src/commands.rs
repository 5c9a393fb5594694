use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use deductive_core::baseline::{km_complete_case, km_stratified};
use deductive_core::data::{write_csv, ColumnSpec};
use deductive_core::engine::SolverDiagnostics;
use deductive_core::sim::harness::write_rows;
use deductive_core::sim::pepfar::{cohort_columns, default_cohort};
use deductive_core::sim::{
    apply_gamma_restriction, descriptive_stats, generate as generate_data, run_replicates, true_tau, EstimatorKind, GenerativeModel,
    HarnessConfig, SimulationRow,
};
use deductive_core::{build_support, parse_csv, DeductiveEstimator, EstimatorConfig, FitOptions, SelectionFormula};
use log::{error, info, warn};
use serde::Serialize;
use serde_json::json;

use crate::args::{DescribeArgs, EstimateArgs, GenerateArgs, Method, SimulateArgs};
use crate::config::{EstimateConfig, SimulateConfig};
use crate::error::CliError;

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::stage("output", format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::stage("output", format!("{}: {e}", path.display())))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| CliError::stage("output", e))
}

fn run_metadata(command: &str) -> serde_json::Value {
    json!({
        "tool": "deduct",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "argv": std::env::args().collect::<Vec<_>>(),
    })
}

#[derive(Debug, Serialize)]
struct EstimateRow {
    t: f64,
    tau: Option<f64>,
    mortality: Option<f64>,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    alpha_hat: Option<f64>,
    se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolverDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl EstimateRow {
    fn failed(t: f64, err: String) -> Self {
        Self {
            t,
            tau: None,
            mortality: None,
            ci_lo: None,
            ci_hi: None,
            alpha_hat: None,
            se: None,
            solver: None,
            error: Some(err),
        }
    }

    /// Mortality scale: the interval flips.
    fn from_tau(t: f64, tau: f64, lo: f64, hi: f64, se: f64, alpha: Option<f64>) -> Self {
        Self {
            t,
            tau: Some(tau),
            mortality: Some(1.0 - tau),
            ci_lo: Some(1.0 - hi),
            ci_hi: Some(1.0 - lo),
            alpha_hat: alpha,
            se: Some(se),
            solver: None,
            error: None,
        }
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(
        || "NA".to_string(),
        |x| {
            let s = format!("{x:.6}");
            if s == "-0.000000" {
                "0.000000".into()
            } else {
                s
            }
        },
    )
}

pub fn estimate(mut args: EstimateArgs) -> Result<(), CliError> {
    let dump_support = args.dump_support.take();
    let dump_fits = args.dump_fits.take();
    let cfg = EstimateConfig::resolve(args)?;

    let spec = ColumnSpec {
        z: cfg.z_cols.clone(),
        w: cfg.w_cols.clone(),
        ..ColumnSpec::default()
    };
    let mut data = parse_csv(&cfg.data, &spec).map_err(|e| CliError::stage("ingest", format!("{}: {e}", cfg.data.display())))?;
    info!("loaded {}", deductive_core::data::describe_counts(&data));

    if let Some(gamma) = cfg.gamma {
        let l_index = match &cfg.gamma_col {
            Some(name) => cfg
                .w_cols
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| CliError::usage(format!("--gamma-col '{name}' is not among --w-cols")))?,
            None => 0,
        };
        let before = data.m1();
        data = apply_gamma_restriction(&data, gamma, l_index).map_err(|e| CliError::stage("gamma", e))?;
        info!("gamma={gamma}: double-samples {before} -> {}", data.m1());
    }

    let support = build_support(&data);
    if let Some(path) = &dump_support {
        let file = File::create(path).map_err(|e| CliError::stage("support", format!("{}: {e}", path.display())))?;
        support.dump_csv(BufWriter::new(file)).map_err(|e| CliError::stage("support", e))?;
    }

    let rows: Vec<EstimateRow> = match cfg.estimator {
        Method::De => {
            let config = EstimatorConfig {
                fit: FitOptions {
                    variant: cfg.variant,
                    selection: if cfg.wrong_s {
                        SelectionFormula::InterceptOnly
                    } else {
                        SelectionFormula::Full
                    },
                    w_in_observed: cfg.w_in_observed,
                },
                epsilon: cfg.epsilon,
                alpha_zero: cfg.alpha_zero,
            };
            let est = DeductiveEstimator::new(&data, &support, config).map_err(|e| CliError::stage("fit", e))?;
            if let Some(path) = &dump_fits {
                write_json(path, &est.fit().summary())?;
            }
            cfg.t
                .iter()
                .map(|&t| match est.estimate(t) {
                    Ok(r) => {
                        let mut row = EstimateRow::from_tau(t, r.tau_hat, r.ci_lo, r.ci_hi, r.se, Some(r.alpha_hat));
                        row.solver = Some(r.solver);
                        row
                    }
                    Err(e) => EstimateRow::failed(t, e.to_string()),
                })
                .collect()
        }
        method => {
            if dump_fits.is_some() {
                warn!("--dump-fits has no effect with the Kaplan-Meier estimators");
            }
            cfg.t
                .iter()
                .map(|&t| {
                    let r = if method == Method::KmC {
                        km_complete_case(&data, t)
                    } else {
                        km_stratified(&data, t, cfg.n_boot, cfg.seed)
                    };
                    match r {
                        Ok(r) => EstimateRow::from_tau(t, r.estimate, r.ci_lo, r.ci_hi, r.se, None),
                        Err(e) => EstimateRow::failed(t, e.to_string()),
                    }
                })
                .collect()
        }
    };

    let mut out = open_output(cfg.out.as_deref())?;
    let mut wtr = csv::Writer::from_writer(&mut out);
    let io_err = |e: csv::Error| CliError::stage("output", e);
    wtr.write_record(["t", "mortality", "ci_lo", "ci_hi", "alpha_hat", "se"]).map_err(io_err)?;
    for r in &rows {
        wtr.write_record([format!("{}", r.t), fmt(r.mortality), fmt(r.ci_lo), fmt(r.ci_hi), fmt(r.alpha_hat), fmt(r.se)])
            .map_err(io_err)?;
    }
    wtr.flush().map_err(|e| CliError::stage("output", e))?;
    drop(wtr);
    out.flush().map_err(|e| CliError::stage("output", e))?;

    let failures: Vec<&EstimateRow> = rows.iter().filter(|r| r.error.is_some()).collect();
    for r in &failures {
        error!("t={}: {}", r.t, r.error.as_deref().unwrap_or_default());
    }
    if let Some(path) = &cfg.sidecar {
        let mut meta = run_metadata("estimate");
        meta["seed"] = json!(cfg.seed);
        meta["config"] = json!(cfg);
        meta["data"] = json!({
            "n": data.n(),
            "dropouts": data.m(),
            "double_sampled": data.m1(),
            "support_size": support.len(),
        });
        meta["results"] = json!(rows);
        write_json(path, &meta)?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::stage("estimate", format!("{} of {} time points failed", failures.len(), rows.len())))
    }
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = SimulateConfig::resolve(args)?;
    let kinds = cfg
        .estimators
        .iter()
        .map(|s| s.parse::<EstimatorKind>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::usage)?;
    let harness = HarnessConfig {
        t: cfg.t,
        epsilon: cfg.epsilon,
        n_boot: cfg.n_boot,
    };
    let mut rows = Vec::new();
    for &gm in &cfg.gm {
        for &n in &cfg.n {
            info!("{gm} n={n}: {} replicates", cfg.reps);
            for s in run_replicates(gm, n, &kinds, cfg.reps, cfg.seed, &harness) {
                rows.push(SimulationRow::new(gm, n, &s));
            }
        }
    }
    let out = open_output(cfg.out.as_deref())?;
    write_rows(&rows, out).map_err(|e| CliError::stage("output", e))?;
    if let Some(path) = &cfg.sidecar {
        let mut meta = run_metadata("simulate");
        meta["seed"] = json!(cfg.seed);
        meta["config"] = json!(cfg);
        meta["truth"] = json!(cfg
            .gm
            .iter()
            .map(|&gm| (gm.to_string(), true_tau(gm, cfg.t)))
            .collect::<std::collections::BTreeMap<_, _>>());
        meta["results"] = json!(rows);
        write_json(path, &meta)?;
    }
    Ok(())
}

pub fn describe(args: DescribeArgs) -> Result<(), CliError> {
    if args.n_mc < 2 {
        return Err(CliError::usage("--n-mc must be at least 2"));
    }
    let mut out = open_output(args.out.as_deref())?;
    let mut wtr = csv::Writer::from_writer(&mut out);
    let io_err = |e: csv::Error| CliError::stage("output", e);
    wtr.write_record([
        "gm",
        "n",
        "tau",
        "tau_exact",
        "p_robs0",
        "p_s1_given_robs0",
        "selection_p10",
        "selection_p90",
        "p_delta1",
        "x_p10",
        "x_p90",
        "pcorr_t_c_given_z_robs",
        "pcorr_t_c_given_z_l_dropout",
    ])
    .map_err(io_err)?;
    for k in args.gm {
        let gm = GenerativeModel::from_number(k).ok_or_else(|| CliError::usage(format!("--gm must be 1 or 2, got {k}")))?;
        let r = descriptive_stats(gm, args.n_mc, args.seed);
        let cells = [
            r.tau,
            true_tau(gm, deductive_core::sim::gm::DEFAULT_T),
            r.p_robs0,
            r.p_s1_given_robs0,
            r.selection_deciles.0,
            r.selection_deciles.1,
            r.p_delta1,
            r.x_deciles.0,
            r.x_deciles.1,
            r.pcorr_t_c_given_z_robs,
            r.pcorr_t_c_given_z_l_dropout,
        ];
        let mut record = vec![r.gm.to_string(), r.n.to_string()];
        record.extend(cells.iter().map(|v| format!("{v:.4}")));
        wtr.write_record(&record).map_err(io_err)?;
    }
    wtr.flush().map_err(|e| CliError::stage("output", e))?;
    Ok(())
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let (data, spec) = if args.cohort {
        (default_cohort(), cohort_columns())
    } else {
        let k = args.gm.expect("clap requires --gm without --cohort");
        let gm = GenerativeModel::from_number(k).ok_or_else(|| CliError::usage(format!("--gm must be 1 or 2, got {k}")))?;
        if args.n == 0 {
            return Err(CliError::usage("--n must be positive"));
        }
        (generate_data(gm, args.n, args.seed, args.stream), ColumnSpec::with_covariates(&["z"], &["l"]))
    };
    let out = open_output(args.out.as_deref())?;
    write_csv(&data, &spec, out).map_err(|e| CliError::stage("output", e))
}

