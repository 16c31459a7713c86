//! Command-line front end: config ingestion, experiment orchestration and
//! report/CSV emission.
//!
//! Usage: `finslerkit <command> --config <path> [--out <dir>] [--seed <int>]`
//!
//! Commands: `validate-norm`, `smooth`, `check-hilbert`, `quotient`.
//!
//! Exit codes are a stable contract: 0 pass, 1 substantive negative
//! verdict, 2 usage/config error, 3 inconclusive. All randomness is seeded
//! from the config (or the `--seed` override), so identical inputs produce
//! byte-identical outputs. Files are written atomically (temp + rename).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use finsler_core::manifold::{ManifoldSpec, MetricField, NormField};
use finsler_core::metricgraph::{sample_manifold, ClosedForm, MeasureSpec, ScalarField};
use finsler_core::minkowski::{validate_minkowski, MinkowskiNorm};
use finsler_core::quotient::{batch_csv, random_instance, run_instance, BatchRow, QuotientInstance};
use finsler_core::smoothing::smooth_approximate;
use finsler_core::sobolev::{hilbertianity_check, HilbertParams, Verdict, WugParams};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

// ---------------------------------------------------------------------------
// Config schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub norms: BTreeMap<String, MinkowskiNorm>,
    pub manifold: Option<ManifoldConfig>,
    pub measure: Option<MeasureSpec>,
    pub field: Option<ClosedForm>,
    pub field_g: Option<ClosedForm>,
    #[serde(default)]
    pub params: Params,
    pub instances: Option<InstancesConfig>,
}

/// Manifold description referencing norm specs by name.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldConfig {
    Euclidean {
        dim: usize,
        norm: String,
        extent: Vec<[f64; 2]>,
    },
    Sphere2 {
        radius: f64,
    },
    FlatTorus2 {
        periods: [f64; 2],
        metric: MetricField,
    },
    FinslerPlane {
        base: f64,
        amplitude: f64,
        extent: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct Params {
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    /// Ladder for the upper-gradient surrogate.
    pub epsilon0: Option<f64>,
    pub lambda0: Option<f64>,
    pub rungs: Option<usize>,
    pub tol_h: Option<f64>,
    pub tol_nh: Option<f64>,
    /// Norm name for validate-norm.
    pub norm: Option<String>,
    pub samples: Option<usize>,
    /// Pass threshold on the lipₐ audit (fraction of resolvable samples).
    pub lipa_pass_threshold: Option<f64>,
    /// Isometry-gap tolerance for quotient batches.
    pub gap_tol: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstancesConfig {
    Random { count: usize, seed: u64 },
    List { items: Vec<InstanceItem> },
}

#[derive(Debug, Clone, Deserialize)]
pub struct InstanceItem {
    pub norm: String,
    pub k_basis: Vec<Vec<f64>>,
    pub omega: Vec<f64>,
    pub v: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

pub struct CliError {
    pub code: i32,
    pub message: String,
}

fn usage_err(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_USAGE,
        message: msg.into(),
    }
}

fn run_err(msg: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_FAIL,
        message: msg.into(),
    }
}

type CliResult = std::result::Result<i32, CliError>;

/// Write a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp-partial");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

fn resolve_norm(config: &RunConfig, name: &str) -> std::result::Result<MinkowskiNorm, CliError> {
    config.norms.get(name).cloned().ok_or_else(|| {
        usage_err(format!(
            "norm spec '{name}' is not defined in the config's 'norms' table"
        ))
    })
}

fn resolve_manifold(config: &RunConfig) -> std::result::Result<ManifoldSpec, CliError> {
    let mc = config
        .manifold
        .as_ref()
        .ok_or_else(|| usage_err("config is missing the 'manifold' section"))?;
    Ok(match mc {
        ManifoldConfig::Euclidean { dim, norm, extent } => {
            let norm = resolve_norm(config, norm)?;
            if norm.dim != *dim || extent.len() != *dim {
                return Err(usage_err(format!(
                    "euclidean manifold dim {dim} does not match norm dim {} / extent {}",
                    norm.dim,
                    extent.len()
                )));
            }
            ManifoldSpec::euclidean_box(norm, extent.clone())
        }
        ManifoldConfig::Sphere2 { radius } => ManifoldSpec::sphere2(*radius),
        ManifoldConfig::FlatTorus2 { periods, metric } => {
            ManifoldSpec::flat_torus2(*periods, metric.clone())
        }
        ManifoldConfig::FinslerPlane {
            base,
            amplitude,
            extent,
        } => ManifoldSpec::finsler_plane(
            NormField::BlendWave {
                base: *base,
                amplitude: *amplitude,
            },
            extent.clone(),
        ),
    })
}

fn effective_seed(config: &RunConfig, cli_seed: Option<u64>) -> u64 {
    cli_seed.or(config.params.seed).unwrap_or(0)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// Validate a named norm; writes the convexity report and exits 0 iff it
/// passed.
pub fn cmd_validate_norm(config: &RunConfig, out: &Path, cli_seed: Option<u64>) -> CliResult {
    let name = config
        .params
        .norm
        .as_ref()
        .ok_or_else(|| usage_err("validate-norm needs params.norm naming the norm spec"))?;
    let norm = resolve_norm(config, name)?;
    let samples = config.params.samples.unwrap_or(10_000);
    let seed = effective_seed(config, cli_seed);
    let report = validate_minkowski(&norm, samples, seed);
    let body = serde_json::to_string_pretty(&report)
        .map_err(|e| run_err(format!("serialization failed: {e}")))?;
    write_atomic(&out.join("validate_norm_report.json"), &body)
        .map_err(|e| run_err(format!("write failed: {e}")))?;
    Ok(if report.passed { EXIT_PASS } else { EXIT_FAIL })
}

/// Run the smoothing construction and audit; exit 0 iff the sup-error bound
/// holds everywhere, support containment is exact, and the lipₐ bound holds
/// on at least the configured fraction of resolvable samples.
pub fn cmd_smooth(config: &RunConfig, out: &Path, cli_seed: Option<u64>) -> CliResult {
    let spec = resolve_manifold(config)?;
    let field = config
        .field
        .as_ref()
        .ok_or_else(|| usage_err("config is missing the 'field' section"))?;
    let p = &config.params;
    let (delta, epsilon, lambda) = (
        p.delta.unwrap_or(0.2),
        p.epsilon.unwrap_or(0.05),
        p.lambda.unwrap_or(0.1),
    );
    if delta <= 0.0 || epsilon <= 0.0 || lambda <= 0.0 {
        return Err(usage_err(format!(
            "smoothing parameters must be positive: delta={delta} epsilon={epsilon} lambda={lambda}"
        )));
    }
    let n = p.n.unwrap_or(5000);
    let k = p.k.unwrap_or(12);
    let seed = effective_seed(config, cli_seed);
    let measure = config.measure.clone().unwrap_or(MeasureSpec::Uniform);
    let g = sample_manifold(&spec, n, &measure, k, seed)
        .map_err(|e| run_err(format!("sampling failed: {e}")))?;
    let f = ScalarField::from_closed(&g, field.clone());
    let outp = smooth_approximate(&g, &f, delta, epsilon, lambda, seed)
        .map_err(|e| run_err(format!("smoothing failed: {e}")))?;
    write_atomic(&out.join("smoothing_report.csv"), &outp.report.to_csv())
        .map_err(|e| run_err(format!("write failed: {e}")))?;
    let threshold = p.lipa_pass_threshold.unwrap_or(0.99);
    let ok = outp.report.sup_bound_ok
        && outp.report.support_all_ok
        && outp.report.lipa_pass_fraction >= threshold;
    Ok(if ok { EXIT_PASS } else { EXIT_FAIL })
}

/// Parallelogram-defect check of the upper-gradient surrogate. Exit 0 for
/// hilbertian-within-tolerance, 1 for non-hilbertian, 3 for inconclusive.
pub fn cmd_check_hilbert(config: &RunConfig, out: &Path, cli_seed: Option<u64>) -> CliResult {
    let spec = resolve_manifold(config)?;
    let form_f = config
        .field
        .as_ref()
        .ok_or_else(|| usage_err("config is missing the 'field' section"))?;
    let form_g = config
        .field_g
        .as_ref()
        .ok_or_else(|| usage_err("config is missing the 'field_g' section"))?;
    let p = &config.params;
    let n = p.n.unwrap_or(3000);
    let k = p.k.unwrap_or(12);
    let seed = effective_seed(config, cli_seed);
    let measure = config.measure.clone().unwrap_or(MeasureSpec::Uniform);
    let g = sample_manifold(&spec, n, &measure, k, seed)
        .map_err(|e| run_err(format!("sampling failed: {e}")))?;
    let f = ScalarField::from_closed(&g, form_f.clone());
    let h = ScalarField::from_closed(&g, form_g.clone());
    let wug = WugParams {
        delta: p.delta.unwrap_or(0.4),
        epsilon0: p.epsilon0.unwrap_or(0.3),
        lambda0: p.lambda0.unwrap_or(0.4),
        rungs: p.rungs.unwrap_or(3),
        seed,
    };
    if wug.delta <= 0.0 || wug.epsilon0 <= 0.0 || wug.lambda0 <= 0.0 {
        return Err(usage_err("ladder parameters must be positive"));
    }
    let mut hp = HilbertParams::with_defaults(wug);
    if let Some(t) = p.tol_h {
        hp.tol_h = t;
    }
    if let Some(t) = p.tol_nh {
        hp.tol_nh = t;
    }
    let report = hilbertianity_check(&g, &f, &h, &hp)
        .map_err(|e| run_err(format!("hilbertianity check failed: {e}")))?;
    write_atomic(&out.join("hilbert_defects.csv"), &report.to_csv(&g.measure))
        .map_err(|e| run_err(format!("write failed: {e}")))?;
    let summary = serde_json::to_string_pretty(&report)
        .map_err(|e| run_err(format!("serialization failed: {e}")))?;
    write_atomic(&out.join("hilbert_report.json"), &summary)
        .map_err(|e| run_err(format!("write failed: {e}")))?;
    Ok(match report.verdict {
        Verdict::HilbertianWithinTol => EXIT_PASS,
        Verdict::NonHilbertian => EXIT_FAIL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

/// Batch quotient/isometry runs; exit 0 iff every instance certifies and
/// the isometry gaps stay within tolerance.
pub fn cmd_quotient(config: &RunConfig, out: &Path, cli_seed: Option<u64>) -> CliResult {
    let instances = config
        .instances
        .as_ref()
        .ok_or_else(|| usage_err("config is missing the 'instances' section"))?;
    let gap_tol = config.params.gap_tol.unwrap_or(1e-6);
    let mut rows: Vec<BatchRow> = Vec::new();
    match instances {
        InstancesConfig::Random { count, seed } => {
            let seed = cli_seed.unwrap_or(*seed);
            for idx in 0..*count {
                let (inst, omega, v) = random_instance(seed, idx);
                let row = run_instance(idx, &inst, &omega, &v)
                    .map_err(|e| run_err(format!("instance {idx} failed: {e}")))?;
                rows.push(row);
            }
        }
        InstancesConfig::List { items } => {
            for (idx, item) in items.iter().enumerate() {
                let norm = resolve_norm(config, &item.norm)?;
                let inst = QuotientInstance::new(norm, item.k_basis.clone())
                    .map_err(|e| usage_err(format!("instance {idx} invalid: {e}")))?;
                let row = run_instance(idx, &inst, &item.omega, &item.v)
                    .map_err(|e| run_err(format!("instance {idx} failed: {e}")))?;
                rows.push(row);
            }
        }
    }
    write_atomic(&out.join("quotient_batch.csv"), &batch_csv(&rows))
        .map_err(|e| run_err(format!("write failed: {e}")))?;
    let ok = rows.iter().all(|r| r.gap <= gap_tol);
    Ok(if ok { EXIT_PASS } else { EXIT_FAIL })
}

// ---------------------------------------------------------------------------
// Argument parsing and dispatch
// ---------------------------------------------------------------------------

pub struct CliArgs {
    pub command: String,
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

pub fn parse_args(args: &[String]) -> std::result::Result<CliArgs, CliError> {
    if args.is_empty() {
        return Err(usage_err(
            "usage: finslerkit <validate-norm|smooth|check-hilbert|quotient> --config <path> [--out <dir>] [--seed <int>]",
        ));
    }
    let command = args[0].clone();
    let mut config: Option<PathBuf> = None;
    let mut out = PathBuf::from("out");
    let mut seed = None;
    let mut i = 1;
    while i < args.len() {
        match args[i].as_str() {
            "--config" => {
                i += 1;
                config = Some(PathBuf::from(args.get(i).ok_or_else(|| {
                    usage_err("--config needs a path argument")
                })?));
            }
            "--out" => {
                i += 1;
                out = PathBuf::from(
                    args.get(i)
                        .ok_or_else(|| usage_err("--out needs a directory argument"))?,
                );
            }
            "--seed" => {
                i += 1;
                let raw = args
                    .get(i)
                    .ok_or_else(|| usage_err("--seed needs an integer argument"))?;
                seed = Some(
                    raw.parse::<u64>()
                        .map_err(|_| usage_err(format!("invalid seed '{raw}'")))?,
                );
            }
            other => {
                return Err(usage_err(format!("unknown argument '{other}'")));
            }
        }
        i += 1;
    }
    Ok(CliArgs {
        command,
        config: config.ok_or_else(|| usage_err("missing required --config <path>"))?,
        out,
        seed,
    })
}

pub fn run(args: &CliArgs) -> CliResult {
    let raw = fs::read_to_string(&args.config)
        .map_err(|e| usage_err(format!("cannot read config {}: {e}", args.config.display())))?;
    let config: RunConfig = serde_json::from_str(&raw)
        .map_err(|e| usage_err(format!("config parse error: {e}")))?;
    match args.command.as_str() {
        "validate-norm" => cmd_validate_norm(&config, &args.out, args.seed),
        "smooth" => cmd_smooth(&config, &args.out, args.seed),
        "check-hilbert" => cmd_check_hilbert(&config, &args.out, args.seed),
        "quotient" => cmd_quotient(&config, &args.out, args.seed),
        other => Err(usage_err(format!(
            "unknown command '{other}'; expected validate-norm, smooth, check-hilbert or quotient"
        ))),
    }
}

/// Entry point used by the binary: returns the process exit code.
pub fn run_cli(argv: &[String]) -> i32 {
    match parse_args(argv) {
        Ok(args) => match run(&args) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("finslerkit: {}", e.message);
                e.code
            }
        },
        Err(e) => {
            eprintln!("finslerkit: {}", e.message);
            e.code
        }
    }
}
