//! Command-line interface over the selfsim library.
//!
//! Summaries are JSON lines (sorted keys) on stdout; bulk numeric tables
//! are CSV, written to `--csv FILE` when given, else to stdout with the
//! summary moved to stderr. Exit codes: 0 success, 1 usage error, 2 input
//! or validation failure, 3 enumeration budget exceeded.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use num_complex::Complex;
use serde_json::json;

use selfsim::algebraic::{classify, AlgebraicError, IntegerPolynomial, DEFAULT_TOL};
use selfsim::dims::{
    convolution_split, density_experiment, es_check, sim_dimensions, DimsError, DEFAULT_ES_CAP,
};
use selfsim::ek::complex::{
    cover_enumerate_complex, ComplexEkError, ConstantsMode, CoverOptionsComplex, SpectrumH,
};
use selfsim::ek::real::{
    cover_enumerate, ek_trace, theta_estimate, CoverOptions, EkError, EkSetupReal,
};
use selfsim::fourier::{decay_fit, mu_hat, DirectionFilter, Frequency};
use selfsim::ifs::{HomogeneousIfs, IfsError};
use selfsim::io::load_ifs;

#[derive(Parser)]
#[command(
    name = "selfsim",
    about = "Fourier decay and parameter analysis for homogeneous self-similar measures",
    long_about = "Evaluates Fourier transforms of homogeneous self-similar measures, fits decay \
                  exponents, runs the nearest-integer parameter analysis (traces, membership \
                  witnesses, disk covers), classifies algebraic contraction ratios, and computes \
                  separation and dimension diagnostics.\n\nSummaries are JSON lines with sorted \
                  keys; bulk tables are CSV (see --csv). Exit codes: 0 success; 1 usage error; \
                  2 invalid input or failed validation; 3 enumeration budget exceeded.",
    version
)]
struct Cli {
    /// Accept IFS files that fail validation.
    #[arg(long, global = true)]
    allow_invalid: bool,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural and irreducibility invariants of an IFS file.
    Validate { file: PathBuf },
    /// Evaluate the measure transform at one frequency.
    Transform {
        file: PathBuf,
        /// Frequency vector, comma separated.
        #[arg(long, value_name = "X1,..,XD")]
        xi: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Fit the decay exponent over geometric shells.
    DecayFit {
        file: PathBuf,
        #[arg(long, default_value_t = 12)]
        shells: usize,
        /// Evaluations per shell (axis directions included).
        #[arg(long, default_value_t = 512)]
        directions: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Restrict directions to the cone where this complex block
        /// (1-indexed) dominates; needs even dimension.
        #[arg(long)]
        block: Option<usize>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Nearest-integer trace of the expansion factor at a frequency seed.
    EkTrace {
        file: PathBuf,
        #[arg(long = "N", default_value_t = 24)]
        n: usize,
        /// Seed vector of the trace, comma separated (defaults to ones).
        #[arg(long)]
        eta: Option<String>,
        #[arg(long = "B1")]
        b1: Option<f64>,
        #[arg(long = "B2")]
        b2: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Enumerate the disk cover of decay-exceptional expansion factors.
    EkCover {
        /// Optional IFS file providing the rotation and digit basis
        /// (defaults to the one-dimensional unit system).
        file: Option<PathBuf>,
        #[arg(long = "B1")]
        b1: f64,
        #[arg(long = "B2")]
        b2: f64,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        delta: f64,
        /// Override the computed small-remainder threshold.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, env = "SELFSIM_NODE_CAP", default_value_t = selfsim::ek::real::DEFAULT_NODE_CAP)]
        node_cap: usize,
        #[arg(long, default_value_t = 1e-5)]
        scan_step: f64,
        #[arg(long, default_value_t = 64)]
        eta_grid_denominator: u32,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Enumerate the angular disk cover in the complex-diagonal model.
    EkcCover {
        #[arg(long, default_value_t = 2.0)]
        vartheta: f64,
        #[arg(long, default_value_t = 0.5)]
        b1: f64,
        #[arg(long, default_value_t = 0.25)]
        b2: f64,
        /// Fixed-pair angles as fractions of a turn in (0, 1/2),
        /// comma separated; empty for the planar case.
        #[arg(long, default_value = "")]
        prefix_angles: String,
        /// Placeholder target angle used for calibration.
        #[arg(long, default_value_t = 0.25)]
        target_angle: f64,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_parser = ["rigorous", "calibrated"], default_value = "calibrated")]
        mode: String,
        #[arg(long, env = "SELFSIM_NODE_CAP", default_value_t = selfsim::ek::complex::DEFAULT_NODE_CAP)]
        node_cap: usize,
        #[arg(long, default_value_t = 1e-3)]
        scan_step: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exact minimal atom separation, swept up to a level.
    EsCheck {
        file: PathBuf,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_ES_CAP)]
        cap: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Classify a monic integer polynomial (coefficients high to low).
    ClassifyPoly {
        coeffs: String,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Similarity dimension at a moment q > 1.
    Dims {
        file: PathBuf,
        #[arg(long)]
        q: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Split the measure into the k-step factor and its complement.
    Split {
        file: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_ES_CAP)]
        cap: usize,
        /// Write the kept-factor system to this TOML file.
        #[arg(long)]
        kept: Option<PathBuf>,
        /// Write the complement system to this TOML file.
        #[arg(long)]
        skipped: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Voxel-occupancy density heuristic from chaos-game samples.
    Density {
        file: PathBuf,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct OutArgs {
    /// Write the summary JSON line here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write the bulk CSV table here (summary then stays on stdout).
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(t) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Budget(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn exit_code_for(e: &CliError) -> i32 {
    match e {
        CliError::Usage(_) => 1,
        CliError::Invalid(_) | CliError::Io(_) => 2,
        CliError::Budget(_) => 3,
    }
}

fn classify_ifs_error(e: IfsError) -> CliError {
    match e {
        IfsError::CapExceeded { .. } => CliError::Budget(e.to_string()),
        _ => CliError::Invalid(e.to_string()),
    }
}

fn classify_dims_error(e: DimsError) -> CliError {
    match e {
        DimsError::CapExceeded { .. } => CliError::Budget(e.to_string()),
        DimsError::BadParams(_) => CliError::Usage(e.to_string()),
    }
}

fn classify_ek_error(e: EkError) -> CliError {
    match e {
        EkError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
        EkError::BadParams(_) => CliError::Usage(e.to_string()),
        _ => CliError::Invalid(e.to_string()),
    }
}

fn classify_complex_error(e: ComplexEkError) -> CliError {
    match e {
        ComplexEkError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
        ComplexEkError::BadParams(_) => CliError::Usage(e.to_string()),
        _ => CliError::Invalid(e.to_string()),
    }
}

fn load_validated(path: &Path, allow_invalid: bool) -> Result<HomogeneousIfs, CliError> {
    let ifs = load_ifs(path).map_err(|e| CliError::Invalid(e.to_string()))?;
    let report = ifs.validate();
    if !report.is_valid() && !allow_invalid {
        return Err(CliError::Invalid(format!(
            "IFS fails validation ({}); use --allow-invalid to proceed",
            report.failures().join(", ")
        )));
    }
    Ok(ifs)
}

fn parse_vector(text: &str, dim: usize, what: &str) -> Result<DVector<f64>, CliError> {
    let parts: Result<Vec<f64>, _> = text.split(',').map(|p| p.trim().parse::<f64>()).collect();
    let parts = parts.map_err(|_| CliError::Usage(format!("cannot parse {what}: {text}")))?;
    if parts.len() != dim {
        return Err(CliError::Usage(format!(
            "{what} needs {dim} components, got {}",
            parts.len()
        )));
    }
    Ok(DVector::from_row_slice(&parts))
}

fn emit_summary(out: &OutArgs, line: &serde_json::Value, csv_on_stdout: bool) -> Result<(), CliError> {
    let text = format!("{line}");
    match &out.output {
        Some(path) => {
            std::fs::write(path, format!("{text}\n"))?;
        }
        None => {
            if csv_on_stdout {
                eprintln!("{text}");
            } else {
                println!("{text}");
            }
        }
    }
    Ok(())
}

/// Emit the CSV table; returns whether it went to stdout.
fn emit_csv(out: &OutArgs, content: &str) -> Result<bool, CliError> {
    match &out.csv {
        Some(path) => {
            std::fs::write(path, content)?;
            Ok(false)
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            Ok(true)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate { file } => {
            let ifs = load_ifs(file).map_err(|e| CliError::Invalid(e.to_string()))?;
            let report = ifs.validate();
            let line = json!({
                "valid": report.is_valid(),
                "failures": report.failures(),
                "dim": report.dim,
                "digit_count": report.digit_count,
                "contractive": report.contractive,
                "probs_sum": report.probs_sum,
                "digits_distinct": report.digits_distinct,
                "orthogonality_residual": report.orthogonality_residual,
                "digit_rank": report.digit_rank,
                "spanning": report.spanning,
                "cyclic_rank": report.cyclic_rank,
                "cyclic": report.cyclic,
            });
            println!("{line}");
            if report.is_valid() || cli.allow_invalid {
                Ok(())
            } else {
                Err(CliError::Invalid(format!(
                    "failed invariants: {}",
                    report.failures().join(", ")
                )))
            }
        }
        Command::Transform { file, xi, tol, out } => {
            let ifs = load_validated(file, cli.allow_invalid)?;
            let xi = parse_vector(xi, ifs.dim, "--xi")?;
            let t = mu_hat(&ifs, &Frequency(xi.clone()), *tol)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let line = json!({
                "xi": xi.iter().cloned().collect::<Vec<f64>>(),
                "value_re": t.value.re,
                "value_im": t.value.im,
                "abs": t.value.norm(),
                "tail_bound": t.tail_bound,
                "truncation_depth": t.truncation_depth,
            });
            emit_summary(out, &line, false)
        }
        Command::DecayFit {
            file,
            shells,
            directions,
            seed,
            tol,
            block,
            out,
        } => {
            let ifs = load_validated(file, cli.allow_invalid)?;
            let filter = match block {
                Some(l) => DirectionFilter::DominantBlock(*l),
                None => DirectionFilter::All,
            };
            let fit = decay_fit(&ifs, *shells, *directions, *seed, *tol, filter)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let mut csv = String::from("shell_radius,sup_abs,direction_argmax\n");
            for s in &fit.shells {
                let dir = s
                    .argmax_direction
                    .iter()
                    .map(|x| format!("{x}"))
                    .collect::<Vec<_>>()
                    .join(";");
                csv.push_str(&format!("{},{},{}\n", s.radius, s.sup_abs, dir));
            }
            let on_stdout = emit_csv(out, &csv)?;
            let line = json!({
                "gamma": fit.gamma,
                "r2": fit.r2,
                "intercept": fit.intercept,
                "shells": fit.shells.len(),
                "seed": seed,
            });
            emit_summary(out, &line, on_stdout)
        }
        Command::EkTrace {
            file,
            n,
            eta,
            b1,
            b2,
            out,
        } => {
            let ifs = load_validated(file, cli.allow_invalid)?;
            let (normalized, _) = ifs.normalize_translation().map_err(classify_ifs_error)?;
            let setup = EkSetupReal::from_ifs(&normalized).map_err(classify_ek_error)?;
            let eta_vec = match eta {
                Some(text) => parse_vector(text, setup.dim, "--eta")?,
                None => DVector::from_element(setup.dim, 1.0),
            };
            let theta = normalized.theta;
            let b1 = b1.unwrap_or((theta * 0.95).max(1.0 + 1e-9));
            let b2 = b2.unwrap_or(theta * 1.05);
            let constants = setup.constants(b1, b2).map_err(classify_ek_error)?;
            let trace = ek_trace(&setup, theta, &eta_vec, *n).map_err(classify_ek_error)?;
            let mut csv = String::from("n,K,eps,L\n");
            for i in 0..trace.len() {
                let k = trace.k[i]
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(";");
                let e = trace.eps[i]
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(";");
                let l = trace.l[i]
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(";");
                csv.push_str(&format!("{i},{k},{e},{l}\n"));
            }
            let on_stdout = emit_csv(out, &csv)?;
            let est = if trace.len() >= 2 {
                theta_estimate(&trace, trace.len() - 2).ok()
            } else {
                None
            };
            let line = json!({
                "theta": theta,
                "eta": eta_vec.iter().cloned().collect::<Vec<f64>>(),
                "N": n,
                "c1": constants.c1,
                "c2": constants.c2,
                "n1": constants.n1,
                "rho": constants.rho,
                "condition_inf": setup.condition_inf,
                "recon_residual": trace.recon_residual,
                "theta_estimate_last": est,
            });
            emit_summary(out, &line, on_stdout)
        }
        Command::EkCover {
            file,
            b1,
            b2,
            n,
            delta,
            rho,
            node_cap,
            scan_step,
            eta_grid_denominator,
            out,
        } => {
            let setup = match file {
                Some(path) => {
                    let ifs = load_validated(path, cli.allow_invalid)?;
                    let (normalized, _) =
                        ifs.normalize_translation().map_err(classify_ifs_error)?;
                    EkSetupReal::from_ifs(&normalized).map_err(classify_ek_error)?
                }
                None => EkSetupReal::new(
                    nalgebra::DMatrix::identity(1, 1),
                    nalgebra::DMatrix::from_row_slice(1, 1, &[1.0]),
                )
                .map_err(classify_ek_error)?,
            };
            let mut opts = CoverOptions::new(*b1, *b2, *n, *delta);
            opts.node_cap = *node_cap;
            opts.seed_scan_step = *scan_step;
            opts.eta_grid_step = 1.0 / f64::from(*eta_grid_denominator);
            opts.rho_override = *rho;
            let result = cover_enumerate(&setup, &opts).map_err(classify_ek_error)?;
            let mut csv = String::from("center,radius,branch_count,seq_hash\n");
            for d in &result.disks {
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    d.center, d.radius, d.branch_count, d.seq_hash
                ));
            }
            let on_stdout = emit_csv(out, &csv)?;
            let line = json!({
                "nodes": result.stats.nodes,
                "seeds": result.stats.seeds,
                "disks": result.stats.disks,
                "branch_events": result.stats.branch_events,
                "fitted_c0": result.stats.fitted_c0,
            });
            emit_summary(out, &line, on_stdout)
        }
        Command::EkcCover {
            vartheta,
            b1,
            b2,
            prefix_angles,
            target_angle,
            n,
            delta,
            mode,
            node_cap,
            scan_step,
            seed,
            out,
        } => {
            let mut upper = Vec::new();
            if !prefix_angles.trim().is_empty() {
                for part in prefix_angles.split(',') {
                    let alpha: f64 = part
                        .trim()
                        .parse()
                        .map_err(|_| CliError::Usage(format!("bad angle: {part}")))?;
                    upper.push(Complex::from_polar(
                        *vartheta,
                        2.0 * std::f64::consts::PI * alpha,
                    ));
                }
            }
            upper.push(Complex::from_polar(
                *vartheta,
                2.0 * std::f64::consts::PI * target_angle,
            ));
            let h = SpectrumH::new(upper, *b1, *b2).map_err(classify_complex_error)?;
            let mut opts = CoverOptionsComplex::new(*n, *delta);
            opts.node_cap = *node_cap;
            opts.seed_scan_step = *scan_step;
            opts.seed = *seed;
            opts.mode = match mode.as_str() {
                "rigorous" => ConstantsMode::Rigorous,
                _ => ConstantsMode::Calibrated { instances: 40 },
            };
            let result = cover_enumerate_complex(&h, &opts).map_err(classify_complex_error)?;
            let mut csv = String::from("center_re,center_im,radius,branch_count,seq_hash\n");
            for d in &result.disks {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    d.center.re, d.center.im, d.radius, d.branch_count, d.seq_hash
                ));
            }
            let on_stdout = emit_csv(out, &csv)?;
            let line = json!({
                "nodes": result.stats.nodes,
                "seeds": result.stats.seeds,
                "disks": result.stats.disks,
                "branch_events": result.stats.branch_events,
                "fitted_c0": result.stats.fitted_c0,
            });
            emit_summary(out, &line, on_stdout)
        }
        Command::EsCheck { file, n, cap, out } => {
            let ifs = load_validated(file, cli.allow_invalid)?;
            let mut csv = String::from("N,min_distance,eps_star\n");
            let mut last = None;
            for level in 0..=*n {
                let rep = es_check(&ifs, level, *cap).map_err(classify_dims_error)?;
                csv.push_str(&format!(
                    "{},{},{}\n",
                    level, rep.min_distance, rep.epsilon_star
                ));
                last = Some(rep);
            }
            let on_stdout = emit_csv(out, &csv)?;
            let rep = last.expect("at least one level");
            let line = json!({
                "N": rep.level,
                "min_distance": rep.min_distance,
                "eps_star": rep.epsilon_star,
                "collision": rep.colliding_pair.as_ref().map(|(v, w)| json!({
                    "v": v,
                    "w": w,
                })),
            });
            emit_summary(out, &line, on_stdout)
        }
        Command::ClassifyPoly { coeffs, tol, out } => {
            let parsed: Result<Vec<i64>, _> =
                coeffs.split(',').map(|p| p.trim().parse::<i64>()).collect();
            let parsed = parsed
                .map_err(|_| CliError::Usage(format!("cannot parse coefficients: {coeffs}")))?;
            let poly =
                IntegerPolynomial::new(parsed).map_err(|e| CliError::Usage(e.to_string()))?;
            match classify(&poly, *tol) {
                Ok(class) => {
                    let line = json!({
                        "pisot": class.is_pisot,
                        "salem": class.is_salem,
                        "garsia": class.is_garsia,
                        "dominant_root": if class.dominant_root.is_nan() {
                            serde_json::Value::Null
                        } else {
                            json!(class.dominant_root)
                        },
                        "roots": class.roots.iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>(),
                        "moduli": class.root_moduli,
                        "irreducibility_certified": class.irreducibility_certified,
                    });
                    emit_summary(out, &line, false)
                }
                Err(
                    e @ (AlgebraicError::Reducible(_)
                    | AlgebraicError::Undecided
                    | AlgebraicError::IllConditioned { .. }),
                ) => {
                    let line = json!({ "error": e.to_string() });
                    emit_summary(out, &line, false)?;
                    Err(CliError::Invalid(e.to_string()))
                }
                Err(e) => Err(CliError::Usage(e.to_string())),
            }
        }
        Command::Dims { file, q, out } => {
            let ifs = load_validated(file, cli.allow_invalid)?;
            let rep = sim_dimensions(&ifs, *q).map_err(classify_dims_error)?;
            let line = json!({
                "q": q,
                "sim_dim_q": rep.sim_dim_q,
                "supercritical": rep.supercritical,
                "attractor_sim_dim": rep.attractor_sim_dim,
            });
            emit_summary(out, &line, false)
        }
        Command::Split {
            file,
            k,
            cap,
            kept,
            skipped,
            out,
        } => {
            let ifs = load_validated(file, cli.allow_invalid)?;
            let (kept_ifs, skipped_ifs) =
                convolution_split(&ifs, *k, *cap).map_err(classify_dims_error)?;
            if let Some(path) = kept {
                std::fs::write(path, selfsim::io::to_toml(&kept_ifs))?;
            }
            if let Some(path) = skipped {
                std::fs::write(path, selfsim::io::to_toml(&skipped_ifs))?;
            }
            let line = json!({
                "k": k,
                "theta_k": kept_ifs.theta,
                "kept_digits": kept_ifs.digits.len(),
                "skipped_digits": skipped_ifs.digits.len(),
                "skipped_probs": skipped_ifs.probs,
            });
            emit_summary(out, &line, false)
        }
        Command::Density {
            file,
            resolution,
            samples,
            seed,
            out,
        } => {
            let ifs = load_validated(file, cli.allow_invalid)?;
            let rep = density_experiment(&ifs, *resolution, *samples, *seed)
                .map_err(classify_dims_error)?;
            let line = json!({
                "resolution_lo": rep.resolution_lo,
                "resolution_hi": rep.resolution_hi,
                "samples": rep.samples,
                "occupied_fraction_lo": rep.occupied_fraction_lo,
                "occupied_fraction_hi": rep.occupied_fraction_hi,
                "l2_stat_lo": rep.l2_stat_lo,
                "l2_stat_hi": rep.l2_stat_hi,
                "l2_ratio": rep.l2_ratio,
                "note": rep.note,
                "seed": seed,
            });
            emit_summary(out, &line, false)
        }
    }
}
