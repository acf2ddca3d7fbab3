use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mehta_core::acceptance::{render_report, run_suite, Report, SuiteConfig};
use mehta_core::mehta::{
    detmoment_identity_check, exp_det_pointwise_check, kacrice_density, kacrice_vs_empirical, mehta_closed_form,
    mehta_mc, mehta_quadrature, reproduce_zm, zm_table_csv,
};
use mehta_core::regression::{
    conditioned_hessian_audit, empirical_correlator, hessian_regression_pair, regress, MatrixJson,
};
use mehta_core::spectral::{
    default_degeneracy_tol, eigenvalues, one_point_correlation, spectral_measure, CorrelationEstimator,
};
use mehta_core::spherefield::{
    critical_points_json, discriminant_measure, find_critical_points, north_pole_pair, DiscriminantMethod,
    FinderOptions,
};
use mehta_core::stats::{paired_z, Z_THRESHOLD};
use mehta_core::symspace::{covariance_audit, format_matrix, parse_matrix, sample_suv};
use mehta_core::{EnsembleParams, Error, Exec, Seed};
use serde::Serialize;
use serde_json::{json, Value};

const DEFAULT_N: usize = 100_000;

/// Numerical laboratory for the Gaussian Orthogonal Ensemble, the Kac-Rice
/// count on spheres and the Mehta integral.
#[derive(Parser, Debug)]
#[command(name = "mehta", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Common {
    /// Matrix dimension (or sphere dimension m for S^m where stated)
    #[arg(long, global = true, env = "MEHTA_M")]
    m: Option<usize>,
    /// Variance parameter v
    #[arg(long, global = true, env = "MEHTA_V", default_value_t = 1.0)]
    v: f64,
    /// Trace parameter u of S_m^{u,v}
    #[arg(long, global = true, env = "MEHTA_U", default_value_t = 0.0, allow_hyphen_values = true)]
    u: f64,
    /// Shift c or density location t
    #[arg(long, global = true, env = "MEHTA_C", allow_hyphen_values = true)]
    c: Option<f64>,
    /// Left endpoint (accepts -inf)
    #[arg(long, global = true, env = "MEHTA_A", allow_hyphen_values = true)]
    a: Option<f64>,
    /// Right endpoint (accepts inf)
    #[arg(long, global = true, env = "MEHTA_B", allow_hyphen_values = true)]
    b: Option<f64>,
    /// Monte Carlo sample count [default: 100000; report: per-criterion sizes]
    #[arg(long, global = true, env = "MEHTA_N")]
    n: Option<usize>,
    #[arg(long, global = true, env = "MEHTA_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads
    #[arg(long, global = true, env = "MEHTA_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Output file (stdout if absent)
    #[arg(long, global = true, env = "MEHTA_OUT")]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "MEHTA_FORMAT", value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Draw matrices from S_m^{u,v} (GOE when u = 0)
    Sample {
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Audit all second moments of the ℓ-coordinates of S_m^{u,v}
    CheckCovariance,
    /// Eigenvalues and spectral measure of a matrix file
    Eig { file: PathBuf },
    /// Critical points of ½(Ax, x) on the unit sphere for a matrix file
    Critpoints { file: PathBuf },
    /// Estimate the one-point correlation density of GOE_m^v
    Correlation {
        #[arg(long, value_enum, default_value_t = Estimator::Histogram)]
        estimator: Estimator,
        /// Bin width or kernel bandwidth
        #[arg(long)]
        width: Option<f64>,
    },
    /// The Mehta integral Z_m
    Mehta {
        #[arg(long, value_enum, default_value_t = MehtaMethod::Closed)]
        method: MehtaMethod,
    },
    /// Expected |det(A − c)| over GOE_m^v against the Mehta ratio
    Detmoment {
        #[arg(long, value_enum, default_value_t = DetMode::Integrated)]
        mode: DetMode,
    },
    /// Kac-Rice density of critical values, or the interval comparison
    Kacrice {
        #[arg(long, value_enum, default_value_t = KacMode::Interval)]
        mode: KacMode,
        /// Number of grid points for the density curve
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Regression of the north-pole Hessian on (Φ, ∇Φ): analytic vs empirical
    RegressDemo,
    /// Run the full acceptance suite and write one JSON report
    Report,
    /// Render a report file as a plain-text table
    RenderReport { file: PathBuf },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Estimator {
    Histogram,
    Kde,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum MehtaMethod {
    Closed,
    Mc,
    Quadrature,
    /// Reconstruct Z_2..Z_{m+1} from sphere-side sampling
    Sphere,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum DetMode {
    Pointwise,
    Integrated,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum KacMode {
    Density,
    Interval,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 2,
            CliError::Core(
                Error::InvalidParams(_) | Error::Parse(_) | Error::Unsupported(_) | Error::TooFewSamples { .. },
            ) => 2,
            CliError::Core(_) => 1,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// What a command produced: a JSON document, optional CSV text, and the
/// overall pass flag.
struct Output {
    json: Value,
    csv: Option<String>,
    pass: bool,
}

impl Output {
    fn new(json: Value, pass: bool) -> Self {
        Output { json, csv: None, pass }
    }

    fn with_csv(mut self, csv: String) -> Self {
        self.csv = Some(csv);
        self
    }
}

fn need_m(c: &Common) -> CliResult<usize> {
    c.m.ok_or_else(|| CliError::Usage("--m is required for this command".into()))
}

fn samples(c: &Common) -> usize {
    c.n.unwrap_or(DEFAULT_N)
}

fn read(path: &PathBuf) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })
}

fn exec() -> Exec {
    Exec::default()
}

fn run(cli: &Cli) -> CliResult<Output> {
    let c = &cli.common;
    let seed = Seed(c.seed);
    match &cli.command {
        Command::Sample { count } => {
            let params = EnsembleParams::new(need_m(c)?, c.u, c.v)?;
            let mut rng = seed.stream(0);
            let mats: Vec<_> = (0..*count).map(|_| sample_suv(&params, &mut rng)).collect();
            let text: String = mats.iter().map(format_matrix).collect();
            let dense: Vec<Vec<Vec<f64>>> = mats
                .iter()
                .map(|a| (0..a.dim()).map(|i| (0..a.dim()).map(|j| a.get(i, j)).collect()).collect())
                .collect();
            Ok(Output::new(json!({"matrices": dense}), true).with_csv(text))
        }
        Command::CheckCovariance => {
            let params = EnsembleParams::new(need_m(c)?, c.u, c.v)?;
            let entries = covariance_audit(&params, samples(c), seed, exec());
            let pass = entries.iter().all(|e| e.pass());
            let mut csv = String::from("first,second,empirical,std_error,reference,z_score,pass\n");
            for e in &entries {
                csv.push_str(&format!(
                    "{}{},{}{},{:e},{:e},{:e},{},{}\n",
                    e.first.0,
                    e.first.1,
                    e.second.0,
                    e.second.1,
                    e.empirical,
                    e.std_error,
                    e.reference,
                    e.z_score.map_or("NaN".into(), |z| format!("{z:e}")),
                    e.pass()
                ));
            }
            Ok(Output::new(json!({"op": "covariance_audit", "entries": entries}), pass).with_csv(csv))
        }
        Command::Eig { file } => {
            let a = parse_matrix(&read(file)?)?;
            let sigma = spectral_measure(&a, default_degeneracy_tol(&a));
            Ok(Output::new(
                json!({"op": "eig", "eigenvalues": eigenvalues(&a), "spectral_measure": sigma.atoms()}),
                true,
            )
            .with_csv(sigma.to_csv()))
        }
        Command::Critpoints { file } => {
            let a = parse_matrix(&read(file)?)?;
            let opts = FinderOptions::for_sphere(a.dim() - 1);
            let points = find_critical_points(&a, &opts, seed, exec())?;
            let d = discriminant_measure(&a, DiscriminantMethod::Analytic, seed)?;
            let pass = points.len() == 2 * a.dim();
            let mut csv = String::from("value,morse_index,gradient_norm,point\n");
            for p in &points {
                let coords: Vec<String> = p.point.iter().map(|x| format!("{x:e}")).collect();
                csv.push_str(&format!(
                    "{:e},{},{:e},{}\n",
                    p.value,
                    p.morse_index,
                    p.gradient_norm,
                    coords.join(" ")
                ));
            }
            Ok(Output::new(
                json!({
                    "op": "find_critical_points",
                    "critical_points": critical_points_json(&points),
                    "values": points.iter().map(|p| p.value).collect::<Vec<_>>(),
                    "discriminant_measure": d.atoms(),
                }),
                pass,
            )
            .with_csv(csv))
        }
        Command::Correlation { estimator, width } => {
            let m = need_m(c)?;
            let n = samples(c);
            let est = match (estimator, width) {
                (Estimator::Histogram, Some(w)) => CorrelationEstimator::Histogram { bin_width: *w },
                (Estimator::Histogram, None) => CorrelationEstimator::default_for(m, c.v),
                (Estimator::Kde, w) => CorrelationEstimator::Kernel {
                    bandwidth: w.unwrap_or(0.05),
                },
            };
            let d = one_point_correlation(m, c.v, n, est, seed, exec())?;
            let integral = d.trapezoid_integral();
            let pass = d.is_normalized();
            let csv = d.to_csv();
            Ok(Output::new(json!({"op": "one_point_correlation", "integral": integral, "density": d}), pass)
                .with_csv(csv))
        }
        Command::Mehta { method } => {
            let m = need_m(c)?;
            match method {
                MehtaMethod::Closed => {
                    let z = mehta_closed_form(m)?;
                    Ok(Output::new(
                        json!({"op": "mehta_closed_form", "params": {"m": m}, "estimate": z, "reference": z, "pass": true}),
                        true,
                    ))
                }
                MehtaMethod::Quadrature => {
                    let q = mehta_quadrature(m)?;
                    let reference = mehta_closed_form(m)?;
                    let pass = (q.value - reference).abs() <= 2e-6;
                    Ok(Output::new(
                        json!({
                            "op": "mehta_quadrature", "params": {"m": m}, "estimate": q.value,
                            "quadrature_error": q.error, "reference": reference, "pass": pass
                        }),
                        pass,
                    ))
                }
                MehtaMethod::Mc => {
                    let r = mehta_mc(m, samples(c), seed, exec())?;
                    Ok(estimator_output("mehta_mc", json!({"m": m}), &r))
                }
                MehtaMethod::Sphere => {
                    let rows = reproduce_zm(m, samples(c), seed, exec())?;
                    let pass = rows.iter().all(|r| r.z.pass());
                    let csv = zm_table_csv(&rows);
                    Ok(Output::new(json!({"op": "reproduce_zm", "params": {"m_max": m}, "rows": rows, "pass": pass}), pass)
                        .with_csv(csv))
                }
            }
        }
        Command::Detmoment { mode } => {
            let m = need_m(c)?;
            match mode {
                DetMode::Integrated => {
                    let r = detmoment_identity_check(m, c.v, samples(c), seed, exec())?;
                    Ok(estimator_output("detmoment_identity_check", json!({"m": m, "v": c.v}), &r))
                }
                DetMode::Pointwise => {
                    let cc = c.c.unwrap_or(0.0);
                    let p = exp_det_pointwise_check(m, c.v, cc, samples(c), seed, exec())?;
                    let pass = p.pass();
                    Ok(Output::new(
                        json!({"op": "exp_det_pointwise_check", "params": {"m": m, "v": c.v, "c": cc}, "result": p, "pass": pass}),
                        pass,
                    ))
                }
            }
        }
        Command::Kacrice { mode, points } => {
            let m = need_m(c)?;
            let n = samples(c);
            match mode {
                KacMode::Interval => {
                    let a = c.a.unwrap_or(f64::NEG_INFINITY);
                    let b = c.b.unwrap_or(f64::INFINITY);
                    let cmp = kacrice_vs_empirical(m, c.v, a, b, n, seed, exec())?;
                    let pass = cmp.pass();
                    Ok(Output::new(
                        json!({"op": "kacrice_vs_empirical", "params": {"m": m, "v": c.v, "a": cmp.a, "b": cmp.b}, "result": cmp, "pass": pass}),
                        pass,
                    ))
                }
                KacMode::Density => {
                    if *points < 2 {
                        return Err(CliError::Usage("--points must be at least 2".into()));
                    }
                    let half = 2.0 * (c.v * (m + 1) as f64).sqrt() + 2.0 * (2.0 * c.v).sqrt();
                    let a = c.a.filter(|x| x.is_finite()).unwrap_or(-half);
                    let b = c.b.filter(|x| x.is_finite()).unwrap_or(half);
                    if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
                        return Err(CliError::Usage(format!("need a < b, got [{a}, {b}]")));
                    }
                    let mut csv = String::from("t,rho,stderr\n");
                    let mut curve = Vec::with_capacity(*points);
                    for k in 0..*points {
                        let t = a + (b - a) * k as f64 / (*points - 1) as f64;
                        let r = kacrice_density(m, t, c.v, n, seed.derive_index(k as u64), exec())?;
                        csv.push_str(&format!("{t:e},{:e},{:e}\n", r.estimate, r.std_error));
                        curve.push(json!({"t": t, "rho": r.estimate, "stderr": r.std_error}));
                    }
                    Ok(Output::new(json!({"op": "kacrice_density", "params": {"m": m, "v": c.v}, "curve": curve}), true)
                        .with_csv(csv))
                }
            }
        }
        Command::RegressDemo => regress_demo(need_m(c)?, c.v, samples(c), seed),
        Command::Report => {
            let cfg = SuiteConfig {
                seed,
                n: c.n,
                exec: exec(),
            };
            let report = run_suite(&cfg, config_echo(cli))?;
            let (table, _) = render_report(&report);
            eprint!("{table}");
            let pass = report.pass;
            Ok(Output::new(serde_json::to_value(&report).expect("report serializes"), pass))
        }
        Command::RenderReport { file } => {
            let report: Report = serde_json::from_str(&read(file)?)
                .map_err(|e| CliError::Core(Error::Parse(format!("malformed report: {e}"))))?;
            let (table, pass) = render_report(&report);
            Ok(Output {
                json: Value::Null,
                csv: Some(table),
                pass,
            })
        }
    }
}

fn estimator_output(op: &str, params: Value, r: &mehta_core::EstimatorResult) -> Output {
    let pass = r.pass();
    Output::new(
        json!({
            "op": op, "params": params, "seed": r.seed, "n_samples": r.n_samples,
            "estimate": r.estimate, "std_error": r.std_error, "reference": r.reference,
            "z_score": r.z_score, "pass": pass,
        }),
        pass,
    )
}

fn regress_demo(m: usize, v: f64, n: usize, seed: Seed) -> CliResult<Output> {
    let joint = hessian_regression_pair(m, v)?;
    let reg = regress(&joint)?;
    let goe = EnsembleParams::goe(m + 1, v)?;
    let samples: Vec<(Vec<f64>, Vec<f64>)> = exec()
        .map_chunks(n, seed.derive("pairs"), |len, rng| {
            (0..len).map(|_| north_pole_pair(&sample_suv(&goe, rng))).collect::<Vec<_>>()
        })
        .concat();
    let emp = empirical_correlator(&samples)?;
    let mut cross = Vec::new();
    let mut pass = true;
    for i in 0..joint.cross_yx().nrows() {
        for k in 0..joint.cross_yx().ncols() {
            let analytic = joint.cross_yx()[(i, k)];
            let empirical = emp.joint.cross_yx()[(i, k)];
            let z = paired_z(empirical, emp.cross_stderr[(i, k)], analytic, 0.0);
            pass &= z.is_some_and(|z| z.abs() <= Z_THRESHOLD);
            cross.push(json!({"row": i, "col": k, "analytic": analytic, "empirical": empirical, "z_score": z}));
        }
    }
    let audit = conditioned_hessian_audit(m, v, n, seed.derive("conditioned"), exec())?;
    pass &= audit.pass();
    Ok(Output::new(
        json!({
            "op": "regress_demo",
            "params": {"m": m, "v": v},
            "regression": {
                "R": MatrixJson::from(&reg.operator),
                "Delta": MatrixJson::from(&reg.residual_cov),
                "offset": reg.offset.as_slice(),
            },
            "cross_covariance": cross,
            "conditioned_hessian": audit,
            "pass": pass,
        }),
        pass,
    ))
}

fn config_echo(cli: &Cli) -> Value {
    let mut v = serde_json::to_value(&cli.common).expect("config serializes");
    let cmd = serde_json::to_value(&cli.command).expect("command serializes");
    if let (Value::Object(map), Value::Object(cmd)) = (&mut v, cmd) {
        map.extend(cmd);
    }
    v
}

fn emit(cli: &Cli, out: &Output) -> CliResult<()> {
    let text = match (&cli.command, cli.common.format) {
        (Command::RenderReport { .. }, _) => out.csv.clone().unwrap_or_default(),
        (Command::Report, _) | (_, Format::Json) => {
            let mut doc = out.json.clone();
            if let Value::Object(map) = &mut doc {
                if !matches!(cli.command, Command::Report) {
                    map.insert("config".into(), config_echo(cli));
                }
                map.insert("pass".into(), Value::Bool(out.pass));
            }
            serde_json::to_string_pretty(&doc).expect("json serializes") + "\n"
        }
        (_, Format::Csv) => match &out.csv {
            Some(csv) => csv.clone(),
            None => return Err(CliError::Usage("this command has no CSV output".into())),
        },
    };
    match &cli.common.out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = with_pool(cli.common.workers, || run(&cli));
    let outcome = result.and_then(|out| emit(&cli, &out).map(|()| out.pass));
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let record = json!({"error": e.to_string(), "config": config_echo(&cli), "pass": false});
            println!("{}", serde_json::to_string_pretty(&record).expect("json serializes"));
            eprintln!("mehta: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(feature = "parallel")]
fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_pool<T>(_workers: usize, f: impl FnOnce() -> T) -> T {
    f()
}
