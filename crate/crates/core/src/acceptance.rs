//! The verification suite: each criterion runs one family of checks and
//! returns machine-readable records with a pass flag.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exec::{Exec, Seed};
use crate::mehta::{
    detmoment_identity_check, exp_det_pointwise_check, kacrice_vs_empirical, mehta_closed_form, mehta_mc,
    mehta_quadrature, mehta_ratio, real_line_cutoff, reproduce_zm,
};
use crate::regression::conditioned_hessian_audit;
use crate::spectral::eigenvalues;
use crate::spherefield::{find_critical_points, FinderOptions};
use crate::stats::{EstimatorResult, Z_THRESHOLD};
use crate::symspace::{covariance_audit, goe_unchecked, EnsembleParams};

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "covariance audit"),
    (2, "Mehta closed form vs quadrature"),
    (3, "Mehta Monte Carlo"),
    (4, "Mehta recursion"),
    (5, "expected |det| identity, integrated"),
    (6, "expected |det| identity, pointwise"),
    (7, "exact critical-point count"),
    (8, "Kac-Rice identity"),
    (9, "end-to-end Mehta reproduction"),
    (10, "conditioned Hessian regression"),
    (11, "determinism"),
];

/// One checked quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub op: String,
    pub params: Value,
    pub seed: u64,
    pub n_samples: u64,
    pub estimate: f64,
    pub std_error: f64,
    pub reference: Option<f64>,
    pub z_score: Option<f64>,
    /// Absolute tolerance for deterministic checks; such records have no z.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    pub pass: bool,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub detail: Value,
}

impl Record {
    pub fn from_estimator(op: &str, params: Value, r: &EstimatorResult, wall_time_s: f64) -> Self {
        Record {
            op: op.into(),
            params,
            seed: r.seed,
            n_samples: r.n_samples,
            estimate: r.estimate,
            std_error: r.std_error,
            reference: r.reference,
            z_score: r.z_score,
            tolerance: None,
            pass: r.pass(),
            wall_time_s,
            detail: Value::Null,
        }
    }

    /// Deterministic comparison |estimate − reference| ≤ tolerance.
    pub fn within(op: &str, params: Value, estimate: f64, reference: f64, tolerance: f64, wall_time_s: f64) -> Self {
        Record {
            op: op.into(),
            params,
            seed: 0,
            n_samples: 0,
            estimate,
            std_error: 0.0,
            reference: Some(reference),
            z_score: None,
            tolerance: Some(tolerance),
            pass: (estimate - reference).abs() <= tolerance,
            wall_time_s,
            detail: Value::Null,
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    /// The pass flag re-derived from the stored numbers: a stored pass is
    /// overridden by |z| > 4 or by a tolerance breach.
    pub fn verdict(&self) -> bool {
        let z_ok = self.z_score.is_none_or(|z| z.abs() <= Z_THRESHOLD);
        let tol_ok = match (self.tolerance, self.reference) {
            (Some(t), Some(r)) => (self.estimate - r).abs() <= t,
            _ => true,
        };
        self.pass && z_ok && tol_ok
    }

    /// How far the record is from failing, for picking a row to display.
    pub fn severity(&self) -> f64 {
        match (self.z_score, self.tolerance, self.reference) {
            (Some(z), _, _) => z.abs() / Z_THRESHOLD,
            (None, Some(t), Some(r)) if t > 0.0 => (self.estimate - r).abs() / t,
            (None, Some(_), Some(r)) => {
                if self.estimate == r {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: String,
    pub pass: bool,
    pub wall_time_s: f64,
    pub records: Vec<Record>,
}

impl CriterionReport {
    fn new(id: u8, records: Vec<Record>, wall_time_s: f64) -> Self {
        let name = CRITERIA.iter().find(|(i, _)| *i == id).map_or("", |(_, n)| n);
        CriterionReport {
            id,
            name: name.into(),
            pass: !records.is_empty() && records.iter().all(Record::verdict),
            wall_time_s,
            records,
        }
    }

    /// The first failing record, else the one closest to failing.
    pub fn worst(&self) -> Option<&Record> {
        self.records
            .iter()
            .find(|r| !r.verdict())
            .or_else(|| self.records.iter().max_by(|a, b| a.severity().total_cmp(&b.severity())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: Value,
    pub criteria: Vec<CriterionReport>,
    pub pass: bool,
    pub wall_time_s: f64,
}

/// Runs the suite. `n` overrides the Monte Carlo sample size of every
/// sampling criterion; criterion 7 always checks 10^4 matrices per m.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SuiteConfig {
    pub seed: Seed,
    pub n: Option<usize>,
    pub exec: Exec,
}

impl SuiteConfig {
    pub fn new(seed: u64) -> Self {
        SuiteConfig {
            seed: Seed(seed),
            n: None,
            exec: Exec::Parallel,
        }
    }

    fn n_or(&self, default: usize) -> usize {
        self.n.unwrap_or(default)
    }

    fn seed_for(&self, id: u8) -> Seed {
        self.seed.derive("criterion").derive_index(u64::from(id))
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let out = f()?;
    Ok((out, t.elapsed().as_secs_f64()))
}

pub fn run_criterion(id: u8, cfg: &SuiteConfig) -> Result<CriterionReport> {
    let start = Instant::now();
    let seed = cfg.seed_for(id);
    let exec = cfg.exec;
    let records = match id {
        1 => covariance(cfg.n_or(200_000), seed, exec)?,
        2 => quadrature()?,
        3 => monte_carlo(cfg.n_or(1_000_000), seed, exec)?,
        4 => recursion()?,
        5 => integrated(cfg.n_or(500_000), seed, exec)?,
        6 => pointwise(cfg.n_or(1_000_000), seed, exec)?,
        7 => exact_count(10_000, seed, exec)?,
        8 => kac_rice(cfg.n_or(200_000), seed, exec)?,
        9 => reproduction(cfg.n_or(1_000_000), seed, exec)?,
        10 => regression(cfg.n_or(200_000), seed, exec)?,
        11 => determinism(seed)?,
        _ => return Err(Error::InvalidParams(format!("no criterion {id}"))),
    };
    Ok(CriterionReport::new(id, records, start.elapsed().as_secs_f64()))
}

pub fn run_suite(cfg: &SuiteConfig, config_echo: Value) -> Result<Report> {
    let start = Instant::now();
    let criteria = CRITERIA
        .iter()
        .map(|(id, _)| run_criterion(*id, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(Report {
        config: config_echo,
        pass: criteria.iter().all(|c| c.pass),
        criteria,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

fn covariance(n: usize, seed: Seed, exec: Exec) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (m, u, v) in [(4, 0.0, 0.5), (3, 1.0, 1.0), (3, 1.0, 0.5)] {
        let params = EnsembleParams::new(m, u, v)?;
        let s = seed.derive(&format!("{m}/{u}/{v}"));
        let (entries, t) = timed(|| Ok(covariance_audit(&params, n, s, exec)))?;
        for e in entries {
            out.push(Record {
                op: "covariance_audit".into(),
                params: json!({"m": m, "u": u, "v": v, "first": e.first, "second": e.second}),
                seed: s.0,
                n_samples: n as u64,
                estimate: e.empirical,
                std_error: e.std_error,
                reference: Some(e.reference),
                z_score: e.z_score,
                tolerance: None,
                pass: e.pass(),
                wall_time_s: t,
                detail: Value::Null,
            });
        }
    }
    Ok(out)
}

fn quadrature() -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (m, literal, tol) in [(1, 2.506_628, 2e-6), (2, 7.089_815, 2e-6), (3, 26.657_35, 1e-4)] {
        let (q, t) = timed(|| mehta_quadrature(m))?;
        let exact = mehta_closed_form(m)?;
        out.push(
            Record::within("mehta_quadrature", json!({"m": m}), q.value, exact, tol, t)
                .with_detail(json!({"quadrature_error": q.error})),
        );
        out.push(Record::within("mehta_quadrature", json!({"m": m, "against": "tabulated"}), q.value, literal, tol, t));
    }
    Ok(out)
}

fn monte_carlo(n: usize, seed: Seed, exec: Exec) -> Result<Vec<Record>> {
    (2..=5)
        .map(|m| {
            let s = seed.derive_index(m as u64);
            let (r, t) = timed(|| mehta_mc(m, n, s, exec))?;
            Ok(Record::from_estimator("mehta_mc", json!({"m": m}), &r, t))
        })
        .collect()
}

fn recursion() -> Result<Vec<Record>> {
    (1..=20)
        .map(|m| {
            let (pair, t) = timed(|| Ok((mehta_ratio(m)? * mehta_closed_form(m)?, mehta_closed_form(m + 1)?)))?;
            let (lhs, rhs) = pair;
            Ok(Record::within("mehta_ratio", json!({"m": m}), lhs, rhs, 1e-12 * rhs.abs(), t))
        })
        .collect()
}

fn integrated(n: usize, seed: Seed, exec: Exec) -> Result<Vec<Record>> {
    [(1, 0.5), (2, 0.5), (1, 2.0)]
        .into_iter()
        .enumerate()
        .map(|(k, (m, v))| {
            let s = seed.derive_index(k as u64);
            let (r, t) = timed(|| detmoment_identity_check(m, v, n, s, exec))?;
            Ok(Record::from_estimator("detmoment_identity_check", json!({"m": m, "v": v}), &r, t))
        })
        .collect()
}

fn pointwise(n: usize, seed: Seed, exec: Exec) -> Result<Vec<Record>> {
    [(1, 0.5, 0.0), (1, 0.5, 1.0), (2, 0.5, 0.0)]
        .into_iter()
        .enumerate()
        .map(|(k, (m, v, c))| {
            let s = seed.derive_index(k as u64);
            let (p, t) = timed(|| exp_det_pointwise_check(m, v, c, n, s, exec))?;
            let combined = p.lhs.std_error.hypot(p.rhs_std_error);
            Ok(Record {
                op: "exp_det_pointwise_check".into(),
                params: json!({"m": m, "v": v, "c": c}),
                seed: s.0,
                n_samples: n as u64,
                estimate: p.lhs.estimate,
                std_error: combined,
                reference: Some(p.rhs_estimate),
                z_score: if p.degraded { p.integrated.as_ref().and_then(|r| r.z_score) } else { p.z_score },
                tolerance: None,
                pass: p.pass(),
                wall_time_s: t,
                detail: json!({
                    "bandwidth": p.bandwidth,
                    "bias_bound": p.bias_bound,
                    "degraded": p.degraded,
                    "lhs_std_error": p.lhs.std_error,
                    "rhs_std_error": p.rhs_std_error,
                }),
            })
        })
        .collect()
}

#[derive(Default)]
struct CountTally {
    samples: usize,
    failures: usize,
    max_value_error: f64,
    first_failure: Option<String>,
}

fn exact_count(n: usize, seed: Seed, exec: Exec) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for m in 1..=3usize {
        let s = seed.derive_index(m as u64);
        let opts = FinderOptions::for_sphere(m);
        let (tally, t) = timed(|| {
            let per_sample = exec.map_range(n, |i| {
                let mut rng = s.derive("matrix").stream(i as u64);
                let a = goe_unchecked(m + 1, 1.0, &mut rng);
                let eig = eigenvalues(&a);
                match find_critical_points(&a, &opts, s.derive_index(i as u64), Exec::Sequential) {
                    Err(e) => Err(format!("sample {i}: {e}")),
                    Ok(points) => {
                        if points.len() != 2 * (m + 1) {
                            return Err(format!("sample {i}: {} points", points.len()));
                        }
                        let mut err = 0.0_f64;
                        for (k, p) in points.iter().enumerate() {
                            err = err.max((p.value - eig[k / 2]).abs());
                        }
                        let mut idx: Vec<usize> = points.iter().map(|p| p.morse_index).collect();
                        idx.sort_unstable();
                        let expect: Vec<usize> = (0..=m).flat_map(|k| [k, k]).collect();
                        if err > 1e-8 {
                            Err(format!("sample {i}: value error {err:e}"))
                        } else if idx != expect {
                            Err(format!("sample {i}: Morse indices {idx:?}"))
                        } else {
                            Ok(err)
                        }
                    }
                }
            });
            let mut tally = CountTally {
                samples: n,
                ..CountTally::default()
            };
            for r in per_sample {
                match r {
                    Ok(e) => tally.max_value_error = tally.max_value_error.max(e),
                    Err(msg) => {
                        tally.failures += 1;
                        tally.first_failure.get_or_insert(msg);
                    }
                }
            }
            Ok(tally)
        })?;
        out.push(
            Record {
                seed: s.0,
                n_samples: tally.samples as u64,
                ..Record::within("find_critical_points", json!({"m": m, "v": 1.0}), tally.failures as f64, 0.0, 0.0, t)
            }
            .with_detail(json!({
                "failures": tally.failures,
                "max_value_error": tally.max_value_error,
                "first_failure": tally.first_failure,
            })),
        );
    }
    Ok(out)
}

fn kac_rice(n: usize, seed: Seed, exec: Exec) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (m, v) in [(1usize, 1.0), (2, 1.0)] {
        let l = real_line_cutoff(m, v);
        for (label, a, b) in [("R", -l, l), ("[0,inf)", 0.0, l), ("[-1,1]", -1.0, 1.0)] {
            let s = seed.derive(&format!("{m}/{v}/{label}"));
            let (cmp, t) = timed(|| kacrice_vs_empirical(m, v, a, b, n, s, exec))?;
            let params = |pair: &str| json!({"m": m, "v": v, "C": label, "a": a, "b": b, "pair": pair});
            let pair_record = |pair: &str, x: &EstimatorResult, y: &EstimatorResult, z: Option<f64>| Record {
                op: "kacrice_vs_empirical".into(),
                params: params(pair),
                seed: s.0,
                n_samples: n as u64,
                estimate: x.estimate,
                std_error: x.std_error.hypot(y.std_error),
                reference: Some(y.estimate),
                z_score: z,
                tolerance: None,
                pass: z.is_some_and(|z| z.abs() <= Z_THRESHOLD),
                wall_time_s: t,
                detail: json!({"estimate_std_error": x.std_error, "reference_std_error": y.std_error}),
            };
            out.push(pair_record("kac_rice/empirical", &cmp.kac_rice, &cmp.empirical, cmp.z_kac_rice_vs_empirical));
            out.push(pair_record(
                "correlation/empirical",
                &cmp.correlation,
                &cmp.empirical,
                cmp.z_correlation_vs_empirical,
            ));
            out.push(pair_record(
                "kac_rice/correlation",
                &cmp.kac_rice,
                &cmp.correlation,
                cmp.z_kac_rice_vs_correlation,
            ));
            if label == "R" {
                let exact = cmp.empirical.clone().with_reference(2.0 * (m + 1) as f64);
                let mut r = Record::from_estimator("kacrice_vs_empirical", params("empirical/exact"), &exact, t);
                r.pass = exact.std_error == 0.0 && exact.pass();
                out.push(r);
            }
        }
    }
    Ok(out)
}

fn reproduction(n: usize, seed: Seed, exec: Exec) -> Result<Vec<Record>> {
    let (rows, t) = timed(|| reproduce_zm(4, n, seed, exec))?;
    let mut out = Vec::new();
    for row in rows {
        out.push(
            Record::from_estimator("reproduce_zm", json!({"m": row.m}), &row.z, t).with_detail(json!({
                "ratio": row.ratio.estimate,
                "ratio_std_error": row.ratio.std_error,
                "ratio_reference": row.ratio.reference,
                "kac_rice_mass": row.kac_rice_mass.estimate,
                "kac_rice_mass_std_error": row.kac_rice_mass.std_error,
                "kac_rice_mass_z": row.kac_rice_mass.z_score,
            })),
        );
    }
    Ok(out)
}

fn regression(n: usize, seed: Seed, exec: Exec) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (k, (m, v)) in [(2usize, 1.0), (3, 0.5)].into_iter().enumerate() {
        let s = seed.derive_index(k as u64);
        let (audit, t) = timed(|| conditioned_hessian_audit(m, v, n, s, exec))?;
        for e in &audit.entries {
            out.push(Record {
                op: "conditioned_hessian_audit".into(),
                params: json!({"m": m, "v": v, "first": e.first, "second": e.second, "coords": "omega"}),
                seed: s.0,
                n_samples: n as u64,
                estimate: e.empirical,
                std_error: e.std_error,
                reference: Some(e.reference),
                z_score: e.z_score,
                tolerance: None,
                pass: e.pass(),
                wall_time_s: t,
                detail: Value::Null,
            });
        }
        out.push(Record::within(
            "total_variance_defect",
            json!({"m": m, "v": v}),
            audit.total_variance_defect,
            0.0,
            1e-10,
            t,
        ));
    }
    Ok(out)
}

/// In-process witness: the same estimator under the sequential and parallel
/// executors, and twice in a row, must agree bit for bit.
fn determinism(seed: Seed) -> Result<Vec<Record>> {
    let n = 50_000;
    let ((a, b, c), t) = timed(|| {
        Ok((
            mehta_mc(3, n, seed, Exec::Sequential)?,
            mehta_mc(3, n, seed, Exec::Parallel)?,
            mehta_mc(3, n, seed, Exec::Parallel)?,
        ))
    })?;
    let identical = a == b && b == c;
    let mut r = Record::within(
        "determinism",
        json!({"m": 3, "estimator": "mehta_mc"}),
        (a.estimate - b.estimate).abs().max((b.estimate - c.estimate).abs()),
        0.0,
        0.0,
        t,
    );
    r.seed = seed.0;
    r.n_samples = n as u64;
    r.pass = identical;
    Ok(vec![r.with_detail(json!({
        "sequential": a.estimate.to_bits(),
        "parallel": b.estimate.to_bits(),
        "parallel_repeat": c.estimate.to_bits(),
    }))])
}

/// Plain-text table: one row per criterion with its worst record.
pub fn render_report(report: &Report) -> (String, bool) {
    let mut s = format!(
        "{:<4} {:<38} {:>16} {:>16} {:>10} {}\n",
        "id", "criterion", "estimate", "reference", "z", "status"
    );
    let mut all = true;
    let mut criteria: Vec<&CriterionReport> = report.criteria.iter().collect();
    criteria.sort_by_key(|c| c.id);
    for c in criteria {
        let ok = c.pass && c.records.iter().all(Record::verdict);
        all &= ok;
        let (est, reference, z) = match c.worst() {
            Some(r) => (
                format!("{:.8}", r.estimate),
                r.reference.map_or("-".into(), |x| format!("{x:.8}")),
                r.z_score.map_or("-".into(), |z| format!("{z:.3}")),
            ),
            None => ("-".into(), "-".into(), "-".into()),
        };
        s.push_str(&format!(
            "{:<4} {:<38} {:>16} {:>16} {:>10} {}\n",
            c.id,
            c.name,
            est,
            reference,
            z,
            if ok { "PASS" } else { "FAIL" }
        ));
    }
    (s, all)
}

/// Removes every `wall_time_s` field, recursively.
pub fn strip_wall_time(value: &mut Value) {
    match value {
        Value::Object(map) => {
            map.remove("wall_time_s");
            map.values_mut().for_each(strip_wall_time);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_with(records: Vec<Record>) -> Report {
        Report {
            config: Value::Null,
            criteria: vec![CriterionReport::new(3, records, 0.0)],
            pass: true,
            wall_time_s: 0.0,
        }
    }

    fn estimator_record(z: f64) -> Record {
        let r = EstimatorResult::new(1.0 + z * 0.1, 0.1, 100, 0).with_reference(1.0);
        Record::from_estimator("mehta_mc", json!({"m": 2}), &r, 0.0)
    }

    #[test]
    fn empty_report_renders_header_only() {
        let report = Report {
            config: Value::Null,
            criteria: vec![],
            pass: true,
            wall_time_s: 0.0,
        };
        let (text, ok) = render_report(&report);
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("id"));
        assert!(ok);
    }

    #[test]
    fn single_passing_row() {
        let (text, ok) = render_report(&report_with(vec![estimator_record(1.0)]));
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().ends_with("PASS"));
        assert!(ok);
    }

    #[test]
    fn z_of_five_fails_even_if_flagged_pass() {
        let mut r = estimator_record(5.0);
        r.pass = true;
        let mut report = report_with(vec![r]);
        report.criteria[0].pass = true;
        let (text, ok) = render_report(&report);
        assert!(text.lines().nth(1).unwrap().ends_with("FAIL"));
        assert!(!ok);
    }

    #[test]
    fn strip_is_recursive() {
        let mut v = json!({"wall_time_s": 1, "a": [{"wall_time_s": 2, "b": 3}]});
        strip_wall_time(&mut v);
        assert_eq!(v, json!({"a": [{"b": 3}]}));
    }

    #[test]
    fn report_round_trips_through_json() {
        let report = report_with(vec![estimator_record(0.5)]);
        let text = serde_json::to_string(&report).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn cheap_criteria_pass() {
        let cfg = SuiteConfig::new(1);
        assert!(run_criterion(2, &cfg).unwrap().pass);
        assert!(run_criterion(4, &cfg).unwrap().pass);
        assert!(run_criterion(11, &cfg).unwrap().pass);
        assert!(run_criterion(12, &cfg).is_err());
    }
}
