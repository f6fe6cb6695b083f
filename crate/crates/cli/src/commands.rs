use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use quadnet::calibration::{calibrate, consistency_report, CalibrationResult, ConsistencyReport, MeasuredDataset};
use quadnet::criteria::{
    closed_form, combination_labels, combinations, evaluate_criteria, evaluate_sums, numeric_optimal_gain,
    optimal_gain_ghz, optimal_gains, optimal_gains_cluster, CriteriaEvaluation, GainVector,
};
use quadnet::gaussian::{combination_variance, snl, to_db, GaussianState, QuadForm, PHYSICALITY_TOL};
use quadnet::homodyne::{emit_trace, TraceConfig};
use quadnet::network::{elaborate, parse_network, simulate as simulate_network, ExperimentConfig, GainChoice};
use quadnet::{Error, Family};
use serde::Serialize;

use crate::error::CliError;
use crate::output::{emit, timestamp, to_json};
use crate::{CriteriaArgs, FitArgs, GainsArgs, SimulateArgs, StateArgs, SweepArgs, TraceArgs};

const DEFAULT_SEED: u64 = 0;
const SEED_VAR: &str = "QUADNET_SEED";
const QUADRATURE_ORDER: [&str; 8] = ["X1", "X2", "X3", "X4", "Y1", "Y2", "Y3", "Y4"];

fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--{flag}: `{s}` is not a number")))
        })
        .collect()
}

fn parse_gains(text: &str) -> Result<GainChoice, CliError> {
    if text.trim().eq_ignore_ascii_case("optimal") {
        return Ok(GainChoice::Optimal);
    }
    let g = match *parse_list("gains", text)?.as_slice() {
        [g] => [g; 4],
        [a, b, c, d] => [a, b, c, d],
        _ => {
            return Err(CliError::Usage(
                "--gains takes `optimal`, one value or four values".into(),
            ))
        }
    };
    Ok(GainChoice::Explicit(GainVector::from_array(g)?))
}

fn parse_efficiencies(text: &str) -> Result<[f64; 4], CliError> {
    match *parse_list("efficiency", text)?.as_slice() {
        [e] => Ok([e; 4]),
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(CliError::Usage("--efficiency takes one value or four values".into())),
    }
}

fn experiment(family: Family, r: f64, gains: &str, efficiency: &str) -> Result<ExperimentConfig, CliError> {
    let config = ExperimentConfig::new(family, r)
        .with_gains(parse_gains(gains)?)
        .with_efficiencies(parse_efficiencies(efficiency)?);
    config.validate()?;
    Ok(config)
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn require_four_modes(state: GaussianState, path: &Path) -> Result<GaussianState, CliError> {
    if state.n_modes() != 4 {
        return Err(CliError::Usage(format!(
            "{}: network leaves {} output modes, expected 4",
            path.display(),
            state.n_modes()
        )));
    }
    Ok(state)
}

fn build_state(args: &StateArgs) -> Result<(ExperimentConfig, GaussianState), CliError> {
    let config = experiment(args.family, args.r, &args.gains, &args.efficiency)?;
    let state = match &args.network {
        Some(path) => {
            let spec = parse_network(&read(path)?).map_err(|e| CliError::Input {
                path: path.clone(),
                source: e.into(),
            })?;
            let state = elaborate(&spec).map_err(|source| CliError::Input {
                path: path.clone(),
                source,
            })?;
            require_four_modes(state, path)?
        }
        None => simulate_network(&config)?,
    };
    Ok((config, state))
}

/// Covariance from `{"covariance": [[..]]}` or `{"covariance": {"matrix": [[..]]}}`.
fn load_state_file(path: &Path) -> Result<GaussianState, CliError> {
    let input = |source: Error| CliError::Input {
        path: path.to_path_buf(),
        source,
    };
    let value: serde_json::Value = serde_json::from_str(&read(path)?).map_err(|e| input(e.into()))?;
    let cov = match &value["covariance"] {
        serde_json::Value::Object(m) => m.get("matrix").cloned().unwrap_or_default(),
        other => other.clone(),
    };
    let rows: Vec<Vec<f64>> = serde_json::from_value(cov).map_err(|e| input(e.into()))?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|row| row.len() != n) {
        return Err(input(Error::Dataset(
            "covariance must be a non-empty square matrix".into(),
        )));
    }
    let cov = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let state = GaussianState::new(DVector::zeros(n), cov).map_err(input)?;
    require_four_modes(state, path)
}

#[derive(Serialize)]
struct CovarianceOut {
    unit: &'static str,
    ordering: [&'static str; 8],
    matrix: Vec<Vec<f64>>,
}

impl CovarianceOut {
    fn of(state: &GaussianState) -> Self {
        let cov = state.cov();
        CovarianceOut {
            unit: "snu",
            ordering: QUADRATURE_ORDER,
            matrix: cov.row_iter().map(|row| row.iter().copied().collect()).collect(),
        }
    }
}

#[derive(Serialize)]
struct CombinationOut {
    label: &'static str,
    coefficients: Vec<f64>,
    variance_snu: f64,
    snl_snu: f64,
    db_rel_snl: f64,
}

#[derive(Serialize)]
struct SimulateOut {
    command: &'static str,
    family: Family,
    r: f64,
    efficiencies: [f64; 4],
    gains: GainVector,
    network: String,
    physical: bool,
    covariance: CovarianceOut,
    combinations: Vec<CombinationOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix_s: Option<u64>,
}

fn combination_rows(
    state: &GaussianState,
    family: Family,
    gains: &GainVector,
) -> Result<Vec<CombinationOut>, CliError> {
    combination_labels(family)
        .into_iter()
        .zip(combinations(family, gains))
        .map(|(label, form)| {
            let variance = combination_variance(state, &form)?;
            let s = snl(&form);
            Ok(CombinationOut {
                label,
                coefficients: form.coeffs().iter().copied().collect(),
                variance_snu: variance,
                snl_snu: s,
                db_rel_snl: to_db(variance / s),
            })
        })
        .collect()
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let (config, state) = build_state(&args.state)?;
    let gains = config.gain_vector();
    let rows = combination_rows(&state, config.family, &gains)?;

    let mut csv = String::from("combination,variance_snu,snl_snu,db_rel_snl\n");
    for row in &rows {
        // clamp -0.00 so an unsqueezed state prints 0.00
        let db = if row.db_rel_snl.abs() < 5e-3 {
            0.0
        } else {
            row.db_rel_snl
        };
        writeln!(
            csv,
            "{},{:.4},{:.4},{:.2}",
            row.label, row.variance_snu, row.snl_snu, db
        )
        .unwrap();
    }
    let out = SimulateOut {
        command: "simulate",
        family: config.family,
        r: config.r,
        efficiencies: config.efficiencies,
        gains,
        network: args
            .state
            .network
            .as_ref()
            .map_or("built-in".into(), |p| p.display().to_string()),
        physical: state.is_physical(PHYSICALITY_TOL),
        covariance: CovarianceOut::of(&state),
        combinations: rows,
        generated_unix_s: timestamp(args.no_timestamp),
    };
    match &args.out {
        Some(dir) => {
            emit(Some(dir), "simulate.json", &to_json(&out)?)?;
            emit(Some(dir), "simulate.csv", &csv)
        }
        None => emit(None, "", &csv),
    }
}

/// Gain name, analytic value, combination index, and where a scalar gain goes.
type GainRow = (&'static str, f64, usize, fn(f64) -> GainVector);

pub fn gains(args: &GainsArgs) -> Result<(), CliError> {
    let families = args.family.map_or(Family::ALL.to_vec(), |f| vec![f]);
    let r = args.r;
    let mut csv = String::from("family,gain,analytic,numeric,difference\n");
    for family in families {
        ExperimentConfig::new(family, r).validate()?;
        // (name, analytic, combination index, which slot the scalar gain fills)
        let rows: Vec<GainRow> = match family {
            Family::Cluster => {
                let c = optimal_gains_cluster(r);
                vec![
                    ("g1", c.g1, 4, |g| GainVector {
                        g1: g,
                        ..GainVector::zeros()
                    }),
                    ("g2", c.g2, 3, |g| GainVector {
                        g2: g,
                        ..GainVector::zeros()
                    }),
                    ("g3", c.g3, 2, |g| GainVector {
                        g3: g,
                        ..GainVector::zeros()
                    }),
                    ("g4", c.g4, 5, |g| GainVector {
                        g4: g,
                        ..GainVector::zeros()
                    }),
                ]
            }
            Family::Ghz => vec![("g", optimal_gain_ghz(r), 0, GainVector::uniform)],
        };
        for (name, analytic, index, slot) in rows {
            // adding 0.0 folds -0.0 into 0.0
            let numeric = numeric_optimal_gain(|g| closed_form(family, r, &slot(g))[index])? + 0.0;
            writeln!(
                csv,
                "{family},{name},{analytic:.10},{numeric:.10},{:.3e}",
                numeric - analytic
            )
            .unwrap();
        }
    }
    emit(None, "", &csv)
}

#[derive(Serialize)]
struct CriteriaOut {
    command: &'static str,
    source: String,
    unit: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    efficiencies: Option<[f64; 4]>,
    verdict: String,
    evaluation: CriteriaEvaluation,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix_s: Option<u64>,
}

pub fn criteria(args: &CriteriaArgs) -> Result<(), CliError> {
    let (source, r, efficiencies, evaluation) = if let Some(path) = &args.from_measured {
        let data = MeasuredDataset::load(path).map_err(|source| CliError::Input {
            path: path.clone(),
            source,
        })?;
        let sigma = data.ordered_sum_sigma().map(Some);
        let gains = optimal_gains(data.family, data.r.value);
        let eval = evaluate_sums(data.family, &gains, data.ordered_sums(), sigma)?;
        (format!("measured:{}", path.display()), Some(data.r.value), None, eval)
    } else if let Some(path) = &args.state_file {
        let state = load_state_file(path)?;
        let config = experiment(
            args.state.family,
            args.state.r,
            &args.state.gains,
            &args.state.efficiency,
        )?;
        let eval = evaluate_criteria(&state, config.family, &config.gain_vector())?;
        (format!("state:{}", path.display()), None, None, eval)
    } else {
        let (config, state) = build_state(&args.state)?;
        let eval = evaluate_criteria(&state, config.family, &config.gain_vector())?;
        let source = args
            .state
            .network
            .as_ref()
            .map_or("simulated".into(), |p| format!("network:{}", p.display()));
        (source, Some(config.r), Some(config.efficiencies), eval)
    };
    let out = CriteriaOut {
        command: "criteria",
        source,
        unit: "snu",
        r,
        efficiencies,
        verdict: evaluation.report.verdict.to_string(),
        evaluation,
        generated_unix_s: timestamp(args.no_timestamp),
    };
    emit(args.out.as_deref(), "criteria.json", &to_json(&out)?)
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    if args.r_min.is_nan() || args.r_max.is_nan() || args.r_min > args.r_max {
        return Err(CliError::Usage(format!(
            "--r-min {} exceeds --r-max {}",
            args.r_min, args.r_max
        )));
    }
    if args.steps == 0 {
        return Err(CliError::Usage("--steps must be at least 1".into()));
    }
    let family = args.family;
    let t = family.tag();
    let mut csv = format!("r,I^{t}_snu,II^{t}_snu,III^{t}_snu,verdict\n");
    for i in 0..args.steps {
        let r = if args.steps == 1 {
            args.r_min
        } else {
            args.r_min + (args.r_max - args.r_min) * i as f64 / (args.steps - 1) as f64
        };
        let config = experiment(family, r, &args.gains, &args.efficiency)?;
        let eval = evaluate_criteria(&simulate_network(&config)?, family, &config.gain_vector())?;
        let s: Vec<f64> = eval.results.iter().map(|c| c.sum).collect();
        writeln!(
            csv,
            "{r:.6},{:.6},{:.6},{:.6},{}",
            s[0], s[1], s[2], eval.report.verdict
        )
        .unwrap();
    }
    emit(args.out.as_deref(), "sweep.csv", &csv)
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_VAR) {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_VAR}=`{text}` is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

pub fn trace(args: &TraceArgs) -> Result<(), CliError> {
    let (_, state) = build_state(&args.state)?;
    let form = QuadForm::parse(4, &args.combination)?;
    let config = TraceConfig {
        analysis_frequency_hz: args.analysis_frequency,
        rbw_hz: args.rbw,
        vbw_hz: args.vbw,
        duration_s: args.duration,
        points: args.points,
        samples_per_point: args.samples_per_point,
        seed: resolve_seed(args.seed)?,
    };
    let trace = emit_trace(&state, &form, &config)?;
    emit(args.out.as_deref(), "trace.csv", &trace.to_csv())
}

#[derive(Serialize)]
struct Alternatives<'a> {
    uniform_efficiency_ideal_gains: &'a CalibrationResult,
    uniform_efficiency_reoptimized_gains: &'a CalibrationResult,
    co_fit_uniform_efficiency: &'a CalibrationResult,
}

#[derive(Serialize)]
struct FitOut<'a> {
    command: &'static str,
    family: Family,
    result: &'a CalibrationResult,
    report: &'a ConsistencyReport,
    alternatives: Alternatives<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    generated_unix_s: Option<u64>,
}

fn text_report(fit: &CalibrationResult, report: &ConsistencyReport) -> String {
    let mut s = String::new();
    let eta = fit.efficiencies.map(|e| format!("{e:.3}")).join(", ");
    writeln!(
        s,
        "family: {}  model: {:?}  method: {:?}",
        report.family, report.model, report.method
    )
    .unwrap();
    writeln!(s, "efficiencies: [{eta}]").unwrap();
    let gains: Vec<String> = fit
        .combination_gains
        .iter()
        .map(|g| g.map_or("-".into(), |g| format!("{g:.3}")))
        .collect();
    writeln!(s, "combination gains: [{}]", gains.join(", ")).unwrap();
    writeln!(
        s,
        "rms: {:.3} dB_rel_SNL  max sum deviation: {:.3} snu",
        fit.rms_db, fit.max_sum_deviation
    )
    .unwrap();
    writeln!(s, "{}", report.degrees_of_freedom).unwrap();
    writeln!(s).unwrap();
    writeln!(
        s,
        "{:<16} {:>8} {:>8} {:>8} {:>9}  unit",
        "observable", "measured", "sigma", "model", "residual"
    )
    .unwrap();
    for row in &report.rows {
        writeln!(
            s,
            "{:<16} {:>8.3} {:>8.3} {:>8.3} {:>9.3}  {}{}",
            row.observable,
            row.measured,
            row.sigma,
            row.model,
            row.residual,
            row.unit,
            if row.flagged { "  FLAGGED" } else { "" }
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    for check in &report.sum_checks {
        writeln!(
            s,
            "{}: {}{}",
            check.criterion,
            check.note,
            if check.consistent { "" } else { "  INCONSISTENT" }
        )
        .unwrap();
    }
    writeln!(s).unwrap();
    writeln!(s, "{}", report.caveat).unwrap();
    s
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let path = &args.dataset;
    let data = MeasuredDataset::from_json(&read(path)?).map_err(|source| CliError::Input {
        path: path.clone(),
        source,
    })?;
    let summary = calibrate(&data)?;
    let best = &summary.co_fit_per_mode;
    let report = consistency_report(&data, best);
    let out = FitOut {
        command: "fit",
        family: data.family,
        result: best,
        report: &report,
        alternatives: Alternatives {
            uniform_efficiency_ideal_gains: &summary.uniform.ideal_gains,
            uniform_efficiency_reoptimized_gains: &summary.uniform.reoptimized_gains,
            co_fit_uniform_efficiency: &summary.co_fit_uniform,
        },
        generated_unix_s: timestamp(args.no_timestamp),
    };
    let json = to_json(&out)?;
    let text = text_report(best, &report);
    match &args.out {
        Some(dir) => {
            emit(Some(dir), "fit.json", &json)?;
            emit(Some(dir), "fit_report.txt", &text)
        }
        None => {
            eprint!("{text}");
            emit(None, "", &json)
        }
    }
}
