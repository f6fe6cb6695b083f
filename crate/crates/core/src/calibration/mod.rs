//! Fitting the lossy network model to measured noise levels.
//!
//! Measured values are noise reductions below the shot-noise limit (dB) for
//! the six combinations of a family, and the three criterion sums. The model
//! is the ideal network followed by loss on each output; the electronic gains
//! are either taken from theory or fitted alongside the efficiencies.

mod dataset;
mod lm;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::criteria::{
    combination_labels, combination_with_gain, combinations, criterion_components, is_gain_bearing,
    numeric_optimal_gain, optimal_gains, CriterionIndex, CriterionLabel, GainVector,
};
use crate::error::{check_range, Error, Result};
use crate::family::Family;
use crate::gaussian::{combination_variance, snl, to_db, GaussianState, QuadForm, VACUUM_VARIANCE};
use crate::network::{simulate, ExperimentConfig, GainChoice};

pub use dataset::{ComponentMeasurement, MeasuredDataset, Measurement, SumMeasurement};
pub use lm::{minimize, LmOptions, LmOutcome};

/// Gains applied to the six combinations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainSetting {
    /// One gain per electronic channel, shared by every combination using it.
    Vector(GainVector),
    /// An independent gain per combination; entries of combinations without
    /// a gain are ignored. All gain slots of one combination share the value.
    PerCombination([f64; 6]),
}

impl From<GainVector> for GainSetting {
    fn from(g: GainVector) -> Self {
        GainSetting::Vector(g)
    }
}

impl GainSetting {
    pub fn forms(&self, family: Family) -> [QuadForm; 6] {
        match self {
            GainSetting::Vector(g) => combinations(family, g),
            GainSetting::PerCombination(g) => std::array::from_fn(|i| combination_with_gain(family, i, g[i])),
        }
    }
}

/// Per-combination view of a gain vector (GHZ combinations take their first
/// gain slot).
pub fn combination_gains(family: Family, g: &GainVector) -> [f64; 6] {
    match family {
        Family::Cluster => [0.0, 0.0, g.g3, g.g2, g.g1, g.g4],
        Family::Ghz => [g.g3, g.g1, g.g1, 0.0, 0.0, 0.0],
    }
}

fn gain_bearing(family: Family) -> Vec<usize> {
    (0..6).filter(|&i| is_gain_bearing(family, i)).collect()
}

/// Model values of everything a dataset records.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub variances: [f64; 6],
    pub snl: [f64; 6],
    pub db_below_snl: [f64; 6],
    pub sums: [f64; 3],
}

pub fn predict_from_state(state: &GaussianState, family: Family, gains: &GainSetting) -> Result<Prediction> {
    let forms = gains.forms(family);
    let mut variances = [0.0; 6];
    for (v, f) in variances.iter_mut().zip(&forms) {
        *v = combination_variance(state, f)?;
    }
    let snl = forms.each_ref().map(snl);
    let db_below_snl = std::array::from_fn(|i| -to_db(variances[i] / snl[i]));
    let sums = criterion_components(family).map(|(u, v)| variances[u] + variances[v]);
    Ok(Prediction {
        variances,
        snl,
        db_below_snl,
        sums,
    })
}

/// Elaborates the network with detection efficiency `efficiencies[k]` on
/// output `k` and evaluates the six combinations and three sums.
pub fn predict_measured(
    r: f64,
    efficiencies: [f64; 4],
    gains: impl Into<GainSetting>,
    family: Family,
) -> Result<Prediction> {
    let config = ExperimentConfig::new(family, r)
        .with_efficiencies(efficiencies)
        .with_gains(GainChoice::Optimal);
    predict_from_state(&simulate(&config)?, family, &gains.into())
}

/// Output loss applied directly to a four-mode covariance.
fn apply_output_loss(ideal: &GaussianState, etas: &[f64; 4]) -> GaussianState {
    let n = ideal.n_modes();
    let d = DVector::from_fn(2 * n, |i, _| etas[i % n].sqrt());
    let mut cov = DMatrix::from_fn(2 * n, 2 * n, |i, j| d[i] * ideal.cov()[(i, j)] * d[j]);
    for i in 0..2 * n {
        cov[(i, i)] += (1.0 - etas[i % n]) * VACUUM_VARIANCE;
    }
    GaussianState::new_unchecked(ideal.mean().component_mul(&d), cov).expect("same shape as the ideal state")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EfficiencyModel {
    /// One efficiency for all four detectors.
    Uniform,
    /// An efficiency per detector.
    PerMode,
}

impl EfficiencyModel {
    fn n_params(self) -> usize {
        match self {
            EfficiencyModel::Uniform => 1,
            EfficiencyModel::PerMode => 4,
        }
    }

    fn expand(self, p: &[f64]) -> [f64; 4] {
        match self {
            EfficiencyModel::Uniform => [p[0]; 4],
            EfficiencyModel::PerMode => [p[0], p[1], p[2], p[3]],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    /// Efficiency only, gains held at their lossless optimum.
    IdealGains,
    /// Efficiency only, gains re-minimized on the lossy state at every step.
    ReoptimizedGains,
    /// Efficiencies and per-combination gains fitted together to all
    /// components and sums.
    CoFit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub family: Family,
    pub model: EfficiencyModel,
    pub method: FitMethod,
    pub efficiencies: [f64; 4],
    /// Gain of each combination; `None` where the combination has no gain.
    pub combination_gains: [Option<f64>; 6],
    pub prediction: Prediction,
    /// Model minus measured noise reduction, dB.
    pub residuals_db: [f64; 6],
    /// Model minus measured criterion sums, shot-noise units.
    pub sum_residuals: [f64; 3],
    /// RMS of `residuals_db`.
    pub rms_db: f64,
    pub max_sum_deviation: f64,
    pub n_parameters: usize,
    pub n_observables: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl CalibrationResult {
    fn build(
        data: &MeasuredDataset,
        model: EfficiencyModel,
        method: FitMethod,
        efficiencies: [f64; 4],
        gains: [f64; 6],
        prediction: Prediction,
        fit: (usize, usize, usize, bool),
    ) -> Self {
        let family = data.family;
        let measured = data.ordered_db();
        let sums = data.ordered_sums();
        let residuals_db: [f64; 6] = std::array::from_fn(|i| prediction.db_below_snl[i] - measured[i]);
        let sum_residuals: [f64; 3] = std::array::from_fn(|i| prediction.sums[i] - sums[i]);
        let rms_db = (residuals_db.iter().map(|r| r * r).sum::<f64>() / 6.0).sqrt();
        let max_sum_deviation = sum_residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let (n_parameters, n_observables, iterations, converged) = fit;
        CalibrationResult {
            family,
            model,
            method,
            efficiencies,
            combination_gains: std::array::from_fn(|i| is_gain_bearing(family, i).then_some(gains[i])),
            prediction,
            residuals_db,
            sum_residuals,
            rms_db,
            max_sum_deviation,
            n_parameters,
            n_observables,
            iterations,
            converged,
        }
    }

    /// Mean detection efficiency.
    pub fn mean_efficiency(&self) -> f64 {
        self.efficiencies.iter().sum::<f64>() / 4.0
    }

    pub fn degrees_of_freedom(&self) -> isize {
        self.n_observables as isize - self.n_parameters as isize
    }

    /// Fitted gains folded back into a gain vector, where the family allows
    /// it (cluster always; GHZ only reads its three combination gains).
    pub fn gain_setting(&self) -> GainSetting {
        GainSetting::PerCombination(self.combination_gains.map(|g| g.unwrap_or(0.0)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainMode {
    Ideal,
    Reoptimized,
}

/// Spacing of the efficiency grid.
pub const EFFICIENCY_GRID_STEP: f64 = 0.001;

fn reoptimized_gains(state: &GaussianState, family: Family) -> Result<[f64; 6]> {
    let mut gains = [0.0; 6];
    for i in gain_bearing(family) {
        gains[i] = numeric_optimal_gain(|g| {
            combination_variance(state, &combination_with_gain(family, i, g)).unwrap_or(f64::NAN)
        })?;
    }
    Ok(gains)
}

fn ideal_state(data: &MeasuredDataset) -> Result<GaussianState> {
    check_range("r", data.r.value, 0.0, crate::gaussian::MAX_SQUEEZING)?;
    simulate(&ExperimentConfig::new(data.family, data.r.value))
}

/// Uniform efficiency by grid search over `[0, 1]` plus a parabolic
/// refinement, minimizing squared dB residuals of the six components.
pub fn fit_efficiency_grid(data: &MeasuredDataset, mode: GainMode) -> Result<CalibrationResult> {
    data.validate()?;
    let family = data.family;
    let ideal = ideal_state(data)?;
    let measured = data.ordered_db();
    let ideal_gains = combination_gains(family, &optimal_gains(family, data.r.value));

    let evaluate = |eta: f64| -> Result<(f64, [f64; 6], Prediction)> {
        let state = apply_output_loss(&ideal, &[eta; 4]);
        let gains = match mode {
            GainMode::Ideal => ideal_gains,
            GainMode::Reoptimized => reoptimized_gains(&state, family)?,
        };
        let p = predict_from_state(&state, family, &GainSetting::PerCombination(gains))?;
        let cost = p.db_below_snl.iter().zip(&measured).map(|(a, b)| (a - b).powi(2)).sum();
        Ok((cost, gains, p))
    };

    let steps = (1.0 / EFFICIENCY_GRID_STEP).round() as usize;
    let costs = (0..=steps)
        .into_par_iter()
        .map(|k| evaluate(k as f64 * EFFICIENCY_GRID_STEP).map(|e| e.0))
        .collect::<Result<Vec<f64>>>()?;
    let (lo, hi) = costs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
        (lo.min(c), hi.max(c))
    });
    let spread = hi - lo;
    if spread.is_nan() || spread <= 1e-12 * lo.abs().max(1.0) {
        return Err(Error::NonConvergence("residual is flat in the efficiency".into()));
    }
    let best = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .expect("grid is nonempty");
    let mut eta = best as f64 * EFFICIENCY_GRID_STEP;
    if best > 0 && best < steps {
        let (fm, f0, fp) = (costs[best - 1], costs[best], costs[best + 1]);
        let curvature = fm - 2.0 * f0 + fp;
        if curvature > 0.0 {
            let shift = (0.5 * (fm - fp) / curvature).clamp(-1.0, 1.0);
            let refined = (eta + shift * EFFICIENCY_GRID_STEP).clamp(0.0, 1.0);
            if evaluate(refined)?.0 <= f0 {
                eta = refined;
            }
        }
    }
    let (_, gains, prediction) = evaluate(eta)?;
    let method = match mode {
        GainMode::Ideal => FitMethod::IdealGains,
        GainMode::Reoptimized => FitMethod::ReoptimizedGains,
    };
    Ok(CalibrationResult::build(
        data,
        EfficiencyModel::Uniform,
        method,
        [eta; 4],
        gains,
        prediction,
        (1, 6, steps + 1, true),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformEfficiencyFits {
    pub ideal_gains: CalibrationResult,
    pub reoptimized_gains: CalibrationResult,
}

/// Both single-efficiency grid fits.
pub fn fit_uniform_efficiency(data: &MeasuredDataset) -> Result<UniformEfficiencyFits> {
    Ok(UniformEfficiencyFits {
        ideal_gains: fit_efficiency_grid(data, GainMode::Ideal)?,
        reoptimized_gains: fit_efficiency_grid(data, GainMode::Reoptimized)?,
    })
}

/// Bound on fitted gain magnitudes.
pub const GAIN_LIMIT: f64 = 3.0;
const START_EFFICIENCIES: [f64; 4] = [0.3, 0.5, 0.7, 0.9];
const START_GAIN_SCALES: [f64; 2] = [1.0, 0.5];

/// Least-squares fit of efficiencies and per-combination gains to all six
/// components and all three sums, in dB. Several starting points are tried
/// and the lowest cost wins.
pub fn co_fit(data: &MeasuredDataset, model: EfficiencyModel) -> Result<CalibrationResult> {
    data.validate()?;
    let family = data.family;
    let ideal = ideal_state(data)?;
    let measured = data.ordered_db();
    let measured_sums = data.ordered_sums();
    let slots = gain_bearing(family);
    let n_eta = model.n_params();
    let n_params = n_eta + slots.len();

    let unpack = |p: &[f64]| -> ([f64; 4], [f64; 6]) {
        let mut gains = [0.0; 6];
        for (k, &i) in slots.iter().enumerate() {
            gains[i] = p[n_eta + k];
        }
        (model.expand(&p[..n_eta]), gains)
    };
    let residuals = |p: &[f64]| -> Option<DVector<f64>> {
        let (etas, gains) = unpack(p);
        let state = apply_output_loss(&ideal, &etas);
        let pred = predict_from_state(&state, family, &GainSetting::PerCombination(gains)).ok()?;
        let r = pred
            .db_below_snl
            .iter()
            .zip(&measured)
            .map(|(a, b)| a - b)
            .chain(pred.sums.iter().zip(&measured_sums).map(|(m, d)| to_db(m / d)));
        let v = DVector::from_iterator(9, r);
        v.iter().all(|x| x.is_finite()).then_some(v)
    };

    let mut lower = vec![0.0; n_eta];
    let mut upper = vec![1.0; n_eta];
    lower.extend(std::iter::repeat_n(-GAIN_LIMIT, slots.len()));
    upper.extend(std::iter::repeat_n(GAIN_LIMIT, slots.len()));
    let theory = combination_gains(family, &optimal_gains(family, data.r.value));
    let opts = LmOptions::default();

    let mut best: Option<LmOutcome> = None;
    for &eta0 in &START_EFFICIENCIES {
        for &scale in &START_GAIN_SCALES {
            let mut start = vec![eta0; n_eta];
            start.extend(slots.iter().map(|&i| theory[i] * scale));
            if let Some(out) = minimize(residuals, &start, &lower, &upper, &opts) {
                if out.converged && best.as_ref().is_none_or(|b| out.cost < b.cost) {
                    best = Some(out);
                }
            }
        }
    }
    let best = best.ok_or_else(|| Error::NonConvergence("no starting point converged".into()))?;
    let (etas, gains) = unpack(&best.params);
    let prediction = predict_from_state(
        &apply_output_loss(&ideal, &etas),
        family,
        &GainSetting::PerCombination(gains),
    )?;
    Ok(CalibrationResult::build(
        data,
        model,
        FitMethod::CoFit,
        etas,
        gains,
        prediction,
        (n_params, 9, best.iterations, best.converged),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationSummary {
    pub family: Family,
    pub uniform: UniformEfficiencyFits,
    pub co_fit_uniform: CalibrationResult,
    pub co_fit_per_mode: CalibrationResult,
}

pub fn calibrate(data: &MeasuredDataset) -> Result<CalibrationSummary> {
    Ok(CalibrationSummary {
        family: data.family,
        uniform: fit_uniform_efficiency(data)?,
        co_fit_uniform: co_fit(data, EfficiencyModel::Uniform)?,
        co_fit_per_mode: co_fit(data, EfficiencyModel::PerMode)?,
    })
}

/// Residuals beyond this many standard deviations are flagged.
pub const FLAG_SIGMAS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualRow {
    pub observable: String,
    pub unit: &'static str,
    pub measured: f64,
    pub sigma: f64,
    pub model: f64,
    pub residual: f64,
    pub flagged: bool,
}

/// Whether a measured sum agrees with its own two measured components.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SumCheck {
    pub criterion: CriterionLabel,
    pub measured: f64,
    /// Gain that reproduces the sum from the measured component levels.
    pub inferred_gain: Option<f64>,
    /// Largest gain any lossless optimum reaches.
    pub gain_ceiling: f64,
    pub consistent: bool,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub family: Family,
    pub model: EfficiencyModel,
    pub method: FitMethod,
    pub rows: Vec<ResidualRow>,
    pub sum_checks: Vec<SumCheck>,
    pub flagged: usize,
    pub degrees_of_freedom: String,
    pub caveat: String,
}

/// Supremum over squeezing of the lossless optimal gain of each criterion.
pub fn gain_ceiling(family: Family, criterion: CriterionIndex) -> f64 {
    match (family, criterion) {
        (Family::Cluster, CriterionIndex::I | CriterionIndex::II) => 2.0,
        _ => 1.0,
    }
}

/// Solves `sum = Σ snl_i(g) · 10^(−dB_i/10)` for `g ≥ 0`, returning `g²`
/// (negative when no real gain fits).
pub fn inferred_gain_squared(family: Family, criterion: CriterionIndex, db_below_snl: &[f64; 6], sum: f64) -> f64 {
    let (u, v) = criterion_components(family)[criterion as usize];
    let (mut fixed, mut quadratic) = (0.0, 0.0);
    for i in [u, v] {
        let rho = 10f64.powf(-db_below_snl[i] / 10.0);
        let a = snl(&combination_with_gain(family, i, 0.0));
        let b = snl(&combination_with_gain(family, i, 1.0)) - a;
        fixed += a * rho;
        quadratic += b * rho;
    }
    (sum - fixed) / quadratic
}

pub fn check_sums(data: &MeasuredDataset) -> Vec<SumCheck> {
    let family = data.family;
    let db = data.ordered_db();
    CriterionIndex::ALL
        .iter()
        .zip(data.ordered_sums())
        .map(|(&c, measured)| {
            let g2 = inferred_gain_squared(family, c, &db, measured);
            let ceiling = gain_ceiling(family, c);
            let inferred_gain = (g2 >= 0.0).then(|| g2.sqrt());
            let (consistent, note) = match inferred_gain {
                None => (false, "sum is below what its components allow at zero gain".to_string()),
                Some(g) if g >= ceiling => (
                    false,
                    format!("needs gain {g:.3}, beyond the attainable optimum {ceiling}"),
                ),
                Some(g) => (true, format!("consistent with gain {g:.3}")),
            };
            SumCheck {
                criterion: CriterionLabel { family, index: c },
                measured,
                inferred_gain,
                gain_ceiling: ceiling,
                consistent,
                note,
            }
        })
        .collect()
}

pub const CALIBRATION_CAVEAT: &str = "Detector efficiencies and electronic gain settings of the \
measurement are not known; the model attributes every imperfection to loss on the four outputs, \
so exact agreement is not expected. Per-detector efficiencies and gains are only weakly \
identifiable from nine observables.";

pub fn consistency_report(data: &MeasuredDataset, fit: &CalibrationResult) -> ConsistencyReport {
    let labels = combination_labels(data.family);
    let db = data.ordered_db();
    let db_sigma = data.ordered_db_sigma();
    let sums = data.ordered_sums();
    let sum_sigma = data.ordered_sum_sigma();
    let mut rows = Vec::with_capacity(9);
    for i in 0..6 {
        let residual = fit.prediction.db_below_snl[i] - db[i];
        rows.push(ResidualRow {
            observable: labels[i].to_string(),
            unit: "dB_rel_SNL",
            measured: db[i],
            sigma: db_sigma[i],
            model: fit.prediction.db_below_snl[i],
            residual,
            flagged: residual.abs() > FLAG_SIGMAS * db_sigma[i],
        });
    }
    for (k, c) in CriterionIndex::ALL.iter().enumerate() {
        let residual = fit.prediction.sums[k] - sums[k];
        rows.push(ResidualRow {
            observable: CriterionLabel {
                family: data.family,
                index: *c,
            }
            .to_string(),
            unit: "snu",
            measured: sums[k],
            sigma: sum_sigma[k],
            model: fit.prediction.sums[k],
            residual,
            flagged: residual.abs() > FLAG_SIGMAS * sum_sigma[k],
        });
    }
    let sum_checks = check_sums(data);
    let flagged = rows.iter().filter(|r| r.flagged).count() + sum_checks.iter().filter(|c| !c.consistent).count();
    ConsistencyReport {
        family: data.family,
        model: fit.model,
        method: fit.method,
        rows,
        sum_checks,
        flagged,
        degrees_of_freedom: format!(
            "{} observables, {} fitted parameters, {} degrees of freedom",
            fit.n_observables,
            fit.n_parameters,
            fit.degrees_of_freedom()
        ),
        caveat: CALIBRATION_CAVEAT.to_string(),
    }
}
