//! Correlation variances of the four-mode states, their optimal electronic
//! gains, and the variance-sum test for full inseparability.
//!
//! Each criterion adds the variances of two combinations on conjugate axes,
//! `u = Σ h_k q_k` and `v = Σ g_k p_k`. A state that is separable across a
//! bipartition `A|B` satisfies
//!
//! ```text
//! ⟨Δ²u⟩ + ⟨Δ²v⟩ ≥ ½ (|Σ_{k∈A} h_k g_k| + |Σ_{k∈B} h_k g_k|)
//! ```
//!
//! with the factor ½ coming from `[X, Y] = i/2`. A measured sum strictly below
//! the right-hand side rules that bipartition out; the state is fully
//! inseparable once the three criteria of a family together rule out all seven.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::family::Family;
use crate::gaussian::{combination_variance, Axis, GaussianState, QuadForm, QuadIndex};

/// Electronic gains `g1..g4` applied to the homodyne photocurrents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainVector {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
}

impl GainVector {
    pub fn new(g1: f64, g2: f64, g3: f64, g4: f64) -> Result<Self> {
        for g in [g1, g2, g3, g4] {
            if !g.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "gain",
                    value: g,
                    reason: "must be finite",
                });
            }
        }
        Ok(GainVector { g1, g2, g3, g4 })
    }

    pub fn zeros() -> Self {
        GainVector::uniform(0.0)
    }

    pub fn uniform(g: f64) -> Self {
        GainVector {
            g1: g,
            g2: g,
            g3: g,
            g4: g,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        GainVector {
            g1: k * self.g1,
            g2: k * self.g2,
            g3: k * self.g3,
            g4: k * self.g4,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.g1, self.g2, self.g3, self.g4]
    }

    pub fn from_array(g: [f64; 4]) -> Result<Self> {
        GainVector::new(g[0], g[1], g[2], g[3])
    }
}

impl fmt::Display for GainVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.g1, self.g2, self.g3, self.g4)
    }
}

/// The six measured combinations of a family, in closed-form order.
pub fn combination_labels(family: Family) -> [&'static str; 6] {
    match family {
        Family::Cluster => [
            "Y1-Y2",
            "X3-X4",
            "X1+X2+g3X3",
            "-g2Y2+Y3+Y4",
            "g1X1+X2+2X3",
            "-2Y2+Y3+g4Y4",
        ],
        Family::Ghz => [
            "X1+X2+g3X3+g4X4",
            "g1X1+X2+X3+g4X4",
            "g1X1+g2X2+X3+X4",
            "Y1-Y2",
            "Y2-Y3",
            "Y3-Y4",
        ],
    }
}

/// Index of a combination label within [`combination_labels`].
pub fn combination_index(family: Family, label: &str) -> Option<usize> {
    let wanted: String = label.chars().filter(|c| !c.is_whitespace()).collect();
    combination_labels(family)
        .iter()
        .position(|l| l.eq_ignore_ascii_case(&wanted))
}

/// Whether the combination at `index` carries an adjustable gain.
pub fn is_gain_bearing(family: Family, index: usize) -> bool {
    match family {
        Family::Cluster => index >= 2,
        Family::Ghz => index < 3,
    }
}

fn x(mode: usize) -> QuadIndex {
    QuadIndex::new(mode - 1, Axis::X)
}

fn y(mode: usize) -> QuadIndex {
    QuadIndex::new(mode - 1, Axis::Y)
}

fn form(terms: &[(QuadIndex, f64)]) -> QuadForm {
    // every form below has a unit coefficient somewhere, so it is never zero
    QuadForm::from_terms(4, terms).expect("fixed four-mode combination")
}

/// The six combinations of a family with the given gains, in closed-form order.
pub fn combinations(family: Family, gains: &GainVector) -> [QuadForm; 6] {
    let GainVector { g1, g2, g3, g4 } = *gains;
    match family {
        Family::Cluster => [
            form(&[(y(1), 1.0), (y(2), -1.0)]),
            form(&[(x(3), 1.0), (x(4), -1.0)]),
            form(&[(x(1), 1.0), (x(2), 1.0), (x(3), g3)]),
            form(&[(y(2), -g2), (y(3), 1.0), (y(4), 1.0)]),
            form(&[(x(1), g1), (x(2), 1.0), (x(3), 2.0)]),
            form(&[(y(2), -2.0), (y(3), 1.0), (y(4), g4)]),
        ],
        Family::Ghz => [
            form(&[(x(1), 1.0), (x(2), 1.0), (x(3), g3), (x(4), g4)]),
            form(&[(x(1), g1), (x(2), 1.0), (x(3), 1.0), (x(4), g4)]),
            form(&[(x(1), g1), (x(2), g2), (x(3), 1.0), (x(4), 1.0)]),
            form(&[(y(1), 1.0), (y(2), -1.0)]),
            form(&[(y(2), 1.0), (y(3), -1.0)]),
            form(&[(y(3), 1.0), (y(4), -1.0)]),
        ],
    }
}

/// Combination at `index` with its gain slot(s) set to `g`. For the GHZ
/// combinations both gain slots take the same value.
pub fn combination_with_gain(family: Family, index: usize, g: f64) -> QuadForm {
    combinations(family, &GainVector::uniform(g))[index].clone()
}

/// Variances of all six combinations of `family` in `state`.
pub fn simulated_variances(state: &GaussianState, family: Family, gains: &GainVector) -> Result<[f64; 6]> {
    let forms = combinations(family, gains);
    let mut out = [0.0; 6];
    for (o, f) in out.iter_mut().zip(forms.iter()) {
        *o = combination_variance(state, f)?;
    }
    Ok(out)
}

fn cluster_pair_combo(g: f64, e2: f64) -> f64 {
    (g * g - 4.0 * g + 4.0) / 16.0 * e2 + (3.0 * g * g + 4.0 * g + 4.0) / 16.0 / e2
}

fn cluster_triple_combo(g: f64, e2: f64) -> f64 {
    (3.0 * g * g - 6.0 * g + 3.0) / 16.0 * e2 + (g * g + 6.0 * g + 17.0) / 16.0 / e2
}

fn ghz_combo(a: f64, b: f64, e2: f64) -> f64 {
    ((2.0 - a - b).powi(2) + 2.0 * (a - b).powi(2)) / 16.0 * e2 + (2.0 + a + b).powi(2) / 16.0 / e2
}

/// Ideal cluster-state variances, ordered as [`combination_labels`].
pub fn closed_form_cluster(r: f64, gains: &GainVector) -> [f64; 6] {
    let e2 = (2.0 * r).exp();
    let diff = 0.5 / e2;
    [
        diff,
        diff,
        cluster_pair_combo(gains.g3, e2),
        cluster_pair_combo(gains.g2, e2),
        cluster_triple_combo(gains.g1, e2),
        cluster_triple_combo(gains.g4, e2),
    ]
}

/// Ideal GHZ-state variances, ordered as [`combination_labels`].
pub fn closed_form_ghz(r: f64, gains: &GainVector) -> [f64; 6] {
    let e2 = (2.0 * r).exp();
    let diff = 0.5 / e2;
    let GainVector { g1, g2, g3, g4 } = *gains;
    [
        ghz_combo(g3, g4, e2),
        ghz_combo(g1, g4, e2),
        ghz_combo(g1, g2, e2),
        diff,
        diff,
        diff,
    ]
}

pub fn closed_form(family: Family, r: f64, gains: &GainVector) -> [f64; 6] {
    match family {
        Family::Cluster => closed_form_cluster(r, gains),
        Family::Ghz => closed_form_ghz(r, gains),
    }
}

pub fn optimal_gains_cluster(r: f64) -> GainVector {
    let e4 = (4.0 * r).exp();
    let outer = (3.0 * e4 - 3.0) / (3.0 * e4 + 1.0);
    let inner = (2.0 * e4 - 2.0) / (e4 + 3.0);
    GainVector {
        g1: outer,
        g2: inner,
        g3: inner,
        g4: outer,
    }
}

pub fn optimal_gain_ghz(r: f64) -> f64 {
    let e4 = (4.0 * r).exp();
    (e4 - 1.0) / (e4 + 1.0)
}

pub fn optimal_gains(family: Family, r: f64) -> GainVector {
    match family {
        Family::Cluster => optimal_gains_cluster(r),
        Family::Ghz => GainVector::uniform(optimal_gain_ghz(r)),
    }
}

/// Vertex of a quadratic `g ↦ variance_at(g)` from its values at -1, 0, 1.
pub fn numeric_optimal_gain(variance_at: impl Fn(f64) -> f64) -> Result<f64> {
    let (fm, f0, fp) = (variance_at(-1.0), variance_at(0.0), variance_at(1.0));
    let curvature = 0.5 * (fp + fm) - f0;
    let slope = 0.5 * (fp - fm);
    let scale = fm.abs().max(f0.abs()).max(fp.abs()).max(f64::MIN_POSITIVE);
    if curvature.is_nan() || curvature <= 1e-14 * scale {
        return Err(Error::NonConvex(curvature));
    }
    Ok(-slope / (2.0 * curvature))
}

/// A split of modes 1..4 into two nonempty groups. Stored as the bit mask of
/// the group holding mode 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bipartition(u8);

impl Bipartition {
    /// The seven bipartitions of four modes.
    pub fn all() -> [Bipartition; 7] {
        [0b0001, 0b0011, 0b0101, 0b1001, 0b0111, 0b1011, 0b1101].map(Bipartition)
    }

    /// Canonicalizes any proper nonempty subset of modes (bit `k` = mode `k+1`).
    pub fn from_mask(mask: u8) -> Option<Bipartition> {
        let mask = mask & 0b1111;
        if mask == 0 || mask == 0b1111 {
            return None;
        }
        Some(Bipartition(if mask & 1 == 1 { mask } else { !mask & 0b1111 }))
    }

    /// Whether mode `k` (0-based) lies with mode 1.
    pub fn contains(self, k: usize) -> bool {
        self.0 >> k & 1 == 1
    }

    pub fn side_a(self) -> Vec<usize> {
        (0..4).filter(|&k| self.contains(k)).map(|k| k + 1).collect()
    }

    pub fn side_b(self) -> Vec<usize> {
        (0..4).filter(|&k| !self.contains(k)).map(|k| k + 1).collect()
    }

    /// Whether modes `i` and `j` (0-based) end up on different sides.
    pub fn separates(self, i: usize, j: usize) -> bool {
        self.contains(i) != self.contains(j)
    }
}

impl fmt::Display for Bipartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in self.side_a() {
            write!(f, "{k}")?;
        }
        f.write_str("|")?;
        for k in self.side_b() {
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for Bipartition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Dataset(format!("bad bipartition `{s}`"));
        let (a, b) = s.split_once('|').ok_or_else(bad)?;
        let mask_of = |side: &str| -> Result<u8> {
            let mut mask = 0u8;
            for c in side.trim().chars() {
                let k = c.to_digit(10).filter(|d| (1..=4).contains(d)).ok_or_else(bad)?;
                mask |= 1 << (k - 1);
            }
            Ok(mask)
        };
        let (ma, mb) = (mask_of(a)?, mask_of(b)?);
        if ma & mb != 0 || ma | mb != 0b1111 {
            return Err(bad());
        }
        Bipartition::from_mask(ma).ok_or_else(bad)
    }
}

impl Serialize for Bipartition {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CriterionIndex {
    I,
    II,
    III,
}

impl CriterionIndex {
    pub const ALL: [CriterionIndex; 3] = [CriterionIndex::I, CriterionIndex::II, CriterionIndex::III];

    pub fn as_str(self) -> &'static str {
        match self {
            CriterionIndex::I => "I",
            CriterionIndex::II => "II",
            CriterionIndex::III => "III",
        }
    }
}

impl FromStr for CriterionIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" => Ok(CriterionIndex::I),
            "II" => Ok(CriterionIndex::II),
            "III" => Ok(CriterionIndex::III),
            _ => Err(Error::Dataset(format!("unknown criterion `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CriterionLabel {
    pub family: Family,
    pub index: CriterionIndex,
}

impl fmt::Display for CriterionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}^{}", self.index.as_str(), self.family.tag())
    }
}

impl Serialize for CriterionLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Which two combinations (indices into [`combinations`]) make up each
/// criterion, as `(u, v)`.
pub fn criterion_components(family: Family) -> [(usize, usize); 3] {
    match family {
        Family::Cluster => [(0, 2), (1, 3), (4, 5)],
        Family::Ghz => [(3, 0), (4, 1), (5, 2)],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CriterionPair {
    pub label: CriterionLabel,
    pub u: QuadForm,
    pub v: QuadForm,
}

impl CriterionPair {
    pub fn new(label: CriterionLabel, u: QuadForm, v: QuadForm) -> Result<Self> {
        match (u.axis(), v.axis()) {
            (Some(a), Some(b)) if a == b.conjugate() && u.n_modes() == v.n_modes() => Ok(CriterionPair { label, u, v }),
            _ => Err(Error::AxesNotConjugate),
        }
    }

    /// Per-mode products `h_k g_k` of the two combinations' coefficients.
    fn products(&self) -> Vec<f64> {
        let h = self.u.axis_coeffs(self.u.axis().expect("checked in new"));
        let g = self.v.axis_coeffs(self.v.axis().expect("checked in new"));
        h.iter().zip(&g).map(|(a, b)| a * b).collect()
    }
}

pub fn criterion_pairs(family: Family, gains: &GainVector) -> [CriterionPair; 3] {
    let forms = combinations(family, gains);
    let comps = criterion_components(family);
    CriterionIndex::ALL.map(|index| {
        let (iu, iv) = comps[index as usize];
        CriterionPair::new(CriterionLabel { family, index }, forms[iu].clone(), forms[iv].clone())
            .expect("family combinations are on conjugate axes")
    })
}

/// Lower bound on the criterion sum for states separable across `bp`.
pub fn vlf_bound(pair: &CriterionPair, bp: Bipartition) -> Result<f64> {
    if pair.u.n_modes() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: pair.u.n_modes(),
        });
    }
    let products = pair.products();
    let (mut side_a, mut side_b) = (0.0, 0.0);
    for (k, p) in products.iter().enumerate() {
        if bp.contains(k) {
            side_a += p;
        } else {
            side_b += p;
        }
    }
    Ok(0.5 * (side_a.abs() + side_b.abs()))
}

/// Two-mode version of the bound, for the EPR-pair sanity check.
pub fn vlf_bound_two_mode(pair: &CriterionPair) -> Result<f64> {
    if pair.u.n_modes() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: pair.u.n_modes(),
        });
    }
    let p = pair.products();
    Ok(0.5 * (p[0].abs() + p[1].abs()))
}

pub fn bound_table(pair: &CriterionPair) -> Result<BTreeMap<Bipartition, f64>> {
    Bipartition::all()
        .into_iter()
        .map(|bp| Ok((bp, vlf_bound(pair, bp)?)))
        .collect()
}

/// Bipartitions whose bound lies strictly above `sum`.
pub fn excluded_bipartitions(pair: &CriterionPair, sum: f64) -> Result<BTreeSet<Bipartition>> {
    Ok(bound_table(pair)?
        .into_iter()
        .filter(|&(_, bound)| sum < bound)
        .map(|(bp, _)| bp)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub label: CriterionLabel,
    /// Variance sum in shot-noise units.
    pub sum: f64,
    pub uncertainty: Option<f64>,
    pub bounds: BTreeMap<Bipartition, f64>,
    pub excluded: BTreeSet<Bipartition>,
}

impl CriterionResult {
    pub fn new(pair: &CriterionPair, sum: f64, uncertainty: Option<f64>) -> Result<Self> {
        let bounds = bound_table(pair)?;
        let excluded = bounds.iter().filter(|&(_, &b)| sum < b).map(|(&bp, _)| bp).collect();
        Ok(CriterionResult {
            label: pair.label,
            sum,
            uncertainty,
            bounds,
            excluded,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    SeparablePossible,
    FullyInseparable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::SeparablePossible => "separable-possible",
            Verdict::FullyInseparable => "fully-inseparable",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InseparabilityReport {
    pub verdict: Verdict,
    /// Criteria excluding each bipartition.
    pub coverage: BTreeMap<Bipartition, Vec<CriterionLabel>>,
    pub uncovered: Vec<Bipartition>,
}

pub fn full_inseparability(results: &[CriterionResult]) -> InseparabilityReport {
    let mut coverage = BTreeMap::new();
    let mut uncovered = Vec::new();
    for bp in Bipartition::all() {
        let by: Vec<CriterionLabel> = results
            .iter()
            .filter(|r| r.excluded.contains(&bp))
            .map(|r| r.label)
            .collect();
        if by.is_empty() {
            uncovered.push(bp);
        }
        coverage.insert(bp, by);
    }
    let verdict = if uncovered.is_empty() {
        Verdict::FullyInseparable
    } else {
        Verdict::SeparablePossible
    };
    InseparabilityReport {
        verdict,
        coverage,
        uncovered,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriteriaEvaluation {
    pub family: Family,
    pub gains: GainVector,
    pub results: Vec<CriterionResult>,
    pub report: InseparabilityReport,
}

/// Evaluates the three criteria of `family` on a four-mode state.
pub fn evaluate_criteria(state: &GaussianState, family: Family, gains: &GainVector) -> Result<CriteriaEvaluation> {
    let pairs = criterion_pairs(family, gains);
    let mut results = Vec::with_capacity(3);
    for pair in &pairs {
        let sum = combination_variance(state, &pair.u)? + combination_variance(state, &pair.v)?;
        results.push(CriterionResult::new(pair, sum, None)?);
    }
    let report = full_inseparability(&results);
    Ok(CriteriaEvaluation {
        family,
        gains: *gains,
        results,
        report,
    })
}

/// Evaluates externally measured criterion sums (bounds do not depend on the
/// gains for these families, so `gains` only labels the pairs).
pub fn evaluate_sums(
    family: Family,
    gains: &GainVector,
    sums: [f64; 3],
    uncertainties: [Option<f64>; 3],
) -> Result<CriteriaEvaluation> {
    let pairs = criterion_pairs(family, gains);
    let results = pairs
        .iter()
        .zip(sums.iter().zip(uncertainties))
        .map(|(pair, (&sum, unc))| CriterionResult::new(pair, sum, unc))
        .collect::<Result<Vec<_>>>()?;
    let report = full_inseparability(&results);
    Ok(CriteriaEvaluation {
        family,
        gains: *gains,
        results,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub family: Family,
    pub criterion: CriterionIndex,
    pub bipartition: Bipartition,
    pub bound: f64,
}

impl Serialize for CriterionIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Bounds of all six criterion pairs over all seven bipartitions.
pub fn golden_bound_rows(gains_for: impl Fn(Family) -> GainVector) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::with_capacity(42);
    for family in Family::ALL {
        for pair in criterion_pairs(family, &gains_for(family)) {
            for (bipartition, bound) in bound_table(&pair)? {
                rows.push(BoundRow {
                    family,
                    criterion: pair.label.index,
                    bipartition,
                    bound,
                });
            }
        }
    }
    Ok(rows)
}

pub fn bound_rows_csv(rows: &[BoundRow]) -> String {
    let mut out = String::from("family,criterion,bipartition,bound\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.family,
            r.criterion.as_str(),
            r.bipartition,
            r.bound
        ));
    }
    out
}

/// Parses the bound-table CSV written by [`bound_rows_csv`].
pub fn parse_bound_rows_csv(text: &str) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |what: &str| Error::Dataset(format!("bound table line {}: {what}", i + 1));
        if fields.len() != 4 {
            return Err(bad("expected 4 columns"));
        }
        rows.push(BoundRow {
            family: fields[0].parse().map_err(|_| bad("family"))?,
            criterion: fields[1].parse()?,
            bipartition: fields[2].parse()?,
            bound: fields[3].parse().map_err(|_| bad("bound"))?,
        });
    }
    Ok(rows)
}
