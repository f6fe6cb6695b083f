use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::criteria::{combination_index, combination_labels, CriterionIndex};
use crate::error::{Error, Result};
use crate::family::Family;
use crate::gaussian::MAX_SQUEEZING;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub uncertainty: f64,
}

impl Measurement {
    pub fn new(value: f64, uncertainty: f64) -> Self {
        Measurement { value, uncertainty }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentMeasurement {
    /// Combination label such as `X1+X2+g3X3`.
    pub combination: String,
    /// Noise reduction below the shot-noise limit; positive means squeezed.
    pub db_below_snl: f64,
    pub uncertainty: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumMeasurement {
    /// `I`, `II` or `III`.
    pub criterion: String,
    /// Variance sum in shot-noise units.
    pub value: f64,
    pub uncertainty: f64,
}

/// Measured noise levels and criterion sums of one state family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredDataset {
    pub family: Family,
    pub r: Measurement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub squeezing_db: Option<Measurement>,
    pub components: Vec<ComponentMeasurement>,
    pub sums: Vec<SumMeasurement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn bad(msg: String) -> Error {
    Error::Dataset(msg)
}

impl MeasuredDataset {
    pub fn from_json(text: &str) -> Result<Self> {
        let data: MeasuredDataset = serde_json::from_str(text)?;
        data.validate()?;
        Ok(data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.value >= 0.0 && self.r.value <= MAX_SQUEEZING) {
            return Err(bad(format!("squeezing parameter {} out of range", self.r.value)));
        }
        if self.components.len() != 6 {
            return Err(bad(format!("expected 6 components, found {}", self.components.len())));
        }
        let mut seen = [false; 6];
        for c in &self.components {
            let idx = combination_index(self.family, &c.combination)
                .ok_or_else(|| bad(format!("unknown {} combination `{}`", self.family, c.combination)))?;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(bad(format!("combination `{}` listed twice", c.combination)));
            }
            if !(c.db_below_snl.is_finite() && c.db_below_snl >= 0.0) {
                return Err(bad(format!(
                    "`{}`: noise level must be at or below the SNL",
                    c.combination
                )));
            }
            if !(c.uncertainty > 0.0 && c.uncertainty.is_finite()) {
                return Err(bad(format!("`{}`: uncertainty must be positive", c.combination)));
            }
        }
        if self.sums.len() != 3 {
            return Err(bad(format!("expected 3 criterion sums, found {}", self.sums.len())));
        }
        let mut seen = [false; 3];
        for s in &self.sums {
            let idx = s.criterion.parse::<CriterionIndex>()? as usize;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(bad(format!("criterion {} listed twice", s.criterion)));
            }
            if !(s.value > 0.0 && s.value.is_finite()) {
                return Err(bad(format!("criterion {}: sum must be positive", s.criterion)));
            }
            if !(s.uncertainty > 0.0 && s.uncertainty.is_finite()) {
                return Err(bad(format!("criterion {}: uncertainty must be positive", s.criterion)));
            }
        }
        Ok(())
    }

    fn component(&self, idx: usize) -> &ComponentMeasurement {
        self.components
            .iter()
            .find(|c| combination_index(self.family, &c.combination) == Some(idx))
            .expect("validated dataset has every combination")
    }

    fn sum(&self, idx: CriterionIndex) -> &SumMeasurement {
        self.sums
            .iter()
            .find(|s| s.criterion.parse::<CriterionIndex>().ok() == Some(idx))
            .expect("validated dataset has every criterion")
    }

    /// Noise reductions in combination order.
    pub fn ordered_db(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.component(i).db_below_snl)
    }

    pub fn ordered_db_sigma(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.component(i).uncertainty)
    }

    pub fn ordered_sums(&self) -> [f64; 3] {
        CriterionIndex::ALL.map(|c| self.sum(c).value)
    }

    pub fn ordered_sum_sigma(&self) -> [f64; 3] {
        CriterionIndex::ALL.map(|c| self.sum(c).uncertainty)
    }

    /// A dataset holding exactly the given values, with uniform uncertainties.
    pub fn synthetic(
        family: Family,
        r: f64,
        db_below_snl: [f64; 6],
        sums: [f64; 3],
        sigma_db: f64,
        sigma_sum: f64,
    ) -> Self {
        let labels = combination_labels(family);
        MeasuredDataset {
            family,
            r: Measurement::new(r, 0.0),
            squeezing_db: None,
            components: labels
                .iter()
                .zip(db_below_snl)
                .map(|(l, db)| ComponentMeasurement {
                    combination: l.to_string(),
                    db_below_snl: db,
                    uncertainty: sigma_db,
                })
                .collect(),
            sums: CriterionIndex::ALL
                .iter()
                .zip(sums)
                .map(|(c, v)| SumMeasurement {
                    criterion: c.as_str().to_string(),
                    value: v,
                    uncertainty: sigma_sum,
                })
                .collect(),
            note: None,
        }
    }
}
