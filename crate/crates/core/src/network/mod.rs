//! Optical network descriptions and their elaboration into Gaussian states.
//!
//! A [`NetworkSpec`] is an ordered list of elements acting on named modes.
//! Beam splitters may relabel their two outputs (`bs a2 a3 pi/2 -> a5 a6`),
//! after which the input labels can no longer be used.

mod convention;
mod parse;

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::criteria::{optimal_gains, GainVector};
use crate::error::{check_range, Result};
use crate::family::Family;
use crate::gaussian::{
    apply, beam_splitter_with, loss_channel, phase_shift, squeezer, Axis, BsConvention, GaussianChannel, GaussianState,
    MAX_SQUEEZING,
};

pub use convention::{
    closed_form_deviation, matches_closed_forms, resolve_conventions, search_conventions, shared_convention,
    PhaseConvention, CONVENTION_GRID_R, CONVENTION_TOL,
};
pub use parse::{parse_network, ParseError, ParseErrorKind};

#[derive(Clone, Debug, PartialEq)]
pub enum Element {
    Squeezer {
        mode: String,
        axis: Axis,
        r: f64,
    },
    BeamSplitter {
        first: String,
        second: String,
        theta: f64,
        convention: BsConvention,
        outputs: Option<[String; 2]>,
    },
    PhaseShift {
        mode: String,
        phi: f64,
    },
    Loss {
        mode: String,
        eta: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    /// Declared input modes, one physical slot each.
    pub modes: Vec<String>,
    pub elements: Vec<Element>,
    /// Labels of the modes kept after elaboration, in output order.
    pub outputs: Vec<String>,
}

impl NetworkSpec {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Every label ever bound, including ones consumed by a rename, mapped to
    /// its physical slot.
    pub fn label_map(&self) -> Result<BTreeMap<String, usize>> {
        let (tracker, _) = parse::track_labels(self)?;
        Ok(tracker.into_label_map())
    }

    pub fn validate(&self) -> Result<()> {
        parse::track_labels(self)?;
        Ok(())
    }

    pub fn serialize(&self) -> String {
        self.to_string()
    }
}

fn element_channel(n: usize, slots: &[usize], el: &Element) -> Result<GaussianChannel> {
    match el {
        Element::Squeezer { axis, r, .. } => squeezer(n, slots[0], *r, *axis),
        Element::PhaseShift { phi, .. } => phase_shift(n, slots[0], *phi),
        Element::Loss { eta, .. } => loss_channel(n, slots[0], *eta),
        Element::BeamSplitter { theta, convention, .. } => {
            beam_splitter_with(n, slots[0], slots[1], *theta, *convention)
        }
    }
}

/// The whole network as a single channel on its physical slots.
pub fn network_channel(spec: &NetworkSpec) -> Result<GaussianChannel> {
    let (tracker, slots) = parse::track_labels(spec)?;
    let n = tracker.n_slots();
    let mut total = GaussianChannel::identity(n);
    for (el, s) in spec.elements.iter().zip(&slots) {
        total = total.then(&element_channel(n, s, el)?)?;
    }
    Ok(total)
}

/// Sends vacuum through the network and keeps the declared outputs.
pub fn elaborate(spec: &NetworkSpec) -> Result<GaussianState> {
    let (tracker, slots) = parse::track_labels(spec)?;
    let n = tracker.n_slots();
    let mut total = GaussianChannel::identity(n);
    for (el, s) in spec.elements.iter().zip(&slots) {
        total = total.then(&element_channel(n, s, el)?)?;
    }
    let state = apply(&GaussianState::vacuum(n)?, &total)?;
    let out_slots = slots.last().expect("output slots are always recorded");
    state.reduce(out_slots)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainChoice {
    Optimal,
    Explicit(GainVector),
}

impl GainChoice {
    pub fn resolve(&self, family: Family, r: f64) -> GainVector {
        match self {
            GainChoice::Optimal => optimal_gains(family, r),
            GainChoice::Explicit(g) => *g,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub r: f64,
    pub family: Family,
    /// Detection efficiency of b1..b4.
    pub efficiencies: [f64; 4],
    pub gains: GainChoice,
    pub analysis_frequency_hz: f64,
}

impl ExperimentConfig {
    pub fn new(family: Family, r: f64) -> Self {
        ExperimentConfig {
            r,
            family,
            efficiencies: [1.0; 4],
            gains: GainChoice::Optimal,
            analysis_frequency_hz: 2e6,
        }
    }

    pub fn with_efficiency(mut self, eta: f64) -> Self {
        self.efficiencies = [eta; 4];
        self
    }

    pub fn with_efficiencies(mut self, etas: [f64; 4]) -> Self {
        self.efficiencies = etas;
        self
    }

    pub fn with_gains(mut self, gains: GainChoice) -> Self {
        self.gains = gains;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_range("r", self.r, 0.0, MAX_SQUEEZING)?;
        for &eta in &self.efficiencies {
            check_range("eta", eta, 0.0, 1.0)?;
        }
        if let GainChoice::Explicit(g) = self.gains {
            GainVector::new(g.g1, g.g2, g.g3, g.g4)?;
        }
        Ok(())
    }

    pub fn gain_vector(&self) -> GainVector {
        self.gains.resolve(self.family, self.r)
    }

    /// Relative phases at the second and third beam splitters.
    pub fn output_phases(&self) -> (f64, f64) {
        match self.family {
            Family::Cluster => (0.0, FRAC_PI_2),
            Family::Ghz => (0.0, 0.0),
        }
    }
}

const OUTPUT_LABELS: [&str; 4] = ["b1", "b2", "b3", "b4"];

/// The four-squeezer, three-beam-splitter network with the given conventions.
pub fn build_four_mode_network(config: &ExperimentConfig, convention: &PhaseConvention) -> Result<NetworkSpec> {
    build_with_first_phase(config, convention, FRAC_PI_2)
}

pub(crate) fn build_with_first_phase(
    config: &ExperimentConfig,
    convention: &PhaseConvention,
    first_phase: f64,
) -> Result<NetworkSpec> {
    config.validate()?;
    let r = config.r;
    let (theta2, theta3) = config.output_phases();
    let s = |m: &str| m.to_string();
    let mut elements = vec![
        Element::Squeezer {
            mode: s("a1"),
            axis: Axis::Y,
            r,
        },
        Element::Squeezer {
            mode: s("a2"),
            axis: Axis::X,
            r,
        },
        Element::Squeezer {
            mode: s("a3"),
            axis: Axis::X,
            r,
        },
        Element::Squeezer {
            mode: s("a4"),
            axis: Axis::Y,
            r,
        },
        Element::BeamSplitter {
            first: s("a2"),
            second: s("a3"),
            theta: first_phase,
            convention: convention.splitters[0],
            outputs: Some([s("a5"), s("a6")]),
        },
        Element::BeamSplitter {
            first: s("a1"),
            second: s("a5"),
            theta: theta2,
            convention: convention.splitters[1],
            outputs: Some([s("b1"), s("b2")]),
        },
        Element::BeamSplitter {
            first: s("a4"),
            second: s("a6"),
            theta: theta3,
            convention: convention.splitters[2],
            outputs: Some([s("b3"), s("b4")]),
        },
    ];
    for (label, &turns) in OUTPUT_LABELS.iter().zip(&convention.output_turns) {
        if turns % 4 != 0 {
            elements.push(Element::PhaseShift {
                mode: s(label),
                phi: f64::from(turns % 4) * FRAC_PI_2,
            });
        }
    }
    for (label, &eta) in OUTPUT_LABELS.iter().zip(&config.efficiencies) {
        if eta != 1.0 {
            elements.push(Element::Loss { mode: s(label), eta });
        }
    }
    Ok(NetworkSpec {
        modes: ["a1", "a2", "a3", "a4"].map(s).to_vec(),
        elements,
        outputs: OUTPUT_LABELS.map(s).to_vec(),
    })
}

/// The four-mode network with the resolved phase convention, elaborated.
pub fn simulate(config: &ExperimentConfig) -> Result<GaussianState> {
    elaborate(&build_four_mode_network(config, &shared_convention()?)?)
}
