//! Gaussian states and channels in shot-noise units.
//!
//! Phase-space vectors are ordered with all amplitude quadratures first and
//! all phase quadratures after them: `(X_0, .., X_{n-1}, Y_0, .., Y_{n-1})`.
//! The vacuum variance of a single quadrature is `1/4`, so the commutator
//! reads `[X_k, Y_k] = i/2`.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};

/// Variance of a single vacuum quadrature.
pub const VACUUM_VARIANCE: f64 = 0.25;

/// Largest squeezing parameter accepted by public constructors.
pub const MAX_SQUEEZING: f64 = 10.0;

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const PHYSICALITY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn conjugate(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "X",
            Axis::Y => "Y",
        })
    }
}

impl std::str::FromStr for Axis {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "X" | "x" => Ok(Axis::X),
            "Y" | "y" => Ok(Axis::Y),
            _ => Err(()),
        }
    }
}

/// One quadrature of one mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QuadIndex {
    pub mode: usize,
    pub axis: Axis,
}

impl QuadIndex {
    pub fn new(mode: usize, axis: Axis) -> Self {
        QuadIndex { mode, axis }
    }

    /// Position in a phase-space vector of `n_modes` modes.
    pub fn offset(self, n_modes: usize) -> usize {
        match self.axis {
            Axis::X => self.mode,
            Axis::Y => n_modes + self.mode,
        }
    }
}

/// The symplectic form `Σ` with `Σ[X_k, Y_k] = 1`, `Σ[Y_k, X_k] = -1`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut sigma = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        sigma[(k, n_modes + k)] = 1.0;
        sigma[(n_modes + k, k)] = -1.0;
    }
    sigma
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of the Hermitian matrix `cov + (i/4) Σ`.
///
/// Computed through the real embedding `[[A, -B], [B, A]]` of `A + iB`, whose
/// spectrum is that of the Hermitian matrix with every eigenvalue doubled.
pub fn uncertainty_min_eigenvalue(cov: &DMatrix<f64>) -> f64 {
    let dim = cov.nrows();
    let b = symplectic_form(dim / 2) * VACUUM_VARIANCE;
    let mut embed = DMatrix::zeros(2 * dim, 2 * dim);
    embed.view_mut((0, 0), (dim, dim)).copy_from(cov);
    embed.view_mut((dim, dim), (dim, dim)).copy_from(cov);
    embed.view_mut((0, dim), (dim, dim)).copy_from(&(-&b));
    embed.view_mut((dim, 0), (dim, dim)).copy_from(&b);
    min_eigenvalue(&embed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    n_modes: usize,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianState {
    pub fn vacuum(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidParameter {
                name: "n_modes",
                value: 0.0,
                reason: "a state needs at least one mode",
            });
        }
        Ok(GaussianState {
            n_modes,
            mean: DVector::zeros(2 * n_modes),
            cov: DMatrix::identity(2 * n_modes, 2 * n_modes) * VACUUM_VARIANCE,
        })
    }

    /// Builds a state from its moments, checking symmetry and physicality.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || !dim.is_multiple_of(2) || cov.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: 2 * (dim / 2).max(1),
                found: dim,
            });
        }
        if mean.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: mean.len(),
            });
        }
        if cov.iter().chain(mean.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "covariance",
                value: f64::NAN,
                reason: "entries must be finite",
            });
        }
        let asym = max_asymmetry(&cov);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let state = GaussianState {
            n_modes: dim / 2,
            mean,
            cov: symmetrize(&cov),
        };
        let min_eig = uncertainty_min_eigenvalue(&state.cov);
        if min_eig < -PHYSICALITY_TOL {
            return Err(Error::Unphysical(min_eig));
        }
        Ok(state)
    }

    /// Builds a state without the physicality check. Symmetry is still
    /// enforced; use [`GaussianState::is_physical`] to inspect the result.
    pub fn new_unchecked(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let dim = cov.nrows();
        if dim == 0 || !dim.is_multiple_of(2) || cov.ncols() != dim || mean.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: mean.len(),
            });
        }
        let asym = max_asymmetry(&cov);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(GaussianState {
            n_modes: dim / 2,
            mean,
            cov: symmetrize(&cov),
        })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn is_physical(&self, tol: f64) -> bool {
        uncertainty_min_eigenvalue(&self.cov) >= -tol
    }

    /// Marginal state of the listed modes, in the listed order.
    pub fn reduce(&self, modes: &[usize]) -> Result<GaussianState> {
        if modes.is_empty() {
            return Err(Error::InvalidParameter {
                name: "n_modes",
                value: 0.0,
                reason: "a state needs at least one mode",
            });
        }
        for &m in modes {
            if m >= self.n_modes {
                return Err(Error::ModeOutOfRange {
                    mode: m,
                    n_modes: self.n_modes,
                });
            }
        }
        let k = modes.len();
        let rows: Vec<usize> = modes
            .iter()
            .copied()
            .chain(modes.iter().map(|&m| self.n_modes + m))
            .collect();
        let mean = DVector::from_fn(2 * k, |i, _| self.mean[rows[i]]);
        let cov = DMatrix::from_fn(2 * k, 2 * k, |i, j| self.cov[(rows[i], rows[j])]);
        Ok(GaussianState { n_modes: k, mean, cov })
    }

    pub fn variance(&self, form: &QuadForm) -> Result<f64> {
        combination_variance(self, form)
    }
}

/// Linear Gaussian channel `V -> T V Tᵀ + N`, `m -> T m`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianChannel {
    t: DMatrix<f64>,
    noise: DMatrix<f64>,
}

impl GaussianChannel {
    pub fn new(t: DMatrix<f64>, noise: DMatrix<f64>) -> Result<Self> {
        if !t.nrows().is_multiple_of(2) || !t.ncols().is_multiple_of(2) || t.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: 2 * (t.nrows() / 2).max(1),
                found: t.nrows(),
            });
        }
        if noise.nrows() != t.nrows() || noise.ncols() != t.nrows() {
            return Err(Error::DimensionMismatch {
                expected: t.nrows(),
                found: noise.nrows(),
            });
        }
        let asym = max_asymmetry(&noise);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let min_eig = min_eigenvalue(&noise);
        if min_eig < -PHYSICALITY_TOL {
            return Err(Error::NoiseNotPsd(min_eig));
        }
        Ok(GaussianChannel {
            t,
            noise: symmetrize(&noise),
        })
    }

    /// Noiseless channel with transfer matrix `t`.
    pub fn linear(t: DMatrix<f64>) -> Result<Self> {
        let dim = t.nrows();
        if !dim.is_multiple_of(2) || !t.ncols().is_multiple_of(2) || dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 2 * (dim / 2).max(1),
                found: dim,
            });
        }
        Ok(GaussianChannel {
            t,
            noise: DMatrix::zeros(dim, dim),
        })
    }

    pub fn identity(n_modes: usize) -> Self {
        GaussianChannel {
            t: DMatrix::identity(2 * n_modes, 2 * n_modes),
            noise: DMatrix::zeros(2 * n_modes, 2 * n_modes),
        }
    }

    pub fn transfer(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn noise(&self) -> &DMatrix<f64> {
        &self.noise
    }

    pub fn n_in(&self) -> usize {
        self.t.ncols() / 2
    }

    pub fn n_out(&self) -> usize {
        self.t.nrows() / 2
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &GaussianChannel) -> Result<GaussianChannel> {
        if next.n_in() != self.n_out() {
            return Err(Error::DimensionMismatch {
                expected: self.n_out(),
                found: next.n_in(),
            });
        }
        let t = &next.t * &self.t;
        let noise = &next.t * &self.noise * next.t.transpose() + &next.noise;
        Ok(GaussianChannel {
            t,
            noise: symmetrize(&noise),
        })
    }

    pub fn is_symplectic(&self, tol: f64) -> bool {
        is_symplectic(&self.t, tol)
    }
}

fn check_mode(mode: usize, n_modes: usize) -> Result<()> {
    if mode >= n_modes {
        Err(Error::ModeOutOfRange { mode, n_modes })
    } else {
        Ok(())
    }
}

fn check_squeezing(r: f64) -> Result<f64> {
    check_range("r", r, 0.0, MAX_SQUEEZING)
}

/// Single-mode squeezer. `axis` names the quadrature whose noise is reduced
/// by `e^{-r}`; the conjugate quadrature grows by `e^{+r}`.
pub fn squeezer(n_modes: usize, mode: usize, r: f64, axis: Axis) -> Result<GaussianChannel> {
    check_mode(mode, n_modes)?;
    let r = check_squeezing(r)?;
    let mut t = DMatrix::identity(2 * n_modes, 2 * n_modes);
    let sq = QuadIndex::new(mode, axis).offset(n_modes);
    let anti = QuadIndex::new(mode, axis.conjugate()).offset(n_modes);
    t[(sq, sq)] = (-r).exp();
    t[(anti, anti)] = r.exp();
    GaussianChannel::linear(t)
}

/// Rotates `(X, Y)` of one mode by `phi`: `X' = X cos φ - Y sin φ`,
/// `Y' = X sin φ + Y cos φ`.
pub fn phase_shift(n_modes: usize, mode: usize, phi: f64) -> Result<GaussianChannel> {
    check_mode(mode, n_modes)?;
    if !phi.is_finite() {
        return Err(Error::InvalidParameter {
            name: "phi",
            value: phi,
            reason: "must be finite",
        });
    }
    let mut t = DMatrix::identity(2 * n_modes, 2 * n_modes);
    let (s, c) = phi.sin_cos();
    let (x, y) = (mode, n_modes + mode);
    t[(x, x)] = c;
    t[(x, y)] = -s;
    t[(y, x)] = s;
    t[(y, y)] = c;
    GaussianChannel::linear(t)
}

/// Sign with which the second input enters the first output port.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PortSign {
    Plus,
    Minus,
}

/// Input port that picks up the relative interference phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhasePort {
    First,
    Second,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BsConvention {
    pub sign: PortSign,
    pub phase_port: PhasePort,
}

impl Default for BsConvention {
    fn default() -> Self {
        BsConvention {
            sign: PortSign::Plus,
            phase_port: PhasePort::Second,
        }
    }
}

/// Balanced beam splitter with the default port convention.
pub fn beam_splitter(n_modes: usize, i: usize, j: usize, theta: f64) -> Result<GaussianChannel> {
    beam_splitter_with(n_modes, i, j, theta, BsConvention::default())
}

/// Balanced beam splitter: the phase port is rotated by `theta`, then
/// `out_i = (a_i ± a_j)/√2` and `out_j = (a_i ∓ a_j)/√2` on both quadratures.
pub fn beam_splitter_with(
    n_modes: usize,
    i: usize,
    j: usize,
    theta: f64,
    convention: BsConvention,
) -> Result<GaussianChannel> {
    check_mode(i, n_modes)?;
    check_mode(j, n_modes)?;
    if i == j {
        return Err(Error::EqualModes(i));
    }
    let phase_mode = match convention.phase_port {
        PhasePort::First => i,
        PhasePort::Second => j,
    };
    let phase = phase_shift(n_modes, phase_mode, theta)?;
    let s = match convention.sign {
        PortSign::Plus => 1.0,
        PortSign::Minus => -1.0,
    };
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut t = DMatrix::identity(2 * n_modes, 2 * n_modes);
    for off in [0, n_modes] {
        let (a, b) = (i + off, j + off);
        t[(a, a)] = h;
        t[(a, b)] = s * h;
        t[(b, a)] = h;
        t[(b, b)] = -s * h;
    }
    phase.then(&GaussianChannel::linear(t)?)
}

/// Pure-loss channel of transmission `eta`, mixing in vacuum.
pub fn loss_channel(n_modes: usize, mode: usize, eta: f64) -> Result<GaussianChannel> {
    check_mode(mode, n_modes)?;
    let eta = check_range("eta", eta, 0.0, 1.0)?;
    let mut t = DMatrix::identity(2 * n_modes, 2 * n_modes);
    let mut noise = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for q in [mode, n_modes + mode] {
        t[(q, q)] = eta.sqrt();
        noise[(q, q)] = (1.0 - eta) * VACUUM_VARIANCE;
    }
    GaussianChannel::new(t, noise)
}

/// Pushes a state through a channel. Fails if the output breaks the
/// uncertainty relation, which means the channel itself is malformed.
pub fn apply(state: &GaussianState, channel: &GaussianChannel) -> Result<GaussianState> {
    let out = apply_unchecked(state, channel)?;
    let min_eig = uncertainty_min_eigenvalue(&out.cov);
    if min_eig < -PHYSICALITY_TOL {
        return Err(Error::Unphysical(min_eig));
    }
    Ok(out)
}

pub(crate) fn apply_unchecked(state: &GaussianState, channel: &GaussianChannel) -> Result<GaussianState> {
    if channel.n_in() != state.n_modes {
        return Err(Error::DimensionMismatch {
            expected: state.n_modes,
            found: channel.n_in(),
        });
    }
    let mean = &channel.t * &state.mean;
    let cov = &channel.t * &state.cov * channel.t.transpose() + &channel.noise;
    Ok(GaussianState {
        n_modes: channel.n_out(),
        mean,
        cov: symmetrize(&cov),
    })
}

pub fn is_symplectic(t: &DMatrix<f64>, tol: f64) -> bool {
    if t.nrows() != t.ncols() || !t.nrows().is_multiple_of(2) {
        return false;
    }
    let sigma = symplectic_form(t.nrows() / 2);
    let diff = t * &sigma * t.transpose() - &sigma;
    diff.amax() <= tol
}

/// A linear combination of quadratures, `Σ c_k q_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadForm {
    coeffs: DVector<f64>,
}

impl QuadForm {
    pub fn new(coeffs: DVector<f64>) -> Result<Self> {
        if !coeffs.len().is_multiple_of(2) || coeffs.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 2 * (coeffs.len() / 2).max(1),
                found: coeffs.len(),
            });
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "coefficient",
                value: f64::NAN,
                reason: "must be finite",
            });
        }
        if coeffs.iter().all(|&c| c == 0.0) {
            return Err(Error::ZeroForm);
        }
        Ok(QuadForm { coeffs })
    }

    pub fn from_terms(n_modes: usize, terms: &[(QuadIndex, f64)]) -> Result<Self> {
        let mut coeffs = DVector::zeros(2 * n_modes);
        for (q, c) in terms {
            check_mode(q.mode, n_modes)?;
            coeffs[q.offset(n_modes)] += c;
        }
        QuadForm::new(coeffs)
    }

    /// Parses expressions such as `Y1-Y2` or `0.5X1+X2-2Y3`; mode numbers
    /// are 1-based.
    pub fn parse(n_modes: usize, text: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter {
            name: "combination",
            value: f64::NAN,
            reason: "expected terms like `X1`, `-Y2` or `0.5X3`",
        };
        let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(bad());
        }
        let mut terms = Vec::new();
        let mut rest = compact.as_str();
        while !rest.is_empty() {
            let (sign, body) = match rest.as_bytes()[0] {
                b'+' => (1.0, &rest[1..]),
                b'-' => (-1.0, &rest[1..]),
                _ if terms.is_empty() => (1.0, rest),
                _ => return Err(bad()),
            };
            let end = body[1..].find(['+', '-']).map(|p| p + 1).unwrap_or(body.len());
            let term = &body[..end];
            rest = &body[end..];
            let axis_pos = term.find(['X', 'Y', 'x', 'y']).ok_or_else(bad)?;
            let coeff = match &term[..axis_pos] {
                "" => 1.0,
                c => c.trim_end_matches('*').parse::<f64>().map_err(|_| bad())?,
            };
            let axis: Axis = term[axis_pos..axis_pos + 1].parse().map_err(|_| bad())?;
            let mode: usize = term[axis_pos + 1..].parse().map_err(|_| bad())?;
            if mode == 0 {
                return Err(bad());
            }
            terms.push((QuadIndex::new(mode - 1, axis), sign * coeff));
        }
        QuadForm::from_terms(n_modes, &terms)
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.coeffs
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len() / 2
    }

    pub fn coeff(&self, q: QuadIndex) -> f64 {
        self.coeffs[q.offset(self.n_modes())]
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        QuadForm::new(&self.coeffs * alpha)
    }

    /// The single axis carrying every nonzero coefficient, if there is one.
    pub fn axis(&self) -> Option<Axis> {
        let n = self.n_modes();
        let has_x = self.coeffs.rows(0, n).iter().any(|&c| c != 0.0);
        let has_y = self.coeffs.rows(n, n).iter().any(|&c| c != 0.0);
        match (has_x, has_y) {
            (true, false) => Some(Axis::X),
            (false, true) => Some(Axis::Y),
            _ => None,
        }
    }

    /// Coefficients per mode along `axis`.
    pub fn axis_coeffs(&self, axis: Axis) -> Vec<f64> {
        let n = self.n_modes();
        (0..n).map(|m| self.coeffs[QuadIndex::new(m, axis).offset(n)]).collect()
    }
}

pub fn combination_variance(state: &GaussianState, form: &QuadForm) -> Result<f64> {
    if form.coeffs.len() != state.cov.nrows() {
        return Err(Error::DimensionMismatch {
            expected: state.cov.nrows(),
            found: form.coeffs.len(),
        });
    }
    Ok((state.cov.transpose() * &form.coeffs).dot(&form.coeffs))
}

/// Vacuum variance of the combination, the reference for "below the SNL".
pub fn snl(form: &QuadForm) -> f64 {
    form.coeffs.norm_squared() * VACUUM_VARIANCE
}

/// Variance relative to its shot-noise limit, in dB.
pub fn variance_db(state: &GaussianState, form: &QuadForm) -> Result<f64> {
    Ok(to_db(combination_variance(state, form)? / snl(form)))
}

pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
