//! Box-constrained Levenberg-Marquardt with a finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub rel_tol: f64,
    /// Stop once an accepted step moves no parameter by more than this.
    pub x_tol: f64,
    pub step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 1000,
            rel_tol: 1e-10,
            x_tol: 1e-9,
            step: 1e-6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// `Σ rᵢ²` at `params`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn cost_of(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

fn clamp_into(p: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in p.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

fn jacobian<F>(f: &F, p: &[f64], m: usize, lower: &[f64], upper: &[f64], h: f64) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<DVector<f64>>,
{
    let mut jac = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let hk = h * p[k].abs().max(1.0);
        let up = (p[k] + hk).min(upper[k]);
        let down = (p[k] - hk).max(lower[k]);
        q[k] = up;
        let ru = f(&q)?;
        q[k] = down;
        let rd = f(&q)?;
        q[k] = p[k];
        let width = up - down;
        if width > 0.0 {
            jac.set_column(k, &((ru - rd) / width));
        }
    }
    Some(jac)
}

/// Minimizes `Σ rᵢ(p)²` over the box `[lower, upper]`. Trial points are
/// projected onto the box; `f` returning `None` counts as an infinite cost.
pub fn minimize<F>(f: F, start: &[f64], lower: &[f64], upper: &[f64], opts: &LmOptions) -> Option<LmOutcome>
where
    F: Fn(&[f64]) -> Option<DVector<f64>>,
{
    let mut p = start.to_vec();
    clamp_into(&mut p, lower, upper);
    let mut r = f(&p)?;
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(&f, &p, r.len(), lower, upper, opts.step)?;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        if grad.amax() < 1e-15 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e12 {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let delta = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => match a.lu().solve(&(-&grad)) {
                    Some(d) => d,
                    None => {
                        lambda *= 4.0;
                        continue;
                    }
                },
            };
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            clamp_into(&mut trial, lower, upper);
            let trial_cost = f(&trial).map(|rt| (cost_of(&rt), rt));
            match trial_cost {
                Some((c, rt)) if c < cost => {
                    let gain = (cost - c) / cost.max(f64::MIN_POSITIVE);
                    let moved = p.iter().zip(&trial).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    p = trial;
                    r = rt;
                    cost = c;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if gain < opts.rel_tol || moved < opts.x_tol {
                        converged = true;
                    }
                    break;
                }
                _ => lambda *= 4.0,
            }
        }
        if !accepted {
            // no descent direction left within the box
            converged = true;
            break;
        }
        if converged {
            break;
        }
    }
    Some(LmOutcome {
        params: p,
        cost,
        iterations,
        converged,
    })
}
