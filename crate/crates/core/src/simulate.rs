//! Forward simulation of Dirichlet ARMA and Gaussian (alr-scale) VARMA
//! series.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::likelihood::{log_scale, PredictorState};
use crate::model::{ModelSpec, ParamVector};
use crate::series::CompositionalSeries;
use crate::simplex::{dirichlet_sample, Composition, DirichletParams, LinkMap};

/// Simulated predictors beyond this magnitude abort the trajectory.
pub const EXPLOSION_BOUND: f64 = 30.0;

fn regression_mean(spec: &ModelSpec, theta: &ParamVector, t: i64, out: &mut [f64]) {
    let w = theta.layout().mean_width;
    let x = spec.mean_design.row(t as f64, spec.trend_scale());
    for (r, o) in out.iter_mut().enumerate() {
        *o = x.iter().zip(&theta.beta()[r * w..(r + 1) * w]).map(|(a, b)| a * b).sum();
    }
}

fn check(spec: &ModelSpec, theta: &ParamVector) -> Result<()> {
    spec.validate()?;
    if theta.layout() != &spec.layout() {
        return Err(Error::Usage("parameter vector does not match the model layout".into()));
    }
    Ok(())
}

/// Drives the mean recursion for `burn_in + len` steps, starting from
/// `eta = X beta` for the first `m` steps, and keeps the last `len`
/// observations (the first kept one at time `start`). `draw` maps a
/// predictor and time to a composition.
fn run(
    spec: &ModelSpec,
    theta: &ParamVector,
    len: usize,
    burn_in: usize,
    start: i64,
    mut draw: impl FnMut(&[f64], i64) -> Result<Composition>,
) -> Result<CompositionalSeries> {
    let layout = spec.layout();
    let d = layout.dim;
    let link = LinkMap::new(spec.link, spec.components, spec.reference)?;
    let mut state = PredictorState::new(&layout);
    let mut xb = vec![0.0; d];
    let mut eta = vec![0.0; d];
    let mut kept = Vec::with_capacity(len);
    let first = start - burn_in as i64;
    for step in 0..burn_in + len {
        let t = first + step as i64;
        regression_mean(spec, theta, t, &mut xb);
        if step < spec.m() {
            eta.copy_from_slice(&xb);
        } else {
            state.next_eta(theta.values(), spec.parameterization, &xb, &mut eta);
        }
        if eta.iter().any(|v| !(v.abs() <= EXPLOSION_BOUND)) {
            return Err(Error::Explosive { step, bound: EXPLOSION_BOUND });
        }
        let y = draw(&eta, t)?;
        let u = link.eta(&y);
        if u.iter().any(|v| !(v.abs() <= EXPLOSION_BOUND)) {
            return Err(Error::Explosive { step, bound: EXPLOSION_BOUND });
        }
        state.push(&u, &eta, &xb);
        if step >= burn_in {
            kept.push(y);
        }
    }
    CompositionalSeries::with_start(kept, start)
}

/// Simulates `y_t ~ Dirichlet(phi_t mu_t)` from the DARMA recursion.
pub fn simulate_darma<R: Rng + ?Sized>(
    spec: &ModelSpec,
    theta: &ParamVector,
    len: usize,
    burn_in: usize,
    start: i64,
    rng: &mut R,
) -> Result<CompositionalSeries> {
    check(spec, theta)?;
    let link = LinkMap::new(spec.link, spec.components, spec.reference)?;
    let gamma = theta.gamma().to_vec();
    run(spec, theta, len, burn_in, start, |eta, t| {
        let z = spec.scale_design.row(t as f64, spec.trend_scale());
        let (ls, _) = log_scale(&z, &gamma);
        let params = DirichletParams::new(link.mean(eta), ls.exp())?;
        Ok(dirichlet_sample(&params, rng))
    })
}

/// Simulates `alr(y_t) = eta_t + L e_t` with standard normal `e_t` and
/// lower-triangular `chol` (row-major `d x d`).
pub fn simulate_tvarma<R: Rng + ?Sized>(
    spec: &ModelSpec,
    theta: &ParamVector,
    chol: &[f64],
    len: usize,
    burn_in: usize,
    start: i64,
    rng: &mut R,
) -> Result<CompositionalSeries> {
    check(spec, theta)?;
    let d = spec.dim();
    if chol.len() != d * d {
        return Err(Error::Usage(format!("Cholesky factor needs {} entries, got {}", d * d, chol.len())));
    }
    let link = LinkMap::new(spec.link, spec.components, spec.reference)?;
    let mut e = vec![0.0; d];
    let mut u = vec![0.0; d];
    run(spec, theta, len, burn_in, start, |eta, _| {
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for r in 0..d {
            u[r] = eta[r] + (0..=r).map(|s| chol[r * d + s] * e[s]).sum::<f64>();
        }
        Ok(link.mean(&u))
    })
}

/// Lower Cholesky factor of the 2 x 2 covariance with standard deviations
/// `s1`, `s2` and correlation `rho`.
pub fn bivariate_cholesky(s1: f64, s2: f64, rho: f64) -> [f64; 4] {
    [s1, 0.0, rho * s2, s2 * (1.0 - rho * rho).sqrt()]
}
