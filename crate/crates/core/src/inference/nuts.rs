//! No-U-turn Hamiltonian Monte Carlo with multinomial trajectory sampling
//! and a diagonal Euclidean metric.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::adapt::{DualAveraging, WindowedAdaptation};
use crate::model::LogDensity;
use crate::special::log_sum_exp;

/// Energy error beyond which a trajectory is declared divergent.
pub const MAX_DELTA_H: f64 = 1000.0;
const INIT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup_iters: usize,
    pub sampling_iters: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    /// Initial unconstrained values are uniform on `[-init_range, init_range]`.
    pub init_range: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup_iters: 1000,
            sampling_iters: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            init_range: 1.0,
            seed: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.sampling_iters == 0 {
            return Err(Error::Config("chains and sampling_iters must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!("target_accept must lie in (0, 1), got {}", self.target_accept)));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::Config("max_tree_depth must be at least 1".into()));
        }
        if !(self.init_range > 0.0) {
            return Err(Error::Config(format!("init_range must be positive, got {}", self.init_range)));
        }
        Ok(())
    }
}

/// Position, momentum, and cached log density with gradient.
#[derive(Debug, Clone)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub lp: f64,
}

/// Statistics of one transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    pub depth: usize,
    pub divergent: bool,
}

struct TreeStats {
    h0: f64,
    n_leapfrog: usize,
    sum_metro: f64,
    divergent: bool,
}

/// Sampler state for one chain.
pub struct Nuts<D: LogDensity> {
    target: D,
    pub inv_metric: Vec<f64>,
    pub step_size: f64,
    pub max_depth: usize,
}

fn criterion(p_sharp_minus: &[f64], p_sharp_plus: &[f64], rho: &[f64]) -> bool {
    let dot = |a: &[f64]| a.iter().zip(rho).map(|(x, y)| x * y).sum::<f64>();
    dot(p_sharp_plus) > 0.0 && dot(p_sharp_minus) > 0.0
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

impl<D: LogDensity> Nuts<D> {
    pub fn new(target: D, max_depth: usize) -> Self {
        let n = target.dim();
        Self { target, inv_metric: vec![1.0; n], step_size: 1.0, max_depth }
    }

    pub fn target(&self) -> &D {
        &self.target
    }

    pub fn point(&mut self, q: Vec<f64>) -> PhasePoint {
        let mut grad = vec![0.0; q.len()];
        let lp = self.target.logp_grad(&q, &mut grad);
        PhasePoint { p: vec![0.0; q.len()], q, grad, lp }
    }

    fn hamiltonian(&self, z: &PhasePoint) -> f64 {
        let kinetic: f64 = 0.5 * z.p.iter().zip(&self.inv_metric).map(|(p, m)| m * p * p).sum::<f64>();
        let h = kinetic - z.lp;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn dtau_dp(&self, z: &PhasePoint, out: &mut [f64]) {
        for ((o, p), m) in out.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *o = m * p;
        }
    }

    fn sample_momentum(&self, z: &mut PhasePoint, rng: &mut ChaCha8Rng) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let e: f64 = rng.sample(StandardNormal);
            *p = e / m.sqrt();
        }
    }

    pub fn leapfrog(&mut self, z: &mut PhasePoint, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.lp = self.target.logp_grad(&z.q, &mut z.grad);
        if !z.lp.is_finite() {
            return;
        }
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
    }

    /// Doubles or halves the step size until the acceptance of a single
    /// leapfrog step crosses 0.8.
    pub fn init_step_size(&mut self, z: &PhasePoint, rng: &mut ChaCha8Rng) {
        let threshold = 0.8f64.ln();
        let mut direction = 0.0;
        for _ in 0..100 {
            let mut w = z.clone();
            self.sample_momentum(&mut w, rng);
            let h0 = self.hamiltonian(&w);
            let eps = self.step_size;
            self.leapfrog(&mut w, eps);
            let delta = h0 - self.hamiltonian(&w);
            if direction == 0.0 {
                direction = if delta > threshold { 1.0 } else { -1.0 };
            }
            if direction > 0.0 && !(delta > threshold) || direction < 0.0 && !(delta < threshold) {
                break;
            }
            self.step_size = if direction > 0.0 { 2.0 * eps } else { 0.5 * eps };
            if self.step_size > 1e7 || self.step_size < 1e-12 {
                self.step_size = self.step_size.clamp(1e-12, 1e7);
                break;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree(
        &mut self,
        depth: usize,
        z: &mut PhasePoint,
        z_propose: &mut PhasePoint,
        p_sharp_beg: &mut [f64],
        p_sharp_end: &mut [f64],
        rho: &mut [f64],
        p_beg: &mut [f64],
        p_end: &mut [f64],
        sign: f64,
        stats: &mut TreeStats,
        log_sum_weight: &mut f64,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        if depth == 0 {
            let eps = sign * self.step_size;
            self.leapfrog(z, eps);
            stats.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - stats.h0 > MAX_DELTA_H {
                stats.divergent = true;
            }
            *log_sum_weight = log_sum_exp(&[*log_sum_weight, stats.h0 - h]);
            stats.sum_metro += if stats.h0 - h > 0.0 { 1.0 } else { (stats.h0 - h).exp() };
            z_propose.clone_from(z);
            self.dtau_dp(z, p_sharp_beg);
            p_sharp_end.copy_from_slice(p_sharp_beg);
            for (r, p) in rho.iter_mut().zip(&z.p) {
                *r += p;
            }
            p_beg.copy_from_slice(&z.p);
            p_end.copy_from_slice(&z.p);
            return !stats.divergent;
        }
        let n = z.q.len();
        let mut p_init_end = vec![0.0; n];
        let mut p_sharp_init_end = vec![0.0; n];
        let mut rho_init = vec![0.0; n];
        let mut lsw_init = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            z,
            z_propose,
            p_sharp_beg,
            &mut p_sharp_init_end,
            &mut rho_init,
            p_beg,
            &mut p_init_end,
            sign,
            stats,
            &mut lsw_init,
            rng,
        ) {
            return false;
        }
        let mut z_propose_final = z.clone();
        let mut rho_final = vec![0.0; n];
        let mut p_final_beg = vec![0.0; n];
        let mut p_sharp_final_beg = vec![0.0; n];
        let mut lsw_final = f64::NEG_INFINITY;
        if !self.build_tree(
            depth - 1,
            z,
            &mut z_propose_final,
            &mut p_sharp_final_beg,
            p_sharp_end,
            &mut rho_final,
            &mut p_final_beg,
            p_end,
            sign,
            stats,
            &mut lsw_final,
            rng,
        ) {
            return false;
        }
        let lsw_subtree = log_sum_exp(&[lsw_init, lsw_final]);
        *log_sum_weight = log_sum_exp(&[*log_sum_weight, lsw_subtree]);
        if lsw_final > lsw_subtree {
            *z_propose = z_propose_final;
        } else {
            let accept = (lsw_final - lsw_subtree).exp();
            if rng.gen::<f64>() < accept {
                *z_propose = z_propose_final;
            }
        }
        let rho_subtree = add(&rho_init, &rho_final);
        for (r, s) in rho.iter_mut().zip(&rho_subtree) {
            *r += s;
        }
        let mut persist = criterion(p_sharp_beg, p_sharp_end, &rho_subtree);
        persist &= criterion(p_sharp_beg, &p_sharp_final_beg, &add(&rho_init, &p_final_beg));
        persist &= criterion(&p_sharp_init_end, p_sharp_end, &add(&rho_final, &p_init_end));
        persist
    }

    /// One transition from `z`, which is replaced by the selected point.
    pub fn transition(&mut self, z: &mut PhasePoint, rng: &mut ChaCha8Rng) -> Transition {
        self.sample_momentum(z, rng);
        let n = z.q.len();
        let mut stats = TreeStats { h0: self.hamiltonian(z), n_leapfrog: 0, sum_metro: 0.0, divergent: false };
        let mut z_fwd = z.clone();
        let mut z_bck = z.clone();
        let mut z_sample = z.clone();
        let mut z_propose = z.clone();
        let mut p_sharp = vec![0.0; n];
        self.dtau_dp(z, &mut p_sharp);
        let (mut p_sharp_fwd_bck, mut p_sharp_fwd_fwd) = (p_sharp.clone(), p_sharp.clone());
        let (mut p_sharp_bck_fwd, mut p_sharp_bck_bck) = (p_sharp.clone(), p_sharp);
        let (mut p_fwd_bck, mut p_fwd_fwd) = (z.p.clone(), z.p.clone());
        let (mut p_bck_fwd, mut p_bck_bck) = (z.p.clone(), z.p.clone());
        let mut rho = z.p.clone();
        let mut log_sum_weight = 0.0;
        let mut depth = 0;
        while depth < self.max_depth {
            let mut rho_fwd = vec![0.0; n];
            let mut rho_bck = vec![0.0; n];
            let mut lsw_subtree = f64::NEG_INFINITY;
            let valid = if rng.gen::<f64>() > 0.5 {
                rho_bck.copy_from_slice(&rho);
                p_bck_fwd.copy_from_slice(&p_fwd_fwd);
                p_sharp_bck_fwd.copy_from_slice(&p_sharp_fwd_fwd);
                self.build_tree(
                    depth,
                    &mut z_fwd,
                    &mut z_propose,
                    &mut p_sharp_fwd_bck,
                    &mut p_sharp_fwd_fwd,
                    &mut rho_fwd,
                    &mut p_fwd_bck,
                    &mut p_fwd_fwd,
                    1.0,
                    &mut stats,
                    &mut lsw_subtree,
                    rng,
                )
            } else {
                rho_fwd.copy_from_slice(&rho);
                p_fwd_bck.copy_from_slice(&p_bck_bck);
                p_sharp_fwd_bck.copy_from_slice(&p_sharp_bck_bck);
                self.build_tree(
                    depth,
                    &mut z_bck,
                    &mut z_propose,
                    &mut p_sharp_bck_fwd,
                    &mut p_sharp_bck_bck,
                    &mut rho_bck,
                    &mut p_bck_fwd,
                    &mut p_bck_bck,
                    -1.0,
                    &mut stats,
                    &mut lsw_subtree,
                    rng,
                )
            };
            if !valid {
                break;
            }
            depth += 1;
            if lsw_subtree > log_sum_weight {
                z_sample.clone_from(&z_propose);
            } else if rng.gen::<f64>() < (lsw_subtree - log_sum_weight).exp() {
                z_sample.clone_from(&z_propose);
            }
            log_sum_weight = log_sum_exp(&[log_sum_weight, lsw_subtree]);
            rho = add(&rho_bck, &rho_fwd);
            let mut persist = criterion(&p_sharp_bck_bck, &p_sharp_fwd_fwd, &rho);
            persist &= criterion(&p_sharp_bck_bck, &p_sharp_fwd_bck, &add(&rho_bck, &p_fwd_bck));
            persist &= criterion(&p_sharp_bck_fwd, &p_sharp_fwd_fwd, &add(&rho_fwd, &p_bck_fwd));
            if !persist {
                break;
            }
        }
        *z = z_sample;
        Transition {
            accept_stat: if stats.n_leapfrog > 0 { stats.sum_metro / stats.n_leapfrog as f64 } else { 0.0 },
            n_leapfrog: stats.n_leapfrog,
            depth,
            divergent: stats.divergent,
        }
    }
}

/// Output of one chain, in unconstrained coordinates.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    pub lp: Vec<f64>,
    pub accept_stat: Vec<f64>,
    pub divergent: Vec<bool>,
    pub tree_depth: Vec<usize>,
    pub n_leapfrog: Vec<usize>,
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub warmup_divergences: usize,
}

/// Uniform initial point with finite log density and gradient.
fn initial_point<D: LogDensity>(nuts: &mut Nuts<D>, range: f64, rng: &mut ChaCha8Rng) -> Result<PhasePoint> {
    let n = nuts.target.dim();
    for _ in 0..INIT_ATTEMPTS {
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-range..=range)).collect();
        let z = nuts.point(q);
        if z.lp.is_finite() && z.grad.iter().all(|g| g.is_finite()) {
            return Ok(z);
        }
    }
    Err(Error::Numerical(format!("no finite initial point in {INIT_ATTEMPTS} attempts")))
}

/// Runs warm-up and sampling for one chain.
pub fn run_chain<D: LogDensity>(target: D, config: &SamplerConfig, rng: &mut ChaCha8Rng) -> Result<ChainOutput> {
    let mut nuts = Nuts::new(target, config.max_tree_depth);
    let mut z = initial_point(&mut nuts, config.init_range, rng)?;
    let dim = z.q.len();
    nuts.init_step_size(&z, rng);
    let mut step_adapt = DualAveraging::new(config.target_accept);
    step_adapt.restart(nuts.step_size);
    let mut windows = WindowedAdaptation::new(config.warmup_iters, dim);
    let mut warmup_divergences = 0;
    for _ in 0..config.warmup_iters {
        let t = nuts.transition(&mut z, rng);
        warmup_divergences += t.divergent as usize;
        nuts.step_size = step_adapt.update(t.accept_stat);
        if let Some(inv) = windows.observe(&z.q) {
            nuts.inv_metric = inv;
            nuts.init_step_size(&z, rng);
            step_adapt.restart(nuts.step_size);
        }
    }
    if config.warmup_iters > 0 {
        nuts.step_size = step_adapt.final_step();
    }
    let s = config.sampling_iters;
    let mut out = ChainOutput {
        draws: Vec::with_capacity(s),
        lp: Vec::with_capacity(s),
        accept_stat: Vec::with_capacity(s),
        divergent: Vec::with_capacity(s),
        tree_depth: Vec::with_capacity(s),
        n_leapfrog: Vec::with_capacity(s),
        step_size: nuts.step_size,
        inv_metric: nuts.inv_metric.clone(),
        warmup_divergences,
    };
    for _ in 0..s {
        let t = nuts.transition(&mut z, rng);
        out.draws.push(z.q.clone());
        out.lp.push(z.lp);
        out.accept_stat.push(t.accept_stat);
        out.divergent.push(t.divergent);
        out.tree_depth.push(t.depth);
        out.n_leapfrog.push(t.n_leapfrog);
    }
    Ok(out)
}
