use bdarma::inference::draws::quantile_sorted;
use bdarma::inference::nuts::Nuts;
use bdarma::inference::rng::chain_rng;
use bdarma::inference::{sample_chains, sample_posterior, summarize, PosteriorDraws, SamplerConfig};
use bdarma::model::{LogDensity, MaskKind, MatrixPrior, ModelSpec, Posterior, PriorConfig, RegressionPrior};
use bdarma::series::CompositionalSeries;
use bdarma::simplex::{dirichlet_sample, Composition, DirichletParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Independent normals with the given scales.
#[derive(Clone)]
struct Gaussian {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl LogDensity for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn logp_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut lp = 0.0;
        for i in 0..x.len() {
            let z = (x[i] - self.mean[i]) / self.sd[i];
            lp -= 0.5 * z * z;
            grad[i] = -z / self.sd[i];
        }
        lp
    }
}

fn config(chains: usize, warmup: usize, draws: usize, seed: u64) -> SamplerConfig {
    SamplerConfig { chains, warmup_iters: warmup, sampling_iters: draws, seed, ..SamplerConfig::default() }
}

#[test]
fn recovers_standard_normal() {
    let target = Gaussian { mean: vec![0.0; 5], sd: vec![1.0; 5] };
    let chains = sample_chains(&target, &config(4, 500, 1000, 3)).unwrap();
    let draws = PosteriorDraws::from_chains((1..=5).map(|i| format!("x{i}")).collect(), &chains, |q| q.to_vec());
    let summaries = summarize(&draws, &[0.025, 0.975]).unwrap();
    for (k, s) in summaries.iter().enumerate() {
        let mcse = s.sd / draws.diagnostics.ess[k].sqrt();
        assert!(s.mean.abs() <= 4.0 * mcse, "{}: mean {} mcse {}", s.name, s.mean, mcse);
        assert!((s.sd * s.sd - 1.0).abs() <= 0.1, "{}: var {}", s.name, s.sd * s.sd);
        assert!(s.rhat < 1.05);
    }
    assert!(draws.diagnostics.warnings.is_empty(), "{:?}", draws.diagnostics.warnings);
}

#[test]
fn adapts_to_badly_scaled_target() {
    let target = Gaussian { mean: vec![1.0, -2.0, 0.0], sd: vec![100.0, 0.01, 1.0] };
    let chains = sample_chains(&target, &config(2, 1000, 1000, 9)).unwrap();
    let draws = PosteriorDraws::from_chains(vec!["a".into(), "b".into(), "c".into()], &chains, |q| q.to_vec());
    let s = summarize(&draws, &[]).unwrap();
    for k in 0..3 {
        assert!((s[k].sd / target.sd[k] - 1.0).abs() < 0.15, "{:?}", s[k]);
        assert!((s[k].mean - target.mean[k]).abs() < 0.2 * target.sd[k]);
    }
    for c in &draws.diagnostics.chains {
        assert!(c.mean_tree_depth < 5.0, "metric not adapted: {c:?}");
    }
}

#[test]
fn leapfrog_energy_error_is_third_order() {
    // 2-d correlated-free Gaussian with unequal scales
    let target = Gaussian { mean: vec![0.0, 0.0], sd: vec![1.0, 0.5] };
    let mut nuts = Nuts::new(target, 10);
    let errors: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&eps| {
            let mut z = nuts.point(vec![0.7, -0.3]);
            z.p = vec![0.4, 0.9];
            let h = |z: &bdarma::inference::nuts::PhasePoint| -z.lp + 0.5 * z.p.iter().map(|p| p * p).sum::<f64>();
            let h0 = h(&z);
            nuts.leapfrog(&mut z, eps);
            (h(&z) - h0).abs()
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 2.5, "observed order {order} from {errors:?}");
    }
}

#[test]
fn same_seed_same_draws() {
    let target = Gaussian { mean: vec![0.5; 3], sd: vec![2.0; 3] };
    let a = sample_chains(&target, &config(2, 100, 50, 42)).unwrap();
    let b = sample_chains(&target, &config(2, 100, 50, 42)).unwrap();
    let c = sample_chains(&target, &config(2, 100, 50, 43)).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.draws, y.draws);
    }
    assert_ne!(a[0].draws, c[0].draws);
}

#[test]
fn thread_count_does_not_change_draws() {
    let target = Gaussian { mean: vec![0.0; 2], sd: vec![1.0; 2] };
    let cfg = config(3, 60, 40, 5);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| sample_chains(&target, &cfg).unwrap())
    };
    let one = run(1);
    let three = run(3);
    for (x, y) in one.iter().zip(&three) {
        assert_eq!(x.draws, y.draws);
    }
}

/// Conjugate normal-mean model: theta ~ N(0, 1), y_i ~ N(theta, 1).
#[derive(Clone)]
struct NormalMean {
    sum: f64,
    n: f64,
}

impl LogDensity for NormalMean {
    fn dim(&self) -> usize {
        1
    }

    fn logp_grad(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        let t = x[0];
        grad[0] = -t + self.sum - self.n * t;
        -0.5 * t * t + self.sum * t - 0.5 * self.n * t * t
    }
}

#[test]
fn interval_coverage_is_calibrated() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let reps = 400;
    let mut hits = 0;
    for r in 0..reps {
        let theta: f64 = rng.sample(StandardNormal);
        let n = 5;
        let sum: f64 = (0..n).map(|_| theta + rng.sample::<f64, _>(StandardNormal)).sum();
        let target = NormalMean { sum, n: n as f64 };
        let chains = sample_chains(&target, &config(1, 200, 400, r as u64)).unwrap();
        let mut d: Vec<f64> = chains[0].draws.iter().map(|q| q[0]).collect();
        d.sort_by(|a, b| a.total_cmp(b));
        if quantile_sorted(&d, 0.025) <= theta && theta <= quantile_sorted(&d, 0.975) {
            hits += 1;
        }
    }
    let coverage = hits as f64 / reps as f64;
    assert!((coverage - 0.95).abs() <= 0.03, "coverage {coverage}");
}

fn iid_series(seed: u64, t: usize) -> CompositionalSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = DirichletParams::new(Composition::new(vec![0.2, 0.3, 0.5]).unwrap(), 50.0).unwrap();
    CompositionalSeries::new((0..t).map(|_| dirichlet_sample(&params, &mut rng)).collect()).unwrap()
}

#[test]
fn zero_information_posterior_is_prior() {
    // T = m: no likelihood terms, so the posterior is the N(0, 1) prior
    let mut spec = ModelSpec::new(3, 1, 0).with_prior(PriorConfig::vague(1.0));
    spec.mask_a = MaskKind::Diagonal;
    let series = iid_series(1, 1);
    let post = Posterior::new(&spec, &series).unwrap();
    assert!(sample_posterior(&spec, &series, &config(1, 10, 10, 1)).is_err());
    let chains = sample_chains(&post, &config(4, 500, 1000, 1)).unwrap();
    let draws = PosteriorDraws::from_chains(post.names(), &chains, |q| post.constrain(q).0);
    assert_eq!(draws.names.len(), 4 + 2 + 1);
    for name in ["a1_1_2", "a1_2_1"] {
        assert!(draws.column_by_name(name).unwrap().iter().all(|&v| v == 0.0));
    }
    for (k, s) in summarize(&draws, &[]).unwrap().iter().enumerate() {
        if s.sd == 0.0 {
            continue;
        }
        let mcse = s.sd / draws.diagnostics.ess[k].sqrt();
        assert!(s.mean.abs() <= 4.0 * mcse, "{}: mean {} mcse {}", s.name, s.mean, mcse);
        assert!((s.sd * s.sd - 1.0).abs() <= 0.1, "{}: var {}", s.name, s.sd * s.sd);
    }
}

#[test]
fn intercept_only_recovers_mean() {
    let series = iid_series(7, 300);
    let mut spec = ModelSpec::new(3, 1, 0).with_prior(PriorConfig::vague(2.0));
    spec.mask_a = MaskKind::Diagonal;
    spec.prior.a = MatrixPrior::Normal { mean: 0.0, sd: 0.5 };
    spec.prior.beta = RegressionPrior::Normal { mean: 0.0, intercept_sd: 2.0, trend_sd: 2.0, fourier_sd: 2.0 };
    let draws = sample_posterior(&spec, &series, &config(2, 300, 300, 4)).unwrap();
    let s = summarize(&draws, &[0.025, 0.975]).unwrap();
    let get = |n: &str| s.iter().find(|x| x.name == n).unwrap().clone();
    // alr of (0.2, 0.3, 0.5)
    let truth = [(0.2f64 / 0.5).ln(), (0.3f64 / 0.5).ln()];
    for (k, name) in ["beta_1_1", "beta_2_1"].iter().enumerate() {
        let b = get(name);
        assert!((b.mean - truth[k]).abs() < 4.0 * b.sd + 0.02, "{name}: {b:?}");
    }
    let g = get("gamma_1");
    assert!((g.mean - 50f64.ln()).abs() < 0.3, "{g:?}");
}

#[test]
fn chain_rngs_are_distinct_streams() {
    let mut a = chain_rng(1, 0);
    let mut b = chain_rng(1, 1);
    assert_ne!(a.gen::<u64>(), b.gen::<u64>());
}
