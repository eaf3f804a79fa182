//! Compositions, log-ratio transforms, and the Dirichlet distribution.
//!
//! Component indices and the reference component are 0-based in this API.
//! Configuration files and CSV headers use 1-based component numbers.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma};

/// Absolute tolerance on the unit sum of a composition.
pub const SUM_TOLERANCE: f64 = 1e-10;

/// Replacement value used by [`ZeroPolicy::Epsilon`].
pub const ZERO_EPSILON: f64 = 1e-6;

/// How ingestion treats exact zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroPolicy {
    #[default]
    Reject,
    /// Replace zeros by [`ZERO_EPSILON`] and renormalize.
    Epsilon,
}

/// A strictly positive vector summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Composition(Vec<f64>);

impl Composition {
    /// Validates `values` as a composition without renormalizing.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidComposition(format!(
                "need at least 2 components, got {}",
                values.len()
            )));
        }
        check_positive(&values)?;
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidComposition(format!("components sum to {sum}")));
        }
        Ok(Self(values))
    }

    /// Closes positive (not necessarily normalized) values onto the simplex,
    /// applying `policy` to exact zeros.
    pub fn from_parts(mut values: Vec<f64>, policy: ZeroPolicy) -> Result<Self> {
        if policy == ZeroPolicy::Epsilon {
            for v in values.iter_mut() {
                if *v == 0.0 {
                    *v = ZERO_EPSILON;
                }
            }
        }
        check_positive(&values)?;
        let sum: f64 = values.iter().sum();
        values.iter_mut().for_each(|v| *v /= sum);
        Self::new(values)
    }

    /// Wraps values already known to lie on the simplex.
    pub(crate) fn from_simplex(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn check_positive(values: &[f64]) -> Result<()> {
    for (index, &value) in values.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::Domain { index, value });
        }
    }
    Ok(())
}

/// Additive log-ratio coordinates of a composition.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRatioVector {
    values: Vec<f64>,
    reference: usize,
}

impl LogRatioVector {
    pub fn new(values: Vec<f64>, reference: usize) -> Result<Self> {
        if reference > values.len() {
            return Err(Error::Usage(format!(
                "reference {reference} out of range for {} components",
                values.len() + 1
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { term: format!("log-ratio coordinate {i}") });
        }
        Ok(Self { values, reference })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Number of components of the composition these coordinates describe.
    pub fn components(&self) -> usize {
        self.values.len() + 1
    }
}

/// `log(y_j / y_ref)` for every `j != reference`, in component order.
pub fn alr(y: &Composition, reference: usize) -> Result<LogRatioVector> {
    let j = y.len();
    if reference >= j {
        return Err(Error::Usage(format!("reference {reference} out of range for {j} components")));
    }
    check_positive(y.values())?;
    let log_ref = y.0[reference].ln();
    let values = y
        .values()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != reference)
        .map(|(_, v)| v.ln() - log_ref)
        .collect();
    Ok(LogRatioVector { values, reference })
}

/// Inverse of [`alr`]: softmax with an implicit zero in the reference slot.
pub fn alr_inv(eta: &LogRatioVector) -> Composition {
    let j = eta.components();
    let mut logits = Vec::with_capacity(j);
    logits.extend_from_slice(&eta.values[..eta.reference]);
    logits.push(0.0);
    logits.extend_from_slice(&eta.values[eta.reference..]);
    let mut out = vec![0.0; j];
    softmax_into(&logits, &mut out);
    Composition::from_simplex(out)
}

/// Centered log-ratio: `ln(y_j / g(y))` with `g` the geometric mean.
pub fn clr(y: &Composition) -> Result<Vec<f64>> {
    check_positive(y.values())?;
    let logs: Vec<f64> = y.values().iter().map(|v| v.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    Ok(logs.into_iter().map(|l| l - mean).collect())
}

/// Inverse of [`clr`].
pub fn clr_inv(coords: &[f64]) -> Composition {
    let mut out = vec![0.0; coords.len()];
    softmax_into(coords, &mut out);
    Composition::from_simplex(out)
}

/// Isometric log-ratio coordinates for the pivot partition
/// `S_j = {j}`, `H_j = {j+1, ..., J-1}`.
pub fn ilr(y: &Composition) -> Result<Vec<f64>> {
    check_positive(y.values())?;
    let logs: Vec<f64> = y.values().iter().map(|v| v.ln()).collect();
    let j = logs.len();
    Ok((0..j - 1)
        .map(|i| {
            let r = (j - 1 - i) as f64;
            let tail_mean = logs[i + 1..].iter().sum::<f64>() / r;
            (r / (r + 1.0)).sqrt() * (logs[i] - tail_mean)
        })
        .collect())
}

/// Inverse of [`ilr`].
pub fn ilr_inv(coords: &[f64]) -> Composition {
    let basis = ilr_basis(coords.len() + 1);
    let j = coords.len() + 1;
    let mut logits = vec![0.0; j];
    for (row, l) in logits.iter_mut().enumerate() {
        *l = (0..j - 1).map(|k| basis[row * (j - 1) + k] * coords[k]).sum();
    }
    clr_inv(&logits)
}

/// Orthonormal pivot basis as a row-major `J x (J-1)` matrix `V`, so that
/// `ilr(y) = V^T ln y` and `clr(y) = V ilr(y)`.
fn ilr_basis(j: usize) -> Vec<f64> {
    let mut v = vec![0.0; j * (j - 1)];
    for col in 0..j - 1 {
        let r = (j - 1 - col) as f64;
        let c = (r / (r + 1.0)).sqrt();
        v[col * (j - 1) + col] = c;
        for row in col + 1..j {
            v[row * (j - 1) + col] = -c / r;
        }
    }
    v
}

/// Overflow-safe softmax.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Link between compositions and the `(J-1)`-dimensional linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Alr,
    /// CLR coordinates with the reference coordinate dropped.
    Clr,
    /// ILR coordinates for the pivot partition.
    Ilr,
}

impl std::str::FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alr" => Ok(Link::Alr),
            "clr" => Ok(Link::Clr),
            "ilr" => Ok(Link::Ilr),
            other => Err(Error::Config(format!("unknown link '{other}'"))),
        }
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Link::Alr => "alr",
            Link::Clr => "clr",
            Link::Ilr => "ilr",
        })
    }
}

/// Linear maps realizing a [`Link`]: `eta = F ln y` and `logits = G eta`,
/// with `mu = softmax(logits)`.
#[derive(Debug, Clone)]
pub struct LinkMap {
    components: usize,
    link: Link,
    reference: usize,
    /// `(J-1) x J`, row-major.
    forward: Vec<f64>,
    /// `J x (J-1)`, row-major.
    inverse: Vec<f64>,
}

impl LinkMap {
    pub fn new(link: Link, components: usize, reference: usize) -> Result<Self> {
        let j = components;
        if j < 2 {
            return Err(Error::Usage("a link needs at least 2 components".into()));
        }
        if reference >= j {
            return Err(Error::Usage(format!("reference {reference} out of range for {j} components")));
        }
        let d = j - 1;
        let mut forward = vec![0.0; d * j];
        let mut inverse = vec![0.0; j * d];
        let non_ref: Vec<usize> = (0..j).filter(|&i| i != reference).collect();
        match link {
            Link::Alr => {
                for (k, &c) in non_ref.iter().enumerate() {
                    forward[k * j + c] = 1.0;
                    forward[k * j + reference] = -1.0;
                    inverse[c * d + k] = 1.0;
                }
            }
            Link::Clr => {
                let inv_j = 1.0 / j as f64;
                for (k, &c) in non_ref.iter().enumerate() {
                    for i in 0..j {
                        forward[k * j + i] = -inv_j;
                    }
                    forward[k * j + c] += 1.0;
                    inverse[c * d + k] = 1.0;
                    inverse[reference * d + k] = -1.0;
                }
            }
            Link::Ilr => {
                let basis = ilr_basis(j);
                for row in 0..j {
                    for k in 0..d {
                        forward[k * j + row] = basis[row * d + k];
                        inverse[row * d + k] = basis[row * d + k];
                    }
                }
            }
        }
        Ok(Self { components, link, reference, forward, inverse })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    /// Link coordinates from component logs.
    pub fn eta_from_logs(&self, log_y: &[f64], eta: &mut [f64]) {
        let j = self.components;
        for (k, e) in eta.iter_mut().enumerate() {
            let row = &self.forward[k * j..(k + 1) * j];
            *e = row.iter().zip(log_y).map(|(a, b)| a * b).sum();
        }
    }

    /// Link coordinates of a composition.
    pub fn eta(&self, y: &Composition) -> Vec<f64> {
        let logs: Vec<f64> = y.values().iter().map(|v| v.ln()).collect();
        let mut eta = vec![0.0; self.components - 1];
        self.eta_from_logs(&logs, &mut eta);
        eta
    }

    /// Softmax logits for `eta`.
    pub fn logits(&self, eta: &[f64], logits: &mut [f64]) {
        let d = self.components - 1;
        for (i, l) in logits.iter_mut().enumerate() {
            let row = &self.inverse[i * d..(i + 1) * d];
            *l = row.iter().zip(eta).map(|(a, b)| a * b).sum();
        }
    }

    /// Mean composition for `eta`.
    pub fn mean(&self, eta: &[f64]) -> Composition {
        let mut logits = vec![0.0; self.components];
        self.logits(eta, &mut logits);
        let mut mu = vec![0.0; self.components];
        softmax_into(&logits, &mut mu);
        Composition::from_simplex(mu)
    }

    /// Pulls a gradient with respect to the logits back to `eta`.
    pub fn pullback(&self, d_logits: &[f64], d_eta: &mut [f64]) {
        let d = self.components - 1;
        d_eta.iter_mut().for_each(|v| *v = 0.0);
        for (i, &g) in d_logits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.inverse[i * d..(i + 1) * d];
            for (de, a) in d_eta.iter_mut().zip(row) {
                *de += a * g;
            }
        }
    }
}

/// Mean and scale of a Dirichlet distribution with concentration `scale * mean`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    pub mean: Composition,
    pub scale: f64,
}

impl DirichletParams {
    pub fn new(mean: Composition, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Usage(format!("Dirichlet scale must be positive, got {scale}")));
        }
        Ok(Self { mean, scale })
    }

    /// Parameters from a concentration vector `alpha`.
    pub fn from_alpha(alpha: &[f64]) -> Result<Self> {
        check_positive(alpha)?;
        let scale: f64 = alpha.iter().sum();
        let mean = Composition::from_simplex(alpha.iter().map(|a| a / scale).collect());
        Self::new(mean, scale)
    }
}

/// Exact log density `ln G(phi) - sum ln G(phi mu_j) + sum (phi mu_j - 1) ln y_j`.
pub fn dirichlet_logpdf(y: &Composition, params: &DirichletParams) -> f64 {
    let phi = params.scale;
    let mut value = ln_gamma(phi);
    for (&yj, &mj) in y.values().iter().zip(params.mean.values()) {
        let a = phi * mj;
        value += (a - 1.0) * yj.ln() - ln_gamma(a);
    }
    value
}

/// Value and gradient of the Dirichlet log density with respect to the
/// ALR coordinates of the mean and the log scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletGradient {
    pub value: f64,
    pub d_eta: Vec<f64>,
    pub d_log_scale: f64,
}

/// Dirichlet log density at mean `alr_inv(eta)` and scale `exp(log_scale)`,
/// with its gradient.
pub fn dirichlet_logpdf_grad(y: &Composition, eta: &LogRatioVector, log_scale: f64) -> DirichletGradient {
    let j = y.len();
    let map = LinkMap::new(Link::Alr, j, eta.reference()).expect("reference validated by LogRatioVector");
    let log_y: Vec<f64> = y.values().iter().map(|v| v.ln()).collect();
    let mut logits = vec![0.0; j];
    map.logits(eta.values(), &mut logits);
    let mut work = DirichletWork::new(j);
    let (value, d_log_scale) = logpdf_logits(&log_y, &logits, log_scale, &mut work, true);
    let mut d_eta = vec![0.0; j - 1];
    map.pullback(&work.d_logits, &mut d_eta);
    DirichletGradient { value, d_eta, d_log_scale }
}

/// Scratch buffers for [`logpdf_logits`].
#[derive(Debug, Clone)]
pub(crate) struct DirichletWork {
    pub mu: Vec<f64>,
    pub d_logits: Vec<f64>,
    d_mu: Vec<f64>,
}

impl DirichletWork {
    pub fn new(j: usize) -> Self {
        Self { mu: vec![0.0; j], d_logits: vec![0.0; j], d_mu: vec![0.0; j] }
    }
}

/// Dirichlet log density parameterized by softmax logits and log scale.
/// Returns `(value, d value / d log_scale)`; when `with_grad` is set the
/// logit gradient is left in `work.d_logits` and the mean in `work.mu`.
pub(crate) fn logpdf_logits(
    log_y: &[f64],
    logits: &[f64],
    log_scale: f64,
    work: &mut DirichletWork,
    with_grad: bool,
) -> (f64, f64) {
    softmax_into(logits, &mut work.mu);
    let phi = log_scale.exp();
    let mut value = ln_gamma(phi);
    if !with_grad {
        for (&ly, &m) in log_y.iter().zip(&work.mu) {
            let a = phi * m;
            value += (a - 1.0) * ly - ln_gamma(a);
        }
        return (value, 0.0);
    }
    let mut weighted = 0.0;
    for ((&ly, &m), dm) in log_y.iter().zip(&work.mu).zip(work.d_mu.iter_mut()) {
        let a = phi * m;
        value += (a - 1.0) * ly - ln_gamma(a);
        let s = ly - digamma(a);
        *dm = phi * s;
        weighted += m * s;
    }
    let d_log_scale = phi * (digamma(phi) + weighted);
    let mean_grad: f64 = work.mu.iter().zip(&work.d_mu).map(|(m, g)| m * g).sum();
    for ((dl, &m), &g) in work.d_logits.iter_mut().zip(&work.mu).zip(&work.d_mu) {
        *dl = m * (g - mean_grad);
    }
    (value, d_log_scale)
}

/// Draws from Dirichlet(`scale * mean`) by normalizing Gamma variates.
pub fn dirichlet_sample<R: Rng + ?Sized>(params: &DirichletParams, rng: &mut R) -> Composition {
    let mut out = vec![0.0; params.mean.len()];
    sample_into(params.mean.values(), params.scale, rng, &mut out);
    Composition::from_simplex(out)
}

/// Writes a Dirichlet(`scale * mean`) draw into `out`. Shapes below one use
/// `G(a) = G(a + 1) U^{1/a}` in log space so tiny shapes do not underflow.
pub(crate) fn sample_into<R: Rng + ?Sized>(mean: &[f64], scale: f64, rng: &mut R, out: &mut [f64]) {
    for (o, &m) in out.iter_mut().zip(mean) {
        let shape = scale * m;
        *o = if shape < 1.0 {
            let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("positive shape").sample(rng);
            let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / shape
        } else {
            let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
            g.ln()
        };
    }
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp().max(1e-300);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn comp(v: &[f64]) -> Composition {
        Composition::new(v.to_vec()).unwrap()
    }

    #[test]
    fn alr_examples() {
        let third = 1.0 / 3.0;
        let e = alr(&Composition::from_parts(vec![third; 3], ZeroPolicy::Reject).unwrap(), 2).unwrap();
        assert!(e.values().iter().all(|v| v.abs() < 1e-15));
        let e = alr(&comp(&[0.5, 0.25, 0.25]), 2).unwrap();
        assert!((e.values()[0] - 2f64.ln()).abs() < 1e-15);
        assert!(e.values()[1].abs() < 1e-15);
        let y = comp(&[0.2, 0.3, 0.5]);
        let back = alr_inv(&alr(&y, 2).unwrap());
        for (a, b) in back.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn alr_rejects_nonpositive_component_with_index() {
        let y = Composition(vec![0.5, 0.0, 0.5]);
        match alr(&y, 2) {
            Err(Error::Domain { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn alr_inv_examples() {
        let m = alr_inv(&LogRatioVector::new(vec![0.0, 0.0], 2).unwrap());
        assert!(m.values().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let m = alr_inv(&LogRatioVector::new(vec![2f64.ln(), 0.0], 2).unwrap());
        assert!((m.values()[0] - 0.5).abs() < 1e-15);
        assert!((m.values()[1] - 0.25).abs() < 1e-15);
        // exp(-50) ~ 1.9e-22: the dominant component rounds to 1 and the
        // rest stay strictly positive.
        let m = alr_inv(&LogRatioVector::new(vec![50.0, 0.0], 2).unwrap());
        assert!((m.values()[0] - 1.0).abs() < 1e-20);
        assert!(m.values()[1] > 0.0 && m.values()[2] > 0.0);
        assert!((m.values()[1] - (-50f64).exp()).abs() < 1e-30);
    }

    #[test]
    fn clr_examples() {
        let c = clr(&comp(&[0.5, 0.25, 0.25])).unwrap();
        assert!(c.iter().sum::<f64>().abs() < 1e-12);
        let y = comp(&[0.2, 0.3, 0.5]);
        let c = clr(&y).unwrap();
        let a = alr(&y, 2).unwrap();
        let mean = a.values().iter().sum::<f64>() / 3.0;
        let expected = [a.values()[0] - mean, a.values()[1] - mean, -mean];
        for (x, e) in c.iter().zip(expected) {
            assert!((x - e).abs() < 1e-14);
        }
    }

    #[test]
    fn ilr_examples() {
        let third = 1.0 / 3.0;
        let v = ilr(&Composition::from_parts(vec![third; 3], ZeroPolicy::Reject).unwrap()).unwrap();
        assert!(v.iter().all(|x| x.abs() < 1e-15));
        assert_eq!(ilr(&comp(&[0.5, 0.5])).unwrap(), vec![0.0]);
        // literal transcription of the pivot formula for (0.2, 0.3, 0.5)
        let v = ilr(&comp(&[0.2, 0.3, 0.5])).unwrap();
        let e0 = (2f64 / 3.0).sqrt() * (0.2f64 / (0.3f64 * 0.5).sqrt()).ln();
        let e1 = (0.5f64).sqrt() * (0.3f64 / 0.5).ln();
        assert!((v[0] - e0).abs() < 1e-15 && (v[1] - e1).abs() < 1e-15);
        // frozen from a 30-digit scratch evaluation
        assert!((v[0] - (-0.539_604_562_083_409_2)).abs() < 1e-14);
        assert!((v[1] - (-0.361_208_262_568_780_0)).abs() < 1e-14);
    }

    #[test]
    fn link_maps_agree_with_free_functions() {
        let y = comp(&[0.1, 0.2, 0.3, 0.4]);
        let alr_map = LinkMap::new(Link::Alr, 4, 1).unwrap();
        assert_eq!(alr_map.eta(&y).len(), 3);
        for (a, b) in alr_map.eta(&y).iter().zip(alr(&y, 1).unwrap().values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let ilr_map = LinkMap::new(Link::Ilr, 4, 3).unwrap();
        for (a, b) in ilr_map.eta(&y).iter().zip(ilr(&y).unwrap()) {
            assert!((a - b).abs() < 1e-14);
        }
        let clr_map = LinkMap::new(Link::Clr, 4, 3).unwrap();
        let c = clr(&y).unwrap();
        for (a, b) in clr_map.eta(&y).iter().zip(&c[..3]) {
            assert!((a - b).abs() < 1e-14);
        }
        for map in [alr_map, ilr_map, clr_map] {
            let back = map.mean(&map.eta(&y));
            for (a, b) in back.values().iter().zip(y.values()) {
                assert!((a - b).abs() < 1e-14, "{:?}", map.link());
            }
        }
    }

    #[test]
    fn logpdf_examples() {
        let third = 1.0 / 3.0;
        let uniform = DirichletParams::new(Composition::from_parts(vec![third; 3], ZeroPolicy::Reject).unwrap(), 3.0).unwrap();
        for y in [[0.2, 0.3, 0.5], [0.01, 0.01, 0.98]] {
            assert!((dirichlet_logpdf(&comp(&y), &uniform) - 2f64.ln()).abs() < 1e-13);
        }
        let p = DirichletParams::from_alpha(&[2.0, 3.0, 4.0]).unwrap();
        let y = comp(&[0.2, 0.3, 0.5]);
        // ln(8!/(1! 2! 3!)) + ln 0.2 + 2 ln 0.3 + 3 ln 0.5, evaluated separately
        let oracle = (40320.0f64 / 12.0).ln() + 0.2f64.ln() + 2.0 * 0.3f64.ln() + 3.0 * 0.5f64.ln();
        assert!((dirichlet_logpdf(&y, &p) - oracle).abs() < 1e-12);
        assert!((dirichlet_logpdf(&y, &p) - 2.022_871_190_191_441_6).abs() < 1e-12);
        // joint permutation
        let pp = DirichletParams::from_alpha(&[4.0, 2.0, 3.0]).unwrap();
        let yp = comp(&[0.5, 0.2, 0.3]);
        assert!((dirichlet_logpdf(&yp, &pp) - dirichlet_logpdf(&y, &p)).abs() < 1e-13);
    }

    fn fd_check(y: &Composition, eta: &[f64], log_scale: f64) {
        let g = dirichlet_logpdf_grad(y, &LogRatioVector::new(eta.to_vec(), y.len() - 1).unwrap(), log_scale);
        let f = |e: &[f64], ls: f64| {
            let mean = alr_inv(&LogRatioVector::new(e.to_vec(), y.len() - 1).unwrap());
            dirichlet_logpdf(y, &DirichletParams::new(mean, ls.exp()).unwrap())
        };
        let h = 1e-6;
        for k in 0..eta.len() {
            let mut up = eta.to_vec();
            let mut dn = eta.to_vec();
            up[k] += h;
            dn[k] -= h;
            let fd = (f(&up, log_scale) - f(&dn, log_scale)) / (2.0 * h);
            let rel = (fd - g.d_eta[k]).abs() / fd.abs().max(1.0);
            assert!(rel <= 1e-5, "eta[{k}]: fd {fd} analytic {}", g.d_eta[k]);
        }
        let fd = (f(eta, log_scale + h) - f(eta, log_scale - h)) / (2.0 * h);
        assert!((fd - g.d_log_scale).abs() / fd.abs().max(1.0) <= 1e-5);
    }

    #[test]
    fn gradient_zero_at_symmetric_mode() {
        // symmetric Dirichlet with y at the mean: d/d eta vanishes
        let third = 1.0 / 3.0;
        let y = Composition::from_parts(vec![third; 3], ZeroPolicy::Reject).unwrap();
        let g = dirichlet_logpdf_grad(&y, &LogRatioVector::new(vec![0.0, 0.0], 2).unwrap(), 9f64.ln());
        assert!(g.d_eta.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alpha = DirichletParams::from_alpha(&[2.0, 3.0, 4.0]).unwrap();
        for _ in 0..10 {
            let y = dirichlet_sample(&alpha, &mut rng);
            let eta: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            fd_check(&y, &eta, rng.gen_range(0.0..4.0));
        }
        fd_check(&comp(&[0.2, 0.3, 0.5]), &[(2.0f64 / 4.0).ln(), (3.0f64 / 4.0).ln()], 9f64.ln());
    }

    #[test]
    fn log_scale_gradient_crosses_zero_at_profile_maximum() {
        let y = comp(&[0.2, 0.3, 0.5]);
        let eta = LogRatioVector::new(vec![0.1, -0.2], 2).unwrap();
        // 1-d scan of the profile over log scale
        let grid: Vec<f64> = (0..4000).map(|i| -2.0 + i as f64 * 0.002).collect();
        let values: Vec<f64> = grid
            .iter()
            .map(|&ls| dirichlet_logpdf(&y, &DirichletParams::new(alr_inv(&eta), ls.exp()).unwrap()))
            .collect();
        let best = (0..grid.len()).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
        assert!(best > 0 && best < grid.len() - 1);
        let before = dirichlet_logpdf_grad(&y, &eta, grid[best - 1]).d_log_scale;
        let after = dirichlet_logpdf_grad(&y, &eta, grid[best + 1]).d_log_scale;
        assert!(before > 0.0 && after < 0.0, "{before} {after}");
    }

    #[test]
    fn sample_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = DirichletParams::from_alpha(&[2.0, 3.0, 4.0]).unwrap();
        let n = 100_000;
        let mut sum = [0.0; 3];
        let mut sq = 0.0;
        for _ in 0..n {
            let d = dirichlet_sample(&p, &mut rng);
            for k in 0..3 {
                sum[k] += d.values()[k];
            }
            sq += d.values()[0] * d.values()[0];
        }
        let a0 = 9.0;
        for (k, a) in [2.0, 3.0, 4.0].iter().enumerate() {
            let mean = a / a0;
            let var = a * (a0 - a) / (a0 * a0 * (a0 + 1.0));
            let se = (var / n as f64).sqrt();
            assert!((sum[k] / n as f64 - mean).abs() < 3.0 * se);
        }
        let m1 = sum[0] / n as f64;
        let var1 = sq / n as f64 - m1 * m1;
        let true_var = 2.0 * 7.0 / (81.0 * 10.0);
        // var of the sample variance ~ (mu4 - sigma^4)/n; use a generous 3 SE bound
        let se_var = true_var * (2.0 / n as f64).sqrt() * 1.5;
        assert!((var1 - true_var).abs() < 3.0 * se_var, "{var1} vs {true_var}");
    }

    #[test]
    fn sample_concentrates_at_large_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let third = 1.0 / 3.0;
        let p = DirichletParams::new(Composition::from_parts(vec![third; 3], ZeroPolicy::Reject).unwrap(), 1000.0).unwrap();
        let n = 20_000;
        let draws: Vec<f64> = (0..n).map(|_| dirichlet_sample(&p, &mut rng).values()[0]).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let expected = (third * (2.0 / 3.0) / 1001.0).sqrt();
        assert!((expected - 0.0149).abs() < 1e-4);
        assert!((sd - expected).abs() < 0.03 * expected, "{sd}");
    }

    #[test]
    fn small_shapes_stay_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = DirichletParams::from_alpha(&[1e-3, 0.5, 0.01]).unwrap();
        for _ in 0..1000 {
            let d = dirichlet_sample(&p, &mut rng);
            assert!(d.values().iter().all(|&v| v > 0.0));
            assert!((d.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_policy() {
        assert!(matches!(Composition::from_parts(vec![0.5, 0.0, 0.5], ZeroPolicy::Reject), Err(Error::Domain { index: 1, .. })));
        let c = Composition::from_parts(vec![0.5, 0.0, 0.5], ZeroPolicy::Epsilon).unwrap();
        assert!(c.values()[1] > 0.0);
    }

    proptest! {
        #[test]
        fn clr_and_ilr_share_norm(raw in proptest::collection::vec(0.01f64..10.0, 2..13)) {
            let y = Composition::from_parts(raw, ZeroPolicy::Reject).unwrap();
            let c = clr(&y).unwrap();
            let i = ilr(&y).unwrap();
            let nc: f64 = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ni: f64 = i.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(c.iter().sum::<f64>().abs() < 1e-10);
            prop_assert!((nc - ni).abs() < 1e-10);
        }
    }
}
