//! Warm-up adaptation: dual-averaging step size and a windowed diagonal
//! mass matrix.

/// Nesterov dual averaging of `log(step size)` toward a target acceptance
/// statistic.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    pub target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    mu: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(target: f64) -> Self {
        Self { target, gamma: 0.05, t0: 10.0, kappa: 0.75, mu: 0.0, counter: 0.0, s_bar: 0.0, x_bar: 0.0 }
    }

    /// Restarts around `step` with shrinkage point `log(10 step)`.
    pub fn restart(&mut self, step: f64) {
        self.mu = (10.0 * step).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Next step size given the last acceptance statistic.
    pub fn update(&mut self, accept: f64) -> f64 {
        self.counter += 1.0;
        let accept = accept.min(1.0);
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let w = self.counter.powf(-self.kappa);
        self.x_bar = (1.0 - w) * self.x_bar + w * x;
        x.exp()
    }

    /// Averaged step size used after warm-up.
    pub fn final_step(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Running mean and variance (Welford).
#[derive(Debug, Clone)]
pub struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn add(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn variance(&self) -> Vec<f64> {
        let denom = (self.n.max(2) - 1) as f64;
        self.m2.iter().map(|s| s / denom).collect()
    }

    pub fn reset(&mut self) {
        self.n = 0;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        self.m2.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Warm-up schedule: an initial step-size-only buffer (15%), doubling
/// mass-matrix windows starting at 25 iterations, and a terminal
/// step-size-only buffer (10%).
#[derive(Debug, Clone)]
pub struct WindowedAdaptation {
    warmup: usize,
    init_buffer: usize,
    term_buffer: usize,
    window: usize,
    next_end: usize,
    counter: usize,
    estimator: Welford,
}

impl WindowedAdaptation {
    pub const BASE_WINDOW: usize = 25;

    pub fn new(warmup: usize, dim: usize) -> Self {
        let init_buffer = (0.15 * warmup as f64) as usize;
        let term_buffer = (0.1 * warmup as f64) as usize;
        let room = warmup.saturating_sub(init_buffer + term_buffer);
        let window = if Self::BASE_WINDOW > room { room } else { Self::BASE_WINDOW };
        let mut s = Self {
            warmup,
            init_buffer,
            term_buffer,
            window,
            next_end: (init_buffer + window).saturating_sub(1),
            counter: 0,
            estimator: Welford::new(dim),
        };
        // stretch the first window when a doubled one would not fit after it
        if window > 0 && s.next_end + 2 * window >= warmup - term_buffer {
            s.next_end = s.last_window_end();
        }
        s
    }

    fn last_window_end(&self) -> usize {
        self.warmup - self.term_buffer - 1
    }

    fn in_window(&self) -> bool {
        self.window > 0
            && self.counter >= self.init_buffer
            && self.counter < self.warmup - self.term_buffer
            && self.counter != self.warmup
    }

    fn window_ends(&self) -> bool {
        self.window > 0 && self.counter == self.next_end && self.counter != self.warmup
    }

    fn advance_window(&mut self) {
        if self.next_end == self.last_window_end() {
            return;
        }
        self.window *= 2;
        self.next_end = self.counter + self.window;
        if self.next_end != self.last_window_end() && self.next_end + 2 * self.window >= self.warmup - self.term_buffer {
            self.next_end = self.last_window_end();
        }
    }

    /// Records warm-up draw `q`. Returns a new inverse metric when a window
    /// closes.
    pub fn observe(&mut self, q: &[f64]) -> Option<Vec<f64>> {
        let mut out = None;
        if self.in_window() {
            self.estimator.add(q);
        }
        if self.window_ends() {
            self.advance_window();
            let n = self.estimator.count() as f64;
            let var = self.estimator.variance();
            out = Some(var.iter().map(|v| (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0))).collect());
            self.estimator.reset();
        }
        self.counter += 1;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_for_default_warmup() {
        // buffers 150 / 100; windows 25, 50, 100, then the rest (575)
        let mut w = WindowedAdaptation::new(1000, 1);
        let ends: Vec<usize> = (0..1000).filter(|_| w.observe(&[0.0]).is_some()).collect();
        assert_eq!(ends, vec![174, 224, 324, 899]);
    }

    #[test]
    fn short_warmup_windows() {
        let mut w = WindowedAdaptation::new(100, 1);
        let ends: Vec<usize> = (0..100).filter(|_| w.observe(&[0.0]).is_some()).collect();
        assert_eq!(ends, vec![39, 89]);
        // buffers 6 / 4 leave 30 < 25 + 10: one window of 30
        let mut w = WindowedAdaptation::new(40, 1);
        let ends: Vec<usize> = (0..40).filter(|_| w.observe(&[0.0]).is_some()).collect();
        assert_eq!(ends, vec![35]);
    }

    #[test]
    fn regularized_variance() {
        let mut w = WindowedAdaptation::new(100, 1);
        let mut last = None;
        for i in 0..100 {
            if let Some(v) = w.observe(&[(i % 2) as f64]) {
                last = Some(v);
            }
        }
        // last window holds indices 40..=89: 25 zeros and 25 ones
        let n = 50.0;
        let var = 50.0 * 0.25 / (n - 1.0);
        let expected = n / (n + 5.0) * var + 1e-3 * 5.0 / (n + 5.0);
        assert!((last.unwrap()[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn dual_averaging_moves_toward_target() {
        let run = |accept: f64| {
            let mut da = DualAveraging::new(0.8);
            da.restart(1.0);
            (0..50).map(|_| da.update(accept)).last().unwrap()
        };
        assert!(run(1.0) > 1.0);
        assert!(run(0.1) < 1.0);
        assert!(run(0.1) < run(0.8));
    }
}
