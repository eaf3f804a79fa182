use crate::error::{Error, Result};
use crate::model::spec::ModelSpec;
use crate::series::CompositionalSeries;
use crate::simplex::LinkMap;

/// A series transformed for a particular [`ModelSpec`]: component logs,
/// link coordinates `u_t = g(y_t)`, and the covariate rows `x_t`, `z_t`.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub len: usize,
    pub components: usize,
    pub dim: usize,
    pub link: LinkMap,
    /// `len x J`.
    pub log_y: Vec<f64>,
    /// `len x (J-1)`.
    pub u: Vec<f64>,
    /// `len x r_0`.
    pub x: Vec<f64>,
    pub mean_width: usize,
    /// `len x r_gamma`.
    pub z: Vec<f64>,
    pub scale_width: usize,
    /// Time of the first observation.
    pub start: i64,
}

impl ModelData {
    pub fn new(spec: &ModelSpec, series: &CompositionalSeries) -> Result<Self> {
        let j = spec.components;
        if series.components() != j && !series.is_empty() {
            return Err(Error::Usage(format!(
                "model has {j} components but series has {}",
                series.components()
            )));
        }
        let link = LinkMap::new(spec.link, j, spec.reference)?;
        let d = j - 1;
        let len = series.len();
        let mean_width = spec.mean_design.width();
        let scale_width = spec.scale_design.width();
        let ts = spec.trend_scale();
        let mut log_y = Vec::with_capacity(len * j);
        let mut u = vec![0.0; len * d];
        let mut x = vec![0.0; len * mean_width];
        let mut z = vec![0.0; len * scale_width];
        for (i, y) in series.observations().iter().enumerate() {
            log_y.extend(y.values().iter().map(|v| v.ln()));
            link.eta_from_logs(&log_y[i * j..(i + 1) * j], &mut u[i * d..(i + 1) * d]);
            let t = series.time(i) as f64;
            spec.mean_design.row_into(t, ts, &mut x[i * mean_width..(i + 1) * mean_width]);
            spec.scale_design.row_into(t, ts, &mut z[i * scale_width..(i + 1) * scale_width]);
        }
        Ok(Self { len, components: j, dim: d, link, log_y, u, x, mean_width, z, scale_width, start: series.start() })
    }

    pub fn u_at(&self, t: usize) -> &[f64] {
        &self.u[t * self.dim..(t + 1) * self.dim]
    }

    pub fn x_at(&self, t: usize) -> &[f64] {
        &self.x[t * self.mean_width..(t + 1) * self.mean_width]
    }

    pub fn z_at(&self, t: usize) -> &[f64] {
        &self.z[t * self.scale_width..(t + 1) * self.scale_width]
    }

    pub fn log_y_at(&self, t: usize) -> &[f64] {
        &self.log_y[t * self.components..(t + 1) * self.components]
    }
}
