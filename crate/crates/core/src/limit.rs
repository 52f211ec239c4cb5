//! The limiting quartic law with density `∝ exp(−M4(W z)/12)`.
//!
//! `W = Σ⁻¹` gives the law of `S_n/n^{3/4}` and `W = Σ^{-1/2}` the law of
//! the whitened statistic `T_n^{-1/2} S_n / n^{1/4}`.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMat;
use crate::measure::{FourthMomentTensor, MeasureSpec};
use crate::quadrature::{cumulative_simpson, simpson_cube};
use crate::rng::{stream, StreamRng};

/// Boundary value of the unnormalized density at `±L`.
pub const TRUNCATION_LEVEL: f64 = 1e-16;
/// `M4(W u)` at or below this for a unit `u` means the law is not integrable.
pub const DEGENERACY_TOLERANCE: f64 = 1e-10;
/// Rejection sampling refuses to run below this acceptance probability.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
/// Uniform draws used to estimate `Z_∞` when `d ≥ 4`.
pub const MONTE_CARLO_DRAWS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitMode {
    /// `W = Σ⁻¹`, the law of `S_n / n^{3/4}`.
    Raw,
    /// `W = Σ^{-1/2}`, the law of `T_n^{-1/2} S_n / n^{1/4}`.
    Whitened,
}

/// Default Simpson nodes per axis; `None` means Monte Carlo.
pub fn default_nodes(dim: usize) -> Option<usize> {
    match dim {
        0..=2 => Some(513),
        3 => Some(129),
        _ => None,
    }
}

#[derive(Debug, Clone)]
struct CdfTable {
    grid: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LimitLaw {
    dim: usize,
    mode: LimitMode,
    w: SymMat,
    /// Tensor of `z ↦ M4(W z)`.
    tensor: FourthMomentTensor,
    z_inf: f64,
    z_inf_std_error: f64,
    half_width: f64,
    nodes: Option<usize>,
    cdf: Option<CdfTable>,
}

/// Serialized summary of a built law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawExport {
    pub dim: usize,
    pub mode: LimitMode,
    #[serde(rename = "W")]
    pub w: SymMat,
    #[serde(rename = "Z_inf")]
    pub z_inf: f64,
    #[serde(rename = "Z_inf_std_error")]
    pub z_inf_std_error: f64,
    #[serde(rename = "L")]
    pub half_width: f64,
    /// Grid spacing; `null` when `Z_∞` came from Monte Carlo.
    pub h: Option<f64>,
}

/// Directions covering the unit sphere (up to sign, since `M4` is even).
fn sphere_directions(dim: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0]],
        2 => (0..3600)
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / 3600.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci lattice.
            let m = 20_000;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..m)
                .map(|k| {
                    let y = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                    let r = (1.0 - y * y).sqrt();
                    let t = golden * k as f64;
                    vec![r * t.cos(), y, r * t.sin()]
                })
                .collect()
        }
        _ => {
            let mut rng = stream(0x5EED, dim as u64);
            let mut out: Vec<Vec<f64>> = (0..dim)
                .map(|i| {
                    let mut e = vec![0.0; dim];
                    e[i] = 1.0;
                    e
                })
                .collect();
            for _ in 0..50_000 {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
                out.push(v);
            }
            out
        }
    }
}

impl LimitLaw {
    /// Builds the law for `ρ`'s covariance and fourth moments.
    pub fn from_spec(spec: &MeasureSpec, mode: LimitMode) -> Result<Self> {
        Self::build(&spec.covariance()?, &spec.fourth_moment_tensor(), mode)
    }

    pub fn build(sigma: &SymMat, tensor: &FourthMomentTensor, mode: LimitMode) -> Result<Self> {
        Self::build_with_nodes(sigma, tensor, mode, default_nodes(sigma.dim()))
    }

    /// As [`build`](Self::build) with an explicit Simpson node count
    /// (`None` forces Monte Carlo).
    pub fn build_with_nodes(
        sigma: &SymMat,
        tensor: &FourthMomentTensor,
        mode: LimitMode,
        nodes: Option<usize>,
    ) -> Result<Self> {
        let d = sigma.dim();
        if tensor.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: tensor.dim(),
            });
        }
        if let Some(k) = nodes {
            if k < 3 || k % 2 == 0 {
                return Err(Error::InvalidArgument(format!(
                    "Simpson needs an odd node count ≥ 3, got {k}"
                )));
            }
        }
        let w = match mode {
            LimitMode::Raw => sigma.inv_spd()?,
            LimitMode::Whitened => sigma.inv_sqrt_spd()?,
        };
        let tensor = tensor.transformed(&w);

        let mut min_m4 = f64::INFINITY;
        for u in sphere_directions(d) {
            let m = tensor.m4_eval(&u);
            if m <= DEGENERACY_TOLERANCE {
                return Err(Error::NonIntegrable { direction: u });
            }
            min_m4 = min_m4.min(m);
        }
        // Points on the boundary of [−1,1]^d have norm ≥ 1, so the sphere
        // minimum (with a margin for grid resolution) bounds M4 there.
        let half_width = (12.0 * (1.0 / TRUNCATION_LEVEL).ln() / (0.95 * min_m4)).powf(0.25);

        let mut law = LimitLaw {
            dim: d,
            mode,
            w,
            tensor,
            z_inf: 1.0,
            z_inf_std_error: 0.0,
            half_width,
            nodes,
            cdf: None,
        };
        match nodes {
            Some(k) => {
                law.z_inf = simpson_cube(|z| law.unnormalized(z), d, half_width, k);
            }
            None => {
                let mut rng = stream(0x2_1A7, d as u64);
                let mut z = vec![0.0; d];
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..MONTE_CARLO_DRAWS {
                    for v in z.iter_mut() {
                        *v = rng.random_range(-half_width..half_width);
                    }
                    let f = law.unnormalized(&z);
                    s += f;
                    s2 += f * f;
                }
                let m = MONTE_CARLO_DRAWS as f64;
                let mean = s / m;
                let var = (s2 / m - mean * mean).max(0.0);
                let volume = (2.0 * half_width).powi(d as i32);
                law.z_inf = volume * mean;
                law.z_inf_std_error = volume * (var / m).sqrt();
            }
        }
        if !(law.z_inf.is_finite() && law.z_inf > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "normalization evaluated to {}",
                law.z_inf
            )));
        }
        if d == 1 {
            let k = nodes.unwrap_or(513);
            let h = 2.0 * half_width / (k - 1) as f64;
            let grid: Vec<f64> = (0..k).map(|i| -half_width + i as f64 * h).collect();
            let density: Vec<f64> = grid.iter().map(|&z| law.density(&[z])).collect();
            let cdf = cumulative_simpson(&density, h);
            law.cdf = Some(CdfTable { grid, density, cdf });
        }
        Ok(law)
    }

    #[inline]
    fn unnormalized(&self, z: &[f64]) -> f64 {
        (-self.tensor.m4_eval(z) / 12.0).exp()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> LimitMode {
        self.mode
    }

    pub fn whitening(&self) -> &SymMat {
        &self.w
    }

    /// Tensor of `z ↦ M4(W z)`.
    pub fn tensor(&self) -> &FourthMomentTensor {
        &self.tensor
    }

    pub fn normalization(&self) -> f64 {
        self.z_inf
    }

    /// Zero when `Z_∞` came from quadrature.
    pub fn normalization_std_error(&self) -> f64 {
        self.z_inf_std_error
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn nodes(&self) -> Option<usize> {
        self.nodes
    }

    /// Grid spacing of the quadrature, if one was used.
    pub fn spacing(&self) -> Option<f64> {
        self.nodes.map(|k| 2.0 * self.half_width / (k - 1) as f64)
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        -self.tensor.m4_eval(z) / 12.0 - self.z_inf.ln()
    }

    pub fn density(&self, z: &[f64]) -> f64 {
        self.unnormalized(z) / self.z_inf
    }

    /// Distribution function for `d = 1`: cumulative Simpson on the grid
    /// with cubic Hermite interpolation (the density is the exact slope).
    pub fn cdf_1d(&self, z: f64) -> Result<f64> {
        // The law is even; working from the left tail keeps full relative
        // precision and makes the result monotone in floating point.
        if z > 0.0 {
            return Ok(1.0 - self.cdf_1d(-z)?);
        }
        let t = self
            .cdf
            .as_ref()
            .ok_or_else(|| Error::Unsupported(format!("cdf_1d needs d = 1, law has d = {}", self.dim)))?;
        let k = t.grid.len();
        if z <= t.grid[0] {
            return Ok(0.0);
        }
        if z >= t.grid[k - 1] {
            return Ok(1.0);
        }
        let h = t.grid[1] - t.grid[0];
        let i = (((z - t.grid[0]) / h).floor() as usize).min(k - 2);
        let s = (z - t.grid[i]) / h;
        let (p0, p1) = (t.cdf[i], t.cdf[i + 1]);
        let (m0, m1) = (h * t.density[i], h * t.density[i + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * p0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * p1
            + (s3 - s2) * m1;
        Ok(v.clamp(0.0, 1.0))
    }

    /// Probability that a uniform proposal on `[−L, L]^d` is accepted.
    pub fn acceptance_rate(&self) -> f64 {
        self.z_inf / (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Exact draws from the law truncated to `[−L, L]^d` by rejection
    /// from the uniform proposal.
    pub fn sample_limit<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let rate = self.acceptance_rate();
        if rate < MIN_ACCEPTANCE {
            return Err(Error::LowAcceptance { rate });
        }
        let l = self.half_width;
        let mut out = Vec::with_capacity(count);
        let mut z = vec![0.0; self.dim];
        while out.len() < count {
            for v in z.iter_mut() {
                *v = rng.random_range(-l..l);
            }
            if rng.random::<f64>() < self.unnormalized(&z) {
                out.push(z.clone());
            }
        }
        Ok(out)
    }

    /// Seeded convenience wrapper around [`sample_limit`](Self::sample_limit).
    pub fn sample_seeded(&self, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.sample_limit(count, &mut StreamRng::seed_from_u64(seed))
    }

    pub fn export(&self) -> LawExport {
        LawExport {
            dim: self.dim,
            mode: self.mode,
            w: self.w.clone(),
            z_inf: self.z_inf,
            z_inf_std_error: self.z_inf_std_error,
            half_width: self.half_width,
            h: self.spacing(),
        }
    }

    /// Density on a tensor grid over `[−L, L]^d` for plotting.
    pub fn density_table(&self, nodes_per_axis: usize) -> Result<Vec<(Vec<f64>, f64)>> {
        let total = (nodes_per_axis as f64).powi(self.dim as i32);
        if nodes_per_axis < 2 || total > 4e6 {
            return Err(Error::InvalidArgument(format!(
                "density table of {nodes_per_axis}^{} points",
                self.dim
            )));
        }
        let h = 2.0 * self.half_width / (nodes_per_axis - 1) as f64;
        let mut idx = vec![0usize; self.dim];
        let mut out = Vec::with_capacity(total as usize);
        loop {
            let z: Vec<f64> = idx.iter().map(|&i| -self.half_width + i as f64 * h).collect();
            let p = self.density(&z);
            out.push((z, p));
            let mut k = self.dim;
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < nodes_per_axis {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}
