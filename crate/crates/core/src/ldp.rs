//! Large deviations of the empirical pair `(S_n/n, T_n/n)`: the log-Laplace
//! transform `Λ(u, A) = ln E exp(⟨u, z⟩ + ⟨Az, z⟩)`, its Cramér transform
//! `I`, the energy `F`, and a grid check that `I − F` is minimal only at
//! `(0, Σ)`.
//!
//! Internally `(u, A)` is packed into `θ = (u, A_11, A_12, …, A_dd)` and
//! `z` into features `f(z) = (z, z_1², 2z_1z_2, …, z_d²)` so that
//! `⟨θ, f(z)⟩ = ⟨u, z⟩ + ⟨Az, z⟩`; the problem is then a plain
//! exponential family.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMat;
use crate::measure::{MeasureKind, MeasureSpec};
use crate::quadrature::gauss_legendre_on;
use crate::rng::stream;

/// Objective values above this mean the supremum is infinite.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;
/// Convergence tolerance on the gradient norm of the Cramér objective.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 500;
/// Relative accuracy targeted by the uniform-ball quadrature.
const BALL_TOLERANCE: f64 = 1e-11;

/// Which part of `Δ` a pair lies in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// `M` positive definite and `M − x ᵗx` positive semi-definite.
    DeltaStar,
    /// In `Δ` but `M` singular.
    DeltaBoundary,
}

/// `F(x, M) = ⟨M⁻¹x, x⟩/2` on `Δ*`, extended by `1/2` to the rest of `Δ`.
pub fn eval_f(x: &[f64], m: &SymMat) -> Result<(f64, Region)> {
    if x.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: x.len(),
        });
    }
    let mut gap = m.clone();
    gap.add_outer(x, -1.0);
    if !m.is_psd() || !gap.is_psd() {
        return Err(Error::OutsideDomain);
    }
    match m.inv_spd() {
        Ok(inv) if m.is_pd() => Ok(((0.5 * inv.quad_form(x)).clamp(0.0, 0.5), Region::DeltaStar)),
        _ => Ok((0.5, Region::DeltaBoundary)),
    }
}

fn feature_dim(d: usize) -> usize {
    d + d * (d + 1) / 2
}

fn features_into(z: &[f64], out: &mut [f64]) {
    let d = z.len();
    out[..d].copy_from_slice(z);
    let mut k = d;
    for i in 0..d {
        for j in i..d {
            out[k] = if i == j { z[i] * z[i] } else { 2.0 * z[i] * z[j] };
            k += 1;
        }
    }
}

fn pack(u: &[f64], a: &SymMat) -> Vec<f64> {
    let mut theta = u.to_vec();
    theta.extend(a.upper_triangle());
    theta
}

fn unpack(d: usize, theta: &[f64]) -> (Vec<f64>, SymMat) {
    let mut a = SymMat::zeros(d);
    let mut k = d;
    for i in 0..d {
        for j in i..d {
            a.set(i, j, theta[k]);
            k += 1;
        }
    }
    (theta[..d].to_vec(), a)
}

/// Target vector `y` with `⟨θ, y⟩ = ⟨x, u⟩ + tr(MA)`.
fn target(x: &[f64], m: &SymMat) -> Vec<f64> {
    let d = x.len();
    let mut y = x.to_vec();
    for i in 0..d {
        for j in i..d {
            y.push(if i == j { m.get(i, i) } else { 2.0 * m.get(i, j) });
        }
    }
    y
}

/// Weighted nodes `(features, ln weight)`.
#[derive(Debug, Clone)]
struct Nodes {
    width: usize,
    features: Vec<f64>,
    log_weights: Vec<f64>,
}

impl Nodes {
    fn from_points(dim: usize, points: impl Iterator<Item = (Vec<f64>, f64)>) -> Self {
        let width = feature_dim(dim);
        let mut features = Vec::new();
        let mut log_weights = Vec::new();
        let mut buf = vec![0.0; width];
        for (p, w) in points {
            if w <= 0.0 {
                continue;
            }
            features_into(&p, &mut buf);
            features.extend_from_slice(&buf);
            log_weights.push(w.ln());
        }
        let total = log_weights.iter().map(|l| l.exp()).sum::<f64>().ln();
        log_weights.iter_mut().for_each(|l| *l -= total);
        Nodes {
            width,
            features,
            log_weights,
        }
    }

    fn log_laplace(&self, theta: &[f64]) -> f64 {
        let e: Vec<f64> = self
            .features
            .chunks_exact(self.width)
            .zip(&self.log_weights)
            .map(|(f, lw)| lw + dot(f, theta))
            .collect();
        log_sum_exp(&e)
    }

    /// `(Λ, E f, Cov f)` under the `θ`-tilt.
    fn moments(&self, theta: &[f64], with_cov: bool) -> Moments {
        let k = self.width;
        let e: Vec<f64> = self
            .features
            .chunks_exact(k)
            .zip(&self.log_weights)
            .map(|(f, lw)| lw + dot(f, theta))
            .collect();
        let lambda = log_sum_exp(&e);
        let mut mean = vec![0.0; k];
        let p: Vec<f64> = e.iter().map(|v| (v - lambda).exp()).collect();
        for (f, pi) in self.features.chunks_exact(k).zip(&p) {
            for (m, fi) in mean.iter_mut().zip(f) {
                *m += pi * fi;
            }
        }
        let cov = with_cov.then(|| {
            let mut c = vec![0.0; k * k];
            for (f, pi) in self.features.chunks_exact(k).zip(&p) {
                for a in 0..k {
                    let da = f[a] - mean[a];
                    for b in a..k {
                        c[a * k + b] += pi * da * (f[b] - mean[b]);
                    }
                }
            }
            for a in 0..k {
                for b in 0..a {
                    c[a * k + b] = c[b * k + a];
                }
            }
            c
        });
        Moments { lambda, mean, cov }
    }
}

struct Moments {
    lambda: f64,
    mean: Vec<f64>,
    cov: Option<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Product quadrature for the uniform law on the ball of radius `r`, `k`
/// radial Gauss-Legendre nodes.
fn ball_nodes(dim: usize, r: f64, k: usize) -> Nodes {
    let (radii, rw) = gauss_legendre_on(k, 0.0, r);
    let tau = 2.0 * std::f64::consts::PI;
    let points: Vec<(Vec<f64>, f64)> = match dim {
        1 => {
            let (x, w) = gauss_legendre_on(k, -r, r);
            x.into_iter().zip(w).map(|(x, w)| (vec![x], w)).collect()
        }
        2 => {
            let na = 2 * k;
            let mut out = Vec::with_capacity(k * na);
            for (rho, w) in radii.iter().zip(&rw) {
                for a in 0..na {
                    let t = tau * a as f64 / na as f64;
                    out.push((vec![rho * t.cos(), rho * t.sin()], w * rho));
                }
            }
            out
        }
        _ => {
            let (cs, cw) = gauss_legendre_on(k, -1.0, 1.0);
            let na = 2 * k;
            let mut out = Vec::with_capacity(k * k * na);
            for (rho, w) in radii.iter().zip(&rw) {
                for (c, wc) in cs.iter().zip(&cw) {
                    let s = (1.0 - c * c).sqrt();
                    for a in 0..na {
                        let t = tau * a as f64 / na as f64;
                        out.push((
                            vec![rho * s * t.cos(), rho * s * t.sin(), rho * c],
                            w * wc * rho * rho,
                        ));
                    }
                }
            }
            out
        }
    };
    Nodes::from_points(dim, points.into_iter())
}

/// Bounded-support `ρ` in exponential-family form.
#[derive(Debug, Clone)]
enum Family {
    Atoms(Nodes),
    Ball { dim: usize, radius: f64 },
}

impl Family {
    fn new(spec: &MeasureSpec) -> Result<Self> {
        if let Some(atoms) = spec.atoms() {
            return Ok(Family::Atoms(Nodes::from_points(
                spec.dim(),
                atoms.into_iter().map(|a| (a.point, a.weight)),
            )));
        }
        match spec.kind() {
            MeasureKind::UniformBall { radius } if spec.dim() <= 3 => Ok(Family::Ball {
                dim: spec.dim(),
                radius: *radius,
            }),
            MeasureKind::UniformBall { .. } => Err(Error::Unsupported(format!(
                "log-Laplace quadrature for the uniform ball is implemented for d ≤ 3, got d = {}",
                spec.dim()
            ))),
            _ => Err(Error::Unsupported(format!(
                "log-Laplace needs bounded support; {} is unbounded",
                spec.kind_name()
            ))),
        }
    }

    fn max_order(dim: usize) -> usize {
        match dim {
            1 => 1024,
            2 => 256,
            _ => 64,
        }
    }

    /// Nodes accurate enough at `θ`.
    fn nodes_at(&self, theta: &[f64]) -> Result<std::borrow::Cow<'_, Nodes>> {
        match self {
            Family::Atoms(n) => Ok(std::borrow::Cow::Borrowed(n)),
            Family::Ball { dim, radius } => {
                let mut k = 8;
                let mut nodes = ball_nodes(*dim, *radius, k);
                let mut prev = nodes.log_laplace(theta);
                while k < Self::max_order(*dim) {
                    k *= 2;
                    let next = ball_nodes(*dim, *radius, k);
                    let v = next.log_laplace(theta);
                    nodes = next;
                    if (v - prev).abs() <= BALL_TOLERANCE * v.abs().max(1.0) {
                        return Ok(std::borrow::Cow::Owned(nodes));
                    }
                    prev = v;
                }
                Err(Error::InvalidArgument(format!(
                    "uniform-ball quadrature did not reach relative accuracy {BALL_TOLERANCE} at θ = {theta:?}"
                )))
            }
        }
    }

    fn moments(&self, theta: &[f64], with_cov: bool) -> Result<Moments> {
        Ok(self.nodes_at(theta)?.moments(theta, with_cov))
    }
}

fn check_args(spec: &MeasureSpec, u: &[f64], a: &SymMat) -> Result<()> {
    let d = spec.dim();
    for got in [u.len(), a.dim()] {
        if got != d {
            return Err(Error::DimensionMismatch { expected: d, got });
        }
    }
    if u.iter().chain(a.as_slice()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("u and A must be finite".into()));
    }
    Ok(())
}

/// `Λ(u, A) = ln ∫ exp(⟨u, z⟩ + ⟨Az, z⟩) dρ(z)` for bounded-support `ρ`.
pub fn log_laplace(spec: &MeasureSpec, u: &[f64], a: &SymMat) -> Result<f64> {
    check_args(spec, u, a)?;
    let theta = pack(u, a);
    Ok(Family::new(spec)?.nodes_at(&theta)?.log_laplace(&theta))
}

/// `Λ(u, A)` with its gradient: `∇_u Λ = E z` and `∇_A Λ = E z ᵗz` under
/// the `(u, A)`-tilted law (Frobenius pairing).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceGradient {
    pub value: f64,
    pub mean: Vec<f64>,
    pub second: SymMat,
}

pub fn log_laplace_gradient(spec: &MeasureSpec, u: &[f64], a: &SymMat) -> Result<LaplaceGradient> {
    check_args(spec, u, a)?;
    let d = spec.dim();
    let theta = pack(u, a);
    let m = Family::new(spec)?.moments(&theta, false)?;
    let mut second = SymMat::zeros(d);
    let mut k = d;
    for i in 0..d {
        for j in i..d {
            second.set(i, j, if i == j { m.mean[k] } else { 0.5 * m.mean[k] });
            k += 1;
        }
    }
    Ok(LaplaceGradient {
        value: m.lambda,
        mean: m.mean[..d].to_vec(),
        second,
    })
}

/// Result of `sup_{u,A} ⟨x, u⟩ + tr(MA) − Λ(u, A)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CramerResult {
    /// The supremum; a lower bound when not converged, `+∞` when divergent.
    pub value: f64,
    pub u: Vec<f64>,
    #[serde(rename = "A")]
    pub a: SymMat,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// The objective exceeded the divergence threshold: `(x, M)` lies
    /// outside the closure of the rate function's domain.
    pub infinite: bool,
}

/// Cramér transform `I(x, M)` by damped Newton ascent with Armijo
/// backtracking; the search direction falls back to the plain gradient
/// whenever the regularized Newton step is not an ascent direction.
pub fn cramer_transform(spec: &MeasureSpec, x: &[f64], m: &SymMat) -> Result<CramerResult> {
    check_args(spec, x, m)?;
    let family = Family::new(spec)?;
    cramer_with(&family, x, m)
}

fn cramer_with(family: &Family, x: &[f64], m: &SymMat) -> Result<CramerResult> {
    let d = x.len();
    let k = feature_dim(d);
    let y = target(x, m);
    let mut theta = vec![0.0; k];
    let objective = |t: &[f64]| -> Result<f64> {
        Ok(dot(t, &y) - family.nodes_at(t)?.log_laplace(t))
    };
    let mut value = objective(&theta)?;
    let mut iterations = 0;
    let mut gradient_norm = f64::INFINITY;
    let mut converged = false;
    let mut infinite = false;
    while iterations < MAX_ITERATIONS {
        let mom = family.moments(&theta, true)?;
        let g: Vec<f64> = y.iter().zip(&mom.mean).map(|(a, b)| a - b).collect();
        gradient_norm = dot(&g, &g).sqrt();
        if gradient_norm < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        iterations += 1;
        let cov = mom.cov.expect("covariance requested");
        let h = SymMat::from_row_major_symmetrized(k, &cov);
        let eig = h.eigen();
        let reg = 1e-12 * (1.0 + h.trace());
        let mut dir = vec![0.0; k];
        for idx in 0..k {
            let v = eig.vector(idx);
            let c = dot(&v, &g) / (eig.values[idx].max(0.0) + reg);
            for (di, vi) in dir.iter_mut().zip(&v) {
                *di += c * vi;
            }
        }
        let mut stepped = false;
        for candidate in [dir, g.clone()] {
            let slope = dot(&candidate, &g);
            if !(slope > 0.0) || !slope.is_finite() {
                continue;
            }
            let mut t = 1.0;
            for _ in 0..80 {
                let trial: Vec<f64> = theta.iter().zip(&candidate).map(|(a, b)| a + t * b).collect();
                // A trial where the quadrature cannot resolve the tilt is
                // treated like a failed Armijo test.
                let v = objective(&trial).unwrap_or(f64::NEG_INFINITY);
                if v.is_finite() && v >= value + 1e-4 * t * slope {
                    theta = trial;
                    value = v;
                    stepped = true;
                    break;
                }
                t *= 0.5;
            }
            if stepped {
                break;
            }
        }
        if value > DIVERGENCE_THRESHOLD {
            infinite = true;
            break;
        }
        if !stepped {
            // No ascent possible at working precision.
            converged = gradient_norm < 1e-6;
            break;
        }
    }
    let (u, a) = unpack(d, &theta);
    Ok(CramerResult {
        value: if infinite { f64::INFINITY } else { value.max(0.0) },
        u,
        a,
        iterations,
        gradient_norm,
        converged,
        infinite,
    })
}

/// A pair `(x, M)` with everything known about it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub x: Vec<f64>,
    #[serde(rename = "M")]
    pub m: SymMat,
    pub in_delta: bool,
    pub in_delta_star: bool,
    #[serde(rename = "F")]
    pub f: f64,
    /// `I(x, M)`, clipped to the divergence threshold.
    #[serde(rename = "I")]
    pub rate: f64,
    pub rate_finite: bool,
    /// `I − F`, clipped like `I`.
    pub gap: f64,
    pub converged: bool,
}

pub fn rate_point(spec: &MeasureSpec, x: &[f64], m: &SymMat) -> Result<RatePoint> {
    let family = Family::new(spec)?;
    rate_point_with(&family, x, m)
}

fn rate_point_with(family: &Family, x: &[f64], m: &SymMat) -> Result<RatePoint> {
    let (f, region) = eval_f(x, m)?;
    let c = cramer_with(family, x, m)?;
    let rate = if c.infinite { DIVERGENCE_THRESHOLD } else { c.value };
    Ok(RatePoint {
        x: x.to_vec(),
        m: m.clone(),
        in_delta: true,
        in_delta_star: region == Region::DeltaStar,
        f,
        rate,
        rate_finite: !c.infinite,
        gap: rate - f,
        converged: c.converged || c.infinite,
    })
}

/// `I(x, M) − F(x, M)`; infinite rates are clipped to the divergence
/// threshold.
pub fn rate_gap(spec: &MeasureSpec, x: &[f64], m: &SymMat) -> Result<f64> {
    Ok(rate_point(spec, x, m)?.gap)
}

/// Grid for [`verify_rate_minimum`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateGrid {
    /// Points per axis for `x` and for each `M`-direction.
    pub points_per_axis: usize,
    /// `x_j` ranges over `±x_fraction·√M_jj`.
    pub x_fraction: f64,
    /// `M − Σ` ranges over this fraction of the largest PSD-preserving
    /// step along each direction of the atoms' second-moment hull.
    pub m_fraction: f64,
    /// Extra random points `(Σ p_k z_k, Σ p_k z_k ᵗz_k)` for `z_k ~ ρ`.
    pub random_points: usize,
    /// Radius of the excluded neighbourhood of `(0, Σ)`.
    pub epsilon: f64,
    /// Largest number of grid points allowed.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for RateGrid {
    fn default() -> Self {
        RateGrid {
            points_per_axis: 21,
            x_fraction: 0.9,
            m_fraction: 0.9,
            random_points: 200,
            epsilon: 0.05,
            max_points: 200_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateLocation {
    pub x: Vec<f64>,
    #[serde(rename = "M")]
    pub m: SymMat,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSummary {
    #[serde(flatten)]
    pub settings: RateGrid,
    /// Orthonormal directions spanning the admissible `M − Σ`.
    pub m_directions: Vec<SymMat>,
    pub evaluated: usize,
    /// Grid points outside `Δ`.
    pub skipped: usize,
    pub unconverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateMinimumReport {
    pub min_location: RateLocation,
    pub min_value: f64,
    pub gap_at_sigma: f64,
    pub grid: GridSummary,
    /// Points outside the `ε`-neighbourhood with `I − F ≤ 0`.
    pub violations: Vec<RateLocation>,
    pub passed: bool,
}

/// Tolerance on `I(0, Σ) − F(0, Σ)`.
pub const SIGMA_GAP_TOLERANCE: f64 = 1e-6;

/// Orthonormal (Frobenius) basis of `span{z ᵗz − Σ}` over the support.
fn second_moment_directions(spec: &MeasureSpec, sigma: &SymMat) -> Vec<SymMat> {
    let d = spec.dim();
    let generators: Vec<SymMat> = match spec.atoms() {
        Some(atoms) => atoms
            .iter()
            .map(|a| SymMat::outer(&a.point).sub(sigma))
            .collect(),
        // Continuous ρ: every symmetric direction.
        None => {
            let mut out = Vec::new();
            for i in 0..d {
                for j in i..d {
                    let mut e = SymMat::zeros(d);
                    e.set(i, j, 1.0);
                    out.push(e);
                }
            }
            out
        }
    };
    let mut basis: Vec<SymMat> = Vec::new();
    for g in generators {
        let mut v = g;
        for b in &basis {
            let c = v.frobenius_dot(b);
            v = v.axpy(-c, b);
        }
        let norm = v.frobenius_norm();
        if norm > 1e-9 {
            basis.push(v.scaled(1.0 / norm));
        }
    }
    basis
}

/// Largest `t ≥ 0` with `Σ + s·B` PSD for all `|s| ≤ t`.
fn psd_step(sigma: &SymMat, b: &SymMat) -> Result<f64> {
    let r = sigma.inv_sqrt_spd()?;
    let e = b.congruence(&r).eigen();
    let spread = e.max_value().max(-e.min_value());
    Ok(if spread > 0.0 { 1.0 / spread } else { f64::INFINITY })
}

fn axis(points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -1.0 + 2.0 * i as f64 / (points - 1) as f64)
        .collect()
}

/// Product norm `√(‖x‖² + ‖M − Σ‖_F²)` distance to `(0, Σ)`.
fn distance_to_center(x: &[f64], m: &SymMat, sigma: &SymMat) -> f64 {
    (dot(x, x) + m.sub(sigma).frobenius_norm().powi(2)).sqrt()
}

/// Evaluates `I − F` on a grid around `(0, Σ)` in `Δ` plus random points of
/// `Δ`, and checks that it is positive away from `(0, Σ)` and vanishes there.
pub fn verify_rate_minimum(spec: &MeasureSpec, grid: &RateGrid) -> Result<RateMinimumReport> {
    let hyper = spec.max_hyperplane_mass();
    if !hyper.below_threshold {
        return Err(Error::InvalidArgument(format!(
            "a hyperplane carries mass {:.4} ≥ e^(-1/2); the minimum need not be unique",
            hyper.value
        )));
    }
    let family = Family::new(spec)?;
    let d = spec.dim();
    let sigma = spec.covariance()?;
    let directions = second_moment_directions(spec, &sigma);

    let mut offsets: Vec<Vec<f64>> = vec![vec![]];
    for b in &directions {
        let span = grid.m_fraction * psd_step(&sigma, b)?.min(1e3);
        offsets = offsets
            .into_iter()
            .flat_map(|o| {
                axis(grid.points_per_axis).into_iter().map(move |s| {
                    let mut o = o.clone();
                    o.push(s * span);
                    o
                })
            })
            .collect();
    }
    let x_axis = axis(grid.points_per_axis);
    let total = offsets.len() * x_axis.len().pow(d as u32);
    if total > grid.max_points {
        return Err(Error::InvalidArgument(format!(
            "rate grid has {total} points, above the limit of {}",
            grid.max_points
        )));
    }

    let mut candidates: Vec<(Vec<f64>, SymMat)> = vec![(vec![0.0; d], sigma.clone())];
    for off in &offsets {
        let mut m = sigma.clone();
        for (c, b) in off.iter().zip(&directions) {
            m = m.axpy(*c, b);
        }
        let scales: Vec<f64> = (0..d).map(|j| grid.x_fraction * m.get(j, j).max(0.0).sqrt()).collect();
        let mut idx = vec![0usize; d];
        'grid: loop {
            let x: Vec<f64> = idx.iter().zip(&scales).map(|(&i, s)| x_axis[i] * s).collect();
            candidates.push((x, m.clone()));
            let mut k = 0;
            loop {
                if k == d {
                    break 'grid;
                }
                idx[k] += 1;
                if idx[k] < x_axis.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }
    let mut rng = stream(grid.seed, 0);
    let mut z = vec![0.0; d];
    for _ in 0..grid.random_points {
        let count = d + 2;
        let weights: Vec<f64> = (0..count).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = weights.iter().sum();
        let mut x = vec![0.0; d];
        let mut m = SymMat::zeros(d);
        for w in &weights {
            spec.sample_into(&mut rng, &mut z);
            let p = w / total;
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += p * zi;
            }
            m.add_outer(&z, p);
        }
        candidates.push((x, m));
    }

    let evaluated: Vec<Option<RatePoint>> = candidates
        .par_iter()
        .map(|(x, m)| match rate_point_with(&family, x, m) {
            Ok(p) => Ok(Some(p)),
            Err(Error::OutsideDomain) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<_>>()?;

    let gap_at_sigma = evaluated[0].as_ref().map(|p| p.gap).unwrap_or(f64::NAN);
    let mut min: Option<&RatePoint> = None;
    let mut violations = Vec::new();
    let mut skipped = 0;
    let mut unconverged = 0;
    for p in &evaluated {
        let Some(p) = p else {
            skipped += 1;
            continue;
        };
        if !p.converged {
            unconverged += 1;
        }
        if min.is_none_or(|m| p.gap < m.gap) {
            min = Some(p);
        }
        if p.gap <= 0.0 && distance_to_center(&p.x, &p.m, &sigma) > grid.epsilon {
            violations.push(RateLocation {
                x: p.x.clone(),
                m: p.m.clone(),
                gap: p.gap,
            });
        }
    }
    let min = min.ok_or_else(|| Error::InvalidArgument("no grid point lies in Δ".into()))?;
    let passed = violations.is_empty() && gap_at_sigma.abs() < SIGMA_GAP_TOLERANCE;
    Ok(RateMinimumReport {
        min_location: RateLocation {
            x: min.x.clone(),
            m: min.m.clone(),
            gap: min.gap,
        },
        min_value: min.gap,
        gap_at_sigma,
        grid: GridSummary {
            settings: grid.clone(),
            m_directions: directions,
            evaluated: evaluated.len() - skipped,
            skipped,
            unconverged,
        },
        violations,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_examples() {
        let sigma = SymMat::identity(2);
        assert_eq!(eval_f(&[0.0, 0.0], &sigma).unwrap(), (0.0, Region::DeltaStar));
        assert_eq!(eval_f(&[1.0], &SymMat::scalar(1, 2.0)).unwrap().0, 0.25);
        let (v, r) = eval_f(&[1.0, 0.0], &SymMat::identity(2)).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(r, Region::DeltaStar);
        assert_eq!(
            eval_f(&[0.0, 0.0], &SymMat::diagonal(&[1.0, 0.0])).unwrap(),
            (0.5, Region::DeltaBoundary)
        );
        assert_eq!(eval_f(&[2.0], &SymMat::scalar(1, 1.0)), Err(Error::OutsideDomain));
    }

    #[test]
    fn f_boundary_continuity() {
        let m = SymMat::from_rows(&[vec![2.0, 0.3], vec![0.3, 1.0]]).unwrap();
        let dir = [0.6, 0.8];
        let q = m.inv_spd().unwrap().quad_form(&dir);
        let edge = 1.0 / q.sqrt();
        let x: Vec<f64> = dir.iter().map(|v| v * edge * (1.0 - 1e-9)).collect();
        assert!((eval_f(&x, &m).unwrap().0 - 0.5).abs() < 1e-8);
    }

    #[test]
    fn laplace_examples() {
        let rad = MeasureSpec::rademacher(1).unwrap();
        assert_eq!(log_laplace(&rad, &[0.0], &SymMat::zeros(1)).unwrap(), 0.0);
        let v = log_laplace(&rad, &[1.0], &SymMat::zeros(1)).unwrap();
        assert!((v - 1f64.cosh().ln()).abs() < 1e-15);
        let v = log_laplace(&rad, &[0.7], &SymMat::scalar(1, -0.4)).unwrap();
        assert!((v - (-0.4 + 0.7f64.cosh().ln())).abs() < 1e-14);

        let axes = MeasureSpec::axes(2).unwrap();
        let v = log_laplace(&axes, &[0.0, 0.0], &SymMat::scalar(2, 0.8)).unwrap();
        assert!((v - 0.8).abs() < 1e-14);

        let gauss = MeasureSpec::standard_gaussian(1).unwrap();
        assert!(matches!(
            log_laplace(&gauss, &[0.0], &SymMat::zeros(1)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn uniform_ball_laplace() {
        // d = 1: (1/2r)∫_{−r}^{r} e^{uz} dz = sinh(ur)/(ur).
        let ball = MeasureSpec::uniform_ball(1, 2.0).unwrap();
        let v = log_laplace(&ball, &[0.8], &SymMat::zeros(1)).unwrap();
        assert!((v - (1.6f64.sinh() / 1.6).ln()).abs() < 1e-12);
        // d = 3, A = aI: 3/r³ ∫ ρ² e^{aρ²} dρ.
        let ball = MeasureSpec::uniform_ball(3, 1.0).unwrap();
        let a = 0.5;
        let v = log_laplace(&ball, &[0.0; 3], &SymMat::scalar(3, a)).unwrap();
        let exact = (3.0 * crate::quadrature::simpson(|r| r * r * (a * r * r).exp(), 0.0, 1.0, 2001)).ln();
        assert!((v - exact).abs() < 1e-11, "{v} {exact}");
        // The covariance comes out as the gradient in A at the origin.
        let g = log_laplace_gradient(&ball, &[0.0; 3], &SymMat::zeros(3)).unwrap();
        assert!(g.second.sub(&SymMat::scalar(3, 0.2)).max_abs() < 1e-12);
        assert!(matches!(
            log_laplace(&MeasureSpec::uniform_ball(4, 1.0).unwrap(), &[0.0; 4], &SymMat::zeros(4)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn cramer_examples() {
        let rad = MeasureSpec::rademacher(1).unwrap();
        let c = cramer_transform(&rad, &[0.5], &SymMat::identity(1)).unwrap();
        let exact = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((c.value - exact).abs() < 1e-12);
        assert!(c.converged);
        assert!((rate_gap(&rad, &[0.5], &SymMat::identity(1)).unwrap() - (exact - 0.125)).abs() < 1e-12);

        let c = cramer_transform(&rad, &[0.0], &SymMat::scalar(1, 2.0)).unwrap();
        assert!(c.infinite);
        assert_eq!(c.value, f64::INFINITY);

        let axes = MeasureSpec::axes(2).unwrap();
        let c = cramer_transform(&axes, &[0.0, 0.0], &SymMat::scalar(2, 0.5)).unwrap();
        assert_eq!(c.value, 0.0);
        assert_eq!(c.iterations, 0);
        assert!(c.u.iter().all(|v| *v == 0.0) && c.a.max_abs() == 0.0);

        // (0, 1.5Σ) for the uniform ball: a larger second moment costs a positive rate.
        let ball = MeasureSpec::uniform_ball(2, 1.0).unwrap();
        let sigma = ball.covariance().unwrap();
        assert!(rate_gap(&ball, &[0.0, 0.0], &sigma).unwrap().abs() < 1e-9);
        let g = rate_gap(&ball, &[0.0, 0.0], &sigma.scaled(1.5)).unwrap();
        assert!(g > 0.0);
    }

    #[test]
    fn rate_minimum_small_grids() {
        let rad = MeasureSpec::rademacher(1).unwrap();
        let r = verify_rate_minimum(&rad, &RateGrid::default()).unwrap();
        assert!(r.passed, "{:?}", r.violations);
        assert!(r.grid.m_directions.is_empty());
        assert_eq!(r.min_location.x, vec![0.0]);

        let axes = MeasureSpec::axes(2).unwrap();
        let grid = RateGrid {
            points_per_axis: 7,
            random_points: 20,
            ..RateGrid::default()
        };
        let r = verify_rate_minimum(&axes, &grid).unwrap();
        assert!(r.passed, "{:?}", r.violations);
        assert_eq!(r.grid.m_directions.len(), 1);
        assert!(r.min_value.abs() < 1e-9);
        let v = serde_json::to_value(&r).unwrap();
        for key in ["min_location", "min_value", "grid", "violations"] {
            assert!(v.get(key).is_some());
        }
    }

    #[test]
    fn heavy_hyperplane_is_refused() {
        let spec = MeasureSpec::discrete(vec![
            (vec![1.0, 0.0], 0.4),
            (vec![-1.0, 0.0], 0.4),
            (vec![0.0, 1.0], 0.1),
            (vec![0.0, -1.0], 0.1),
        ])
        .unwrap();
        assert!(matches!(
            verify_rate_minimum(&spec, &RateGrid::default()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
