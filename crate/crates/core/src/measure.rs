//! Symmetric base measures ρ on ℝ^d and their moment quantities.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMat;

const SYMMETRY_TOLERANCE: f64 = 1e-12;
const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;
const DEGENERACY_FACTOR: f64 = 1e-12;

/// Hyperplane masses at or above this break the rate-function argument.
pub fn hyperplane_mass_threshold() -> f64 {
    (-0.5_f64).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureKind {
    /// Finitely many atoms, closed under negation with matching weights.
    Discrete { atoms: Vec<Atom> },
    /// Centered Gaussian with the given covariance.
    Gaussian { covariance: SymMat },
    /// Independent ±1 coordinates.
    RademacherProduct,
    /// Uniform on the centered Euclidean ball.
    UniformBall { radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
enum SamplerCache {
    None,
    Cumulative(Vec<f64>),
    Factor(SymMat),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpecRepr", into = "MeasureSpecRepr")]
pub struct MeasureSpec {
    dim: usize,
    kind: MeasureKind,
    cache: SamplerCache,
}

/// Which `v ≥ 0` make `∫ exp(v‖z‖²) dρ` finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquareExpIntegrability {
    /// Finite for every `v ≥ 0` (bounded support).
    pub all_v: bool,
    /// Supremum of admissible `v`; infinite when `all_v`.
    pub v0_max: f64,
}

impl SquareExpIntegrability {
    /// Some `v0 > 0` works.
    pub fn has_positive_v0(&self) -> bool {
        self.v0_max > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperplaneMass {
    pub value: f64,
    /// Normal vector of a maximizing hyperplane, when one carries mass.
    pub normal: Option<Vec<f64>>,
    pub below_threshold: bool,
}

impl MeasureSpec {
    pub fn discrete(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let dim = atoms
            .first()
            .map(|(p, _)| p.len())
            .ok_or_else(|| Error::InvalidMeasure("discrete measure needs at least one atom".into()))?;
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        let mut out = Vec::with_capacity(atoms.len());
        for (point, weight) in atoms {
            if point.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: point.len(),
                });
            }
            if !(weight > 0.0) || !weight.is_finite() || point.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "atom {point:?} has invalid weight {weight} or coordinates"
                )));
            }
            out.push(Atom { point, weight });
        }
        let total: f64 = out.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        for atom in &out {
            let mirrored = out.iter().any(|b| {
                (b.weight - atom.weight).abs() <= SYMMETRY_TOLERANCE
                    && b.point
                        .iter()
                        .zip(&atom.point)
                        .all(|(x, y)| (x + y).abs() <= SYMMETRY_TOLERANCE)
            });
            if !mirrored {
                return Err(Error::InvalidMeasure(format!(
                    "atom {:?} has no mirrored partner with weight {}",
                    atom.point, atom.weight
                )));
            }
        }
        let mut cumulative = Vec::with_capacity(out.len());
        let mut acc = 0.0;
        for a in &out {
            acc += a.weight / total;
            cumulative.push(acc);
        }
        *cumulative.last_mut().unwrap() = 1.0;
        let spec = MeasureSpec {
            dim,
            kind: MeasureKind::Discrete { atoms: out },
            cache: SamplerCache::Cumulative(cumulative),
        };
        spec.covariance()?;
        Ok(spec)
    }

    pub fn gaussian(covariance: SymMat) -> Result<Self> {
        let dim = covariance.dim();
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        check_non_degenerate(&covariance)?;
        let factor = covariance.sqrt_spd()?;
        Ok(MeasureSpec {
            dim,
            kind: MeasureKind::Gaussian { covariance },
            cache: SamplerCache::Factor(factor),
        })
    }

    pub fn standard_gaussian(dim: usize) -> Result<Self> {
        Self::gaussian(SymMat::identity(dim))
    }

    pub fn rademacher(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        Ok(MeasureSpec {
            dim,
            kind: MeasureKind::RademacherProduct,
            cache: SamplerCache::None,
        })
    }

    pub fn uniform_ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be at least 1".into()));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidMeasure(format!("radius must be positive, got {radius}")));
        }
        Ok(MeasureSpec {
            dim,
            kind: MeasureKind::UniformBall { radius },
            cache: SamplerCache::None,
        })
    }

    /// `±e_i`, each with weight `1/(2d)`.
    pub fn axes(dim: usize) -> Result<Self> {
        let w = 1.0 / (2 * dim) as f64;
        let mut atoms = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for s in [1.0, -1.0] {
                let mut p = vec![0.0; dim];
                p[i] = s;
                atoms.push((p, w));
            }
        }
        Self::discrete(atoms)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            MeasureKind::Discrete { .. } => "discrete-symmetric",
            MeasureKind::Gaussian { .. } => "gaussian",
            MeasureKind::RademacherProduct => "rademacher-product",
            MeasureKind::UniformBall { .. } => "uniform-ball",
        }
    }

    pub fn has_bounded_support(&self) -> bool {
        !matches!(self.kind, MeasureKind::Gaussian { .. })
    }

    /// Atoms of the measure when it is finitely supported. The Rademacher
    /// product is expanded into its `2^d` sign vectors.
    pub fn atoms(&self) -> Option<Vec<Atom>> {
        match &self.kind {
            MeasureKind::Discrete { atoms } => Some(atoms.clone()),
            MeasureKind::RademacherProduct => {
                let d = self.dim;
                let count = 1usize << d;
                let w = 1.0 / count as f64;
                Some(
                    (0..count)
                        .map(|mask| Atom {
                            point: (0..d)
                                .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
                                .collect(),
                            weight: w,
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    /// Draws one vector into `out` (length `d`) without allocating.
    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match (&self.kind, &self.cache) {
            (MeasureKind::RademacherProduct, _) => {
                let mut bits: u64 = rng.random();
                for (i, o) in out.iter_mut().enumerate() {
                    if i > 0 && i % 64 == 0 {
                        bits = rng.random();
                    }
                    *o = if bits & 1 == 1 { 1.0 } else { -1.0 };
                    bits >>= 1;
                }
            }
            (MeasureKind::Discrete { atoms }, SamplerCache::Cumulative(cum)) => {
                let u: f64 = rng.random();
                let k = cum.partition_point(|&c| c <= u).min(atoms.len() - 1);
                out.copy_from_slice(&atoms[k].point);
            }
            (MeasureKind::Gaussian { .. }, SamplerCache::Factor(factor)) => {
                let d = self.dim;
                if d == 1 {
                    let g: f64 = rng.sample(StandardNormal);
                    out[0] = factor.get(0, 0) * g;
                    return;
                }
                let mut g = [0.0_f64; 8];
                let mut heap;
                let g: &mut [f64] = if d <= 8 {
                    &mut g[..d]
                } else {
                    heap = vec![0.0; d];
                    &mut heap
                };
                for v in g.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                factor.mul_vec_into(g, out);
            }
            (MeasureKind::UniformBall { radius }, _) => {
                let d = self.dim;
                if d == 1 {
                    out[0] = radius * (2.0 * rng.random::<f64>() - 1.0);
                    return;
                }
                let mut norm2 = 0.0;
                while norm2 == 0.0 {
                    norm2 = 0.0;
                    for o in out.iter_mut() {
                        let g: f64 = rng.sample(StandardNormal);
                        *o = g;
                        norm2 += g * g;
                    }
                }
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64) / norm2.sqrt();
                for o in out.iter_mut() {
                    *o *= r;
                }
            }
            _ => unreachable!("sampler cache matches the measure kind by construction"),
        }
    }

    /// Closed-form `Σ = ∫ z ᵗz dρ`; errors when `Σ` is degenerate.
    pub fn covariance(&self) -> Result<SymMat> {
        let d = self.dim;
        let sigma = match &self.kind {
            MeasureKind::Discrete { atoms } => {
                let mut m = SymMat::zeros(d);
                for a in atoms {
                    m.add_outer(&a.point, a.weight);
                }
                m
            }
            MeasureKind::Gaussian { covariance } => covariance.clone(),
            MeasureKind::RademacherProduct => SymMat::identity(d),
            MeasureKind::UniformBall { radius } => {
                SymMat::scalar(d, radius * radius / (d as f64 + 2.0))
            }
        };
        check_non_degenerate(&sigma)?;
        Ok(sigma)
    }

    pub fn fourth_moment_tensor(&self) -> FourthMomentTensor {
        let d = self.dim;
        let mut t = FourthMomentTensor::zeros(d);
        let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        match &self.kind {
            MeasureKind::Discrete { atoms } => {
                for a in atoms {
                    let p = &a.point;
                    t.fill(|i, j, k, l| a.weight * p[i] * p[j] * p[k] * p[l], true);
                }
            }
            MeasureKind::Gaussian { covariance: s } => {
                t.fill(
                    |i, j, k, l| {
                        s.get(i, j) * s.get(k, l) + s.get(i, k) * s.get(j, l) + s.get(i, l) * s.get(j, k)
                    },
                    false,
                );
            }
            MeasureKind::RademacherProduct => {
                t.fill(
                    |i, j, k, l| {
                        let all = if i == j && j == k && k == l { 1.0 } else { 0.0 };
                        delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k)
                            - 2.0 * all
                    },
                    false,
                );
            }
            MeasureKind::UniformBall { radius } => {
                let df = d as f64;
                let c = radius.powi(4) / ((df + 2.0) * (df + 4.0));
                t.fill(
                    |i, j, k, l| {
                        c * (delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k))
                    },
                    false,
                );
            }
        }
        t
    }

    /// Fifth-moment form `Σ m⁽⁵⁾ z⁵`; zero for every symmetric kind.
    pub fn m5_eval(&self, z: &[f64]) -> f64 {
        match &self.kind {
            MeasureKind::Discrete { atoms } => atoms
                .iter()
                .map(|a| {
                    let s: f64 = a.point.iter().zip(z).map(|(p, q)| p * q).sum();
                    a.weight * s.powi(5)
                })
                .sum(),
            _ => 0.0,
        }
    }

    pub fn square_exp_integrability(&self) -> SquareExpIntegrability {
        match &self.kind {
            MeasureKind::Gaussian { covariance } => SquareExpIntegrability {
                all_v: false,
                v0_max: 1.0 / (2.0 * covariance.eigen().max_value()),
            },
            _ => SquareExpIntegrability {
                all_v: true,
                v0_max: f64::INFINITY,
            },
        }
    }

    /// Largest ρ-mass of a vector hyperplane. Only hyperplanes spanned by
    /// atoms can carry mass, so the search runs over `(d-1)`-subsets of
    /// atom directions; atomless kinds give 0.
    pub fn max_hyperplane_mass(&self) -> HyperplaneMass {
        let threshold = hyperplane_mass_threshold();
        let Some(atoms) = self.atoms() else {
            return HyperplaneMass {
                value: 0.0,
                normal: None,
                below_threshold: true,
            };
        };
        let d = self.dim;
        let is_zero = |p: &[f64]| p.iter().all(|&v| v == 0.0);
        let zero_mass: f64 = atoms.iter().filter(|a| is_zero(&a.point)).map(|a| a.weight).sum();
        if d == 1 {
            return HyperplaneMass {
                value: zero_mass,
                normal: Some(vec![1.0]),
                below_threshold: zero_mass < threshold,
            };
        }

        let mut directions: Vec<Vec<f64>> = Vec::new();
        for a in atoms.iter().filter(|a| !is_zero(&a.point)) {
            let norm = a.point.iter().map(|v| v * v).sum::<f64>().sqrt();
            let u: Vec<f64> = a.point.iter().map(|v| v / norm).collect();
            let dup = directions.iter().any(|e| {
                let c: f64 = e.iter().zip(&u).map(|(x, y)| x * y).sum();
                (c.abs() - 1.0).abs() < 1e-12
            });
            if !dup {
                directions.push(u);
            }
        }

        let mut best = HyperplaneMass {
            value: zero_mass,
            normal: None,
            below_threshold: zero_mass < threshold,
        };
        let mut chosen = Vec::with_capacity(d - 1);
        for_each_subset(directions.len(), d - 1, 0, &mut chosen, &mut |subset| {
            let mut gram = SymMat::zeros(d);
            for &k in subset {
                gram.add_outer(&directions[k], 1.0);
            }
            let eig = gram.eigen();
            if d > 1 && eig.values[1] <= 1e-12 * eig.values.iter().sum::<f64>() {
                return;
            }
            let normal = eig.vector(0);
            let mass: f64 = atoms
                .iter()
                .filter(|a| {
                    let norm = a.point.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dot: f64 = a.point.iter().zip(&normal).map(|(x, y)| x * y).sum();
                    dot.abs() <= 1e-9 * norm
                })
                .map(|a| a.weight)
                .sum();
            if mass > best.value {
                best.value = mass;
                best.normal = Some(normal);
            }
        });
        best.below_threshold = best.value < threshold;
        best
    }
}

fn for_each_subset(
    n: usize,
    k: usize,
    start: usize,
    chosen: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]),
) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    for i in start..n {
        chosen.push(i);
        for_each_subset(n, k, i + 1, chosen, f);
        chosen.pop();
    }
}

fn check_non_degenerate(sigma: &SymMat) -> Result<()> {
    let eig = sigma.eigen();
    let threshold = DEGENERACY_FACTOR * sigma.trace().abs();
    if eig.min_value() <= threshold {
        return Err(Error::DegenerateCovariance {
            min_eigenvalue: eig.min_value(),
            threshold,
        });
    }
    Ok(())
}

/// Draws `count` i.i.d. vectors from ρ.
pub fn sample<R: Rng + ?Sized>(spec: &MeasureSpec, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut v = vec![0.0; spec.dim()];
            spec.sample_into(rng, &mut v);
            v
        })
        .collect()
}

/// The fully symmetric tensor `m_ijkl = ∫ y_i y_j y_k y_l dρ(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourthMomentTensor {
    dim: usize,
    data: Vec<f64>,
}

impl FourthMomentTensor {
    fn zeros(dim: usize) -> Self {
        FourthMomentTensor {
            dim,
            data: vec![0.0; dim.pow(4)],
        }
    }

    fn fill(&mut self, f: impl Fn(usize, usize, usize, usize) -> f64, accumulate: bool) {
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let idx = ((i * d + j) * d + k) * d + l;
                        let v = f(i, j, k, l);
                        if accumulate {
                            self.data[idx] += v;
                        } else {
                            self.data[idx] = v;
                        }
                    }
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.dim;
        self.data[((i * d + j) * d + k) * d + l]
    }

    /// `M4(z) = Σ_{ijkl} m_ijkl z_i z_j z_k z_l`.
    #[inline]
    pub fn m4_eval(&self, z: &[f64]) -> f64 {
        let d = self.dim;
        debug_assert_eq!(z.len(), d);
        if d == 1 {
            let z2 = z[0] * z[0];
            return self.data[0] * z2 * z2;
        }
        let mut acc = 0.0;
        let mut idx = 0;
        for i in 0..d {
            for j in 0..d {
                let zij = z[i] * z[j];
                for k in 0..d {
                    let zijk = zij * z[k];
                    let row = &self.data[idx..idx + d];
                    let inner: f64 = row.iter().zip(z).map(|(m, zl)| m * zl).sum();
                    acc += zijk * inner;
                    idx += d;
                }
            }
        }
        acc
    }

    /// Entries with `(z ↦ M4(W z))` folded in: `m'_abcd = Σ m_ijkl W_ia W_jb W_kc W_ld`.
    pub fn transformed(&self, w: &SymMat) -> FourthMomentTensor {
        let d = self.dim;
        let mut cur = self.data.clone();
        // Contract one index at a time; the tensor stays fully symmetric.
        for axis in 0..4 {
            let mut next = vec![0.0; cur.len()];
            let stride = d.pow(3 - axis as u32);
            for idx in 0..cur.len() {
                let a = (idx / stride) % d;
                let base = idx - a * stride;
                let mut acc = 0.0;
                for i in 0..d {
                    acc += cur[base + i * stride] * w.get(i, a);
                }
                next[idx] = acc;
            }
            cur = next;
        }
        FourthMomentTensor { dim: d, data: cur }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureSpecRepr {
    kind: String,
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    atoms: Option<Vec<(Vec<f64>, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    covariance: Option<SymMat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
}

impl TryFrom<MeasureSpecRepr> for MeasureSpec {
    type Error = Error;

    fn try_from(r: MeasureSpecRepr) -> Result<Self> {
        let spec = match r.kind.as_str() {
            "discrete-symmetric" | "discrete" => MeasureSpec::discrete(
                r.atoms
                    .ok_or_else(|| Error::InvalidMeasure("discrete measure requires `atoms`".into()))?,
            )?,
            "gaussian" => MeasureSpec::gaussian(
                r.covariance
                    .ok_or_else(|| Error::InvalidMeasure("gaussian measure requires `covariance`".into()))?,
            )?,
            "rademacher-product" | "rademacher" => MeasureSpec::rademacher(r.dim)?,
            "uniform-ball" => MeasureSpec::uniform_ball(
                r.dim,
                r.radius
                    .ok_or_else(|| Error::InvalidMeasure("uniform-ball measure requires `radius`".into()))?,
            )?,
            other => return Err(Error::InvalidMeasure(format!("unknown measure kind `{other}`"))),
        };
        if spec.dim() != r.dim {
            return Err(Error::DimensionMismatch {
                expected: r.dim,
                got: spec.dim(),
            });
        }
        Ok(spec)
    }
}

impl From<MeasureSpec> for MeasureSpecRepr {
    fn from(m: MeasureSpec) -> Self {
        let kind = m.kind_name().to_string();
        let mut repr = MeasureSpecRepr {
            kind,
            dim: m.dim,
            atoms: None,
            covariance: None,
            radius: None,
        };
        match m.kind {
            MeasureKind::Discrete { atoms } => {
                repr.atoms = Some(atoms.into_iter().map(|a| (a.point, a.weight)).collect())
            }
            MeasureKind::Gaussian { covariance } => repr.covariance = Some(covariance),
            MeasureKind::RademacherProduct => {}
            MeasureKind::UniformBall { radius } => repr.radius = Some(radius),
        }
        repr
    }
}

impl std::fmt::Display for MeasureSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}(d={})", self.kind_name(), self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn skewed_axes() -> MeasureSpec {
        MeasureSpec::discrete(vec![
            (vec![1.0, 0.0], 0.35),
            (vec![-1.0, 0.0], 0.35),
            (vec![0.0, 1.0], 0.15),
            (vec![0.0, -1.0], 0.15),
        ])
        .unwrap()
    }

    #[test]
    fn rademacher_support() {
        let spec = MeasureSpec::rademacher(1).unwrap();
        let draws = sample(&spec, 3, &mut stream(1, 0));
        assert_eq!(draws.len(), 3);
        assert!(draws.iter().all(|v| v[0] == 1.0 || v[0] == -1.0));
    }

    #[test]
    fn gaussian_sample_covariance() {
        let spec = MeasureSpec::standard_gaussian(2).unwrap();
        let draws = sample(&spec, 100_000, &mut stream(2, 0));
        let n = draws.len() as f64;
        let mut cov = [0.0; 4];
        for v in &draws {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i * 2 + j] += v[i] * v[j] / n;
                }
            }
        }
        let target = [1.0, 0.0, 0.0, 1.0];
        for (c, t) in cov.iter().zip(target) {
            assert!(close(*c, t, 0.03), "{cov:?}");
        }
    }

    #[test]
    fn axes_frequencies() {
        let spec = MeasureSpec::axes(2).unwrap();
        let draws = sample(&spec, 100_000, &mut stream(3, 0));
        for target in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
            let freq = draws.iter().filter(|v| v[..] == target[..]).count() as f64 / 1e5;
            assert!(close(freq, 0.25, 0.01), "{target:?}: {freq}");
        }
    }

    #[test]
    fn covariance_closed_forms() {
        assert_eq!(MeasureSpec::rademacher(2).unwrap().covariance().unwrap(), SymMat::identity(2));
        let axes = MeasureSpec::axes(2).unwrap().covariance().unwrap();
        assert_eq!(axes, SymMat::diagonal(&[0.5, 0.5]));
        let g = MeasureSpec::gaussian(SymMat::diagonal(&[1.0, 4.0])).unwrap();
        assert_eq!(g.covariance().unwrap(), SymMat::diagonal(&[1.0, 4.0]));
        let ball = MeasureSpec::uniform_ball(3, 2.0).unwrap().covariance().unwrap();
        assert!(close(ball.get(0, 0), 4.0 / 5.0, 1e-15));
    }

    #[test]
    fn degenerate_measures_are_rejected() {
        let err = MeasureSpec::discrete(vec![(vec![1.0, 0.0], 0.5), (vec![-1.0, 0.0], 0.5)]);
        assert!(matches!(err, Err(Error::DegenerateCovariance { .. })));
        let err = MeasureSpec::gaussian(SymMat::diagonal(&[1.0, 0.0]));
        assert!(matches!(err, Err(Error::DegenerateCovariance { .. })));
    }

    #[test]
    fn asymmetric_or_unnormalized_atoms_are_rejected() {
        let err = MeasureSpec::discrete(vec![(vec![1.0], 0.6), (vec![-1.0], 0.4)]);
        assert!(matches!(err, Err(Error::InvalidMeasure(_))));
        let err = MeasureSpec::discrete(vec![(vec![1.0], 0.5), (vec![-1.0], 0.4)]);
        assert!(matches!(err, Err(Error::InvalidMeasure(_))));
    }

    #[test]
    fn fourth_moments() {
        let t = MeasureSpec::rademacher(1).unwrap().fourth_moment_tensor();
        assert_eq!(t.get(0, 0, 0, 0), 1.0);
        assert_eq!(t.m4_eval(&[2.0]), 16.0);

        let t = MeasureSpec::standard_gaussian(2).unwrap().fourth_moment_tensor();
        assert_eq!(t.get(0, 0, 0, 0), 3.0);
        assert_eq!(t.get(0, 0, 1, 1), 1.0);
        assert_eq!(t.get(0, 1, 0, 1), 1.0);
        assert_eq!(t.get(0, 0, 0, 1), 0.0);
        assert!(close(t.m4_eval(&[1.0, 1.0]), 12.0, 1e-12));

        let t = MeasureSpec::axes(2).unwrap().fourth_moment_tensor();
        assert_eq!(t.get(0, 0, 0, 0), 0.5);
        assert_eq!(t.get(1, 1, 1, 1), 0.5);
        assert_eq!(t.get(0, 0, 1, 1), 0.0);
        assert!(close(t.m4_eval(&[1.0, 1.0]), 1.0, 1e-15));
    }

    #[test]
    fn rademacher_product_tensor_matches_atom_sum() {
        let spec = MeasureSpec::rademacher(3).unwrap();
        let closed = spec.fourth_moment_tensor();
        let as_atoms = MeasureSpec::discrete(
            spec.atoms().unwrap().into_iter().map(|a| (a.point, a.weight)).collect(),
        )
        .unwrap()
        .fourth_moment_tensor();
        for (a, b) in closed.data.iter().zip(&as_atoms.data) {
            assert!(close(*a, *b, 1e-15));
        }
    }

    #[test]
    fn transformed_tensor_matches_substitution() {
        let t = MeasureSpec::rademacher(2).unwrap().fourth_moment_tensor();
        let w = SymMat::from_rows(&[vec![2.0, 0.3], vec![0.3, 0.7]]).unwrap();
        let tw = t.transformed(&w);
        let z = [0.4, -1.3];
        let direct = t.m4_eval(&w.mul_vec(&z));
        assert!(close(tw.m4_eval(&z), direct, 1e-12 * direct.abs().max(1.0)));
    }

    #[test]
    fn fifth_moments_vanish() {
        assert_eq!(MeasureSpec::rademacher(1).unwrap().m5_eval(&[1.0]), 0.0);
        assert_eq!(MeasureSpec::standard_gaussian(2).unwrap().m5_eval(&[1.0, 2.0]), 0.0);
        assert!(MeasureSpec::axes(2).unwrap().m5_eval(&[3.0, -1.0]).abs() < 1e-12);
    }

    #[test]
    fn hyperplane_masses() {
        let g = MeasureSpec::standard_gaussian(2).unwrap().max_hyperplane_mass();
        assert_eq!(g.value, 0.0);
        assert!(g.below_threshold);

        let a = MeasureSpec::axes(2).unwrap().max_hyperplane_mass();
        assert!(close(a.value, 0.5, 1e-15));
        assert!(a.below_threshold);

        let s = skewed_axes().max_hyperplane_mass();
        assert!(close(s.value, 0.7, 1e-12));
        assert!(!s.below_threshold);

        let r = MeasureSpec::rademacher(2).unwrap().max_hyperplane_mass();
        assert!(close(r.value, 0.5, 1e-15));

        let with_zero = MeasureSpec::discrete(vec![(vec![0.0], 0.7), (vec![1.0], 0.15), (vec![-1.0], 0.15)])
            .unwrap()
            .max_hyperplane_mass();
        assert!(close(with_zero.value, 0.7, 1e-15));
        assert!(!with_zero.below_threshold);
    }

    #[test]
    fn square_exp_certificates() {
        let g = MeasureSpec::gaussian(SymMat::diagonal(&[1.0, 4.0])).unwrap();
        let c = g.square_exp_integrability();
        assert!(!c.all_v);
        assert!(close(c.v0_max, 1.0 / 8.0, 1e-15));
        assert!(c.has_positive_v0());
        assert!(MeasureSpec::axes(3).unwrap().square_exp_integrability().all_v);
    }

    #[test]
    fn json_schema_round_trip() {
        let text = r#"{"kind":"discrete-symmetric","dim":2,"atoms":[[[1.0,0.0],0.25],[[-1.0,0.0],0.25],[[0.0,1.0],0.25],[[0.0,-1.0],0.25]]}"#;
        let spec: MeasureSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec, MeasureSpec::axes(2).unwrap());
        assert_eq!(serde_json::to_string(&spec).unwrap(), text);

        let g: MeasureSpec =
            serde_json::from_str(r#"{"kind":"gaussian","dim":2,"covariance":[[1.0,0.0],[0.0,4.0]]}"#).unwrap();
        assert_eq!(g.covariance().unwrap(), SymMat::diagonal(&[1.0, 4.0]));

        let bad = serde_json::from_str::<MeasureSpec>(r#"{"kind":"cauchy","dim":1}"#);
        assert!(bad.is_err());
        let bad = serde_json::from_str::<MeasureSpec>(r#"{"kind":"uniform-ball","dim":2}"#);
        assert!(bad.is_err());
    }
}
