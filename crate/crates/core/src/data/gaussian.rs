//! Gaussian class clusters with designated overlapping ("entangled") class pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, FeatureDims, LabelSet, PLLDataset, PartialSample};
use crate::numkernel::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub enum Covariance {
    Isotropic(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Covariance {
    fn matrix(&self, dim: usize) -> Result<Vec<Vec<f64>>, DataError> {
        let mut m = vec![vec![0.0; dim]; dim];
        match self {
            Covariance::Isotropic(v) => (0..dim).for_each(|i| m[i][i] = *v),
            Covariance::Diagonal(d) => {
                if d.len() != dim {
                    return Err(DataError::Parameter(format!("diagonal covariance has {} entries, dim is {dim}", d.len())));
                }
                (0..dim).for_each(|i| m[i][i] = d[i]);
            }
            Covariance::Full(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(DataError::Parameter(format!("covariance must be {dim}x{dim}")));
                }
                m = rows.clone();
            }
        }
        Ok(m)
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ`; rejects matrices that are
    /// asymmetric or not positive semi-definite.
    pub fn cholesky(&self, dim: usize) -> Result<Vec<Vec<f64>>, DataError> {
        let a = self.matrix(dim)?;
        let scale = (0..dim).map(|i| a[i][i].abs()).fold(1.0, f64::max);
        let tol = 1e-10 * scale;
        for i in 0..dim {
            for j in 0..i {
                if (a[i][j] - a[j][i]).abs() > tol {
                    return Err(DataError::Parameter("covariance is not symmetric".into()));
                }
            }
        }
        let mut l = vec![vec![0.0; dim]; dim];
        for j in 0..dim {
            let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
            if !d.is_finite() || d < -tol {
                return Err(DataError::Parameter("covariance is not positive semi-definite".into()));
            }
            l[j][j] = d.max(0.0).sqrt();
            for i in j + 1..dim {
                let r = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if l[j][j] > tol.sqrt() {
                    l[i][j] = r / l[j][j];
                } else if r.abs() > tol.sqrt() {
                    return Err(DataError::Parameter("covariance is not positive semi-definite".into()));
                }
            }
        }
        Ok(l)
    }
}

/// Requested distance between the means of two classes whose supports should overlap.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPairOverlap {
    pub a: usize,
    pub b: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSpec {
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Covariance>,
    /// Applied in order: each pair keeps its midpoint and is moved to `distance` apart.
    pub entangled: Vec<ClassPairOverlap>,
}

impl GaussianSpec {
    /// Classes grouped into pairs `(0,1), (2,3), ...`. Pair `p` is centred at
    /// `separation · e_p`; its two members sit `pair_distance` apart along
    /// `e_{dim/2 + p}`. Unit isotropic covariance.
    pub fn benchmark(num_classes: usize, dim: usize, separation: f64, pair_distance: f64) -> Result<Self, DataError> {
        let pairs = num_classes.div_ceil(2);
        if num_classes < 2 || dim < 2 * pairs {
            return Err(DataError::Parameter(format!(
                "benchmark needs >= 2 classes and dim >= {} (got c={num_classes}, dim={dim})",
                2 * pairs
            )));
        }
        let half = dim / 2;
        let mut means = Vec::with_capacity(num_classes);
        let mut entangled = Vec::new();
        for k in 0..num_classes {
            let p = k / 2;
            let mut m = vec![0.0; dim];
            m[p] = separation;
            if k % 2 == 0 && k + 1 < num_classes {
                entangled.push(ClassPairOverlap { a: k, b: k + 1, distance: pair_distance });
            }
            if k + 1 < num_classes || k % 2 == 1 {
                m[half + p] = if k % 2 == 0 { pair_distance / 2.0 } else { -pair_distance / 2.0 };
            }
            means.push(m);
        }
        Ok(Self { covariances: vec![Covariance::Isotropic(1.0); num_classes], means, entangled })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Means after the pair-overlap constraints are applied.
    pub fn resolved_means(&self) -> Result<Vec<Vec<f64>>, DataError> {
        let c = self.num_classes();
        let mut means = self.means.clone();
        for pair in &self.entangled {
            if pair.a >= c || pair.b >= c || pair.a == pair.b {
                return Err(DataError::Parameter(format!("invalid entangled pair ({}, {})", pair.a, pair.b)));
            }
            if !(pair.distance >= 0.0) {
                return Err(DataError::Parameter("pair distance must be >= 0".into()));
            }
            let (ma, mb) = (&means[pair.a], &means[pair.b]);
            let mid: Vec<f64> = ma.iter().zip(mb).map(|(x, y)| 0.5 * (x + y)).collect();
            let diff: Vec<f64> = mb.iter().zip(ma).map(|(x, y)| x - y).collect();
            let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dir: Vec<f64> = if norm > 0.0 {
                diff.iter().map(|v| v / norm).collect()
            } else {
                let mut e = vec![0.0; diff.len()];
                e[0] = 1.0;
                e
            };
            let half = pair.distance / 2.0;
            means[pair.a] = mid.iter().zip(&dir).map(|(m, d)| m - half * d).collect();
            means[pair.b] = mid.iter().zip(&dir).map(|(m, d)| m + half * d).collect();
        }
        Ok(means)
    }
}

/// Draws `n` clean samples: sample `i` has label `i mod c` (balanced within
/// one) and its own ChaCha stream. Candidate sets are the singleton `{y}`.
pub fn gen_entangled_gaussians(spec: &GaussianSpec, n: usize, seed: u64) -> Result<PLLDataset, DataError> {
    let c = spec.num_classes();
    let dim = spec.dim();
    if c < 2 {
        return Err(DataError::Parameter("at least two classes are required".into()));
    }
    if n < c {
        return Err(DataError::Parameter(format!("n={n} must be at least the number of classes {c}")));
    }
    if dim == 0 || spec.means.iter().any(|m| m.len() != dim) {
        return Err(DataError::Parameter("all means must share a positive dimension".into()));
    }
    if spec.covariances.len() != c {
        return Err(DataError::Parameter(format!("{} covariances for {c} classes", spec.covariances.len())));
    }
    let means = spec.resolved_means()?;
    let factors = spec
        .covariances
        .iter()
        .map(|cov| cov.cholesky(dim))
        .collect::<Result<Vec<_>, _>>()?;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % c;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let z: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let l = &factors[y];
        let x: Vec<f64> = (0..dim)
            .map(|r| means[y][r] + (0..=r).map(|k| l[r][k] * z[k]).sum::<f64>())
            .collect();
        samples.push(PartialSample {
            features: Tensor::from_vec(x)?,
            candidates: LabelSet::singleton(c, y),
            true_label: Some(y),
        });
    }
    let mut dataset = PLLDataset::new(samples, c, FeatureDims::Flat(dim))?;
    dataset.provenance.insert("generator".into(), "gaussian".into());
    dataset.provenance.insert("seed".into(), seed.to_string());
    Ok(dataset)
}
