//! Diagonal-covariance Gaussian mixture fitted by expectation-maximization.
//!
//! Features are standardized per column before fitting; the model keeps the
//! standardization so callers always pass raw feature vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    dim: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows<'a, I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut f = Self::new(dim);
        for r in rows {
            f.push(r)?;
        }
        Ok(f)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::Input(format!("feature row has {} values, expected {}", row.len(), self.dim)));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite feature value".into()));
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn fit(x: &Features) -> Self {
        let n = x.len() as f64;
        let d = x.dim();
        let mut mean = vec![0.0; d];
        for r in x.rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in x.rows() {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let scale = var.iter().map(|v| (v / n).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        Self { mean, scale }
    }

    #[inline]
    pub fn apply(&self, raw: &[f64], out: &mut [f64]) {
        for j in 0..raw.len() {
            out[j] = (raw[j] - self.mean[j]) / self.scale[j];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Stop when the mean per-sample log-likelihood improves by less.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub variance_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { tolerance: 1e-6, max_iterations: 500, variance_floor: 1e-6 }
    }
}

/// Fitted mixture. Means and variances live in standardized feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub standardization: Standardization,
    pub variance_floor: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood (standardized space) after each E-step since
    /// the last re-seed.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub reseeded: Vec<usize>,
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.standardization.mean.len()
    }

    /// Per-component log of weight times density, for a standardized row.
    #[inline]
    fn log_joint_std(&self, z: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate().take(self.k) {
            let mut acc = 0.0;
            for ((&zj, &m), &v) in z.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                let d = zj - m;
                acc += LN_2PI + v.ln() + d * d / v;
            }
            *o = self.weights[c].ln() - 0.5 * acc;
        }
    }

    /// Posterior responsibilities of a raw feature vector.
    pub fn responsibilities(&self, raw: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.dim()];
        self.standardization.apply(raw, &mut z);
        let mut lj = vec![0.0; self.k];
        self.log_joint_std(&z, &mut lj);
        let lse = log_sum_exp(&lj);
        lj.iter().map(|v| (v - lse).exp()).collect()
    }

    /// Most probable component, ties toward the lower id. Allocation-free
    /// for up to 16 features.
    pub fn predict(&self, raw: &[f64]) -> usize {
        let mut buf = [0.0f64; 16];
        let z = &mut buf[..raw.len()];
        self.standardization.apply(raw, z);
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for c in 0..self.k {
            let mut acc = 0.0;
            for ((&zj, &m), &v) in z.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                let d = zj - m;
                acc += LN_2PI + v.ln() + d * d / v;
            }
            let lv = self.weights[c].ln() - 0.5 * acc;
            if lv > best_v {
                best_v = lv;
                best = c;
            }
        }
        best
    }

    /// Total log-likelihood of raw features in standardized space.
    pub fn log_likelihood(&self, x: &Features) -> f64 {
        let mut z = vec![0.0; self.dim()];
        let mut lj = vec![0.0; self.k];
        x.rows()
            .map(|r| {
                self.standardization.apply(r, &mut z);
                self.log_joint_std(&z, &mut lj);
                log_sum_exp(&lj)
            })
            .sum()
    }

    /// One Gaussian per class from hard labels (a single M-step).
    pub fn from_labels(x: &Features, labels: &[usize], k: usize, variance_floor: f64) -> Result<Self> {
        if labels.len() != x.len() || x.is_empty() {
            return Err(Error::Input(format!("{} labels for {} feature rows", labels.len(), x.len())));
        }
        let standardization = Standardization::fit(x);
        let d = x.dim();
        let mut counts = vec![0usize; k];
        let mut means = vec![vec![0.0; d]; k];
        let mut z = vec![0.0; d];
        for (r, &l) in x.rows().zip(labels) {
            if l >= k {
                return Err(Error::Input(format!("label {l} outside 0..{k}")));
            }
            standardization.apply(r, &mut z);
            counts[l] += 1;
            for j in 0..d {
                means[l][j] += z[j];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                return Err(Error::Degenerate { component: c });
            }
            means[c].iter_mut().for_each(|m| *m /= counts[c] as f64);
        }
        let mut variances = vec![vec![0.0; d]; k];
        for (r, &l) in x.rows().zip(labels) {
            standardization.apply(r, &mut z);
            for j in 0..d {
                variances[l][j] += (z[j] - means[l][j]).powi(2);
            }
        }
        for c in 0..k {
            variances[c].iter_mut().for_each(|v| *v = (*v / counts[c] as f64).max(variance_floor));
        }
        let n = x.len() as f64;
        Ok(Self {
            k,
            weights: counts.iter().map(|&c| c as f64 / n).collect(),
            means,
            variances,
            standardization,
            variance_floor,
            seed: 0,
        })
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn kmeans_pp(z: &Features, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = z.len();
    let mut centers = vec![z.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = z.rows().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = z.row(pick).to_vec();
        for (i, r) in z.rows().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, &c));
        }
        centers.push(c);
    }
    centers
}

/// EM fit with k-means++ initialization seeded by `seed`.
pub fn fit_gmm(x: &Features, k: usize, seed: u64) -> Result<GmmFit> {
    fit_gmm_with(x, k, seed, FitOptions::default())
}

pub fn fit_gmm_with(x: &Features, k: usize, seed: u64, opts: FitOptions) -> Result<GmmFit> {
    let n = x.len();
    let d = x.dim();
    if k == 0 || n <= k {
        return Err(Error::Input(format!("need more samples ({n}) than components ({k}) and k >= 1")));
    }
    let standardization = Standardization::fit(x);
    let mut zdata = Vec::with_capacity(n * d);
    let mut zr = vec![0.0; d];
    for r in x.rows() {
        standardization.apply(r, &mut zr);
        zdata.extend_from_slice(&zr);
    }
    let z = Features { dim: d, data: zdata };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = kmeans_pp(&z, k, &mut rng);
    let mut model = GmmModel {
        k,
        weights: vec![1.0 / k as f64; k],
        means,
        variances: vec![vec![1.0; d]; k],
        standardization: standardization.clone(),
        variance_floor: opts.variance_floor,
        seed,
    };

    let mut resp = vec![0.0; n * k];
    let mut lj = vec![0.0; k];
    let mut trace = Vec::new();
    let mut reseeded = Vec::new();
    let mut iterations = 0;
    let mut prev_mean_ll = f64::NEG_INFINITY;

    while iterations < opts.max_iterations {
        iterations += 1;
        // E-step
        let mut ll = 0.0;
        for i in 0..n {
            model.log_joint_std(z.row(i), &mut lj);
            let lse = log_sum_exp(&lj);
            ll += lse;
            for c in 0..k {
                resp[i * k + c] = (lj[c] - lse).exp();
            }
        }
        trace.push(ll);
        let mean_ll = ll / n as f64;
        if (mean_ll - prev_mean_ll).abs() < opts.tolerance {
            break;
        }
        prev_mean_ll = mean_ll;

        // M-step
        let mut mass = vec![0.0; k];
        for i in 0..n {
            for c in 0..k {
                mass[c] += resp[i * k + c];
            }
        }
        if let Some(c) = mass.iter().position(|&m| m < 1e-12) {
            if reseeded.contains(&c) {
                return Err(Error::Degenerate { component: c });
            }
            reseeded.push(c);
            // Re-seed at the worst-explained sample.
            let mut worst = 0;
            let mut worst_ll = f64::INFINITY;
            for i in 0..n {
                model.log_joint_std(z.row(i), &mut lj);
                let v = log_sum_exp(&lj);
                if v < worst_ll {
                    worst_ll = v;
                    worst = i;
                }
            }
            model.means[c] = z.row(worst).to_vec();
            model.variances[c] = vec![1.0; d];
            model.weights = vec![1.0 / k as f64; k];
            trace.clear();
            prev_mean_ll = f64::NEG_INFINITY;
            continue;
        }
        for c in 0..k {
            model.weights[c] = mass[c] / n as f64;
            let mut mu = vec![0.0; d];
            for i in 0..n {
                let r = resp[i * k + c];
                for (m, v) in mu.iter_mut().zip(z.row(i)) {
                    *m += r * v;
                }
            }
            mu.iter_mut().for_each(|m| *m /= mass[c]);
            let mut var = vec![0.0; d];
            for i in 0..n {
                let r = resp[i * k + c];
                for j in 0..d {
                    var[j] += r * (z.row(i)[j] - mu[j]).powi(2);
                }
            }
            var.iter_mut().for_each(|v| *v = (*v / mass[c]).max(opts.variance_floor));
            model.means[c] = mu;
            model.variances[c] = var;
        }
    }
    Ok(GmmFit { model, log_likelihood: trace, iterations, reseeded })
}
