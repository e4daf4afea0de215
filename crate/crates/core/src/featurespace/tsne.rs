//! Exact t-SNE: perplexity-calibrated Gaussian input affinities, Student-t
//! output affinities and full O(N²) gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Relative tolerance of the bandwidth search on each row's perplexity.
pub const PERPLEXITY_TOL: f64 = 1e-5;
const MAX_SEARCH_STEPS: usize = 2000;
const MIN_GAIN: f64 = 0.01;

pub fn squared_distances(x: &FeatureMatrix) -> Vec<f64> {
    let n = x.n_rows();
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = x.row(i);
        for (j, slot) in row.iter_mut().enumerate() {
            if j != i {
                *slot = xi.iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            }
        }
    });
    out
}

/// Symmetric joint probabilities over all ordered pairs, plus the
/// perplexity realised by each row's conditional distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinities {
    n: usize,
    p: Vec<f64>,
    pub realized_perplexity: Vec<f64>,
}

impl Affinities {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }
}

/// Conditional distribution of one row with its realised perplexity.
/// `dist` holds squared distances to every point, `own` is skipped.
fn calibrate_row(dist: &[f64], own: usize, perplexity: f64) -> Option<(Vec<f64>, f64)> {
    let d_min = dist.iter().enumerate().filter(|&(j, _)| j != own).map(|(_, &d)| d).fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = dist.iter().map(|&d| d - d_min).collect();
    let spread: f64 =
        shifted.iter().enumerate().filter(|&(j, _)| j != own).map(|(_, &d)| d).sum::<f64>() / (dist.len() - 1) as f64;
    if !spread.is_finite() || !d_min.is_finite() {
        return None;
    }
    if spread == 0.0 {
        if d_min == 0.0 {
            return None;
        }
        // Equidistant row: every bandwidth gives the uniform distribution.
        let uniform = 1.0 / (dist.len() - 1) as f64;
        let probs = (0..dist.len()).map(|j| if j == own { 0.0 } else { uniform }).collect();
        return Some((probs, (dist.len() - 1) as f64));
    }
    let target = perplexity.ln();
    let mut beta = 1.0 / spread;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut weights = vec![0.0; dist.len()];
    for _ in 0..MAX_SEARCH_STEPS {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (j, w) in weights.iter_mut().enumerate() {
            if j == own {
                *w = 0.0;
                continue;
            }
            *w = (-beta * shifted[j]).exp();
            sum += *w;
            weighted += *w * shifted[j];
        }
        let entropy = sum.ln() + beta * weighted / sum;
        let realized = entropy.exp();
        if (realized - perplexity).abs() <= PERPLEXITY_TOL * perplexity {
            weights.iter_mut().for_each(|w| *w /= sum);
            return Some((weights, realized));
        }
        if entropy > target {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (lo + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (lo + hi);
        }
        if hi.is_finite() && hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    None
}

/// Per-row bandwidths by bisection to the target perplexity, then
/// `P = (P_{j|i} + P_{i|j}) / 2N`.
pub fn input_affinities(x: &FeatureMatrix, perplexity: f64) -> Result<Affinities> {
    let n = x.n_rows();
    if n < 4 {
        return Err(Error::Invalid(format!("t-SNE needs at least 4 points, got {n}")));
    }
    if !(perplexity > 1.0 && perplexity < (n - 1) as f64) {
        return Err(Error::Invalid(format!("perplexity {perplexity} outside (1, {})", n - 1)));
    }
    let dist = squared_distances(x);
    let rows: Vec<Option<(Vec<f64>, f64)>> =
        dist.par_chunks(n).enumerate().map(|(i, row)| calibrate_row(row, i, perplexity)).collect();
    let mut conditional = vec![0.0; n * n];
    let mut realized_perplexity = Vec::with_capacity(n);
    for (i, row) in rows.into_iter().enumerate() {
        let (probs, realized) = row.ok_or(Error::DegenerateRow(i))?;
        conditional[i * n..(i + 1) * n].copy_from_slice(&probs);
        realized_perplexity.push(realized);
    }
    let scale = 1.0 / (2.0 * n as f64);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) * scale;
            }
        }
    }
    Ok(Affinities { n, p, realized_perplexity })
}

/// Student-t output affinities `Q_ij = (1 + |y_i - y_j|²)⁻¹ / Z` for 2-D points.
pub fn output_affinities(y: &[[f64; 2]]) -> Vec<f64> {
    let n = y.len();
    let mut q = vec![0.0; n * n];
    q.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            if j != i {
                *slot = student_t(y[i], y[j]);
            }
        }
    });
    let z: f64 = q.chunks(n).map(|row| row.iter().sum::<f64>()).sum();
    q.iter_mut().for_each(|v| *v /= z);
    q
}

fn student_t(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    1.0 / (1.0 + dx * dx + dy * dy)
}

/// `Σ P log(P / Q)` with `0 log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    p.iter().zip(q).filter(|(&pv, _)| pv > 0.0).map(|(&pv, &qv)| pv * (pv / qv).ln()).sum()
}

/// `4 Σ_j (e·p_ij − q_ij)(1 + |y_i − y_j|²)⁻¹ (y_i − y_j)` for exaggeration
/// `e`. At `e = 1` this is the gradient of `KL(P ‖ Q)`; in general it is the
/// gradient of `e·Σ p_ij log(1 + |y_i − y_j|²) + log Z`.
pub fn kl_gradient(p: &Affinities, y: &[[f64; 2]], exaggeration: f64) -> Vec<[f64; 2]> {
    let n = y.len();
    assert_eq!(n, p.n);
    // Per row: attractive sum, repulsive sum with kernel squared, kernel sum.
    let parts: Vec<([f64; 2], [f64; 2], f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y[i];
            let prow = &p.p[i * n..(i + 1) * n];
            let mut attr = [0.0; 2];
            let mut rep = [0.0; 2];
            let mut z = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let dx = yi[0] - y[j][0];
                let dy = yi[1] - y[j][1];
                let k = 1.0 / (1.0 + dx * dx + dy * dy);
                z += k;
                let a = exaggeration * prow[j] * k;
                attr[0] += a * dx;
                attr[1] += a * dy;
                let r = k * k;
                rep[0] += r * dx;
                rep[1] += r * dy;
            }
            (attr, rep, z)
        })
        .collect();
    let z: f64 = parts.iter().map(|part| part.2).sum();
    parts.iter().map(|(attr, rep, _)| [4.0 * (attr[0] - rep[0] / z), 4.0 * (attr[1] - rep[1] / z)]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub early_exaggeration_factor: f64,
    pub early_exaggeration_steps: usize,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_step: usize,
    /// Standard deviation of the Gaussian initialisation.
    pub init_std: f64,
    /// Per-coordinate adaptive gains (+0.2 on sign flip, ×0.8 otherwise).
    pub adaptive_gains: bool,
    pub kl_every: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 20.0,
            steps: 5000,
            learning_rate: 200.0,
            seed: 0,
            early_exaggeration_factor: 12.0,
            early_exaggeration_steps: 250,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_step: 250,
            init_std: 1e-4,
            adaptive_gains: true,
            kl_every: 50,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if !(self.perplexity > 1.0 && self.perplexity < n.saturating_sub(1) as f64) {
            return bad(format!("perplexity {} outside (1, {}) for {n} points", self.perplexity, n.saturating_sub(1)));
        }
        if self.steps < self.early_exaggeration_steps {
            return bad(format!(
                "steps ({}) shorter than early exaggeration ({})",
                self.steps, self.early_exaggeration_steps
            ));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate <= 0.0
            || self.init_std.is_nan()
            || self.init_std <= 0.0
            || self.kl_every == 0
        {
            return bad("learning rate, init std and kl interval must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlSample {
    pub step: usize,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub points: Vec<[f64; 2]>,
    /// KL(P‖Q) before the first step and after every `kl_every` steps
    /// (and after the last step).
    pub kl_history: Vec<KlSample>,
}

impl Embedding {
    pub fn final_kl(&self) -> f64 {
        self.kl_history.last().map_or(f64::NAN, |s| s.kl)
    }
}

fn recenter(y: &mut [[f64; 2]]) {
    let n = y.len() as f64;
    let mean = y.iter().fold([0.0; 2], |acc, p| [acc[0] + p[0], acc[1] + p[1]]).map(|v| v / n);
    for p in y.iter_mut() {
        p[0] -= mean[0];
        p[1] -= mean[1];
    }
}

/// Gaussian initialisation drawn from the seeded stream, x then y per point.
pub fn initial_points(n: usize, std: f64, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| [std * rng.gaussian(), std * rng.gaussian()]).collect()
}

pub fn tsne(x: &FeatureMatrix, config: &TsneConfig) -> Result<Embedding> {
    config.validate(x.n_rows())?;
    let p = input_affinities(x, config.perplexity)?;
    tsne_from_affinities(&p, config)
}

/// Gradient descent with momentum, optional adaptive gains and early
/// exaggeration. Points are re-centred on the origin after every step.
pub fn tsne_from_affinities(p: &Affinities, config: &TsneConfig) -> Result<Embedding> {
    let n = p.n();
    config.validate(n)?;
    let mut y = initial_points(n, config.init_std, config.seed);
    recenter(&mut y);
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl_history = vec![KlSample { step: 0, kl: kl_divergence(&p.p, &output_affinities(&y)) }];

    for step in 0..config.steps {
        let exaggeration = if step < config.early_exaggeration_steps { config.early_exaggeration_factor } else { 1.0 };
        let momentum = if step < config.momentum_switch_step { config.momentum_initial } else { config.momentum_final };
        let grad = kl_gradient(p, &y, exaggeration);
        for i in 0..n {
            for d in 0..2 {
                let g = grad[i][d];
                if config.adaptive_gains {
                    let gain = &mut gains[i][d];
                    *gain = if (g > 0.0) != (update[i][d] > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
                    *gain = gain.max(MIN_GAIN);
                }
                update[i][d] = momentum * update[i][d] - config.learning_rate * gains[i][d] * g;
                y[i][d] += update[i][d];
            }
        }
        recenter(&mut y);
        if y.iter().any(|pt| !pt[0].is_finite() || !pt[1].is_finite()) {
            return Err(Error::NonFinite { step: step + 1 });
        }
        let done = step + 1;
        if done % config.kl_every == 0 || done == config.steps {
            kl_history.push(KlSample { step: done, kl: kl_divergence(&p.p, &output_affinities(&y)) });
        }
    }
    Ok(Embedding { points: y, kl_history })
}
