//! Adaptive random-walk Metropolis.
//!
//! Warmup tunes the proposal in stages: a short scale-only phase, then
//! windows of doubling length at the end of which the proposal shape is
//! re-estimated from the window's draws, then a closing scale-only phase.
//! Throughout warmup the global step size follows a Robbins-Monro recursion
//! toward the target acceptance rate. After warmup the proposal is frozen,
//! so the retained draws form an ordinary Metropolis chain.

use rand::Rng;
use rand_distr::StandardNormal;

/// Unnormalized log density. Non-finite values are treated as zero density.
pub trait LogDensity {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &[f64]) -> f64;
}

/// Shape of the proposal covariance learned during warmup.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalShape {
    /// Per-coordinate scales only.
    Diagonal,
    /// Full covariance (Cholesky factor of the windowed sample covariance).
    #[default]
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerSettings {
    pub draws: usize,
    pub warmup: usize,
    pub target_accept: f64,
    pub shape: ProposalShape,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainRun {
    /// Post-warmup draws, row-major with `dim` values per draw.
    pub draws: Vec<f64>,
    pub acceptance_rate: f64,
    /// Final proposal step multiplier.
    pub step_scale: f64,
}

/// Lower-triangular proposal factor.
struct Proposal {
    dim: usize,
    chol: Vec<f64>,
}

impl Proposal {
    fn identity(dim: usize, sd: f64) -> Self {
        let mut chol = vec![0.0; dim * dim];
        for i in 0..dim {
            chol[i * dim + i] = sd;
        }
        Self { dim, chol }
    }

    /// Regularized covariance of `samples` (row-major), shrunk toward a
    /// small multiple of the identity as in common warmup schemes.
    fn from_samples(samples: &[f64], dim: usize, shape: ProposalShape) -> Option<Self> {
        let n = samples.len() / dim;
        if n < 2 * dim + 2 {
            return None;
        }
        let mut mean = vec![0.0; dim];
        for row in samples.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![0.0; dim * dim];
        for row in samples.chunks_exact(dim) {
            for a in 0..dim {
                for b in 0..=a {
                    cov[a * dim + b] += (row[a] - mean[a]) * (row[b] - mean[b]);
                }
            }
        }
        let nf = n as f64;
        let shrink = nf / (nf + 5.0);
        for a in 0..dim {
            for b in 0..=a {
                let mut v = cov[a * dim + b] / (nf - 1.0) * shrink;
                if a == b {
                    v += 1e-3 * (5.0 / (nf + 5.0));
                } else if shape == ProposalShape::Diagonal {
                    v = 0.0;
                }
                cov[a * dim + b] = v;
                cov[b * dim + a] = v;
            }
        }
        cholesky(&cov, dim).map(|chol| Self { dim, chol })
    }

    fn propose<R: Rng + ?Sized>(&self, x: &[f64], scale: f64, rng: &mut R, out: &mut [f64]) {
        let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        for i in 0..self.dim {
            let mut s = 0.0;
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                s += self.chol[i * self.dim + j] * zj;
            }
            out[i] = x[i] + scale * s;
        }
    }
}

/// Cholesky factor of a symmetric positive-definite row-major matrix.
pub(crate) fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// Warmup iterations at which the proposal shape is re-estimated.
fn adaptation_windows(warmup: usize) -> Vec<(usize, usize)> {
    let initial = (warmup as f64 * 0.15).round() as usize;
    let terminal = (warmup as f64 * 0.1).round() as usize;
    if warmup < 20 || initial + terminal >= warmup {
        return Vec::new();
    }
    let end = warmup - terminal;
    let mut windows = Vec::new();
    let mut start = initial;
    let mut len = ((end - start) / 15).max(10);
    while start < end {
        let mut stop = start + len;
        // absorb a short remainder into the last window
        if stop + 2 * len > end {
            stop = end;
        }
        windows.push((start, stop));
        start = stop;
        len *= 2;
    }
    windows
}

/// Runs one chain from `init`. `init` must have finite log density.
pub fn run_chain<T, R>(target: &T, init: &[f64], settings: &SamplerSettings, rng: &mut R) -> ChainRun
where
    T: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    let dim = target.dim();
    assert_eq!(init.len(), dim);
    let base_scale = 2.38 / (dim as f64).sqrt();
    let mut proposal = Proposal::identity(dim, 0.1);
    let mut log_scale = base_scale.ln();
    let mut adapt_t = 0usize;

    let windows = adaptation_windows(settings.warmup);
    let mut window_idx = 0;
    let mut window_samples: Vec<f64> = Vec::new();

    let mut x = init.to_vec();
    let mut lp = target.log_density(&x);
    let mut candidate = vec![0.0; dim];
    let mut draws = Vec::with_capacity(settings.draws * dim);
    let mut accepted_after_warmup = 0usize;

    for iter in 0..settings.warmup + settings.draws {
        proposal.propose(&x, log_scale.exp(), rng, &mut candidate);
        let lp_new = target.log_density(&candidate);
        let log_alpha = if lp_new.is_finite() { (lp_new - lp).min(0.0) } else { f64::NEG_INFINITY };
        let u: f64 = rng.random();
        let accept = u.ln() < log_alpha;
        if accept {
            x.copy_from_slice(&candidate);
            lp = lp_new;
        }

        if iter < settings.warmup {
            adapt_t += 1;
            let gain = 1.0 / (adapt_t as f64 + 10.0).powf(0.6);
            log_scale += gain * (log_alpha.exp() - settings.target_accept);

            if let Some(&(start, stop)) = windows.get(window_idx) {
                if iter >= start {
                    window_samples.extend_from_slice(&x);
                }
                if iter + 1 == stop {
                    if let Some(p) = Proposal::from_samples(&window_samples, dim, settings.shape) {
                        proposal = p;
                        log_scale = base_scale.ln();
                        adapt_t = 0;
                    }
                    window_samples.clear();
                    window_idx += 1;
                }
            }
        } else {
            accepted_after_warmup += usize::from(accept);
            draws.extend_from_slice(&x);
        }
    }

    ChainRun {
        draws,
        acceptance_rate: if settings.draws == 0 {
            0.0
        } else {
            accepted_after_warmup as f64 / settings.draws as f64
        },
        step_scale: log_scale.exp(),
    }
}
