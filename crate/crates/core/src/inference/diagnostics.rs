use serde::Serialize;

use super::{InferenceError, PosteriorChains};
use crate::stats;

/// Central posterior interval mass reported in summaries.
pub const INTERVAL_MASS: f64 = 0.94;

/// Convergence gate applied to every parameter's r-hat.
pub const R_HAT_THRESHOLD: f64 = 1.05;

/// Split-chain potential scale reduction factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum RHat {
    Value(f64),
    /// Every split half has zero variance.
    Degenerate,
}

impl RHat {
    pub fn value(self) -> Option<f64> {
        match self {
            RHat::Value(v) => Some(v),
            RHat::Degenerate => None,
        }
    }

    pub fn converged(self) -> bool {
        matches!(self, RHat::Value(v) if v < R_HAT_THRESHOLD)
    }
}

/// Split-chain r-hat over one scalar quantity per chain.
///
/// Each chain is cut into two halves (the middle draw of an odd-length chain
/// is dropped) and the classic Gelman-Rubin ratio is computed over the
/// halves: `sqrt(((n−1)/n·W + B/n) / W)`.
pub fn split_r_hat(chains: &[Vec<f64>]) -> Result<RHat, InferenceError> {
    if chains.len() < 2 {
        return Err(InferenceError::TooFewChains(chains.len()));
    }
    let n_min = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n_min < 4 {
        return Err(InferenceError::TooFewDraws(n_min));
    }
    let half = n_min / 2;
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let c = &c[..n_min];
        halves.push(&c[..half]);
        halves.push(&c[n_min - half..]);
    }
    let n = half as f64;
    let means: Vec<f64> = halves.iter().map(|h| stats::mean(h)).collect();
    let within = halves.iter().map(|h| stats::sample_variance(h)).sum::<f64>() / halves.len() as f64;
    let between = n * stats::sample_variance(&means);
    if !(within > 0.0) {
        return Ok(RHat::Degenerate);
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    Ok(RHat::Value((var_plus / within).sqrt()))
}

/// r-hat of parameter `param` across all chains.
pub fn r_hat(chains: &PosteriorChains, param: usize) -> Result<RHat, InferenceError> {
    let columns: Vec<Vec<f64>> = chains.chains.iter().map(|c| c.column(param)).collect();
    split_r_hat(&columns)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamRow {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub low: f64,
    pub high: f64,
    pub r_hat: RHat,
}

/// Pooled posterior summary, one row per parameter. When the first
/// parameter is `log_lambda0`, an extra `lambda0` row summarizes the
/// exponentiated draws.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamSummary {
    pub rows: Vec<ParamRow>,
}

impl ParamSummary {
    pub fn row(&self, name: &str) -> Option<&ParamRow> {
        self.rows.iter().find(|r| r.parameter == name)
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.r_hat.converged())
    }

    pub const CSV_HEADER: [&'static str; 6] = ["parameter", "mean", "sd", "hdi_low", "hdi_high", "r_hat"];

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.parameter.clone(),
                r.mean.to_string(),
                r.sd.to_string(),
                r.low.to_string(),
                r.high.to_string(),
                r.r_hat.value().map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn summarize_columns(name: &str, columns: Vec<Vec<f64>>) -> ParamRow {
    let pooled: Vec<f64> = columns.iter().flatten().copied().collect();
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - INTERVAL_MASS) / 2.0;
    let r_hat = split_r_hat(&columns).unwrap_or(RHat::Degenerate);
    ParamRow {
        parameter: name.to_owned(),
        mean: stats::mean(&pooled),
        sd: stats::sample_sd(&pooled),
        low: stats::quantile_sorted(&sorted, tail),
        high: stats::quantile_sorted(&sorted, 1.0 - tail),
        r_hat,
    }
}

/// Mean, sd, central 94% interval and r-hat for every parameter.
pub fn summarize(chains: &PosteriorChains) -> ParamSummary {
    let mut rows = Vec::new();
    for (k, name) in chains.names.iter().enumerate() {
        let columns: Vec<Vec<f64>> = chains.chains.iter().map(|c| c.column(k)).collect();
        if name == "log_lambda0" {
            let exp_cols = columns
                .iter()
                .map(|c| c.iter().map(|v| v.exp()).collect())
                .collect();
            rows.push(summarize_columns(name, columns));
            rows.push(summarize_columns("lambda0", exp_cols));
        } else {
            rows.push(summarize_columns(name, columns));
        }
    }
    ParamSummary { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_chain(seed: u64, n: usize, mean: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| mean + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect()
    }

    /// Direct transcription of the split-chain formula, kept separate from
    /// the implementation above.
    fn reference_r_hat(chains: &[Vec<f64>]) -> f64 {
        let mut parts = Vec::new();
        for c in chains {
            let h = c.len() / 2;
            parts.push(c[..h].to_vec());
            parts.push(c[c.len() - h..].to_vec());
        }
        let m = parts.len() as f64;
        let n = parts[0].len() as f64;
        let means: Vec<f64> = parts.iter().map(|p| p.iter().sum::<f64>() / n).collect();
        let grand = means.iter().sum::<f64>() / m;
        let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
        let w = parts
            .iter()
            .zip(&means)
            .map(|(p, mu)| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
            .sum::<f64>()
            / m;
        (((n - 1.0) / n * w + b / n) / w).sqrt()
    }

    #[test]
    fn iid_chains_are_close_to_one() {
        let chains: Vec<Vec<f64>> = (0..4).map(|s| normal_chain(s, 1000, 0.0)).collect();
        let r = split_r_hat(&chains).unwrap().value().unwrap();
        assert!((0.99..=1.02).contains(&r), "{r}");
        assert!((r - reference_r_hat(&chains)).abs() < 1e-12);
    }

    #[test]
    fn separated_chains_are_flagged() {
        let chains = vec![normal_chain(1, 1000, 0.0), normal_chain(2, 1000, 10.0)];
        let r = split_r_hat(&chains).unwrap().value().unwrap();
        assert!(r > 3.0, "{r}");
        assert!((r - reference_r_hat(&chains)).abs() < 1e-12);
    }

    #[test]
    fn constant_chains_are_degenerate() {
        let chains = vec![vec![2.5; 50], vec![2.5; 50]];
        assert_eq!(split_r_hat(&chains).unwrap(), RHat::Degenerate);
    }

    #[test]
    fn preconditions() {
        assert!(matches!(split_r_hat(&[vec![1.0; 10]]), Err(InferenceError::TooFewChains(1))));
        assert!(matches!(
            split_r_hat(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]),
            Err(InferenceError::TooFewDraws(3))
        ));
    }

    #[test]
    fn odd_lengths_drop_the_middle_draw() {
        let a: Vec<f64> = (0..9).map(|i| (i * i % 7) as f64).collect();
        let b: Vec<f64> = (0..9).map(|i| (i * 3 % 5) as f64).collect();
        let r = split_r_hat(&[a.clone(), b.clone()]).unwrap().value().unwrap();
        assert!((r - reference_r_hat(&[a, b])).abs() < 1e-12);
    }
}
