//! Episode-level statistics: returns, convergence detection, windowed summaries.

use super::{EpisodeRecord, HarnessError};
use serde::{Deserialize, Serialize};

/// Sum of per-step rewards of one episode.
pub fn episode_reward(step_rewards: &[f64]) -> Result<f64, HarnessError> {
    if step_rewards.is_empty() {
        return Err(HarnessError::InvalidInput("episode has no steps".into()));
    }
    Ok(step_rewards.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceRule {
    /// Width of the trailing moving average.
    pub window: usize,
    /// Fraction of the plateau the moving average must hold.
    pub fraction: f64,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        Self {
            window: 200,
            fraction: 0.9,
        }
    }
}

impl ConvergenceRule {
    /// Number of final episodes averaged into the plateau: `max(W, ceil(M / 10))`, capped at `M`.
    pub fn plateau_len(&self, total: usize) -> usize {
        self.window.max(total.div_ceil(10)).min(total)
    }

    pub fn plateau(&self, rewards: &[f64]) -> f64 {
        let k = self.plateau_len(rewards.len());
        rewards[rewards.len() - k..].iter().sum::<f64>() / k as f64
    }

    /// Moving-average level that counts as converged.
    pub fn threshold(&self, plateau: f64) -> f64 {
        if plateau > 0.0 {
            self.fraction * plateau
        } else {
            plateau - ((1.0 - self.fraction) * plateau.abs() + 1.0)
        }
    }
}

/// Trailing moving averages; element `i` averages episodes `i + 1 - width ..= i`
/// (0-based), defined from `i = width - 1` on.
pub fn moving_average(values: &[f64], width: usize) -> Result<Vec<f64>, HarnessError> {
    if width == 0 || width > values.len() {
        return Err(HarnessError::InvalidInput(format!(
            "window {width} does not fit a series of length {}",
            values.len()
        )));
    }
    Ok(values
        .windows(width)
        .map(|w| w.iter().sum::<f64>() / width as f64)
        .collect())
}

/// First episode (1-based) from which the trailing moving average stays at or
/// above the convergence threshold until the end, or `None` if the final
/// average is below it.
pub fn detect_convergence(rewards: &[f64], rule: &ConvergenceRule) -> Result<Option<usize>, HarnessError> {
    if rule.window == 0 || rewards.len() < rule.window {
        return Err(HarnessError::InvalidInput(format!(
            "need at least {} episodes to detect convergence, got {}",
            rule.window,
            rewards.len()
        )));
    }
    let threshold = rule.threshold(rule.plateau(rewards));
    let ma = moving_average(rewards, rule.window)?;
    // ma[j] belongs to episode j + window (1-based).
    match ma.iter().rposition(|m| *m < threshold) {
        None => Ok(Some(rule.window)),
        Some(j) if j + 1 == ma.len() => Ok(None),
        Some(j) => Ok(Some(j + 1 + rule.window)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StdevDenominator {
    /// Window count minus one.
    #[default]
    Window,
    /// Total episode count minus one, regardless of where the window starts.
    TotalEpisodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub window_len: usize,
    pub mean_reward: f64,
    /// `None` when the window holds a single episode.
    pub v_stdev: Option<f64>,
    pub mean_steps: f64,
}

/// Mean reward, standard deviation and mean steps over episodes `start..=M` (1-based).
pub fn summarize(
    records: &[EpisodeRecord],
    start: usize,
    denominator: StdevDenominator,
) -> Result<WindowStats, HarnessError> {
    if start == 0 || start > records.len() {
        return Err(HarnessError::InvalidInput(format!(
            "window start {start} outside 1..={}",
            records.len()
        )));
    }
    let window = &records[start - 1..];
    let n = window.len() as f64;
    let mean_reward = window.iter().map(|r| r.reward).sum::<f64>() / n;
    let mean_steps = window.iter().map(|r| r.steps as f64).sum::<f64>() / n;
    let v_stdev = if window.len() < 2 {
        None
    } else {
        let ss: f64 = window.iter().map(|r| (r.reward - mean_reward).powi(2)).sum();
        let denom = match denominator {
            StdevDenominator::Window => n - 1.0,
            StdevDenominator::TotalEpisodes => records.len() as f64 - 1.0,
        };
        Some((ss / denom).sqrt())
    };
    Ok(WindowStats {
        window_len: window.len(),
        mean_reward,
        v_stdev,
        mean_steps,
    })
}
