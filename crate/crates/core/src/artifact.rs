//! Pluggable artifact scoring for harvested components.
//!
//! The reference classifier used on real EEG is out of scope here; this
//! module defines the interface it plugs into and ships a documented
//! heuristic default that flags the classic artifact signatures visible from
//! a component's activity pattern, band and envelope statistics.

use crate::signal::Band;

/// Everything a scorer may inspect for one component.
#[derive(Debug, Clone)]
pub struct ArtifactInput<'a> {
    /// Activity pattern (unit norm).
    pub pattern: &'a [f64],
    /// Channel names aligned with the pattern.
    pub channel_names: &'a [String],
    /// Frequency band the component was trained on.
    pub band: Band,
    /// Excess kurtosis of the component's envelope time course, when known.
    pub envelope_kurtosis: Option<f64>,
}

/// Posterior-style artifact probability in [0, 1] for a component.
pub trait ArtifactScorer: Sync {
    fn score(&self, input: &ArtifactInput<'_>) -> f64;
}

/// Heuristic default scorer.
///
/// Flags a component as likely artifactual when
/// - its pattern energy concentrates on at most two channels (electrode or
///   cable artifacts),
/// - it lives at or above 45 Hz with strongly super-Gaussian envelope
///   (muscle-like bursts), or
/// - frontal-edge channels dominate below 5 Hz (ocular-like).
///
/// Clean components receive a small baseline probability well under the
/// default selection gate.
#[derive(Debug, Clone)]
pub struct HeuristicArtifactScorer {
    pub concentration_threshold: f64,
    pub muscle_band_hz: f64,
    pub muscle_kurtosis_threshold: f64,
    pub ocular_band_hz: f64,
    pub ocular_dominance_threshold: f64,
    pub baseline: f64,
    pub flagged: f64,
}

impl Default for HeuristicArtifactScorer {
    fn default() -> Self {
        Self {
            concentration_threshold: 0.9,
            muscle_band_hz: 45.0,
            muscle_kurtosis_threshold: 3.0,
            ocular_band_hz: 5.0,
            ocular_dominance_threshold: 0.6,
            baseline: 1e-6,
            flagged: 0.5,
        }
    }
}

fn is_frontal_edge(name: &str) -> bool {
    let upper = name.to_ascii_uppercase();
    upper.starts_with("FP") || upper.starts_with("AF") || upper.starts_with("F7")
        || upper.starts_with("F8") || upper.starts_with("FT")
}

impl ArtifactScorer for HeuristicArtifactScorer {
    fn score(&self, input: &ArtifactInput<'_>) -> f64 {
        let energy: Vec<f64> = input.pattern.iter().map(|v| v * v).collect();
        let total: f64 = energy.iter().sum();
        if total <= 0.0 {
            return 1.0;
        }

        let mut sorted = energy.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let top2: f64 = sorted.iter().take(2).sum();
        if energy.len() > 2 && top2 / total >= self.concentration_threshold {
            return self.flagged;
        }

        if input.band.f0 >= self.muscle_band_hz {
            if let Some(kurt) = input.envelope_kurtosis {
                if kurt > self.muscle_kurtosis_threshold {
                    return self.flagged;
                }
            }
        }

        if input.band.f0 < self.ocular_band_hz {
            let frontal: f64 = energy
                .iter()
                .zip(input.channel_names)
                .filter(|(_, name)| is_frontal_edge(name))
                .map(|(e, _)| e)
                .sum();
            if frontal / total >= self.ocular_dominance_threshold {
                return self.flagged;
            }
        }

        self.baseline
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("C{i:02}")).collect()
    }

    #[test]
    fn diffuse_pattern_scores_baseline() {
        let n = 16;
        let pattern = vec![1.0 / (n as f64).sqrt(); n];
        let scorer = HeuristicArtifactScorer::default();
        let p = scorer.score(&ArtifactInput {
            pattern: &pattern,
            channel_names: &names(n),
            band: Band::new(10.0, 4.0),
            envelope_kurtosis: Some(0.1),
        });
        assert!(p <= 1e-5, "p_art {p}");
    }

    #[test]
    fn single_channel_pattern_is_flagged() {
        let mut pattern = vec![0.0; 16];
        pattern[3] = 1.0;
        let scorer = HeuristicArtifactScorer::default();
        let p = scorer.score(&ArtifactInput {
            pattern: &pattern,
            channel_names: &names(16),
            band: Band::new(10.0, 4.0),
            envelope_kurtosis: None,
        });
        assert!(p > 1e-5, "p_art {p}");
    }

    #[test]
    fn bursty_high_band_is_flagged() {
        let n = 16;
        let pattern = vec![1.0 / (n as f64).sqrt(); n];
        let scorer = HeuristicArtifactScorer::default();
        let p = scorer.score(&ArtifactInput {
            pattern: &pattern,
            channel_names: &names(n),
            band: Band::new(60.0, 10.0),
            envelope_kurtosis: Some(8.0),
        });
        assert!(p > 1e-5);
    }

    #[test]
    fn frontal_low_band_is_flagged() {
        let mut channel_names = names(8);
        channel_names[0] = "Fp1".into();
        channel_names[1] = "Fp2".into();
        let mut pattern = vec![0.2; 8];
        pattern[0] = 0.8;
        pattern[1] = 0.8;
        let norm: f64 = pattern.iter().map(|v| v * v).sum::<f64>();
        let norm = norm.sqrt();
        for v in &mut pattern {
            *v /= norm;
        }
        let scorer = HeuristicArtifactScorer::default();
        let p = scorer.score(&ArtifactInput {
            pattern: &pattern,
            channel_names: &channel_names,
            band: Band::new(2.0, 1.5),
            envelope_kurtosis: None,
        });
        assert!(p > 1e-5);
    }
}
