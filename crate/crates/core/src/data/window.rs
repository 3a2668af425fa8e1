use serde::{Deserialize, Serialize};

use super::frame::{RainFrame, Sample, Sequence};
use crate::Result;

/// Minimum cumulative rain rate (mm/h, summed over every cell of every frame)
/// for a sample to count as a precipitation case.
pub const DEFAULT_RAIN_THRESHOLD: f64 = 10_000.0;

/// True iff the domain-and-time total rain rate is at least `threshold`.
pub fn passes_rain_filter(frames: &[RainFrame], threshold: f64) -> Result<bool> {
    let mut total = 0.0;
    for f in frames {
        total += f.rates()?.iter().sum::<f64>();
    }
    Ok(total >= threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub n_inputs: usize,
    pub n_targets: usize,
    pub stride: usize,
}

impl WindowSpec {
    pub fn len(&self) -> usize {
        self.n_inputs + self.n_targets
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Start indices of every window before filtering:
    /// `floor((len - n_i - n_p) / stride) + 1` of them.
    pub fn starts(&self, sequence_len: usize) -> Vec<usize> {
        if sequence_len < self.len() || self.stride == 0 {
            return Vec::new();
        }
        (0..=sequence_len - self.len()).step_by(self.stride).collect()
    }

    pub fn sample_at(&self, frames: &[RainFrame], start: usize) -> Result<Sample> {
        let w = &frames[start..start + self.len()];
        Sample::new(
            w[..self.n_inputs].to_vec(),
            w[self.n_inputs..].to_vec(),
        )
    }
}

/// Start indices of windows whose frames pass the rain filter.
pub fn filtered_starts(sequence: &Sequence, spec: &WindowSpec, threshold: f64) -> Result<Vec<usize>> {
    let mut kept = Vec::new();
    for s in spec.starts(sequence.len()) {
        if passes_rain_filter(&sequence.frames[s..s + spec.len()], threshold)? {
            kept.push(s);
        }
    }
    Ok(kept)
}

/// Sliding windows of `n_i + n_p` frames at `stride`, keeping those that pass
/// the rain filter. A sequence shorter than one window yields no samples.
pub fn window_dataset(
    sequence: &Sequence,
    spec: &WindowSpec,
    threshold: f64,
) -> Result<Vec<Sample>> {
    filtered_starts(sequence, spec, threshold)?
        .into_iter()
        .map(|s| spec.sample_at(&sequence.frames, s))
        .collect()
}
