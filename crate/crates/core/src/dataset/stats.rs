use serde::Serialize;

use super::{ConsolidatedFrame, Expression, AU_IDS, NUM_AUS, NUM_EXPRESSIONS};

/// Equal-width histogram over `[-1, 1]`. The last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bins: usize,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(bins: usize) -> Self {
        Self {
            bins,
            counts: vec![0; bins],
        }
    }

    pub fn bin_of(bins: usize, value: f64) -> usize {
        let b = ((value + 1.0) / 2.0 * bins as f64).floor() as isize;
        b.clamp(0, bins as isize - 1) as usize
    }

    fn add(&mut self, value: f64) {
        self.counts[Self::bin_of(self.bins, value)] += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub frames: u64,
    /// Frames carrying a consolidated AU family.
    pub au_labelled_frames: u64,
    /// Frames with at least one active AU.
    pub au_active_frames: u64,
    /// Per-AU active counts, in `AU_IDS` order.
    pub au_counts: [u64; NUM_AUS],
    pub expression_labelled_frames: u64,
    /// Per-expression counts, in `Expression::ALL` order.
    pub expression_counts: [u64; NUM_EXPRESSIONS],
    pub va_labelled_frames: u64,
    pub valence_histogram: Histogram,
    pub arousal_histogram: Histogram,
    /// Row-major `bins x bins` joint histogram, valence rows, arousal columns.
    pub va_joint_histogram: Vec<u64>,
}

impl DatasetStats {
    pub fn au_count(&self, au: u8) -> Option<u64> {
        AU_IDS.iter().position(|&a| a == au).map(|i| self.au_counts[i])
    }

    pub fn expression_count(&self, e: Expression) -> u64 {
        self.expression_counts[e.index()]
    }
}

pub fn dataset_stats(frames: &[ConsolidatedFrame], va_bins: usize) -> DatasetStats {
    let bins = va_bins.max(1);
    let mut s = DatasetStats {
        frames: 0,
        au_labelled_frames: 0,
        au_active_frames: 0,
        au_counts: [0; NUM_AUS],
        expression_labelled_frames: 0,
        expression_counts: [0; NUM_EXPRESSIONS],
        va_labelled_frames: 0,
        valence_histogram: Histogram::new(bins),
        arousal_histogram: Histogram::new(bins),
        va_joint_histogram: vec![0; bins * bins],
    };
    for f in frames {
        s.frames += 1;
        if let Some(aus) = f.aus {
            s.au_labelled_frames += 1;
            if aus.any() {
                s.au_active_frames += 1;
            }
            for (c, b) in s.au_counts.iter_mut().zip(aus.bits()) {
                *c += u64::from(b);
            }
        }
        if let Some(e) = f.expression {
            s.expression_labelled_frames += 1;
            s.expression_counts[e.index()] += 1;
        }
        if let Some(va) = f.va {
            s.va_labelled_frames += 1;
            s.valence_histogram.add(va.valence);
            s.arousal_histogram.add(va.arousal);
            let r = Histogram::bin_of(bins, va.valence);
            let c = Histogram::bin_of(bins, va.arousal);
            s.va_joint_histogram[r * bins + c] += 1;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_all_zero() {
        let s = dataset_stats(&[], 10);
        assert_eq!(s.frames, 0);
        assert_eq!(s.au_counts, [0; 8]);
        assert_eq!(s.expression_counts, [0; 7]);
        assert!(s.valence_histogram.counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn histogram_edges() {
        assert_eq!(Histogram::bin_of(4, -1.0), 0);
        assert_eq!(Histogram::bin_of(4, 1.0), 3);
        assert_eq!(Histogram::bin_of(4, 0.0), 2);
        assert_eq!(Histogram::bin_of(4, -0.0001), 1);
    }
}
