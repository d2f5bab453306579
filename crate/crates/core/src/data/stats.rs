use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::components::label_components;
use super::Dataset;
use crate::scr::scr;

/// SCR histogram bins of width 1 on `[0, 20)` plus one overflow bin.
pub const SCR_BIN_COUNT: usize = 21;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsReport {
    pub images: usize,
    /// Targets per image → number of images (0 for empty masks).
    pub count_hist: BTreeMap<usize, usize>,
    /// Target area in px² → number of targets.
    pub area_hist: BTreeMap<usize, usize>,
    /// `(area, fraction of targets with area ≤ it)`.
    pub cumulative_area: Vec<(usize, f64)>,
    pub scr_hist: Vec<usize>,
    /// Per-target SCR in component order.
    pub scr_values: Vec<f64>,
    /// Targets whose SCR is undefined (flat neighborhood or no ring).
    pub scr_failures: usize,
}

impl StatsReport {
    pub fn total_targets(&self) -> usize {
        self.area_hist.values().sum()
    }

    pub fn single_target_fraction(&self) -> f64 {
        if self.images == 0 {
            return 0.0;
        }
        *self.count_hist.get(&1).unwrap_or(&0) as f64 / self.images as f64
    }

    /// Fraction of targets with area strictly below `limit`.
    pub fn area_fraction_below(&self, limit: usize) -> f64 {
        let total = self.total_targets();
        if total == 0 {
            return 0.0;
        }
        self.area_hist.range(..limit).map(|(_, c)| c).sum::<usize>() as f64 / total as f64
    }

    /// Fraction of measured SCR values strictly below `limit`.
    pub fn scr_fraction_below(&self, limit: f64) -> f64 {
        if self.scr_values.is_empty() {
            return 0.0;
        }
        self.scr_values.iter().filter(|&&v| v < limit).count() as f64 / self.scr_values.len() as f64
    }
}

pub fn scr_bin(v: f64) -> usize {
    (v.max(0.0).floor() as usize).min(SCR_BIN_COUNT - 1)
}

/// Component statistics with 8-connectivity; SCR is measured per component.
pub fn dataset_stats(dataset: &Dataset) -> StatsReport {
    let mut r = StatsReport { images: dataset.len(), scr_hist: vec![0; SCR_BIN_COUNT], ..Default::default() };
    for s in &dataset.items {
        let (_, comps) = label_components(&s.mask);
        *r.count_hist.entry(comps.len()).or_default() += 1;
        for c in &comps {
            *r.area_hist.entry(c.area()).or_default() += 1;
            match scr(&s.image, &c.to_mask(s.mask.shape())) {
                Ok(st) => {
                    r.scr_hist[scr_bin(st.scr)] += 1;
                    r.scr_values.push(st.scr);
                }
                Err(_) => r.scr_failures += 1,
            }
        }
    }
    let total = r.total_targets() as f64;
    let mut acc = 0usize;
    for (&area, &count) in &r.area_hist {
        acc += count;
        r.cumulative_area.push((area, acc as f64 / total));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sample, SceneParams};
    use crate::image::{BinaryMask, GrayImage};
    use ndarray::Array2;

    fn item(mask: BinaryMask) -> Sample {
        let (h, w) = mask.shape();
        let image = GrayImage::new(Array2::from_shape_fn((h, w), |(y, x)| if mask.get(y, x) { 0.9 } else { ((y + x) % 2) as f64 * 0.2 })).unwrap();
        Sample { stem: "t".into(), image, mask, meta: None }
    }

    #[test]
    fn single_five_pixel_target() {
        let mask = BinaryMask::from_fn((9, 9), |y, x| (y == 4 && (3..=5).contains(&x)) || (x == 4 && (y == 3 || y == 5)));
        let d = Dataset::new(vec![item(mask)], None).unwrap();
        let r = dataset_stats(&d);
        assert_eq!(r.count_hist, BTreeMap::from([(1, 1)]));
        assert_eq!(r.area_hist, BTreeMap::from([(5, 1)]));
        assert_eq!(r.cumulative_area, vec![(5, 1.0)]);
        assert_eq!(r.scr_hist.iter().sum::<usize>() + r.scr_failures, 1);
    }

    #[test]
    fn empty_mask_counts_in_zero_bin() {
        let d = Dataset::new(vec![item(BinaryMask::zeros((5, 5)))], None).unwrap();
        let r = dataset_stats(&d);
        assert_eq!(r.count_hist, BTreeMap::from([(0, 1)]));
        assert_eq!(r.total_targets(), 0);
        assert!(r.cumulative_area.is_empty());
    }

    #[test]
    fn generator_closure() {
        let d = crate::data::synth_dataset(&SceneParams::default(), 150, 77).unwrap();
        let r = dataset_stats(&d);
        let declared: usize = d.items.iter().map(|s| s.meta.as_ref().unwrap().targets.len()).sum();
        assert_eq!(r.total_targets(), declared);
        let declared_scr: Vec<f64> = d.items.iter().flat_map(|s| s.meta.as_ref().unwrap().targets.iter().map(|t| t.achieved_scr)).collect();
        let mut a = declared_scr.clone();
        let mut b = r.scr_values.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}
