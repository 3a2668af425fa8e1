use serde::{Deserialize, Serialize};

use super::frame::{RainFrame, NUM_CLASSES};
use crate::{Error, Result};

/// Rain-rate class edges and the rate each class dequantizes to.
///
/// Class `k` covers `[boundaries[k-1], boundaries[k])`, left-closed, with
/// class 0 below `boundaries[0]` and the top class unbounded above.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTable {
    pub boundaries: Vec<f64>,
    pub representatives: Vec<f64>,
}

pub const DEFAULT_BOUNDARIES: [f64; NUM_CLASSES - 1] = [
    0.1, 0.3, 0.6, 1.0, 2.0, 4.0, 6.0, 10.0, 15.0, 25.0, 40.0, 60.0, 100.0,
];

impl Default for ClassTable {
    fn default() -> Self {
        let b = DEFAULT_BOUNDARIES;
        let mut representatives = vec![0.0];
        representatives.extend(b.windows(2).map(|w| (w[0] * w[1]).sqrt()));
        representatives.push(150.0);
        Self {
            boundaries: b.to_vec(),
            representatives,
        }
    }
}

impl ClassTable {
    pub fn new(boundaries: Vec<f64>, representatives: Vec<f64>) -> Result<Self> {
        let t = Self {
            boundaries,
            representatives,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.boundaries;
        if b.len() != NUM_CLASSES - 1 || self.representatives.len() != NUM_CLASSES {
            return Err(Error::Config(format!(
                "class table needs {} boundaries and {NUM_CLASSES} representatives",
                NUM_CLASSES - 1
            )));
        }
        if !(b[0] > 0.0) || b.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("class boundaries must be positive and strictly increasing".into()));
        }
        for (k, &r) in self.representatives.iter().enumerate() {
            let lo = if k == 0 { 0.0 } else { b[k - 1] };
            let hi = b.get(k).copied().unwrap_or(f64::INFINITY);
            if !(r >= lo && r < hi) {
                return Err(Error::Config(format!(
                    "representative {r} of class {k} is outside [{lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    pub fn class_of(&self, rate: f64) -> u8 {
        self.boundaries.partition_point(|&b| b <= rate) as u8
    }

    pub fn quantize(&self, frame: &RainFrame) -> Result<RainFrame> {
        let classes = frame.rates()?.iter().map(|&r| self.class_of(r)).collect();
        Ok(RainFrame::from_classes(frame.height(), frame.width(), classes)?.with_meta_of(frame))
    }

    pub fn dequantize(&self, frame: &RainFrame) -> Result<RainFrame> {
        let rates = frame
            .classes()?
            .iter()
            .map(|&c| {
                self.representatives
                    .get(c as usize)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("class index {c} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RainFrame::from_rates(frame.height(), frame.width(), rates)?.with_meta_of(frame))
    }
}

const TOP_CLASS: f64 = (NUM_CLASSES - 1) as f64;

/// Class `k` to `k / 13`.
pub fn normalize(frame: &RainFrame) -> Result<RainFrame> {
    let v = frame.classes()?.iter().map(|&c| c as f64 / TOP_CLASS).collect();
    Ok(RainFrame::from_normalized(frame.height(), frame.width(), v)?.with_meta_of(frame))
}

/// Inverse of [`normalize`], rounding to the nearest class.
pub fn denormalize(frame: &RainFrame) -> Result<RainFrame> {
    let c = frame
        .normalized()?
        .iter()
        .map(|&v| (v * TOP_CLASS).round().clamp(0.0, TOP_CLASS) as u8)
        .collect();
    Ok(RainFrame::from_classes(frame.height(), frame.width(), c)?.with_meta_of(frame))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ClassTable {
        ClassTable::default()
    }

    #[test]
    fn default_table_is_valid() {
        let t = table();
        t.validate().unwrap();
        assert_eq!(t.representatives[0], 0.0);
        assert_eq!(t.representatives[13], 150.0);
    }

    #[test]
    fn boundary_belongs_to_upper_class() {
        let t = table();
        assert_eq!(t.class_of(0.0), 0);
        assert_eq!(t.class_of(0.099), 0);
        assert_eq!(t.class_of(t.boundaries[3]), 4);
        assert_eq!(t.class_of(1e6), 13);
    }

    #[test]
    fn zero_frame_quantizes_to_class_zero() {
        let f = RainFrame::zeros(3, 4).unwrap();
        let q = table().quantize(&f).unwrap();
        assert!(q.classes().unwrap().iter().all(|&c| c == 0));
    }

    #[test]
    fn dequantize_then_quantize_is_identity_on_every_class() {
        let t = table();
        let all: Vec<u8> = (0..NUM_CLASSES as u8).collect();
        let f = RainFrame::from_classes(2, 7, all.clone()).unwrap();
        let back = t.quantize(&t.dequantize(&f).unwrap()).unwrap();
        assert_eq!(back.classes().unwrap(), &all[..]);
        for k in 0..NUM_CLASSES as u8 {
            let u = RainFrame::from_classes(2, 2, vec![k; 4]).unwrap();
            let r = t.dequantize(&u).unwrap();
            assert!(r.rates().unwrap().iter().all(|&v| v == t.representatives[k as usize]));
        }
    }

    #[test]
    fn normalize_roundtrip_and_endpoints() {
        let all: Vec<u8> = (0..NUM_CLASSES as u8).collect();
        let f = RainFrame::from_classes(1, 14, all.clone()).unwrap();
        let n = normalize(&f).unwrap();
        assert_eq!(n.normalized().unwrap()[0], 0.0);
        assert_eq!(n.normalized().unwrap()[13], 1.0);
        assert_eq!(denormalize(&n).unwrap().classes().unwrap(), &all[..]);
    }

    #[test]
    fn rejects_bad_tables() {
        let mut b = DEFAULT_BOUNDARIES.to_vec();
        b.swap(2, 3);
        assert!(ClassTable::new(b, table().representatives).is_err());
        let mut r = table().representatives;
        r[5] = 100.0;
        assert!(ClassTable::new(DEFAULT_BOUNDARIES.to_vec(), r).is_err());
    }

    #[test]
    fn wrong_encoding_is_rejected() {
        let f = RainFrame::from_classes(1, 1, vec![3]).unwrap();
        assert!(table().quantize(&f).is_err());
        assert!(normalize(&RainFrame::zeros(1, 1).unwrap()).is_err());
    }
}
