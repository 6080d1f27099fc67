use serde::{Deserialize, Serialize};

use super::DetectionError;

/// How standardized features are presented to the one-class boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Orientation {
    /// `(x - mean) / std`.
    Standard,
    /// `offset - (x - mean) / std`: values above the training mean move
    /// toward the origin of the feature space.
    Headroom { offset: f64 },
    /// `offset - |x - mean| / std`: deviations in either direction move
    /// toward the origin.
    Magnitude { offset: f64 },
}

/// Per-feature mean/std statistics fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub orientation: Orientation,
}

impl FeatureScaler {
    pub fn fit(rows: &[Vec<f64>], orientation: Orientation) -> Result<Self, DetectionError> {
        let width = rows.first().map(Vec::len).ok_or(DetectionError::EmptyCorpus)?;
        let n = rows.len() as f64;
        let mut mean = vec![0.0; width];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; width];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let std = var.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std, orientation })
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, DetectionError> {
        if x.len() != self.mean.len() {
            return Err(DetectionError::InvalidInput(format!(
                "expected {} features, got {}",
                self.mean.len(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(DetectionError::InvalidInput("non-finite feature".into()));
        }
        Ok(x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| {
                let z = (v - m) / s;
                match self.orientation {
                    Orientation::Standard => z,
                    Orientation::Headroom { offset } => offset - z,
                    Orientation::Magnitude { offset } => offset - z.abs(),
                }
            })
            .collect())
    }

    /// `[kind, offset]` with kind 0 standard, 1 headroom, 2 magnitude.
    pub fn encode_orientation(&self) -> [f64; 2] {
        match self.orientation {
            Orientation::Standard => [0.0, 0.0],
            Orientation::Headroom { offset } => [1.0, offset],
            Orientation::Magnitude { offset } => [2.0, offset],
        }
    }

    pub fn decode_orientation(v: &[f64]) -> Option<Orientation> {
        match v {
            [k, _] if *k == 0.0 => Some(Orientation::Standard),
            [k, offset] if *k == 1.0 => Some(Orientation::Headroom { offset: *offset }),
            [k, offset] if *k == 2.0 => Some(Orientation::Magnitude { offset: *offset }),
            _ => None,
        }
    }
}

/// Per-slot, per-attribute statistics over a series corpus, so each point is
/// standardized against the same time of day in training.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesScaler {
    pub mean: Vec<[f64; 3]>,
    pub std: Vec<[f64; 3]>,
}

impl SeriesScaler {
    pub fn fit(series: &[Vec<[f64; 3]>]) -> Result<Self, DetectionError> {
        let len = series.first().map(Vec::len).filter(|&l| l > 0).ok_or(DetectionError::EmptyCorpus)?;
        if series.iter().any(|s| s.len() != len) {
            return Err(DetectionError::InvalidInput("series lengths differ".into()));
        }
        let n = series.len() as f64;
        let mut mean = vec![[0.0; 3]; len];
        for s in series {
            for (m, p) in mean.iter_mut().zip(s) {
                for k in 0..3 {
                    m[k] += p[k] / n;
                }
            }
        }
        let mut var = vec![[0.0; 3]; len];
        for s in series {
            for ((v, p), m) in var.iter_mut().zip(s).zip(&mean) {
                for k in 0..3 {
                    v[k] += (p[k] - m[k]).powi(2) / n;
                }
            }
        }
        let std = var.into_iter().map(|v| v.map(|x| if x > 1e-24 { x.sqrt() } else { 1.0 })).collect();
        Ok(Self { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Flattened `[mean..., std...]`, three values per slot each.
    pub fn to_flat(&self) -> Vec<f64> {
        self.mean.iter().chain(&self.std).flatten().copied().collect()
    }

    pub fn from_flat(v: &[f64]) -> Option<Self> {
        if v.is_empty() || v.len() % 6 != 0 {
            return None;
        }
        let rows: Vec<[f64; 3]> = v.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        let (mean, std) = rows.split_at(rows.len() / 2);
        Some(Self { mean: mean.to_vec(), std: std.to_vec() })
    }

    /// Callers guarantee `s.len() == self.len()`.
    pub fn transform(&self, s: &[[f64; 3]]) -> Vec<Vec<f64>> {
        s.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(p, (m, sd))| (0..3).map(|k| (p[k] - m[k]) / sd[k]).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizes_training_rows() {
        let rows = vec![vec![1.0, 10.0], vec![3.0, 10.0]];
        let s = FeatureScaler::fit(&rows, Orientation::Standard).unwrap();
        assert_eq!(s.transform(&[1.0, 10.0]).unwrap(), vec![-1.0, 0.0]);
        let h = FeatureScaler::fit(&rows, Orientation::Headroom { offset: 2.0 }).unwrap();
        assert_eq!(h.transform(&[3.0, 10.0]).unwrap(), vec![1.0, 2.0]);
        assert!(s.transform(&[f64::NAN, 1.0]).is_err());
        assert!(s.transform(&[1.0]).is_err());
    }

    #[test]
    fn series_scaler_is_per_slot() {
        let a = vec![[1.0, 0.0, 5.0], [10.0, 2.0, 5.0]];
        let b = vec![[3.0, 0.0, 5.0], [30.0, 4.0, 5.0]];
        let sc = SeriesScaler::fit(&[a, b]).unwrap();
        assert_eq!(sc.mean, vec![[2.0, 0.0, 5.0], [20.0, 3.0, 5.0]]);
        assert_eq!(sc.std, vec![[1.0, 1.0, 1.0], [10.0, 1.0, 1.0]]);
        assert_eq!(sc.transform(&[[3.0, 0.0, 5.0], [0.0, 3.0, 6.0]]), vec![vec![1.0, 0.0, 0.0], vec![-2.0, 0.0, 1.0]]);
        assert_eq!(SeriesScaler::from_flat(&sc.to_flat()).unwrap(), sc);
        assert!(SeriesScaler::fit(&[vec![[0.0; 3]], vec![[0.0; 3]; 2]]).is_err());
    }
}
