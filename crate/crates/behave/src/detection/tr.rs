use super::{encode_series, ocnn_score, train_ocnn, DetectionError, DetectionResult, GanEdModel, OcnnConfig, OcnnModel, OcnnReport, UnlabeledFeatures, UnlabeledSeries};
use crate::par::{map_slice, ExecMode};

/// Series-level detector: an OCNN over frozen encoder features.
#[derive(Debug, Clone, PartialEq)]
pub struct TrDetector {
    pub ganed: GanEdModel,
    pub ocnn: OcnnModel,
}

impl TrDetector {
    pub fn score(&self, series: &[[f64; 3]], timestamp: f64) -> Result<DetectionResult, DetectionError> {
        let feature = encode_series(&self.ganed, series)?;
        ocnn_score(&self.ocnn, &feature, timestamp)
    }

    /// Scores `(series, timestamp)` pairs, in input order.
    pub fn score_batch(&self, items: &[(Vec<[f64; 3]>, f64)], mode: ExecMode) -> Result<Vec<DetectionResult>, DetectionError> {
        map_slice(mode, items, |(s, t)| self.score(s, *t)).into_iter().collect()
    }
}

pub fn train_tr_detector(ganed: GanEdModel, corpus: &UnlabeledSeries, cfg: &OcnnConfig) -> Result<(TrDetector, OcnnReport), DetectionError> {
    let rows = corpus
        .series
        .iter()
        .map(|s| encode_series(&ganed, s))
        .collect::<Result<Vec<_>, _>>()?;
    let (ocnn, report) = train_ocnn(&UnlabeledFeatures::new(rows)?, cfg)?;
    Ok((TrDetector { ganed, ocnn }, report))
}
