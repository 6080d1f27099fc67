use super::DetectionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    /// `decisions[i]` and `labels[i]` are `true` for the anomalous class.
    pub fn tally(decisions: &[bool], labels: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&d, &l) in decisions.iter().zip(labels) {
            match (d, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn merge(&mut self, other: Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// Precision, recall and F1. With no predicted and no actual positives
    /// every prediction was right, which scores 1.
    pub fn f1(&self) -> F1 {
        if self.tp + self.fp + self.fn_ == 0 {
            return F1 { precision: 1.0, recall: 1.0, f1: 1.0 };
        }
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        F1 { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1_score(decisions: &[bool], labels: &[bool]) -> Result<F1, DetectionError> {
    if decisions.is_empty() {
        return Err(DetectionError::EmptyCorpus);
    }
    if decisions.len() != labels.len() {
        return Err(DetectionError::InvalidInput(format!(
            "{} decisions for {} labels",
            decisions.len(),
            labels.len()
        )));
    }
    Ok(Confusion::tally(decisions, labels).f1())
}
