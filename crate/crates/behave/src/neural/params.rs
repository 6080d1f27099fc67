//! Text parameter files.
//!
//! ```text
//! behave-params v1
//! model <name>
//! dense <inputs> <outputs> <activation>
//! lstm <inputs> <hidden>
//! vector <name> <len>
//! values <count>
//! <one value per line>
//! ```
//!
//! Manifest lines appear in parameter order. A dense entry owns
//! `inputs * outputs` weights (row-major, output-major) followed by `outputs`
//! biases. An LSTM entry owns the stacked input weights, recurrent weights and
//! biases in gate order input, forget, candidate, output. Values are written
//! with the shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;

use super::{Activation, DenseLayer, LstmCell, NeuralError, Parameterized};

pub const FORMAT_HEADER: &str = "behave-params v1";

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize, activation: Activation },
    Lstm { inputs: usize, hidden: usize },
    Vector { name: String, len: usize },
}

impl LayerSpec {
    pub fn len(&self) -> usize {
        match self {
            LayerSpec::Dense { inputs, outputs, .. } => inputs * outputs + outputs,
            LayerSpec::Lstm { inputs, hidden } => 4 * hidden * (inputs + hidden + 1),
            LayerSpec::Vector { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamFile {
    pub model: String,
    pub layers: Vec<LayerSpec>,
    pub values: Vec<f64>,
}

fn fmt_err(msg: impl Into<String>) -> NeuralError {
    NeuralError::Format(msg.into())
}

impl ParamFile {
    pub fn new(model: &str) -> Self {
        Self { model: model.to_string(), ..Self::default() }
    }

    pub fn push_dense(&mut self, layer: &DenseLayer) {
        self.layers.push(LayerSpec::Dense {
            inputs: layer.inputs,
            outputs: layer.outputs,
            activation: layer.activation,
        });
        layer.export_params(&mut self.values);
    }

    pub fn push_lstm(&mut self, cell: &LstmCell) {
        self.layers.push(LayerSpec::Lstm { inputs: cell.inputs, hidden: cell.hidden });
        cell.export_params(&mut self.values);
    }

    pub fn push_vector(&mut self, name: &str, values: &[f64]) {
        self.layers.push(LayerSpec::Vector { name: name.to_string(), len: values.len() });
        self.values.extend_from_slice(values);
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "model {}", self.model);
        for l in &self.layers {
            let _ = match l {
                LayerSpec::Dense { inputs, outputs, activation } => {
                    writeln!(s, "dense {inputs} {outputs} {}", activation.name())
                }
                LayerSpec::Lstm { inputs, hidden } => writeln!(s, "lstm {inputs} {hidden}"),
                LayerSpec::Vector { name, len } => writeln!(s, "vector {name} {len}"),
            };
        }
        let _ = writeln!(s, "values {}", self.values.len());
        for v in &self.values {
            let _ = writeln!(s, "{v:?}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, NeuralError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == FORMAT_HEADER => {}
            Some((_, h)) => return Err(fmt_err(format!("unsupported header {h:?}"))),
            None => return Err(fmt_err("empty file")),
        }
        let mut file = ParamFile::default();
        let num = |tok: Option<&str>, line: usize| -> Result<usize, NeuralError> {
            tok.and_then(|t| t.parse().ok())
                .ok_or_else(|| fmt_err(format!("line {}: expected an integer", line + 1)))
        };
        let mut expected_values = None;
        for (i, line) in lines.by_ref() {
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("model") => file.model = tok.next().unwrap_or_default().to_string(),
                Some("dense") => {
                    let inputs = num(tok.next(), i)?;
                    let outputs = num(tok.next(), i)?;
                    let activation = tok
                        .next()
                        .and_then(Activation::from_name)
                        .ok_or_else(|| fmt_err(format!("line {}: unknown activation", i + 1)))?;
                    file.layers.push(LayerSpec::Dense { inputs, outputs, activation });
                }
                Some("lstm") => {
                    let inputs = num(tok.next(), i)?;
                    let hidden = num(tok.next(), i)?;
                    file.layers.push(LayerSpec::Lstm { inputs, hidden });
                }
                Some("vector") => {
                    let name = tok
                        .next()
                        .ok_or_else(|| fmt_err(format!("line {}: vector needs a name", i + 1)))?;
                    let len = num(tok.next(), i)?;
                    file.layers.push(LayerSpec::Vector { name: name.to_string(), len });
                }
                Some("values") => {
                    expected_values = Some(num(tok.next(), i)?);
                    break;
                }
                Some(other) => return Err(fmt_err(format!("line {}: unknown entry {other:?}", i + 1))),
                None => {}
            }
        }
        let expected = expected_values.ok_or_else(|| fmt_err("missing values section"))?;
        let manifest: usize = file.layers.iter().map(LayerSpec::len).sum();
        if manifest != expected {
            return Err(fmt_err(format!("manifest describes {manifest} values but file declares {expected}")));
        }
        file.values.reserve(expected);
        for (i, line) in lines {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|_| fmt_err(format!("line {}: bad number {t:?}", i + 1)))?;
            file.values.push(v);
        }
        if file.values.len() != expected {
            return Err(fmt_err(format!("expected {expected} values, found {}", file.values.len())));
        }
        Ok(file)
    }

    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NeuralError> {
        let text = std::fs::read_to_string(path).map_err(|e| fmt_err(e.to_string()))?;
        Self::parse(&text)
    }

    /// Sequential reader over the manifest, used by model loaders.
    pub fn reader(&self) -> ParamReader<'_> {
        ParamReader { file: self, layer: 0, offset: 0 }
    }
}

pub struct ParamReader<'a> {
    file: &'a ParamFile,
    layer: usize,
    offset: usize,
}

impl ParamReader<'_> {
    fn next_spec(&mut self) -> Result<(&LayerSpec, &[f64]), NeuralError> {
        let spec = self
            .file
            .layers
            .get(self.layer)
            .ok_or_else(|| fmt_err("manifest ended early"))?;
        let n = spec.len();
        let vals = &self.file.values[self.offset..self.offset + n];
        self.layer += 1;
        self.offset += n;
        Ok((spec, vals))
    }

    pub fn dense(&mut self) -> Result<DenseLayer, NeuralError> {
        match self.next_spec()? {
            (LayerSpec::Dense { inputs, outputs, activation }, vals) => {
                let mut l = DenseLayer::zeros(*inputs, *outputs, *activation);
                l.import_params(vals);
                Ok(l)
            }
            (other, _) => Err(fmt_err(format!("expected dense layer, found {other:?}"))),
        }
    }

    pub fn lstm(&mut self) -> Result<LstmCell, NeuralError> {
        match self.next_spec()? {
            (LayerSpec::Lstm { inputs, hidden }, vals) => {
                let mut c = LstmCell::zeros(*inputs, *hidden)?;
                c.import_params(vals);
                Ok(c)
            }
            (other, _) => Err(fmt_err(format!("expected lstm, found {other:?}"))),
        }
    }

    pub fn vector(&mut self, name: &str) -> Result<Vec<f64>, NeuralError> {
        match self.next_spec()? {
            (LayerSpec::Vector { name: n, .. }, vals) if n == name => Ok(vals.to_vec()),
            (other, _) => Err(fmt_err(format!("expected vector {name}, found {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn round_trip_is_exact() {
        let mut rng = substream(1, "params", 0);
        let d = DenseLayer::xavier(3, 2, Activation::Sigmoid, &mut rng);
        let c = LstmCell::small_uniform(3, 4, &mut rng).unwrap();
        let mut f = ParamFile::new("toy");
        f.push_dense(&d);
        f.push_lstm(&c);
        f.push_vector("extra", &[0.1, 1e-300, -3.5e17]);
        let back = ParamFile::parse(&f.to_text()).unwrap();
        assert_eq!(back, f);
        let mut r = back.reader();
        assert_eq!(r.dense().unwrap(), d);
        assert_eq!(r.lstm().unwrap(), c);
        assert_eq!(r.vector("extra").unwrap(), vec![0.1, 1e-300, -3.5e17]);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut f = ParamFile::new("toy");
        f.push_vector("v", &[1.0, 2.0]);
        let text = f.to_text();
        let cut: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
        assert!(ParamFile::parse(&cut).is_err());
        assert!(ParamFile::parse("other-format v9\n").is_err());
    }
}
