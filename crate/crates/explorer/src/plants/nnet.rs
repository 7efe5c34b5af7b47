//! Parser and inference for feedforward ReLU networks in the NNet text
//! format (the interchange format of the ACAS Xu compressed controllers).
//!
//! Grammar: `//` comment lines; then `numLayers,inputSize,outputSize,
//! maxLayerSize`; a layer-sizes line; one legacy flag line; input minimums,
//! maximums, means, and ranges lines (means/ranges may carry one trailing
//! output-normalization term); then, per layer, the weight rows followed by
//! one bias line per neuron. All values comma-separated, trailing commas
//! tolerated.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{fromf, Real};

/// Feedforward network with ReLU hidden layers and a linear output layer.
#[derive(Debug, Clone)]
pub struct NNetNetwork<T: Real> {
    layer_sizes: Vec<usize>,
    weights: Vec<DMatrix<T>>,
    biases: Vec<DVector<T>>,
    input_mins: Vec<T>,
    input_maxes: Vec<T>,
    input_means: Vec<T>,
    input_ranges: Vec<T>,
    output_mean: T,
    output_range: T,
}

impl<T: Real> NNetNetwork<T> {
    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    /// Evaluates the network: inputs are clipped to their stored ranges and
    /// normalized as `(v - mean) / range`; outputs are denormalized.
    pub fn eval(&self, inputs: &[T]) -> Result<Vec<T>> {
        if inputs.len() != self.input_size() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_size(),
                actual: inputs.len(),
            });
        }
        let mut h = DVector::from_fn(inputs.len(), |i, _| {
            let mut v = inputs[i];
            if v < self.input_mins[i] {
                v = self.input_mins[i];
            }
            if v > self.input_maxes[i] {
                v = self.input_maxes[i];
            }
            (v - self.input_means[i]) / self.input_ranges[i]
        });
        let last = self.weights.len() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = w * h + b;
            if k < last {
                h.apply(|v| {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                });
            }
        }
        Ok(h
            .iter()
            .map(|&y| y * self.output_range + self.output_mean)
            .collect())
    }
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    current_line: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            current_line: 0,
        }
    }

    /// Next non-comment, non-blank line with its 1-based line number.
    fn next_data(&mut self) -> Result<(usize, &'a str)> {
        for (idx, line) in self.lines.by_ref() {
            self.current_line = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with("//") {
                continue;
            }
            return Ok((idx + 1, trimmed));
        }
        Err(Error::Parse {
            line: self.current_line + 1,
            message: "unexpected end of file".into(),
        })
    }

    fn next_numbers(&mut self) -> Result<(usize, Vec<f64>)> {
        let (line_no, text) = self.next_data()?;
        let mut values = Vec::new();
        for token in text.split(',') {
            let token = token.trim();
            if token.is_empty() {
                continue;
            }
            let v: f64 = token.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric token '{token}'"),
            })?;
            values.push(v);
        }
        Ok((line_no, values))
    }

    fn expect_count(&mut self, expected: usize, what: &str) -> Result<Vec<f64>> {
        let (line_no, values) = self.next_numbers()?;
        if values.len() != expected {
            return Err(Error::Parse {
                line: line_no,
                message: format!("{what}: expected {expected} values, got {}", values.len()),
            });
        }
        Ok(values)
    }
}

/// Parses NNet text into a network, reporting 1-based line numbers on
/// malformed input.
pub fn parse_nnet<T: Real>(text: &str) -> Result<NNetNetwork<T>> {
    let mut reader = LineReader::new(text);

    let (line_no, header) = reader.next_numbers()?;
    if header.len() < 4 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("header: expected 4 values, got {}", header.len()),
        });
    }
    let num_layers = header[0] as usize;
    let input_size = header[1] as usize;
    let output_size = header[2] as usize;
    if num_layers == 0 || input_size == 0 || output_size == 0 {
        return Err(Error::Parse {
            line: line_no,
            message: "header counts must be positive".into(),
        });
    }

    let (sizes_line, sizes_raw) = reader.next_numbers()?;
    if sizes_raw.len() != num_layers + 1 {
        return Err(Error::Parse {
            line: sizes_line,
            message: format!(
                "layer sizes: expected {} values, got {}",
                num_layers + 1,
                sizes_raw.len()
            ),
        });
    }
    let layer_sizes: Vec<usize> = sizes_raw.iter().map(|&v| v as usize).collect();
    if layer_sizes[0] != input_size || layer_sizes[num_layers] != output_size {
        return Err(Error::Parse {
            line: sizes_line,
            message: "layer sizes do not chain with header input/output sizes".into(),
        });
    }

    // Legacy flag line, ignored.
    reader.next_numbers()?;

    let input_mins = reader.expect_count(input_size, "input minimums")?;
    let input_maxes = reader.expect_count(input_size, "input maximums")?;
    let (means_line, means_raw) = reader.next_numbers()?;
    if means_raw.len() != input_size && means_raw.len() != input_size + 1 {
        return Err(Error::Parse {
            line: means_line,
            message: format!(
                "means: expected {} or {} values, got {}",
                input_size,
                input_size + 1,
                means_raw.len()
            ),
        });
    }
    let (ranges_line, ranges_raw) = reader.next_numbers()?;
    if ranges_raw.len() != means_raw.len() {
        return Err(Error::Parse {
            line: ranges_line,
            message: "ranges line must match means line length".into(),
        });
    }
    if ranges_raw[..input_size].iter().any(|&r| r == 0.0) {
        return Err(Error::Parse {
            line: ranges_line,
            message: "input range must be non-zero".into(),
        });
    }
    let output_mean = if means_raw.len() > input_size {
        means_raw[input_size]
    } else {
        0.0
    };
    let output_range = if ranges_raw.len() > input_size {
        ranges_raw[input_size]
    } else {
        1.0
    };
    if output_range == 0.0 {
        return Err(Error::Parse {
            line: ranges_line,
            message: "output range must be non-zero".into(),
        });
    }

    let mut weights = Vec::with_capacity(num_layers);
    let mut biases = Vec::with_capacity(num_layers);
    for layer in 0..num_layers {
        let rows = layer_sizes[layer + 1];
        let cols = layer_sizes[layer];
        let mut w = DMatrix::<T>::zeros(rows, cols);
        for r in 0..rows {
            let row = reader.expect_count(cols, &format!("layer {layer} weight row {r}"))?;
            for (c, &v) in row.iter().enumerate() {
                w[(r, c)] = fromf(v);
            }
        }
        let mut b = DVector::<T>::zeros(rows);
        for r in 0..rows {
            let bias = reader.expect_count(1, &format!("layer {layer} bias {r}"))?;
            b[r] = fromf(bias[0]);
        }
        weights.push(w);
        biases.push(b);
    }

    Ok(NNetNetwork {
        layer_sizes,
        weights,
        biases,
        input_mins: input_mins.into_iter().map(fromf).collect(),
        input_maxes: input_maxes.into_iter().map(fromf).collect(),
        input_means: means_raw[..input_size].iter().copied().map(fromf).collect(),
        input_ranges: ranges_raw[..input_size].iter().copied().map(fromf).collect(),
        output_mean: fromf(output_mean),
        output_range: fromf(output_range),
    })
}
