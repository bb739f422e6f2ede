//! Fixed-topology feed-forward perceptron over a flat parameter vector.
//!
//! Parameter layout, layer by layer from the input side: the layer's weight
//! matrix in row-major order (one row of `fan_in` weights per destination
//! neuron), followed by that layer's `fan_out` biases. The default topology
//! `6 -> 16 -> 24 -> 1` therefore packs as 96 + 16 + 384 + 24 + 24 + 1 = 545
//! values.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// Hyperbolic tangent sigmoid, `2 / (1 + exp(-2n)) - 1`.
    Tansig,
    /// Identity.
    Purelin,
}

impl Activation {
    #[inline]
    pub fn apply(self, n: f64) -> f64 {
        match self {
            Activation::Tansig => tansig(n),
            Activation::Purelin => n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tansig => "tansig",
            Activation::Purelin => "purelin",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "tansig" | "tanh" => Ok(Activation::Tansig),
            "purelin" | "linear" | "identity" => Ok(Activation::Purelin),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Hyperbolic tangent sigmoid transfer function.
///
/// Mathematically identical to `tanh`; evaluated through `f64::tanh`, which
/// saturates cleanly instead of overflowing `exp(-2n)` for large negative `n`.
#[inline]
pub fn tansig(n: f64) -> f64 {
    n.tanh()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpTopology {
    input_dim: usize,
    hidden_sizes: Vec<usize>,
    output_dim: usize,
    hidden_activation: Activation,
    output_activation: Activation,
}

impl Default for MlpTopology {
    fn default() -> Self {
        Self::new(6, vec![16, 24], 1).expect("default topology is valid")
    }
}

impl MlpTopology {
    /// Tansig hidden layers and a linear output layer.
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>, output_dim: usize) -> Result<Self> {
        Self::with_activations(
            input_dim,
            hidden_sizes,
            output_dim,
            Activation::Tansig,
            Activation::Purelin,
        )
    }

    pub fn with_activations(
        input_dim: usize,
        hidden_sizes: Vec<usize>,
        output_dim: usize,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::Config(
                "input and output dimensions must be at least 1".into(),
            ));
        }
        if hidden_sizes.contains(&0) {
            return Err(Error::Config(
                "hidden layer sizes must be at least 1".into(),
            ));
        }
        Ok(Self {
            input_dim,
            hidden_sizes,
            output_dim,
            hidden_activation,
            output_activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.hidden_sizes
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    /// All layer widths from input to output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_sizes.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend_from_slice(&self.hidden_sizes);
        sizes.push(self.output_dim);
        sizes
    }

    /// `(fan_in, fan_out)` for each weight layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layer_sizes()
            .windows(2)
            .map(|w| (w[0], w[1]))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(fan_in, fan_out)| fan_in * fan_out + fan_out)
            .sum()
    }

    fn activation_for(&self, layer: usize, num_layers: usize) -> Activation {
        if layer + 1 == num_layers {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    fn max_width(&self) -> usize {
        self.layer_sizes().into_iter().max().unwrap_or(1)
    }

    /// Compact textual form, e.g. `6,16,24,1`.
    pub fn sizes_string(&self) -> String {
        self.layer_sizes()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Inverse of [`MlpTopology::sizes_string`], with the default activations.
    pub fn parse_sizes(s: &str) -> Result<Self> {
        let sizes = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad layer size `{}`", t.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if sizes.len() < 2 {
            return Err(Error::Config(format!(
                "topology `{s}` needs at least input and output sizes"
            )));
        }
        let input = sizes[0];
        let output = sizes[sizes.len() - 1];
        Self::new(input, sizes[1..sizes.len() - 1].to_vec(), output)
    }
}

pub fn param_count(topology: &MlpTopology) -> usize {
    topology.param_count()
}

/// Flat vector of every weight and bias of one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    /// Rejects non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `fan_out x fan_in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerWeights {
    pub fn weight(&self, to: usize, from: usize) -> f64 {
        self.weights[to * self.fan_in + from]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub layers: Vec<LayerWeights>,
}

fn check_len(params: &[f64], topology: &MlpTopology) -> Result<()> {
    let expected = topology.param_count();
    if params.len() != expected {
        return Err(Error::Codec {
            expected,
            actual: params.len(),
        });
    }
    Ok(())
}

pub fn decode(params: &[f64], topology: &MlpTopology) -> Result<NetworkWeights> {
    check_len(params, topology)?;
    let mut offset = 0;
    let layers = topology
        .layer_shapes()
        .into_iter()
        .map(|(fan_in, fan_out)| {
            let w_end = offset + fan_in * fan_out;
            let b_end = w_end + fan_out;
            let layer = LayerWeights {
                fan_in,
                fan_out,
                weights: params[offset..w_end].to_vec(),
                biases: params[w_end..b_end].to_vec(),
            };
            offset = b_end;
            layer
        })
        .collect();
    Ok(NetworkWeights { layers })
}

pub fn encode(weights: &NetworkWeights, topology: &MlpTopology) -> Result<Vec<f64>> {
    let shapes = topology.layer_shapes();
    if shapes.len() != weights.layers.len() {
        return Err(Error::Shape(format!(
            "network has {} layers, topology expects {}",
            weights.layers.len(),
            shapes.len()
        )));
    }
    let mut out = Vec::with_capacity(topology.param_count());
    for (layer, &(fan_in, fan_out)) in weights.layers.iter().zip(&shapes) {
        if layer.fan_in != fan_in
            || layer.fan_out != fan_out
            || layer.weights.len() != fan_in * fan_out
            || layer.biases.len() != fan_out
        {
            return Err(Error::Shape(format!(
                "layer {}x{} does not match topology {}x{}",
                layer.fan_out, layer.fan_in, fan_out, fan_in
            )));
        }
        out.extend_from_slice(&layer.weights);
        out.extend_from_slice(&layer.biases);
    }
    Ok(out)
}

/// Reusable activation buffers for repeated forward passes.
struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Scratch {
    fn new(topology: &MlpTopology) -> Self {
        let w = topology.max_width();
        Self {
            a: vec![0.0; w],
            b: vec![0.0; w],
        }
    }
}

/// Forward pass without length checks. Output lands in `scratch.a[..output_dim]`.
fn forward_unchecked(params: &[f64], topology: &MlpTopology, x: &[f64], scratch: &mut Scratch) {
    let shapes = topology.layer_shapes();
    let num_layers = shapes.len();
    scratch.a[..x.len()].copy_from_slice(x);
    let mut offset = 0;
    for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let act = topology.activation_for(l, num_layers);
        let weights = &params[offset..offset + fan_in * fan_out];
        let biases = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        let input = &scratch.a[..fan_in];
        for (j, out) in scratch.b[..fan_out].iter_mut().enumerate() {
            let row = &weights[j * fan_in..(j + 1) * fan_in];
            let mut z = 0.0;
            for (w, v) in row.iter().zip(input) {
                z += w * v;
            }
            *out = act.apply(z + biases[j]);
        }
        std::mem::swap(&mut scratch.a, &mut scratch.b);
        offset += fan_in * fan_out + fan_out;
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Shape(format!("{what} contains non-finite values")));
    }
    Ok(())
}

/// Network outputs for one input row.
pub fn forward_all(params: &[f64], topology: &MlpTopology, x: &[f64]) -> Result<Vec<f64>> {
    check_len(params, topology)?;
    if x.len() != topology.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} features, topology expects {}",
            x.len(),
            topology.input_dim()
        )));
    }
    check_finite(x, "input")?;
    let mut scratch = Scratch::new(topology);
    forward_unchecked(params, topology, x, &mut scratch);
    Ok(scratch.a[..topology.output_dim()].to_vec())
}

/// First network output for one input row; the usual single-output case.
pub fn forward(params: &[f64], topology: &MlpTopology, x: &[f64]) -> Result<f64> {
    forward_all(params, topology, x).map(|o| o[0])
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot form a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { data, rows, cols })
    }

    pub fn empty(cols: usize) -> Self {
        Self {
            data: Vec::new(),
            rows: 0,
            cols,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            data,
            rows: rows.len(),
            cols,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact(0) panics, so zero-width matrices go through a range
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// New matrix holding the selected rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            rows: indices.len(),
            cols: self.cols,
        }
    }
}

/// First network output for every row of `x`; row `i` is bit-identical to
/// `forward(params, topology, x.row(i))`.
pub fn batch_forward(params: &[f64], topology: &MlpTopology, x: &Matrix) -> Result<Vec<f64>> {
    check_len(params, topology)?;
    if x.cols() != topology.input_dim() {
        return Err(Error::Shape(format!(
            "matrix has {} columns, topology expects {}",
            x.cols(),
            topology.input_dim()
        )));
    }
    check_finite(x.as_slice(), "input matrix")?;
    let shapes = topology.layer_shapes();
    let width = topology.max_width();
    let mut a = vec![0.0; width * BLOCK];
    let mut b = vec![0.0; width * BLOCK];
    let mut out = Vec::with_capacity(x.rows());
    let mut start = 0;
    while start < x.rows() {
        let n = BLOCK.min(x.rows() - start);
        // feature-major block: a[i * BLOCK + r] is feature i of row start + r
        for r in 0..n {
            for (i, &v) in x.row(start + r).iter().enumerate() {
                a[i * BLOCK + r] = v;
            }
        }
        forward_block(params, topology, &shapes, &mut a, &mut b, n);
        out.extend_from_slice(&a[..n]);
        start += n;
    }
    Ok(out)
}

const BLOCK: usize = 64;

/// Same per-row operation order as `forward_unchecked`, vectorized across rows.
fn forward_block(
    params: &[f64],
    topology: &MlpTopology,
    shapes: &[(usize, usize)],
    a: &mut Vec<f64>,
    b: &mut Vec<f64>,
    n: usize,
) {
    let mut offset = 0;
    for (l, &(fan_in, fan_out)) in shapes.iter().enumerate() {
        let act = topology.activation_for(l, shapes.len());
        let weights = &params[offset..offset + fan_in * fan_out];
        let biases = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        for j in 0..fan_out {
            let z = &mut b[j * BLOCK..j * BLOCK + n];
            z.fill(0.0);
            for (i, &w) in weights[j * fan_in..(j + 1) * fan_in].iter().enumerate() {
                for (zr, &v) in z.iter_mut().zip(&a[i * BLOCK..i * BLOCK + n]) {
                    *zr += w * v;
                }
            }
            for zr in z.iter_mut() {
                *zr = act.apply(*zr + biases[j]);
            }
        }
        std::mem::swap(a, b);
        offset += fan_in * fan_out + fan_out;
    }
}
