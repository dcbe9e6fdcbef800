use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const LN_EPSILON: f64 = 1e-5;

/// Hidden widths and the layer-norm switch. The output layer (width 1) is
/// implied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub layer_norm: bool,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            layer_norm: false,
        }
    }
}

/// Affine map `y = W x + b` with `W` stored `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

/// A hidden layer is `relu(norm?(dense(x)))`; the last layer is `dense(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpLayer {
    pub dense: Dense,
    pub norm: Option<LayerNorm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<MlpLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub norm_gain: Option<Vec<f64>>,
    pub norm_bias: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<LayerGrads>,
}

impl MlpGrads {
    /// Flat view in the same order as [`Mlp::tensors_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
            if let (Some(g), Some(b)) = (&l.norm_gain, &l.norm_bias) {
                out.push(g);
                out.push(b);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let (Some(g), Some(b)) = (&mut l.norm_gain, &mut l.norm_bias) {
                out.push(g);
                out.push(b);
            }
        }
        out
    }
}

struct LayerCache {
    input: Vec<f64>,
    /// Normalized pre-activation (layer norm only).
    x_hat: Option<Vec<f64>>,
    inv_std: Option<Vec<f64>>,
    /// Value fed to the rectifier (hidden layers) or the logits (last layer).
    out: Vec<f64>,
}

/// Intermediates recorded by [`Mlp::forward`].
pub struct MlpCache {
    batch: usize,
    layers: Vec<LayerCache>,
}

impl Dense {
    /// Weights `~ U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero bias.
    fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = (6.0 / inputs.max(1) as f64).sqrt();
        Self {
            inputs,
            outputs,
            weight: (0..inputs * outputs)
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], batch: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(batch * self.outputs);
        for row in x.chunks_exact(self.inputs) {
            for (w_row, b) in self.weight.chunks_exact(self.inputs).zip(&self.bias) {
                out.push(b + dot(w_row, row));
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Mlp {
    pub fn new<R: Rng>(input_width: usize, spec: &MlpSpec, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(spec.hidden.len() + 1);
        let mut width = input_width;
        for &h in &spec.hidden {
            layers.push(MlpLayer {
                dense: Dense::init(width, h, rng),
                norm: spec.layer_norm.then(|| LayerNorm {
                    gain: vec![1.0; h],
                    bias: vec![0.0; h],
                }),
            });
            width = h;
        }
        layers.push(MlpLayer {
            dense: Dense::init(width, 1, rng),
            norm: None,
        });
        Self { layers }
    }

    /// Builds from explicit layers; widths must chain and end in one output.
    pub fn from_layers(layers: Vec<MlpLayer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::Shape("MLP needs at least one layer".into()));
        };
        if last.dense.outputs != 1 || last.norm.is_some() {
            return Err(Error::Shape(
                "last MLP layer must be a plain affine map to 1 output".into(),
            ));
        }
        for (k, l) in layers.iter().enumerate() {
            let d = &l.dense;
            if d.weight.len() != d.inputs * d.outputs || d.bias.len() != d.outputs {
                return Err(Error::Shape(format!(
                    "layer {k} tensors do not match its widths"
                )));
            }
            if let Some(n) = &l.norm {
                if n.gain.len() != d.outputs || n.bias.len() != d.outputs {
                    return Err(Error::Shape(format!("layer {k} norm width mismatch")));
                }
            }
            if k > 0 && layers[k - 1].dense.outputs != d.inputs {
                return Err(Error::Shape(format!("layer {k} input does not chain")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[MlpLayer] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].dense.inputs
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Sum of squared dense weights (biases and norm parameters excluded).
    pub fn weight_sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.dense.weight.iter())
            .map(|w| w * w)
            .sum()
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(&l.dense.weight);
            out.push(&l.dense.bias);
            if let Some(n) = &l.norm {
                out.push(&n.gain);
                out.push(&n.bias);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.dense.weight);
            out.push(&mut l.dense.bias);
            if let Some(n) = &mut l.norm {
                out.push(&mut n.gain);
                out.push(&mut n.bias);
            }
        }
        out
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: vec![0.0; l.dense.weight.len()],
                    bias: vec![0.0; l.dense.bias.len()],
                    norm_gain: l.norm.as_ref().map(|n| vec![0.0; n.gain.len()]),
                    norm_bias: l.norm.as_ref().map(|n| vec![0.0; n.bias.len()]),
                })
                .collect(),
        }
    }

    /// `B` logits for a `B x W` input.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, MlpCache)> {
        let width = self.input_width();
        if x.len() != batch * width {
            return Err(Error::Shape(format!(
                "MLP input has {} values, expected {batch} x {width}",
                x.len()
            )));
        }
        let last = self.layers.len() - 1;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let pre = layer.dense.forward(&h, batch);
            let (x_hat, inv_std, out) = match &layer.norm {
                Some(norm) => {
                    let (x_hat, inv_std) = layer_norm(&pre, layer.dense.outputs);
                    let out = x_hat
                        .chunks_exact(layer.dense.outputs)
                        .flat_map(|row| {
                            row.iter()
                                .zip(&norm.gain)
                                .zip(&norm.bias)
                                .map(|((v, g), b)| g * v + b)
                        })
                        .collect();
                    (Some(x_hat), Some(inv_std), out)
                }
                None => (None, None, pre),
            };
            let next = if k == last {
                out.clone()
            } else {
                out.iter().map(|v| v.max(0.0)).collect()
            };
            caches.push(LayerCache {
                input: std::mem::replace(&mut h, next),
                x_hat,
                inv_std,
                out,
            });
        }
        Ok((
            h,
            MlpCache {
                batch,
                layers: caches,
            },
        ))
    }

    /// Parameter gradients and the input gradient (`B x W`) given
    /// `d loss / d logits`.
    pub fn backward(&self, cache: &MlpCache, d_logits: &[f64]) -> (MlpGrads, Vec<f64>) {
        let batch = cache.batch;
        let last = self.layers.len() - 1;
        let mut grads = self.zero_grads();
        let mut d_out = d_logits.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let lc = &cache.layers[k];
            let width = layer.dense.outputs;
            let g = &mut grads.layers[k];
            if k != last {
                for (d, o) in d_out.iter_mut().zip(&lc.out) {
                    if *o <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let d_pre = match (&layer.norm, &lc.x_hat, &lc.inv_std) {
                (Some(norm), Some(x_hat), Some(inv_std)) => {
                    let gain_g = g.norm_gain.as_mut().expect("norm grads");
                    let bias_g = g.norm_bias.as_mut().expect("norm grads");
                    let mut d_pre = Vec::with_capacity(d_out.len());
                    for ((d_row, x_row), s) in d_out
                        .chunks_exact(width)
                        .zip(x_hat.chunks_exact(width))
                        .zip(inv_std)
                    {
                        let mut mean_g = 0.0;
                        let mut mean_gx = 0.0;
                        for j in 0..width {
                            gain_g[j] += d_row[j] * x_row[j];
                            bias_g[j] += d_row[j];
                            let dx_hat = d_row[j] * norm.gain[j];
                            mean_g += dx_hat;
                            mean_gx += dx_hat * x_row[j];
                        }
                        mean_g /= width as f64;
                        mean_gx /= width as f64;
                        for j in 0..width {
                            let dx_hat = d_row[j] * norm.gain[j];
                            d_pre.push(s * (dx_hat - mean_g - x_row[j] * mean_gx));
                        }
                    }
                    d_pre
                }
                _ => d_out,
            };
            let inputs = layer.dense.inputs;
            let mut d_in = vec![0.0; batch * inputs];
            for b in 0..batch {
                let x_row = &lc.input[b * inputs..(b + 1) * inputs];
                let dx_row = &mut d_in[b * inputs..(b + 1) * inputs];
                for o in 0..width {
                    let d = d_pre[b * width + o];
                    if d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let w_row = &layer.dense.weight[o * inputs..(o + 1) * inputs];
                    let gw_row = &mut g.weight[o * inputs..(o + 1) * inputs];
                    for i in 0..inputs {
                        gw_row[i] += d * x_row[i];
                        dx_row[i] += d * w_row[i];
                    }
                }
            }
            d_out = d_in;
        }
        (grads, d_out)
    }
}

/// Row-wise standardization of a `rows x width` matrix.
fn layer_norm(x: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x_hat = Vec::with_capacity(x.len());
    let mut inv_std = Vec::with_capacity(x.len() / width);
    for row in x.chunks_exact(width) {
        let mean = row.iter().sum::<f64>() / width as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
        let s = 1.0 / (var + LN_EPSILON).sqrt();
        inv_std.push(s);
        x_hat.extend(row.iter().map(|v| (v - mean) * s));
    }
    (x_hat, inv_std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(weight: Vec<f64>, inputs: usize, bias: f64) -> Mlp {
        Mlp::from_layers(vec![MlpLayer {
            dense: Dense {
                inputs,
                outputs: 1,
                weight,
                bias: vec![bias],
            },
            norm: None,
        }])
        .unwrap()
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let mut mlp = Mlp::new(3, &MlpSpec::default(), &mut ChaCha8Rng::seed_from_u64(0));
        mlp.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        let (z, _) = mlp.forward(&[1.0, -2.0, 3.0, 0.5, 0.5, 0.5], 2).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
    }

    #[test]
    fn single_linear_layer() {
        let mlp = linear(vec![2.0, -1.0], 2, 0.5);
        let (z, _) = mlp.forward(&[1.0, 2.0], 1).unwrap();
        assert_eq!(z, vec![0.5]);
    }

    #[test]
    fn rectifier_clamps_negative() {
        let mlp = Mlp::from_layers(vec![
            MlpLayer {
                dense: Dense {
                    inputs: 2,
                    outputs: 2,
                    weight: vec![1.0, 0.0, 0.0, 1.0],
                    bias: vec![0.0, 0.0],
                },
                norm: None,
            },
            MlpLayer {
                dense: Dense {
                    inputs: 2,
                    outputs: 1,
                    weight: vec![1.0, 10.0],
                    bias: vec![0.0],
                },
                norm: None,
            },
        ])
        .unwrap();
        let (z, cache) = mlp.forward(&[-3.0, 4.0], 1).unwrap();
        assert_eq!(cache.layers[1].input, vec![0.0, 4.0]);
        assert_eq!(z, vec![40.0]);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let mlp = linear(vec![1.0, 1.0], 2, 0.0);
        assert!(mlp.forward(&[1.0, 2.0, 3.0], 1).is_err());
        assert!(Mlp::from_layers(vec![]).is_err());
    }

    fn check_gradients(spec: &MlpSpec) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut mlp = Mlp::new(3, spec, &mut rng);
        for t in mlp.tensors_mut() {
            for v in t.iter_mut() {
                *v += rng.gen_range(-0.3..0.3);
            }
        }
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coef = [0.7, -1.3, 0.4, 2.0];
        let loss = |m: &Mlp, x: &[f64]| {
            let (z, _) = m.forward(x, 4).unwrap();
            z.iter().zip(&coef).map(|(a, c)| c * a * a).sum::<f64>()
        };
        let (z, cache) = mlp.forward(&x, 4).unwrap();
        let d: Vec<f64> = z.iter().zip(&coef).map(|(a, c)| 2.0 * c * a).collect();
        let (grads, dx) = mlp.backward(&cache, &d);
        let h = 1e-6;
        let analytic: Vec<f64> = grads.tensors().into_iter().flatten().copied().collect();
        let mut k = 0;
        for t in 0..mlp.tensors().len() {
            for j in 0..mlp.tensors()[t].len() {
                let mut p = mlp.clone();
                p.tensors_mut()[t][j] += h;
                let mut m = mlp.clone();
                m.tensors_mut()[t][j] -= h;
                let numeric = (loss(&p, &x) - loss(&m, &x)) / (2.0 * h);
                let err =
                    (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-6);
                assert!(
                    err < 1e-4,
                    "tensor {t} entry {j}: {numeric} vs {}",
                    analytic[k]
                );
                k += 1;
            }
        }
        for j in 0..x.len() {
            let mut p = x.clone();
            p[j] += h;
            let mut m = x.clone();
            m[j] -= h;
            let numeric = (loss(&mlp, &p) - loss(&mlp, &m)) / (2.0 * h);
            assert!((numeric - dx[j]).abs() / numeric.abs().max(1e-6) < 1e-4);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(&MlpSpec {
            hidden: vec![5, 4],
            layer_norm: false,
        });
    }

    #[test]
    fn layer_norm_gradients_match_finite_differences() {
        check_gradients(&MlpSpec {
            hidden: vec![5, 4],
            layer_norm: true,
        });
    }
}
