//! Dense feed-forward network with rectifier hidden layers and a linear
//! output layer.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix in
//! row-major `[out][in]` order followed by the bias vector. Exact zeros in a
//! layer's input are skipped, which makes one-hot features and inactive
//! rectifier units free.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Per-sample activations recorded by [`Mlp::forward`].
#[derive(Debug, Clone, Default)]
pub struct Trace {
    acts: Vec<Vec<f64>>,
    active: Vec<usize>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

fn layer_offsets(widths: &[usize]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(widths.len());
    let mut at = 0;
    offsets.push(0);
    for w in widths.windows(2) {
        at += w[0] * w[1] + w[1];
        offsets.push(at);
    }
    offsets
}

impl Mlp {
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        let offsets = layer_offsets(widths);
        let n = *offsets.last().expect("non-empty");
        Ok(Self { widths: widths.to_vec(), params: vec![0.0; n], offsets })
    }

    /// Weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn init(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut m = Self::zeros(widths)?;
        for l in 0..m.n_layers() {
            let bound = 1.0 / libm::sqrt(m.widths[l] as f64);
            let (start, end) = (m.offsets[l], m.offsets[l + 1]);
            for p in &mut m.params[start..end] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(m)
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(widths)?;
        if params.len() != m.params.len() {
            return Err(Error::DimensionMismatch { expected: m.params.len(), found: params.len() });
        }
        m.params = params;
        Ok(m)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let w_end = self.offsets[l] + self.widths[l] * self.widths[l + 1];
        (&self.params[self.offsets[l]..w_end], &self.params[w_end..self.offsets[l + 1]])
    }

    pub fn forward<'t>(&self, x: &[f64], trace: &'t mut Trace) -> Result<&'t [f64]> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: x.len() });
        }
        let layers = self.n_layers();
        trace.acts.resize_with(layers + 1, Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(x);
        for l in 0..layers {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let (w, b) = self.layer(l);
            let (before, after) = trace.acts.split_at_mut(l + 1);
            let input = &before[l];
            let out = &mut after[0];
            trace.active.clear();
            trace.active.extend((0..n_in).filter(|&i| input[i] != 0.0));
            out.clear();
            for o in 0..n_out {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut z = b[o];
                for &i in &trace.active {
                    z += row[i] * input[i];
                }
                out.push(if l + 1 < layers && z <= 0.0 { 0.0 } else { z });
            }
        }
        Ok(&trace.acts[layers])
    }

    /// Convenience forward pass with a throwaway trace.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = Trace::default();
        Ok(self.forward(x, &mut trace)?.to_vec())
    }

    /// Accumulate `d_out^T * d(output)/d(params)` into `grad` for the sample
    /// recorded in `trace`.
    pub fn backward(&self, trace: &mut Trace, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        debug_assert_eq!(d_out.len(), self.output_dim());
        let layers = self.n_layers();
        trace.delta.clear();
        trace.delta.extend_from_slice(d_out);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w_off = self.offsets[l];
            let b_off = w_off + n_in * n_out;
            let input = &trace.acts[l];
            trace.active.clear();
            trace.active.extend((0..n_in).filter(|&i| input[i] != 0.0));
            for o in 0..n_out {
                let d = trace.delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                for &i in &trace.active {
                    row[i] += d * input[i];
                }
                grad[b_off + o] += d;
            }
            if l == 0 {
                break;
            }
            // Hidden inputs are rectifier outputs: only positive units pass
            // gradient.
            trace.delta_prev.clear();
            trace.delta_prev.resize(n_in, 0.0);
            let w = &self.params[w_off..b_off];
            for o in 0..n_out {
                let d = trace.delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for &i in &trace.active {
                    trace.delta_prev[i] += row[i] * d;
                }
            }
            core::mem::swap(&mut trace.delta, &mut trace.delta_prev);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn hand_evaluated_one_unit_network() {
        // w1 = 1, b1 = 0, w2 = 2, b2 = 0.5; input 3 -> relu(3) * 2 + 0.5
        let m = Mlp::from_params(&[1, 1, 1], vec![1.0, 0.0, 2.0, 0.5]).unwrap();
        assert_eq!(m.predict(&[3.0]).unwrap(), vec![6.5]);
        assert_eq!(m.predict(&[-3.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn zero_weights_output_final_bias() {
        let mut m = Mlp::zeros(&[4, 8, 8, 1]).unwrap();
        let n = m.n_params();
        m.params_mut()[n - 1] = -1.25;
        for x in [[0.0; 4], [1.0, -2.0, 3.0, 4.0]] {
            assert_eq!(m.predict(&x).unwrap(), vec![-1.25]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = Mlp::zeros(&[3, 2, 1]).unwrap();
        assert_eq!(
            m.predict(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        );
        assert!(Mlp::from_params(&[3, 2, 1], vec![0.0; 3]).is_err());
        assert!(Mlp::zeros(&[3]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = seed::rng(17);
        let m = Mlp::init(&[5, 7, 6, 3], &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let d_out = [0.3, -1.1, 0.7];
        let mut trace = Trace::default();
        m.forward(&x, &mut trace).unwrap();
        let mut grad = vec![0.0; m.n_params()];
        m.backward(&mut trace, &d_out, &mut grad);
        let f = |p: &[f64]| {
            let mm = Mlp::from_params(m.widths(), p.to_vec()).unwrap();
            let y = mm.predict(&x).unwrap();
            y.iter().zip(&d_out).map(|(a, b)| a * b).sum::<f64>()
        };
        let h = 1e-6;
        for k in 0..m.n_params() {
            let mut p = m.params().to_vec();
            p[k] += h;
            let up = f(&p);
            p[k] -= 2.0 * h;
            let down = f(&p);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", grad[k]);
        }
    }
}
