//! Recurrent policy network: one LSTM layer fed with the normalized time,
//! a tanh dense layer and a two-unit tanh head producing the Gaussian means
//! `(mu_dp, mu_d)` for every control step.
//!
//! All parameters live in one flat vector so that the optimizer and the
//! finite-difference checks can treat them uniformly. Gate order inside the
//! LSTM blocks is input, forget, candidate, output.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::PolicyError;
use crate::scalar::Real;

pub const N_OUTPUTS: usize = 2;

/// Named block of the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub lstm_units: usize,
    pub dense_units: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            lstm_units: 50,
            dense_units: 30,
        }
    }
}

impl Architecture {
    /// Parameter blocks in storage order.
    pub fn blocks(&self) -> Vec<ParamBlock> {
        let h = self.lstm_units;
        let d = self.dense_units;
        let shapes: [(&str, Vec<usize>); 7] = [
            ("lstm_input_kernel", vec![4 * h]),
            ("lstm_recurrent_kernel", vec![4 * h, h]),
            ("lstm_bias", vec![4 * h]),
            ("dense_kernel", vec![d, h]),
            ("dense_bias", vec![d]),
            ("head_kernel", vec![N_OUTPUTS, d]),
            ("head_bias", vec![N_OUTPUTS]),
        ];
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(name, shape)| {
                let block = ParamBlock {
                    name: name.to_string(),
                    shape,
                    offset,
                };
                offset += block.len();
                block
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(ParamBlock::len).sum()
    }

    fn offsets(&self) -> Offsets {
        let b = self.blocks();
        Offsets {
            w_in: b[0].offset,
            w_rec: b[1].offset,
            b_lstm: b[2].offset,
            w_dense: b[3].offset,
            b_dense: b[4].offset,
            w_head: b[5].offset,
            b_head: b[6].offset,
        }
    }
}

#[derive(Clone, Copy)]
struct Offsets {
    w_in: usize,
    w_rec: usize,
    b_lstm: usize,
    w_dense: usize,
    b_dense: usize,
    w_head: usize,
    b_head: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PolicyNetwork<T> {
    arch: Architecture,
    params: Vec<T>,
    /// Fixed standard deviations `(sigma_dp, sigma_d)` in normalized action units.
    sigma: (T, T),
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    inputs: Vec<T>,
    /// Post-activation gates per step, `4H` each.
    gates: Vec<Vec<T>>,
    cells: Vec<Vec<T>>,
    hidden: Vec<Vec<T>>,
    dense: Vec<Vec<T>>,
    means: Vec<(T, T)>,
}

impl<T: Real> ForwardCache<T> {
    pub fn means(&self) -> &[(T, T)] {
        &self.means
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> PolicyNetwork<T> {
    /// Network with all weights and biases zero.
    pub fn zeros(arch: Architecture, sigma: (T, T)) -> Result<Self, PolicyError> {
        Self::from_params(arch, vec![T::zero(); arch.n_params()], sigma)
    }

    /// Weights drawn uniformly from `[-scale, scale]`, biases zero except
    /// the forget gate bias, which starts at one.
    pub fn random<R: Rng + ?Sized>(
        arch: Architecture,
        sigma: (T, T),
        scale: T,
        rng: &mut R,
    ) -> Result<Self, PolicyError> {
        let s = scale.to_f64_lossy();
        let h = arch.lstm_units;
        let mut params = vec![T::zero(); arch.n_params()];
        for block in arch.blocks() {
            let dst = &mut params[block.offset..block.offset + block.len()];
            if block.name.ends_with("bias") {
                if block.name == "lstm_bias" && h > 0 {
                    dst[h..2 * h].fill(T::one());
                }
            } else {
                for p in dst.iter_mut() {
                    *p = T::lit(rng.random_range(-s..=s));
                }
            }
        }
        Self::from_params(arch, params, sigma)
    }

    pub fn from_params(
        arch: Architecture,
        params: Vec<T>,
        sigma: (T, T),
    ) -> Result<Self, PolicyError> {
        if arch.lstm_units == 0 || arch.dense_units == 0 {
            return Err(PolicyError::InvalidArchitecture);
        }
        if params.len() != arch.n_params() {
            return Err(PolicyError::ParameterCount {
                expected: arch.n_params(),
                got: params.len(),
            });
        }
        if !(sigma.0 > T::zero() && sigma.1 > T::zero()) {
            return Err(PolicyError::InvalidSigma);
        }
        Ok(Self {
            arch,
            params,
            sigma,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn sigma(&self) -> (T, T) {
        self.sigma
    }

    /// Values of the named parameter block.
    pub fn block(&self, name: &str) -> Option<&[T]> {
        self.arch
            .blocks()
            .into_iter()
            .find(|b| b.name == name)
            .map(|b| &self.params[b.offset..b.offset + b.len()])
    }

    pub fn means(&self, times: &[T]) -> Result<Vec<(T, T)>, PolicyError> {
        Ok(self.forward(times)?.means)
    }

    /// Runs the network over the time sequence from zero hidden and cell state.
    pub fn forward(&self, times: &[T]) -> Result<ForwardCache<T>, PolicyError> {
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(PolicyError::NonFinite);
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(PolicyError::TimesNotIncreasing);
        }
        let h_units = self.arch.lstm_units;
        let d_units = self.arch.dense_units;
        let o = self.arch.offsets();
        let p = &self.params;
        let n = times.len();
        let mut cache = ForwardCache {
            inputs: times.to_vec(),
            gates: Vec::with_capacity(n),
            cells: Vec::with_capacity(n),
            hidden: Vec::with_capacity(n),
            dense: Vec::with_capacity(n),
            means: Vec::with_capacity(n),
        };
        let mut h_prev = vec![T::zero(); h_units];
        let mut c_prev = vec![T::zero(); h_units];
        for &x in times {
            let mut gates = vec![T::zero(); 4 * h_units];
            for (r, g) in gates.iter_mut().enumerate() {
                let row = &p[o.w_rec + r * h_units..o.w_rec + (r + 1) * h_units];
                let rec: T = row.iter().zip(&h_prev).map(|(w, h)| *w * *h).sum();
                *g = p[o.w_in + r] * x + rec + p[o.b_lstm + r];
            }
            for k in 0..h_units {
                gates[k] = sigmoid(gates[k]);
                gates[h_units + k] = sigmoid(gates[h_units + k]);
                gates[2 * h_units + k] = gates[2 * h_units + k].tanh();
                gates[3 * h_units + k] = sigmoid(gates[3 * h_units + k]);
            }
            let mut cell = vec![T::zero(); h_units];
            let mut hidden = vec![T::zero(); h_units];
            for k in 0..h_units {
                cell[k] = gates[h_units + k] * c_prev[k] + gates[k] * gates[2 * h_units + k];
                hidden[k] = gates[3 * h_units + k] * cell[k].tanh();
            }
            let dense: Vec<T> = (0..d_units)
                .map(|r| {
                    let row = &p[o.w_dense + r * h_units..o.w_dense + (r + 1) * h_units];
                    let s: T = row.iter().zip(&hidden).map(|(w, h)| *w * *h).sum();
                    (s + p[o.b_dense + r]).tanh()
                })
                .collect();
            let head = |r: usize| {
                let row = &p[o.w_head + r * d_units..o.w_head + (r + 1) * d_units];
                let s: T = row.iter().zip(&dense).map(|(w, z)| *w * *z).sum();
                (s + p[o.b_head + r]).tanh()
            };
            cache.means.push((head(0), head(1)));
            h_prev.clone_from(&hidden);
            c_prev.clone_from(&cell);
            cache.gates.push(gates);
            cache.cells.push(cell);
            cache.hidden.push(hidden);
            cache.dense.push(dense);
        }
        Ok(cache)
    }

    /// Backpropagation through time of `dL/dmu` for every step into the
    /// gradient with respect to the flat parameter vector.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        d_means: &[(T, T)],
    ) -> Result<Vec<T>, PolicyError> {
        let n = cache.means.len();
        if d_means.len() != n {
            return Err(PolicyError::LengthMismatch {
                expected: n,
                got: d_means.len(),
            });
        }
        let h_units = self.arch.lstm_units;
        let d_units = self.arch.dense_units;
        let o = self.arch.offsets();
        let p = &self.params;
        let one = T::one();
        let mut grad = vec![T::zero(); p.len()];
        let mut dh_next = vec![T::zero(); h_units];
        let mut dc_next = vec![T::zero(); h_units];
        let zeros = vec![T::zero(); h_units];
        for t in (0..n).rev() {
            let (mu_dp, mu_d) = cache.means[t];
            let d_pre_head = [
                d_means[t].0 * (one - mu_dp * mu_dp),
                d_means[t].1 * (one - mu_d * mu_d),
            ];
            let z = &cache.dense[t];
            let mut dz = vec![T::zero(); d_units];
            for (r, &dp) in d_pre_head.iter().enumerate() {
                grad[o.b_head + r] += dp;
                for k in 0..d_units {
                    grad[o.w_head + r * d_units + k] += dp * z[k];
                    dz[k] += dp * p[o.w_head + r * d_units + k];
                }
            }
            let h = &cache.hidden[t];
            let mut dh = dh_next.clone();
            for r in 0..d_units {
                let dpre = dz[r] * (one - z[r] * z[r]);
                grad[o.b_dense + r] += dpre;
                for k in 0..h_units {
                    grad[o.w_dense + r * h_units + k] += dpre * h[k];
                    dh[k] += dpre * p[o.w_dense + r * h_units + k];
                }
            }
            let gates = &cache.gates[t];
            let c = &cache.cells[t];
            let c_prev = if t > 0 { &cache.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &cache.hidden[t - 1] } else { &zeros };
            let mut d_pre = vec![T::zero(); 4 * h_units];
            for k in 0..h_units {
                let (ig, fg, gg, og) = (
                    gates[k],
                    gates[h_units + k],
                    gates[2 * h_units + k],
                    gates[3 * h_units + k],
                );
                let tc = c[k].tanh();
                let dc = dc_next[k] + dh[k] * og * (one - tc * tc);
                d_pre[k] = dc * gg * ig * (one - ig);
                d_pre[h_units + k] = dc * c_prev[k] * fg * (one - fg);
                d_pre[2 * h_units + k] = dc * ig * (one - gg * gg);
                d_pre[3 * h_units + k] = dh[k] * tc * og * (one - og);
                dc_next[k] = dc * fg;
            }
            let x = cache.inputs[t];
            for v in dh_next.iter_mut() {
                *v = T::zero();
            }
            for (r, &dp) in d_pre.iter().enumerate() {
                grad[o.w_in + r] += dp * x;
                grad[o.b_lstm + r] += dp;
                let base = o.w_rec + r * h_units;
                for k in 0..h_units {
                    grad[base + k] += dp * h_prev[k];
                    dh_next[k] += dp * p[base + k];
                }
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn times(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / n as f64).collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = PolicyNetwork::<f64>::zeros(Architecture::default(), (0.07, 0.07)).unwrap();
        let means = net.means(&times(40)).unwrap();
        assert_eq!(means.len(), 40);
        assert!(means.iter().all(|&(a, b)| a == 0.0 && b == 0.0));
    }

    #[test]
    fn parameter_layout() {
        let arch = Architecture::default();
        // 4H + 4H*H + 4H + D*H + D + 2D + 2
        assert_eq!(arch.n_params(), 200 + 10000 + 200 + 1500 + 30 + 60 + 2);
        let blocks = arch.blocks();
        assert_eq!(blocks[1].shape, vec![200, 50]);
        assert_eq!(blocks.last().unwrap().offset + 2, arch.n_params());
    }

    #[test]
    fn saturated_forget_gate_holds_state() {
        // one unit: forget gate ~1, input gate ~0, output gate ~1
        let arch = Architecture {
            lstm_units: 1,
            dense_units: 1,
        };
        let mut net = PolicyNetwork::<f64>::zeros(arch, (0.1, 0.1)).unwrap();
        let blocks = arch.blocks();
        let bias = blocks[2].offset;
        {
            let p = net.params_mut();
            p[bias] = -30.0; // input
            p[bias + 1] = 30.0; // forget
            p[bias + 2] = 0.0; // candidate
            p[bias + 3] = 30.0; // output
            p[blocks[3].offset] = 1.0;
            p[blocks[5].offset] = 1.0;
            p[blocks[5].offset + 1] = -1.0;
        }
        let cache = net.forward(&times(10)).unwrap();
        // c stays at its zero initial value, so every mean is tanh(tanh(0)) = 0
        let first = cache.means()[0];
        assert!(cache.means().iter().all(|m| (m.0 - first.0).abs() < 1e-12));

        // now let the first step write 1 into the cell via a strong input
        // gate that shuts off afterwards: c_0 = sigmoid(30 - 600 x) * tanh(20)
        let p = net.params_mut();
        p[bias] = 30.0;
        p[blocks[0].offset] = -600.0;
        p[bias + 2] = 20.0;
        let cache = net.forward(&times(10)).unwrap();
        let want_c = 1.0 / (1.0 + (-30f64).exp()) * 20f64.tanh();
        let want_h = (1.0 / (1.0 + (-30f64).exp())) * want_c.tanh();
        let want_mu = (want_h.tanh()).tanh();
        for m in cache.means() {
            assert!((m.0 - want_mu).abs() < 1e-9, "{} vs {want_mu}", m.0);
            assert!((m.1 + want_mu).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let arch = Architecture {
            lstm_units: 2,
            dense_units: 2,
        };
        assert!(matches!(
            PolicyNetwork::<f64>::from_params(arch, vec![0.0; 3], (0.1, 0.1)),
            Err(PolicyError::ParameterCount { .. })
        ));
        assert!(matches!(
            PolicyNetwork::<f64>::zeros(arch, (0.0, 0.1)),
            Err(PolicyError::InvalidSigma)
        ));
        let mut net = PolicyNetwork::<f64>::zeros(arch, (0.1, 0.1)).unwrap();
        assert!(matches!(
            net.forward(&[0.2, 0.1]),
            Err(PolicyError::TimesNotIncreasing)
        ));
        net.params_mut()[0] = f64::NAN;
        assert!(matches!(net.forward(&[0.0]), Err(PolicyError::NonFinite)));
    }

    fn weighted_output(net: &PolicyNetwork<f64>, ts: &[f64], w: &[(f64, f64)]) -> f64 {
        net.means(ts)
            .unwrap()
            .iter()
            .zip(w)
            .map(|(m, w)| m.0 * w.0 + m.1 * w.1)
            .sum()
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let arch = Architecture {
            lstm_units: 4,
            dense_units: 3,
        };
        let params = (0..arch.n_params())
            .map(|_| rng.random_range(-0.8..0.8))
            .collect();
        let net = PolicyNetwork::from_params(arch, params, (0.1, 0.1)).unwrap();
        let ts = times(6);
        let w: Vec<(f64, f64)> = (0..6)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let cache = net.forward(&ts).unwrap();
        let grad = net.backward(&cache, &w).unwrap();
        let step = 1e-6;
        for i in 0..net.params().len() {
            let mut plus = net.clone();
            plus.params_mut()[i] += step;
            let mut minus = net.clone();
            minus.params_mut()[i] -= step;
            let fd =
                (weighted_output(&plus, &ts, &w) - weighted_output(&minus, &ts, &w)) / (2.0 * step);
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(err < 1e-5, "param {i}: fd {fd} bptt {}", grad[i]);
        }
    }

    #[test]
    fn random_init_conventions() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let arch = Architecture {
            lstm_units: 3,
            dense_units: 2,
        };
        let net = PolicyNetwork::<f64>::random(arch, (0.1, 0.1), 0.1, &mut rng).unwrap();
        assert_eq!(
            net.block("lstm_bias").unwrap(),
            &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
        assert!(net.block("head_bias").unwrap().iter().all(|b| *b == 0.0));
        let w = net.block("lstm_recurrent_kernel").unwrap();
        assert!(w.iter().all(|x| x.abs() <= 0.1) && w.iter().any(|x| *x != 0.0));
    }

    #[test]
    fn single_precision_forward() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let net =
            PolicyNetwork::<f32>::random(Architecture::default(), (0.07, 0.07), 0.1, &mut rng)
                .unwrap();
        let means = net.means(&[0.0, 0.5, 1.0]).unwrap();
        assert!(means.iter().all(|m| m.0.abs() < 1.0 && m.1.abs() < 1.0));
    }
}
