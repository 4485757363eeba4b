use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;

/// Negative-side slope of the hidden activation.
pub const LEAKY_SLOPE: f64 = 0.01;

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    LeakyRelu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::LeakyRelu => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::LeakyRelu),
            _ => None,
        }
    }
}

/// One affine layer; `w` is `fan_in x fan_out` so a batch is `x.dot(w) + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T: Real = f64> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

/// Fully connected network: affine + leaky ReLU per hidden layer, linear output.
///
/// The same type stores gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T: Real = f64> {
    pub layers: Vec<Dense<T>>,
    pub activation: Activation,
}

/// Intermediate values of a batched forward pass needed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache<T: Real> {
    /// Layer inputs: the network input followed by each hidden activation.
    inputs: Vec<Array2<T>>,
}

impl<T: Real> Mlp<T> {
    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "network widths must have length >= 2 and be positive, got {widths:?}"
            )));
        }
        Ok(())
    }

    /// All-zero network of the given layer widths.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        Self::check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|p| Dense {
                w: Array2::zeros((p[0], p[1])),
                b: Array1::zeros(p[1]),
            })
            .collect();
        Ok(Mlp { layers, activation })
    }

    /// He-style uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_widths(widths)?;
        let layers = widths
            .windows(2)
            .map(|p| {
                let bound = T::of((6.0 / p[0] as f64).sqrt());
                let w = Array2::from_shape_simple_fn((p[0], p[1]), || {
                    bound * (T::of(2.0) * T::unit_uniform(rng) - T::one())
                });
                Dense {
                    w,
                    b: Array1::zeros(p[1]),
                }
            })
            .collect();
        Ok(Mlp {
            layers,
            activation: Activation::LeakyRelu,
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense {
                    w: Array2::zeros(l.w.raw_dim()),
                    b: Array1::zeros(l.b.raw_dim()),
                })
                .collect(),
            activation: self.activation,
        }
    }

    pub fn from_layers(layers: Vec<Dense<T>>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "network needs at least one layer".into(),
            ));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.b.len() != l.w.ncols() {
                return Err(Error::ShapeMismatch {
                    expected: l.w.ncols(),
                    got: l.b.len(),
                });
            }
            if i > 0 && layers[i - 1].w.ncols() != l.w.nrows() {
                return Err(Error::ShapeMismatch {
                    expected: layers[i - 1].w.ncols(),
                    got: l.w.nrows(),
                });
            }
        }
        Ok(Mlp { layers, activation })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].w.nrows()];
        w.extend(self.layers.iter().map(|l| l.w.ncols()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.ncols()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// All parameters in layer order, each weight matrix row-major then its bias.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.w.iter().copied());
            out.extend(l.b.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::ShapeMismatch {
                expected: self.n_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut()
                .for_each(|v| *v = it.next().expect("length checked"));
            l.b.iter_mut()
                .for_each(|v| *v = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// `self += alpha * other` over every parameter.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (l, o) in self.layers.iter_mut().zip(&other.layers) {
            l.w.scaled_add(alpha, &o.w);
            l.b.scaled_add(alpha, &o.b);
        }
    }

    fn activate(&self, z: &mut Array2<T>) {
        let slope = T::of(LEAKY_SLOPE);
        z.mapv_inplace(|v| if v > T::zero() { v } else { v * slope });
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.w);
            z += &l.b;
            if i < last {
                self.activate(&mut z);
            }
            inputs.push(a);
            a = z;
        }
        Ok((a, ForwardCache { inputs }))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = a.dot(&l.w);
            z += &l.b;
            if i < last {
                self.activate(&mut z);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward(&self, input: &[T]) -> Result<Vec<T>> {
        let x =
            ArrayView2::from_shape((1, input.len()), input).map_err(|_| Error::ShapeMismatch {
                expected: self.input_dim(),
                got: input.len(),
            })?;
        Ok(self.predict(x)?.into_raw_vec_and_offset().0)
    }

    /// Reverse-mode pass: parameter gradients and the gradient w.r.t. the input.
    ///
    /// `upstream` is dL/d(output) for every row of the batch.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        upstream: ArrayView2<T>,
    ) -> Result<(Mlp<T>, Array2<T>)> {
        let batch = cache.inputs[0].nrows();
        if upstream.nrows() != batch || upstream.ncols() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                expected: batch * self.output_dim(),
                got: upstream.len(),
            });
        }
        let slope = T::of(LEAKY_SLOPE);
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.to_owned();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let a = &cache.inputs[i];
            let dw = a.t().dot(&g);
            let db = g.sum_axis(Axis(0));
            grads.push(Dense { w: dw, b: db });
            let mut gin = g.dot(&l.w.t());
            if i > 0 {
                // a = leaky(z): a > 0 exactly when z > 0
                ndarray::Zip::from(&mut gin).and(a).for_each(|gv, &av| {
                    if av <= T::zero() {
                        *gv *= slope;
                    }
                });
            }
            g = gin;
        }
        grads.reverse();
        Ok((
            Mlp {
                layers: grads,
                activation: self.activation,
            },
            g,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn init_shapes_and_determinism() {
        let a = Mlp::<f64>::init(&[12, 256, 3], &mut rng(1)).unwrap();
        let b = Mlp::<f64>::init(&[12, 256, 3], &mut rng(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.widths(), vec![12, 256, 3]);
        assert_eq!(a.forward(&[0.5; 12]).unwrap().len(), 3);
        assert!(a.forward(&[0.5; 11]).is_err());
        assert!(Mlp::<f64>::init(&[3], &mut rng(1)).is_err());
    }

    #[test]
    fn zero_input_gives_bias_path() {
        let a = Mlp::<f64>::init(&[5, 16, 16, 2], &mut rng(2)).unwrap();
        assert_eq!(a.forward(&[0.0; 5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn hand_computed_affine() {
        let net = Mlp::from_layers(
            vec![Dense {
                w: arr2(&[[1.0, 2.0], [0.0, -1.0]]),
                b: arr1(&[0.5, 0.25]),
            }],
            Activation::LeakyRelu,
        )
        .unwrap();
        assert_eq!(net.forward(&[3.0, 4.0]).unwrap(), vec![3.5, 2.25]);
    }

    #[test]
    fn leaky_negative_side() {
        let net = Mlp::from_layers(
            vec![
                Dense {
                    w: arr2(&[[1.0f64]]),
                    b: arr1(&[0.0]),
                },
                Dense {
                    w: arr2(&[[1.0f64]]),
                    b: arr1(&[0.0]),
                },
            ],
            Activation::LeakyRelu,
        )
        .unwrap();
        assert!((net.forward(&[-1.0]).unwrap()[0] + 0.01).abs() < 1e-15);
        assert!((net.forward(&[-7.0]).unwrap()[0] + 0.07).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_bound_from_weight_norms() {
        let net = Mlp::<f64>::init(&[6, 32, 32, 3], &mut rng(3)).unwrap();
        // product of Frobenius norms bounds the Lipschitz constant (slope <= 1)
        let lip: f64 = net
            .layers
            .iter()
            .map(|l| l.w.iter().map(|v| v * v).sum::<f64>().sqrt())
            .product();
        let mut r = rng(4);
        for _ in 0..20 {
            let x: Vec<f64> = (0..6).map(|_| r.random::<f64>() - 0.5).collect();
            let dx: Vec<f64> = (0..6).map(|_| 1e-4 * (r.random::<f64>() - 0.5)).collect();
            let xp: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let y = net.forward(&x).unwrap();
            let yp = net.forward(&xp).unwrap();
            let dy = y
                .iter()
                .zip(&yp)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let dxn = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(dy <= lip * dxn * (1.0 + 1e-9));
        }
    }

    fn loss(net: &Mlp<f64>, x: &Array2<f64>, c: &Array2<f64>) -> f64 {
        let y = net.predict(x.view()).unwrap();
        (&y * c).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng(5);
        for trial in 0..100 {
            let net = Mlp::<f64>::init(&[4, 8, 3], &mut r).unwrap();
            let x = Array2::from_shape_simple_fn((3, 4), || r.random::<f64>() * 2.0 - 1.0);
            let c = Array2::from_shape_simple_fn((3, 3), || r.random::<f64>() * 2.0 - 1.0);
            let (_, cache) = net.forward_batch(x.view()).unwrap();
            let (grads, gin) = net.backward(&cache, c.view()).unwrap();
            let h = 1e-5;
            let flat = net.to_flat();
            let gflat = grads.to_flat();
            for k in 0..flat.len() {
                let mut p = net.clone();
                let mut f = flat.clone();
                f[k] += h;
                p.set_flat(&f).unwrap();
                let up = loss(&p, &x, &c);
                f[k] -= 2.0 * h;
                p.set_flat(&f).unwrap();
                let dn = loss(&p, &x, &c);
                let fd = (up - dn) / (2.0 * h);
                let scale = fd.abs().max(gflat[k].abs()).max(1e-3);
                assert!(
                    (fd - gflat[k]).abs() / scale < 1e-5,
                    "trial {trial} param {k}"
                );
            }
            for i in 0..3 {
                for j in 0..4 {
                    let mut xp = x.clone();
                    xp[[i, j]] += h;
                    let up = loss(&net, &xp, &c);
                    xp[[i, j]] -= 2.0 * h;
                    let dn = loss(&net, &xp, &c);
                    let fd = (up - dn) / (2.0 * h);
                    let scale = fd.abs().max(1e-3);
                    assert!((fd - gin[[i, j]]).abs() / scale < 1e-5);
                }
            }
        }
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let net = Mlp::<f64>::init(&[4, 8, 3], &mut rng(6)).unwrap();
        let x = Array2::from_elem((2, 4), 0.3);
        let (_, cache) = net.forward_batch(x.view()).unwrap();
        let (g, gin) = net.backward(&cache, Array2::zeros((2, 3)).view()).unwrap();
        assert!(g.to_flat().iter().all(|v| *v == 0.0));
        assert!(gin.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn last_bias_gradient_of_sum_is_ones() {
        let net = Mlp::<f64>::init(&[4, 8, 3], &mut rng(7)).unwrap();
        let x = Array2::from_elem((1, 4), -0.2);
        let (_, cache) = net.forward_batch(x.view()).unwrap();
        let (g, _) = net.backward(&cache, Array2::ones((1, 3)).view()).unwrap();
        assert_eq!(g.layers[1].b, arr1(&[1.0, 1.0, 1.0]));
    }

    #[test]
    fn flat_round_trip() {
        let net = Mlp::<f32>::init(&[3, 5, 2], &mut rng(8)).unwrap();
        let mut other = net.zeros_like();
        other.set_flat(&net.to_flat()).unwrap();
        assert_eq!(net, other);
        assert!(other.set_flat(&[0.0; 3]).is_err());
    }
}
