use super::tape::Var;
use crate::error::{Error, Result};
use crate::tensor::{matmul_into, Tensor};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside [`Var::bce_loss`].
pub const BCE_CLAMP: f64 = 1e-6;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

impl<'t> Var<'t> {
    fn same_shape(&self, other: &Var<'t>, op: &'static str) -> Result<()> {
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(mismatch(op, &a, &b));
        }
        Ok(())
    }

    /// Elementwise map with derivative `df(x, f(x))`.
    fn elementwise(
        &self,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64, f64) -> f64 + 'static,
    ) -> Var<'t> {
        let value = self.with_value(|t| t.map(&f));
        self.tape.custom(
            &[*self],
            value,
            Box::new(move |g, inputs, out| {
                let data = g
                    .data()
                    .iter()
                    .zip(inputs[0].data())
                    .zip(out.data())
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
            }),
        )
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "add")?;
        let value = self.with_value(|a| other.with_value(|b| a.zip_map(b, |x, y| x + y)))?;
        Ok(self.tape.custom(
            &[*self, *other],
            value,
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.clone())]),
        ))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "sub")?;
        let value = self.with_value(|a| other.with_value(|b| a.zip_map(b, |x, y| x - y)))?;
        Ok(self.tape.custom(
            &[*self, *other],
            value,
            Box::new(|g, _, _| vec![Some(g.clone()), Some(g.scale(-1.0))]),
        ))
    }

    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(other, "mul")?;
        let value = self.with_value(|a| other.with_value(|b| a.zip_map(b, |x, y| x * y)))?;
        Ok(self.tape.custom(
            &[*self, *other],
            value,
            Box::new(|g, inputs, _| {
                let ga = g.zip_map(inputs[1], |g, b| g * b).unwrap();
                let gb = g.zip_map(inputs[0], |g, a| g * a).unwrap();
                vec![Some(ga), Some(gb)]
            }),
        ))
    }

    /// Elementwise product with a constant of the same shape.
    pub fn mul_const(&self, c: &Tensor) -> Result<Var<'t>> {
        let value = self.with_value(|a| a.zip_map(c, |x, y| x * y))?;
        let c = c.clone();
        Ok(self.tape.custom(
            &[*self],
            value,
            Box::new(move |g, _, _| vec![Some(g.zip_map(&c, |g, c| g * c).unwrap())]),
        ))
    }

    pub fn add_const(&self, c: &Tensor) -> Result<Var<'t>> {
        let value = self.with_value(|a| a.zip_map(c, |x, y| x + y))?;
        Ok(self
            .tape
            .custom(&[*self], value, Box::new(|g, _, _| vec![Some(g.clone())])))
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        self.elementwise(move |x| x + c, |_, _| 1.0)
    }

    pub fn mul_scalar(&self, c: f64) -> Var<'t> {
        self.elementwise(move |x| x * c, move |_, _| c)
    }

    pub fn neg(&self) -> Var<'t> {
        self.mul_scalar(-1.0)
    }

    pub fn square(&self) -> Var<'t> {
        self.elementwise(|x| x * x, |x, _| 2.0 * x)
    }

    pub fn exp(&self) -> Var<'t> {
        self.elementwise(f64::exp, |_, y| y)
    }

    pub fn ln(&self) -> Var<'t> {
        self.elementwise(f64::ln, |x, _| 1.0 / x)
    }

    pub fn sigmoid(&self) -> Var<'t> {
        self.elementwise(sigmoid, |_, s| s * (1.0 - s))
    }

    /// `ln(1 + e^x)` via the stable branch `max(x, 0) + ln(1 + e^-|x|)`.
    pub fn softplus(&self) -> Var<'t> {
        self.elementwise(softplus, |x, _| sigmoid(x))
    }

    pub fn relu(&self) -> Var<'t> {
        self.elementwise(|x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    /// Clamp into `[lo, hi]`; zero gradient outside the window.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var<'t> {
        self.elementwise(
            move |x| x.clamp(lo, hi),
            move |x, _| if x < lo || x > hi { 0.0 } else { 1.0 },
        )
    }

    /// Multiplies every row (last axis) by the constant `row`.
    pub fn mul_row_const(&self, row: &[f64]) -> Result<Var<'t>> {
        let shape = self.shape();
        let m = shape.last().copied().unwrap_or(1);
        if shape.is_empty() || m != row.len() {
            return Err(mismatch("mul_row_const", &shape, &[row.len()]));
        }
        let row = row.to_vec();
        let apply = move |t: &Tensor, row: &[f64]| {
            let data = t
                .data()
                .chunks(row.len())
                .flat_map(|chunk| chunk.iter().zip(row).map(|(a, b)| a * b))
                .collect();
            Tensor::from_parts(t.shape().to_vec(), data)
        };
        let value = self.with_value(|t| apply(t, &row));
        Ok(self.tape.custom(
            &[*self],
            value,
            Box::new(move |g, _, _| vec![Some(apply(g, &row))]),
        ))
    }

    /// `[k] -> [k, r]` with `out[i, t] = self[i] * row[t]`.
    pub fn outer_const(&self, row: &[f64]) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != 1 {
            return Err(mismatch("outer_const", &shape, &[row.len()]));
        }
        let (k, r) = (shape[0], row.len());
        let row = row.to_vec();
        let value = self.with_value(|t| {
            let data = t
                .data()
                .iter()
                .flat_map(|&a| row.iter().map(move |&b| a * b))
                .collect();
            Tensor::from_parts(vec![k, r], data)
        });
        Ok(self.tape.custom(
            &[*self],
            value,
            Box::new(move |g, _, _| {
                let data = g
                    .data()
                    .chunks(r)
                    .map(|c| c.iter().zip(&row).map(|(g, b)| g * b).sum())
                    .collect();
                vec![Some(Tensor::from_parts(vec![k], data))]
            }),
        ))
    }

    /// Adds a `[m]` bias to each row of `[n, m]`.
    pub fn add_row(&self, bias: &Var<'t>) -> Result<Var<'t>> {
        let (shape, bshape) = (self.shape(), bias.shape());
        if shape.len() != 2 || bshape != [shape[1]] {
            return Err(mismatch("add_row", &shape, &bshape));
        }
        let m = shape[1];
        let value = self.with_value(|a| {
            bias.with_value(|b| {
                let data = a
                    .data()
                    .chunks(m)
                    .flat_map(|row| row.iter().zip(b.data()).map(|(x, y)| x + y))
                    .collect();
                Tensor::from_parts(a.shape().to_vec(), data)
            })
        });
        Ok(self.tape.custom(
            &[*self, *bias],
            value,
            Box::new(move |g, _, _| {
                let mut gb = vec![0.0; m];
                for row in g.data().chunks(m) {
                    for (acc, x) in gb.iter_mut().zip(row) {
                        *acc += x;
                    }
                }
                vec![Some(g.clone()), Some(Tensor::from_parts(vec![m], gb))]
            }),
        ))
    }

    pub fn sum(&self) -> Var<'t> {
        let value = Tensor::scalar(self.with_value(|t| t.sum()));
        self.tape.custom(
            &[*self],
            value,
            Box::new(|g, inputs, _| vec![Some(Tensor::full(inputs[0].shape(), g.item()))]),
        )
    }

    pub fn mean(&self) -> Var<'t> {
        let n = self.with_value(|t| t.len()) as f64;
        self.sum().mul_scalar(1.0 / n)
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        let value = self.with_value(|a| other.with_value(|b| a.matmul(b)))?;
        Ok(self.tape.custom(
            &[*self, *other],
            value,
            Box::new(|g, inputs, _| {
                let (a, b) = (inputs[0], inputs[1]);
                let (n, k, m) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let mut ga = vec![0.0; n * k];
                for i in 0..n {
                    let grow = &g.data()[i * m..(i + 1) * m];
                    for p in 0..k {
                        let brow = &b.data()[p * m..(p + 1) * m];
                        ga[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                    }
                }
                let at = a.transpose().unwrap();
                let mut gb = vec![0.0; k * m];
                matmul_into(at.data(), g.data(), &mut gb, k, n, m);
                vec![
                    Some(Tensor::from_parts(vec![n, k], ga)),
                    Some(Tensor::from_parts(vec![k, m], gb)),
                ]
            }),
        ))
    }

    pub fn transpose(&self) -> Result<Var<'t>> {
        let value = self.with_value(|t| t.transpose())?;
        Ok(self.tape.custom(
            &[*self],
            value,
            Box::new(|g, _, _| vec![Some(g.transpose().unwrap())]),
        ))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        Ok(self.tape.custom(
            &[*self],
            value,
            Box::new(|g, inputs, _| {
                vec![Some(g.clone().reshape(inputs[0].shape().to_vec()).unwrap())]
            }),
        ))
    }

    /// Flat gather: `out[i] = self[indices[i]]`, shaped as `shape`.
    pub fn gather(&self, indices: &[usize], shape: Vec<usize>) -> Result<Var<'t>> {
        if shape.iter().product::<usize>() != indices.len() {
            return Err(mismatch("gather", &shape, &[indices.len()]));
        }
        let n = self.with_value(|t| t.len());
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfBounds {
                tuple: vec![bad],
                dims: vec![n],
            });
        }
        let indices = indices.to_vec();
        let value = self.with_value(|t| {
            Tensor::from_parts(shape.clone(), indices.iter().map(|&i| t.data()[i]).collect())
        });
        Ok(self.tape.custom(
            &[*self],
            value,
            Box::new(move |g, inputs, _| {
                let mut out = Tensor::zeros(inputs[0].shape());
                for (&i, &gv) in indices.iter().zip(g.data()) {
                    out.data_mut()[i] += gv;
                }
                vec![Some(out)]
            }),
        ))
    }

    /// Concatenates `[b, m_i]` matrices along the column axis.
    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or_else(|| mismatch("concat_cols", &[], &[]))?;
        let rows = first.shape()[0];
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let s = p.shape();
                if s.len() != 2 || s[0] != rows {
                    Err(mismatch("concat_cols", &[rows], &s))
                } else {
                    Ok(s[1])
                }
            })
            .collect::<Result<_>>()?;
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            p.with_value(|t| {
                for r in 0..rows {
                    data[r * total + offset..r * total + offset + w]
                        .copy_from_slice(&t.data()[r * w..(r + 1) * w]);
                }
            });
            offset += w;
        }
        let value = Tensor::from_parts(vec![rows, total], data);
        Ok(first.tape.custom(
            parts,
            value,
            Box::new(move |g, _, _| {
                let mut offset = 0;
                widths
                    .iter()
                    .map(|&w| {
                        let mut out = vec![0.0; rows * w];
                        for r in 0..rows {
                            out[r * w..(r + 1) * w].copy_from_slice(
                                &g.data()[r * total + offset..r * total + offset + w],
                            );
                        }
                        offset += w;
                        Some(Tensor::from_parts(vec![rows, w], out))
                    })
                    .collect()
            }),
        ))
    }

    /// Divides each row of a `[k, n]` matrix by its sum.
    pub fn row_normalize(&self) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(mismatch("row_normalize", &shape, &[]));
        }
        let n = shape[1];
        let sums: Vec<f64> = self.with_value(|t| t.data().chunks(n).map(|r| r.iter().sum()).collect());
        if let Some(row) = sums.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::DegenerateRow { row });
        }
        let value = self.with_value(|t| {
            let data = t
                .data()
                .chunks(n)
                .zip(&sums)
                .flat_map(|(r, s)| r.iter().map(move |x| x / s))
                .collect();
            Tensor::from_parts(shape.clone(), data)
        });
        Ok(self.tape.custom(
            &[*self],
            value,
            Box::new(move |g, _, out| {
                // d(x_j / S)/dx_l = (δ_jl - y_j) / S
                let data = g
                    .data()
                    .chunks(n)
                    .zip(out.data().chunks(n))
                    .zip(&sums)
                    .flat_map(|((gr, yr), s)| {
                        let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                        gr.iter().map(move |gj| (gj - dot) / s)
                    })
                    .collect();
                vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
            }),
        ))
    }

    /// Mean squared error against `target`.
    pub fn mse_loss(&self, target: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(target, "mse_loss")?;
        let n = self.with_value(|t| t.len()) as f64;
        let value = self.with_value(|p| {
            target.with_value(|t| {
                p.data()
                    .iter()
                    .zip(t.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    / n
            })
        });
        Ok(self.tape.custom(
            &[*self, *target],
            Tensor::scalar(value),
            Box::new(move |g, inputs, _| {
                let scale = 2.0 * g.item() / n;
                let d = inputs[0].zip_map(inputs[1], |a, b| scale * (a - b)).unwrap();
                let neg = d.scale(-1.0);
                vec![Some(d), Some(neg)]
            }),
        ))
    }

    /// Binary cross-entropy, averaged. The prediction is clamped to
    /// `[BCE_CLAMP, 1 - BCE_CLAMP]` as part of the graph; the target also
    /// receives a gradient.
    pub fn bce_loss(&self, target: &Var<'t>) -> Result<Var<'t>> {
        self.same_shape(target, "bce_loss")?;
        let n = self.with_value(|t| t.len()) as f64;
        let clamp = |p: f64| p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
        let value = self.with_value(|p| {
            target.with_value(|t| {
                p.data()
                    .iter()
                    .zip(t.data())
                    .map(|(&p, &t)| {
                        let p = clamp(p);
                        -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                    })
                    .sum::<f64>()
                    / n
            })
        });
        Ok(self.tape.custom(
            &[*self, *target],
            Tensor::scalar(value),
            Box::new(move |g, inputs, _| {
                let s = g.item() / n;
                let gp = inputs[0]
                    .zip_map(inputs[1], |p, t| {
                        if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
                            0.0
                        } else {
                            s * (-(t / p) + (1.0 - t) / (1.0 - p))
                        }
                    })
                    .unwrap();
                let gt = inputs[0]
                    .zip_map(inputs[1], |p, _| {
                        let p = clamp(p);
                        s * -(p.ln() - (1.0 - p).ln())
                    })
                    .unwrap();
                vec![Some(gp), Some(gt)]
            }),
        ))
    }

    /// Softmax cross-entropy of `[b, c]` logits against integer labels, averaged over rows.
    pub fn cross_entropy(&self, labels: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(mismatch("cross_entropy", &shape, &[labels.len()]));
        }
        let (b, c) = (shape[0], shape[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::IndexOutOfBounds {
                tuple: vec![bad],
                dims: vec![c],
            });
        }
        let probs: Vec<f64> = self.with_value(|t| {
            t.data()
                .chunks(c)
                .flat_map(|row| {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
                    row.iter().map(move |x| (x - max).exp() / z).collect::<Vec<_>>()
                })
                .collect()
        });
        let loss = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -probs[i * c + l].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / b as f64;
        let labels = labels.to_vec();
        Ok(self.tape.custom(
            &[*self],
            Tensor::scalar(loss),
            Box::new(move |g, _, _| {
                let s = g.item() / b as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| p * s).collect();
                for (i, &l) in labels.iter().enumerate() {
                    d[i * c + l] -= s;
                }
                vec![Some(Tensor::from_parts(vec![b, c], d))]
            }),
        ))
    }
}
