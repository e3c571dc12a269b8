use rand::Rng;

use crate::error::{contract, Error, Result};

use super::{Element, ParamId, ParamStore, LAYER_NORM_EPS};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a * bᵀ`
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<T>,
        rstd: Vec<T>,
    },
    Gelu(Var),
    Dropout(Var, Vec<T>),
    Gather {
        table: Var,
        indices: Vec<usize>,
    },
    BiasGather {
        table: Var,
        row: usize,
        indices: Vec<usize>,
    },
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Sum(Var),
    SmoothedXent {
        logits: Var,
        probs: Vec<T>,
        targets: Vec<Option<usize>>,
        smoothing: T,
        normalizer: T,
    },
}

struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
}

/// Records a forward computation for one backward pass.
pub struct Tape<'p, T: Element> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    params: Vec<Option<Vec<T>>>,
    leaves: Vec<Option<Vec<T>>>,
}

impl<T: Element> Gradients<T> {
    /// Gradient of a parameter, `None` if the loss does not depend on it.
    pub fn param(&self, id: ParamId) -> Option<&[T]> {
        self.params.get(id.0).and_then(|g| g.as_deref())
    }

    /// Gradient of a constant leaf created with [`Tape::constant`].
    pub fn wrt(&self, var: Var) -> Option<&[T]> {
        self.leaves.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn into_params(self) -> Vec<Option<Vec<T>>> {
        self.params
    }
}

fn shape_err(op: &str, a: [usize; 2], b: [usize; 2]) -> Error {
    Error::Contract(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

// out[r x c] += a[r x k] * b[k x c]
fn gemm<T: Element>(a: &[T], b: &[T], out: &mut [T], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * c..(p + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

// out[r x c] += a[r x k] * b[c x k]ᵀ
fn gemm_bt<T: Element>(a: &[T], b: &[T], out: &mut [T], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..c {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                s += x * y;
            }
            out[i * c + j] += s;
        }
    }
}

// out[k x c] += a[r x k]ᵀ * b[r x c]
fn gemm_at<T: Element>(a: &[T], b: &[T], out: &mut [T], r: usize, k: usize, c: usize) {
    for i in 0..r {
        let brow = &b[i * c..(i + 1) * c];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * c..(p + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn softmax_rows<T: Element>(x: &[T], cols: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(cols) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        // f64 accumulation keeps f32 rows normalized to ~1 ulp
        let sum: f64 = exps.iter().map(|v| v.as_f64()).sum();
        let inv = T::lit(1.0 / sum);
        out.extend(exps.into_iter().map(|e| e * inv));
    }
    out
}

fn std_normal_cdf<T: Element>(x: T) -> T {
    T::lit(0.5) * (T::one() + (x * T::lit(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Exact GeLU `x * Φ(x)`.
pub(crate) fn gelu_scalar<T: Element>(x: T) -> T {
    x * std_normal_cdf(x)
}

fn add_into<T: Element>(slot: &mut Option<Vec<T>>, len: usize, f: impl FnOnce(&mut [T])) {
    let buf = slot.get_or_insert_with(|| vec![T::zero(); len]);
    f(buf);
}

impl<'p, T: Element> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        let n = &self.nodes[v.0];
        [n.rows, n.cols]
    }

    pub fn value(&self, v: Var) -> &[T] {
        let n = &self.nodes[v.0];
        match n.op {
            Op::Param(id) => &self.params.get(id).values,
            _ => &n.value,
        }
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<T>) -> Result<Var> {
        contract!(
            values.len() == rows * cols,
            "constant: {} values for shape [{rows}, {cols}]",
            values.len()
        );
        Ok(self.push(rows, cols, values, Op::Constant))
    }

    /// Node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let p = self.params.get(id);
        let (rows, cols) = (p.rows, p.cols);
        self.nodes.push(Node {
            rows,
            cols,
            value: Vec::new(),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([r, k], [k2, c]) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul", [r, k], [k2, c]));
        }
        let mut out = vec![T::zero(); r * c];
        gemm(self.value(a), self.value(b), &mut out, r, k, c);
        Ok(self.push(r, c, out, Op::MatMul(a, b)))
    }

    /// `a * bᵀ` without materializing the transpose.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let ([r, k], [c, k2]) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(shape_err("matmul_t", [r, k], [c, k2]));
        }
        let mut out = vec![T::zero(); r * c];
        gemm_bt(self.value(a), self.value(b), &mut out, r, k, c);
        Ok(self.push(r, c, out, Op::MatMulT(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let [r, c] = self.shape(a);
        let x = self.value(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = x[i * c + j];
            }
        }
        self.push(c, r, out, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("add", sa, sb));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(sa[0], sa[1], out, Op::Add(a, b)))
    }

    /// Add a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr != [1, sa[1]] {
            return Err(shape_err("add_row", sa, sr));
        }
        let r = self.value(row);
        let out = self
            .value(a)
            .chunks(sa[1].max(1))
            .flat_map(|xs| xs.iter().zip(r).map(|(&x, &y)| x + y))
            .collect();
        Ok(self.push(sa[0], sa[1], out, Op::AddRow(a, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("mul", sa, sb));
        }
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        Ok(self.push(sa[0], sa[1], out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let [r, c] = self.shape(a);
        let out = self.value(a).iter().map(|&x| x * s).collect();
        self.push(r, c, out, Op::Scale(a, s))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: Var) -> Var {
        let [r, c] = self.shape(a);
        let out = softmax_rows(self.value(a), c);
        self.push(r, c, out, Op::Softmax(a))
    }

    /// Row-wise layer normalization with `1 x c` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let [r, c] = self.shape(x);
        for v in [gain, bias] {
            if self.shape(v) != [1, c] {
                return Err(shape_err("layer_norm", [r, c], self.shape(v)));
            }
        }
        let eps = T::lit(LAYER_NORM_EPS);
        let cf = T::lit(c as f64);
        let mut normalized = Vec::with_capacity(r * c);
        let mut rstd = Vec::with_capacity(r);
        for row in self.value(x).chunks(c) {
            let mean = row.iter().copied().sum::<T>() / cf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cf;
            let s = T::one() / (var + eps).sqrt();
            rstd.push(s);
            normalized.extend(row.iter().map(|&v| (v - mean) * s));
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let out = normalized
            .chunks(c)
            .flat_map(|row| row.iter().zip(g).zip(b).map(|((&n, &g), &b)| n * g + b))
            .collect();
        Ok(self.push(
            r,
            c,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                rstd,
            },
        ))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let [r, c] = self.shape(a);
        let out = self.value(a).iter().map(|&x| gelu_scalar(x)).collect();
        self.push(r, c, out, Op::Gelu(a))
    }

    /// Inverted dropout. Returns `a` itself when not training or `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, train: bool, rng: &mut R) -> Result<Var> {
        contract!((0.0..1.0).contains(&rate), "dropout rate {rate} not in [0, 1)");
        if !train || rate == 0.0 {
            return Ok(a);
        }
        let [r, c] = self.shape(a);
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..r * c)
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let out = self.value(a).iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        Ok(self.push(r, c, out, Op::Dropout(a, mask)))
    }

    /// Rows of `table` selected by `indices`.
    pub fn embed(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let [v, d] = self.shape(table);
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(Error::Contract(format!("embedding index {bad} >= table rows {v}")));
        }
        let t = self.value(table);
        let out = indices
            .iter()
            .flat_map(|&i| t[i * d..(i + 1) * d].iter().copied())
            .collect();
        Ok(self.push(
            indices.len(),
            d,
            out,
            Op::Gather {
                table,
                indices: indices.to_vec(),
            },
        ))
    }

    /// `rows x cols` matrix whose entries are `table[row, indices[k]]`.
    pub fn bias_gather(&mut self, table: Var, row: usize, indices: &[usize], rows: usize, cols: usize) -> Result<Var> {
        let [h, p] = self.shape(table);
        contract!(row < h, "bias table row {row} >= {h}");
        contract!(
            indices.len() == rows * cols,
            "bias_gather: {} indices for [{rows}, {cols}]",
            indices.len()
        );
        if let Some(&bad) = indices.iter().find(|&&i| i >= p) {
            return Err(Error::Contract(format!("bias index {bad} >= table width {p}")));
        }
        let t = &self.value(table)[row * p..(row + 1) * p];
        let out = indices.iter().map(|&i| t[i]).collect();
        Ok(self.push(
            rows,
            cols,
            out,
            Op::BiasGather {
                table,
                row,
                indices: indices.to_vec(),
            },
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let [r, c] = self.shape(a);
        contract!(start + len <= c, "slice_cols {start}..{} of {c} columns", start + len);
        let x = self.value(a);
        let out = (0..r)
            .flat_map(|i| x[i * c + start..i * c + start + len].iter().copied())
            .collect();
        Ok(self.push(r, len, out, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        contract!(!parts.is_empty(), "concat_cols of nothing");
        let r = self.shape(parts[0])[0];
        for &p in parts {
            if self.shape(p)[0] != r {
                return Err(shape_err("concat_cols", self.shape(parts[0]), self.shape(p)));
            }
        }
        let c: usize = parts.iter().map(|&p| self.shape(p)[1]).sum();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for &p in parts {
                let pc = self.shape(p)[1];
                out.extend_from_slice(&self.value(p)[i * pc..(i + 1) * pc]);
            }
        }
        Ok(self.push(r, c, out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    /// Label-smoothed cross-entropy of row-wise logits against `targets`,
    /// summed over non-pad rows (`None`) and divided by `normalizer`.
    ///
    /// The smoothed target puts `1 - smoothing` on the gold token plus
    /// `smoothing / V` on every token.
    pub fn smoothed_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[Option<usize>],
        smoothing: f64,
        normalizer: f64,
    ) -> Result<Var> {
        let [m, v] = self.shape(logits);
        contract!(targets.len() == m, "{} targets for {m} logit rows", targets.len());
        contract!((0.0..=1.0).contains(&smoothing), "label smoothing {smoothing} not in [0, 1]");
        contract!(normalizer > 0.0, "loss normalizer must be positive");
        contract!(targets.iter().any(Option::is_some), "all target positions are padding");
        if let Some(&bad) = targets.iter().flatten().find(|&&t| t >= v) {
            return Err(Error::Contract(format!("target id {bad} >= vocabulary {v}")));
        }
        let x = self.value(logits);
        let probs = softmax_rows(x, v);
        let eps = T::lit(smoothing);
        let mut total = T::zero();
        for (i, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            let row = &x[i * v..(i + 1) * v];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = max + row.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
            let nll = lse - row[t];
            let mean_nll = lse - row.iter().copied().sum::<T>() / T::lit(v as f64);
            total += (T::one() - eps) * nll + eps * mean_nll;
        }
        let norm = T::lit(normalizer);
        Ok(self.push(
            1,
            1,
            vec![total / norm],
            Op::SmoothedXent {
                logits,
                probs,
                targets: targets.to_vec(),
                smoothing: eps,
                normalizer: norm,
            },
        ))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        contract!(
            self.shape(loss) == [1, 1],
            "backward needs a scalar loss, got shape {:?}",
            self.shape(loss)
        );
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);
        let mut param_grads: Vec<Option<Vec<T>>> = vec![None; self.params.len()];
        let mut leaves: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let (r, c) = (node.rows, node.cols);
            match &node.op {
                Op::Constant => leaves[idx] = Some(g),
                Op::Param(id) => param_grads[id.0] = Some(g),
                Op::MatMul(a, b) => {
                    let k = self.shape(*a)[1];
                    let (av, bv) = (self.value(*a), self.value(*b));
                    add_into(&mut grads[a.0], r * k, |ga| gemm_bt(&g, bv, ga, r, c, k));
                    add_into(&mut grads[b.0], k * c, |gb| gemm_at(av, &g, gb, r, k, c));
                }
                Op::MatMulT(a, b) => {
                    let k = self.shape(*a)[1];
                    let (av, bv) = (self.value(*a), self.value(*b));
                    add_into(&mut grads[a.0], r * k, |ga| gemm(&g, bv, ga, r, c, k));
                    add_into(&mut grads[b.0], c * k, |gb| gemm_at(&g, av, gb, r, c, k));
                }
                Op::Transpose(a) => add_into(&mut grads[a.0], r * c, |ga| {
                    for i in 0..r {
                        for j in 0..c {
                            ga[j * r + i] += g[i * c + j];
                        }
                    }
                }),
                Op::Add(a, b) => {
                    for v in [a, b] {
                        add_into(&mut grads[v.0], r * c, |gv| {
                            gv.iter_mut().zip(&g).for_each(|(x, &y)| *x += y)
                        });
                    }
                }
                Op::AddRow(a, row) => {
                    add_into(&mut grads[a.0], r * c, |ga| {
                        ga.iter_mut().zip(&g).for_each(|(x, &y)| *x += y)
                    });
                    add_into(&mut grads[row.0], c, |gr| {
                        for grow in g.chunks(c) {
                            gr.iter_mut().zip(grow).for_each(|(x, &y)| *x += y);
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    add_into(&mut grads[a.0], r * c, |ga| {
                        for i in 0..r * c {
                            ga[i] += g[i] * bv[i];
                        }
                    });
                    add_into(&mut grads[b.0], r * c, |gb| {
                        for i in 0..r * c {
                            gb[i] += g[i] * av[i];
                        }
                    });
                }
                Op::Scale(a, s) => add_into(&mut grads[a.0], r * c, |ga| {
                    ga.iter_mut().zip(&g).for_each(|(x, &y)| *x += y * *s)
                }),
                Op::Softmax(a) => {
                    let y = &node.value;
                    add_into(&mut grads[a.0], r * c, |ga| {
                        for i in 0..r {
                            let (yr, gr) = (&y[i * c..(i + 1) * c], &g[i * c..(i + 1) * c]);
                            let dot: T = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                            for j in 0..c {
                                ga[i * c + j] += yr[j] * (gr[j] - dot);
                            }
                        }
                    });
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normalized,
                    rstd,
                } => {
                    let gv = self.value(*gain);
                    add_into(&mut grads[gain.0], c, |gg| {
                        for (grow, nrow) in g.chunks(c).zip(normalized.chunks(c)) {
                            for j in 0..c {
                                gg[j] += grow[j] * nrow[j];
                            }
                        }
                    });
                    add_into(&mut grads[bias.0], c, |gb| {
                        for grow in g.chunks(c) {
                            gb.iter_mut().zip(grow).for_each(|(x, &y)| *x += y);
                        }
                    });
                    let cf = T::lit(c as f64);
                    add_into(&mut grads[x.0], r * c, |gx| {
                        for i in 0..r {
                            let nrow = &normalized[i * c..(i + 1) * c];
                            let gh: Vec<T> = (0..c).map(|j| g[i * c + j] * gv[j]).collect();
                            let mean_gh = gh.iter().copied().sum::<T>() / cf;
                            let mean_ghn = gh.iter().zip(nrow).map(|(&a, &b)| a * b).sum::<T>() / cf;
                            for j in 0..c {
                                gx[i * c + j] += rstd[i] * (gh[j] - mean_gh - nrow[j] * mean_ghn);
                            }
                        }
                    });
                }
                Op::Gelu(a) => {
                    let xv = self.value(*a);
                    let inv_sqrt_2pi = T::lit(1.0 / (2.0 * std::f64::consts::PI).sqrt());
                    add_into(&mut grads[a.0], r * c, |ga| {
                        for i in 0..r * c {
                            let x = xv[i];
                            let pdf = inv_sqrt_2pi * (-(x * x) * T::lit(0.5)).exp();
                            ga[i] += g[i] * (std_normal_cdf(x) + x * pdf);
                        }
                    });
                }
                Op::Dropout(a, mask) => add_into(&mut grads[a.0], r * c, |ga| {
                    for i in 0..r * c {
                        ga[i] += g[i] * mask[i];
                    }
                }),
                Op::Gather { table, indices } => {
                    let [v, d] = self.shape(*table);
                    add_into(&mut grads[table.0], v * d, |gt| {
                        for (k, &i) in indices.iter().enumerate() {
                            for j in 0..d {
                                gt[i * d + j] += g[k * d + j];
                            }
                        }
                    });
                }
                Op::BiasGather { table, row, indices } => {
                    let [h, p] = self.shape(*table);
                    add_into(&mut grads[table.0], h * p, |gt| {
                        for (k, &i) in indices.iter().enumerate() {
                            gt[row * p + i] += g[k];
                        }
                    });
                }
                Op::SliceCols(a, start) => {
                    let ac = self.shape(*a)[1];
                    add_into(&mut grads[a.0], r * ac, |ga| {
                        for i in 0..r {
                            for j in 0..c {
                                ga[i * ac + start + j] += g[i * c + j];
                            }
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pc = self.shape(*p)[1];
                        add_into(&mut grads[p.0], r * pc, |gp| {
                            for i in 0..r {
                                for j in 0..pc {
                                    gp[i * pc + j] += g[i * c + offset + j];
                                }
                            }
                        });
                        offset += pc;
                    }
                }
                Op::Sum(a) => {
                    let n = self.shape(*a);
                    add_into(&mut grads[a.0], n[0] * n[1], |ga| {
                        ga.iter_mut().for_each(|x| *x += g[0])
                    });
                }
                Op::SmoothedXent {
                    logits,
                    probs,
                    targets,
                    smoothing,
                    normalizer,
                } => {
                    let [m, v] = self.shape(*logits);
                    let scale = g[0] / *normalizer;
                    let uniform = *smoothing / T::lit(v as f64);
                    add_into(&mut grads[logits.0], m * v, |gl| {
                        for (i, t) in targets.iter().enumerate() {
                            let Some(t) = *t else { continue };
                            for j in 0..v {
                                let mut q = uniform;
                                if j == t {
                                    q += T::one() - *smoothing;
                                }
                                gl[i * v + j] += scale * (probs[i * v + j] - q);
                            }
                        }
                    });
                }
            }
        }
        Ok(Gradients {
            params: param_grads,
            leaves,
        })
    }
}
