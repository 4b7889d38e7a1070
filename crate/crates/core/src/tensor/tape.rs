use super::{softmax, Grads, ParamId, ParamStore, Tensor, LAYER_NORM_EPS, PROB_CLIP};
use crate::error::{Error, Result};

/// Handle to a node recorded on a `Tape`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    Embed {
        table: ParamId,
        ids: Vec<usize>,
    },
    Conv1d {
        x: Var,
        w: ParamId,
        b: ParamId,
    },
    Conv2d {
        x: Var,
        w: ParamId,
        b: ParamId,
    },
    /// Output element i came from input element `argmax[i]`.
    Pool {
        x: Var,
        argmax: Vec<usize>,
    },
    LayerNorm {
        x: Var,
        gain: ParamId,
        bias: ParamId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dense {
        x: Var,
        w: ParamId,
        b: ParamId,
    },
    Relu {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    Concat {
        xs: Vec<Var>,
    },
    SoftmaxCe {
        logits: Var,
        label: usize,
        probs: Vec<f64>,
    },
}

struct Node {
    /// Empty for `Param` nodes, whose value lives in the store.
    value: Tensor,
    op: Op,
}

/// Records a single forward pass over a borrowed parameter store.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.value(v).shape
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    /// A parameter used directly as a node, e.g. as the input of a
    /// gradient check.
    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(
            Tensor {
                shape: vec![],
                data: vec![],
            },
            Op::Param(id),
        )
    }

    pub fn embed(&mut self, ids: &[usize], table: ParamId) -> Result<Var> {
        let t = self.params.get(table);
        if t.shape.len() != 2 {
            return Err(Error::Shape(format!("embedding table must be 2-D, got {:?}", t.shape)));
        }
        if ids.is_empty() {
            return Err(Error::Shape("embedding of an empty sequence".into()));
        }
        let (v, d) = (t.shape[0], t.shape[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::Validation(format!("token id {id} outside vocabulary of {v}")));
            }
            data.extend_from_slice(&t.data[id * d..(id + 1) * d]);
        }
        Ok(self.push(
            Tensor {
                shape: vec![ids.len(), d],
                data,
            },
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    /// Valid cross-correlation. `x` is N×c_in, `w` is k×c_in×c_out.
    pub fn conv1d(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let wt = self.params.get(w);
        let (k, cin, cout) = match (xs.as_slice(), wt.shape.as_slice()) {
            ([_, c], [k, ci, co]) if *c == *ci => (*k, *ci, *co),
            _ => return Err(Error::Shape(format!("conv1d input {xs:?} vs filter {:?}", wt.shape))),
        };
        check_bias(self.params, b, cout)?;
        let n = xs[0];
        if n < k {
            return Err(Error::Shape(format!("sequence of {n} shorter than filter width {k}")));
        }
        let no = n - k + 1;
        let xd = &self.value(x).data;
        let wd = &wt.data;
        let bd = &self.params.get(b).data;
        let mut out = Vec::with_capacity(no * cout);
        for _ in 0..no {
            out.extend_from_slice(bd);
        }
        for o in 0..no {
            let orow = &mut out[o * cout..(o + 1) * cout];
            for dk in 0..k {
                for ci in 0..cin {
                    let xv = xd[(o + dk) * cin + ci];
                    if xv == 0.0 {
                        continue;
                    }
                    let wrow = &wd[(dk * cin + ci) * cout..(dk * cin + ci + 1) * cout];
                    for (acc, &wv) in orow.iter_mut().zip(wrow) {
                        *acc += xv * wv;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![no, cout],
                data: out,
            },
            Op::Conv1d { x, w, b },
        ))
    }

    /// Valid 2-D cross-correlation. `x` is H×W×c_in, `w` is kh×kw×c_in×c_out.
    pub fn conv2d(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let wt = self.params.get(w);
        let (kh, kw, cin, cout) = match (xs.as_slice(), wt.shape.as_slice()) {
            ([_, _, c], [kh, kw, ci, co]) if *c == *ci => (*kh, *kw, *ci, *co),
            _ => return Err(Error::Shape(format!("conv2d input {xs:?} vs filter {:?}", wt.shape))),
        };
        check_bias(self.params, b, cout)?;
        let (h, wd_) = (xs[0], xs[1]);
        if h < kh || wd_ < kw {
            return Err(Error::Shape(format!("image {h}×{wd_} smaller than filter {kh}×{kw}")));
        }
        let (ho, wo) = (h - kh + 1, wd_ - kw + 1);
        let xd = &self.value(x).data;
        let wd = &wt.data;
        let bd = &self.params.get(b).data;
        let mut out = Vec::with_capacity(ho * wo * cout);
        for _ in 0..ho * wo {
            out.extend_from_slice(bd);
        }
        for oy in 0..ho {
            for ox in 0..wo {
                let base = (oy * wo + ox) * cout;
                let orow = &mut out[base..base + cout];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let xbase = ((oy + ky) * wd_ + ox + kx) * cin;
                        let wbase = (ky * kw + kx) * cin;
                        for ci in 0..cin {
                            let xv = xd[xbase + ci];
                            if xv == 0.0 {
                                continue;
                            }
                            let wrow = &wd[(wbase + ci) * cout..(wbase + ci + 1) * cout];
                            for (acc, &wv) in orow.iter_mut().zip(wrow) {
                                *acc += xv * wv;
                            }
                        }
                    }
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![ho, wo, cout],
                data: out,
            },
            Op::Conv2d { x, w, b },
        ))
    }

    /// Non-overlapping max pool along the first axis of N×C; a trailing
    /// partial window is dropped. Ties go to the lowest index.
    pub fn maxpool1d(&mut self, x: Var, window: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let [n, c] = xs[..] else {
            return Err(Error::Shape(format!("maxpool1d expects N×C, got {xs:?}")));
        };
        if window == 0 || n < window {
            return Err(Error::Shape(format!("maxpool1d window {window} on length {n}")));
        }
        let no = n / window;
        let xd = &self.value(x).data;
        let mut out = Vec::with_capacity(no * c);
        let mut argmax = Vec::with_capacity(no * c);
        for o in 0..no {
            for ch in 0..c {
                let mut best = o * window * c + ch;
                for j in 1..window {
                    let idx = (o * window + j) * c + ch;
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                argmax.push(best);
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![no, c],
                data: out,
            },
            Op::Pool { x, argmax },
        ))
    }

    /// Non-overlapping p×p max pool over H×W×C (floor on both axes).
    /// Ties go to the first element in row-major window order.
    pub fn maxpool2d(&mut self, x: Var, window: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let [h, w, c] = xs[..] else {
            return Err(Error::Shape(format!("maxpool2d expects H×W×C, got {xs:?}")));
        };
        if window == 0 || h < window || w < window {
            return Err(Error::Shape(format!("maxpool2d window {window} on {h}×{w}")));
        }
        let (ho, wo) = (h / window, w / window);
        let xd = &self.value(x).data;
        let mut out = Vec::with_capacity(ho * wo * c);
        let mut argmax = Vec::with_capacity(ho * wo * c);
        for oy in 0..ho {
            for ox in 0..wo {
                for ch in 0..c {
                    let mut best = ((oy * window) * w + ox * window) * c + ch;
                    for dy in 0..window {
                        for dx in 0..window {
                            let idx = ((oy * window + dy) * w + ox * window + dx) * c + ch;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![ho, wo, c],
                data: out,
            },
            Op::Pool { x, argmax },
        ))
    }

    /// Per-channel max over the first `valid` positions of an N×C input.
    pub fn global_maxpool(&mut self, x: Var, valid: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let [n, c] = xs[..] else {
            return Err(Error::Shape(format!("global_maxpool expects N×C, got {xs:?}")));
        };
        if valid == 0 || valid > n {
            return Err(Error::Shape(format!("global_maxpool over {valid} of {n} positions")));
        }
        let xd = &self.value(x).data;
        let mut out = Vec::with_capacity(c);
        let mut argmax = Vec::with_capacity(c);
        for ch in 0..c {
            let mut best = ch;
            for p in 1..valid {
                let idx = p * c + ch;
                if xd[idx] > xd[best] {
                    best = idx;
                }
            }
            out.push(xd[best]);
            argmax.push(best);
        }
        Ok(self.push(
            Tensor {
                shape: vec![c],
                data: out,
            },
            Op::Pool { x, argmax },
        ))
    }

    /// Normalizes over the last axis, then applies per-channel gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: ParamId, bias: ParamId) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let c = *xs.last().ok_or_else(|| Error::Shape("layer_norm on a scalar".into()))?;
        check_bias(self.params, gain, c)?;
        check_bias(self.params, bias, c)?;
        let xd = &self.value(x).data;
        let g = &self.params.get(gain).data;
        let b = &self.params.get(bias).data;
        let rows = xd.len() / c;
        let mut xhat = Vec::with_capacity(xd.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xd.len());
        for r in 0..rows {
            let row = &xd[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(is);
            for j in 0..c {
                let xh = (row[j] - mean) * is;
                xhat.push(xh);
                out.push(xh * g[j] + b[j]);
            }
        }
        Ok(self.push(
            Tensor { shape: xs, data: out },
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// `x` (any shape, read flat, length n) times `w` (n×m) plus `b` (m).
    pub fn dense(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let xd = &self.value(x).data;
        let wt = self.params.get(w);
        let [n, m] = wt.shape[..] else {
            return Err(Error::Shape(format!("dense weight must be 2-D, got {:?}", wt.shape)));
        };
        if xd.len() != n {
            return Err(Error::Shape(format!("dense expects {n} inputs, got {}", xd.len())));
        }
        check_bias(self.params, b, m)?;
        let mut out = self.params.get(b).data.clone();
        for (i, &xv) in xd.iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            for (acc, &wv) in out.iter_mut().zip(&wt.data[i * m..(i + 1) * m]) {
                *acc += xv * wv;
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![m],
                data: out,
            },
            Op::Dense { x, w, b },
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| v.max(0.0)).collect(),
        };
        self.push(out, Op::Relu { x })
    }

    pub fn flatten(&mut self, x: Var) -> Var {
        let data = self.value(x).data.clone();
        self.push(Tensor::vector(data), Op::Reshape { x })
    }

    /// Concatenates the flattened inputs.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Shape("concat of nothing".into()));
        }
        let mut data = Vec::new();
        for &x in xs {
            data.extend_from_slice(&self.value(x).data);
        }
        Ok(self.push(Tensor::vector(data), Op::Concat { xs: xs.to_vec() }))
    }

    /// Fused softmax and cross-entropy; returns the scalar loss node.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let z = &self.value(logits).data;
        if label >= z.len() {
            return Err(Error::Validation(format!("label {label} with {} classes", z.len())));
        }
        let probs = softmax(z);
        let loss = -probs[label].max(PROB_CLIP).ln();
        Ok(self.push(Tensor::vector(vec![loss]), Op::SoftmaxCe { logits, label, probs }))
    }

    /// Reverse pass from a scalar node; parameter gradients are added
    /// into `grads`.
    pub fn backward(&self, out: Var, grads: &mut Grads) -> Result<()> {
        if self.value(out).len() != 1 {
            return Err(Error::Shape("backward needs a scalar output".into()));
        }
        let mut g: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        g[out.0] = Some(vec![1.0]);
        for i in (0..=out.0).rev() {
            let Some(dy) = g[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => add_into(&mut grads.tensors[id.0].data, &dy),
                Op::Embed { table, ids } => {
                    let gt = &mut grads.tensors[table.0];
                    let d = gt.shape[1];
                    for (p, &id) in ids.iter().enumerate() {
                        add_into(&mut gt.data[id * d..(id + 1) * d], &dy[p * d..(p + 1) * d]);
                    }
                }
                Op::Conv1d { x, w, b } => {
                    let xt = self.value(*x);
                    let (cin, n) = (xt.shape[1], xt.shape[0]);
                    let ws = &self.params.get(*w).shape;
                    let (k, cout) = (ws[0], ws[2]);
                    let no = n - k + 1;
                    let wd = &self.params.get(*w).data;
                    let mut dx = vec![0.0; xt.len()];
                    let gw = &mut grads.tensors[w.0].data;
                    for o in 0..no {
                        let drow = &dy[o * cout..(o + 1) * cout];
                        for dk in 0..k {
                            for ci in 0..cin {
                                let xi = (o + dk) * cin + ci;
                                let off = (dk * cin + ci) * cout;
                                let wrow = &wd[off..off + cout];
                                dx[xi] += dot(wrow, drow);
                                axpy(&mut gw[off..off + cout], xt.data[xi], drow);
                            }
                        }
                    }
                    let gb = &mut grads.tensors[b.0].data;
                    for o in 0..no {
                        add_into(gb, &dy[o * cout..(o + 1) * cout]);
                    }
                    accumulate(&mut g, *x, dx);
                }
                Op::Conv2d { x, w, b } => {
                    let xt = self.value(*x);
                    let (wdim, cin) = (xt.shape[1], xt.shape[2]);
                    let ws = &self.params.get(*w).shape;
                    let (kh, kw, cout) = (ws[0], ws[1], ws[3]);
                    let os = &self.nodes[i].value.shape;
                    let (ho, wo) = (os[0], os[1]);
                    let wd = &self.params.get(*w).data;
                    let mut dx = vec![0.0; xt.len()];
                    let gw = &mut grads.tensors[w.0].data;
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let base = (oy * wo + ox) * cout;
                            let drow = &dy[base..base + cout];
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let xbase = ((oy + ky) * wdim + ox + kx) * cin;
                                    let wbase = (ky * kw + kx) * cin;
                                    for ci in 0..cin {
                                        let off = (wbase + ci) * cout;
                                        dx[xbase + ci] += dot(&wd[off..off + cout], drow);
                                        axpy(&mut gw[off..off + cout], xt.data[xbase + ci], drow);
                                    }
                                }
                            }
                        }
                    }
                    let gb = &mut grads.tensors[b.0].data;
                    for p in 0..ho * wo {
                        add_into(gb, &dy[p * cout..(p + 1) * cout]);
                    }
                    accumulate(&mut g, *x, dx);
                }
                Op::Pool { x, argmax } => {
                    let mut dx = vec![0.0; self.value(*x).len()];
                    for (o, &src) in argmax.iter().enumerate() {
                        dx[src] += dy[o];
                    }
                    accumulate(&mut g, *x, dx);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gd = &self.params.get(*gain).data;
                    let c = gd.len();
                    let mut dx = vec![0.0; xhat.len()];
                    for (r, &is) in inv_std.iter().enumerate() {
                        let rng = r * c..(r + 1) * c;
                        let (xh, d) = (&xhat[rng.clone()], &dy[rng.clone()]);
                        let dxh: Vec<f64> = d.iter().zip(gd).map(|(a, b)| a * b).collect();
                        let m1 = dxh.iter().sum::<f64>() / c as f64;
                        let m2 = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                        for j in 0..c {
                            dx[r * c + j] = is * (dxh[j] - m1 - xh[j] * m2);
                            grads.tensors[gain.0].data[j] += d[j] * xh[j];
                            grads.tensors[bias.0].data[j] += d[j];
                        }
                    }
                    accumulate(&mut g, *x, dx);
                }
                Op::Dense { x, w, b } => {
                    let xd = &self.value(*x).data;
                    let m = dy.len();
                    let wd = &self.params.get(*w).data;
                    let mut dx = vec![0.0; xd.len()];
                    let gw = &mut grads.tensors[w.0].data;
                    for (ii, &xv) in xd.iter().enumerate() {
                        let off = ii * m;
                        dx[ii] = dot(&wd[off..off + m], &dy);
                        axpy(&mut gw[off..off + m], xv, &dy);
                    }
                    add_into(&mut grads.tensors[b.0].data, &dy);
                    accumulate(&mut g, *x, dx);
                }
                Op::Relu { x } => {
                    let xd = &self.value(*x).data;
                    let dx = dy
                        .iter()
                        .zip(xd)
                        .map(|(&d, &v)| if v > 0.0 { d } else { 0.0 })
                        .collect();
                    accumulate(&mut g, *x, dx);
                }
                Op::Reshape { x } => accumulate(&mut g, *x, dy),
                Op::Concat { xs } => {
                    let mut off = 0;
                    for &x in xs {
                        let n = self.value(x).len();
                        accumulate(&mut g, x, dy[off..off + n].to_vec());
                        off += n;
                    }
                }
                Op::SoftmaxCe { logits, label, probs } => {
                    let mut dz: Vec<f64> = probs.iter().map(|p| p * dy[0]).collect();
                    dz[*label] -= dy[0];
                    accumulate(&mut g, *logits, dz);
                }
            }
        }
        Ok(())
    }
}

fn check_bias(params: &ParamStore, b: ParamId, n: usize) -> Result<()> {
    let s = &params.get(b).shape;
    if s.as_slice() != [n] {
        return Err(Error::Shape(format!(
            "{} has shape {s:?}, expected [{n}]",
            params.name(b)
        )));
    }
    Ok(())
}

fn accumulate(g: &mut [Option<Vec<f64>>], x: Var, d: Vec<f64>) {
    match &mut g[x.0] {
        Some(acc) => add_into(acc, &d),
        slot => *slot = Some(d),
    }
}

fn add_into(acc: &mut [f64], d: &[f64]) {
    for (a, b) in acc.iter_mut().zip(d) {
        *a += b;
    }
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    if a == 0.0 {
        return;
    }
    for (y, &v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Init;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store_with(entries: &[(&str, Vec<usize>, Vec<f64>)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (n, shape, data) in entries {
            s.insert(n, Tensor::new(shape.clone(), data.clone()).unwrap());
        }
        s
    }

    #[test]
    fn embed_lookup_and_sparse_gradient() {
        let s = store_with(&[("t", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])]);
        let mut tape = Tape::new(&s);
        let e = tape.embed(&[0, 0], ParamId(0)).unwrap();
        assert_eq!(tape.value(e).data, vec![1.0, 2.0, 1.0, 2.0]);
        assert!(tape.embed(&[2], ParamId(0)).is_err());

        let mut s2 = s.clone();
        let w = s2.insert("w", Tensor::new(vec![4, 1], vec![1.0; 4]).unwrap());
        let b = s2.insert("b", Tensor::vector(vec![0.0]));
        let mut tape = Tape::new(&s2);
        let e = tape.embed(&[0, 0], ParamId(0)).unwrap();
        let y = tape.dense(e, w, b).unwrap();
        let mut g = s2.zero_grads();
        tape.backward(y, &mut g).unwrap();
        assert_eq!(g.tensors[0].data, vec![2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn conv1d_window_sums_and_impulse() {
        let s = store_with(&[("w", vec![2, 1, 1], vec![1.0, 1.0]), ("b", vec![1], vec![0.0])]);
        let mut tape = Tape::new(&s);
        let x = tape.input(Tensor::new(vec![4, 1], vec![1.0; 4]).unwrap());
        let y = tape.conv1d(x, ParamId(0), ParamId(1)).unwrap();
        assert_eq!(tape.value(y).data, vec![2.0, 2.0, 2.0]);

        let s = store_with(&[("w", vec![3, 1, 1], vec![1.0, 2.0, 3.0]), ("b", vec![1], vec![0.0])]);
        let mut tape = Tape::new(&s);
        let x = tape.input(Tensor::new(vec![5, 1], vec![0.0, 0.0, 1.0, 0.0, 0.0]).unwrap());
        let y = tape.conv1d(x, ParamId(0), ParamId(1)).unwrap();
        assert_eq!(tape.value(y).data, vec![3.0, 2.0, 1.0]);

        let x = tape.input(Tensor::new(vec![2, 1], vec![0.0; 2]).unwrap());
        assert!(tape.conv1d(x, ParamId(0), ParamId(1)).is_err());
    }

    #[test]
    fn conv2d_ones_and_shift() {
        let s = store_with(&[("w", vec![2, 2, 1, 1], vec![1.0; 4]), ("b", vec![1], vec![0.0])]);
        let mut tape = Tape::new(&s);
        let x = tape.input(Tensor::new(vec![3, 3, 1], vec![1.0; 9]).unwrap());
        let y = tape.conv2d(x, ParamId(0), ParamId(1)).unwrap();
        assert_eq!(tape.value(y).data, vec![4.0; 4]);

        // a single 1 in the bottom-right tap picks x[y+1][x+1]
        let s = store_with(&[
            ("w", vec![2, 2, 1, 1], vec![0.0, 0.0, 0.0, 1.0]),
            ("b", vec![1], vec![0.0]),
        ]);
        let mut tape = Tape::new(&s);
        let img: Vec<f64> = (0..9).map(f64::from).collect();
        let x = tape.input(Tensor::new(vec![3, 3, 1], img).unwrap());
        let y = tape.conv2d(x, ParamId(0), ParamId(1)).unwrap();
        assert_eq!(tape.value(y).data, vec![4.0, 5.0, 7.0, 8.0]);
    }

    #[test]
    fn maxpool_values_and_tie_routing() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        let x = tape.input(Tensor::new(vec![4, 1], vec![1.0, 3.0, 2.0, 2.0]).unwrap());
        let y = tape.maxpool1d(x, 2).unwrap();
        assert_eq!(tape.value(y).data, vec![3.0, 2.0]);

        let mut s = ParamStore::new();
        let p = s.insert("x", Tensor::new(vec![4, 1], vec![5.0; 4]).unwrap());
        let w = s.insert("w", Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap());
        let b = s.insert("b", Tensor::vector(vec![0.0]));
        let mut tape = Tape::new(&s);
        let x = tape.param(p);
        let y = tape.maxpool1d(x, 2).unwrap();
        assert_eq!(tape.value(y).data, vec![5.0, 5.0]);
        let z = tape.dense(y, w, b).unwrap();
        let mut g = s.zero_grads();
        tape.backward(z, &mut g).unwrap();
        assert_eq!(g.tensors[0].data, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn global_maxpool_order_invariant() {
        let s = ParamStore::new();
        let mut tape = Tape::new(&s);
        let a = tape.input(Tensor::new(vec![3, 2], vec![1.0, 9.0, 4.0, 2.0, 3.0, 5.0]).unwrap());
        let b = tape.input(Tensor::new(vec![3, 2], vec![3.0, 5.0, 1.0, 9.0, 4.0, 2.0]).unwrap());
        let ya = tape.global_maxpool(a, 3).unwrap();
        let yb = tape.global_maxpool(b, 3).unwrap();
        assert_eq!(tape.value(ya).data, vec![4.0, 9.0]);
        assert_eq!(tape.value(ya).data, tape.value(yb).data);
        let one = tape.input(Tensor::new(vec![1, 2], vec![7.0, -1.0]).unwrap());
        let y1 = tape.global_maxpool(one, 1).unwrap();
        assert_eq!(tape.value(y1).data, vec![7.0, -1.0]);
        let masked = tape.global_maxpool(a, 1).unwrap();
        assert_eq!(tape.value(masked).data, vec![1.0, 9.0]);
    }

    #[test]
    fn layer_norm_constant_row_gives_bias() {
        let s = store_with(&[
            ("g", vec![3], vec![2.0, 2.0, 2.0]),
            ("b", vec![3], vec![0.5, -1.0, 3.0]),
        ]);
        let mut tape = Tape::new(&s);
        let x = tape.input(Tensor::new(vec![1, 3], vec![4.0; 3]).unwrap());
        let y = tape.layer_norm(x, ParamId(0), ParamId(1)).unwrap();
        assert_eq!(tape.value(y).data, vec![0.5, -1.0, 3.0]);
    }

    #[test]
    fn layer_norm_standardized_input_passes_through() {
        let s = store_with(&[("g", vec![2], vec![1.0, 1.0]), ("b", vec![2], vec![0.0, 0.0])]);
        let mut tape = Tape::new(&s);
        let x = tape.input(Tensor::new(vec![2], vec![-1.0, 1.0]).unwrap());
        let y = tape.layer_norm(x, ParamId(0), ParamId(1)).unwrap();
        for (a, b) in tape.value(y).data.iter().zip([-1.0, 1.0]) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn shape_errors_at_build_time() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::new();
        let w = s.add("w", &[3, 2, 4], Init::HeUniform { fan_in: 6 }, &mut rng);
        let b = s.add("b", &[5], Init::Zeros, &mut rng);
        let mut tape = Tape::new(&s);
        let x = tape.input(Tensor::zeros(&[6, 3]));
        assert!(matches!(tape.conv1d(x, w, b), Err(Error::Shape(_))));
        let x = tape.input(Tensor::zeros(&[6, 2]));
        assert!(matches!(tape.conv1d(x, w, b), Err(Error::Shape(_))));
    }
}
