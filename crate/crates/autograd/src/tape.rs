use crate::kernels::{col2im, gemm, im2col, ConvGeom};
use crate::{Error, Result, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    MatMul(Var, Var),
    Conv2d(Var, Var, ConvGeom),
    ConvTranspose2d(Var, Var, ConvGeom),
    Concat0(Vec<Var>),
    Slice0(Var, usize),
    BroadcastSpatial(Var),
    FlattenMap(Var),
    Pad2d(Var),
    Crop2d(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Append-only record of a computation. Nodes are stored in evaluation order,
/// so a reverse sweep over the node list is a valid topological order for
/// backpropagation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that required them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("zip_map keeps shape")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let needs_grad = parents.iter().any(|p| self.nodes[p.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf (inputs, noise, initial states).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Which linear piece every leaky-ReLU and clamp input fell on. Two
    /// evaluations with equal patterns lie on the same smooth piece.
    pub fn branch_pattern(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match node.op {
                Op::LeakyRelu(a, _) => out.extend(self.value(a).data().iter().map(|&v| u8::from(v > 0.0))),
                Op::Clamp(a, lo, hi) => out.extend(self.value(a).data().iter().map(|&v| {
                    if v < lo {
                        0
                    } else if v > hi {
                        2
                    } else {
                        1
                    }
                })),
                _ => {}
            }
        }
        out
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape(x, y, "add")?;
        let out = zip_map(x, y, |p, q| p + q);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape(x, y, "sub")?;
        let out = zip_map(x, y, |p, q| p - q);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        same_shape(x, y, "mul")?;
        let out = zip_map(x, y, |p, q| p * q);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v + s);
        self.push(out, Op::AddScalar(a), &[a])
    }

    /// Adds `bias[i]` to every element of row `i` along axis 0.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.len() != xv.shape()[0] {
            return Err(Error::Shape(format!(
                "bias of {} entries for leading axis {}",
                bv.len(),
                xv.shape()[0]
            )));
        }
        let inner = xv.inner_len();
        let mut out = xv.clone();
        for (row, b) in out.data_mut().chunks_mut(inner.max(1)).zip(bv.data()) {
            row.iter_mut().for_each(|v| *v += b);
        }
        Ok(self.push(out, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(out, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v * v);
        self.push(out, Op::Square(a), &[a])
    }

    /// Hard clamp; the gradient is zero wherever the input lies outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi), &[a])
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// `[o, i] · [i, n] -> [o, n]`.
    pub fn matmul(&mut self, w: Var, x: Var) -> Result<Var> {
        let (wv, xv) = (self.value(w), self.value(x));
        if wv.shape().len() != 2 || xv.shape().len() != 2 || wv.shape()[1] != xv.shape()[0] {
            return Err(Error::Shape(format!(
                "matmul {:?} x {:?}",
                wv.shape(),
                xv.shape()
            )));
        }
        let (m, k, n) = (wv.shape()[0], wv.shape()[1], xv.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, wv.data(), false, xv.data(), false, 0.0, &mut out);
        let out = Tensor::new(&[m, n], out)?;
        Ok(self.push(out, Op::MatMul(w, x), &[w, x]))
    }

    /// Convolution of a `[c, n, h, w]` map with `[o, c, k, k]` weights.
    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (xs, ws) = (xv.shape(), wv.shape());
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[0] || ws[2] != ws[3] {
            return Err(Error::Shape(format!("conv2d input {xs:?} weight {ws:?}")));
        }
        let g = ConvGeom::new(xs[0], xs[1], xs[2], xs[3], ws[2], stride, pad)?;
        let o = ws[0];
        let cols = im2col(xv.data(), &g);
        let mut out = vec![0.0; o * g.col_cols()];
        gemm(o, g.col_rows(), g.col_cols(), wv.data(), false, &cols, false, 0.0, &mut out);
        let out = Tensor::new(&[o, g.batch, g.out_h, g.out_w], out)?;
        Ok(self.push(out, Op::Conv2d(x, w, g), &[x, w]))
    }

    /// Transposed convolution of a `[ci, n, h, w]` map with `[ci, o, k, k]`
    /// weights. Output spatial size is `(h-1)·stride - 2·pad + k + out_pad`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        let (xs, ws) = (xv.shape(), wv.shape());
        if xs.len() != 4 || ws.len() != 4 || ws[0] != xs[0] || ws[2] != ws[3] {
            return Err(Error::Shape(format!(
                "conv_transpose2d input {xs:?} weight {ws:?}"
            )));
        }
        if out_pad >= stride {
            return Err(Error::Shape("output padding must be below the stride".into()));
        }
        let (ci, n, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, k) = (ws[1], ws[2]);
        let big_h = ((h - 1) * stride + k + out_pad)
            .checked_sub(2 * pad)
            .ok_or_else(|| Error::Shape("transposed conv output is empty".into()))?;
        let big_w = ((wd - 1) * stride + k + out_pad)
            .checked_sub(2 * pad)
            .ok_or_else(|| Error::Shape("transposed conv output is empty".into()))?;
        // The forward pass is the data-gradient of the matching strided conv.
        let g = ConvGeom::new(o, n, big_h, big_w, k, stride, pad)?;
        if g.out_h != h || g.out_w != wd {
            return Err(Error::Shape(format!(
                "transposed conv geometry mismatch: {big_h}x{big_w} does not map back to {h}x{wd}"
            )));
        }
        let mut cols = vec![0.0; g.col_rows() * g.col_cols()];
        gemm(g.col_rows(), ci, g.col_cols(), wv.data(), true, xv.data(), false, 0.0, &mut cols);
        let mut out = vec![0.0; g.input_len()];
        col2im(&cols, &g, &mut out);
        let out = Tensor::new(&[o, n, big_h, big_w], out)?;
        Ok(self.push(out, Op::ConvTranspose2d(x, w, g), &[x, w]))
    }

    pub fn concat0(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let out = Tensor::concat0(&values)?;
        Ok(self.push(out, Op::Concat0(parts.to_vec()), parts))
    }

    pub fn slice0(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice0(start, len)?;
        Ok(self.push(out, Op::Slice0(x, start), &[x]))
    }

    /// `[c, n] -> [c, n, h, w]`, repeating each vector at every spatial site.
    pub fn broadcast_spatial(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 2 {
            return Err(Error::Shape(format!(
                "broadcast_spatial expects [c, n], got {:?}",
                xv.shape()
            )));
        }
        let (c, n) = (xv.shape()[0], xv.shape()[1]);
        let mut out = Vec::with_capacity(c * n * h * w);
        for &v in xv.data() {
            out.extend(std::iter::repeat_n(v, h * w));
        }
        let out = Tensor::new(&[c, n, h, w], out)?;
        Ok(self.push(out, Op::BroadcastSpatial(x), &[x]))
    }

    /// `[c, n, h, w] -> [c·h·w, n]`.
    pub fn flatten_map(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 4 {
            return Err(Error::Shape(format!("flatten_map expects 4-D, got {s:?}")));
        }
        let (c, n, p) = (s[0], s[1], s[2] * s[3]);
        let src = xv.data();
        let mut out = vec![0.0; c * n * p];
        for ci in 0..c {
            for ni in 0..n {
                for pi in 0..p {
                    out[(ci * p + pi) * n + ni] = src[(ci * n + ni) * p + pi];
                }
            }
        }
        let out = Tensor::new(&[c * p, n], out)?;
        Ok(self.push(out, Op::FlattenMap(x), &[x]))
    }

    /// Zero-pad a `[c, n, h, w]` map at the bottom and right to `h2 × w2`.
    pub fn pad2d(&mut self, x: Var, h2: usize, w2: usize) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 4 || h2 < s[2] || w2 < s[3] {
            return Err(Error::Shape(format!("cannot pad {s:?} to {h2}x{w2}")));
        }
        let out = copy_window(xv, h2, w2);
        Ok(self.push(out, Op::Pad2d(x), &[x]))
    }

    /// Keep the top-left `h2 × w2` window of a `[c, n, h, w]` map.
    pub fn crop2d(&mut self, x: Var, h2: usize, w2: usize) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if s.len() != 4 || h2 > s[2] || w2 > s[3] {
            return Err(Error::Shape(format!("cannot crop {s:?} to {h2}x{w2}")));
        }
        let out = copy_window(xv, h2, w2);
        Ok(self.push(out, Op::Crop2d(x), &[x]))
    }

    /// Reverse-mode sweep from the scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar root, got {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::scalar(1.0));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, || g.clone());
                self.acc(grads, *b, || g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, || g.clone());
                self.acc(grads, *b, || g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                self.acc(grads, *a, || zip_map(g, self.value(*b), |p, q| p * q));
                self.acc(grads, *b, || zip_map(g, self.value(*a), |p, q| p * q));
            }
            Op::Scale(a, s) => self.acc(grads, *a, || g.map(|v| v * s)),
            Op::AddScalar(a) => self.acc(grads, *a, || g.clone()),
            Op::AddBias(x, b) => {
                self.acc(grads, *x, || g.clone());
                self.acc(grads, *b, || {
                    let inner = g.inner_len().max(1);
                    let sums = g.data().chunks(inner).map(|r| r.iter().sum()).collect();
                    Tensor::new(self.shape(*b), sums).expect("bias shape")
                });
            }
            Op::Sigmoid(a) => self.acc(grads, *a, || zip_map(g, y, |d, s| d * s * (1.0 - s))),
            Op::Tanh(a) => self.acc(grads, *a, || zip_map(g, y, |d, t| d * (1.0 - t * t))),
            Op::LeakyRelu(a, slope) => self.acc(grads, *a, || {
                zip_map(g, self.value(*a), |d, x| if x > 0.0 { d } else { d * slope })
            }),
            Op::Exp(a) => self.acc(grads, *a, || zip_map(g, y, |d, e| d * e)),
            Op::Square(a) => self.acc(grads, *a, || zip_map(g, self.value(*a), |d, x| 2.0 * d * x)),
            Op::Clamp(a, lo, hi) => self.acc(grads, *a, || {
                zip_map(g, self.value(*a), |d, x| if x < *lo || x > *hi { 0.0 } else { d })
            }),
            Op::Sum(a) => self.acc(grads, *a, || Tensor::full(self.shape(*a), g.item())),
            Op::MatMul(w, x) => {
                let (wv, xv) = (self.value(*w), self.value(*x));
                let (m, k, n) = (wv.shape()[0], wv.shape()[1], xv.shape()[1]);
                self.acc(grads, *w, || {
                    let mut out = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, xv.data(), true, 0.0, &mut out);
                    Tensor::new(&[m, k], out).expect("matmul grad")
                });
                self.acc(grads, *x, || {
                    let mut out = vec![0.0; k * n];
                    gemm(k, m, n, wv.data(), true, g.data(), false, 0.0, &mut out);
                    Tensor::new(&[k, n], out).expect("matmul grad")
                });
            }
            Op::Conv2d(x, w, geom) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let o = wv.shape()[0];
                if self.wants(*w) {
                    let cols = im2col(xv.data(), geom);
                    let mut gw = vec![0.0; wv.len()];
                    gemm(o, geom.col_cols(), geom.col_rows(), g.data(), false, &cols, true, 0.0, &mut gw);
                    self.acc(grads, *w, || Tensor::new(wv.shape(), gw).expect("conv grad"));
                }
                self.acc(grads, *x, || {
                    let mut dcols = vec![0.0; geom.col_rows() * geom.col_cols()];
                    gemm(geom.col_rows(), o, geom.col_cols(), wv.data(), true, g.data(), false, 0.0, &mut dcols);
                    let mut dx = vec![0.0; geom.input_len()];
                    col2im(&dcols, geom, &mut dx);
                    Tensor::new(xv.shape(), dx).expect("conv grad")
                });
            }
            Op::ConvTranspose2d(x, w, geom) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let ci = wv.shape()[0];
                let gcols = im2col(g.data(), geom);
                self.acc(grads, *w, || {
                    let mut gw = vec![0.0; wv.len()];
                    gemm(ci, geom.col_cols(), geom.col_rows(), xv.data(), false, &gcols, true, 0.0, &mut gw);
                    Tensor::new(wv.shape(), gw).expect("convT grad")
                });
                self.acc(grads, *x, || {
                    let mut dx = vec![0.0; xv.len()];
                    gemm(ci, geom.col_rows(), geom.col_cols(), wv.data(), false, &gcols, false, 0.0, &mut dx);
                    Tensor::new(xv.shape(), dx).expect("convT grad")
                });
            }
            Op::Concat0(parts) => {
                let inner = g.inner_len();
                let mut offset = 0;
                for p in parts {
                    let rows = self.shape(*p)[0];
                    self.acc(grads, *p, || {
                        let data = g.data()[offset * inner..(offset + rows) * inner].to_vec();
                        Tensor::new(self.shape(*p), data).expect("concat grad")
                    });
                    offset += rows;
                }
            }
            Op::Slice0(x, start) => self.acc(grads, *x, || {
                let xv = self.value(*x);
                let inner = xv.inner_len();
                let mut out = Tensor::zeros(xv.shape());
                out.data_mut()[start * inner..start * inner + g.len()].copy_from_slice(g.data());
                out
            }),
            Op::BroadcastSpatial(x) => self.acc(grads, *x, || {
                let s = g.shape();
                let plane = s[2] * s[3];
                let sums = g.data().chunks(plane).map(|c| c.iter().sum()).collect();
                Tensor::new(self.shape(*x), sums).expect("broadcast grad")
            }),
            Op::FlattenMap(x) => self.acc(grads, *x, || {
                let s = self.shape(*x);
                let (c, n, p) = (s[0], s[1], s[2] * s[3]);
                let mut out = vec![0.0; c * n * p];
                for ci in 0..c {
                    for ni in 0..n {
                        for pi in 0..p {
                            out[(ci * n + ni) * p + pi] = g.data()[(ci * p + pi) * n + ni];
                        }
                    }
                }
                Tensor::new(s, out).expect("flatten grad")
            }),
            Op::Pad2d(x) | Op::Crop2d(x) => self.acc(grads, *x, || {
                let s = self.shape(*x);
                copy_window(g, s[2], s[3])
            }),
        }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce() -> Tensor) {
        if !self.wants(v) {
            return;
        }
        let delta = f();
        match &mut grads[v.0] {
            Some(existing) => existing
                .data_mut()
                .iter_mut()
                .zip(delta.data())
                .for_each(|(a, b)| *a += b),
            slot => *slot = Some(delta),
        }
    }
}

/// Copy the overlapping top-left region of a `[c, n, h, w]` map into a
/// zero map of spatial size `h2 × w2`.
fn copy_window(x: &Tensor, h2: usize, w2: usize) -> Tensor {
    let s = x.shape();
    let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
    let (hh, ww) = (h.min(h2), w.min(w2));
    let mut out = vec![0.0; planes * h2 * w2];
    for p in 0..planes {
        for r in 0..hh {
            let src = &x.data()[p * h * w + r * w..p * h * w + r * w + ww];
            out[p * h2 * w2 + r * w2..p * h2 * w2 + r * w2 + ww].copy_from_slice(src);
        }
    }
    Tensor::new(&[s[0], s[1], h2, w2], out).expect("window shape")
}
