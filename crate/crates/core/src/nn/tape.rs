//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! the computed value and the op that produced it. [`Tape::backward`] walks
//! the nodes in reverse creation order and accumulates gradients; the tape is
//! discarded afterwards and rebuilt on the next pass, so unroll lengths may
//! vary freely between passes.
//!
//! All values are `f64`. Vectors are rank-1 tensors, matrices rank-2, feature
//! maps rank-3 `[channels, d1, d2]`.

use super::tensor::Tensor;
use super::NnError;

/// Handle to a tape node. Only valid for the tape that created it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf { trainable: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    MatVec(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Concat(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Ln(Var),
    Softmax(Var),
    SumAll(Var),
    MeanAll(Var),
    AddRowBias(Var, Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    },
    SpatialMean(Var),
    BroadcastChannel { vec: Var, d1: usize, d2: usize },
    BroadcastSpatial { vec: Var, channels: usize },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients indexed by the [`Var`]s of the tape that produced them.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `var`, or zeros of the given shape if the node was
    /// never reached by the backward sweep.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor {
        match self.get(var) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf: gradients are accumulated for it during backward.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { trainable: true })
    }

    /// Non-trainable input (data, targets). Gradients still flow through it
    /// so input sensitivities can be inspected, but optimizers ignore it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { trainable: false })
    }

    fn binary_same_shape(&mut self, op_name: &'static str, a: Var, b: Var) -> Result<(), NnError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::shape(
                op_name,
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary_same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary_same_shape("sub", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    /// Element-wise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary_same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a).map(|v| v * factor);
        self.push(t, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, offset: f64) -> Var {
        let t = self.value(a).map(|v| v + offset);
        self.push(t, Op::AddScalar(a))
    }

    /// `1 - x`, element-wise. Convenience for gate blending.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -1.0);
        self.add_scalar(neg, 1.0)
    }

    /// `[n,k] x [k,m] -> [n,m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(NnError::shape("matmul", format!("{:?} x {:?}", sa, sb)));
        }
        let (n, k, m) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), n, k, m);
        let t = Tensor::new(vec![n, m], out)?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    /// `[n,k] x [k] -> [n]`.
    pub fn matvec(&mut self, a: Var, x: Var) -> Result<Var, NnError> {
        let (sa, sx) = (self.value(a).shape(), self.value(x).shape());
        if sa.len() != 2 || sx.len() != 1 || sa[1] != sx[0] {
            return Err(NnError::shape("matvec", format!("{:?} x {:?}", sa, sx)));
        }
        let (n, k) = (sa[0], sa[1]);
        let av = self.value(a).data();
        let xv = self.value(x).data();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let row = &av[i * k..(i + 1) * k];
            let mut acc = 0.0;
            for j in 0..k {
                acc += row[j] * xv[j];
            }
            out[i] = acc;
        }
        let t = Tensor::new(vec![n], out)?;
        Ok(self.push(t, Op::MatVec(a, x)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NnError> {
        let s = self.value(a).shape();
        if s.len() != 2 {
            return Err(NnError::shape("transpose", format!("{:?}", s)));
        }
        let (n, m) = (s[0], s[1]);
        let t = Tensor::new(vec![m, n], transpose_raw(self.value(a).data(), n, m))?;
        Ok(self.push(t, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NnError> {
        let t = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(a)))
    }

    /// Concatenation of two rank-1 tensors.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.value(a).rank() != 1 || self.value(b).rank() != 1 {
            return Err(NnError::shape("concat", "rank-1 operands required"));
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let t = Tensor::from_vec(data);
        Ok(self.push(t, Op::Concat(a, b)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|v| v.max(0.0));
        self.push(t, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid_scalar);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    /// Natural logarithm; inputs must be strictly positive.
    pub fn ln(&mut self, a: Var) -> Result<Var, NnError> {
        if self.value(a).data().iter().any(|&v| v <= 0.0) {
            return Err(NnError::NonFinite("ln of non-positive value"));
        }
        let t = self.value(a).map(f64::ln);
        Ok(self.push(t, Op::Ln(a)))
    }

    /// Numerically stable softmax over a rank-1 tensor.
    pub fn softmax(&mut self, a: Var) -> Result<Var, NnError> {
        let v = self.value(a);
        if v.rank() != 1 {
            return Err(NnError::shape("softmax", format!("{:?}", v.shape())));
        }
        if !v.is_finite() {
            return Err(NnError::NonFinite("softmax input"));
        }
        let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.data().iter().map(|x| (x - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let t = Tensor::from_vec(exps.into_iter().map(|e| e / sum).collect());
        Ok(self.push(t, Op::Softmax(a)))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s / n), Op::MeanAll(a))
    }

    /// `[n,m] + [m]` broadcast over rows.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.value(a).shape(), self.value(bias).shape());
        if sa.len() != 2 || sb.len() != 1 || sa[1] != sb[0] {
            return Err(NnError::shape("add_row_bias", format!("{:?} + {:?}", sa, sb)));
        }
        let (n, m) = (sa[0], sa[1]);
        let av = self.value(a).data();
        let bv = self.value(bias).data();
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for j in 0..m {
                out.push(av[i * m + j] + bv[j]);
            }
        }
        let t = Tensor::new(vec![n, m], out)?;
        Ok(self.push(t, Op::AddRowBias(a, bias)))
    }

    /// Cross-correlation of `[c_in, d1, d2]` with kernels `[c_out, c_in, k1, k2]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var, NnError> {
        let si = self.value(input).shape().to_vec();
        let sw = self.value(weight).shape().to_vec();
        if si.len() != 3 || sw.len() != 4 || si[0] != sw[1] {
            return Err(NnError::shape("conv2d", format!("input {:?}, kernel {:?}", si, sw)));
        }
        if stride == 0 {
            return Err(NnError::shape("conv2d", "stride must be positive"));
        }
        let (c_in, d1, d2) = (si[0], si[1], si[2]);
        let (c_out, k1, k2) = (sw[0], sw[2], sw[3]);
        if k1 > d1 + 2 * pad || k2 > d2 + 2 * pad {
            return Err(NnError::shape("conv2d", "kernel larger than padded input"));
        }
        if let Some(b) = bias {
            let sb = self.value(b).shape();
            if sb != [c_out] {
                return Err(NnError::shape("conv2d", format!("bias {:?} for {} kernels", sb, c_out)));
            }
        }
        let o1 = (d1 + 2 * pad - k1) / stride + 1;
        let o2 = (d2 + 2 * pad - k2) / stride + 1;

        let xv = self.value(input).data();
        let wv = self.value(weight).data();
        let bv: Vec<f64> = match bias {
            Some(b) => self.value(b).data().to_vec(),
            None => vec![0.0; c_out],
        };
        let mut out = vec![0.0; c_out * o1 * o2];
        for oc in 0..c_out {
            for oy in 0..o1 {
                for ox in 0..o2 {
                    let mut acc = bv[oc];
                    for ic in 0..c_in {
                        let x_base = ic * d1 * d2;
                        let w_base = (oc * c_in + ic) * k1 * k2;
                        for ky in 0..k1 {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= d1 as isize {
                                continue;
                            }
                            let x_row = x_base + iy as usize * d2;
                            let w_row = w_base + ky * k2;
                            for kx in 0..k2 {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= d2 as isize {
                                    continue;
                                }
                                acc += xv[x_row + ix as usize] * wv[w_row + kx];
                            }
                        }
                    }
                    out[(oc * o1 + oy) * o2 + ox] = acc;
                }
            }
        }
        let t = Tensor::new(vec![c_out, o1, o2], out)?;
        Ok(self.push(
            t,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            },
        ))
    }

    /// `[c, d1, d2] -> [c]`, mean over the spatial axes (global average pool).
    pub fn spatial_mean(&mut self, a: Var) -> Result<Var, NnError> {
        let s = self.value(a).shape();
        if s.len() != 3 {
            return Err(NnError::shape("spatial_mean", format!("{:?}", s)));
        }
        let (c, d1, d2) = (s[0], s[1], s[2]);
        let n = (d1 * d2) as f64;
        let v = self.value(a).data();
        let out: Vec<f64> = (0..c)
            .map(|ch| v[ch * d1 * d2..(ch + 1) * d1 * d2].iter().sum::<f64>() / n)
            .collect();
        let t = Tensor::from_vec(out);
        Ok(self.push(t, Op::SpatialMean(a)))
    }

    /// `[c] -> [c, d1, d2]`, each channel value repeated over the spatial grid.
    pub fn broadcast_channel(&mut self, vec: Var, d1: usize, d2: usize) -> Result<Var, NnError> {
        let s = self.value(vec).shape();
        if s.len() != 1 {
            return Err(NnError::shape("broadcast_channel", format!("{:?}", s)));
        }
        let c = s[0];
        let v = self.value(vec).data();
        let mut out = Vec::with_capacity(c * d1 * d2);
        for ch in 0..c {
            out.extend(std::iter::repeat(v[ch]).take(d1 * d2));
        }
        let t = Tensor::new(vec![c, d1, d2], out)?;
        Ok(self.push(t, Op::BroadcastChannel { vec, d1, d2 }))
    }

    /// `[d1*d2] -> [c, d1, d2]`, each position value repeated over channels.
    pub fn broadcast_spatial(
        &mut self,
        vec: Var,
        channels: usize,
        d1: usize,
        d2: usize,
    ) -> Result<Var, NnError> {
        let s = self.value(vec).shape();
        if s.len() != 1 || s[0] != d1 * d2 {
            return Err(NnError::shape(
                "broadcast_spatial",
                format!("{:?} for {}x{} grid", s, d1, d2),
            ));
        }
        let v = self.value(vec).data();
        let mut out = Vec::with_capacity(channels * d1 * d2);
        for _ in 0..channels {
            out.extend_from_slice(v);
        }
        let t = Tensor::new(vec![channels, d1, d2], out)?;
        Ok(self.push(t, Op::BroadcastSpatial { vec, channels }))
    }

    /// Reverse sweep from a scalar root. Returns per-node gradients.
    pub fn backward(&self, root: Var) -> Result<Gradients, NnError> {
        if self.value(root).numel() != 1 {
            return Err(NnError::shape("backward", "root must be a scalar"));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));

        for id in (0..=root.0).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate_parents(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate_parents(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        match node.op {
            Op::Leaf { .. } => {}
            Op::Add(a, b) => {
                accumulate(grads, a, self.value(a).shape(), g.data(), 1.0);
                accumulate(grads, b, self.value(b).shape(), g.data(), 1.0);
            }
            Op::Sub(a, b) => {
                accumulate(grads, a, self.value(a).shape(), g.data(), 1.0);
                accumulate(grads, b, self.value(b).shape(), g.data(), -1.0);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(b).data())
                    .map(|(gi, bi)| gi * bi)
                    .collect();
                let db: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(gi, ai)| gi * ai)
                    .collect();
                accumulate(grads, a, self.value(a).shape(), &da, 1.0);
                accumulate(grads, b, self.value(b).shape(), &db, 1.0);
            }
            Op::Scale(a, c) => accumulate(grads, a, self.value(a).shape(), g.data(), c),
            Op::AddScalar(a) => accumulate(grads, a, self.value(a).shape(), g.data(), 1.0),
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                // dA = G B^T, dB = A^T G
                let bt = transpose_raw(self.value(b).data(), k, m);
                let da = matmul_raw(g.data(), &bt, n, m, k);
                let at = transpose_raw(self.value(a).data(), n, k);
                let db = matmul_raw(&at, g.data(), k, n, m);
                accumulate(grads, a, sa, &da, 1.0);
                accumulate(grads, b, sb, &db, 1.0);
            }
            Op::MatVec(a, x) => {
                let sa = self.value(a).shape();
                let (n, k) = (sa[0], sa[1]);
                let xv = self.value(x).data();
                let av = self.value(a).data();
                let gv = g.data();
                let mut da = vec![0.0; n * k];
                let mut dx = vec![0.0; k];
                for i in 0..n {
                    for j in 0..k {
                        da[i * k + j] = gv[i] * xv[j];
                        dx[j] += av[i * k + j] * gv[i];
                    }
                }
                accumulate(grads, a, sa, &da, 1.0);
                accumulate(grads, x, self.value(x).shape(), &dx, 1.0);
            }
            Op::Transpose(a) => {
                let s = g.shape();
                let gt = transpose_raw(g.data(), s[0], s[1]);
                accumulate(grads, a, self.value(a).shape(), &gt, 1.0);
            }
            Op::Reshape(a) => accumulate(grads, a, self.value(a).shape(), g.data(), 1.0),
            Op::Concat(a, b) => {
                let na = self.value(a).numel();
                accumulate(grads, a, self.value(a).shape(), &g.data()[..na], 1.0);
                accumulate(grads, b, self.value(b).shape(), &g.data()[na..], 1.0);
            }
            Op::Relu(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(gi, ai)| if *ai > 0.0 { *gi } else { 0.0 })
                    .collect();
                accumulate(grads, a, self.value(a).shape(), &da, 1.0);
            }
            Op::Sigmoid(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(gi, si)| gi * si * (1.0 - si))
                    .collect();
                accumulate(grads, a, self.value(a).shape(), &da, 1.0);
            }
            Op::Tanh(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(gi, ti)| gi * (1.0 - ti * ti))
                    .collect();
                accumulate(grads, a, self.value(a).shape(), &da, 1.0);
            }
            Op::Ln(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(a).data())
                    .map(|(gi, ai)| gi / ai)
                    .collect();
                accumulate(grads, a, self.value(a).shape(), &da, 1.0);
            }
            Op::Softmax(a) => {
                // dx = v .* (g - <g, v>)
                let v = node.value.data();
                let dot: f64 = g.data().iter().zip(v).map(|(gi, vi)| gi * vi).sum();
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(v)
                    .map(|(gi, vi)| vi * (gi - dot))
                    .collect();
                accumulate(grads, a, self.value(a).shape(), &da, 1.0);
            }
            Op::SumAll(a) => {
                let da = vec![g.item(); self.value(a).numel()];
                accumulate(grads, a, self.value(a).shape(), &da, 1.0);
            }
            Op::MeanAll(a) => {
                let n = self.value(a).numel();
                let da = vec![g.item() / n as f64; n];
                accumulate(grads, a, self.value(a).shape(), &da, 1.0);
            }
            Op::AddRowBias(a, bias) => {
                let sa = self.value(a).shape();
                let (n, m) = (sa[0], sa[1]);
                accumulate(grads, a, sa, g.data(), 1.0);
                let mut db = vec![0.0; m];
                for i in 0..n {
                    for j in 0..m {
                        db[j] += g.data()[i * m + j];
                    }
                }
                accumulate(grads, bias, self.value(bias).shape(), &db, 1.0);
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                self.conv2d_backward(input, weight, bias, stride, pad, g, grads);
            }
            Op::SpatialMean(a) => {
                let s = self.value(a).shape();
                let (c, d1, d2) = (s[0], s[1], s[2]);
                let n = (d1 * d2) as f64;
                let mut da = vec![0.0; c * d1 * d2];
                for ch in 0..c {
                    let gc = g.data()[ch] / n;
                    for v in &mut da[ch * d1 * d2..(ch + 1) * d1 * d2] {
                        *v = gc;
                    }
                }
                accumulate(grads, a, s, &da, 1.0);
            }
            Op::BroadcastChannel { vec, d1, d2 } => {
                let c = self.value(vec).numel();
                let mut dv = vec![0.0; c];
                for ch in 0..c {
                    dv[ch] = g.data()[ch * d1 * d2..(ch + 1) * d1 * d2].iter().sum();
                }
                accumulate(grads, vec, self.value(vec).shape(), &dv, 1.0);
            }
            Op::BroadcastSpatial { vec, channels } => {
                let n = self.value(vec).numel();
                let mut dv = vec![0.0; n];
                for ch in 0..channels {
                    for (j, slot) in dv.iter_mut().enumerate() {
                        *slot += g.data()[ch * n + j];
                    }
                }
                accumulate(grads, vec, self.value(vec).shape(), &dv, 1.0);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv2d_backward(
        &self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let si = self.value(input).shape();
        let sw = self.value(weight).shape();
        let (c_in, d1, d2) = (si[0], si[1], si[2]);
        let (c_out, k1, k2) = (sw[0], sw[2], sw[3]);
        let so = g.shape();
        let (o1, o2) = (so[1], so[2]);
        let xv = self.value(input).data();
        let wv = self.value(weight).data();
        let gv = g.data();

        let mut dx = vec![0.0; c_in * d1 * d2];
        let mut dw = vec![0.0; c_out * c_in * k1 * k2];
        for oc in 0..c_out {
            for oy in 0..o1 {
                for ox in 0..o2 {
                    let go = gv[(oc * o1 + oy) * o2 + ox];
                    if go == 0.0 {
                        continue;
                    }
                    for ic in 0..c_in {
                        let x_base = ic * d1 * d2;
                        let w_base = (oc * c_in + ic) * k1 * k2;
                        for ky in 0..k1 {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= d1 as isize {
                                continue;
                            }
                            let x_row = x_base + iy as usize * d2;
                            let w_row = w_base + ky * k2;
                            for kx in 0..k2 {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= d2 as isize {
                                    continue;
                                }
                                dx[x_row + ix as usize] += go * wv[w_row + kx];
                                dw[w_row + kx] += go * xv[x_row + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        accumulate(grads, input, si, &dx, 1.0);
        accumulate(grads, weight, sw, &dw, 1.0);
        if let Some(b) = bias {
            let mut db = vec![0.0; c_out];
            for oc in 0..c_out {
                db[oc] = gv[oc * o1 * o2..(oc + 1) * o1 * o2].iter().sum();
            }
            accumulate(grads, b, self.value(b).shape(), &db, 1.0);
        }
    }

    /// True when the node is a trainable leaf.
    pub fn is_trainable_leaf(&self, var: Var) -> bool {
        matches!(self.nodes[var.0].op, Op::Leaf { trainable: true })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], var: Var, shape: &[usize], contrib: &[f64], factor: f64) {
    match &mut grads[var.0] {
        Some(existing) => {
            for (e, c) in existing.data_mut().iter_mut().zip(contrib) {
                *e += factor * c;
            }
        }
        None => {
            let data: Vec<f64> = contrib.iter().map(|c| factor * c).collect();
            grads[var.0] = Some(Tensor::new(shape.to_vec(), data).expect("gradient shape"));
        }
    }
}

fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[l * m..(l + 1) * m];
            let o_row = &mut out[i * m..(i + 1) * m];
            for j in 0..m {
                o_row[j] += av * b_row[j];
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a[i * m + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn var1(tape: &mut Tape, data: Vec<f64>) -> Var {
        tape.leaf(Tensor::from_vec(data))
    }

    #[test]
    fn add_mul_backward() {
        // y = sum((a + b) * a)
        let mut tape = Tape::new();
        let a = var1(&mut tape, vec![1.0, 2.0]);
        let b = var1(&mut tape, vec![3.0, -1.0]);
        let s = tape.add(a, b).unwrap();
        let p = tape.mul(s, a).unwrap();
        let y = tape.sum_all(p);
        assert_eq!(tape.value(y).item(), 4.0 + 2.0);
        let g = tape.backward(y).unwrap();
        // dy/da = (a + b) + a, dy/db = a
        assert_eq!(g.get(a).unwrap().data(), &[5.0, 3.0]);
        assert_eq!(g.get(b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn softmax_rejects_nan() {
        let mut tape = Tape::new();
        let a = var1(&mut tape, vec![0.0, f64::NAN]);
        assert!(tape.softmax(a).is_err());
    }

    #[test]
    fn softmax_uniform_and_sum() {
        let mut tape = Tape::new();
        let a = var1(&mut tape, vec![4.2, 4.2, 4.2]);
        let v = tape.softmax(a).unwrap();
        for &x in tape.value(v).data() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let b = var1(&mut tape, vec![0.0, 500.0]);
        let vb = tape.softmax(b).unwrap();
        let d = tape.value(vb).data();
        assert!(d[0] < 1e-12 && (d[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let eye = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let w = tape.leaf(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = tape.matmul(eye, w).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::zeros(&[2, 3]));
        assert!(tape.matmul(a, b).is_err());
    }

    #[test]
    fn conv2d_one_by_one_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::new(vec![1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let w = tape.leaf(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap());
        let y = tape.conv2d(x, w, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 2, 3]);
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn conv2d_all_ones_valid() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::filled(&[1, 4, 4], 1.0));
        let w = tape.leaf(Tensor::filled(&[1, 1, 3, 3], 1.0));
        let y = tape.conv2d(x, w, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 2, 2]);
        assert!(tape.value(y).data().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn broadcast_roundtrip_gradients() {
        // sum(broadcast_channel(v)) pushes d1*d2 into each channel grad.
        let mut tape = Tape::new();
        let v = var1(&mut tape, vec![1.0, -2.0]);
        let b = tape.broadcast_channel(v, 3, 4).unwrap();
        let y = tape.sum_all(b);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(v).unwrap().data(), &[12.0, 12.0]);
    }
}
