//! Minimal dense-array arithmetic with reverse-mode automatic
//! differentiation, 64-bit floats throughout.
//!
//! A [`Tape`] records executed operations in order; [`backward`] replays
//! them in reverse, accumulating gradients into per-node buffers. Tensors
//! are immutable after construction. Row-major layout; the only
//! broadcasting is a trailing-dimension bias add.

use std::cell::RefCell;
use std::rc::Rc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("operands were created on different tapes")]
    TapeMismatch,
    #[error("backward called on an untracked tensor")]
    Untracked,
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>>>;

struct Node {
    /// Parent node ids aligned with the backward closure's output; None
    /// for untracked inputs.
    parents: Vec<Option<usize>>,
    numel: usize,
    backward: Option<BackwardFn>,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// Ordered record of executed differentiable operations. Cheap to clone
/// (shared handle); single-threaded by construction.
#[derive(Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tracked leaf: gradients accumulate here during backward.
    pub fn var(&self, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        check_len("var", &data, shape)?;
        check_finite("var", &data)?;
        let id = self.push(Node {
            parents: vec![],
            numel: data.len(),
            backward: None,
        });
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Rc::new(data),
            node: Some(NodeRef { tape: self.clone(), id }),
        })
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> usize {
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(node);
        inner.grads.push(None);
        inner.nodes.len() - 1
    }

    fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

#[derive(Clone)]
struct NodeRef {
    tape: Tape,
    id: usize,
}

/// Immutable dense row-major f64 array, optionally tracked on a tape.
#[derive(Clone)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Rc<Vec<f64>>,
    node: Option<NodeRef>,
}

impl Tensor {
    /// An untracked constant; no gradient flows into it.
    pub fn constant(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        check_len("constant", &data, shape)?;
        check_finite("constant", &data)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Rc::new(data),
            node: None,
        })
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            shape: vec![],
            data: Rc::new(vec![v]),
            node: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// Scalar value; panics if not a scalar.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Accumulated gradient after `backward`, if this tensor is tracked.
    pub fn grad(&self) -> Option<Vec<f64>> {
        let node = self.node.as_ref()?;
        node.tape.inner.borrow().grads[node.id].clone()
    }

    fn rows_cols(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.len() != 2 {
            return Err(NumericsError::ShapeMismatch {
                op,
                detail: format!("expected 2-D, got {:?}", self.shape),
            });
        }
        Ok((self.shape[0], self.shape[1]))
    }

    /// Last-dimension size, treating 1-D as a single row.
    fn last_dim(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }
}

fn check_len(op: &'static str, data: &[f64], shape: &[usize]) -> Result<()> {
    let n: usize = shape.iter().product();
    if data.len() != n {
        return Err(NumericsError::ShapeMismatch {
            op,
            detail: format!("data length {} vs shape {:?}", data.len(), shape),
        });
    }
    Ok(())
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(NumericsError::NonFinite { op });
    }
    Ok(())
}

/// Builds the output tensor and, when any input is tracked, records a
/// tape node. The backward closure returns one gradient slot per input,
/// aligned with `inputs`; slots for untracked inputs are ignored.
fn make_output<F>(
    op: &'static str,
    data: Vec<f64>,
    shape: Vec<usize>,
    inputs: &[&Tensor],
    backward: F,
) -> Result<Tensor>
where
    F: Fn(&[f64]) -> Vec<Option<Vec<f64>>> + 'static,
{
    check_len(op, &data, &shape)?;
    check_finite(op, &data)?;
    let mut tape: Option<Tape> = None;
    for t in inputs {
        if let Some(nref) = &t.node {
            match &tape {
                None => tape = Some(nref.tape.clone()),
                Some(existing) if existing.same_tape(&nref.tape) => {}
                Some(_) => return Err(NumericsError::TapeMismatch),
            }
        }
    }
    let node = match tape {
        None => None,
        Some(tape) => {
            let parents: Vec<Option<usize>> =
                inputs.iter().map(|t| t.node.as_ref().map(|n| n.id)).collect();
            let id = tape.push(Node {
                parents,
                numel: data.len(),
                backward: Some(Box::new(backward)),
            });
            Some(NodeRef { tape, id })
        }
    };
    Ok(Tensor {
        shape,
        data: Rc::new(data),
        node,
    })
}

/// Records a node whose gradient w.r.t. its single input is supplied by
/// `grad_fn`. Used by operations with handwritten gradients (CTC loss).
pub(crate) fn custom_unary<F>(
    op: &'static str,
    input: &Tensor,
    data: Vec<f64>,
    shape: Vec<usize>,
    grad_fn: F,
) -> Result<Tensor>
where
    F: Fn(&[f64]) -> Vec<f64> + 'static,
{
    make_output(op, data, shape, &[input], move |g| vec![Some(grad_fn(g))])
}

/// Reverse sweep from a scalar loss. Visits each node exactly once in
/// reverse execution order; leaf gradients stay readable via
/// [`Tensor::grad`] afterwards.
pub fn backward(loss: &Tensor) -> Result<()> {
    if !loss.shape.is_empty() && loss.numel() != 1 {
        return Err(NumericsError::NonScalarLoss(loss.shape.clone()));
    }
    let nref = loss.node.as_ref().ok_or(NumericsError::Untracked)?;
    let mut inner = nref.tape.inner.borrow_mut();
    if inner.nodes.is_empty() {
        return Err(NumericsError::Untracked);
    }
    for g in inner.grads.iter_mut() {
        *g = None;
    }
    inner.grads[nref.id] = Some(vec![1.0]);
    for id in (0..=nref.id).rev() {
        let Some(out_grad) = inner.grads[id].clone() else {
            continue;
        };
        let Some(bw) = inner.nodes[id].backward.as_ref() else {
            continue; // leaf
        };
        let contribs = bw(&out_grad);
        let parents = inner.nodes[id].parents.clone();
        for (slot, contrib) in parents.iter().zip(contribs) {
            let (Some(pid), Some(c)) = (slot, contrib) else {
                continue;
            };
            let numel = inner.nodes[*pid].numel;
            debug_assert_eq!(c.len(), numel, "gradient length mismatch");
            let acc = inner.grads[*pid].get_or_insert_with(|| vec![0.0; numel]);
            for (a, v) in acc.iter_mut().zip(&c) {
                *a += v;
            }
        }
        // Interior gradients are dropped once consumed; leaves keep theirs.
        if inner.nodes[id].backward.is_some() && id != nref.id {
            inner.grads[id] = None;
        }
    }
    Ok(())
}

// ── elementwise and structural ops ───────────────────────────────────

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(NumericsError::ShapeMismatch {
                op: "add",
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        let data: Vec<f64> = self.data.iter().zip(other.data.iter()).map(|(a, b)| a + b).collect();
        make_output("add", data, self.shape.clone(), &[self, other], |g| {
            vec![Some(g.to_vec()), Some(g.to_vec())]
        })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.add(&other.scale(-1.0)?)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(NumericsError::ShapeMismatch {
                op: "mul",
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        let data: Vec<f64> = self.data.iter().zip(other.data.iter()).map(|(a, b)| a * b).collect();
        let (a, b) = (self.data.clone(), other.data.clone());
        make_output("mul", data, self.shape.clone(), &[self, other], move |g| {
            vec![
                Some(g.iter().zip(b.iter()).map(|(g, b)| g * b).collect()),
                Some(g.iter().zip(a.iter()).map(|(g, a)| g * a).collect()),
            ]
        })
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        let data: Vec<f64> = self.data.iter().map(|v| v * c).collect();
        make_output("scale", data, self.shape.clone(), &[self], move |g| {
            vec![Some(g.iter().map(|v| v * c).collect())]
        })
    }

    /// Broadcasting add of a length-n bias over the trailing dimension.
    pub fn add_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let n = self.last_dim();
        if bias.shape != [n] {
            return Err(NumericsError::ShapeMismatch {
                op: "add_bias",
                detail: format!("bias {:?} vs trailing dim {}", bias.shape, n),
            });
        }
        let data: Vec<f64> = self
            .data
            .iter()
            .enumerate()
            .map(|(i, v)| v + bias.data[i % n])
            .collect();
        make_output("add_bias", data, self.shape.clone(), &[self, bias], move |g| {
            let mut bg = vec![0.0; n];
            for (i, v) in g.iter().enumerate() {
                bg[i % n] += v;
            }
            vec![Some(g.to_vec()), Some(bg)]
        })
    }

    pub fn relu(&self) -> Result<Tensor> {
        let data: Vec<f64> = self.data.iter().map(|v| v.max(0.0)).collect();
        let x = self.data.clone();
        make_output("relu", data, self.shape.clone(), &[self], move |g| {
            vec![Some(
                g.iter().zip(x.iter()).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect(),
            )]
        })
    }

    pub fn sum(&self) -> Result<Tensor> {
        let s: f64 = self.data.iter().sum();
        let n = self.numel();
        make_output("sum", vec![s], vec![], &[self], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel() as f64;
        self.sum()?.scale(1.0 / n)
    }

    /// Free reinterpretation of the row-major buffer.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        check_len("reshape", &self.data, shape)?;
        make_output("reshape", self.data.as_ref().clone(), shape.to_vec(), &[self], |g| {
            vec![Some(g.to_vec())]
        })
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.rows_cols("transpose")?;
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = self.data[i * n + j];
            }
        }
        make_output("transpose", data, vec![n, m], &[self], move |g| {
            let mut gx = vec![0.0; m * n];
            for j in 0..n {
                for i in 0..m {
                    gx[i * n + j] = g[j * m + i];
                }
            }
            vec![Some(gx)]
        })
    }

    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor> {
        let (m, n) = self.rows_cols("slice_rows")?;
        if start > end || end > m {
            return Err(NumericsError::ShapeMismatch {
                op: "slice_rows",
                detail: format!("range {}..{} of {} rows", start, end, m),
            });
        }
        let data = self.data[start * n..end * n].to_vec();
        make_output("slice_rows", data, vec![end - start, n], &[self], move |g| {
            let mut gx = vec![0.0; m * n];
            gx[start * n..end * n].copy_from_slice(g);
            vec![Some(gx)]
        })
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        let (m, n) = self.rows_cols("slice_cols")?;
        if start > end || end > n {
            return Err(NumericsError::ShapeMismatch {
                op: "slice_cols",
                detail: format!("range {}..{} of {} cols", start, end, n),
            });
        }
        let w = end - start;
        let mut data = vec![0.0; m * w];
        for i in 0..m {
            data[i * w..(i + 1) * w].copy_from_slice(&self.data[i * n + start..i * n + end]);
        }
        make_output("slice_cols", data, vec![m, w], &[self], move |g| {
            let mut gx = vec![0.0; m * n];
            for i in 0..m {
                gx[i * n + start..i * n + end].copy_from_slice(&g[i * w..(i + 1) * w]);
            }
            vec![Some(gx)]
        })
    }

    /// Each row repeated `k` times in place: row i becomes rows k·i..k·i+k.
    pub fn repeat_rows(&self, k: usize) -> Result<Tensor> {
        let (m, n) = self.rows_cols("repeat_rows")?;
        if k == 0 {
            return Err(NumericsError::Invalid("repeat_rows with k=0".into()));
        }
        let mut data = Vec::with_capacity(m * k * n);
        for i in 0..m {
            for _ in 0..k {
                data.extend_from_slice(&self.data[i * n..(i + 1) * n]);
            }
        }
        make_output("repeat_rows", data, vec![m * k, n], &[self], move |g| {
            let mut gx = vec![0.0; m * n];
            for i in 0..m {
                for r in 0..k {
                    for j in 0..n {
                        gx[i * n + j] += g[(i * k + r) * n + j];
                    }
                }
            }
            vec![Some(gx)]
        })
    }

    /// Zero-pads rows at the end up to `rows`.
    pub fn pad_rows(&self, rows: usize) -> Result<Tensor> {
        let (m, n) = self.rows_cols("pad_rows")?;
        if rows < m {
            return Err(NumericsError::ShapeMismatch {
                op: "pad_rows",
                detail: format!("cannot pad {} rows down to {}", m, rows),
            });
        }
        let mut data = self.data.as_ref().clone();
        data.resize(rows * n, 0.0);
        make_output("pad_rows", data, vec![rows, n], &[self], move |g| {
            vec![Some(g[..m * n].to_vec())]
        })
    }
}

/// Concatenates 2-D tensors along rows; all must share the column count.
pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(NumericsError::Invalid("concat_rows of nothing".into()));
    }
    let n = parts[0].rows_cols("concat_rows")?.1;
    let mut data = Vec::new();
    let mut row_counts = Vec::new();
    for p in parts {
        let (m, pn) = p.rows_cols("concat_rows")?;
        if pn != n {
            return Err(NumericsError::ShapeMismatch {
                op: "concat_rows",
                detail: format!("{} vs {} cols", pn, n),
            });
        }
        row_counts.push(m);
        data.extend_from_slice(p.data());
    }
    let total: usize = row_counts.iter().sum();
    make_output("concat_rows", data, vec![total, n], parts, move |g| {
        let mut out = Vec::with_capacity(row_counts.len());
        let mut off = 0;
        for m in &row_counts {
            out.push(Some(g[off..off + m * n].to_vec()));
            off += m * n;
        }
        out
    })
}

/// Concatenates 2-D tensors along columns; all must share the row count.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(NumericsError::Invalid("concat_cols of nothing".into()));
    }
    let m = parts[0].rows_cols("concat_cols")?.0;
    let widths: Vec<usize> = parts
        .iter()
        .map(|p| p.rows_cols("concat_cols").map(|(pm, pn)| if pm == m { pn } else { usize::MAX }))
        .collect::<Result<_>>()?;
    if widths.contains(&usize::MAX) {
        return Err(NumericsError::ShapeMismatch {
            op: "concat_cols",
            detail: "row counts differ".into(),
        });
    }
    let total: usize = widths.iter().sum();
    let mut data = vec![0.0; m * total];
    let mut off = 0;
    for (p, w) in parts.iter().zip(&widths) {
        for i in 0..m {
            data[i * total + off..i * total + off + w].copy_from_slice(&p.data()[i * w..(i + 1) * w]);
        }
        off += w;
    }
    let widths_b = widths.clone();
    make_output("concat_cols", data, vec![m, total], parts, move |g| {
        let mut out = Vec::with_capacity(widths_b.len());
        let mut off = 0;
        for w in &widths_b {
            let mut gx = vec![0.0; m * w];
            for i in 0..m {
                gx[i * w..(i + 1) * w].copy_from_slice(&g[i * total + off..i * total + off + w]);
            }
            out.push(Some(gx));
            off += w;
        }
        out
    })
}

impl Tensor {
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.rows_cols("matmul")?;
        let (k2, n) = other.rows_cols("matmul")?;
        if k != k2 {
            return Err(NumericsError::ShapeMismatch {
                op: "matmul",
                detail: format!("{:?} x {:?}", self.shape, other.shape),
            });
        }
        let a = self.data.clone();
        let b = other.data.clone();
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = a[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let brow = &b[p * n..(p + 1) * n];
                let crow = &mut data[i * n..(i + 1) * n];
                for j in 0..n {
                    crow[j] += av * brow[j];
                }
            }
        }
        make_output("matmul", data, vec![m, n], &[self, other], move |g| {
            // dA = g · B^T, dB = A^T · g
            let mut ga = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += g[i * n + j] * b[p * n + j];
                    }
                    ga[i * k + p] = s;
                }
            }
            let mut gb = vec![0.0; k * n];
            for p in 0..k {
                for i in 0..m {
                    let av = a[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        gb[p * n + j] += av * g[i * n + j];
                    }
                }
            }
            vec![Some(ga), Some(gb)]
        })
    }

    /// Row-wise softmax over the trailing dimension.
    pub fn softmax(&self) -> Result<Tensor> {
        let n = self.last_dim();
        let mut data = self.data.as_ref().clone();
        for row in data.chunks_mut(n) {
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - hi).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let y = data.clone();
        make_output("softmax", data, self.shape.clone(), &[self], move |g| {
            let mut gx = vec![0.0; y.len()];
            for (r, (yr, gr)) in y.chunks(n).zip(g.chunks(n)).enumerate() {
                let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                for j in 0..n {
                    gx[r * n + j] = yr[j] * (gr[j] - dot);
                }
            }
            vec![Some(gx)]
        })
    }

    /// Row-wise log-softmax via max shift.
    pub fn log_softmax(&self) -> Result<Tensor> {
        let n = self.last_dim();
        let mut data = self.data.as_ref().clone();
        for row in data.chunks_mut(n) {
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = hi + row.iter().map(|v| (v - hi).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let logp = data.clone();
        make_output("log_softmax", data, self.shape.clone(), &[self], move |g| {
            let mut gx = vec![0.0; logp.len()];
            for (r, (lr, gr)) in logp.chunks(n).zip(g.chunks(n)).enumerate() {
                let gsum: f64 = gr.iter().sum();
                for j in 0..n {
                    gx[r * n + j] = gr[j] - lr[j].exp() * gsum;
                }
            }
            vec![Some(gx)]
        })
    }

    /// Row-wise layer normalization over the trailing dimension with
    /// learned gain and bias.
    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        let n = self.last_dim();
        if gain.shape != [n] || bias.shape != [n] {
            return Err(NumericsError::ShapeMismatch {
                op: "layer_norm",
                detail: format!("gain {:?} bias {:?} vs dim {}", gain.shape, bias.shape, n),
            });
        }
        let rows = self.numel() / n;
        let mut xhat = vec![0.0; self.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut data = vec![0.0; self.numel()];
        for r in 0..rows {
            let row = &self.data[r * n..(r + 1) * n];
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..n {
                let xh = (row[j] - mu) * is;
                xhat[r * n + j] = xh;
                data[r * n + j] = xh * gain.data[j] + bias.data[j];
            }
        }
        let gdat = gain.data.clone();
        make_output("layer_norm", data, self.shape.clone(), &[self, gain, bias], move |g| {
            let mut gx = vec![0.0; xhat.len()];
            let mut gg = vec![0.0; n];
            let mut gb = vec![0.0; n];
            for r in 0..rows {
                let gr = &g[r * n..(r + 1) * n];
                let xh = &xhat[r * n..(r + 1) * n];
                let mut dy_sum = 0.0;
                let mut dyxh_sum = 0.0;
                for j in 0..n {
                    let dy = gr[j] * gdat[j];
                    dy_sum += dy;
                    dyxh_sum += dy * xh[j];
                    gg[j] += gr[j] * xh[j];
                    gb[j] += gr[j];
                }
                let inv_n = 1.0 / n as f64;
                for j in 0..n {
                    let dy = gr[j] * gdat[j];
                    gx[r * n + j] = inv_std[r] * (dy - inv_n * dy_sum - xh[j] * inv_n * dyxh_sum);
                }
            }
            vec![Some(gx), Some(gg), Some(gb)]
        })
    }
}

/// Row lookup into an embedding table: output row i is `table[ids[i]]`.
pub fn embed_lookup(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
    let (v, d) = table.rows_cols("embed_lookup")?;
    if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
        return Err(NumericsError::Invalid(format!(
            "embed_lookup id {} out of range {}",
            bad, v
        )));
    }
    let mut data = Vec::with_capacity(ids.len() * d);
    for &i in ids {
        data.extend_from_slice(&table.data()[i * d..(i + 1) * d]);
    }
    let ids = ids.to_vec();
    make_output("embed_lookup", data, vec![ids.len(), d], &[table], move |g| {
        let mut gt = vec![0.0; v * d];
        for (r, &i) in ids.iter().enumerate() {
            for j in 0..d {
                gt[i * d + j] += g[r * d + j];
            }
        }
        vec![Some(gt)]
    })
}

/// Per-row gather: output[i] = x[i, idx[i]].
pub fn pick(x: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let (m, n) = x.rows_cols("pick")?;
    if idx.len() != m {
        return Err(NumericsError::ShapeMismatch {
            op: "pick",
            detail: format!("{} indices vs {} rows", idx.len(), m),
        });
    }
    if let Some(&bad) = idx.iter().find(|&&j| j >= n) {
        return Err(NumericsError::Invalid(format!("pick index {} out of range {}", bad, n)));
    }
    let data: Vec<f64> = idx.iter().enumerate().map(|(i, &j)| x.data()[i * n + j]).collect();
    let idx = idx.to_vec();
    make_output("pick", data, vec![m], &[x], move |g| {
        let mut gx = vec![0.0; m * n];
        for (i, &j) in idx.iter().enumerate() {
            gx[i * n + j] = g[i];
        }
        vec![Some(gx)]
    })
}

// ── gradient checking ────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub n_elements: usize,
    pub passed: bool,
}

/// Compares tape gradients of a scalar-valued function against central
/// finite differences. Relative error uses denominator max(|a|+|b|, 1).
pub fn grad_check<F>(f: F, x0: &[f64], shape: &[usize], eps: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&Tape, &Tensor) -> Result<Tensor>,
{
    let tape = Tape::new();
    let x = tape.var(x0.to_vec(), shape)?;
    let loss = f(&tape, &x)?;
    backward(&loss)?;
    let analytic = x.grad().unwrap_or_else(|| vec![0.0; x0.len()]);

    let eval = |xs: &[f64]| -> Result<f64> {
        let t = Tape::new();
        let xt = t.var(xs.to_vec(), shape)?;
        Ok(f(&t, &xt)?.item())
    };
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut xs = x0.to_vec();
    for i in 0..xs.len() {
        let orig = xs[i];
        xs[i] = orig + eps;
        let fp = eval(&xs)?;
        xs[i] = orig - eps;
        let fm = eval(&xs)?;
        xs[i] = orig;
        let fd = (fp - fm) / (2.0 * eps);
        let abs = (analytic[i] - fd).abs();
        let rel = abs / (analytic[i].abs() + fd.abs()).max(1.0);
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(rel);
    }
    Ok(GradCheckReport {
        max_rel_err: max_rel,
        max_abs_err: max_abs,
        n_elements: xs.len(),
        passed: max_rel <= tol,
    })
}
