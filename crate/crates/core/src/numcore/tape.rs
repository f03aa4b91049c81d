//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every forward op executes eagerly, stores its result in the tape arena and
//! records enough to replay the chain rule in reverse. The tape is rebuilt per
//! batch; nodes are appended in execution order, so topological order holds by
//! construction and backward visits each node exactly once.

use crate::error::{Error, Result};
use crate::numcore::array::Array;

/// Exponent arguments are clamped here before `exp` so sigmoid/softmax can
/// never overflow; at f64 resolution the clamp does not change results.
pub const EXP_CLAMP: f64 = 40.0;

/// Probabilities are clamped to this epsilon before any `log`.
pub const LOG_EPS: f64 = 1e-12;

/// Handle to a value stored on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// c = a (m×k) × b (k×n)
    MatMul { a: Var, b: Var },
    /// c = a (m×k) × bᵀ with b stored n×k
    MatMulNT { a: Var, b: Var },
    Add { a: Var, b: Var },
    /// Elementwise product, same shapes.
    Mul { a: Var, b: Var },
    /// Every element of `a` plus the scalar `s`.
    AddScalar { a: Var, s: Var },
    /// Every element of `a` times the scalar `s`.
    MulScalar { a: Var, s: Var },
    ScaleConst { a: Var, c: f64 },
    Sigmoid { a: Var },
    Tanh { a: Var },
    SoftmaxRows { a: Var },
    /// Row vectors concatenated along columns.
    Concat { parts: Vec<Var> },
    /// Single-row inputs stacked into a matrix.
    StackRows { parts: Vec<Var> },
    /// Column slice, any row count.
    SliceCols { a: Var, start: usize },
    SumAll { a: Var },
    /// Sum of table rows; backward scatter-adds into the table.
    EmbedSum { table: Var, ids: Vec<usize> },
    /// Binary cross-entropy of probabilities against constant targets.
    Bce { p: Var, targets: Vec<f64> },
    /// −log(p[index]) with epsilon clamping.
    NegLogPick { p: Var, index: usize },
    /// out[v] += src[k]/|group k| for v in group k; empty groups contribute 0.
    CopyScatter { src: Var, groups: Vec<Vec<usize>> },
    /// Zero-pad a single row on the right.
    PadCols { a: Var },
    /// Set the listed columns to −∞ (softmax masking); grads stop there.
    MaskCols { a: Var, cols: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    op: Op,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    grad: Vec<f64>,
    needs_grad: bool,
}

/// The recording arena. All model math goes through its methods.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid_scalar(x: f64) -> f64 {
    let x = x.clamp(-EXP_CLAMP, EXP_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Copy an [`Array`] in as a leaf; the leaf participates in backward iff
    /// the array requires grad.
    pub fn leaf(&mut self, array: &Array) -> Var {
        let (rows, cols) = array.dims2();
        self.push(
            Op::Leaf,
            rows,
            cols,
            array.values().to_vec(),
            array.requires_grad(),
        )
    }

    /// A constant row vector that never receives gradient.
    pub fn constant_row(&mut self, values: Vec<f64>) -> Var {
        let cols = values.len();
        self.push(Op::Leaf, 1, cols, values, false)
    }

    pub fn constant_scalar(&mut self, v: f64) -> Var {
        self.push(Op::Leaf, 1, 1, vec![v], false)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].values
    }

    pub fn value_scalar(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].values.len(), 1);
        self.nodes[v.0].values[0]
    }

    /// Gradient buffer of a node; zeros until backward has run.
    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    fn push(&mut self, op: Op, rows: usize, cols: usize, values: Vec<f64>, needs_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, values.len());
        self.nodes.push(Node {
            op,
            rows,
            cols,
            values,
            grad: Vec::new(),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> Error {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        Error::ShapeMismatch {
            op,
            lhs: vec![ar, ac],
            rhs: vec![br, bc],
        }
    }

    // ── Forward ops ─────────────────────────────────────────────────────

    /// Standard matrix product a (m×k) × b (k×n).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(self.shape_err("matmul", a, b));
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMul { a, b }, m, n, out, ng))
    }

    /// a (m×k) × bᵀ where b is stored n×k. Used for attention scores.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (n, k2) = self.shape(b);
        if k != k2 {
            return Err(self.shape_err("matmul_nt", a, b));
        }
        let av = &self.nodes[a.0].values;
        let bv = &self.nodes[b.0].values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            for j in 0..n {
                let brow = &bv[j * k..(j + 1) * k];
                out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::MatMulNT { a, b }, m, n, out, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(b) != (m, n) {
            return Err(self.shape_err("add", a, b));
        }
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add { a, b }, m, n, out, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        if self.shape(b) != (m, n) {
            return Err(self.shape_err("mul", a, b));
        }
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x * y)
            .collect();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Mul { a, b }, m, n, out, ng))
    }

    pub fn add_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(self.shape_err("add_scalar", a, s));
        }
        let (m, n) = self.shape(a);
        let sv = self.nodes[s.0].values[0];
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x + sv).collect();
        let ng = self.needs(a) || self.needs(s);
        Ok(self.push(Op::AddScalar { a, s }, m, n, out, ng))
    }

    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(self.shape_err("mul_scalar", a, s));
        }
        let (m, n) = self.shape(a);
        let sv = self.nodes[s.0].values[0];
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x * sv).collect();
        let ng = self.needs(a) || self.needs(s);
        Ok(self.push(Op::MulScalar { a, s }, m, n, out, ng))
    }

    pub fn scale_const(&mut self, a: Var, c: f64) -> Var {
        let (m, n) = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x * c).collect();
        let ng = self.needs(a);
        self.push(Op::ScaleConst { a, c }, m, n, out, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| sigmoid_scalar(x))
            .collect();
        let ng = self.needs(a);
        self.push(Op::Sigmoid { a }, m, n, out, ng)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let out: Vec<f64> = self.nodes[a.0].values.iter().map(|x| x.tanh()).collect();
        let ng = self.needs(a);
        self.push(Op::Tanh { a }, m, n, out, ng)
    }

    /// Row-wise softmax. Entries of −∞ get zero mass; a row with every entry
    /// masked is rejected.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        let av = &self.nodes[a.0].values;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * n..(i + 1) * n];
            let max = row.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::FullyMaskedRow { row: i });
            }
            let mut sum = 0.0;
            for j in 0..n {
                let e = if row[j] == f64::NEG_INFINITY {
                    0.0
                } else {
                    ((row[j] - max).clamp(-EXP_CLAMP, EXP_CLAMP)).exp()
                };
                out[i * n + j] = e;
                sum += e;
            }
            for j in 0..n {
                out[i * n + j] /= sum;
            }
        }
        let ng = self.needs(a);
        Ok(self.push(Op::SoftmaxRows { a }, m, n, out, ng))
    }

    /// Concatenate single-row vectors along columns.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        let mut ng = false;
        for &p in parts {
            let (r, _) = self.shape(p);
            if r != 1 {
                let (pr, pc) = self.shape(p);
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: vec![pr, pc],
                    rhs: vec![1],
                });
            }
            out.extend_from_slice(&self.nodes[p.0].values);
            ng |= self.needs(p);
        }
        let cols = out.len();
        Ok(self.push(Op::Concat { parts: parts.to_vec() }, 1, cols, out, ng))
    }

    /// Stack single-row vectors of equal width into a matrix.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        assert!(!parts.is_empty(), "stack_rows needs at least one row");
        let (_, width) = self.shape(parts[0]);
        let mut out = Vec::with_capacity(parts.len() * width);
        let mut ng = false;
        for &p in parts {
            if self.shape(p) != (1, width) {
                return Err(self.shape_err("stack_rows", parts[0], p));
            }
            out.extend_from_slice(&self.nodes[p.0].values);
            ng |= self.needs(p);
        }
        Ok(self.push(
            Op::StackRows { parts: parts.to_vec() },
            parts.len(),
            width,
            out,
            ng,
        ))
    }

    /// Contiguous column slice `[start, start+len)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if start + len > n {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: vec![m, n],
                rhs: vec![start, len],
            });
        }
        let av = &self.nodes[a.0].values;
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&av[i * n + start..i * n + start + len]);
        }
        let ng = self.needs(a);
        Ok(self.push(Op::SliceCols { a, start }, m, len, out, ng))
    }

    /// Sum of every element, as a 1×1 scalar.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].values.iter().sum();
        let ng = self.needs(a);
        self.push(Op::SumAll { a }, 1, 1, vec![s], ng)
    }

    /// Sum of the given table rows (embedding lookup; one id = plain lookup).
    pub fn embed_sum(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, cols) = self.shape(table);
        if let Some(&bad) = ids.iter().find(|&&id| id >= rows) {
            return Err(Error::ShapeMismatch {
                op: "embed_sum",
                lhs: vec![rows, cols],
                rhs: vec![bad],
            });
        }
        let tv = &self.nodes[table.0].values;
        let mut out = vec![0.0; cols];
        for &id in ids {
            for j in 0..cols {
                out[j] += tv[id * cols + j];
            }
        }
        let ng = self.needs(table);
        Ok(self.push(
            Op::EmbedSum {
                table,
                ids: ids.to_vec(),
            },
            1,
            cols,
            out,
            ng,
        ))
    }

    /// Summed binary cross-entropy of probabilities against 0/1 targets.
    /// Probabilities are clamped to `[LOG_EPS, 1−LOG_EPS]` before the log.
    pub fn bce(&mut self, p: Var, targets: &[f64]) -> Result<Var> {
        let (m, n) = self.shape(p);
        if m * n != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "bce",
                lhs: vec![m, n],
                rhs: vec![targets.len()],
            });
        }
        let pv = &self.nodes[p.0].values;
        let mut loss = 0.0;
        for (x, t) in pv.iter().zip(targets) {
            let x = x.clamp(LOG_EPS, 1.0 - LOG_EPS);
            loss -= t * x.ln() + (1.0 - t) * (1.0 - x).ln();
        }
        let ng = self.needs(p);
        Ok(self.push(
            Op::Bce {
                p,
                targets: targets.to_vec(),
            },
            1,
            1,
            vec![loss],
            ng,
        ))
    }

    /// −log p[index], clamped.
    pub fn neg_log_pick(&mut self, p: Var, index: usize) -> Result<Var> {
        let (m, n) = self.shape(p);
        if index >= m * n {
            return Err(Error::ShapeMismatch {
                op: "neg_log_pick",
                lhs: vec![m, n],
                rhs: vec![index],
            });
        }
        let x = self.nodes[p.0].values[index].clamp(LOG_EPS, 1.0);
        let ng = self.needs(p);
        Ok(self.push(Op::NegLogPick { p, index }, 1, 1, vec![-x.ln()], ng))
    }

    /// Scatter a 1×K row onto a 1×width row: entry k spreads uniformly over
    /// `groups[k]`. Empty groups drop their mass (callers mask those first).
    pub fn copy_scatter(&mut self, src: Var, groups: &[Vec<usize>], width: usize) -> Result<Var> {
        let (m, k) = self.shape(src);
        if m != 1 || k != groups.len() {
            return Err(Error::ShapeMismatch {
                op: "copy_scatter",
                lhs: vec![m, k],
                rhs: vec![groups.len()],
            });
        }
        let sv = &self.nodes[src.0].values;
        let mut out = vec![0.0; width];
        for (gi, group) in groups.iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            let share = sv[gi] / group.len() as f64;
            for &v in group {
                debug_assert!(v < width, "copy_scatter target out of range");
                out[v] += share;
            }
        }
        let ng = self.needs(src);
        Ok(self.push(
            Op::CopyScatter {
                src,
                groups: groups.to_vec(),
            },
            1,
            width,
            out,
            ng,
        ))
    }

    /// Zero-pad a single row to `width` columns.
    pub fn pad_cols(&mut self, a: Var, width: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if m != 1 || width < n {
            return Err(Error::ShapeMismatch {
                op: "pad_cols",
                lhs: vec![m, n],
                rhs: vec![width],
            });
        }
        let mut out = self.nodes[a.0].values.clone();
        out.resize(width, 0.0);
        let ng = self.needs(a);
        Ok(self.push(Op::PadCols { a }, 1, width, out, ng))
    }

    /// Overwrite the listed columns of a single row with −∞.
    pub fn mask_cols(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let (m, n) = self.shape(a);
        if m != 1 || cols.iter().any(|&c| c >= n) {
            return Err(Error::ShapeMismatch {
                op: "mask_cols",
                lhs: vec![m, n],
                rhs: cols.to_vec(),
            });
        }
        let mut out = self.nodes[a.0].values.clone();
        for &c in cols {
            out[c] = f64::NEG_INFINITY;
        }
        let ng = self.needs(a);
        Ok(self.push(
            Op::MaskCols {
                a,
                cols: cols.to_vec(),
            },
            1,
            n,
            out,
            ng,
        ))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Replay the tape in reverse from a scalar loss, accumulating gradients
    /// into every node that needs them. Nodes off the loss path keep zeros.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            let (r, c) = self.shape(loss);
            return Err(Error::NonScalarLoss { shape: vec![r, c] });
        }
        for node in self.nodes.iter_mut() {
            if node.needs_grad {
                node.grad = vec![0.0; node.values.len()];
            }
        }
        if !self.nodes[loss.0].needs_grad {
            // Loss does not depend on any differentiable leaf; nothing to do.
            return Ok(());
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].needs_grad || self.nodes[idx].grad.is_empty() {
                continue;
            }
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (m, k) = self.shape(a);
                    let (_, n) = self.shape(b);
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        // dA = dC × Bᵀ
                        let bv = &self.nodes[b.0].values;
                        let mut da = vec![0.0; m * k];
                        for i in 0..m {
                            for p in 0..k {
                                let mut s = 0.0;
                                for j in 0..n {
                                    s += g[i * n + j] * bv[p * n + j];
                                }
                                da[i * k + p] = s;
                            }
                        }
                        accumulate(&mut self.nodes[a.0].grad, &da);
                    }
                    if self.needs(b) {
                        // dB = Aᵀ × dC
                        let av = &self.nodes[a.0].values;
                        let mut db = vec![0.0; k * n];
                        for p in 0..k {
                            for i in 0..m {
                                let aip = av[i * k + p];
                                if aip == 0.0 {
                                    continue;
                                }
                                for j in 0..n {
                                    db[p * n + j] += aip * g[i * n + j];
                                }
                            }
                        }
                        accumulate(&mut self.nodes[b.0].grad, &db);
                    }
                    self.nodes[idx].grad = g;
                }
                Op::MatMulNT { a, b } => {
                    let (m, k) = self.shape(a);
                    let (n, _) = self.shape(b);
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        // dA = dC × B
                        let bv = &self.nodes[b.0].values;
                        let mut da = vec![0.0; m * k];
                        for i in 0..m {
                            for j in 0..n {
                                let gij = g[i * n + j];
                                if gij == 0.0 {
                                    continue;
                                }
                                for p in 0..k {
                                    da[i * k + p] += gij * bv[j * k + p];
                                }
                            }
                        }
                        accumulate(&mut self.nodes[a.0].grad, &da);
                    }
                    if self.needs(b) {
                        // dB = dCᵀ × A
                        let av = &self.nodes[a.0].values;
                        let mut db = vec![0.0; n * k];
                        for j in 0..n {
                            for i in 0..m {
                                let gij = g[i * n + j];
                                if gij == 0.0 {
                                    continue;
                                }
                                for p in 0..k {
                                    db[j * k + p] += gij * av[i * k + p];
                                }
                            }
                        }
                        accumulate(&mut self.nodes[b.0].grad, &db);
                    }
                    self.nodes[idx].grad = g;
                }
                Op::Add { a, b } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        accumulate(&mut self.nodes[a.0].grad, &g);
                    }
                    if self.needs(b) {
                        accumulate(&mut self.nodes[b.0].grad, &g);
                    }
                    self.nodes[idx].grad = g;
                }
                Op::Mul { a, b } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        let bv = self.nodes[b.0].values.clone();
                        for (slot, (gi, bi)) in
                            self.nodes[a.0].grad.iter_mut().zip(g.iter().zip(&bv))
                        {
                            *slot += gi * bi;
                        }
                    }
                    if self.needs(b) {
                        let av = self.nodes[a.0].values.clone();
                        for (slot, (gi, ai)) in
                            self.nodes[b.0].grad.iter_mut().zip(g.iter().zip(&av))
                        {
                            *slot += gi * ai;
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::AddScalar { a, s } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        accumulate(&mut self.nodes[a.0].grad, &g);
                    }
                    if self.needs(s) {
                        self.nodes[s.0].grad[0] += g.iter().sum::<f64>();
                    }
                    self.nodes[idx].grad = g;
                }
                Op::MulScalar { a, s } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    let sv = self.nodes[s.0].values[0];
                    if self.needs(a) {
                        for (slot, gi) in self.nodes[a.0].grad.iter_mut().zip(&g) {
                            *slot += gi * sv;
                        }
                    }
                    if self.needs(s) {
                        let av = &self.nodes[a.0].values;
                        let dot: f64 = g.iter().zip(av).map(|(x, y)| x * y).sum();
                        self.nodes[s.0].grad[0] += dot;
                    }
                    self.nodes[idx].grad = g;
                }
                Op::ScaleConst { a, c } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        for (slot, gi) in self.nodes[a.0].grad.iter_mut().zip(&g) {
                            *slot += gi * c;
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::Sigmoid { a } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        let yv = self.nodes[idx].values.clone();
                        for (slot, (gi, yi)) in
                            self.nodes[a.0].grad.iter_mut().zip(g.iter().zip(&yv))
                        {
                            *slot += gi * yi * (1.0 - yi);
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::Tanh { a } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        let yv = self.nodes[idx].values.clone();
                        for (slot, (gi, yi)) in
                            self.nodes[a.0].grad.iter_mut().zip(g.iter().zip(&yv))
                        {
                            *slot += gi * (1.0 - yi * yi);
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::SoftmaxRows { a } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        let (m, n) = (self.nodes[idx].rows, self.nodes[idx].cols);
                        let yv = self.nodes[idx].values.clone();
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            let yrow = &yv[i * n..(i + 1) * n];
                            let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                            let arow = &mut self.nodes[a.0].grad[i * n..(i + 1) * n];
                            for j in 0..n {
                                arow[j] += yrow[j] * (grow[j] - dot);
                            }
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::Concat { parts } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    let mut offset = 0;
                    for p in parts {
                        let (_, w) = self.shape(p);
                        if self.needs(p) {
                            accumulate(&mut self.nodes[p.0].grad, &g[offset..offset + w]);
                        }
                        offset += w;
                    }
                    self.nodes[idx].grad = g;
                }
                Op::StackRows { parts } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    let w = self.nodes[idx].cols;
                    for (i, p) in parts.iter().enumerate() {
                        if self.needs(*p) {
                            accumulate(&mut self.nodes[p.0].grad, &g[i * w..(i + 1) * w]);
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::SliceCols { a, start } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        let (m, len) = (self.nodes[idx].rows, self.nodes[idx].cols);
                        let (_, n) = self.shape(a);
                        for i in 0..m {
                            for j in 0..len {
                                self.nodes[a.0].grad[i * n + start + j] += g[i * len + j];
                            }
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::SumAll { a } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        let g0 = g[0];
                        for slot in self.nodes[a.0].grad.iter_mut() {
                            *slot += g0;
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::EmbedSum { table, ids } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(table) {
                        let cols = self.nodes[idx].cols;
                        for &id in &ids {
                            let trow = &mut self.nodes[table.0].grad[id * cols..(id + 1) * cols];
                            for j in 0..cols {
                                trow[j] += g[j];
                            }
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::Bce { p, targets } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(p) {
                        let g0 = g[0];
                        let pv = self.nodes[p.0].values.clone();
                        for ((slot, x), t) in
                            self.nodes[p.0].grad.iter_mut().zip(&pv).zip(&targets)
                        {
                            let x = x.clamp(LOG_EPS, 1.0 - LOG_EPS);
                            *slot += g0 * (x - t) / (x * (1.0 - x));
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::NegLogPick { p, index } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(p) {
                        let x = self.nodes[p.0].values[index].clamp(LOG_EPS, 1.0);
                        self.nodes[p.0].grad[index] += -g[0] / x;
                    }
                    self.nodes[idx].grad = g;
                }
                Op::CopyScatter { src, groups } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(src) {
                        for (k, group) in groups.iter().enumerate() {
                            if group.is_empty() {
                                continue;
                            }
                            let scale = 1.0 / group.len() as f64;
                            let mut s = 0.0;
                            for &v in group {
                                s += g[v];
                            }
                            self.nodes[src.0].grad[k] += s * scale;
                        }
                    }
                    self.nodes[idx].grad = g;
                }
                Op::PadCols { a } => {
                    let g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        let (_, n) = self.shape(a);
                        accumulate(&mut self.nodes[a.0].grad, &g[..n]);
                    }
                    self.nodes[idx].grad = g;
                }
                Op::MaskCols { a, cols } => {
                    let mut g = std::mem::take(&mut self.nodes[idx].grad);
                    if self.needs(a) {
                        for &c in &cols {
                            g[c] = 0.0;
                        }
                        accumulate(&mut self.nodes[a.0].grad, &g);
                    }
                    self.nodes[idx].grad = g;
                }
            }
        }
        Ok(())
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
