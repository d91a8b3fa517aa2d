//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Every value is a row-major 2-D matrix. Operations append nodes to a
//! [`Tape`]; [`Tape::backward`] walks the tape in reverse and accumulates
//! gradients. Sequences are laid out as stacked row blocks, so recurrences
//! slice and concatenate rows rather than using a third axis.

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{s, Array2, Axis, Zip};

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

type CustomBackward = Box<dyn Fn(&Mat) -> Vec<Mat>>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Rc<Mat>),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Abs(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize, usize),
    RepeatEach(Var, usize),
    Tile(Var),
    Softmax(Var),
    Sum(Var),
    Attention { q: Var, k: Var, v: Var, spec: AttnSpec, probs: Rc<Vec<f64>> },
    Custom { inputs: Vec<Var>, backward: CustomBackward },
}

struct Node {
    value: Rc<Mat>,
    op: Op,
}

/// Grouped multi-head attention layout: `groups` independent sets, each with
/// `nq` query rows and `nk` key/value rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnSpec {
    pub groups: usize,
    pub nq: usize,
    pub nk: usize,
    pub heads: usize,
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn standard(m: Mat) -> Mat {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Mat, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(standard(value)), op });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Rc<Mat> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes.borrow()[v.0].value.dim()
    }

    pub fn leaf(&self, value: Mat) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).dot(&*self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let out = &*self.value(a) + &*self.value(b);
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let out = &*self.value(a) - &*self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let out = &*self.value(a) * &*self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    /// Adds a `[1, m]` row to every row of `a`.
    pub fn add_row(&self, a: Var, row: Var) -> Var {
        let out = &*self.value(a) + &*self.value(row);
        self.push(out, Op::AddRow(a, row))
    }

    /// Scales each row of `a` by the matching entry of the `[n, 1]` column `w`.
    pub fn mul_col(&self, a: Var, w: Var) -> Var {
        let out = &*self.value(a) * &*self.value(w);
        self.push(out, Op::MulCol(a, w))
    }

    pub fn scale(&self, a: Var, factor: f64) -> Var {
        let out = &*self.value(a) * factor;
        self.push(out, Op::Scale(a, factor))
    }

    /// Elementwise product with a constant (masks, dropout keep-masks).
    pub fn mul_const(&self, a: Var, c: Rc<Mat>) -> Var {
        let out = &*self.value(a) * &*c;
        self.push(out, Op::MulConst(a, c))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn relu(&self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn exp(&self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn abs(&self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::abs);
        self.push(out, Op::Abs(a))
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        let values: Vec<Rc<Mat>> = parts.iter().map(|&p| self.value(p)).collect();
        let views: Vec<_> = values.iter().map(|m| m.view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols row counts agree");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(out, Op::SliceCols(a, start, end))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        let values: Vec<Rc<Mat>> = parts.iter().map(|&p| self.value(p)).collect();
        let views: Vec<_> = values.iter().map(|m| m.view()).collect();
        let out = ndarray::concatenate(Axis(0), &views).expect("concat_rows column counts agree");
        self.push(out, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice(s![start..end, ..]).to_owned();
        self.push(out, Op::SliceRows(a, start, end))
    }

    /// Repeats each row `n` times in place: `[r0, r0, r1, r1, ...]`.
    pub fn repeat_each(&self, a: Var, n: usize) -> Var {
        let v = self.value(a);
        let (rows, cols) = v.dim();
        let out = Array2::from_shape_fn((rows * n, cols), |(i, j)| v[[i / n, j]]);
        self.push(out, Op::RepeatEach(a, n))
    }

    /// Stacks `n` copies of the whole matrix: `[a; a; ...]`.
    pub fn tile(&self, a: Var, n: usize) -> Var {
        let v = self.value(a);
        let (rows, cols) = v.dim();
        let out = Array2::from_shape_fn((rows * n, cols), |(i, j)| v[[i % rows, j]]);
        self.push(out, Op::Tile(a))
    }

    /// Row-wise softmax.
    pub fn softmax(&self, a: Var) -> Var {
        let mut out = (*self.value(a)).clone();
        for mut row in out.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(out, Op::Softmax(a))
    }

    /// Sum of all entries as a `[1, 1]` matrix.
    pub fn sum(&self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Grouped scaled dot-product attention with `spec.heads` heads. Scores
    /// are scaled by `1/sqrt(d)` where `d` is the full model width.
    pub fn attention(&self, q: Var, k: Var, v: Var, spec: AttnSpec) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let d = qv.ncols();
        assert_eq!(qv.nrows(), spec.groups * spec.nq, "query rows");
        assert_eq!(kv.nrows(), spec.groups * spec.nk, "key rows");
        assert_eq!(vv.dim(), kv.dim(), "key/value shapes");
        assert_eq!(d % spec.heads, 0, "width divisible by heads");
        let dh = d / spec.heads;
        let scale = 1.0 / (d as f64).sqrt();
        let (qs, ks, vs) = (qv.as_slice().unwrap(), kv.as_slice().unwrap(), vv.as_slice().unwrap());
        let mut out = vec![0.0; spec.groups * spec.nq * d];
        let mut probs = vec![0.0; spec.groups * spec.heads * spec.nq * spec.nk];
        let mut row = vec![0.0; spec.nk];
        for g in 0..spec.groups {
            for h in 0..spec.heads {
                let c0 = h * dh;
                for i in 0..spec.nq {
                    let qi = &qs[(g * spec.nq + i) * d + c0..][..dh];
                    let mut max = f64::NEG_INFINITY;
                    for (j, r) in row.iter_mut().enumerate() {
                        let kj = &ks[(g * spec.nk + j) * d + c0..][..dh];
                        let dot: f64 = qi.iter().zip(kj).map(|(a, b)| a * b).sum();
                        *r = dot * scale;
                        max = max.max(*r);
                    }
                    let mut sum = 0.0;
                    for r in row.iter_mut() {
                        *r = (*r - max).exp();
                        sum += *r;
                    }
                    let p_off = ((g * spec.heads + h) * spec.nq + i) * spec.nk;
                    let o = &mut out[(g * spec.nq + i) * d + c0..][..dh];
                    for (j, r) in row.iter().enumerate() {
                        let p = r / sum;
                        probs[p_off + j] = p;
                        let vj = &vs[(g * spec.nk + j) * d + c0..][..dh];
                        for (oc, vc) in o.iter_mut().zip(vj) {
                            *oc += p * vc;
                        }
                    }
                }
            }
        }
        let out = Array2::from_shape_vec((spec.groups * spec.nq, d), out).expect("attention output shape");
        self.push(out, Op::Attention { q, k, v, spec, probs: Rc::new(probs) })
    }

    /// Node with a caller-supplied vector-Jacobian product. `backward` maps the
    /// output gradient to one gradient per input, in order.
    pub fn custom(&self, inputs: &[Var], value: Mat, backward: CustomBackward) -> Var {
        self.push(value, Op::Custom { inputs: inputs.to_vec(), backward })
    }

    /// Gradients of the scalar `root` with respect to every node. Entries are
    /// `None` for nodes the root does not depend on.
    pub fn backward(&self, root: Var) -> Vec<Option<Mat>> {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[root.0].value.dim(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Mat>> = (0..nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=root.0).rev() {
            let node = &nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&val(*b).t());
                    let gb = val(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * &**val(*b);
                    let gb = &g * &**val(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::MulCol(a, w) => {
                    let gw = (&g * &**val(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = &g * &**val(*w);
                    acc(&mut grads, *w, gw);
                    acc(&mut grads, *a, ga);
                }
                Op::Scale(a, f) => acc(&mut grads, *a, g * *f),
                Op::MulConst(a, c) => acc(&mut grads, *a, g * &**c),
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&*node.value).for_each(|x, &y| *x *= y * (1.0 - y));
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&*node.value).for_each(|x, &y| *x *= 1.0 - y * y);
                    acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&**val(*a)).for_each(|x, &y| {
                        if y <= 0.0 {
                            *x = 0.0
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => acc(&mut grads, *a, g * &*node.value),
                Op::Abs(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(&**val(*a)).for_each(|x, &y| *x *= if y > 0.0 { 1.0 } else if y < 0.0 { -1.0 } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut c = 0;
                    for p in parts {
                        let w = val(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., c..c + w]).to_owned());
                        c += w;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Array2::zeros(val(*a).raw_dim());
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut r = 0;
                    for p in parts {
                        let h = val(*p).nrows();
                        acc(&mut grads, *p, g.slice(s![r..r + h, ..]).to_owned());
                        r += h;
                    }
                }
                Op::SliceRows(a, start, end) => {
                    let mut ga = Array2::zeros(val(*a).raw_dim());
                    ga.slice_mut(s![*start..*end, ..]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::RepeatEach(a, n) => {
                    let (rows, cols) = val(*a).dim();
                    let mut ga = Array2::zeros((rows, cols));
                    for (i, row) in g.rows().into_iter().enumerate() {
                        let mut target = ga.row_mut(i / n);
                        target += &row;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Tile(a) => {
                    let (rows, cols) = val(*a).dim();
                    let mut ga = Array2::zeros((rows, cols));
                    for (i, row) in g.rows().into_iter().enumerate() {
                        let mut target = ga.row_mut(i % rows);
                        target += &row;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let y = &*node.value;
                    let mut ga = g;
                    for (mut gr, yr) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let dot: f64 = gr.iter().zip(yr.iter()).map(|(a, b)| a * b).sum();
                        Zip::from(&mut gr).and(&yr).for_each(|x, &p| *x = p * (*x - dot));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let s = g[[0, 0]];
                    acc(&mut grads, *a, Array2::from_elem(val(*a).raw_dim(), s));
                }
                Op::Attention { q, k, v, spec, probs } => {
                    let (gq, gk, gv) = attention_backward(&g, val(*q), val(*k), val(*v), *spec, probs);
                    acc(&mut grads, *q, gq);
                    acc(&mut grads, *k, gk);
                    acc(&mut grads, *v, gv);
                }
                Op::Custom { inputs, backward } => {
                    for (inp, gi) in inputs.iter().zip(backward(&g)) {
                        acc(&mut grads, *inp, gi);
                    }
                }
            }
        }
        grads
    }
}

fn attention_backward(g: &Mat, q: &Mat, k: &Mat, v: &Mat, spec: AttnSpec, probs: &[f64]) -> (Mat, Mat, Mat) {
    let d = q.ncols();
    let dh = d / spec.heads;
    let scale = 1.0 / (d as f64).sqrt();
    let g = if g.is_standard_layout() { g.clone() } else { g.as_standard_layout().into_owned() };
    let (gs, qs, ks, vs) = (g.as_slice().unwrap(), q.as_slice().unwrap(), k.as_slice().unwrap(), v.as_slice().unwrap());
    let mut gq = vec![0.0; qs.len()];
    let mut gk = vec![0.0; ks.len()];
    let mut gv = vec![0.0; vs.len()];
    let mut ds = vec![0.0; spec.nk];
    for gi in 0..spec.groups {
        for h in 0..spec.heads {
            let c0 = h * dh;
            for i in 0..spec.nq {
                let p_off = ((gi * spec.heads + h) * spec.nq + i) * spec.nk;
                let p = &probs[p_off..p_off + spec.nk];
                let go = &gs[(gi * spec.nq + i) * d + c0..][..dh];
                let mut dot = 0.0;
                for j in 0..spec.nk {
                    let vrow = (gi * spec.nk + j) * d + c0;
                    let dp: f64 = go.iter().zip(&vs[vrow..vrow + dh]).map(|(a, b)| a * b).sum();
                    ds[j] = dp;
                    dot += p[j] * dp;
                    for (gvc, goc) in gv[vrow..vrow + dh].iter_mut().zip(go) {
                        *gvc += p[j] * goc;
                    }
                }
                let qrow = (gi * spec.nq + i) * d + c0;
                for j in 0..spec.nk {
                    let s = p[j] * (ds[j] - dot) * scale;
                    if s == 0.0 {
                        continue;
                    }
                    let krow = (gi * spec.nk + j) * d + c0;
                    for c in 0..dh {
                        gq[qrow + c] += s * ks[krow + c];
                        gk[krow + c] += s * qs[qrow + c];
                    }
                }
            }
        }
    }
    (
        Array2::from_shape_vec(q.raw_dim(), gq).unwrap(),
        Array2::from_shape_vec(k.raw_dim(), gk).unwrap(),
        Array2::from_shape_vec(v.raw_dim(), gv).unwrap(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    /// Central finite differences of `f` (a scalar function of the leaves)
    /// compared against the tape's analytic gradient.
    fn check_grad(inputs: Vec<Mat>, f: impl Fn(&Tape, &[Var]) -> Var) {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
        let out = f(&tape, &vars);
        let root = tape.sum(out);
        let grads = tape.backward(root);
        let eps = 1e-6;
        for (n, input) in inputs.iter().enumerate() {
            let analytic = grads[vars[n].index()].clone().unwrap_or_else(|| Array2::zeros(input.raw_dim()));
            for idx in 0..input.len() {
                let eval = |delta: f64| {
                    let t = Tape::new();
                    let vs: Vec<Var> = inputs
                        .iter()
                        .enumerate()
                        .map(|(i, m)| {
                            let mut m = m.clone();
                            if i == n {
                                let c = m.ncols();
                                m[[idx / c, idx % c]] += delta;
                            }
                            t.leaf(m)
                        })
                        .collect();
                    let o = f(&t, &vs);
                    t.value(o).sum()
                };
                let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
                let c = input.ncols();
                let a = analytic[[idx / c, idx % c]];
                assert!((a - numeric).abs() < 1e-6 * (1.0 + numeric.abs()), "input {n} entry {idx}: analytic {a}, numeric {numeric}");
            }
        }
    }

    #[test]
    fn elementwise_and_matrix_ops_have_correct_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_mat(&mut rng, 4, 3);
        let b = rand_mat(&mut rng, 3, 5);
        let c = rand_mat(&mut rng, 4, 5);
        let row = rand_mat(&mut rng, 1, 5);
        check_grad(vec![a, b, c, row], |t, v| {
            let m = t.matmul(v[0], v[1]);
            let m = t.add_row(m, v[3]);
            let x = t.mul(t.sigmoid(m), t.tanh(v[2]));
            let y = t.sub(t.exp(t.scale(x, 0.5)), t.relu(v[2]));
            t.abs(t.add(y, t.mul_const(v[2], Rc::new(Array2::from_elem((4, 5), 0.3)))))
        });
    }

    #[test]
    fn layout_ops_have_correct_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_mat(&mut rng, 3, 2);
        let b = rand_mat(&mut rng, 3, 4);
        let w = rand_mat(&mut rng, 6, 1);
        check_grad(vec![a, b, w], |t, v| {
            let c = t.concat_cols(&[v[0], v[1]]);
            let r = t.concat_rows(&[c, t.slice_rows(c, 1, 3)]);
            let s = t.slice_cols(r, 1, 5);
            let rep = t.repeat_each(t.slice_rows(s, 0, 2), 3);
            let tiled = t.tile(t.slice_rows(s, 2, 5), 2);
            let m = t.mul(rep, tiled);
            let sm = t.softmax(m);
            t.mul_col(t.mul(sm, m), v[2])
        });
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = AttnSpec { groups: 2, nq: 3, nk: 4, heads: 2 };
        let q = rand_mat(&mut rng, 6, 4);
        let k = rand_mat(&mut rng, 8, 4);
        let v = rand_mat(&mut rng, 8, 4);
        let w = rand_mat(&mut rng, 6, 4);
        check_grad(vec![q, k, v, w], |t, vs| {
            let o = t.attention(vs[0], vs[1], vs[2], spec);
            t.mul(o, vs[3])
        });
    }

    #[test]
    fn attention_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = AttnSpec { groups: 3, nq: 2, nk: 5, heads: 2 };
        let q = rand_mat(&mut rng, 6, 6);
        let k = rand_mat(&mut rng, 15, 6);
        let v = rand_mat(&mut rng, 15, 6);
        let t = Tape::new();
        let o = t.attention(t.leaf(q.clone()), t.leaf(k.clone()), t.leaf(v.clone()), spec);
        let out = t.value(o);
        for g in 0..3 {
            for h in 0..2 {
                let qh = q.slice(s![g * 2..g * 2 + 2, h * 3..h * 3 + 3]);
                let kh = k.slice(s![g * 5..g * 5 + 5, h * 3..h * 3 + 3]);
                let vh = v.slice(s![g * 5..g * 5 + 5, h * 3..h * 3 + 3]);
                let mut scores = qh.dot(&kh.t()) / 6f64.sqrt();
                for mut r in scores.rows_mut() {
                    let z: f64 = r.iter().map(|x| x.exp()).sum();
                    r.mapv_inplace(|x| x.exp() / z);
                }
                let expect = scores.dot(&vh);
                let got = out.slice(s![g * 2..g * 2 + 2, h * 3..h * 3 + 3]);
                assert!(expect.iter().zip(got.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn custom_op_gradient_flows() {
        let tape = Tape::new();
        let x = tape.leaf(Array2::from_elem((2, 2), 3.0));
        let value = tape.value(x).mapv(|v| v * v);
        let xv = tape.value(x);
        let y = tape.custom(&[x], value, Box::new(move |g| vec![g * &(&*xv * 2.0)]));
        let root = tape.sum(y);
        let grads = tape.backward(root);
        assert!(grads[x.index()].as_ref().unwrap().iter().all(|&g| (g - 6.0).abs() < 1e-12));
    }
}
