//! Gated single-gate recurrent cell shared by every sequential policy.
//!
//! Inputs are sparse. Each step carries `views` blocks of `view_dim` features
//! that are multiplied elementwise by a gate computed from a conditioning
//! vector (language, target object), plus ungated extra inputs. Heads read the
//! concatenation of the input and the new hidden state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::{sigmoid, softmax};

pub type SparseVec = Vec<(u32, f64)>;

pub const PROGRESS_WEIGHTS: [f64; 2] = [0.2, 0.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDims {
    pub views: usize,
    pub view_dim: usize,
    pub gate_in: usize,
    pub extra: usize,
    pub hidden: usize,
    pub actions: usize,
    /// Number of independent class heads; zero disables class prediction.
    pub class_heads: usize,
    pub classes: usize,
    pub progress: bool,
}

impl CellDims {
    pub fn input_dim(&self) -> usize {
        self.views * self.view_dim + self.extra
    }

    fn head_in(&self) -> usize {
        self.input_dim() + self.hidden
    }

    fn layout(&self) -> Layout {
        let f = self.view_dim;
        let h2 = 2 * self.hidden;
        let hi = self.head_in();
        let kw = self.class_heads * self.classes;
        let np = if self.progress { 2 } else { 0 };
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let gw = take(self.gate_in * f);
        let gb = take(f);
        let w = take(self.input_dim() * h2);
        let u = take(self.hidden * h2);
        let b = take(h2);
        let wo = take(hi * self.actions);
        let bo = take(self.actions);
        let wk = take(hi * kw);
        let bk = take(kw);
        let wp = take(hi * np);
        let bp = take(np);
        Layout { gw, gb, w, u, b, wo, bo, wk, bk, wp, bp, total: at }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    gw: usize,
    gb: usize,
    w: usize,
    u: usize,
    b: usize,
    wo: usize,
    bo: usize,
    wk: usize,
    bk: usize,
    wp: usize,
    bp: usize,
    total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInput {
    pub views: Vec<SparseVec>,
    pub gate: SparseVec,
    pub extra: SparseVec,
    /// Which class head this step uses.
    pub head: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTarget {
    pub action: Option<usize>,
    pub class: Option<usize>,
    pub progress: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub hidden: Vec<f64>,
    pub action_probs: Vec<f64>,
    pub class_probs: Vec<f64>,
    pub progress: [f64; 2],
}

#[derive(Debug, Clone)]
struct Cache {
    g: Vec<f64>,
    /// Gated and extra inputs in global input coordinates; view entries come first.
    x: SparseVec,
    raw: Vec<f64>,
    n_view: usize,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
    probs: Vec<f64>,
    class_probs: Vec<f64>,
    progress: [f64; 2],
    head: usize,
}

/// Sums of per-step loss terms and counts over one or more sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SequenceStats {
    pub loss: f64,
    pub action_steps: usize,
    pub action_correct: usize,
    pub class_steps: usize,
    pub class_correct: usize,
}

impl SequenceStats {
    pub fn merge(&mut self, o: &SequenceStats) {
        self.loss += o.loss;
        self.action_steps += o.action_steps;
        self.action_correct += o.action_correct;
        self.class_steps += o.class_steps;
        self.class_correct += o.class_correct;
    }

    pub fn steps(&self) -> usize {
        self.action_steps.max(self.class_steps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentPolicyCell {
    pub dims: CellDims,
    pub params: Vec<f64>,
}

impl RecurrentPolicyCell {
    pub fn zeros(dims: CellDims) -> Self {
        RecurrentPolicyCell { dims, params: vec![0.0; dims.num_params()] }
    }

    /// Small uniform initialization; the gate starts mostly open.
    pub fn new(dims: CellDims, seed: u64) -> Self {
        let mut cell = Self::zeros(dims);
        let l = dims.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rec = 1.0 / (dims.hidden.max(1) as f64).sqrt();
        for (lo, hi, s) in [(l.w, l.u, 0.1), (l.u, l.b, rec), (l.wo, l.bo, 0.05), (l.wk, l.bk, 0.05), (l.wp, l.bp, 0.05)] {
            cell.params[lo..hi].iter_mut().for_each(|p| *p = rng.gen_range(-s..s));
        }
        cell.params[l.gb..l.w].iter_mut().for_each(|p| *p = 1.0);
        cell
    }

    pub fn initial_state(&self) -> Vec<f64> {
        vec![0.0; self.dims.hidden]
    }

    fn head_logits(&self, w: usize, b: usize, width: usize, col: usize, n: usize, x: &SparseVec, h: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let mut out = p[b + col..b + col + n].to_vec();
        let xd = self.dims.input_dim();
        for &(i, v) in x {
            let row = w + i as usize * width + col;
            for (o, wv) in out.iter_mut().zip(&p[row..row + n]) {
                *o += v * wv;
            }
        }
        for (k, &hk) in h.iter().enumerate() {
            if hk != 0.0 {
                let row = w + (xd + k) * width + col;
                for (o, wv) in out.iter_mut().zip(&p[row..row + n]) {
                    *o += hk * wv;
                }
            }
        }
        out
    }

    fn forward(&self, h_prev: &[f64], input: &StepInput) -> Cache {
        let d = &self.dims;
        let l = d.layout();
        let p = &self.params;
        let f = d.view_dim;
        let hd = d.hidden;
        let mut g = p[l.gb..l.gb + f].to_vec();
        for &(i, v) in &input.gate {
            let row = l.gw + i as usize * f;
            for (gj, w) in g.iter_mut().zip(&p[row..row + f]) {
                *gj += v * w;
            }
        }
        g.iter_mut().for_each(|x| *x = sigmoid(*x));

        let mut x = SparseVec::new();
        let mut raw = Vec::new();
        for (vi, view) in input.views.iter().enumerate().take(d.views) {
            for &(j, v) in view {
                x.push(((vi * f) as u32 + j, g[j as usize] * v));
                raw.push(v);
            }
        }
        let n_view = x.len();
        let base = (d.views * f) as u32;
        x.extend(input.extra.iter().map(|&(i, v)| (base + i, v)));

        let mut a = p[l.b..l.b + 2 * hd].to_vec();
        for &(i, v) in &x {
            let row = l.w + i as usize * 2 * hd;
            for (ai, w) in a.iter_mut().zip(&p[row..row + 2 * hd]) {
                *ai += v * w;
            }
        }
        for (k, &hk) in h_prev.iter().enumerate() {
            if hk != 0.0 {
                let row = l.u + k * 2 * hd;
                for (ai, w) in a.iter_mut().zip(&p[row..row + 2 * hd]) {
                    *ai += hk * w;
                }
            }
        }
        let z: Vec<f64> = a[..hd].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = a[hd..].iter().map(|&v| v.tanh()).collect();
        let h: Vec<f64> = (0..hd).map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * c[k]).collect();

        let mut probs = Vec::new();
        if d.actions > 0 {
            probs = self.head_logits(l.wo, l.bo, d.actions, 0, d.actions, &x, &h);
            softmax(&mut probs);
        }
        let mut class_probs = Vec::new();
        let head = input.head.min(d.class_heads.saturating_sub(1));
        if d.class_heads > 0 {
            let width = d.class_heads * d.classes;
            class_probs = self.head_logits(l.wk, l.bk, width, head * d.classes, d.classes, &x, &h);
            softmax(&mut class_probs);
        }
        let mut progress = [0.0; 2];
        if d.progress {
            let s = self.head_logits(l.wp, l.bp, 2, 0, 2, &x, &h);
            progress = [sigmoid(s[0]), sigmoid(s[1])];
        }
        Cache { g, x, raw, n_view, h_prev: h_prev.to_vec(), z, c, h, probs, class_probs, progress, head }
    }

    /// Drops targets for heads this cell does not have.
    fn active(&self, tg: &StepTarget) -> StepTarget {
        StepTarget {
            action: tg.action.filter(|_| self.dims.actions > 0),
            class: tg.class.filter(|_| self.dims.class_heads > 0),
            progress: tg.progress.filter(|_| self.dims.progress),
        }
    }

    pub fn step(&self, hidden: &[f64], input: &StepInput) -> StepOutput {
        let c = self.forward(hidden, input);
        StepOutput { hidden: c.h, action_probs: c.probs, class_probs: c.class_probs, progress: c.progress }
    }

    /// Loss of one sequence from a zero state, with gradients added into `grad`.
    pub fn sequence_loss_grad(&self, steps: &[(StepInput, StepTarget)], grad: Option<&mut [f64]>) -> SequenceStats {
        let mut stats = SequenceStats::default();
        let mut h = self.initial_state();
        let mut caches = Vec::with_capacity(steps.len());
        for (inp, tg) in steps {
            let c = self.forward(&h, inp);
            let tg = self.active(tg);
            if let Some(a) = tg.action {
                stats.loss -= c.probs[a].max(1e-300).ln();
                stats.action_steps += 1;
                stats.action_correct += (super::optim::argmax(&c.probs) == a) as usize;
            }
            if let Some(k) = tg.class {
                stats.loss -= c.class_probs[k].max(1e-300).ln();
                stats.class_steps += 1;
                stats.class_correct += (super::optim::argmax(&c.class_probs) == k) as usize;
            }
            if let (true, Some(y)) = (self.dims.progress, tg.progress) {
                for i in 0..2 {
                    stats.loss += PROGRESS_WEIGHTS[i] * (c.progress[i] - y[i]).powi(2);
                }
            }
            h = c.h.clone();
            caches.push(c);
        }
        if let Some(grad) = grad {
            self.backward(steps, &caches, grad);
        }
        stats
    }

    #[allow(clippy::too_many_arguments)]
    fn head_backward(
        &self,
        w: usize,
        b: usize,
        width: usize,
        col: usize,
        dl: &[f64],
        c: &Cache,
        grad: &mut [f64],
        dh: &mut [f64],
        dx: &mut [f64],
    ) {
        let p = &self.params;
        let n = dl.len();
        let xd = self.dims.input_dim();
        for (gb, d) in grad[b + col..b + col + n].iter_mut().zip(dl) {
            *gb += d;
        }
        for (e, &(i, v)) in c.x.iter().enumerate() {
            let row = w + i as usize * width + col;
            let mut acc = 0.0;
            for a in 0..n {
                grad[row + a] += v * dl[a];
                acc += p[row + a] * dl[a];
            }
            if e < c.n_view {
                dx[e] += acc;
            }
        }
        for (k, &hk) in c.h.iter().enumerate() {
            let row = w + (xd + k) * width + col;
            let mut acc = 0.0;
            for a in 0..n {
                grad[row + a] += hk * dl[a];
                acc += p[row + a] * dl[a];
            }
            dh[k] += acc;
        }
    }

    fn backward(&self, steps: &[(StepInput, StepTarget)], caches: &[Cache], grad: &mut [f64]) {
        let d = &self.dims;
        let l = d.layout();
        let p = &self.params;
        let hd = d.hidden;
        let f = d.view_dim;
        let mut dh_next = vec![0.0; hd];
        for t in (0..steps.len()).rev() {
            let (inp, tg) = &steps[t];
            let tg = &self.active(tg);
            let c = &caches[t];
            let mut dh = dh_next.clone();
            let mut dx = vec![0.0; c.n_view];
            if let Some(a) = tg.action {
                let mut dl = c.probs.clone();
                dl[a] -= 1.0;
                self.head_backward(l.wo, l.bo, d.actions, 0, &dl, c, grad, &mut dh, &mut dx);
            }
            if let Some(k) = tg.class {
                let mut dl = c.class_probs.clone();
                dl[k] -= 1.0;
                let width = d.class_heads * d.classes;
                self.head_backward(l.wk, l.bk, width, c.head * d.classes, &dl, c, grad, &mut dh, &mut dx);
            }
            if let (true, Some(y)) = (d.progress, tg.progress) {
                let dl: Vec<f64> = (0..2)
                    .map(|i| 2.0 * PROGRESS_WEIGHTS[i] * (c.progress[i] - y[i]) * c.progress[i] * (1.0 - c.progress[i]))
                    .collect();
                self.head_backward(l.wp, l.bp, 2, 0, &dl, c, grad, &mut dh, &mut dx);
            }

            let mut da = vec![0.0; 2 * hd];
            let mut dh_prev = vec![0.0; hd];
            for k in 0..hd {
                let (z, cc, hp) = (c.z[k], c.c[k], c.h_prev[k]);
                da[k] = dh[k] * (cc - hp) * z * (1.0 - z);
                da[hd + k] = dh[k] * z * (1.0 - cc * cc);
                dh_prev[k] = dh[k] * (1.0 - z);
            }
            for (gb, v) in grad[l.b..l.b + 2 * hd].iter_mut().zip(&da) {
                *gb += v;
            }
            for (e, &(i, v)) in c.x.iter().enumerate() {
                let row = l.w + i as usize * 2 * hd;
                let mut acc = 0.0;
                for j in 0..2 * hd {
                    grad[row + j] += v * da[j];
                    acc += p[row + j] * da[j];
                }
                if e < c.n_view {
                    dx[e] += acc;
                }
            }
            for k in 0..hd {
                let row = l.u + k * 2 * hd;
                let hk = c.h_prev[k];
                let mut acc = 0.0;
                for j in 0..2 * hd {
                    grad[row + j] += hk * da[j];
                    acc += p[row + j] * da[j];
                }
                dh_prev[k] += acc;
            }

            if c.n_view > 0 {
                let mut dg = vec![0.0; f];
                for e in 0..c.n_view {
                    let j = c.x[e].0 as usize % f;
                    dg[j] += dx[e] * c.raw[e];
                }
                for j in 0..f {
                    dg[j] *= c.g[j] * (1.0 - c.g[j]);
                    grad[l.gb + j] += dg[j];
                }
                for &(i, v) in &inp.gate {
                    let row = l.gw + i as usize * f;
                    for j in 0..f {
                        grad[row + j] += v * dg[j];
                    }
                }
            }
            dh_next = dh_prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> CellDims {
        CellDims {
            views: 2,
            view_dim: 4,
            gate_in: 3,
            extra: 3,
            hidden: 3,
            actions: 3,
            class_heads: 2,
            classes: 3,
            progress: true,
        }
    }

    fn random_sequence(dims: &CellDims, n: usize, seed: u64) -> Vec<(StepInput, StepTarget)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|t| {
                let mut views = Vec::new();
                for _ in 0..dims.views {
                    let mut v = SparseVec::new();
                    for j in 0..dims.view_dim as u32 {
                        if rng.gen_bool(0.6) {
                            v.push((j, rng.gen_range(-1.0..1.0)));
                        }
                    }
                    views.push(v);
                }
                let gate = vec![(rng.gen_range(0..dims.gate_in) as u32, 1.0), (2, 0.5)];
                let extra = vec![(rng.gen_range(0..dims.extra) as u32, rng.gen_range(0.5..1.5))];
                let input = StepInput { views, gate, extra, head: t % dims.class_heads };
                let target = StepTarget {
                    action: Some(rng.gen_range(0..dims.actions)),
                    class: if t % 2 == 0 { Some(rng.gen_range(0..dims.classes)) } else { None },
                    progress: Some([rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]),
                };
                (input, target)
            })
            .collect()
    }

    #[test]
    fn gradients_match_central_differences() {
        let dims = tiny();
        let mut cell = RecurrentPolicyCell::new(dims, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        cell.params.iter_mut().for_each(|p| *p = rng.gen_range(-0.5..0.5));
        let seq = random_sequence(&dims, 5, 11);
        let mut grad = vec![0.0; cell.params.len()];
        cell.sequence_loss_grad(&seq, Some(&mut grad));
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..cell.params.len() {
            let keep = cell.params[i];
            cell.params[i] = keep + eps;
            let up = cell.sequence_loss_grad(&seq, None).loss;
            cell.params[i] = keep - eps;
            let down = cell.sequence_loss_grad(&seq, None).loss;
            cell.params[i] = keep;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn zero_cell_is_uniform() {
        let dims = tiny();
        let cell = RecurrentPolicyCell::zeros(dims);
        let seq = random_sequence(&dims, 1, 2);
        let out = cell.step(&cell.initial_state(), &seq[0].0);
        assert!(out.action_probs.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12));
        assert!(out.hidden.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn layout_covers_every_parameter() {
        let d = tiny();
        let expect = 3 * 4 + 4 + 11 * 6 + 3 * 6 + 6 + 14 * 3 + 3 + 14 * 6 + 6 + 14 * 2 + 2;
        assert_eq!(d.num_params(), expect);
    }
}
