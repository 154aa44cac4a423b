//! Recurrent dueling Q-network: encoder -> LSTM -> value/advantage heads.
//!
//! Parameters live in one flat `Vec<f64>` so the optimizer, checkpoint
//! writer and gradient checker can treat them uniformly. [`Layout`] gives
//! the offset of each tensor. All tensors are row-major.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{FeatureVector, D};
use crate::sim::MacroAction;

/// Encoder width.
pub const H: usize = 64;
/// LSTM state width.
pub const M: usize = 64;
/// Number of actions.
pub const A: usize = MacroAction::COUNT;

const GATES: usize = 4 * M;

pub type QValues = [f64; A];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetError {
    #[error("bad magic bytes in parameter blob")]
    BadMagic,
    #[error("unsupported parameter format version {0}")]
    Version(u16),
    #[error("layout mismatch: blob has dims {found:?}, expected {expected:?}")]
    Layout { expected: [u32; 4], found: [u32; 4] },
    #[error("shape mismatch: expected {expected} bytes, found {found}")]
    Shape { expected: usize, found: usize },
}

/// Offsets of each tensor inside the flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct Layout;

impl Layout {
    pub const ENC_W: usize = 0;
    pub const ENC_B: usize = Self::ENC_W + H * D;
    pub const LSTM_WX: usize = Self::ENC_B + H;
    pub const LSTM_WH: usize = Self::LSTM_WX + GATES * H;
    pub const LSTM_B: usize = Self::LSTM_WH + GATES * M;
    pub const VAL_W: usize = Self::LSTM_B + GATES;
    pub const VAL_B: usize = Self::VAL_W + M;
    pub const ADV_W: usize = Self::VAL_B + 1;
    pub const ADV_B: usize = Self::ADV_W + A * M;
    pub const LEN: usize = Self::ADV_B + A;

    /// Gate blocks inside the LSTM tensors, in row order.
    pub const GATE_INPUT: usize = 0;
    pub const GATE_FORGET: usize = 1;
    pub const GATE_CELL: usize = 2;
    pub const GATE_OUTPUT: usize = 3;

    /// Human-readable name of the tensor containing flat index `i`.
    pub fn tensor_name(i: usize) -> &'static str {
        match i {
            _ if i < Self::ENC_B => "enc_w",
            _ if i < Self::LSTM_WX => "enc_b",
            _ if i < Self::LSTM_WH => "lstm_wx",
            _ if i < Self::LSTM_B => "lstm_wh",
            _ if i < Self::VAL_W => "lstm_b",
            _ if i < Self::VAL_B => "val_w",
            _ if i < Self::ADV_W => "val_b",
            _ if i < Self::ADV_B => "adv_w",
            _ => "adv_b",
        }
    }
}

/// Online or target network weights.
///
/// `recurrent = false` is the feed-forward ablation: the LSTM cell still
/// runs but starts every step from a zero state, so each decision only sees
/// the latest observation.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetParams {
    pub data: Vec<f64>,
    pub recurrent: bool,
}

impl QNetParams {
    pub fn zeros(recurrent: bool) -> Self {
        QNetParams {
            data: vec![0.0; Layout::LEN],
            recurrent,
        }
    }

    /// Uniform init in +-1/sqrt(fan_in) per tensor.
    pub fn init(seed: u64, recurrent: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0; Layout::LEN];
        let blocks = [
            (Layout::ENC_W, Layout::LSTM_WX, D),
            (Layout::LSTM_WX, Layout::VAL_W, H + M),
            (Layout::VAL_W, Layout::LEN, M),
        ];
        for (start, end, fan_in) in blocks {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for w in &mut data[start..end] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        QNetParams { data, recurrent }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn enc_w(&self) -> &[f64] {
        &self.data[Layout::ENC_W..Layout::ENC_B]
    }
    fn enc_b(&self) -> &[f64] {
        &self.data[Layout::ENC_B..Layout::LSTM_WX]
    }
    fn wx(&self) -> &[f64] {
        &self.data[Layout::LSTM_WX..Layout::LSTM_WH]
    }
    fn wh(&self) -> &[f64] {
        &self.data[Layout::LSTM_WH..Layout::LSTM_B]
    }
    fn lstm_b(&self) -> &[f64] {
        &self.data[Layout::LSTM_B..Layout::VAL_W]
    }
    fn val_w(&self) -> &[f64] {
        &self.data[Layout::VAL_W..Layout::VAL_B]
    }
    fn val_b(&self) -> f64 {
        self.data[Layout::VAL_B]
    }
    fn adv_w(&self) -> &[f64] {
        &self.data[Layout::ADV_W..Layout::ADV_B]
    }
    fn adv_b(&self) -> &[f64] {
        &self.data[Layout::ADV_B..Layout::LEN]
    }

    pub fn forward(&self, seq: &[FeatureVector], init: &HiddenState) -> (Vec<QValues>, HiddenState) {
        let mut state = init.clone();
        let mut scratch = StepCache::default();
        let q = seq
            .iter()
            .map(|x| self.step(x, &mut state, &mut scratch))
            .collect();
        (q, state)
    }

    /// Advance `state` by one observation and return its Q-values.
    pub fn step(&self, x: &FeatureVector, state: &mut HiddenState, scratch: &mut StepCache) -> QValues {
        if !self.recurrent {
            state.reset();
        }
        self.cell(x, state, scratch);
        state.h.copy_from_slice(&scratch.h);
        state.c.copy_from_slice(&scratch.c);
        self.head(&scratch.h)
    }

    /// Forward pass that keeps every intermediate needed by [`Trace::backward`].
    pub fn forward_traced(&self, seq: &[FeatureVector], init: &HiddenState) -> Trace {
        let mut state = init.clone();
        let mut steps = Vec::with_capacity(seq.len());
        let mut q = Vec::with_capacity(seq.len());
        for x in seq {
            if !self.recurrent {
                state.reset();
            }
            let mut cache = StepCache::default();
            cache.h_prev.copy_from_slice(&state.h);
            cache.c_prev.copy_from_slice(&state.c);
            self.cell(x, &state, &mut cache);
            state.h.copy_from_slice(&cache.h);
            state.c.copy_from_slice(&cache.c);
            q.push(self.head(&cache.h));
            steps.push(cache);
        }
        Trace {
            inputs: seq.to_vec(),
            steps,
            q,
            final_state: state,
        }
    }

    fn cell(&self, x: &FeatureVector, state: &HiddenState, out: &mut StepCache) {
        out.x = *x;
        let (enc_w, enc_b) = (self.enc_w(), self.enc_b());
        for j in 0..H {
            let v = enc_b[j] + dot(&enc_w[j * D..(j + 1) * D], x);
            out.e[j] = v.max(0.0);
        }
        let (wx, wh, b) = (self.wx(), self.wh(), self.lstm_b());
        let mut z = [0.0; GATES];
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = b[r] + dot(&wx[r * H..(r + 1) * H], &out.e) + dot(&wh[r * M..(r + 1) * M], &state.h);
        }
        for j in 0..M {
            let i = sigmoid(z[Layout::GATE_INPUT * M + j]);
            let f = sigmoid(z[Layout::GATE_FORGET * M + j]);
            let g = z[Layout::GATE_CELL * M + j].tanh();
            let o = sigmoid(z[Layout::GATE_OUTPUT * M + j]);
            let c = f * state.c[j] + i * g;
            let tc = c.tanh();
            out.i[j] = i;
            out.f[j] = f;
            out.g[j] = g;
            out.o[j] = o;
            out.c[j] = c;
            out.tanh_c[j] = tc;
            out.h[j] = o * tc;
        }
    }

    fn head(&self, h: &[f64; M]) -> QValues {
        let v = self.val_b() + dot(self.val_w(), h);
        let (adv_w, adv_b) = (self.adv_w(), self.adv_b());
        let mut adv = [0.0; A];
        for (a, out) in adv.iter_mut().enumerate() {
            *out = adv_b[a] + dot(&adv_w[a * M..(a + 1) * M], h);
        }
        let mean = adv.iter().sum::<f64>() / A as f64;
        adv.map(|x| v + x - mean)
    }

    /// Exact gradients of `sum_t sum_a dq[t][a] * q[t][a]` with respect to
    /// every parameter.
    pub fn backward(&self, seq: &[FeatureVector], init: &HiddenState, dq: &[QValues]) -> Gradients {
        self.forward_traced(seq, init).backward(self, dq)
    }
}

/// LSTM carry. Zero at episode start.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub h: [f64; M],
    pub c: [f64; M],
}

impl Default for HiddenState {
    fn default() -> Self {
        HiddenState {
            h: [0.0; M],
            c: [0.0; M],
        }
    }
}

impl HiddenState {
    pub fn reset(&mut self) {
        self.h = [0.0; M];
        self.c = [0.0; M];
    }

    pub fn is_zero(&self) -> bool {
        self.h.iter().chain(self.c.iter()).all(|v| *v == 0.0)
    }
}

/// Per-step activations.
#[derive(Debug, Clone)]
pub struct StepCache {
    x: FeatureVector,
    e: [f64; H],
    h_prev: [f64; M],
    c_prev: [f64; M],
    i: [f64; M],
    f: [f64; M],
    g: [f64; M],
    o: [f64; M],
    c: [f64; M],
    tanh_c: [f64; M],
    h: [f64; M],
}

impl Default for StepCache {
    fn default() -> Self {
        StepCache {
            x: [0.0; D],
            e: [0.0; H],
            h_prev: [0.0; M],
            c_prev: [0.0; M],
            i: [0.0; M],
            f: [0.0; M],
            g: [0.0; M],
            o: [0.0; M],
            c: [0.0; M],
            tanh_c: [0.0; M],
            h: [0.0; M],
        }
    }
}

/// Same shape as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub data: Vec<f64>,
}

impl Gradients {
    pub fn zeros() -> Self {
        Gradients {
            data: vec![0.0; Layout::LEN],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescale to global norm `max_norm` if above it. Returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm {
            let s = max_norm / n;
            self.data.iter_mut().for_each(|g| *g *= s);
        }
        n
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Deliberate gradient bugs for mutation-testing the gradient checker.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientFault {
    None,
    /// Drops the sigmoid derivative on the forget gate.
    ForgetGate,
}

/// A forward pass with everything needed for backpropagation through time.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<FeatureVector>,
    steps: Vec<StepCache>,
    pub q: Vec<QValues>,
    pub final_state: HiddenState,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Hidden state after step `t`.
    pub fn state_after(&self, t: usize) -> HiddenState {
        let s = &self.steps[t];
        HiddenState { h: s.h, c: s.c }
    }

    pub fn backward(&self, params: &QNetParams, dq: &[QValues]) -> Gradients {
        let mut grads = Gradients::zeros();
        self.backward_into(params, dq, &mut grads, GradientFault::None);
        grads
    }

    #[doc(hidden)]
    pub fn backward_with_fault(&self, params: &QNetParams, dq: &[QValues], fault: GradientFault) -> Gradients {
        let mut grads = Gradients::zeros();
        self.backward_into(params, dq, &mut grads, fault);
        grads
    }

    /// Accumulate gradients into `grads`.
    pub fn backward_into(&self, params: &QNetParams, dq: &[QValues], grads: &mut Gradients, fault: GradientFault) {
        assert_eq!(dq.len(), self.steps.len(), "cotangent length must match sequence length");
        let g = &mut grads.data;
        let (val_w, adv_w, wx, wh) = (params.val_w(), params.adv_w(), params.wx(), params.wh());
        let mut dh_next = [0.0; M];
        let mut dc_next = [0.0; M];
        for t in (0..self.steps.len()).rev() {
            let s = &self.steps[t];
            let dqt = &dq[t];
            if dqt.iter().all(|v| *v == 0.0) && dh_next.iter().chain(&dc_next).all(|v| *v == 0.0) {
                continue;
            }

            // Dueling head: q_a = V + adv_a - mean(adv).
            let dv: f64 = dqt.iter().sum();
            let mean_dq = dv / A as f64;
            let dadv = dqt.map(|d| d - mean_dq);

            g[Layout::VAL_B] += dv;
            let mut dh = dh_next;
            for j in 0..M {
                g[Layout::VAL_W + j] += dv * s.h[j];
                dh[j] += val_w[j] * dv;
            }
            for (a, da) in dadv.iter().enumerate() {
                if *da == 0.0 {
                    continue;
                }
                g[Layout::ADV_B + a] += da;
                let row = &adv_w[a * M..(a + 1) * M];
                let grow = &mut g[Layout::ADV_W + a * M..Layout::ADV_W + (a + 1) * M];
                for j in 0..M {
                    grow[j] += da * s.h[j];
                    dh[j] += row[j] * da;
                }
            }

            // LSTM cell.
            let mut dz = [0.0; GATES];
            let mut dc_prev = [0.0; M];
            for j in 0..M {
                let (i, f, gg, o, tc) = (s.i[j], s.f[j], s.g[j], s.o[j], s.tanh_c[j]);
                let d_o = dh[j] * tc;
                let dc = dc_next[j] + dh[j] * o * (1.0 - tc * tc);
                let df = dc * s.c_prev[j];
                let di = dc * gg;
                let dg = dc * i;
                dc_prev[j] = dc * f;
                dz[Layout::GATE_INPUT * M + j] = di * i * (1.0 - i);
                dz[Layout::GATE_FORGET * M + j] = match fault {
                    GradientFault::None => df * f * (1.0 - f),
                    GradientFault::ForgetGate => df,
                };
                dz[Layout::GATE_CELL * M + j] = dg * (1.0 - gg * gg);
                dz[Layout::GATE_OUTPUT * M + j] = d_o * o * (1.0 - o);
            }

            let mut de = [0.0; H];
            let mut dh_prev = [0.0; M];
            for (r, dzr) in dz.iter().enumerate() {
                let dzr = *dzr;
                g[Layout::LSTM_B + r] += dzr;
                if dzr == 0.0 {
                    continue;
                }
                let wx_row = &wx[r * H..(r + 1) * H];
                let gx = &mut g[Layout::LSTM_WX + r * H..Layout::LSTM_WX + (r + 1) * H];
                for k in 0..H {
                    gx[k] += dzr * s.e[k];
                    de[k] += wx_row[k] * dzr;
                }
                let wh_row = &wh[r * M..(r + 1) * M];
                let gh = &mut g[Layout::LSTM_WH + r * M..Layout::LSTM_WH + (r + 1) * M];
                for k in 0..M {
                    gh[k] += dzr * s.h_prev[k];
                    dh_prev[k] += wh_row[k] * dzr;
                }
            }

            // Encoder.
            for j in 0..H {
                if s.e[j] <= 0.0 {
                    continue;
                }
                let dpre = de[j];
                g[Layout::ENC_B + j] += dpre;
                let gw = &mut g[Layout::ENC_W + j * D..Layout::ENC_W + (j + 1) * D];
                for k in 0..D {
                    gw[k] += dpre * self.inputs[t][k];
                }
            }

            if params.recurrent {
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dot product with a fixed four-lane reduction order.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Index of the highest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Compare analytic gradients against central differences on `probes`
/// random coordinates and return the largest relative error.
///
/// The scalar checked is `sum_t sum_a w[t][a] * q[t][a]` for a random
/// cotangent `w`. Relative error is `|g - n| / max(|g|, |n|, 1e-6)`, which
/// is zero when both sides vanish.
pub fn finite_diff_check(params: &QNetParams, seq: &[FeatureVector], init: &HiddenState, probe_seed: u64) -> f64 {
    finite_diff_check_with(params, seq, init, probe_seed, 200, GradientFault::None)
}

#[doc(hidden)]
pub fn finite_diff_check_with(
    params: &QNetParams,
    seq: &[FeatureVector],
    init: &HiddenState,
    probe_seed: u64,
    probes: usize,
    fault: GradientFault,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
    let cot: Vec<QValues> = (0..seq.len())
        .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
        .collect();
    let analytic = params
        .forward_traced(seq, init)
        .backward_with_fault(params, &cot, fault);
    let objective = |p: &QNetParams| -> f64 {
        let (q, _) = p.forward(seq, init);
        q.iter()
            .zip(&cot)
            .map(|(qt, wt)| qt.iter().zip(wt).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    };
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let k = rng.gen_range(0..Layout::LEN);
        let orig = probe.data[k];
        probe.data[k] = orig + FD_STEP;
        let up = objective(&probe);
        probe.data[k] = orig - FD_STEP;
        let down = objective(&probe);
        probe.data[k] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic.data[k];
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}

const BLOB_MAGIC: &[u8; 4] = b"FDQN";
const BLOB_VERSION: u16 = 1;
const BLOB_HEADER: usize = 4 + 2 + 1 + 1 + 16 + 8;

pub fn dims() -> [u32; 4] {
    [D as u32, H as u32, M as u32, A as u32]
}

impl QNetParams {
    /// Byte layout (all little-endian): magic `FDQN`, u16 format version,
    /// u8 recurrent flag, u8 reserved, u32 x4 dims (D, H, M, A), u64 count,
    /// then `count` f64 values in [`Layout`] order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(BLOB_HEADER + 8 * self.data.len());
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        out.push(self.recurrent as u8);
        out.push(0);
        for d in dims() {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(self.data.len() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parse a blob produced by [`QNetParams::to_bytes`]. Returns the params
    /// and the number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), NetError> {
        if bytes.len() < BLOB_HEADER {
            return Err(NetError::Shape {
                expected: BLOB_HEADER,
                found: bytes.len(),
            });
        }
        if &bytes[0..4] != BLOB_MAGIC {
            return Err(NetError::BadMagic);
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != BLOB_VERSION {
            return Err(NetError::Version(version));
        }
        let recurrent = bytes[6] != 0;
        let mut found = [0u32; 4];
        for (i, d) in found.iter_mut().enumerate() {
            let o = 8 + 4 * i;
            *d = u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        }
        if found != dims() {
            return Err(NetError::Layout {
                expected: dims(),
                found,
            });
        }
        let count = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
        let expected = BLOB_HEADER + 8 * Layout::LEN;
        if count != Layout::LEN || bytes.len() < expected {
            return Err(NetError::Shape {
                expected,
                found: bytes.len().min(BLOB_HEADER + 8 * count),
            });
        }
        let data = bytes[BLOB_HEADER..expected]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((QNetParams { data, recurrent }, expected))
    }
}
