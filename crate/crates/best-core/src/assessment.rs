//! Safe-driving assessment pipeline: dataset preparation from a record
//! store, ground-truth risk labeling, a from-scratch two-layer LSTM
//! classifier with a four-layer feed-forward baseline, VRI computation,
//! threshold analysis, and countermeasure dispatch.
//!
//! Everything is deterministic under a fixed seed: weight initialization,
//! dropout masks, batch shuffling, and the train/test split all derive from
//! explicit seeds through counter-mode RNG streams.

use alloc::vec;
use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::crypto::{PublicKey, Signature};
use crate::ledger::{CentralStore, Chain, LedgerError};
use crate::telemetry::{StatusRecord, VehicleState, A_MAX, V_MAX_MPS};

/// Time steps per assessment window (seconds of history).
pub const SEQ_LEN: usize = 10;
/// Features per time step.
pub const FEATURES: usize = 7;
/// Risk levels / classifier classes.
pub const NUM_CLASSES: usize = 4;
/// Midpoints of the four equal risk-level bands, used to collapse a class
/// distribution into one continuous VRI.
pub const CLASS_CENTERS: [f64; NUM_CLASSES] = [0.125, 0.375, 0.625, 0.875];
/// Lower clamp keeping VRI strictly positive, so VRI is in (0, 1].
pub const VRI_EPSILON: f64 = 1e-6;
/// Distances at or beyond this many meters contribute zero proximity risk.
pub const RISK_DISTANCE_CAP_M: f64 = 100.0;
/// Neighbor counts at or beyond this value saturate the crowding risk term.
pub const RISK_NEIGHBOR_CAP: f64 = 20.0;

/// Default feed-forward baseline: widths of the flattened-input network.
pub const DNN_WIDTHS: [usize; 5] = [SEQ_LEN * FEATURES, 64, 64, 32, NUM_CLASSES];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssessError {
    EmptySequence,
    ShapeMismatch,
    UnknownVehicle,
    /// Training loss became non-finite.
    DivergenceDetected,
}

/// The four safety levels, totally ordered from safest to worst.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskLevel {
    Low = 0,
    Medium = 1,
    High = 2,
    Accident = 3,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; NUM_CLASSES] =
        [RiskLevel::Low, RiskLevel::Medium, RiskLevel::High, RiskLevel::Accident];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> RiskLevel {
        Self::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            RiskLevel::Low => "low",
            RiskLevel::Medium => "medium",
            RiskLevel::High => "high",
            RiskLevel::Accident => "accident",
        }
    }
}

/// Normalize one record into the 7 model features, each in [0, 1].
///
/// Claimed values outside the physical envelope are clamped, so a record
/// claiming 4x the speed cap is indistinguishable here from one cruising at
/// the cap — the information loss that makes unfiltered forged data poison
/// a training set.
pub fn feature_vector(record: &StatusRecord) -> [f64; FEATURES] {
    let s = &record.state;
    [
        clamp01(s.velocity / V_MAX_MPS),
        clamp01((s.acceleration + A_MAX) / (2.0 * A_MAX)),
        clamp01(s.neighbor_count as f64 / RISK_NEIGHBOR_CAP),
        1.0 - fmin(s.min_distance, RISK_DISTANCE_CAP_M).max(0.0) / RISK_DISTANCE_CAP_M,
        if record.actions.brake { 1.0 } else { 0.0 },
        if record.actions.turn { 1.0 } else { 0.0 },
        record.prior_vri.unwrap_or(0.0),
    ]
}

fn clamp01(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x > 1.0 {
        1.0
    } else {
        x
    }
}

fn fmin(a: f64, b: f64) -> f64 {
    if a < b {
        a
    } else {
        b
    }
}

/// Instantaneous risk score of one state, in [0, 1] for physical states.
///
/// Unlike [`feature_vector`], the velocity and acceleration terms are *not*
/// clamped: labels score the claimed state at face value.
pub fn state_risk(state: &VehicleState) -> f64 {
    let v_term = state.velocity / V_MAX_MPS;
    let a_term = libm::fabs(state.acceleration) / A_MAX;
    let d_term = 1.0 - fmin(state.min_distance, RISK_DISTANCE_CAP_M).max(0.0) / RISK_DISTANCE_CAP_M;
    let n_term = fmin(state.neighbor_count as f64, RISK_NEIGHBOR_CAP) / RISK_NEIGHBOR_CAP;
    0.3 * v_term + 0.2 * a_term + 0.3 * d_term + 0.2 * n_term
}

/// Ground-truth risk level of a short state history: the mean instantaneous
/// risk score cut at quartiles 0.25 / 0.5 / 0.75.
pub fn ground_truth_vri(states: &[VehicleState]) -> Result<RiskLevel, AssessError> {
    if states.is_empty() || states.len() > SEQ_LEN {
        return Err(AssessError::EmptySequence);
    }
    let r: f64 = states.iter().map(state_risk).sum::<f64>() / states.len() as f64;
    Ok(if r < 0.25 {
        RiskLevel::Low
    } else if r < 0.5 {
        RiskLevel::Medium
    } else if r < 0.75 {
        RiskLevel::High
    } else {
        RiskLevel::Accident
    })
}

/// One training/evaluation example: a 10-step feature window (oldest first,
/// front-padded with zero rows), its validity mask, and the label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSequence {
    pub features: [[f64; FEATURES]; SEQ_LEN],
    pub mask: [bool; SEQ_LEN],
    pub label: RiskLevel,
    pub vehicle: PublicKey,
}

impl LabeledSequence {
    /// Build a sequence from <= SEQ_LEN records (oldest first), labeling it
    /// from the claimed states.
    pub fn from_records(
        vehicle: PublicKey,
        records: &[StatusRecord],
    ) -> Result<LabeledSequence, AssessError> {
        if records.is_empty() || records.len() > SEQ_LEN {
            return Err(AssessError::EmptySequence);
        }
        let mut features = [[0.0; FEATURES]; SEQ_LEN];
        let mut mask = [false; SEQ_LEN];
        let pad = SEQ_LEN - records.len();
        for (i, rec) in records.iter().enumerate() {
            features[pad + i] = feature_vector(rec);
            mask[pad + i] = true;
        }
        let states: Vec<VehicleState> = records.iter().map(|r| r.state).collect();
        let label = ground_truth_vri(&states)?;
        Ok(LabeledSequence { features, mask, label, vehicle })
    }
}

/// A source of per-vehicle record histories: the audited chain or the
/// centralized (signature-only) store.
pub enum Store<'a> {
    Chain(&'a Chain),
    Central(&'a CentralStore),
}

impl Store<'_> {
    fn vehicles(&self) -> Vec<PublicKey> {
        match self {
            Store::Chain(c) => c.vehicles_with_records(),
            Store::Central(c) => c.records.keys().copied().collect(),
        }
    }

    fn history(&self, vehicle: &PublicKey) -> Vec<StatusRecord> {
        match self {
            Store::Chain(c) => c.query_history(vehicle, usize::MAX).unwrap_or_default(),
            Store::Central(c) => {
                let mut recs = c.records.get(vehicle).cloned().unwrap_or_default();
                recs.sort_by_key(|r| r.timestamp);
                recs
            }
        }
    }
}

/// One labeled sequence per (vehicle, terminal record): sliding windows of
/// up to `window` records with stride 1.
pub fn prepare_dataset(store: &Store, window: usize) -> Vec<LabeledSequence> {
    assert!((1..=SEQ_LEN).contains(&window));
    let mut out = Vec::new();
    for vehicle in store.vehicles() {
        let records = store.history(&vehicle);
        for end in 1..=records.len() {
            let start = end.saturating_sub(window);
            if let Ok(seq) = LabeledSequence::from_records(vehicle, &records[start..end]) {
                out.push(seq);
            }
        }
    }
    out
}

/// Deterministic 80/20 split by seeded shuffle.
pub fn split_dataset(
    mut data: Vec<LabeledSequence>,
    seed: u64,
) -> (Vec<LabeledSequence>, Vec<LabeledSequence>) {
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed ^ 0x7370_6c69_74); // "split"
    for i in (1..data.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        data.swap(i, j);
    }
    let train_len = data.len() * 4 / 5;
    let test = data.split_off(train_len);
    (data, test)
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// Two stacked LSTM layers of width H, then an affine map to 4 logits.
    Lstm2,
    /// Four affine+tanh layers on the flattened 70-vector, then 4 logits.
    Dnn4,
}

/// Flat parameter vector plus the metadata to interpret it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    /// LSTM hidden width; ignored by the fixed-width DNN.
    pub hidden: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub weights: Vec<f64>,
}

/// (length, fan_in) of every tensor in layout order; fan_in = 0 marks a bias
/// (initialized to zero).
fn tensor_spec(arch: Architecture, hidden: usize) -> Vec<(usize, usize)> {
    match arch {
        Architecture::Lstm2 => {
            let h = hidden;
            vec![
                (4 * h * FEATURES, FEATURES), // layer 1 input weights
                (4 * h * h, h),               // layer 1 recurrent weights
                (4 * h, 0),                   // layer 1 bias
                (4 * h * h, h),               // layer 2 input weights
                (4 * h * h, h),               // layer 2 recurrent weights
                (4 * h, 0),                   // layer 2 bias
                (NUM_CLASSES * h, h),         // output weights
                (NUM_CLASSES, 0),             // output bias
            ]
        }
        Architecture::Dnn4 => {
            let mut spec = Vec::new();
            for win in DNN_WIDTHS.windows(2) {
                spec.push((win[1] * win[0], win[0]));
                spec.push((win[1], 0));
            }
            spec
        }
    }
}

pub fn param_count(arch: Architecture, hidden: usize) -> usize {
    tensor_spec(arch, hidden).iter().map(|(len, _)| len).sum()
}

impl ModelParams {
    /// Seeded initialization: weights uniform in [-1/sqrt(fan_in),
    /// +1/sqrt(fan_in)], biases zero.
    pub fn init(arch: Architecture, hidden: usize, dropout_rate: f64, seed: u64) -> ModelParams {
        assert!((0.0..1.0).contains(&dropout_rate));
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed ^ 0x696e_6974); // "init"
        let mut weights = Vec::with_capacity(param_count(arch, hidden));
        for (len, fan_in) in tensor_spec(arch, hidden) {
            if fan_in == 0 {
                weights.extend(core::iter::repeat_n(0.0, len));
            } else {
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                for _ in 0..len {
                    weights.push((uniform01(&mut rng) * 2.0 - 1.0) * bound);
                }
            }
        }
        ModelParams { arch, hidden, dropout_rate, seed, weights }
    }

    /// All-zero weights (uniform softmax output); used by tests.
    pub fn zeroed(arch: Architecture, hidden: usize) -> ModelParams {
        ModelParams {
            arch,
            hidden,
            dropout_rate: 0.0,
            seed: 0,
            weights: vec![0.0; param_count(arch, hidden)],
        }
    }

    fn check_shape(&self) -> Result<(), AssessError> {
        if self.weights.len() == param_count(self.arch, self.hidden) {
            Ok(())
        } else {
            Err(AssessError::ShapeMismatch)
        }
    }
}

fn uniform01(rng: &mut rand_chacha::ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// y += M x for a row-major (rows x cols) matrix.
fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(m.len(), rows * cols);
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        y[r] += acc;
    }
}

/// x += M^T y.
fn matvec_t(m: &[f64], rows: usize, cols: usize, y: &[f64], x: &mut [f64]) {
    for r in 0..rows {
        let row = &m[r * cols..(r + 1) * cols];
        let yr = y[r];
        for (xc, a) in x.iter_mut().zip(row) {
            *xc += a * yr;
        }
    }
}

/// G += y x^T (outer product accumulate).
fn outer_acc(g: &mut [f64], rows: usize, cols: usize, y: &[f64], x: &[f64]) {
    for r in 0..rows {
        let row = &mut g[r * cols..(r + 1) * cols];
        let yr = y[r];
        for (gc, xc) in row.iter_mut().zip(x) {
            *gc += yr * xc;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Numerically stable softmax.
fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = libm::exp(l - mx);
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// Flat-layout offsets for the 2-layer LSTM.
struct LstmLayout {
    h: usize,
    l_wx: [usize; 2],
    l_wh: [usize; 2],
    l_b: [usize; 2],
    wo: usize,
    bo: usize,
}

impl LstmLayout {
    fn new(h: usize) -> LstmLayout {
        let mut off = 0;
        let mut next = |len: usize| {
            let o = off;
            off += len;
            o
        };
        let l1_wx = next(4 * h * FEATURES);
        let l1_wh = next(4 * h * h);
        let l1_b = next(4 * h);
        let l2_wx = next(4 * h * h);
        let l2_wh = next(4 * h * h);
        let l2_b = next(4 * h);
        let wo = next(NUM_CLASSES * h);
        let bo = next(NUM_CLASSES);
        LstmLayout {
            h,
            l_wx: [l1_wx, l2_wx],
            l_wh: [l1_wh, l2_wh],
            l_b: [l1_b, l2_b],
            wo,
            bo,
        }
    }

    fn input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            FEATURES
        } else {
            self.h
        }
    }
}

/// Everything one LSTM cell step needs for backpropagation.
#[derive(Clone)]
struct LstmStepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
    h: Vec<f64>,
}

/// One LSTM cell step: gates in (input, forget, candidate, output) order.
fn lstm_cell(
    wx: &[f64],
    wh: &[f64],
    b: &[f64],
    d_in: usize,
    h_dim: usize,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> LstmStepCache {
    let mut z = b.to_vec();
    matvec(wx, 4 * h_dim, d_in, x, &mut z);
    matvec(wh, 4 * h_dim, h_dim, h_prev, &mut z);
    let mut cache = LstmStepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i: vec![0.0; h_dim],
        f: vec![0.0; h_dim],
        g: vec![0.0; h_dim],
        o: vec![0.0; h_dim],
        c: vec![0.0; h_dim],
        tc: vec![0.0; h_dim],
        h: vec![0.0; h_dim],
    };
    for k in 0..h_dim {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[h_dim + k]);
        let g = libm::tanh(z[2 * h_dim + k]);
        let o = sigmoid(z[3 * h_dim + k]);
        let c = f * c_prev[k] + i * g;
        let tc = libm::tanh(c);
        cache.i[k] = i;
        cache.f[k] = f;
        cache.g[k] = g;
        cache.o[k] = o;
        cache.c[k] = c;
        cache.tc[k] = tc;
        cache.h[k] = o * tc;
    }
    cache
}

/// Per-sequence forward cache for the LSTM (active steps only, in order).
struct LstmForward {
    steps: [Vec<LstmStepCache>; 2],
    /// Inverted-dropout scale applied to layer-1 outputs feeding layer 2.
    drop1: Vec<Vec<f64>>,
    /// Scale applied to the final layer-2 output feeding the head.
    drop2: Vec<f64>,
    top: Vec<f64>,
    logits: [f64; NUM_CLASSES],
    probs: [f64; NUM_CLASSES],
}

fn dropout_mask(
    len: usize,
    rate: f64,
    rng: Option<&mut rand_chacha::ChaCha20Rng>,
) -> Vec<f64> {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            (0..len)
                .map(|_| if uniform01(rng) < keep { 1.0 / keep } else { 0.0 })
                .collect()
        }
        _ => vec![1.0; len],
    }
}

fn lstm_forward(
    params: &ModelParams,
    seq: &LabeledSequence,
    mut rng: Option<&mut rand_chacha::ChaCha20Rng>,
) -> LstmForward {
    let lay = LstmLayout::new(params.hidden);
    let h_dim = lay.h;
    let w = &params.weights;
    let mut steps: [Vec<LstmStepCache>; 2] = [Vec::new(), Vec::new()];
    let mut drop1 = Vec::new();

    let mut h = [vec![0.0; h_dim], vec![0.0; h_dim]];
    let mut c = [vec![0.0; h_dim], vec![0.0; h_dim]];
    for t in 0..SEQ_LEN {
        if !seq.mask[t] {
            continue;
        }
        let s1 = lstm_cell(
            &w[lay.l_wx[0]..lay.l_wx[0] + 4 * h_dim * FEATURES],
            &w[lay.l_wh[0]..lay.l_wh[0] + 4 * h_dim * h_dim],
            &w[lay.l_b[0]..lay.l_b[0] + 4 * h_dim],
            FEATURES,
            h_dim,
            &seq.features[t],
            &h[0],
            &c[0],
        );
        h[0] = s1.h.clone();
        c[0] = s1.c.clone();
        let mask = dropout_mask(h_dim, params.dropout_rate, rng.as_deref_mut());
        let x2: Vec<f64> = s1.h.iter().zip(&mask).map(|(a, m)| a * m).collect();
        drop1.push(mask);
        steps[0].push(s1);

        let s2 = lstm_cell(
            &w[lay.l_wx[1]..lay.l_wx[1] + 4 * h_dim * h_dim],
            &w[lay.l_wh[1]..lay.l_wh[1] + 4 * h_dim * h_dim],
            &w[lay.l_b[1]..lay.l_b[1] + 4 * h_dim],
            h_dim,
            h_dim,
            &x2,
            &h[1],
            &c[1],
        );
        h[1] = s2.h.clone();
        c[1] = s2.c.clone();
        steps[1].push(s2);
    }
    let drop2 = dropout_mask(h_dim, params.dropout_rate, rng.as_deref_mut());
    let top: Vec<f64> = h[1].iter().zip(&drop2).map(|(a, m)| a * m).collect();
    let mut logits = [0.0; NUM_CLASSES];
    logits.copy_from_slice(&w[lay.bo..lay.bo + NUM_CLASSES]);
    matvec(&w[lay.wo..lay.wo + NUM_CLASSES * h_dim], NUM_CLASSES, h_dim, &top, &mut logits);
    let probs = softmax(&logits);
    LstmForward { steps, drop1, drop2, top, logits, probs }
}

/// Backpropagate the cross-entropy loss of one sequence; accumulates into
/// `grad` (same layout as the weights).
fn lstm_backward(params: &ModelParams, seq: &LabeledSequence, fwd: &LstmForward, grad: &mut [f64]) {
    let lay = LstmLayout::new(params.hidden);
    let h_dim = lay.h;
    let w = &params.weights;
    let n = fwd.steps[0].len();
    if n == 0 {
        return;
    }

    // Head.
    let mut dlogits = fwd.probs;
    dlogits[seq.label.index()] -= 1.0;
    outer_acc(&mut grad[lay.wo..lay.wo + NUM_CLASSES * h_dim], NUM_CLASSES, h_dim, &dlogits, &fwd.top);
    add_into(&mut grad[lay.bo..lay.bo + NUM_CLASSES], &dlogits);
    let mut dtop = vec![0.0; h_dim];
    matvec_t(&w[lay.wo..lay.wo + NUM_CLASSES * h_dim], NUM_CLASSES, h_dim, &dlogits, &mut dtop);

    // Upstream gradient injected into each layer's h output per step.
    // Layer 2: only the final step feeds the head (through drop2).
    let mut dh_in: Vec<Vec<f64>> = vec![vec![0.0; h_dim]; n];
    for k in 0..h_dim {
        dh_in[n - 1][k] = dtop[k] * fwd.drop2[k];
    }

    for layer in (0..2).rev() {
        let d_in = lay.input_dim(layer);
        let (wx, wh) = (
            &w[lay.l_wx[layer]..lay.l_wx[layer] + 4 * h_dim * d_in],
            &w[lay.l_wh[layer]..lay.l_wh[layer] + 4 * h_dim * h_dim],
        );
        let mut dh_next = vec![0.0; h_dim];
        let mut dc_next = vec![0.0; h_dim];
        let mut dx_out: Vec<Vec<f64>> = vec![vec![0.0; d_in]; n];
        for t in (0..n).rev() {
            let s = &fwd.steps[layer][t];
            let mut dz = vec![0.0; 4 * h_dim];
            for k in 0..h_dim {
                let dh = dh_in[t][k] + dh_next[k];
                let d_o = dh * s.tc[k];
                let dc = dc_next[k] + dh * s.o[k] * (1.0 - s.tc[k] * s.tc[k]);
                let d_i = dc * s.g[k];
                let d_f = dc * s.c_prev[k];
                let d_g = dc * s.i[k];
                dz[k] = d_i * s.i[k] * (1.0 - s.i[k]);
                dz[h_dim + k] = d_f * s.f[k] * (1.0 - s.f[k]);
                dz[2 * h_dim + k] = d_g * (1.0 - s.g[k] * s.g[k]);
                dz[3 * h_dim + k] = d_o * s.o[k] * (1.0 - s.o[k]);
                dc_next[k] = dc * s.f[k];
            }
            outer_acc(
                &mut grad[lay.l_wx[layer]..lay.l_wx[layer] + 4 * h_dim * d_in],
                4 * h_dim,
                d_in,
                &dz,
                &s.x,
            );
            outer_acc(
                &mut grad[lay.l_wh[layer]..lay.l_wh[layer] + 4 * h_dim * h_dim],
                4 * h_dim,
                h_dim,
                &dz,
                &s.h_prev,
            );
            add_into(&mut grad[lay.l_b[layer]..lay.l_b[layer] + 4 * h_dim], &dz);
            matvec_t(wx, 4 * h_dim, d_in, &dz, &mut dx_out[t]);
            dh_next = vec![0.0; h_dim];
            matvec_t(wh, 4 * h_dim, h_dim, &dz, &mut dh_next);
        }
        if layer == 1 {
            // dx of layer 2 flows into layer 1's h through the dropout mask.
            dh_in = dx_out
                .iter()
                .enumerate()
                .map(|(t, dx)| dx.iter().zip(&fwd.drop1[t]).map(|(d, m)| d * m).collect())
                .collect();
        }
    }
}

/// DNN forward cache: post-activation (and post-dropout) layer outputs.
struct DnnForward {
    /// activations[0] is the flattened input; last entry is the logits.
    activations: Vec<Vec<f64>>,
    /// Dropout scales per hidden layer.
    drops: Vec<Vec<f64>>,
    /// Pre-activation values per affine layer (for the tanh derivative).
    pre: Vec<Vec<f64>>,
    logits: [f64; NUM_CLASSES],
    probs: [f64; NUM_CLASSES],
}

fn dnn_offsets() -> Vec<(usize, usize, usize, usize)> {
    // (w_offset, b_offset, rows, cols) per affine layer
    let mut out = Vec::new();
    let mut off = 0;
    for win in DNN_WIDTHS.windows(2) {
        let (rows, cols) = (win[1], win[0]);
        out.push((off, off + rows * cols, rows, cols));
        off += rows * cols + rows;
    }
    out
}

fn flatten_input(seq: &LabeledSequence) -> Vec<f64> {
    let mut x = Vec::with_capacity(SEQ_LEN * FEATURES);
    for row in &seq.features {
        x.extend_from_slice(row);
    }
    x
}

fn dnn_forward(
    params: &ModelParams,
    seq: &LabeledSequence,
    mut rng: Option<&mut rand_chacha::ChaCha20Rng>,
) -> DnnForward {
    let w = &params.weights;
    let offs = dnn_offsets();
    let mut activations = vec![flatten_input(seq)];
    let mut pre = Vec::new();
    let mut drops = Vec::new();
    for (li, (wo, bo, rows, cols)) in offs.iter().copied().enumerate() {
        let mut z = w[bo..bo + rows].to_vec();
        matvec(&w[wo..wo + rows * cols], rows, cols, activations.last().unwrap(), &mut z);
        pre.push(z.clone());
        if li + 1 == offs.len() {
            let mut logits = [0.0; NUM_CLASSES];
            logits.copy_from_slice(&z);
            let probs = softmax(&logits);
            return DnnForward { activations, drops, pre, logits, probs };
        }
        let mask = dropout_mask(rows, params.dropout_rate, rng.as_deref_mut());
        let a: Vec<f64> = z.iter().zip(&mask).map(|(v, m)| libm::tanh(*v) * m).collect();
        drops.push(mask);
        activations.push(a);
    }
    unreachable!("last layer returns above");
}

fn dnn_backward(params: &ModelParams, seq: &LabeledSequence, fwd: &DnnForward, grad: &mut [f64]) {
    let w = &params.weights;
    let offs = dnn_offsets();
    let mut delta: Vec<f64> = fwd.probs.to_vec();
    delta[seq.label.index()] -= 1.0;
    for (li, (wo, bo, rows, cols)) in offs.iter().copied().enumerate().rev() {
        outer_acc(&mut grad[wo..wo + rows * cols], rows, cols, &delta, &fwd.activations[li]);
        add_into(&mut grad[bo..bo + rows], &delta);
        if li == 0 {
            break;
        }
        let mut dx = vec![0.0; cols];
        matvec_t(&w[wo..wo + rows * cols], rows, cols, &delta, &mut dx);
        // Through the previous layer's tanh and dropout.
        let z = &fwd.pre[li - 1];
        let mask = &fwd.drops[li - 1];
        delta = dx
            .iter()
            .zip(z)
            .zip(mask)
            .map(|((d, zv), m)| {
                let t = libm::tanh(*zv);
                d * m * (1.0 - t * t)
            })
            .collect();
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Class-probability output for one sequence. Train mode applies dropout
/// seeded from the params seed; inference is deterministic.
pub fn forward(
    params: &ModelParams,
    seq: &LabeledSequence,
    mode: Mode,
) -> Result<[f64; NUM_CLASSES], AssessError> {
    params.check_shape()?;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(params.seed ^ 0x64726f70); // "drop"
    let rng_opt = match mode {
        Mode::Train => Some(&mut rng),
        Mode::Infer => None,
    };
    Ok(match params.arch {
        Architecture::Lstm2 => lstm_forward(params, seq, rng_opt).probs,
        Architecture::Dnn4 => dnn_forward(params, seq, rng_opt).probs,
    })
}

/// Mean cross-entropy over a batch plus the gradient w.r.t. every weight.
/// `rng` enables dropout (training); `None` is the deterministic path used
/// by inference-time loss reporting and the finite-difference tests.
/// Mean cross-entropy and its gradient over a batch. `rng` enables dropout;
/// pass `None` for a deterministic, dropout-free pass (as the finite-
/// difference checks do).
pub fn batch_loss_and_grad(
    params: &ModelParams,
    batch: &[&LabeledSequence],
    mut rng: Option<&mut rand_chacha::ChaCha20Rng>,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.weights.len()];
    let mut loss = 0.0;
    for seq in batch {
        match params.arch {
            Architecture::Lstm2 => {
                let fwd = lstm_forward(params, seq, rng.as_deref_mut());
                loss += cross_entropy(&fwd.logits, seq.label);
                lstm_backward(params, seq, &fwd, &mut grad);
            }
            Architecture::Dnn4 => {
                let fwd = dnn_forward(params, seq, rng.as_deref_mut());
                loss += cross_entropy(&fwd.logits, seq.label);
                dnn_backward(params, seq, &fwd, &mut grad);
            }
        }
    }
    let n = batch.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    (loss / n, grad)
}

/// -log softmax(logits)[label], computed via log-sum-exp for stability.
fn cross_entropy(logits: &[f64; NUM_CLASSES], label: RiskLevel) -> f64 {
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + libm::log(logits.iter().map(|l| libm::exp(l - mx)).sum::<f64>());
    lse - logits[label.index()]
}

/// Mean cross-entropy of a dataset without dropout (reporting only).
pub fn dataset_loss(params: &ModelParams, data: &[LabeledSequence]) -> f64 {
    let refs: Vec<&LabeledSequence> = data.iter().collect();
    batch_loss_and_grad(params, &refs, None).0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            iterations: 200,
            batch: 512,
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

/// Minibatch Adam. Batches walk a seeded shuffle of the dataset, reshuffled
/// each epoch; the returned trace holds the pre-update batch loss of every
/// iteration.
pub fn train(
    params: &mut ModelParams,
    dataset: &[LabeledSequence],
    cfg: &TrainConfig,
) -> Result<Vec<f64>, AssessError> {
    assert!(!dataset.is_empty());
    params.check_shape()?;
    let mut order_rng = rand_chacha::ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x6f72_6465_72); // "order"
    let mut drop_rng = rand_chacha::ChaCha20Rng::seed_from_u64(params.seed ^ 0x64726f70);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut cursor = order.len(); // force an initial shuffle
    let mut m = vec![0.0; params.weights.len()];
    let mut v = vec![0.0; params.weights.len()];
    let mut trace = Vec::with_capacity(cfg.iterations);
    let batch_size = cfg.batch.min(dataset.len()).max(1);

    for step in 1..=cfg.iterations {
        if cursor + batch_size > order.len() {
            for i in (1..order.len()).rev() {
                let j = (order_rng.next_u64() % (i as u64 + 1)) as usize;
                order.swap(i, j);
            }
            cursor = 0;
        }
        let batch: Vec<&LabeledSequence> =
            order[cursor..cursor + batch_size].iter().map(|i| &dataset[*i]).collect();
        cursor += batch_size;

        let (loss, grad) = batch_loss_and_grad(params, &batch, Some(&mut drop_rng));
        if !loss.is_finite() {
            return Err(AssessError::DivergenceDetected);
        }
        trace.push(loss);

        let b1c = 1.0 - libm::pow(cfg.beta1, step as f64);
        let b2c = 1.0 - libm::pow(cfg.beta2, step as f64);
        for k in 0..params.weights.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            let mh = m[k] / b1c;
            let vh = v[k] / b2c;
            params.weights[k] -= cfg.lr * mh / (libm::sqrt(vh) + cfg.epsilon);
        }
        if params.weights.iter().any(|w| !w.is_finite()) {
            return Err(AssessError::DivergenceDetected);
        }
    }
    Ok(trace)
}

// ---------------------------------------------------------------------------
// VRI, countermeasures, evaluation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Thresholds {
    fn default() -> Thresholds {
        Thresholds { alpha: 0.4, beta: 0.8 }
    }
}

impl Thresholds {
    pub fn new(alpha: f64, beta: f64) -> Thresholds {
        assert!(0.0 < alpha && alpha < beta && beta < 1.0);
        Thresholds { alpha, beta }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Countermeasure {
    None,
    Warning,
    Suspension,
}

/// Expected class center of the predicted distribution, clamped into (0, 1].
pub fn vri_from_probs(p: &[f64; NUM_CLASSES]) -> f64 {
    let raw: f64 = p.iter().zip(&CLASS_CENTERS).map(|(pi, c)| pi * c).sum();
    if raw < VRI_EPSILON {
        VRI_EPSILON
    } else if raw > 1.0 {
        1.0
    } else {
        raw
    }
}

/// None on (0, alpha], Warning on (alpha, beta], Suspension on (beta, 1].
pub fn countermeasure(vri: f64, th: &Thresholds) -> Countermeasure {
    if vri <= th.alpha {
        Countermeasure::None
    } else if vri <= th.beta {
        Countermeasure::Warning
    } else {
        Countermeasure::Suspension
    }
}

fn argmax(p: &[f64; NUM_CLASSES]) -> usize {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if p[k] > p[best] {
            best = k;
        }
    }
    best
}

/// The assessment output bound to the assessed vehicle: continuous VRI, the
/// vehicle's public key, and the signature echoed from its latest record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VriReport {
    pub vri: f64,
    pub vehicle: PublicKey,
    pub signature: Signature,
    pub predicted_level: RiskLevel,
}

/// Assess one vehicle from its latest on-chain window and pick the
/// countermeasure.
pub fn assess(
    params: &ModelParams,
    chain: &Chain,
    vehicle: &PublicKey,
    th: &Thresholds,
) -> Result<(VriReport, Countermeasure), AssessError> {
    let history = chain.query_history(vehicle, SEQ_LEN).map_err(|e| match e {
        LedgerError::UnknownVehicle => AssessError::UnknownVehicle,
        _ => AssessError::UnknownVehicle,
    })?;
    if history.is_empty() {
        return Err(AssessError::UnknownVehicle);
    }
    let seq = LabeledSequence::from_records(*vehicle, &history)?;
    let p = forward(params, &seq, Mode::Infer)?;
    let vri = vri_from_probs(&p);
    let report = VriReport {
        vri,
        vehicle: *vehicle,
        signature: history.last().unwrap().signature,
        predicted_level: RiskLevel::from_index(argmax(&p)),
    };
    let cm = countermeasure(vri, th);
    Ok((report, cm))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// confusion[true_level][predicted_level]
    pub confusion: [[u32; NUM_CLASSES]; NUM_CLASSES],
}

/// Argmax accuracy and the 4x4 confusion matrix on a test set.
pub fn evaluate(params: &ModelParams, test: &[LabeledSequence]) -> Evaluation {
    assert!(!test.is_empty());
    let mut confusion = [[0u32; NUM_CLASSES]; NUM_CLASSES];
    let mut correct = 0usize;
    for seq in test {
        let p = forward(params, seq, Mode::Infer).expect("shape-checked params");
        let pred = argmax(&p);
        confusion[seq.label.index()][pred] += 1;
        if pred == seq.label.index() {
            correct += 1;
        }
    }
    Evaluation { accuracy: correct as f64 / test.len() as f64, confusion }
}
