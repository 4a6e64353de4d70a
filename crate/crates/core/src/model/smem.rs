//! The spatial memory network.
//!
//! Hop 1 scores every grid location by its best-matching question word:
//! `C = V·(S·W_A + b_A)ᵀ`, `W_att = softmax(max over words of C)`, and gathers
//! `S_att = W_att·(S·W_E + b_E)`. The question itself is a position-weighted
//! bag of words `Q = W_Q·V + b_Q` and `O_1 = S_att + Q`.
//!
//! Hop `k ≥ 2` attends with the whole running question vector, reusing hop
//! `k−1`'s evidence embedding as its attention embedding:
//! `W_att_k = softmax((S·W_E(k−1) + b_E(k−1))·O_(k−1))`, and adds
//! `S_att_k = W_att_k·(S·W_Ek + b_Ek)` into the running vector. The answer
//! distribution is `softmax(W_P·relu(O_H) + b_P)`.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::features::TinyConv;
use crate::param::ParamSet;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::{embed_question, glorot, ForwardOptions, SampleInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SMemConfig {
    /// Embedding dimension `N`.
    pub embed_dim: usize,
    /// Number of hops `H ≥ 1`.
    pub hops: usize,
    /// Dropout on `relu(hidden)` before the classifier; train mode only.
    pub dropout: f64,
    pub weight_decay: f64,
    /// Multiplier on the Glorot bound `√(6/(fan_in+fan_out))`.
    pub init_gain: f64,
}

impl Default for SMemConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hops: 1,
            dropout: 0.0,
            weight_decay: 0.0,
            init_gain: 1.0,
        }
    }
}

impl SMemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hops == 0 {
            return Err(Error::Usage("embedding dimension and hop count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Usage(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Usage("weight decay must be nonnegative".into()));
        }
        Ok(())
    }
}

/// An affine map applied to every location: `S·W + b` with a per-location
/// bias `b ∈ R^{L×N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationAffine {
    pub w: Tensor,
    pub b: Tensor,
}

impl LocationAffine {
    pub fn zeros(l: usize, m: usize, n: usize) -> Self {
        Self {
            w: Tensor::zeros(&[m, n]),
            b: Tensor::zeros(&[l, n]),
        }
    }

    fn apply<'a>(&'a self, g: &mut Graph<'a>, s: Var) -> Result<Var> {
        let w = g.param(&self.w);
        let b = g.param(&self.b);
        let sw = g.matmul(s, w)?;
        g.add(sw, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SMemParams {
    /// Word embeddings, `(|V|+1)×N`. The last row belongs to the padding id
    /// and stays exactly zero: lookups of padding never read it and never
    /// send it gradient.
    pub embed: Tensor,
    /// Attention embedding `W_A`, `b_A`.
    pub attention: LocationAffine,
    /// Evidence embeddings, one per hop: `W_E`, `b_E`, then `W_E2`, `b_E2`, ...
    pub evidence: Vec<LocationAffine>,
    /// Bag-of-words position weights `W_Q`, `1×T`.
    pub w_q: Tensor,
    pub b_q: Tensor,
    /// Classifier `W_P` (`K×N`) and `b_P` (`1×K`).
    pub w_p: Tensor,
    pub b_p: Tensor,
    /// Trainable extractor, when features come from the tiny convolution.
    pub conv: Option<TinyConv>,
}

/// Model dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub vocab: usize,
    pub locations: usize,
    pub feature_dim: usize,
    pub max_len: usize,
    pub answers: usize,
}

impl SMemParams {
    /// Glorot-uniform matrices, zero biases, zero padding row.
    pub fn init(cfg: &SMemConfig, dims: Dims, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let Dims {
            vocab,
            locations: l,
            feature_dim: m,
            max_len: t,
            answers: k,
        } = dims;
        if vocab == 0 || l == 0 || m == 0 || t == 0 || k == 0 {
            return Err(Error::Usage(format!("model dimensions must be positive: {dims:?}")));
        }
        let n = cfg.embed_dim;
        let gain = cfg.init_gain;
        let mut embed = glorot(&[vocab + 1, n], vocab, n, gain, rng);
        embed.data_mut()[vocab * n..].fill(0.0);
        let attention = LocationAffine {
            w: glorot(&[m, n], m, n, gain, rng),
            b: Tensor::zeros(&[l, n]),
        };
        let evidence = (0..cfg.hops)
            .map(|_| LocationAffine {
                w: glorot(&[m, n], m, n, gain, rng),
                b: Tensor::zeros(&[l, n]),
            })
            .collect();
        let w_q = glorot(&[1, t], t, 1, gain, rng);
        let w_p = glorot(&[k, n], n, k, gain, rng);
        Ok(Self {
            embed,
            attention,
            evidence,
            w_q,
            b_q: Tensor::zeros(&[1, n]),
            w_p,
            b_p: Tensor::zeros(&[1, k]),
            conv: None,
        })
    }

    pub fn hops(&self) -> usize {
        self.evidence.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.rows() - 1
    }

    pub fn padding_row(&self) -> &[f64] {
        self.embed.row(self.vocab_size())
    }

    pub fn locations(&self) -> usize {
        self.attention.b.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.attention.w.rows()
    }

    pub fn max_len(&self) -> usize {
        self.w_q.cols()
    }

    pub fn answers(&self) -> usize {
        self.w_p.rows()
    }

    /// Builds the forward pass on `g`.
    pub fn forward<'a>(
        &'a self,
        g: &mut Graph<'a>,
        input: &SampleInput<'a>,
        opts: ForwardOptions<'_>,
    ) -> Result<SMemForward> {
        let s = input.feature_var(g, self.conv.as_ref())?;
        let (v, t) = embed_question(g, &self.embed, input.question, self.max_len())?;

        // hop 1: word-guided attention
        let attn_embedded = self.attention.apply(g, s)?;
        let corr = correlation_on(g, v, attn_embedded)?;
        let (scores, argword) = g.masked_rowwise_max(corr, &input.question.mask[..t])?;
        let att1 = if opts.uniform_hop1 {
            let l = g.value(scores).cols();
            g.constant(Tensor::full(&[1, l], 1.0 / l as f64))
        } else {
            g.row_softmax(scores)?
        };
        let mut embedded = self.evidence[0].apply(g, s)?;
        let s_att = g.matmul(att1, embedded)?;
        let q = bow_question_on(g, v, t, &self.w_q, &self.b_q)?;
        let mut state = g.add(s_att, q)?;

        let mut out = SMemForward {
            correlation: corr,
            argword,
            attention: vec![att1],
            evidence: vec![s_att],
            hop_correlation: Vec::new(),
            question: q,
            hidden: state,
            logits: state,
        };

        // hops 2..H: whole-question attention with the previous evidence
        // embedding as attention embedding
        for affine in &self.evidence[1..] {
            let et = g.transpose(embedded)?;
            let c = g.matmul(state, et)?;
            let att = g.row_softmax(c)?;
            embedded = affine.apply(g, s)?;
            let ev = g.matmul(att, embedded)?;
            state = g.add(state, ev)?;
            out.hop_correlation.push(c);
            out.attention.push(att);
            out.evidence.push(ev);
        }
        out.hidden = state;
        out.logits = predict_on(g, state, &self.w_p, &self.b_p, opts.dropout)?;
        Ok(out)
    }
}

/// Handles to the interesting nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct SMemForward {
    /// Hop-1 word/location correlation `C` (`t×L`).
    pub correlation: Var,
    /// Per location, the word with maximum correlation.
    pub argword: Vec<usize>,
    /// `1×L` attention per hop.
    pub attention: Vec<Var>,
    /// `1×N` gathered evidence per hop.
    pub evidence: Vec<Var>,
    /// `1×L` correlation vectors of hops 2..H.
    pub hop_correlation: Vec<Var>,
    pub question: Var,
    /// `O_H`, the input to the classifier nonlinearity.
    pub hidden: Var,
    pub logits: Var,
}

/// Per-hop diagnostics of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopTrace {
    /// Hop-1 correlation matrix, row-major `t×L` (real and padding rows).
    pub correlation: Vec<Vec<f64>>,
    pub argword: Vec<usize>,
    pub attention: Vec<Vec<f64>>,
    pub evidence: Vec<Vec<f64>>,
    pub hop_correlation: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl HopTrace {
    pub fn from_forward(g: &Graph<'_>, f: &SMemForward, probs: Vec<f64>) -> Self {
        let c = g.value(f.correlation);
        let vecs = |vs: &[Var]| vs.iter().map(|v| g.value(*v).data().to_vec()).collect::<Vec<_>>();
        Self {
            correlation: (0..c.rows()).map(|i| c.row(i).to_vec()).collect(),
            argword: f.argword.clone(),
            attention: vecs(&f.attention),
            evidence: vecs(&f.evidence),
            hop_correlation: vecs(&f.hop_correlation),
            probs,
        }
    }

    /// Index of the largest weight of hop `hop` (0-based); ties to the
    /// lowest location.
    pub fn argmax_location(&self, hop: usize) -> usize {
        argmax(&self.attention[hop])
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn correlation_on(g: &mut Graph<'_>, v: Var, embedded: Var) -> Result<Var> {
    let et = g.transpose(embedded)?;
    g.matmul(v, et)
}

fn bow_question_on<'a>(g: &mut Graph<'a>, v: Var, t: usize, w_q: &'a Tensor, b_q: &'a Tensor) -> Result<Var> {
    let wq = g.param(w_q);
    let wq = g.slice_cols(wq, 0, t)?;
    let b = g.param(b_q);
    let wv = g.matmul(wq, v)?;
    g.add(wv, b)
}

/// Dropout settings for a training-mode forward pass.
#[derive(Debug)]
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut Rng,
}

fn predict_on<'a>(
    g: &mut Graph<'a>,
    hidden: Var,
    w_p: &'a Tensor,
    b_p: &'a Tensor,
    dropout: Option<Dropout<'_>>,
) -> Result<Var> {
    let mut h = g.relu(hidden);
    if let Some(d) = dropout.filter(|d| d.rate > 0.0) {
        let keep = 1.0 - d.rate;
        let mask = (0..g.value(h).len())
            .map(|_| if d.rng.next_f64() < d.rate { 0.0 } else { 1.0 / keep })
            .collect();
        h = g.mul_const(h, mask)?;
    }
    let w = g.param(w_p);
    let wt = g.transpose(w)?;
    let b = g.param(b_p);
    let lin = g.matmul(h, wt)?;
    g.add(lin, b)
}

/// `S·W_A + b_A`.
pub fn attention_embed(s: &Tensor, w_a: &Tensor, b_a: &Tensor) -> Result<Tensor> {
    let aff = LocationAffine {
        w: w_a.clone(),
        b: b_a.clone(),
    };
    let mut g = Graph::new();
    let sv = g.constant_ref(s);
    let out = aff.apply(&mut g, sv)?;
    Ok(g.value(out).clone())
}

/// `C = V · embeddedᵀ`; `C[j][i]` is word `j` against location `i`.
pub fn correlation(v: &Tensor, embedded: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let vv = g.constant_ref(v);
    let ev = g.constant_ref(embedded);
    let out = correlation_on(&mut g, vv, ev)?;
    Ok(g.value(out).clone())
}

/// `softmax(max over unmasked words of C)`, plus the winning word per
/// location.
pub fn word_guided_attention(c: &Tensor, mask: &[bool]) -> Result<(Tensor, Vec<usize>)> {
    let mut g = Graph::new();
    let cv = g.constant_ref(c);
    let (m, argword) = g.masked_rowwise_max(cv, mask)?;
    let w = g.row_softmax(m)?;
    Ok((g.value(w).clone(), argword))
}

/// `W · (S·W_emb + b_emb)` for a `1×L` weight row.
pub fn gather_evidence(s: &Tensor, weights: &Tensor, w_emb: &Tensor, b_emb: &Tensor) -> Result<Tensor> {
    let aff = LocationAffine {
        w: w_emb.clone(),
        b: b_emb.clone(),
    };
    let mut g = Graph::new();
    let sv = g.constant_ref(s);
    let wv = g.constant_ref(weights);
    let e = aff.apply(&mut g, sv)?;
    let out = g.matmul(wv, e)?;
    Ok(g.value(out).clone())
}

/// `Q = W_Q·V + b_Q`. Padding rows of `V` are zero and contribute nothing.
pub fn bow_question(v: &Tensor, w_q: &Tensor, b_q: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let vv = g.constant_ref(v);
    let out = bow_question_on(&mut g, vv, v.rows(), w_q, b_q)?;
    Ok(g.value(out).clone())
}

/// `softmax(W_P·f(hidden) + b_P)` with `f` = ReLU and optional dropout.
pub fn predict(hidden: &Tensor, w_p: &Tensor, b_p: &Tensor, dropout: Option<Dropout<'_>>) -> Result<Tensor> {
    let mut g = Graph::new();
    let h = g.constant_ref(hidden);
    let logits = predict_on(&mut g, h, w_p, b_p, dropout)?;
    let p = g.row_softmax(logits)?;
    Ok(g.value(p).clone())
}

impl ParamSet for SMemParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("E", &self.embed);
        f("W_A", &self.attention.w);
        f("b_A", &self.attention.b);
        for (i, e) in self.evidence.iter().enumerate() {
            let (wn, bn) = evidence_names(i);
            f(&wn, &e.w);
            f(&bn, &e.b);
        }
        f("W_Q", &self.w_q);
        f("b_Q", &self.b_q);
        f("W_P", &self.w_p);
        f("b_P", &self.b_p);
        if let Some(c) = &self.conv {
            f("conv_kernel", &c.kernel);
            f("conv_bias", &c.bias);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("E", &mut self.embed);
        f("W_A", &mut self.attention.w);
        f("b_A", &mut self.attention.b);
        for (i, e) in self.evidence.iter_mut().enumerate() {
            let (wn, bn) = evidence_names(i);
            f(&wn, &mut e.w);
            f(&bn, &mut e.b);
        }
        f("W_Q", &mut self.w_q);
        f("b_Q", &mut self.b_q);
        f("W_P", &mut self.w_p);
        f("b_P", &mut self.b_p);
        if let Some(c) = &mut self.conv {
            f("conv_kernel", &mut c.kernel);
            f("conv_bias", &mut c.bias);
        }
    }
}

pub(crate) fn evidence_names(hop: usize) -> (String, String) {
    if hop == 0 {
        ("W_E".into(), "b_E".into())
    } else {
        (format!("W_E{}", hop + 1), format!("b_E{}", hop + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FeatureInput, SampleInput};
    use crate::text::{EncodedQuestion, PAD_ID};

    fn rand_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn dims() -> Dims {
        Dims {
            vocab: 9,
            locations: 4,
            feature_dim: 5,
            max_len: 6,
            answers: 3,
        }
    }

    fn question(ids: &[i64], t: usize) -> EncodedQuestion {
        let mut all = ids.to_vec();
        all.resize(t, PAD_ID);
        EncodedQuestion {
            mask: (0..t).map(|j| j < ids.len()).collect(),
            ids: all,
            text: String::new(),
            truncated: false,
        }
    }

    #[test]
    fn init_is_seeded_bounded_and_pads_with_zero() {
        let cfg = SMemConfig::default();
        let a = SMemParams::init(&cfg, dims(), &mut Rng::new(5)).unwrap();
        let b = SMemParams::init(&cfg, dims(), &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.padding_row().iter().all(|&v| v == 0.0));
        let bound = (6.0 / (5 + 64) as f64).sqrt();
        assert!(a.attention.w.data().iter().all(|v| v.abs() < bound));
        assert!(a.attention.b.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_embed_zero_identity_and_hand_product() {
        let mut rng = Rng::new(1);
        let s = rand_tensor(&[3, 2], &mut rng);
        let z = attention_embed(&s, &Tensor::zeros(&[2, 4]), &Tensor::zeros(&[3, 4])).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));

        let w = rand_tensor(&[3, 4], &mut rng);
        let id = attention_embed(&Tensor::identity(3), &w, &Tensor::zeros(&[3, 4])).unwrap();
        assert_eq!(id.data(), w.data());

        let w = rand_tensor(&[2, 2], &mut rng);
        let b = rand_tensor(&[3, 2], &mut rng);
        let out = attention_embed(&s, &w, &b).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let hand = s.get2(i, 0) * w.get2(0, j) + s.get2(i, 1) * w.get2(1, j) + b.get2(i, j);
                assert!((out.get2(i, j) - hand).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn correlation_zero_rows_orthogonality_and_dots() {
        let v = Tensor::from_rows(&[&[1.0, 0.0, 2.0], &[0.0, 0.0, 0.0]]);
        let e = Tensor::from_rows(&[&[0.0, 3.0, 0.0], &[1.0, 1.0, 1.0]]);
        let c = correlation(&v, &e).unwrap();
        assert_eq!(c.shape(), &[2, 2]);
        assert_eq!(c.row(0), &[0.0, 3.0]);
        assert_eq!(c.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn attention_symmetry_dominance_and_masking() {
        let (w, _) = word_guided_attention(&Tensor::full(&[2, 5], 0.7), &[true, true]).unwrap();
        assert!(w.data().iter().all(|&x| (x - 0.2).abs() < 1e-15));

        let c = Tensor::from_rows(&[&[0.0, 10.0, 0.0], &[0.5, 0.0, 0.1]]);
        let (w, argword) = word_guided_attention(&c, &[true, true]).unwrap();
        assert!(w.data()[1] > 0.99);
        assert_eq!(argword, vec![1, 0, 1]);

        let padded = Tensor::from_rows(&[&[0.0, 10.0, 0.0], &[0.5, 0.0, 0.1], &[99.0, 99.0, 99.0]]);
        let (wp, _) = word_guided_attention(&padded, &[true, true, false]).unwrap();
        assert_eq!(wp.data(), w.data());

        assert!(matches!(word_guided_attention(&c, &[false, false]), Err(Error::EmptyQuestion)));
    }

    #[test]
    fn evidence_selection_mean_and_weighted_sum() {
        let mut rng = Rng::new(2);
        let s = rand_tensor(&[4, 3], &mut rng);
        let w = rand_tensor(&[3, 5], &mut rng);
        let b = rand_tensor(&[4, 5], &mut rng);
        let embedded = attention_embed(&s, &w, &b).unwrap();

        let one_hot = Tensor::row_vector(&[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(gather_evidence(&s, &one_hot, &w, &b).unwrap().data(), embedded.row(2));

        let uniform = gather_evidence(&s, &Tensor::full(&[1, 4], 0.25), &w, &b).unwrap();
        let mean: Vec<f64> = (0..5).map(|j| (0..4).map(|i| embedded.get2(i, j)).sum::<f64>() / 4.0).collect();
        assert!(close(uniform.data(), &mean, 1e-15));

        let weights = [0.1, 0.2, 0.3, 0.4];
        let got = gather_evidence(&s, &Tensor::row_vector(&weights), &w, &b).unwrap();
        let brute: Vec<f64> = (0..5)
            .map(|j| (0..4).map(|i| weights[i] * embedded.get2(i, j)).sum())
            .collect();
        assert!(close(got.data(), &brute, 1e-14));
    }

    #[test]
    fn bow_unit_weights_and_padding_independence() {
        let v = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let q = bow_question(&v, &Tensor::full(&[1, 2], 1.0), &Tensor::zeros(&[1, 2])).unwrap();
        assert_eq!(q.data(), &[4.0, 1.0]);

        let w_q = Tensor::row_vector(&[0.5, -2.0, 0.3, 0.9]);
        let b_q = Tensor::row_vector(&[0.1, 0.2]);
        let padded = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, -1.0], &[0.0, 0.0], &[0.0, 0.0]]);
        let a = bow_question(&v, &w_q, &b_q).unwrap();
        let b = bow_question(&padded, &w_q, &b_q).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(a.data(), &[0.5 * 1.0 - 2.0 * 3.0 + 0.1, 0.5 * 2.0 + 2.0 + 0.2]);
    }

    #[test]
    fn predict_zero_weights_and_two_class_oracle() {
        let p = predict(&Tensor::row_vector(&[1.0, -2.0]), &Tensor::zeros(&[3, 2]), &Tensor::zeros(&[1, 3]), None).unwrap();
        assert!(p.data().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));

        // relu(hidden) = [1, 0]; logits = [2, 1]
        let w_p = Tensor::from_rows(&[&[2.0, 5.0], &[1.0, 5.0]]);
        let p = predict(&Tensor::row_vector(&[1.0, -3.0]), &w_p, &Tensor::zeros(&[1, 2]), None).unwrap();
        assert!((p.data()[0] - 0.73106).abs() < 5e-6);
        assert!((p.data()[1] - 0.26894).abs() < 5e-6);
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut rng = Rng::new(3);
        let hidden = Tensor::row_vector(&[1.0; 200]);
        let w_p = Tensor::new(&[200, 200], (0..40000).map(|i| if i % 201 == 0 { 1.0 } else { 0.0 }).collect()).unwrap();
        let b_p = Tensor::zeros(&[1, 200]);
        let mut g = Graph::new();
        let h = g.constant_ref(&hidden);
        let logits = predict_on(&mut g, h, &w_p, &b_p, Some(Dropout { rate: 0.5, rng: &mut rng })).unwrap();
        let out = g.value(logits).data();
        assert!(out.iter().all(|&x| x == 0.0 || x == 2.0));
        let kept = out.iter().filter(|&&x| x == 2.0).count();
        assert!((60..140).contains(&kept));
    }

    fn forward_values(p: &SMemParams, q: &EncodedQuestion, s: &Tensor) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
        let mut g = Graph::new();
        let input = SampleInput::new(q, FeatureInput::Matrix(s));
        let f = p.forward(&mut g, &input, ForwardOptions::default()).unwrap();
        let att = f.attention.iter().map(|v| g.value(*v).data().to_vec()).collect();
        let ev = f.evidence.iter().map(|v| g.value(*v).data().to_vec()).collect();
        (att, g.value(f.hidden).data().to_vec(), g.value(f.question).data().to_vec(), ev)
    }

    #[test]
    fn zero_evidence_leaves_question_and_attention_normalized() {
        let mut p = SMemParams::init(&SMemConfig::default(), dims(), &mut Rng::new(4)).unwrap();
        p.evidence[0] = LocationAffine::zeros(4, 5, 64);
        let s = rand_tensor(&[4, 5], &mut Rng::new(5));
        let (att, hidden, q, _) = forward_values(&p, &question(&[1, 2, 3], 6), &s);
        assert_eq!(hidden, q);
        assert!((att[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(att[0].iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn second_hop_zero_cases() {
        let cfg = SMemConfig {
            hops: 2,
            embed_dim: 6,
            ..SMemConfig::default()
        };
        let mut p = SMemParams::init(&cfg, dims(), &mut Rng::new(6)).unwrap();
        let s = rand_tensor(&[4, 5], &mut Rng::new(7));
        let q = question(&[4, 0], 6);

        p.evidence[1] = LocationAffine::zeros(4, 5, 6);
        let (_, _, _, ev) = forward_values(&p, &q, &s);
        assert!(ev[1].iter().all(|&x| x == 0.0));

        // O_prev = 0: zero embeddings, question bias and evidence
        let mut z = p.clone();
        z.embed.data_mut().fill(0.0);
        z.evidence[0] = LocationAffine::zeros(4, 5, 6);
        let (att, _, _, _) = forward_values(&z, &q, &s);
        assert!(att[1].iter().all(|&w| (w - 0.25).abs() < 1e-15));
    }

    #[test]
    fn shared_evidence_weights_feed_both_hops() {
        let cfg = SMemConfig {
            hops: 2,
            embed_dim: 6,
            ..SMemConfig::default()
        };
        let p = SMemParams::init(&cfg, dims(), &mut Rng::new(8)).unwrap();
        let s = rand_tensor(&[4, 5], &mut Rng::new(9));
        let q = question(&[1, 5, 7], 6);
        let (att, _, _, ev) = forward_values(&p, &q, &s);

        let mut bumped = p.clone();
        bumped.evidence[0].w.data_mut()[3] += 0.05;
        let (att2, _, _, ev2) = forward_values(&bumped, &q, &s);
        assert_eq!(att[0], att2[0], "hop-1 attention uses W_A, not W_E");
        assert_ne!(ev[0], ev2[0], "hop-1 evidence must move");
        assert_ne!(att[1], att2[1], "hop-2 attention must move");
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }
}
