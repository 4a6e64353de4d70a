//! The bag-of-words + pooled-image baseline: a softmax classifier over the
//! concatenation of the mean location feature and the question vector.

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::features::TinyConv;
use crate::param::ParamSet;
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::smem::Dims;
use super::{embed_question, glorot, SampleInput};

#[derive(Debug, Clone, PartialEq)]
pub struct IBowImgParams {
    /// `(|V|+1)×N`, zero padding row last.
    pub embed: Tensor,
    pub w_q: Tensor,
    pub b_q: Tensor,
    /// `K × (M+N)`.
    pub w_c: Tensor,
    pub b_c: Tensor,
    pub conv: Option<TinyConv>,
}

impl IBowImgParams {
    pub fn init(embed_dim: usize, dims: Dims, init_gain: f64, rng: &mut Rng) -> Self {
        let n = embed_dim;
        let Dims {
            vocab,
            feature_dim: m,
            max_len: t,
            answers: k,
            ..
        } = dims;
        let mut embed = glorot(&[vocab + 1, n], vocab, n, init_gain, rng);
        embed.data_mut()[vocab * n..].fill(0.0);
        let w_q = glorot(&[1, t], t, 1, init_gain, rng);
        let w_c = glorot(&[k, m + n], m + n, k, init_gain, rng);
        Self {
            embed,
            w_q,
            b_q: Tensor::zeros(&[1, n]),
            w_c,
            b_c: Tensor::zeros(&[1, k]),
            conv: None,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.embed.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.embed.rows() - 1
    }

    pub fn max_len(&self) -> usize {
        self.w_q.cols()
    }

    pub fn answers(&self) -> usize {
        self.w_c.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.w_c.cols() - self.embed_dim()
    }

    /// Returns the logits node.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, input: &SampleInput<'a>) -> Result<Var> {
        let s = input.feature_var(g, self.conv.as_ref())?;
        let pooled = g.mean_rows(s)?;
        let (v, t) = embed_question(g, &self.embed, input.question, self.max_len())?;
        let wq = g.param(&self.w_q);
        let wq = g.slice_cols(wq, 0, t)?;
        let bq = g.param(&self.b_q);
        let wv = g.matmul(wq, v)?;
        let q = g.add(wv, bq)?;
        let x = g.concat_cols(pooled, q)?;
        let w = g.param(&self.w_c);
        let wt = g.transpose(w)?;
        let b = g.param(&self.b_c);
        let lin = g.matmul(x, wt)?;
        g.add(lin, b)
    }
}

impl ParamSet for IBowImgParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("E", &self.embed);
        f("W_Q", &self.w_q);
        f("b_Q", &self.b_q);
        f("W_C", &self.w_c);
        f("b_C", &self.b_c);
        if let Some(c) = &self.conv {
            f("conv_kernel", &c.kernel);
            f("conv_bias", &c.bias);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("E", &mut self.embed);
        f("W_Q", &mut self.w_q);
        f("b_Q", &mut self.b_q);
        f("W_C", &mut self.w_c);
        f("b_C", &mut self.b_c);
        if let Some(c) = &mut self.conv {
            f("conv_kernel", &mut c.kernel);
            f("conv_bias", &mut c.bias);
        }
    }
}
