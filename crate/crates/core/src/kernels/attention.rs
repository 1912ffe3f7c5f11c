use rand::Rng;

use super::linear::Dense;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Projections of a multi-head self-attention layer over `C` channels with
/// `heads · head_dim = C`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub heads: usize,
    pub head_dim: usize,
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub output: Dense,
}

impl AttentionParams {
    pub fn new(heads: usize, query: Dense, key: Dense, value: Dense, output: Dense) -> Result<Self> {
        let c = query.inputs();
        if heads == 0 || !c.is_multiple_of(heads) {
            return Err(Error::invalid(format!("{heads} heads do not divide {c} channels")));
        }
        for (name, d) in [("query", &query), ("key", &key), ("value", &value), ("output", &output)] {
            if d.inputs() != c || d.outputs() != c {
                return Err(Error::invalid(format!("{name} projection must be {c}x{c}")));
            }
        }
        Ok(Self { heads, head_dim: c / heads, query, key, value, output })
    }

    pub fn seeded<R: Rng + ?Sized>(rng: &mut R, channels: usize, heads: usize) -> Result<Self> {
        let mut d = || Dense::seeded(rng, channels, channels);
        let (q, k, v, o) = (d(), d(), d(), d());
        Self::new(heads, q, k, v, o)
    }

    pub fn channels(&self) -> usize {
        self.query.inputs()
    }
}

/// Softmax normalisation observed while running attention.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AttentionStats {
    pub rows: u64,
    /// Largest `|Σ row − 1|` seen.
    pub max_row_deviation: f64,
}

impl AttentionStats {
    pub fn merge(self, other: Self) -> Self {
        Self { rows: self.rows + other.rows, max_row_deviation: self.max_row_deviation.max(other.max_row_deviation) }
    }
}

struct Projected {
    n: usize,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
}

fn project(x: &Tensor, p: &AttentionParams) -> Result<Projected> {
    let c = p.channels();
    if x.ndim() != 2 || x.shape()[1] != c || x.shape()[0] == 0 {
        return Err(Error::invalid(format!("attention expects [N >= 1, {c}], got {:?}", x.shape())));
    }
    let n = x.shape()[0];
    let (mut q, mut k, mut v) = (vec![0.0; n * c], vec![0.0; n * c], vec![0.0; n * c]);
    for (i, row) in x.data().chunks(c).enumerate() {
        let row: Vec<f64> = row.iter().map(|&r| r as f64).collect();
        p.query.apply_f64(&row, &mut q[i * c..(i + 1) * c]);
        p.key.apply_f64(&row, &mut k[i * c..(i + 1) * c]);
        p.value.apply_f64(&row, &mut v[i * c..(i + 1) * c]);
    }
    Ok(Projected { n, q, k, v })
}

/// Row-softmaxed `QKᵀ/√d` per head, laid out `[heads, N, N]`.
fn probabilities(pr: &Projected, p: &AttentionParams) -> Result<Vec<f64>> {
    let (n, c, d) = (pr.n, p.channels(), p.head_dim);
    let scale = 1.0 / (d as f64).sqrt();
    let mut probs = vec![0.0; p.heads * n * n];
    for h in 0..p.heads {
        for i in 0..n {
            let row = &mut probs[(h * n + i) * n..(h * n + i + 1) * n];
            let qi = &pr.q[i * c + h * d..i * c + (h + 1) * d];
            for (j, slot) in row.iter_mut().enumerate() {
                let kj = &pr.k[j * c + h * d..j * c + (h + 1) * d];
                *slot = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
            }
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            if !sum.is_finite() || sum <= 0.0 {
                return Err(Error::Numeric(format!("softmax normaliser {sum} in head {h}, row {i}")));
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
    }
    Ok(probs)
}

/// Attention probabilities `[heads, N, N]` for inspection.
pub fn attention_probabilities(x: &Tensor, p: &AttentionParams) -> Result<Vec<f64>> {
    let pr = project(x, p)?;
    probabilities(&pr, p)
}

/// Multi-head self-attention on `[N, C]` tokens: per head
/// `softmax(QKᵀ/√d)·V`, heads concatenated, then the output projection.
pub fn multi_head_self_attention(x: &Tensor, p: &AttentionParams) -> Result<Tensor> {
    attention_with_stats(x, p).map(|(t, _)| t)
}

pub(crate) fn attention_with_stats(x: &Tensor, p: &AttentionParams) -> Result<(Tensor, AttentionStats)> {
    let pr = project(x, p)?;
    let probs = probabilities(&pr, p)?;
    let (n, c, d) = (pr.n, p.channels(), p.head_dim);

    let mut stats = AttentionStats::default();
    for row in probs.chunks(n) {
        let dev = (row.iter().sum::<f64>() - 1.0).abs();
        stats.rows += 1;
        stats.max_row_deviation = stats.max_row_deviation.max(dev);
    }

    let mut mixed = vec![0.0f64; n * c];
    for h in 0..p.heads {
        for i in 0..n {
            let row = &probs[(h * n + i) * n..(h * n + i + 1) * n];
            let dst = &mut mixed[i * c + h * d..i * c + (h + 1) * d];
            for (j, &a) in row.iter().enumerate() {
                let vj = &pr.v[j * c + h * d..j * c + (h + 1) * d];
                for (o, vv) in dst.iter_mut().zip(vj) {
                    *o += a * vv;
                }
            }
        }
    }
    let mut out = Vec::with_capacity(n * c);
    let mut buf = vec![0.0; c];
    for row in mixed.chunks(c) {
        p.output.apply_f64(row, &mut buf);
        out.extend(buf.iter().map(|&v| v as f32));
    }
    let t = Tensor::from_vec(vec![n, c], out).map_err(|_| Error::Numeric("attention output is non-finite".into()))?;
    Ok((t, stats))
}
