use crate::error::{Error, Result};

use super::{AttentionParams, ClassifierHead, EmbeddingBag};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-12;

/// Global max-pooling over a scalar feature map. Returns the maximum and the
/// first position (row-major) attaining it.
pub fn max_pool_score(bag: &EmbeddingBag) -> Result<(f64, usize)> {
    if bag.dim() != 1 {
        return Err(Error::Shape(format!(
            "max-pooling needs a scalar feature map (M = 1), got M = {}",
            bag.dim()
        )));
    }
    let values = bag.embeddings().as_slice();
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    Ok((values[best], best))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max-score subtraction.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn check_dims(bag: &EmbeddingBag, p: &AttentionParams) -> Result<()> {
    if bag.dim() != p.dim() {
        return Err(Error::Shape(format!(
            "bag embedding dimension {} differs from attention dimension {}",
            bag.dim(),
            p.dim()
        )));
    }
    Ok(())
}

/// Intermediate values of the gated attention forward pass for one bag.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `tanh(V h_k)`, K x L row-major.
    pub tanh: Vec<f64>,
    /// `sigm(U h_k)`, K x L row-major.
    pub gate: Vec<f64>,
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub pooled: Vec<f64>,
}

impl Forward {
    pub fn run(bag: &EmbeddingBag, p: &AttentionParams) -> Result<Self> {
        check_dims(bag, p)?;
        let (k_len, l_len, m_len) = (bag.len(), p.hidden(), p.dim());
        let mut tanh = vec![0.0; k_len * l_len];
        let mut gate = vec![0.0; k_len * l_len];
        let mut scores = vec![0.0; k_len];
        for k in 0..k_len {
            let h = bag.embedding(k);
            let mut s = 0.0;
            for l in 0..l_len {
                let vrow = &p.v[l * m_len..(l + 1) * m_len];
                let urow = &p.u[l * m_len..(l + 1) * m_len];
                let a: f64 = vrow.iter().zip(h).map(|(x, y)| x * y).sum();
                let b: f64 = urow.iter().zip(h).map(|(x, y)| x * y).sum();
                let t = a.tanh();
                let g = sigmoid(b);
                tanh[k * l_len + l] = t;
                gate[k * l_len + l] = g;
                s += p.w[l] * t * g;
            }
            scores[k] = s;
        }
        let weights = softmax(&scores);
        let pooled = pool_unchecked(bag, &weights);
        Ok(Self {
            tanh,
            gate,
            scores,
            weights,
            pooled,
        })
    }
}

/// Pre-softmax scores `s_k = w^T (tanh(V h_k) * sigm(U h_k))`.
pub fn attention_scores(bag: &EmbeddingBag, p: &AttentionParams) -> Result<Vec<f64>> {
    Ok(Forward::run(bag, p)?.scores)
}

/// Gated attention weights: softmax over positions of the gated scores.
pub fn gated_attention_weights(bag: &EmbeddingBag, p: &AttentionParams) -> Result<Vec<f64>> {
    Ok(Forward::run(bag, p)?.weights)
}

fn pool_unchecked(bag: &EmbeddingBag, a: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; bag.dim()];
    for (k, &ak) in a.iter().enumerate() {
        for (zm, hm) in z.iter_mut().zip(bag.embedding(k)) {
            *zm += ak * hm;
        }
    }
    z
}

/// Attention-weighted average of the bag embeddings.
pub fn attention_pool(bag: &EmbeddingBag, a: &[f64]) -> Result<Vec<f64>> {
    if a.len() != bag.len() {
        return Err(Error::Shape(format!(
            "{} attention weights for a bag of {} positions",
            a.len(),
            bag.len()
        )));
    }
    let total: f64 = a.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!("attention weights sum to {total}, expected 1")));
    }
    Ok(pool_unchecked(bag, a))
}

pub fn classify(z: &[f64], head: &ClassifierHead) -> Result<f64> {
    if z.len() != head.theta.len() {
        return Err(Error::Shape(format!(
            "pooled vector has {} entries, classifier expects {}",
            z.len(),
            head.theta.len()
        )));
    }
    let logit: f64 = z.iter().zip(&head.theta).map(|(a, b)| a * b).sum::<f64>() + head.bias;
    Ok(sigmoid(logit))
}

/// `-(pos_weight * y * ln p + (1 - y) * ln(1 - p))` with `p` clamped.
pub fn weighted_cross_entropy(p: f64, positive: bool, pos_weight: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if positive {
        -pos_weight * p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bag(k: usize, m: usize, data: Vec<f64>) -> EmbeddingBag {
        EmbeddingBag::flat(Matrix::new(k, m, data).unwrap())
    }

    #[test]
    fn max_pool_examples() {
        assert_eq!(max_pool_score(&bag(3, 1, vec![0.1, 0.9, 0.3])).unwrap(), (0.9, 1));
        assert_eq!(max_pool_score(&bag(4, 1, vec![0.7; 4])).unwrap(), (0.7, 0));
        assert!(matches!(max_pool_score(&bag(2, 2, vec![0.0; 4])), Err(Error::Shape(_))));
    }

    #[test]
    fn max_pool_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let k = rng.random_range(1..50);
            let data: Vec<f64> = (0..k).map(|_| rng.random_range(-5.0..5.0)).collect();
            let mut best = f64::NEG_INFINITY;
            for &v in &data {
                if v > best {
                    best = v;
                }
            }
            let (z, arg) = max_pool_score(&bag(k, 1, data.clone())).unwrap();
            assert_eq!(z, best);
            assert_eq!(data[arg], best);
            assert!(data[..arg].iter().all(|&v| v < best));
        }
    }

    #[test]
    fn single_position_gets_full_weight() {
        let p = AttentionParams::random(3, 2, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(gated_attention_weights(&bag(1, 2, vec![0.3, -0.2]), &p).unwrap(), vec![1.0]);
    }

    #[test]
    fn identical_embeddings_get_uniform_weight() {
        let p = AttentionParams::random(4, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let a = gated_attention_weights(&bag(5, 3, [0.5, -1.0, 2.0].repeat(5)), &p).unwrap();
        for ak in a {
            assert!((ak - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn weights_match_scalar_loop() {
        // K=3, M=2, L=2 with explicit values; oracle written out term by term.
        let h = [[0.5, -1.0], [1.5, 0.25], [-0.75, 2.0]];
        let w = [0.8, -1.2];
        let v = [[0.3, -0.4], [1.1, 0.2]];
        let u = [[-0.5, 0.9], [0.6, 0.7]];
        let p = AttentionParams::new(2, 2, w.to_vec(), v.concat(), u.concat()).unwrap();
        let b = bag(3, 2, h.concat());

        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut e = [0.0; 3];
        for k in 0..3 {
            let mut s = 0.0;
            for l in 0..2 {
                let vh = v[l][0] * h[k][0] + v[l][1] * h[k][1];
                let uh = u[l][0] * h[k][0] + u[l][1] * h[k][1];
                s += w[l] * vh.tanh() * sig(uh);
            }
            e[k] = s.exp();
        }
        let total: f64 = e.iter().sum();
        let a = gated_attention_weights(&b, &p).unwrap();
        for k in 0..3 {
            assert!((a[k] - e[k] / total).abs() < 1e-15, "k={k}");
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let p = AttentionParams::zeros(2, 3).unwrap();
        assert!(gated_attention_weights(&bag(2, 2, vec![0.0; 4]), &p).is_err());
        assert!(attention_pool(&bag(2, 2, vec![0.0; 4]), &[1.0]).is_err());
        assert!(classify(&[1.0, 2.0], &ClassifierHead::zeros(3).unwrap()).is_err());
    }

    #[test]
    fn pool_examples() {
        let b = bag(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]);
        assert_eq!(attention_pool(&b, &[0.0, 1.0, 0.0]).unwrap(), vec![3.0, 4.0]);
        let z = attention_pool(&b, &[1.0 / 3.0; 3]).unwrap();
        assert!((z[0] - 3.0).abs() < 1e-12 && (z[1] - 5.0).abs() < 1e-12);
        assert!(attention_pool(&b, &[0.5, 0.4, 0.0]).is_err());
    }

    #[test]
    fn pool_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let (k, m) = (rng.random_range(1..10), rng.random_range(1..6));
            let h: Vec<f64> = (0..k * m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let a: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let z = attention_pool(&bag(k, m, h.clone()), &a).unwrap();
            for j in 0..m {
                let mut acc = 0.0;
                for i in 0..k {
                    acc += a[i] * h[i * m + j];
                }
                assert!((z[j] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&[1.0, -2.0], &ClassifierHead::zeros(2).unwrap()).unwrap(), 0.5);
        let head = ClassifierHead::new(vec![0.0], 50.0).unwrap();
        assert!(classify(&[3.0], &head).unwrap() >= 1.0 - 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let th: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b = rng.random_range(-1.0..1.0);
            let logit = z[0] * th[0] + z[1] * th[1] + z[2] * th[2] + z[3] * th[3] + b;
            let expect = 1.0 / (1.0 + (-logit).exp());
            let got = classify(&z, &ClassifierHead::new(th, b).unwrap()).unwrap();
            assert!((got - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn loss_examples() {
        assert!((weighted_cross_entropy(0.5, true, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(weighted_cross_entropy(1.0 - 1e-12, true, 1.0) < 1e-11);
        assert!(weighted_cross_entropy(0.0, true, 1.0).is_finite());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let p = rng.random_range(0.001..0.999);
            let y = rng.random_bool(0.5);
            let pw = rng.random_range(0.1..10.0);
            let yf = if y { 1.0 } else { 0.0 };
            let expect = -(pw * yf * f64::ln(p) + (1.0 - yf) * f64::ln(1.0 - p));
            assert!((weighted_cross_entropy(p, y, pw) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_scores() {
        let a = softmax(&[1000.0, 1000.0, 999.0]);
        assert!(a.iter().all(|x| x.is_finite()));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
