use crate::error::{Error, Result};

use super::forward::{classify, weighted_cross_entropy, Forward, PROB_CLAMP};
use super::{AttentionParams, ClassifierHead, EmbeddingBag};

/// Loss gradients with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Vec<f64>,
    /// L x M row-major.
    pub v: Vec<f64>,
    /// L x M row-major.
    pub u: Vec<f64>,
    pub theta: Vec<f64>,
    pub bias: f64,
}

impl Gradients {
    pub fn zeros(p: &AttentionParams) -> Self {
        Self {
            w: vec![0.0; p.hidden()],
            v: vec![0.0; p.hidden() * p.dim()],
            u: vec![0.0; p.hidden() * p.dim()],
            theta: vec![0.0; p.dim()],
            bias: 0.0,
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        let pairs = [
            (&mut self.w, &other.w),
            (&mut self.v, &other.v),
            (&mut self.u, &other.u),
            (&mut self.theta, &other.theta),
        ];
        for (dst, src) in pairs {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
        self.bias += scale * other.bias;
    }

    /// All entries in the order w, V, U, theta, bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w.len() + self.v.len() * 2 + self.theta.len() + 1);
        out.extend_from_slice(&self.w);
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.theta);
        out.push(self.bias);
        out
    }
}

pub fn loss_for(
    bag: &EmbeddingBag,
    p: &AttentionParams,
    head: &ClassifierHead,
    positive: bool,
    pos_weight: f64,
) -> Result<f64> {
    let fwd = Forward::run(bag, p)?;
    let prob = classify(&fwd.pooled, head)?;
    Ok(weighted_cross_entropy(prob, positive, pos_weight))
}

/// Loss and its gradient with respect to every parameter of the gated
/// attention head and classifier.
pub fn backward(
    bag: &EmbeddingBag,
    p: &AttentionParams,
    head: &ClassifierHead,
    positive: bool,
    pos_weight: f64,
) -> Result<(f64, Gradients)> {
    if head.theta.len() != p.dim() {
        return Err(Error::Shape(format!(
            "classifier has {} weights, attention dimension is {}",
            head.theta.len(),
            p.dim()
        )));
    }
    let fwd = Forward::run(bag, p)?;
    let prob = classify(&fwd.pooled, head)?;
    let loss = weighted_cross_entropy(prob, positive, pos_weight);

    // d loss / d logit; zero where the probability clamp is active.
    let dlogit = if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&prob) {
        0.0
    } else if positive {
        -pos_weight * (1.0 - prob)
    } else {
        prob
    };

    let (k_len, l_len, m_len) = (bag.len(), p.hidden(), p.dim());
    let mut g = Gradients::zeros(p);
    g.bias = dlogit;
    for (gt, z) in g.theta.iter_mut().zip(&fwd.pooled) {
        *gt = dlogit * z;
    }
    let dz: Vec<f64> = head.theta.iter().map(|t| dlogit * t).collect();

    // d loss / d a_k, then through the softmax.
    let da: Vec<f64> = (0..k_len)
        .map(|k| bag.embedding(k).iter().zip(&dz).map(|(h, d)| h * d).sum())
        .collect();
    let mean_da: f64 = fwd.weights.iter().zip(&da).map(|(a, d)| a * d).sum();

    for k in 0..k_len {
        let ds = fwd.weights[k] * (da[k] - mean_da);
        if ds == 0.0 {
            continue;
        }
        let h = bag.embedding(k);
        for l in 0..l_len {
            let t = fwd.tanh[k * l_len + l];
            let gate = fwd.gate[k * l_len + l];
            g.w[l] += ds * t * gate;
            let dv = ds * p.w[l] * gate * (1.0 - t * t);
            let du = ds * p.w[l] * t * gate * (1.0 - gate);
            let row = l * m_len..(l + 1) * m_len;
            for ((gv, gu), hm) in g.v[row.clone()].iter_mut().zip(&mut g.u[row]).zip(h) {
                *gv += dv * hm;
                *gu += du * hm;
            }
        }
    }
    Ok((loss, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central-difference gradient over the flattened parameter vector.
    fn numeric_grad(
        bag: &EmbeddingBag,
        p: &AttentionParams,
        head: &ClassifierHead,
        y: bool,
        pw: f64,
        step: f64,
    ) -> Vec<f64> {
        let mut flat: Vec<f64> = [p.w(), p.v(), p.u(), head.theta()].concat();
        flat.push(head.bias());
        let (l, m) = (p.hidden(), p.dim());
        let eval = |f: &[f64]| {
            let p = AttentionParams::new(
                l,
                m,
                f[..l].to_vec(),
                f[l..l + l * m].to_vec(),
                f[l + l * m..l + 2 * l * m].to_vec(),
            )
            .unwrap();
            let head = ClassifierHead::new(f[l + 2 * l * m..l + 2 * l * m + m].to_vec(), f[f.len() - 1]).unwrap();
            loss_for(bag, &p, &head, y, pw).unwrap()
        };
        (0..flat.len())
            .map(|i| {
                let orig = flat[i];
                flat[i] = orig + step;
                let up = eval(&flat);
                flat[i] = orig - step;
                let down = eval(&flat);
                flat[i] = orig;
                (up - down) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn zero_params_symmetric_bag() {
        let bag = EmbeddingBag::flat(Matrix::new(4, 2, [0.5, -0.5].repeat(4)).unwrap());
        let p = AttentionParams::zeros(3, 2).unwrap();
        let head = ClassifierHead::zeros(2).unwrap();
        let (_, g) = backward(&bag, &p, &head, true, 2.0).unwrap();
        let num = numeric_grad(&bag, &p, &head, true, 2.0, 1e-6);
        let ana = g.flatten();
        assert!(ana.iter().all(|x| x.is_finite()));
        for (a, n) in ana.iter().zip(&num) {
            assert!((a - n).abs() < 1e-8, "{a} vs {n}");
        }
    }

    #[test]
    fn bias_derivative_vanishes_at_its_optimum() {
        // With theta = 0 the loss in the bias alone is minimized where
        // pw * y * (1 - p) = (1 - y) * p summed over the data; for a single
        // negative bag the minimum is at bias -> -inf, so use a balanced pair.
        let pos = EmbeddingBag::flat(Matrix::new(2, 1, vec![1.0, 2.0]).unwrap());
        let neg = EmbeddingBag::flat(Matrix::new(2, 1, vec![-1.0, 0.5]).unwrap());
        let p = AttentionParams::zeros(1, 1).unwrap();
        // Optimal bias for pw = 3: sigmoid(b) = 3/4.
        let b = (3.0f64).ln();
        let head = ClassifierHead::new(vec![0.0], b).unwrap();
        let (_, g1) = backward(&pos, &p, &head, true, 3.0).unwrap();
        let (_, g2) = backward(&neg, &p, &head, false, 3.0).unwrap();
        assert!((g1.bias + g2.bias).abs() < 1e-12);
        let total = |bb: f64| {
            let h = ClassifierHead::new(vec![0.0], bb).unwrap();
            loss_for(&pos, &p, &h, true, 3.0).unwrap() + loss_for(&neg, &p, &h, false, 3.0).unwrap()
        };
        let fd = (total(b + 1e-6) - total(b - 1e-6)) / 2e-6;
        assert!(fd.abs() < 1e-8);
    }

    #[test]
    fn random_instances_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let (k, m, l) = (rng.random_range(1..=8), rng.random_range(1..=4), rng.random_range(1..=4));
            let bag = EmbeddingBag::flat(
                Matrix::from_fn(k, m, |_, _| rng.random_range(-1.5..1.5)).unwrap(),
            );
            let p = AttentionParams::random(l, m, 0.8, &mut rng).unwrap();
            let theta = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let head = ClassifierHead::new(theta, rng.random_range(-0.5..0.5)).unwrap();
            let y = rng.random_bool(0.5);
            let (_, g) = backward(&bag, &p, &head, y, 1.7).unwrap();
            let num = numeric_grad(&bag, &p, &head, y, 1.7, 1e-6);
            for (a, n) in g.flatten().iter().zip(&num) {
                assert!((a - n).abs() <= 1e-7 * a.abs().max(1.0), "{a} vs {n}");
            }
        }
    }
}
