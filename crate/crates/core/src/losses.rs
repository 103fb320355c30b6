//! Metric-learning losses with analytic gradients.
//!
//! Every function returns the scalar loss together with the gradient with
//! respect to each of its vector arguments, in argument order. Distances are
//! Euclidean unless stated otherwise. At non-differentiable points (a hinge
//! exactly at its kink, a distance of exactly zero) the gradient of the
//! inactive branch, zero, is used.

use crate::error::{Error, Result};

/// Guard added to the negative distance in the reciprocal triplet loss.
pub const RTL_EPS: f64 = 1e-8;

/// Loss value and per-argument gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grads: Vec<Vec<f64>>,
}

/// Anchor, positive and negative embeddings of one triplet.
#[derive(Debug, Clone, Copy)]
pub struct TripletEmbeddings<'a> {
    pub anchor: &'a [f64],
    pub positive: &'a [f64],
    pub negative: &'a [f64],
}

impl<'a> TripletEmbeddings<'a> {
    pub fn new(anchor: &'a [f64], positive: &'a [f64], negative: &'a [f64]) -> Result<Self> {
        check_dims("triplet positive", anchor, positive)?;
        check_dims("triplet negative", anchor, negative)?;
        Ok(TripletEmbeddings {
            anchor,
            positive,
            negative,
        })
    }
}

/// Whether a pair shares a class. `Different` corresponds to `Y = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairLabel {
    Same,
    Different,
}

fn check_dims(context: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            context,
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance and its unit direction `(a - b) / d` (zero when `d = 0`).
fn distance_dir(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let d = norm(&diff);
    if d > 0.0 {
        (d, diff.into_iter().map(|v| v / d).collect())
    } else {
        (0.0, vec![0.0; a.len()])
    }
}

fn scaled(v: &[f64], s: f64) -> Vec<f64> {
    v.iter().map(|x| x * s).collect()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `((1−Y)/2)·d + (Y/2)·max(0, α − d)`.
pub fn contrastive(x1: &[f64], x2: &[f64], label: PairLabel, alpha: f64) -> Result<LossValue> {
    check_dims("contrastive", x1, x2)?;
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("contrastive margin must be positive, got {alpha}")));
    }
    let (d, u) = distance_dir(x1, x2);
    let (value, coeff) = match label {
        PairLabel::Same => (0.5 * d, 0.5),
        PairLabel::Different if alpha - d > 0.0 => (0.5 * (alpha - d), -0.5),
        PairLabel::Different => (0.0, 0.0),
    };
    let g1 = scaled(&u, coeff);
    let g2 = scaled(&u, -coeff);
    Ok(LossValue {
        value,
        grads: vec![g1, g2],
    })
}

/// `max(0, d(a,p) − d(a,n) + α)`.
pub fn triplet(t: TripletEmbeddings<'_>, alpha: f64) -> Result<LossValue> {
    let (d_ap, u_ap) = distance_dir(t.anchor, t.positive);
    let (d_an, u_an) = distance_dir(t.anchor, t.negative);
    let raw = d_ap - d_an + alpha;
    let dim = t.anchor.len();
    if raw <= 0.0 {
        return Ok(LossValue {
            value: 0.0,
            grads: vec![vec![0.0; dim]; 3],
        });
    }
    let ga = u_ap.iter().zip(&u_an).map(|(p, n)| p - n).collect();
    Ok(LossValue {
        value: raw,
        grads: vec![ga, scaled(&u_ap, -1.0), u_an],
    })
}

/// Reciprocal triplet loss `d(a,p) + 1/(d(a,n) + ε)`.
pub fn rtl(t: TripletEmbeddings<'_>) -> Result<LossValue> {
    let (d_ap, u_ap) = distance_dir(t.anchor, t.positive);
    let (d_an, u_an) = distance_dir(t.anchor, t.negative);
    let inv = 1.0 / (d_an + RTL_EPS);
    let value = d_ap + inv;
    let k = inv * inv;
    let ga = u_ap.iter().zip(&u_an).map(|(p, n)| p - k * n).collect();
    Ok(LossValue {
        value,
        grads: vec![ga, scaled(&u_ap, -1.0), scaled(&u_an, k)],
    })
}

/// Softmax cross-entropy `−log softmax(z)[class]`, computed with the maximum
/// logit subtracted.
pub fn cross_entropy(logits: &[f64], class: usize) -> Result<LossValue> {
    if class >= logits.len() {
        return Err(Error::invalid(format!(
            "class {class} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let value = sum.ln() - (logits[class] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[class] -= 1.0;
    Ok(LossValue {
        value,
        grads: vec![grad],
    })
}

/// Softmax cross-entropy plus `λ·RTL`. Gradients are ordered
/// `[logits, anchor, positive, negative]`.
pub fn softmax_rtl(
    logits: &[f64],
    class: usize,
    t: TripletEmbeddings<'_>,
    lambda: f64,
) -> Result<LossValue> {
    let ce = cross_entropy(logits, class)?;
    let r = rtl(t)?;
    let mut grads = ce.grads;
    grads.extend(r.grads.into_iter().map(|g| scaled(&g, lambda)));
    Ok(LossValue {
        value: ce.value + lambda * r.value,
        grads,
    })
}

/// Cosine similarity; fails when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims("cosine", a, b)?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine of a zero-norm vector is undefined"));
    }
    Ok(dot(a, b) / (na * nb))
}

/// Gradient of `cos(a, x)` with respect to `x`.
fn cosine_grad(a: &[f64], x: &[f64], cos: f64) -> Vec<f64> {
    let (na, nx) = (norm(a), norm(x));
    a.iter()
        .zip(x)
        .map(|(ai, xi)| ai / (na * nx) - cos * xi / (nx * nx))
        .collect()
}

/// Cross-modal alignment loss
/// `(1 − cos(anchor, pos)) + max(0, cos(anchor, neg) − m)`.
///
/// The anchor is a fixed target: its gradient entry is all zeros.
pub fn cosine_align(anchor: &[f64], pos: &[f64], neg: &[f64], margin: f64) -> Result<LossValue> {
    check_dims("cosine_align positive", anchor, pos)?;
    check_dims("cosine_align negative", anchor, neg)?;
    if norm(anchor) == 0.0 {
        return Err(Error::invalid("cosine_align: zero-norm anchor"));
    }
    if norm(pos) == 0.0 {
        return Err(Error::invalid("cosine_align: zero-norm positive embedding"));
    }
    if norm(neg) == 0.0 {
        return Err(Error::invalid("cosine_align: zero-norm negative embedding"));
    }
    let cos_p = cosine(anchor, pos)?;
    let cos_n = cosine(anchor, neg)?;
    let g_pos = scaled(&cosine_grad(anchor, pos, cos_p), -1.0);
    let hinge = cos_n - margin;
    let (neg_term, g_neg) = if hinge > 0.0 {
        (hinge, cosine_grad(anchor, neg, cos_n))
    } else {
        (0.0, vec![0.0; neg.len()])
    };
    Ok(LossValue {
        value: (1.0 - cos_p) + neg_term,
        grads: vec![vec![0.0; anchor.len()], g_pos, g_neg],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn contrastive_examples() {
        let x1 = [0.0, 0.0];
        let x2 = [0.3, 0.0];
        assert!(close(contrastive(&x1, &x2, PairLabel::Same, 1.0).unwrap().value, 0.15, 1e-15));
        assert!(close(contrastive(&x1, &x2, PairLabel::Different, 1.0).unwrap().value, 0.35, 1e-15));
        let far = [2.0, 0.0];
        let l = contrastive(&x1, &far, PairLabel::Different, 1.0).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grads.iter().flatten().all(|g| *g == 0.0));
        assert!(contrastive(&x1, &[1.0], PairLabel::Same, 1.0).is_err());
    }

    #[test]
    fn triplet_examples() {
        let a = [0.0, 0.0];
        let l = triplet(TripletEmbeddings::new(&a, &[0.5, 0.0], &[0.0, 1.0]).unwrap(), 0.2).unwrap();
        assert_eq!(l.value, 0.0);
        let l = triplet(TripletEmbeddings::new(&a, &[1.0, 0.0], &[0.0, 0.5]).unwrap(), 0.2).unwrap();
        assert!(close(l.value, 0.7, 1e-15));
        let p = [0.3, -0.4];
        let l = triplet(TripletEmbeddings::new(&a, &p, &p).unwrap(), 0.2).unwrap();
        assert_eq!(l.value, 0.2);
    }

    #[test]
    fn rtl_examples() {
        let a = [0.0, 0.0];
        let l = rtl(TripletEmbeddings::new(&a, &[1.0, 0.0], &[0.0, 2.0]).unwrap()).unwrap();
        assert!(close(l.value, 1.5, 1e-8));
        let l = rtl(TripletEmbeddings::new(&a, &a, &[1e12, 0.0]).unwrap()).unwrap();
        assert!(l.value < 1e-11);
        let l = rtl(TripletEmbeddings::new(&a, &[1.0, 0.0], &a).unwrap()).unwrap();
        assert!(l.value.is_finite());
        assert!(close(l.value, 1e8 + 1.0, 1e-6));
    }

    #[test]
    fn softmax_rtl_example() {
        let a = [0.0, 0.0];
        let t = TripletEmbeddings::new(&a, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        let l = softmax_rtl(&[0.0, 0.0, 0.0], 1, t, 0.01).unwrap();
        let expected = -(1.0f64 / 3.0).ln() + 0.01 * (1.0 + 1.0 / (1.0 + 1e-8));
        assert!(close(l.value, expected, 1e-12));
        assert!(close(l.value, 1.11861, 1e-5));
        assert_eq!(l.grads.len(), 4);
    }

    #[test]
    fn softmax_rtl_zero_lambda_is_cross_entropy() {
        let a = [0.1, 0.2];
        let t = TripletEmbeddings::new(&a, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        let z = [1.0, -2.0, 0.5];
        let l = softmax_rtl(&z, 2, t, 0.0).unwrap();
        assert_eq!(l.value, cross_entropy(&z, 2).unwrap().value);
        assert!(l.grads[1..].iter().flatten().all(|g| *g == 0.0));
    }

    #[test]
    fn softmax_shift_invariance_and_normalization() {
        let z = [3.0, -1.5, 0.25, 7.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 1234.5).collect();
        for class in 0..z.len() {
            let a = cross_entropy(&z, class).unwrap().value;
            let b = cross_entropy(&shifted, class).unwrap().value;
            assert!(close(a, b, 1e-12), "{a} vs {b}");
        }
        let probs: f64 = (0..z.len()).map(|c| (-cross_entropy(&z, c).unwrap().value).exp()).sum();
        assert!(close(probs, 1.0, 1e-12));
        assert!(cross_entropy(&z, 4).is_err());
    }

    #[test]
    fn cosine_align_examples() {
        let l = cosine_align(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(l.value, 0.0);
        let l = cosine_align(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], 0.5).unwrap();
        assert!(close(l.value, 1.5, 1e-15));
        let l = cosine_align(&[1.0, 0.0], &[2.0, 0.0], &[0.8, 0.6], 0.5).unwrap();
        assert!(close(l.value, 0.3, 1e-15));
        assert!(l.grads[0].iter().all(|g| *g == 0.0));
    }

    #[test]
    fn cosine_align_zero_norm_errors() {
        assert!(cosine_align(&[1.0, 0.0], &[0.0, 0.0], &[1.0, 0.0], 0.5).is_err());
        assert!(cosine_align(&[1.0, 0.0], &[1.0, 0.0], &[0.0, 0.0], 0.5).is_err());
        assert!(cosine_align(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 0.0], 0.5).is_err());
    }
}
