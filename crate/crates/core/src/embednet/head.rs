use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer widths of a projection head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadDims {
    /// Backbone feature width D.
    pub input: usize,
    /// Hidden width H.
    pub hidden: usize,
    /// Embedding width E.
    pub embedding: usize,
    /// Number of classes C.
    pub classes: usize,
}

impl HeadDims {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.hidden == 0 || self.embedding == 0 || self.classes == 0 {
            return Err(Error::invalid(format!("all head dimensions must be >= 1, got {self:?}")));
        }
        Ok(())
    }
}

/// Trainable state: two projection layers and a linear classifier.
///
/// Weight matrices are stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub wc: Array2<f64>,
    pub bc: Array1<f64>,
}

/// Gradients, shaped like [`HeadParams`].
pub type GradientSet = HeadParams;

/// Intermediate values of a batch forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub input: Array2<f64>,
    pub pre1: Array2<f64>,
    pub act1: Array2<f64>,
    pub embedding: Array2<f64>,
    pub logits: Array2<f64>,
}

/// Which parameter groups an optimizer step may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerMask {
    pub projection: bool,
    pub classifier: bool,
}

impl LayerMask {
    pub const ALL: LayerMask = LayerMask {
        projection: true,
        classifier: true,
    };
    pub const PROJECTION: LayerMask = LayerMask {
        projection: true,
        classifier: false,
    };
}

/// Which weight matrices max-norm projection constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxNormScope {
    #[default]
    Classifier,
    All,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

impl HeadParams {
    pub fn zeros(dims: HeadDims) -> Self {
        HeadParams {
            w1: Array2::zeros((dims.hidden, dims.input)),
            b1: Array1::zeros(dims.hidden),
            w2: Array2::zeros((dims.embedding, dims.hidden)),
            b2: Array1::zeros(dims.embedding),
            wc: Array2::zeros((dims.classes, dims.embedding)),
            bc: Array1::zeros(dims.classes),
        }
    }

    pub fn dims(&self) -> HeadDims {
        HeadDims {
            input: self.w1.ncols(),
            hidden: self.w1.nrows(),
            embedding: self.w2.nrows(),
            classes: self.wc.nrows(),
        }
    }

    /// Checks that all shapes agree and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        let d = self.dims();
        d.validate()?;
        let checks: [(&'static str, usize, usize); 5] = [
            ("b1", d.hidden, self.b1.len()),
            ("w2 columns", d.hidden, self.w2.ncols()),
            ("b2", d.embedding, self.b2.len()),
            ("wc columns", d.embedding, self.wc.ncols()),
            ("bc", d.classes, self.bc.len()),
        ];
        for (context, expected, actual) in checks {
            if expected != actual {
                return Err(Error::DimMismatch { context, expected, actual });
            }
        }
        if !self.all_finite() {
            return Err(Error::NonFinite("head parameters".into()));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.w1.iter().all(|v| v.is_finite())
            && self.b1.iter().all(|v| v.is_finite())
            && self.w2.iter().all(|v| v.is_finite())
            && self.b2.iter().all(|v| v.is_finite())
            && self.wc.iter().all(|v| v.is_finite())
            && self.bc.iter().all(|v| v.is_finite())
    }

    /// Visits every parameter array mutably in a fixed order
    /// (`w1, b1, w2, b2, wc, bc`), flattened.
    pub fn for_each_slice_mut(&mut self, mut f: impl FnMut(&'static str, &mut [f64])) {
        f("w1", self.w1.as_slice_mut().expect("standard layout"));
        f("b1", self.b1.as_slice_mut().expect("standard layout"));
        f("w2", self.w2.as_slice_mut().expect("standard layout"));
        f("b2", self.b2.as_slice_mut().expect("standard layout"));
        f("wc", self.wc.as_slice_mut().expect("standard layout"));
        f("bc", self.bc.as_slice_mut().expect("standard layout"));
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.wc.len() + self.bc.len()
    }
}

/// Glorot-uniform weights, zero biases, drawn from a ChaCha8 stream seeded
/// with `seed` in the order `w1, w2, wc`.
pub fn init_head(dims: HeadDims, seed: u64) -> Result<HeadParams> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1 = glorot(dims.hidden, dims.input, &mut rng);
    let w2 = glorot(dims.embedding, dims.hidden, &mut rng);
    let wc = glorot(dims.classes, dims.embedding, &mut rng);
    Ok(HeadParams {
        w1,
        b1: Array1::zeros(dims.hidden),
        w2,
        b2: Array1::zeros(dims.embedding),
        wc,
        bc: Array1::zeros(dims.classes),
    })
}

/// Batch forward pass; rows of `features` are items.
///
/// `a1 = relu(W1·x + b1)`, `e = W2·a1 + b2`, `z = Wc·e + bc`.
pub fn forward(params: &HeadParams, features: ArrayView2<'_, f64>) -> Result<ForwardCache> {
    let dims = params.dims();
    if features.ncols() != dims.input {
        return Err(Error::DimMismatch {
            context: "forward input",
            expected: dims.input,
            actual: features.ncols(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forward input".into()));
    }
    let pre1 = features.dot(&params.w1.t()) + &params.b1;
    let act1 = pre1.mapv(|v| v.max(0.0));
    let embedding = act1.dot(&params.w2.t()) + &params.b2;
    let logits = embedding.dot(&params.wc.t()) + &params.bc;
    Ok(ForwardCache {
        input: features.to_owned(),
        pre1,
        act1,
        embedding,
        logits,
    })
}

/// Embeddings only, for inference.
pub fn embed(params: &HeadParams, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    Ok(forward(params, features)?.embedding)
}

/// Exact gradients of `Σ_b ⟨d_embedding_b, e_b⟩ + ⟨d_logits_b, z_b⟩`.
///
/// Upstream gradients are summed over the batch, not averaged; callers fold
/// any `1/B` into them. The relu subgradient at 0 is 0.
pub fn backward(
    params: &HeadParams,
    cache: &ForwardCache,
    d_embedding: ArrayView2<'_, f64>,
    d_logits: ArrayView2<'_, f64>,
) -> Result<GradientSet> {
    let batch = cache.input.nrows();
    let dims = params.dims();
    for (context, shape, expected) in [
        ("backward d_embedding", d_embedding.dim(), (batch, dims.embedding)),
        ("backward d_logits", d_logits.dim(), (batch, dims.classes)),
    ] {
        if shape != expected {
            return Err(Error::DimMismatch {
                context,
                expected: expected.0 * expected.1,
                actual: shape.0 * shape.1,
            });
        }
    }

    let wc = d_logits.t().dot(&cache.embedding);
    let bc = d_logits.sum_axis(Axis(0));
    let d_emb = &d_embedding + &d_logits.dot(&params.wc);
    let w2 = d_emb.t().dot(&cache.act1);
    let b2 = d_emb.sum_axis(Axis(0));
    let mut d_pre1 = d_emb.dot(&params.w2);
    Zip::from(&mut d_pre1).and(&cache.pre1).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let w1 = d_pre1.t().dot(&cache.input);
    let b1 = d_pre1.sum_axis(Axis(0));
    Ok(GradientSet { w1, b1, w2, b2, wc, bc })
}

fn sgd_weights(p: &mut Array2<f64>, g: &Array2<f64>, lr: f64, wd: f64) {
    Zip::from(p).and(g).for_each(|p, &g| *p -= lr * (g + wd * *p));
}

fn sgd_bias(p: &mut Array1<f64>, g: &Array1<f64>, lr: f64) {
    Zip::from(p).and(g).for_each(|p, &g| *p -= lr * g);
}

/// `p ← p − lr·(g + wd·p)` on weight matrices, `p ← p − lr·g` on biases.
pub fn sgd_step(params: &mut HeadParams, grads: &GradientSet, lr: f64, weight_decay: f64) -> Result<()> {
    sgd_step_masked(params, grads, lr, weight_decay, LayerMask::ALL)
}

/// [`sgd_step`] restricted to the groups enabled in `mask`.
pub fn sgd_step_masked(
    params: &mut HeadParams,
    grads: &GradientSet,
    lr: f64,
    weight_decay: f64,
    mask: LayerMask,
) -> Result<()> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    if !(weight_decay >= 0.0) || !weight_decay.is_finite() {
        return Err(Error::invalid(format!("weight decay must be finite and >= 0, got {weight_decay}")));
    }
    if grads.dims() != params.dims() {
        return Err(Error::invalid("gradient shapes do not match parameters"));
    }
    let mut next = params.clone();
    if mask.projection {
        sgd_weights(&mut next.w1, &grads.w1, lr, weight_decay);
        sgd_bias(&mut next.b1, &grads.b1, lr);
        sgd_weights(&mut next.w2, &grads.w2, lr, weight_decay);
        sgd_bias(&mut next.b2, &grads.b2, lr);
    }
    if mask.classifier {
        sgd_weights(&mut next.wc, &grads.wc, lr, weight_decay);
        sgd_bias(&mut next.bc, &grads.bc, lr);
    }
    if !next.all_finite() {
        return Err(Error::NonFinite("parameters after SGD step".into()));
    }
    *params = next;
    Ok(())
}

// Rows within one part in 1e12 of the bound count as inside it, so that a
// second projection is a no-op despite rounding in the first.
const MAXNORM_SLACK: f64 = 1e-12;

fn project_rows(m: &mut Array2<f64>, delta: f64) {
    for mut row in m.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > delta * (1.0 + MAXNORM_SLACK) {
            row *= delta / n;
        }
    }
}

/// Rescale every classifier row whose L2 norm exceeds `delta` onto the ball.
pub fn maxnorm_project(params: &mut HeadParams, delta: f64) -> Result<()> {
    maxnorm_project_scoped(params, delta, MaxNormScope::Classifier)
}

pub fn maxnorm_project_scoped(params: &mut HeadParams, delta: f64, scope: MaxNormScope) -> Result<()> {
    if !(delta > 0.0) {
        return Err(Error::invalid(format!("max-norm threshold must be positive, got {delta}")));
    }
    project_rows(&mut params.wc, delta);
    if scope == MaxNormScope::All {
        project_rows(&mut params.w1, delta);
        project_rows(&mut params.w2, delta);
    }
    Ok(())
}

pub fn max_row_norm(m: &Array2<f64>) -> f64 {
    m.rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max)
}
