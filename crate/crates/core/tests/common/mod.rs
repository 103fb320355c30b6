//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xmodal::embednet::{backward, forward, init_head, HeadDims, HeadParams};
use xmodal::losses::{
    contrastive, cosine_align, rtl, softmax_rtl, triplet, LossValue, PairLabel, TripletEmbeddings,
};
use xmodal::sgt::{BigramSymbol, ALPHABET};

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (l2(a) * l2(b))
}

/// `‖a − n‖ / max(‖a‖, ‖n‖, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    l2(&diff) / l2(analytic).max(l2(numeric)).max(1e-8)
}

/// Central differences of `f` at `x`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()
}

/// The five losses, each as a function of the concatenation of its
/// differentiated inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Contrastive,
    Triplet,
    Rtl,
    SoftmaxRtl,
    CosineAlign,
}

pub const ALL_LOSSES: [LossKind; 5] = [
    LossKind::Contrastive,
    LossKind::Triplet,
    LossKind::Rtl,
    LossKind::SoftmaxRtl,
    LossKind::CosineAlign,
];

/// A random loss instance kept away from the loss's non-differentiable set.
#[derive(Debug, Clone)]
pub struct LossInstance {
    pub kind: LossKind,
    pub dim: usize,
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub n: Vec<f64>,
    pub logits: Vec<f64>,
    pub class: usize,
    pub label: PairLabel,
    pub scalar: f64,
}

impl LossInstance {
    pub fn eval(&self, a: &[f64], p: &[f64], n: &[f64], logits: &[f64]) -> LossValue {
        match self.kind {
            LossKind::Contrastive => contrastive(a, p, self.label, self.scalar).unwrap(),
            LossKind::Triplet => triplet(TripletEmbeddings::new(a, p, n).unwrap(), self.scalar).unwrap(),
            LossKind::Rtl => rtl(TripletEmbeddings::new(a, p, n).unwrap()).unwrap(),
            LossKind::SoftmaxRtl => softmax_rtl(
                logits,
                self.class,
                TripletEmbeddings::new(a, p, n).unwrap(),
                self.scalar,
            )
            .unwrap(),
            LossKind::CosineAlign => cosine_align(a, p, n, self.scalar).unwrap(),
        }
    }

    /// Distance from the nearest kink of the loss; instances closer than
    /// 1e-3 are rejected by the generator.
    pub fn kink_distance(&self, a: &[f64], p: &[f64], n: &[f64]) -> f64 {
        match self.kind {
            LossKind::Contrastive => {
                let d = dist(a, p);
                d.min((d - self.scalar).abs())
            }
            LossKind::Triplet => {
                let (dp, dn) = (dist(a, p), dist(a, n));
                dp.min(dn).min((dp - dn + self.scalar).abs())
            }
            LossKind::Rtl | LossKind::SoftmaxRtl => dist(a, p).min(dist(a, n) - 0.2),
            LossKind::CosineAlign => {
                l2(p).min(l2(n)).min((cos(a, n) - self.scalar).abs())
            }
        }
    }
}

pub fn random_instance(kind: LossKind, rng: &mut ChaCha8Rng) -> LossInstance {
    loop {
        let dim = rng.random_range(2..=8);
        let classes = rng.random_range(2..=6);
        let inst = LossInstance {
            kind,
            dim,
            a: normal_vec(rng, dim),
            p: normal_vec(rng, dim),
            n: normal_vec(rng, dim),
            logits: (0..classes).map(|_| rng.random_range(-4.0..4.0)).collect(),
            class: rng.random_range(0..classes),
            label: if rng.random::<bool>() { PairLabel::Same } else { PairLabel::Different },
            scalar: match kind {
                LossKind::Contrastive | LossKind::Triplet => rng.random_range(0.2..3.0),
                LossKind::SoftmaxRtl => rng.random_range(0.001..1.0),
                LossKind::CosineAlign => rng.random_range(-0.5..0.9),
                LossKind::Rtl => 0.0,
            },
        };
        if inst.kink_distance(&inst.a, &inst.p, &inst.n) > 1e-3 {
            return inst;
        }
    }
}

/// Largest relative error between analytic gradients and central
/// differences over every differentiated input of the instance. The
/// cosine-alignment anchor is a constant: its analytic gradient must be zero.
pub fn check_loss(inst: &LossInstance) -> f64 {
    let lv = inst.eval(&inst.a, &inst.p, &inst.n, &inst.logits);
    let d = inst.dim;
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = match inst.kind {
        LossKind::Contrastive => {
            let x: Vec<f64> = inst.a.iter().chain(&inst.p).copied().collect();
            let num = central_diff(|x| inst.eval(&x[..d], &x[d..], &inst.n, &inst.logits).value, &x);
            vec![(lv.grads[0].clone(), num[..d].to_vec()), (lv.grads[1].clone(), num[d..].to_vec())]
        }
        LossKind::Triplet | LossKind::Rtl => {
            let x: Vec<f64> = inst.a.iter().chain(&inst.p).chain(&inst.n).copied().collect();
            let num = central_diff(
                |x| inst.eval(&x[..d], &x[d..2 * d], &x[2 * d..], &inst.logits).value,
                &x,
            );
            (0..3).map(|k| (lv.grads[k].clone(), num[k * d..(k + 1) * d].to_vec())).collect()
        }
        LossKind::SoftmaxRtl => {
            let c = inst.logits.len();
            let x: Vec<f64> = inst
                .logits
                .iter()
                .chain(&inst.a)
                .chain(&inst.p)
                .chain(&inst.n)
                .copied()
                .collect();
            let num = central_diff(
                |x| inst.eval(&x[c..c + d], &x[c + d..c + 2 * d], &x[c + 2 * d..], &x[..c]).value,
                &x,
            );
            let mut blocks = vec![(lv.grads[0].clone(), num[..c].to_vec())];
            for k in 0..3 {
                blocks.push((lv.grads[k + 1].clone(), num[c + k * d..c + (k + 1) * d].to_vec()));
            }
            blocks
        }
        LossKind::CosineAlign => {
            assert!(lv.grads[0].iter().all(|&g| g == 0.0), "anchor gradient must be zero");
            let x: Vec<f64> = inst.p.iter().chain(&inst.n).copied().collect();
            let num = central_diff(|x| inst.eval(&inst.a, &x[..d], &x[d..], &inst.logits).value, &x);
            vec![(lv.grads[1].clone(), num[..d].to_vec()), (lv.grads[2].clone(), num[d..].to_vec())]
        }
    };
    let (analytic, numeric): (Vec<Vec<f64>>, Vec<Vec<f64>>) = blocks.into_iter().unzip();
    relative_error(&analytic.concat(), &numeric.concat())
}

pub fn flatten(params: &HeadParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.num_params());
    params.clone().for_each_slice_mut(|_, s| out.extend_from_slice(s));
    out
}

pub fn unflatten(template: &HeadParams, values: &[f64]) -> HeadParams {
    let mut p = template.clone();
    let mut offset = 0;
    p.for_each_slice_mut(|_, s| {
        s.copy_from_slice(&values[offset..offset + s.len()]);
        offset += s.len();
    });
    p
}

/// A loss composed through the whole head on one triplet of feature rows
/// `[a; p; n]`: the loss sees the three embeddings and the anchor's logits.
/// Cosine alignment instead takes its fixed anchor from `loss.a`; row 0 then
/// receives no gradient.
pub struct HeadInstance {
    pub params: HeadParams,
    pub x: Array2<f64>,
    pub loss: LossInstance,
}

impl HeadInstance {
    fn loss_of(&self, params: &HeadParams) -> (f64, Array2<f64>, Array2<f64>, Array2<f64>) {
        let cache = forward(params, self.x.view()).unwrap();
        let e = &cache.embedding;
        let row = |i: usize| e.row(i).to_vec();
        let logits = cache.logits.row(0).to_vec();
        let lv = self.loss.eval(&self.anchor(&row(0)), &row(1), &row(2), &logits);
        let dims = params.dims();
        let mut de = Array2::zeros((3, dims.embedding));
        let mut dz = Array2::zeros((3, dims.classes));
        let emb_grads: &[Vec<f64>] = match self.loss.kind {
            LossKind::SoftmaxRtl => {
                dz.row_mut(0).assign(&ndarray::Array1::from(lv.grads[0].clone()));
                &lv.grads[1..]
            }
            _ => &lv.grads[..],
        };
        for (i, g) in emb_grads.iter().enumerate() {
            de.row_mut(i).assign(&ndarray::Array1::from(g.clone()));
        }
        (lv.value, de, dz, cache.pre1.clone())
    }

    fn anchor(&self, row0: &[f64]) -> Vec<f64> {
        match self.loss.kind {
            LossKind::CosineAlign => self.loss.a.clone(),
            _ => row0.to_vec(),
        }
    }

    pub fn analytic(&self) -> Vec<f64> {
        let (_, de, dz, _) = self.loss_of(&self.params);
        let cache = forward(&self.params, self.x.view()).unwrap();
        flatten(&backward(&self.params, &cache, de.view(), dz.view()).unwrap())
    }

    /// Relative error between `backward` and central differences over every
    /// parameter.
    pub fn check(&self) -> f64 {
        let analytic = self.analytic();
        let numeric = central_diff(|v| self.loss_of(&unflatten(&self.params, v)).0, &flatten(&self.params));
        relative_error(&analytic, &numeric)
    }
}

pub fn random_head_instance(kind: LossKind, rng: &mut ChaCha8Rng) -> HeadInstance {
    loop {
        let dims = HeadDims {
            input: rng.random_range(2..=5),
            hidden: rng.random_range(2..=6),
            embedding: rng.random_range(2..=5),
            classes: rng.random_range(2..=4),
        };
        let mut params = init_head(dims, rng.random()).unwrap();
        params.for_each_slice_mut(|_, s| s.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5)));
        let x = Array2::from_shape_simple_fn((3, dims.input), || rng.random_range(-2.0..2.0));
        let mut loss = random_instance(kind, rng);
        loss.dim = dims.embedding;
        loss.a = normal_vec(rng, dims.embedding);
        loss.class = rng.random_range(0..dims.classes);
        let inst = HeadInstance { params, x, loss };
        let (_, _, _, pre1) = inst.loss_of(&inst.params);
        let cache = forward(&inst.params, inst.x.view()).unwrap();
        let e = &cache.embedding;
        let kink = inst
            .loss
            .kink_distance(&inst.anchor(&e.row(0).to_vec()), &e.row(1).to_vec(), &e.row(2).to_vec());
        if kink > 1e-3 && pre1.iter().all(|v| v.abs() > 1e-3) && l2(&inst.analytic()) > 1e-3 {
            return inst;
        }
    }
}

/// Brute-force length-sensitive SGT straight from the definition.
pub fn sgt_oracle(symbols: &[BigramSymbol], kappa: f64) -> Vec<f64> {
    let n = symbols.len();
    let mut w = vec![0.0; ALPHABET * ALPHABET];
    let mut starts = vec![0usize; ALPHABET];
    for l in 0..n {
        if l + 1 < n {
            starts[symbols[l].index()] += 1;
        }
        for m in (l + 1)..n {
            w[symbols[l].index() * ALPHABET + symbols[m].index()] += (-kappa * (m - l) as f64).exp();
        }
    }
    (0..ALPHABET * ALPHABET)
        .map(|k| {
            let s = starts[k / ALPHABET];
            if s == 0 {
                0.0
            } else {
                w[k] / s as f64
            }
        })
        .collect()
}

/// Exhaustive cosine KNN: rank every gallery row by `(−cos, index)`, take
/// `k`, majority vote, ties to the smaller mean cosine distance and then the
/// smaller class id.
pub fn knn_oracle(gallery: &Array2<f64>, labels: &[usize], queries: &Array2<f64>, k: usize) -> Vec<usize> {
    queries
        .rows()
        .into_iter()
        .map(|q| {
            let q = q.to_vec();
            let qn = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut scored: Vec<(f64, usize)> = gallery
                .rows()
                .into_iter()
                .enumerate()
                .map(|(i, g)| {
                    let dot: f64 = g.iter().zip(&q).map(|(a, b)| a * b).sum();
                    let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    (dot / (gn * qn), i)
                })
                .collect();
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let top = &scored[..k];
            let mut classes: Vec<usize> = top.iter().map(|&(_, i)| labels[i]).collect();
            classes.sort_unstable();
            classes.dedup();
            let score = |c: usize| {
                let hits: Vec<f64> = top.iter().filter(|&&(_, i)| labels[i] == c).map(|&(s, _)| 1.0 - s).collect();
                (hits.len(), hits.iter().sum::<f64>() / hits.len() as f64)
            };
            classes
                .into_iter()
                .min_by(|&x, &y| {
                    let (vx, dx) = score(x);
                    let (vy, dy) = score(y);
                    vy.cmp(&vx).then(dx.total_cmp(&dy)).then(x.cmp(&y))
                })
                .unwrap()
        })
        .collect()
}

/// A KNN instance. With `ties`, rows are small integers with repeated rows
/// and repeated directions so that equal similarities actually occur.
pub struct KnnInstance {
    pub gallery: Array2<f64>,
    pub labels: Vec<usize>,
    pub queries: Array2<f64>,
    pub k: usize,
}

pub fn random_knn_instance(rng: &mut ChaCha8Rng, ties: bool) -> KnnInstance {
    let n = rng.random_range(1..=2000);
    let e = rng.random_range(1..=64);
    let classes = rng.random_range(1..=12);
    let q = rng.random_range(1..=40);
    let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        loop {
            let v: Vec<f64> = if ties {
                (0..e).map(|_| rng.random_range(-2i32..=2) as f64).collect()
            } else {
                (0..e).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            if v.iter().any(|&x| x != 0.0) {
                return v;
            }
        }
    };
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for _ in 0..n {
        if ties && !rows.is_empty() && rng.random::<f64>() < 0.3 {
            let src = rows[rng.random_range(0..rows.len())].clone();
            let scale = [1.0, 2.0, 4.0][rng.random_range(0..3)];
            rows.push(src.iter().map(|v| v * scale).collect());
        } else {
            rows.push(row(rng));
        }
    }
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let queries: Vec<Vec<f64>> = (0..q)
        .map(|_| {
            if ties && rng.random::<bool>() {
                rows[rng.random_range(0..n)].clone()
            } else {
                row(rng)
            }
        })
        .collect();
    let to_matrix = |rows: &[Vec<f64>]| {
        Array2::from_shape_vec((rows.len(), e), rows.concat()).unwrap()
    };
    KnnInstance {
        gallery: to_matrix(&rows),
        labels,
        queries: to_matrix(&queries),
        k: rng.random_range(1..=n.min(15)),
    }
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
