//! Cosine distance matrices between class centroids and their 2-D stress
//! layouts.
//!
//! The layout minimizes the Kamada-Kawai energy
//! `Σ_{i<j} w_ij (‖p_i − p_j‖ − d_ij)²` with `w_ij = d_ij⁻²` (zero for
//! `d_ij = 0`), starting from points drawn uniformly on the unit disk. Each
//! step moves every node along its own Newton direction (its 2×2
//! Gauss-Newton block of the Hessian, inverted) with Armijo backtracking on
//! the total energy. Descent can settle in a folded local minimum, so several
//! starts are drawn from the same seeded stream and the lowest-stress result
//! is kept.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::knn::{centroids, EmbeddingTable};
use crate::error::{Error, Result};
use crate::losses::cosine;

/// `1 − cos` between per-class mean embeddings, with the class ids (ascending)
/// that index its rows.
pub fn centroid_distance_matrix(table: &EmbeddingTable) -> Result<(Vec<usize>, Array2<f64>)> {
    let (classes, cents) = centroids(table.matrix(), table.labels());
    let c = classes.len();
    let mut dist = Array2::zeros((c, c));
    for i in 0..c {
        for j in (i + 1)..c {
            let ci = cents.row(i).to_vec();
            let cj = cents.row(j).to_vec();
            let d = 1.0 - cosine(&ci, &cj).map_err(|_| {
                Error::data(format!("class {} or {} has a zero-norm centroid", classes[i], classes[j]))
            })?;
            dist[[i, j]] = d;
            dist[[j, i]] = d;
        }
    }
    Ok((classes, dist))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout2D {
    pub coords: Vec<[f64; 2]>,
    pub stress: f64,
    /// Accepted steps of the winning start.
    pub iterations: usize,
}

/// Optimizer settings for [`kamada_kawai_layout`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutOptions {
    pub iters: usize,
    /// Stop once an accepted step improves stress by less than this fraction.
    pub tol: f64,
    pub seed: u64,
    /// Independent random starts; at least one is always run.
    pub restarts: usize,
}

impl Default for LayoutOptions {
    fn default() -> Self {
        LayoutOptions {
            iters: 5000,
            tol: 1e-12,
            seed: 0,
            restarts: 16,
        }
    }
}

fn validate_distances(dist: &Array2<f64>) -> Result<()> {
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(Error::invalid(format!("distance matrix is {}x{}, not square", n, dist.ncols())));
    }
    for i in 0..n {
        if dist[[i, i]] != 0.0 {
            return Err(Error::invalid(format!("distance matrix diagonal entry {i} is nonzero")));
        }
        for j in 0..n {
            let d = dist[[i, j]];
            if !d.is_finite() || d < 0.0 {
                return Err(Error::invalid(format!("distance ({i},{j}) = {d} is negative or non-finite")));
            }
            if (d - dist[[j, i]]).abs() > 1e-12 * d.abs().max(1.0) {
                return Err(Error::invalid(format!("distance matrix is asymmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

/// Weighted stress of `coords` against `dist`.
pub fn stress(dist: &Array2<f64>, coords: &[[f64; 2]]) -> f64 {
    let n = coords.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist[[i, j]];
            if d == 0.0 {
                continue;
            }
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let r = (dx * dx + dy * dy).sqrt() - d;
            total += r * r / (d * d);
        }
    }
    total
}

fn stress_gradient(dist: &Array2<f64>, coords: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = coords.len();
    let mut grad = vec![[0.0; 2]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist[[i, j]];
            if d == 0.0 {
                continue;
            }
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let len = (dx * dx + dy * dy).sqrt();
            if len == 0.0 {
                continue;
            }
            let k = 2.0 * (len - d) / (d * d * len);
            grad[i][0] += k * dx;
            grad[i][1] += k * dy;
            grad[j][0] -= k * dx;
            grad[j][1] -= k * dy;
        }
    }
    grad
}

/// Minimize layout stress for a symmetric, zero-diagonal, non-negative
/// distance matrix. Accepted steps never increase stress.
pub fn kamada_kawai_layout(dist: &Array2<f64>, opts: LayoutOptions) -> Result<Layout2D> {
    validate_distances(dist)?;
    let n = dist.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<Layout2D> = None;
    for _ in 0..opts.restarts.max(1) {
        let start: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                let r = rng.random::<f64>().sqrt();
                let theta = std::f64::consts::TAU * rng.random::<f64>();
                [r * theta.cos(), r * theta.sin()]
            })
            .collect();
        let run = descend(dist, start, opts);
        if best.as_ref().is_none_or(|b| run.stress < b.stress) {
            best = Some(run);
        }
        if best.as_ref().is_some_and(|b| b.stress == 0.0) {
            break;
        }
    }
    Ok(best.expect("at least one start"))
}

/// Per-node Newton directions: each node's gradient is scaled by the inverse
/// of its 2×2 Gauss-Newton block, which keeps short edges from forcing a tiny
/// step on everyone else.
fn newton_directions(dist: &Array2<f64>, coords: &[[f64; 2]], grad: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = coords.len();
    let mut blocks = vec![[0.0f64; 3]; n]; // (xx, xy, yy)
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist[[i, j]];
            if d == 0.0 {
                continue;
            }
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let len = (dx * dx + dy * dy).sqrt();
            if len == 0.0 {
                continue;
            }
            let (ux, uy) = (dx / len, dy / len);
            let w = 2.0 / (d * d);
            let bend = (1.0 - d / len).max(0.0);
            let h = [
                w * (ux * ux + bend * (1.0 - ux * ux)),
                w * (ux * uy * (1.0 - bend)),
                w * (uy * uy + bend * (1.0 - uy * uy)),
            ];
            for k in [i, j] {
                for (b, v) in blocks[k].iter_mut().zip(h) {
                    *b += v;
                }
            }
        }
    }
    blocks
        .iter()
        .zip(grad)
        .map(|(&[a, b, c], g)| {
            let damp = 1e-9 * (a + c) + 1e-300;
            let (a, c) = (a + damp, c + damp);
            let det = a * c - b * b;
            if det > 0.0 {
                [-(c * g[0] - b * g[1]) / det, -(a * g[1] - b * g[0]) / det]
            } else {
                [-g[0], -g[1]]
            }
        })
        .collect()
}

fn descend(dist: &Array2<f64>, mut coords: Vec<[f64; 2]>, opts: LayoutOptions) -> Layout2D {
    let mut energy = stress(dist, &coords);
    let mut iterations = 0;
    while iterations < opts.iters && energy > 0.0 {
        let grad = stress_gradient(dist, &coords);
        let dir = newton_directions(dist, &coords, &grad);
        let slope: f64 = grad.iter().zip(&dir).map(|(g, p)| g[0] * p[0] + g[1] * p[1]).sum();
        if !(slope < 0.0) {
            break;
        }
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..60 {
            let trial: Vec<[f64; 2]> = coords
                .iter()
                .zip(&dir)
                .map(|(p, v)| [p[0] + t * v[0], p[1] + t * v[1]])
                .collect();
            let e = stress(dist, &trial);
            if e <= energy + 1e-4 * t * slope {
                accepted = Some((trial, e));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, e)) = accepted else { break };
        iterations += 1;
        let improvement = (energy - e) / energy;
        coords = trial;
        energy = e;
        if improvement < opts.tol {
            break;
        }
    }
    Layout2D {
        coords,
        stress: energy,
        iterations,
    }
}
