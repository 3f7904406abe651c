//! Simplex-constrained ridge least squares.
//!
//! Minimizes `‖A w − b‖² / m + ζ² ‖w‖²` over `{w ≥ 0, Σ w = 1}` by accelerated projected
//! gradient with adaptive restart. Deterministic: no randomness, fixed iteration cap.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

pub const MAX_ITERATIONS: usize = 10_000;
/// Stop once the relative objective decrease falls below this.
pub const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SimplexFit {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    let mut w: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // remove rounding drift so the sum is 1 to machine precision
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        for x in &mut w {
            *x /= s;
        }
    } else {
        w = alloc::vec![1.0 / n as f64; n];
    }
    w
}

fn objective(a: &DMatrix<f64>, b: &DVector<f64>, w: &DVector<f64>, m: f64, zeta2: f64) -> f64 {
    (a * w - b).norm_squared() / m + zeta2 * w.norm_squared()
}

/// Solves the constrained problem from the uniform starting point.
pub fn simplex_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, zeta: f64) -> SimplexFit {
    let n = a.ncols();
    let m = a.nrows().max(1) as f64;
    let zeta2 = zeta * zeta;
    if n == 1 {
        let w = DVector::from_element(1, 1.0);
        return SimplexFit {
            objective: objective(a, b, &w, m, zeta2),
            weights: alloc::vec![1.0],
            iterations: 0,
        };
    }
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    let lmax = ata.clone().symmetric_eigen().eigenvalues.max().max(0.0);
    let lipschitz = 2.0 * (lmax / m + zeta2);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };
    let grad = |w: &DVector<f64>| (&ata * w - &atb) * (2.0 / m) + w * (2.0 * zeta2);

    let mut w = DVector::from_element(n, 1.0 / n as f64);
    let mut y = w.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(a, b, &w, m, zeta2);
    let mut restarted = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let g = grad(&y);
        let cand: Vec<f64> = (0..n).map(|i| y[i] - step * g[i]).collect();
        let w_next = DVector::from_vec(project_simplex(&cand));
        let f = objective(a, b, &w_next, m, zeta2);
        if f > f_prev {
            // momentum overshot: restart from the last iterate
            if restarted {
                break;
            }
            y = w.clone();
            t = 1.0;
            restarted = true;
            continue;
        }
        let decrease = f_prev - f;
        let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * t * t));
        y = &w_next + (&w_next - &w) * ((t - 1.0) / t_next);
        t = t_next;
        w = w_next;
        let done = decrease <= TOLERANCE * f_prev.abs() || f == 0.0;
        f_prev = f;
        if done && !restarted {
            // confirm with a plain projected-gradient step before stopping
            y = w.clone();
            t = 1.0;
            restarted = true;
            continue;
        }
        if done {
            break;
        }
        restarted = false;
    }
    SimplexFit {
        weights: w.iter().copied().collect(),
        objective: f_prev,
        iterations,
    }
}
