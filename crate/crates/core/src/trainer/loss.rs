//! Logistic loss of the two-stage model and its exact gradient.
//!
//! Parameters are flat: row-major `W` (`dim²`), head weights (`dim`), bias.
//! For one sample with `u = W x`, margin `m = y (hᵀu + b)`:
//!
//! ```text
//! loss = softplus(−m)
//! ∂/∂h = c u,   ∂/∂b = c,   ∂/∂W = c h xᵀ,   c = −y σ(−m)
//! ```
//!
//! so the featurizer gradient over a batch is the rank-one `h (Σ c x)ᵀ`.

/// Row-major samples with labels in `{−1, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub dim: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize, xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), dim * ys.len(), "sample matrix shape");
        Self { dim, xs, ys }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }
}

/// `log(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{−t})` without overflow.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logit(params: &[f64], dim: usize, x: &[f64], u: &mut [f64]) -> f64 {
    let head = &params[dim * dim..dim * dim + dim];
    let mut s = params[dim * dim + dim];
    for i in 0..dim {
        let row = &params[i * dim..(i + 1) * dim];
        u[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        s += head[i] * u[i];
    }
    s
}

/// Mean logistic loss over `rows` of `data`.
pub fn loss(params: &[f64], data: &Samples, rows: impl ExactSizeIterator<Item = usize>) -> f64 {
    let dim = data.dim;
    let n = rows.len() as f64;
    let mut u = vec![0.0; dim];
    let mut total = 0.0;
    for i in rows {
        let m = data.ys[i] * logit(params, dim, data.row(i), &mut u);
        total += softplus(-m);
    }
    total / n
}

/// Mean logistic loss over `rows` and its gradient, written to `grad`.
pub fn loss_and_grad(
    params: &[f64],
    data: &Samples,
    rows: impl ExactSizeIterator<Item = usize>,
    grad: &mut [f64],
) -> f64 {
    let dim = data.dim;
    let n = rows.len() as f64;
    grad.fill(0.0);
    let mut u = vec![0.0; dim];
    let mut sx = vec![0.0; dim];
    let mut total = 0.0;
    let (_, rest) = grad.split_at_mut(dim * dim);
    let (grad_h, grad_b) = rest.split_at_mut(dim);
    for i in rows {
        let x = data.row(i);
        let y = data.ys[i];
        let m = y * logit(params, dim, x, &mut u);
        total += softplus(-m);
        let c = -y * sigmoid(-m);
        for k in 0..dim {
            grad_h[k] += c * u[k];
            sx[k] += c * x[k];
        }
        grad_b[0] += c;
    }
    let head = &params[dim * dim..dim * dim + dim];
    for (r, &h) in head.iter().enumerate() {
        for (g, &s) in grad[r * dim..(r + 1) * dim].iter_mut().zip(&sx) {
            *g = h * s;
        }
    }
    for g in grad.iter_mut() {
        *g /= n;
    }
    total / n
}

/// Fraction of `rows` whose prediction `sign(logit)` (with `sign(0) = +1`)
/// differs from the label.
pub fn zero_one(params: &[f64], data: &Samples, rows: impl ExactSizeIterator<Item = usize>) -> f64 {
    let dim = data.dim;
    let n = rows.len() as f64;
    let mut u = vec![0.0; dim];
    let errors = rows
        .filter(|&i| {
            let pred = if logit(params, dim, data.row(i), &mut u) >= 0.0 {
                1.0
            } else {
                -1.0
            };
            pred != data.ys[i]
        })
        .count();
    errors as f64 / n
}
