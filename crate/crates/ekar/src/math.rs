//! Small dense-vector helpers shared by the KGE and policy networks.

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// y += W x for row-major W of shape (rows, cols).
pub fn matvec_add(w: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), y.len() * cols);
    for (r, yr) in y.iter_mut().enumerate() {
        *yr += dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// Accumulates gradients of y = W x: gw += dy xᵀ, gx += Wᵀ dy.
pub fn matvec_backward(w: &[f64], x: &[f64], dy: &[f64], gw: &mut [f64], gx: &mut [f64]) {
    let cols = x.len();
    for (r, &d) in dy.iter().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let grow = &mut gw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            grow[c] += d * x[c];
            gx[c] += d * row[c];
        }
    }
}

/// Numerically stable softmax restricted to `keep` (None = all).
pub fn masked_softmax(logits: &[f64], keep: Option<&[bool]>) -> Vec<f64> {
    let kept = |j: usize| keep.map_or(true, |m| m[j]);
    let max = logits
        .iter()
        .enumerate()
        .filter(|(j, _)| kept(*j))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = vec![0.0; logits.len()];
    let mut z = 0.0;
    for (j, &l) in logits.iter().enumerate() {
        if kept(j) {
            let e = (l - max).exp();
            out[j] = e;
            z += e;
        }
    }
    for v in &mut out {
        *v /= z;
    }
    out
}

/// Scales `grads` in place so the global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [&mut [f64]], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for g in grads.iter() {
        for v in g.iter() {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

pub fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}
