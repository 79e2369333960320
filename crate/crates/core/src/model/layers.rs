//! Layer kernels. Feature maps are position-major, channels-last
//! `[positions, channels]` matrices, one per batch sample.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::Scalar;
use crate::par;

/// 2-D convolution geometry: `time x freq` positions, odd square kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Grid {
    pub time: usize,
    pub freq: usize,
}

impl Grid {
    pub fn positions(&self) -> usize {
        self.time * self.freq
    }
}

/// Patch matrix for a `k x k` "same" convolution: row `(t, f)` holds the
/// `k*k*c` inputs around it in `(dt, df, channel)` order, zeros off the edge.
pub(crate) fn im2col2d<F: Scalar>(x: ArrayView2<F>, g: Grid, k: usize) -> Array2<F> {
    let c = x.ncols();
    let half = (k / 2) as isize;
    let mut cols = Array2::<F>::zeros((g.positions(), k * k * c));
    let xs = x.as_slice().expect("standard layout");
    let cs = cols.as_slice_mut().expect("standard layout");
    let width = k * k * c;
    for t in 0..g.time {
        for f in 0..g.freq {
            let row = (t * g.freq + f) * width;
            for dt in 0..k {
                let tt = t as isize + dt as isize - half;
                if tt < 0 || tt >= g.time as isize {
                    continue;
                }
                for df in 0..k {
                    let ff = f as isize + df as isize - half;
                    if ff < 0 || ff >= g.freq as isize {
                        continue;
                    }
                    let src = (tt as usize * g.freq + ff as usize) * c;
                    let dst = row + (dt * k + df) * c;
                    cs[dst..dst + c].copy_from_slice(&xs[src..src + c]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col2d`]: scatter-adds patch gradients back onto the input.
pub(crate) fn col2im2d<F: Scalar>(dcols: ArrayView2<F>, g: Grid, k: usize, c: usize) -> Array2<F> {
    let half = (k / 2) as isize;
    let mut dx = Array2::<F>::zeros((g.positions(), c));
    let ds = dcols.as_slice().expect("standard layout");
    let xs = dx.as_slice_mut().expect("standard layout");
    let width = k * k * c;
    for t in 0..g.time {
        for f in 0..g.freq {
            let row = (t * g.freq + f) * width;
            for dt in 0..k {
                let tt = t as isize + dt as isize - half;
                if tt < 0 || tt >= g.time as isize {
                    continue;
                }
                for df in 0..k {
                    let ff = f as isize + df as isize - half;
                    if ff < 0 || ff >= g.freq as isize {
                        continue;
                    }
                    let dst = (tt as usize * g.freq + ff as usize) * c;
                    let src = row + (dt * k + df) * c;
                    for i in 0..c {
                        xs[dst + i] += ds[src + i];
                    }
                }
            }
        }
    }
    dx
}

/// Patch matrix for a 1-D dilated "same" convolution over time: row `t` holds
/// `x[t + (j - k/2) * dilation]` for `j in 0..k`.
pub(crate) fn im2col1d<F: Scalar>(x: ArrayView2<F>, k: usize, dilation: usize) -> Array2<F> {
    let (n, c) = x.dim();
    let half = (k / 2) as isize;
    let mut cols = Array2::<F>::zeros((n, k * c));
    for t in 0..n {
        for j in 0..k {
            let src = t as isize + (j as isize - half) * dilation as isize;
            if src >= 0 && (src as usize) < n {
                cols.slice_mut(s![t, j * c..(j + 1) * c])
                    .assign(&x.row(src as usize));
            }
        }
    }
    cols
}

pub(crate) fn col2im1d<F: Scalar>(dcols: ArrayView2<F>, k: usize, dilation: usize, c: usize) -> Array2<F> {
    let n = dcols.nrows();
    let half = (k / 2) as isize;
    let mut dx = Array2::<F>::zeros((n, c));
    for t in 0..n {
        for j in 0..k {
            let dst = t as isize + (j as isize - half) * dilation as isize;
            if dst >= 0 && (dst as usize) < n {
                let mut row = dx.row_mut(dst as usize);
                row += &dcols.slice(s![t, j * c..(j + 1) * c]);
            }
        }
    }
    dx
}

/// Sums per-sample gradient tensors in batch order.
pub(crate) fn sum_in_order<F: Scalar>(parts: Vec<Array2<F>>) -> Array2<F> {
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("non-empty batch");
    for p in it {
        acc += &p;
    }
    acc
}

/// Batch-norm statistics actually used in a forward pass.
#[derive(Debug, Clone)]
pub(crate) struct BnStats<F> {
    pub mean: Array1<F>,
    pub inv_std: Array1<F>,
    /// Statistics came from the batch (and so depend on the input).
    pub from_batch: bool,
}

/// Running-statistic update produced by a training forward pass.
#[derive(Debug, Clone)]
pub(crate) struct BnUpdate {
    pub prefix: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub(crate) struct BnParams<'a, F> {
    pub gamma: ArrayView1<'a, F>,
    pub beta: ArrayView1<'a, F>,
    pub running_mean: ArrayView1<'a, F>,
    pub running_var: ArrayView1<'a, F>,
    pub eps: f64,
}

/// Per-channel batch mean and biased variance, accumulated in f64 in sample order.
pub(crate) fn batch_moments<F: Scalar>(xs: &[Array2<F>]) -> (Vec<f64>, Vec<f64>, usize) {
    let c = xs[0].ncols();
    let count: usize = xs.iter().map(|x| x.nrows()).sum();
    let sums = par::map(xs, |x| {
        let mut s = vec![0.0f64; c];
        for row in x.rows() {
            for (a, v) in s.iter_mut().zip(row) {
                *a += v.to_f64().unwrap();
            }
        }
        s
    });
    let mut mean = vec![0.0; c];
    for s in &sums {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let sq = par::map(xs, |x| {
        let mut s = vec![0.0f64; c];
        for row in x.rows() {
            for ((a, v), m) in s.iter_mut().zip(row).zip(&mean) {
                let d = v.to_f64().unwrap() - m;
                *a += d * d;
            }
        }
        s
    });
    let mut var = vec![0.0; c];
    for s in &sq {
        for (m, v) in var.iter_mut().zip(s) {
            *m += v;
        }
    }
    var.iter_mut().for_each(|v| *v /= count as f64);
    (mean, var, count)
}

/// Chooses the normalization statistics. Batch statistics are used in
/// training unless every channel has a single element, which has no variance.
pub(crate) fn bn_stats<F: Scalar>(
    xs: &[Array2<F>],
    p: &BnParams<'_, F>,
    training: bool,
    prefix: &str,
    momentum: f64,
) -> (BnStats<F>, Option<BnUpdate>) {
    let count: usize = xs.iter().map(|x| x.nrows()).sum();
    if training && count > 1 {
        let (mean, var, _) = batch_moments(xs);
        let stats = BnStats {
            mean: mean.iter().map(|&m| F::from_f64(m).unwrap()).collect(),
            inv_std: var
                .iter()
                .map(|&v| F::from_f64(1.0 / (v + p.eps).sqrt()).unwrap())
                .collect(),
            from_batch: true,
        };
        let rm = p.running_mean;
        let rv = p.running_var;
        let update = BnUpdate {
            prefix: prefix.to_string(),
            mean: mean
                .iter()
                .zip(rm)
                .map(|(&b, r)| momentum * r.to_f64().unwrap() + (1.0 - momentum) * b)
                .collect(),
            var: var
                .iter()
                .zip(rv)
                .map(|(&b, r)| momentum * r.to_f64().unwrap() + (1.0 - momentum) * b)
                .collect(),
        };
        (stats, Some(update))
    } else {
        let stats = BnStats {
            mean: p.running_mean.to_owned(),
            inv_std: p
                .running_var
                .mapv(|v| F::from_f64(1.0 / (v.to_f64().unwrap() + p.eps).sqrt()).unwrap()),
            from_batch: false,
        };
        (stats, None)
    }
}

/// `relu(gamma * (x - mean) * inv_std + beta)`
pub(crate) fn bn_relu_forward<F: Scalar>(
    x: ArrayView2<F>,
    stats: &BnStats<F>,
    gamma: ArrayView1<F>,
    beta: ArrayView1<F>,
) -> Array2<F> {
    let scale: Array1<F> = &gamma * &stats.inv_std;
    let shift: Array1<F> = &beta - &(&scale * &stats.mean);
    let mut y = x.to_owned();
    for mut row in y.rows_mut() {
        row.zip_mut_with(&scale, |v, &a| *v *= a);
        row.zip_mut_with(&shift, |v, &b| *v = (*v + b).max(F::zero()));
    }
    y
}

/// Backward of [`bn_relu_forward`] over the whole batch.
/// Returns `(dx per sample, dgamma, dbeta)`.
pub(crate) fn bn_relu_backward<F: Scalar>(
    xs: &[Array2<F>],
    douts: &[Array2<F>],
    stats: &BnStats<F>,
    gamma: ArrayView1<F>,
    beta: ArrayView1<F>,
) -> (Vec<Array2<F>>, Array1<F>, Array1<F>) {
    let c = gamma.len();
    let count: usize = xs.iter().map(|x| x.nrows()).sum();
    let g64: Vec<f64> = gamma.iter().map(|v| v.to_f64().unwrap()).collect();
    let b64: Vec<f64> = beta.iter().map(|v| v.to_f64().unwrap()).collect();
    let m64: Vec<f64> = stats.mean.iter().map(|v| v.to_f64().unwrap()).collect();
    let s64: Vec<f64> = stats.inv_std.iter().map(|v| v.to_f64().unwrap()).collect();

    // Gradient at the BN output (ReLU mask applied) and its channel sums.
    let idx: Vec<usize> = (0..xs.len()).collect();
    let parts = par::map(&idx, |&i| {
        let x = &xs[i];
        let mut dy = douts[i].clone();
        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for (xr, mut dr) in x.rows().into_iter().zip(dy.rows_mut()) {
            for ch in 0..c {
                let xhat = (xr[ch].to_f64().unwrap() - m64[ch]) * s64[ch];
                if g64[ch] * xhat + b64[ch] <= 0.0 {
                    dr[ch] = F::zero();
                } else {
                    let d = dr[ch].to_f64().unwrap();
                    sum_dy[ch] += d;
                    sum_dy_xhat[ch] += d * xhat;
                }
            }
        }
        (dy, sum_dy, sum_dy_xhat)
    });
    let mut sum_dy = vec![0.0f64; c];
    let mut sum_dy_xhat = vec![0.0f64; c];
    for (_, a, b) in &parts {
        for ch in 0..c {
            sum_dy[ch] += a[ch];
            sum_dy_xhat[ch] += b[ch];
        }
    }
    let dgamma: Array1<F> = sum_dy_xhat.iter().map(|&v| F::from_f64(v).unwrap()).collect();
    let dbeta: Array1<F> = sum_dy.iter().map(|&v| F::from_f64(v).unwrap()).collect();

    let n = count as f64;
    let dxs = par::map_range(parts.len(), |i| {
        let dy = &parts[i].0;
        let x = &xs[i];
        let mut dx = Array2::<F>::zeros(dy.dim());
        for ((xr, dr), mut out) in x.rows().into_iter().zip(dy.rows()).zip(dx.rows_mut()) {
            for ch in 0..c {
                let d = dr[ch].to_f64().unwrap();
                let v = if stats.from_batch {
                    let xhat = (xr[ch].to_f64().unwrap() - m64[ch]) * s64[ch];
                    g64[ch] * s64[ch] / n * (n * d - sum_dy[ch] - xhat * sum_dy_xhat[ch])
                } else {
                    g64[ch] * s64[ch] * d
                };
                out[ch] = F::from_f64(v).unwrap();
            }
        }
        dx
    });
    (dxs, dgamma, dbeta)
}

/// Averages `pool` adjacent frequency bins.
pub(crate) fn freq_pool_forward<F: Scalar>(x: ArrayView2<F>, g: Grid, pool: usize) -> Array2<F> {
    let c = x.ncols();
    let out_f = g.freq / pool;
    let inv = F::from_f64(1.0 / pool as f64).unwrap();
    let mut y = Array2::<F>::zeros((g.time * out_f, c));
    for t in 0..g.time {
        for f in 0..out_f {
            let mut row = y.row_mut(t * out_f + f);
            for j in 0..pool {
                row += &x.row(t * g.freq + f * pool + j);
            }
            row.mapv_inplace(|v| v * inv);
        }
    }
    y
}

pub(crate) fn freq_pool_backward<F: Scalar>(dy: ArrayView2<F>, g: Grid, pool: usize) -> Array2<F> {
    let c = dy.ncols();
    let out_f = g.freq / pool;
    let inv = F::from_f64(1.0 / pool as f64).unwrap();
    let mut dx = Array2::<F>::zeros((g.positions(), c));
    for t in 0..g.time {
        for f in 0..out_f {
            let d = dy.row(t * out_f + f).mapv(|v| v * inv);
            for j in 0..pool {
                dx.row_mut(t * g.freq + f * pool + j).assign(&d);
            }
        }
    }
    dx
}

/// Mean over the frequency axis: `[time*freq, c] -> [time, c]`.
pub(crate) fn freq_mean_forward<F: Scalar>(x: ArrayView2<F>, g: Grid) -> Array2<F> {
    let c = x.ncols();
    x.into_shape_with_order((g.time, g.freq, c))
        .expect("contiguous feature map")
        .mean_axis(Axis(1))
        .expect("freq > 0")
}

pub(crate) fn freq_mean_backward<F: Scalar>(dy: ArrayView2<F>, g: Grid) -> Array2<F> {
    let c = dy.ncols();
    let inv = F::from_f64(1.0 / g.freq as f64).unwrap();
    let mut dx = Array2::<F>::zeros((g.positions(), c));
    for t in 0..g.time {
        let d = dy.row(t).mapv(|v| v * inv);
        for f in 0..g.freq {
            dx.row_mut(t * g.freq + f).assign(&d);
        }
    }
    dx
}

/// `x @ w + b`
pub(crate) fn affine<F: Scalar>(x: ArrayView2<F>, w: ArrayView2<F>, b: ArrayView1<F>) -> Array2<F> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn naive_conv2d(x: &Array2<f64>, g: Grid, k: usize, w: &Array2<f64>) -> Array2<f64> {
        let c = x.ncols();
        let cout = w.ncols();
        let half = (k / 2) as isize;
        let mut y = Array2::zeros((g.positions(), cout));
        for t in 0..g.time as isize {
            for f in 0..g.freq as isize {
                for o in 0..cout {
                    let mut acc = 0.0;
                    for dt in 0..k as isize {
                        for df in 0..k as isize {
                            let (tt, ff) = (t + dt - half, f + df - half);
                            if tt < 0 || ff < 0 || tt >= g.time as isize || ff >= g.freq as isize {
                                continue;
                            }
                            for i in 0..c {
                                let wrow = ((dt as usize * k + df as usize) * c) + i;
                                acc += x[[(tt as usize) * g.freq + ff as usize, i]] * w[[wrow, o]];
                            }
                        }
                    }
                    y[[(t as usize) * g.freq + f as usize, o]] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let g = Grid { time: 5, freq: 4 };
        let x = Array::from_shape_fn((20, 3), |(p, c)| (p * 7 + c * 3) as f64 % 5.0 - 2.0);
        let w = Array::from_shape_fn((27, 2), |(r, o)| ((r + o * 11) % 7) as f64 * 0.1 - 0.3);
        let y = im2col2d(x.view(), g, 3).dot(&w);
        let want = naive_conv2d(&x, g, 3, &w);
        assert!((&y - &want).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn col2im_is_adjoint() {
        // <im2col(x), d> == <x, col2im(d)>
        let g = Grid { time: 4, freq: 3 };
        let x = Array::from_shape_fn((12, 2), |(p, c)| (p + 2 * c) as f64 * 0.3 - 1.0);
        let d = Array::from_shape_fn((12, 18), |(p, c)| ((p * 5 + c) % 9) as f64 - 4.0);
        let lhs: f64 = (&im2col2d(x.view(), g, 3) * &d).sum();
        let rhs: f64 = (&x * &col2im2d(d.view(), g, 3, 2)).sum();
        assert!((lhs - rhs).abs() < 1e-9);

        let x = Array::from_shape_fn((9, 2), |(p, c)| (p * 3 + c) as f64 * 0.1);
        let d = Array::from_shape_fn((9, 6), |(p, c)| (p + c) as f64 - 3.0);
        let lhs: f64 = (&im2col1d(x.view(), 3, 2) * &d).sum();
        let rhs: f64 = (&x * &col2im1d(d.view(), 3, 2, 2)).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn pool_and_mean_shapes() {
        let g = Grid { time: 2, freq: 4 };
        let x = Array::from_shape_fn((8, 1), |(p, _)| p as f64);
        let y = freq_pool_forward(x.view(), g, 2);
        assert_eq!(y.column(0).to_vec(), vec![0.5, 2.5, 4.5, 6.5]);
        let m = freq_mean_forward(x.view(), g);
        assert_eq!(m.column(0).to_vec(), vec![1.5, 5.5]);
    }
}
