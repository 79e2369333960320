//! Single-direction GRU with the reset gate applied to the previous state
//! before the recurrent candidate transform:
//!
//! ```text
//! z = sigmoid(x Wz + h Uz + bz)
//! r = sigmoid(x Wr + h Ur + br)
//! n = tanh(x Wn + (r * h) Un + bn)
//! h' = (1 - z) * n + z * h
//! ```
//!
//! Gate blocks are packed `[z | r | n]` along the last axis of the kernel
//! `[input, 3H]`, recurrent matrix `[H, 3H]` and bias `[3H]`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::Scalar;

pub(crate) struct GruParams<'a, F> {
    pub kernel: ArrayView2<'a, F>,
    pub recurrent: ArrayView2<'a, F>,
    pub bias: ArrayView1<'a, F>,
}

#[derive(Debug, Clone)]
pub(crate) struct GruCache<F> {
    x: Array2<F>,
    h_prev: Array2<F>,
    z: Array2<F>,
    r: Array2<F>,
    n: Array2<F>,
}

pub(crate) struct GruGrads<F> {
    pub dx: Array2<F>,
    pub kernel: Array2<F>,
    pub recurrent: Array2<F>,
    pub bias: Array1<F>,
}

fn sigmoid<F: Scalar>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

/// Runs the recurrence over the rows of `x`; returns hidden states `[T, H]`.
pub(crate) fn forward<F: Scalar>(p: &GruParams<'_, F>, x: ArrayView2<F>) -> (Array2<F>, GruCache<F>) {
    let t_len = x.nrows();
    let h_dim = p.recurrent.nrows();
    let mut xp = x.dot(&p.kernel);
    xp += &p.bias;
    let u_zr = p.recurrent.slice(s![.., ..2 * h_dim]);
    let u_n = p.recurrent.slice(s![.., 2 * h_dim..]);

    let mut hs = Array2::<F>::zeros((t_len, h_dim));
    let mut h_prev = Array2::<F>::zeros((t_len, h_dim));
    let mut z = Array2::<F>::zeros((t_len, h_dim));
    let mut r = Array2::<F>::zeros((t_len, h_dim));
    let mut n = Array2::<F>::zeros((t_len, h_dim));
    let mut h = Array1::<F>::zeros(h_dim);
    for t in 0..t_len {
        let zr_rec = h.dot(&u_zr);
        let xrow = xp.row(t);
        let zt: Array1<F> = (0..h_dim).map(|j| sigmoid(xrow[j] + zr_rec[j])).collect();
        let rt: Array1<F> = (0..h_dim)
            .map(|j| sigmoid(xrow[h_dim + j] + zr_rec[h_dim + j]))
            .collect();
        let rh = &rt * &h;
        let n_rec = rh.dot(&u_n);
        let nt: Array1<F> = (0..h_dim)
            .map(|j| (xrow[2 * h_dim + j] + n_rec[j]).tanh())
            .collect();
        h_prev.row_mut(t).assign(&h);
        let new_h: Array1<F> = (0..h_dim)
            .map(|j| (F::one() - zt[j]) * nt[j] + zt[j] * h[j])
            .collect();
        hs.row_mut(t).assign(&new_h);
        z.row_mut(t).assign(&zt);
        r.row_mut(t).assign(&rt);
        n.row_mut(t).assign(&nt);
        h = new_h;
    }
    (
        hs,
        GruCache {
            x: x.to_owned(),
            h_prev,
            z,
            r,
            n,
        },
    )
}

/// Backpropagation through time given `dh = dL/dh_t` for every step.
pub(crate) fn backward<F: Scalar>(p: &GruParams<'_, F>, cache: &GruCache<F>, dh: ArrayView2<F>) -> GruGrads<F> {
    let (t_len, h_dim) = dh.dim();
    let u_zr = p.recurrent.slice(s![.., ..2 * h_dim]);
    let u_n = p.recurrent.slice(s![.., 2 * h_dim..]);
    let u_zr_t = u_zr.t();
    let u_n_t = u_n.t();

    // pre-activation gradients [dz | dr | dn] per step
    let mut dpre = Array2::<F>::zeros((t_len, 3 * h_dim));
    let mut rh = Array2::<F>::zeros((t_len, h_dim));
    let mut carry = Array1::<F>::zeros(h_dim);
    for t in (0..t_len).rev() {
        let z = cache.z.row(t);
        let r = cache.r.row(t);
        let n = cache.n.row(t);
        let hp = cache.h_prev.row(t);
        let total: Array1<F> = &dh.row(t) + &carry;

        let mut dn_pre = Array1::<F>::zeros(h_dim);
        let mut dz_pre = Array1::<F>::zeros(h_dim);
        let mut dh_prev = Array1::<F>::zeros(h_dim);
        for j in 0..h_dim {
            let dn = total[j] * (F::one() - z[j]);
            let dz = total[j] * (hp[j] - n[j]);
            dn_pre[j] = dn * (F::one() - n[j] * n[j]);
            dz_pre[j] = dz * z[j] * (F::one() - z[j]);
            dh_prev[j] = total[j] * z[j];
        }
        let d_rh = dn_pre.dot(&u_n_t);
        let mut dr_pre = Array1::<F>::zeros(h_dim);
        for j in 0..h_dim {
            let dr = d_rh[j] * hp[j];
            dr_pre[j] = dr * r[j] * (F::one() - r[j]);
            dh_prev[j] += d_rh[j] * r[j];
            rh[[t, j]] = r[j] * hp[j];
        }
        let mut row = dpre.row_mut(t);
        row.slice_mut(s![..h_dim]).assign(&dz_pre);
        row.slice_mut(s![h_dim..2 * h_dim]).assign(&dr_pre);
        row.slice_mut(s![2 * h_dim..]).assign(&dn_pre);
        let zr = dpre.slice(s![t, ..2 * h_dim]);
        dh_prev += &zr.dot(&u_zr_t);
        carry = dh_prev;
    }

    let mut d_rec = Array2::<F>::zeros((h_dim, 3 * h_dim));
    d_rec
        .slice_mut(s![.., ..2 * h_dim])
        .assign(&cache.h_prev.t().dot(&dpre.slice(s![.., ..2 * h_dim])));
    d_rec
        .slice_mut(s![.., 2 * h_dim..])
        .assign(&rh.t().dot(&dpre.slice(s![.., 2 * h_dim..])));
    GruGrads {
        dx: dpre.dot(&p.kernel.t()),
        kernel: cache.x.t().dot(&dpre),
        recurrent: d_rec,
        bias: dpre.sum_axis(Axis(0)),
    }
}

/// Reverses the row order.
pub(crate) fn reverse_rows<F: Scalar>(x: ArrayView2<F>) -> Array2<F> {
    x.slice(s![..;-1, ..]).to_owned()
}
