use std::collections::BTreeMap;

use ndarray::{Array2, ArrayD, Axis};

use super::layers::{self, BnParams, BnStats};
use super::{ArchCache, ForwardOut, Init, Mode, ModelWeights, Scalar, TcnConfig, TensorSpec};
use crate::error::Result;
use crate::par;

pub(crate) fn tensor_specs(c: &TcnConfig) -> Vec<TensorSpec> {
    let f = c.n_filters;
    let k = c.kernel;
    let mut specs = vec![
        TensorSpec::param(
            "input.kernel",
            &[c.n_mels, f],
            Init::Glorot {
                fan_in: c.n_mels,
                fan_out: f,
            },
        ),
        TensorSpec::param("input.bias", &[f], Init::Zeros),
    ];
    for i in 0..c.dilations.len() {
        specs.push(TensorSpec::param(
            format!("tcn{i}.conv.kernel"),
            &[k, f, f],
            Init::Glorot {
                fan_in: k * f,
                fan_out: k * f,
            },
        ));
        specs.extend(TensorSpec::batch_norm(&format!("tcn{i}.bn"), f));
        specs.push(TensorSpec::param(
            format!("tcn{i}.pointwise.kernel"),
            &[f, f],
            Init::Glorot { fan_in: f, fan_out: f },
        ));
        specs.push(TensorSpec::param(format!("tcn{i}.pointwise.bias"), &[f], Init::Zeros));
    }
    specs.push(TensorSpec::param(
        "head.kernel",
        &[f, c.n_classes],
        Init::Glorot {
            fan_in: f,
            fan_out: c.n_classes,
        },
    ));
    specs.push(TensorSpec::param("head.bias", &[c.n_classes], Init::Zeros));
    specs
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache<F> {
    inputs: Vec<Array2<F>>,
    pre_bn: Vec<Array2<F>>,
    act: Vec<Array2<F>>,
    stats: BnStats<F>,
}

#[derive(Debug, Clone)]
pub(crate) struct TcnCache<F> {
    inputs: Vec<Array2<F>>,
    blocks: Vec<BlockCache<F>>,
    last: Vec<Array2<F>>,
}

pub(crate) fn forward<F: Scalar>(
    w: &ModelWeights<F>,
    c: &TcnConfig,
    xs: &[Array2<F>],
    mode: Mode,
) -> Result<ForwardOut<F>> {
    let training = mode == Mode::Train;
    let (ik, ib) = (w.mat("input.kernel")?, w.vec("input.bias")?);
    let mut cur = par::map(xs, |x| layers::affine(x.view(), ik, ib));
    let mut blocks = Vec::new();
    let mut updates = Vec::new();
    for (i, &d) in c.dilations.iter().enumerate() {
        let kern = w.mat(&format!("tcn{i}.conv.kernel"))?;
        let pre = par::map(&cur, |h| layers::im2col1d(h.view(), c.kernel, d).dot(&kern));
        let prefix = format!("tcn{i}.bn");
        let bp = BnParams {
            gamma: w.vec(&format!("{prefix}.gamma"))?,
            beta: w.vec(&format!("{prefix}.beta"))?,
            running_mean: w.vec(&format!("{prefix}.running_mean"))?,
            running_var: w.vec(&format!("{prefix}.running_var"))?,
            eps: c.bn_epsilon,
        };
        let (stats, update) = layers::bn_stats(&pre, &bp, training, &prefix, c.bn_momentum);
        updates.extend(update);
        let act = par::map(&pre, |p| layers::bn_relu_forward(p.view(), &stats, bp.gamma, bp.beta));
        let (pk, pb) = (
            w.mat(&format!("tcn{i}.pointwise.kernel"))?,
            w.vec(&format!("tcn{i}.pointwise.bias"))?,
        );
        let next = par::map_range(cur.len(), |j| &cur[j] + &layers::affine(act[j].view(), pk, pb));
        let input = std::mem::replace(&mut cur, next);
        if training {
            blocks.push(BlockCache {
                inputs: input,
                pre_bn: pre,
                act,
                stats,
            });
        }
    }
    let (hk, hb) = (w.mat("head.kernel")?, w.vec("head.bias")?);
    let logits = par::map(&cur, |h| layers::affine(h.view(), hk, hb));
    let cache = training.then(|| {
        ArchCache::Tcn(TcnCache {
            inputs: xs.to_vec(),
            blocks,
            last: cur,
        })
    });
    Ok(ForwardOut { logits, cache, updates })
}

fn dense_grads<F: Scalar>(xs: &[Array2<F>], dys: &[Array2<F>]) -> (ArrayD<F>, ArrayD<F>) {
    let n = xs.len();
    let dk = layers::sum_in_order(par::map_range(n, |i| xs[i].t().dot(&dys[i])));
    let db = layers::sum_in_order(par::map_range(n, |i| dys[i].sum_axis(Axis(0)).insert_axis(Axis(0))));
    (dk.into_dyn(), db.index_axis_move(Axis(0), 0).into_dyn())
}

pub(crate) fn backward<F: Scalar>(
    w: &ModelWeights<F>,
    c: &TcnConfig,
    cache: &TcnCache<F>,
    dlogits: &[Array2<F>],
) -> Result<BTreeMap<String, ArrayD<F>>> {
    let n = dlogits.len();
    let mut grads = BTreeMap::new();
    let (dk, db) = dense_grads(&cache.last, dlogits);
    grads.insert("head.kernel".to_string(), dk);
    grads.insert("head.bias".to_string(), db);
    let hk = w.mat("head.kernel")?;
    let mut dh: Vec<Array2<F>> = par::map(dlogits, |d| d.dot(&hk.t()));

    for (i, blk) in cache.blocks.iter().enumerate().rev() {
        let d = c.dilations[i];
        let (dpk, dpb) = dense_grads(&blk.act, &dh);
        grads.insert(format!("tcn{i}.pointwise.kernel"), dpk);
        grads.insert(format!("tcn{i}.pointwise.bias"), dpb);
        let pk = w.mat(&format!("tcn{i}.pointwise.kernel"))?;
        let dact = par::map(&dh, |g| g.dot(&pk.t()));

        let gamma = w.vec(&format!("tcn{i}.bn.gamma"))?;
        let beta = w.vec(&format!("tcn{i}.bn.beta"))?;
        let (dpre, dgamma, dbeta) = layers::bn_relu_backward(&blk.pre_bn, &dact, &blk.stats, gamma, beta);
        grads.insert(format!("tcn{i}.bn.gamma"), dgamma.into_dyn());
        grads.insert(format!("tcn{i}.bn.beta"), dbeta.into_dyn());

        let kname = format!("tcn{i}.conv.kernel");
        let kern = w.mat(&kname)?;
        let parts = par::map_range(n, |j| {
            let cols = layers::im2col1d(blk.inputs[j].view(), c.kernel, d);
            let dk = cols.t().dot(&dpre[j]);
            let dcols = dpre[j].dot(&kern.t());
            // residual path plus the convolution path
            let dx = &dh[j] + &layers::col2im1d(dcols.view(), c.kernel, d, c.n_filters);
            (dk, dx)
        });
        let (dks, dxs): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
        let shape = w.tensor(&kname)?.raw_dim();
        grads.insert(
            kname,
            layers::sum_in_order(dks)
                .into_shape_with_order(shape)
                .expect("kernel gradient shape"),
        );
        dh = dxs;
    }
    let (dik, dib) = dense_grads(&cache.inputs, &dh);
    grads.insert("input.kernel".to_string(), dik);
    grads.insert("input.bias".to_string(), dib);
    Ok(grads)
}
