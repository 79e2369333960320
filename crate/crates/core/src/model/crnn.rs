use std::collections::BTreeMap;

use ndarray::{concatenate, s, Array2, ArrayD, Axis};

use super::gru::{self, GruCache, GruParams};
use super::layers::{self, BnParams, BnStats, Grid};
use super::{ArchCache, CrnnConfig, ForwardOut, Init, Mode, ModelWeights, Scalar, TensorSpec};
use crate::error::Result;
use crate::par;

pub(crate) fn tensor_specs(c: &CrnnConfig) -> Vec<TensorSpec> {
    let k = c.kernel;
    let mut specs = Vec::new();
    let mut cin = 1;
    for b in 0..c.conv_blocks {
        let cout = c.channels[b];
        for l in 0..c.convs_per_block {
            specs.push(TensorSpec::param(
                format!("block{b}.conv{l}.kernel"),
                &[k, k, cin, cout],
                Init::Glorot {
                    fan_in: k * k * cin,
                    fan_out: k * k * cout,
                },
            ));
            specs.extend(TensorSpec::batch_norm(&format!("block{b}.bn{l}"), cout));
            cin = cout;
        }
    }
    let h = c.gru_hidden;
    for dir in ["fwd", "bwd"] {
        specs.push(TensorSpec::param(
            format!("gru.{dir}.kernel"),
            &[cin, 3 * h],
            Init::Glorot {
                fan_in: cin,
                fan_out: 3 * h,
            },
        ));
        specs.push(TensorSpec::param(
            format!("gru.{dir}.recurrent"),
            &[h, 3 * h],
            Init::Orthogonal { gates: 3 },
        ));
        specs.push(TensorSpec::param(format!("gru.{dir}.bias"), &[3 * h], Init::Zeros));
    }
    specs.push(TensorSpec::param(
        "head.kernel",
        &[2 * h, c.n_classes],
        Init::Glorot {
            fan_in: 2 * h,
            fan_out: c.n_classes,
        },
    ));
    specs.push(TensorSpec::param("head.bias", &[c.n_classes], Init::Zeros));
    specs
}

#[derive(Debug, Clone)]
pub(crate) struct ConvCache<F> {
    block: usize,
    layer: usize,
    /// Frequency bins at this layer's resolution.
    freq: usize,
    cin: usize,
    inputs: Vec<Array2<F>>,
    pre_bn: Vec<Array2<F>>,
    stats: BnStats<F>,
}

#[derive(Debug, Clone)]
pub(crate) struct CrnnCache<F> {
    times: Vec<usize>,
    convs: Vec<ConvCache<F>>,
    /// Frequency bins entering the final mean.
    final_freq: usize,
    gru_fwd: Vec<GruCache<F>>,
    gru_bwd: Vec<GruCache<F>>,
    /// Concatenated BiGRU outputs fed to the head.
    hidden: Vec<Array2<F>>,
}

fn bn_params<'a, F: Scalar>(w: &'a ModelWeights<F>, prefix: &str, eps: f64) -> Result<BnParams<'a, F>> {
    Ok(BnParams {
        gamma: w.vec(&format!("{prefix}.gamma"))?,
        beta: w.vec(&format!("{prefix}.beta"))?,
        running_mean: w.vec(&format!("{prefix}.running_mean"))?,
        running_var: w.vec(&format!("{prefix}.running_var"))?,
        eps,
    })
}

fn gru_params<'a, F: Scalar>(w: &'a ModelWeights<F>, dir: &str) -> Result<GruParams<'a, F>> {
    Ok(GruParams {
        kernel: w.mat(&format!("gru.{dir}.kernel"))?,
        recurrent: w.mat(&format!("gru.{dir}.recurrent"))?,
        bias: w.vec(&format!("gru.{dir}.bias"))?,
    })
}

pub(crate) fn forward<F: Scalar>(
    w: &ModelWeights<F>,
    c: &CrnnConfig,
    xs: &[Array2<F>],
    mode: Mode,
) -> Result<ForwardOut<F>> {
    let training = mode == Mode::Train;
    let n = xs.len();
    let times: Vec<usize> = xs.iter().map(|x| x.nrows()).collect();
    // [time, mel] row-major is already [time*freq, 1] channels-last.
    let mut cur: Vec<Array2<F>> = xs
        .iter()
        .map(|x| x.clone().into_shape_with_order((x.len(), 1)).expect("contiguous input"))
        .collect();
    let mut freq = c.n_mels;
    let mut cin = 1;
    let mut convs = Vec::new();
    let mut updates = Vec::new();

    for b in 0..c.conv_blocks {
        for l in 0..c.convs_per_block {
            let kern = w.mat(&format!("block{b}.conv{l}.kernel"))?;
            let pre: Vec<Array2<F>> = par::map_range(n, |i| {
                let g = Grid { time: times[i], freq };
                layers::im2col2d(cur[i].view(), g, c.kernel).dot(&kern)
            });
            let prefix = format!("block{b}.bn{l}");
            let bp = bn_params(w, &prefix, c.bn_epsilon)?;
            let (stats, update) = layers::bn_stats(&pre, &bp, training, &prefix, c.bn_momentum);
            updates.extend(update);
            let act = par::map(&pre, |p| layers::bn_relu_forward(p.view(), &stats, bp.gamma, bp.beta));
            let input = std::mem::replace(&mut cur, act);
            if training {
                convs.push(ConvCache {
                    block: b,
                    layer: l,
                    freq,
                    cin,
                    inputs: input,
                    pre_bn: pre,
                    stats,
                });
            }
            cin = c.channels[b];
        }
        cur = par::map_range(n, |i| {
            layers::freq_pool_forward(cur[i].view(), Grid { time: times[i], freq }, c.freq_pool)
        });
        freq /= c.freq_pool;
    }

    let seq: Vec<Array2<F>> =
        par::map_range(n, |i| layers::freq_mean_forward(cur[i].view(), Grid { time: times[i], freq }));
    drop(cur);
    let pf = gru_params(w, "fwd")?;
    let pb = gru_params(w, "bwd")?;
    let head_k = w.mat("head.kernel")?;
    let head_b = w.vec("head.bias")?;
    let per_sample = par::map(&seq, |x| {
        let (hf, cf) = gru::forward(&pf, x.view());
        let (hb, cb) = gru::forward(&pb, gru::reverse_rows(x.view()).view());
        let hb = gru::reverse_rows(hb.view());
        let hidden = concatenate(Axis(1), &[hf.view(), hb.view()]).expect("equal rows");
        let logits = layers::affine(hidden.view(), head_k, head_b);
        (logits, cf, cb, hidden)
    });

    let mut logits = Vec::with_capacity(n);
    let mut gru_fwd = Vec::new();
    let mut gru_bwd = Vec::new();
    let mut hidden = Vec::new();
    for (l, cf, cb, h) in per_sample {
        logits.push(l);
        if training {
            gru_fwd.push(cf);
            gru_bwd.push(cb);
            hidden.push(h);
        }
    }
    let cache = training.then(|| {
        ArchCache::Crnn(CrnnCache {
            times,
            convs,
            final_freq: freq,
            gru_fwd,
            gru_bwd,
            hidden,
        })
    });
    Ok(ForwardOut { logits, cache, updates })
}

pub(crate) fn backward<F: Scalar>(
    w: &ModelWeights<F>,
    c: &CrnnConfig,
    cache: &CrnnCache<F>,
    dlogits: &[Array2<F>],
) -> Result<BTreeMap<String, ArrayD<F>>> {
    let n = dlogits.len();
    let h = c.gru_hidden;
    let mut grads = BTreeMap::new();
    let head_k = w.mat("head.kernel")?;

    let dk = layers::sum_in_order(par::map_range(n, |i| cache.hidden[i].t().dot(&dlogits[i])));
    let db = layers::sum_in_order(par::map_range(n, |i| {
        dlogits[i].sum_axis(Axis(0)).insert_axis(Axis(0))
    }));
    grads.insert("head.kernel".to_string(), dk.into_dyn());
    grads.insert("head.bias".to_string(), db.index_axis_move(Axis(0), 0).into_dyn());

    let pf = gru_params(w, "fwd")?;
    let pb = gru_params(w, "bwd")?;
    let per_sample = par::map_range(n, |i| {
        let dhidden = dlogits[i].dot(&head_k.t());
        let gf = gru::backward(&pf, &cache.gru_fwd[i], dhidden.slice(s![.., ..h]));
        let dbwd = gru::reverse_rows(dhidden.slice(s![.., h..]));
        let gb = gru::backward(&pb, &cache.gru_bwd[i], dbwd.view());
        let dseq = &gf.dx + &gru::reverse_rows(gb.dx.view());
        (dseq, gf, gb)
    });
    let mut dseqs = Vec::with_capacity(n);
    let mut acc: Option<[Array2<F>; 6]> = None;
    for (dseq, gf, gb) in per_sample {
        dseqs.push(dseq);
        let parts = [
            gf.kernel,
            gf.recurrent,
            gf.bias.insert_axis(Axis(0)),
            gb.kernel,
            gb.recurrent,
            gb.bias.insert_axis(Axis(0)),
        ];
        match &mut acc {
            None => acc = Some(parts),
            Some(a) => {
                for (x, p) in a.iter_mut().zip(parts) {
                    *x += &p;
                }
            }
        }
    }
    let [fk, fr, fb, bk, br, bb] = acc.expect("non-empty batch");
    for (dir, k, r, b) in [("fwd", fk, fr, fb), ("bwd", bk, br, bb)] {
        grads.insert(format!("gru.{dir}.kernel"), k.into_dyn());
        grads.insert(format!("gru.{dir}.recurrent"), r.into_dyn());
        grads.insert(format!("gru.{dir}.bias"), b.index_axis_move(Axis(0), 0).into_dyn());
    }

    let times = &cache.times;
    let mut freq = cache.final_freq;
    let mut dcur: Vec<Array2<F>> = par::map_range(n, |i| {
        layers::freq_mean_backward(dseqs[i].view(), Grid { time: times[i], freq })
    });
    drop(dseqs);

    for conv in cache.convs.iter().rev() {
        if conv.layer + 1 == c.convs_per_block {
            // undo the pool that followed this block
            let fine = freq * c.freq_pool;
            dcur = par::map_range(n, |i| {
                layers::freq_pool_backward(dcur[i].view(), Grid { time: times[i], freq: fine }, c.freq_pool)
            });
            freq = fine;
        }
        debug_assert_eq!(conv.freq, freq);
        let prefix = format!("block{}.bn{}", conv.block, conv.layer);
        let gamma = w.vec(&format!("{prefix}.gamma"))?;
        let beta = w.vec(&format!("{prefix}.beta"))?;
        let (dpre, dgamma, dbeta) = layers::bn_relu_backward(&conv.pre_bn, &dcur, &conv.stats, gamma, beta);
        grads.insert(format!("{prefix}.gamma"), dgamma.into_dyn());
        grads.insert(format!("{prefix}.beta"), dbeta.into_dyn());

        let kname = format!("block{}.conv{}.kernel", conv.block, conv.layer);
        let kern = w.mat(&kname)?;
        let first = conv.block == 0 && conv.layer == 0;
        let parts = par::map_range(n, |i| {
            let g = Grid { time: times[i], freq: conv.freq };
            let cols = layers::im2col2d(conv.inputs[i].view(), g, c.kernel);
            let dk = cols.t().dot(&dpre[i]);
            let dx = (!first).then(|| {
                let dcols = dpre[i].dot(&kern.t());
                layers::col2im2d(dcols.view(), g, c.kernel, conv.cin)
            });
            (dk, dx)
        });
        let mut dks = Vec::with_capacity(n);
        let mut dxs = Vec::with_capacity(n);
        for (dk, dx) in parts {
            dks.push(dk);
            dxs.extend(dx);
        }
        let shape = w.tensor(&kname)?.raw_dim();
        let dk = layers::sum_in_order(dks)
            .into_shape_with_order(shape)
            .expect("kernel gradient shape");
        grads.insert(kname, dk);
        dcur = dxs;
    }
    Ok(grads)
}
