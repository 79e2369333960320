use std::collections::BTreeMap;

use ndarray::{ArrayD, Zip};

use crate::error::{Error, Result};
use crate::model::{Gradients, ModelWeights, Scalar};

/// Bias-corrected Adam moments, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: BTreeMap<String, ArrayD<F>>,
    pub v: BTreeMap<String, ArrayD<F>>,
}

impl<F: Scalar> Default for AdamState<F> {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }
}

impl<F: Scalar> AdamState<F> {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One Adam update. Tensors without a gradient entry are left untouched;
/// a zero gradient on a fresh state leaves its tensor bit-identical.
pub fn adam_step<F: Scalar>(
    w: &mut ModelWeights<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::InvalidParam(format!("learning rate must be positive, got {lr}")));
    }
    for (name, g) in &grads.tensors {
        let p = w
            .params
            .get(name)
            .ok_or_else(|| Error::ShapeMismatch(format!("gradient for unknown tensor {name}")))?;
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{name}: gradient {:?} vs parameter {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let f = |x: f64| F::from_f64(x).unwrap();
    let (fb1, fb2, f1b1, f1b2) = (f(b1), f(b2), f(1.0 - b1), f(1.0 - b2));
    let step_size = f(lr / c1);
    let inv_sqrt_c2 = f(1.0 / c2.sqrt());
    let eps = f(state.eps);
    for (name, g) in &grads.tensors {
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| ArrayD::zeros(g.raw_dim()));
        let p = w.params.get_mut(name).expect("checked above");
        Zip::from(p).and(m).and(v).and(g).for_each(|p, m, v, &g| {
            *m = fb1 * *m + f1b1 * g;
            *v = fb2 * *v + f1b2 * g * g;
            let m_hat_step = step_size * *m;
            if m_hat_step != F::zero() {
                *p -= m_hat_step / ((*v).sqrt() * inv_sqrt_c2 + eps);
            }
        });
    }
    w.touch();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_weights, TcnConfig};

    fn tiny() -> ModelWeights<f64> {
        init_weights(
            TcnConfig {
                n_mels: 4,
                n_filters: 2,
                dilations: vec![1],
                ..TcnConfig::default()
            },
            0,
        )
        .unwrap()
    }

    fn grads_like(w: &ModelWeights<f64>, v: f64) -> Gradients<f64> {
        Gradients {
            tensors: w
                .params
                .iter()
                .map(|(k, t)| (k.clone(), ArrayD::from_elem(t.raw_dim(), v)))
                .collect(),
        }
    }

    #[test]
    fn zero_gradients_leave_weights_unchanged() {
        let mut w = tiny();
        let before = w.clone();
        let mut st = AdamState::new();
        let g = grads_like(&w, 0.0);
        adam_step(&mut w, &g, &mut st, 1e-3).unwrap();
        assert_eq!(w, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = tiny();
        let before = w.params["head.bias"].clone();
        let mut st = AdamState::new();
        let g = grads_like(&w, 1.0);
        adam_step(&mut w, &g, &mut st, 1e-4).unwrap();
        for (a, b) in w.params["head.bias"].iter().zip(before.iter()) {
            // -lr * 1 / (1 + 1e-8)
            assert!((a - b + 1e-4).abs() < 1e-11);
        }
    }

    #[test]
    fn matches_reference_recurrence_over_steps() {
        let mut w = tiny();
        let mut st = AdamState::new();
        let gs = [0.5, -0.25, 1.0, 0.0, 2.0];
        let x0 = w.params["head.bias"][[0]];
        let (mut x, mut m, mut v) = (x0, 0.0f64, 0.0f64);
        for (t, &g) in gs.iter().enumerate() {
            let grads = grads_like(&w, g);
            adam_step(&mut w, &grads, &mut st, 0.01).unwrap();
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vh = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            x -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((w.params["head.bias"][[0]] - x).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let mut w = tiny();
        let mut st = AdamState::new();
        let mut g = grads_like(&w, 1.0);
        g.tensors.insert("head.bias".into(), ArrayD::zeros(ndarray::IxDyn(&[3])));
        assert!(matches!(adam_step(&mut w, &g, &mut st, 1e-3), Err(Error::ShapeMismatch(_))));
        let mut g = grads_like(&w, 1.0);
        g.tensors.insert("nope".into(), ArrayD::zeros(ndarray::IxDyn(&[1])));
        assert!(adam_step(&mut w, &g, &mut st, 1e-3).is_err());
        let g = grads_like(&w, 1.0);
        assert!(adam_step(&mut w, &g, &mut st, 0.0).is_err());
    }
}
