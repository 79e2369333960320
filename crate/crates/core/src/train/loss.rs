//! Binary cross-entropy and asymmetric focal loss over frame posteriors.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{ActivityMatrix, Task, N_CLASSES};

/// Posteriors are clipped to `[P_CLIP, 1 - P_CLIP]` inside the logarithms.
pub const P_CLIP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LossKind {
    Bce,
    /// `gamma` down-weights easy positives, `zeta` easy negatives.
    Afl { gamma: f64, zeta: f64 },
}

impl LossKind {
    pub fn exponents(&self) -> (f64, f64) {
        match *self {
            LossKind::Bce => (0.0, 0.0),
            LossKind::Afl { gamma, zeta } => (gamma, zeta),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (g, z) = self.exponents();
        for v in [g, z] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::NegativeExponent(v));
            }
        }
        Ok(())
    }
}

/// Which `(frame, class)` cells count towards the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossMask {
    /// `false` for padded frames.
    pub frames: Vec<bool>,
    pub classes: [bool; N_CLASSES],
}

impl LossMask {
    pub fn all(n_frames: usize) -> Self {
        Self {
            frames: vec![true; n_frames],
            classes: [true; N_CLASSES],
        }
    }

    pub fn for_task(n_frames: usize, task: Task) -> Self {
        Self {
            frames: vec![true; n_frames],
            classes: task.class_mask(),
        }
    }

    pub fn with_valid_frames(mut self, valid: usize) -> Self {
        for (i, f) in self.frames.iter_mut().enumerate() {
            *f = *f && i < valid;
        }
        self
    }

    pub fn active_cells(&self) -> usize {
        self.frames.iter().filter(|&&f| f).count() * self.classes.iter().filter(|&&c| c).count()
    }
}

fn pow0(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

/// `e * x^(e-1)`, defined as 0 when `e = 0`.
fn dpow(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        0.0
    } else {
        e * x.powf(e - 1.0)
    }
}

/// Per-cell loss and `dloss/dp` for target `y`.
pub fn cell_loss(kind: LossKind, p: f64, y: f64) -> (f64, f64) {
    let (g, z) = kind.exponents();
    let p = p.clamp(P_CLIP, 1.0 - P_CLIP);
    let q = 1.0 - p;
    let (lp, lq) = (p.ln(), q.ln());
    let loss = -(pow0(q, g) * y * lp + pow0(p, z) * (1.0 - y) * lq);
    let grad = -(y * (-dpow(q, g) * lp + pow0(q, g) / p) + (1.0 - y) * (dpow(p, z) * lq - pow0(p, z) / q));
    (loss, grad)
}

fn check(p: &Array2<f64>, y: &ActivityMatrix, mask: &LossMask) -> Result<()> {
    if p.dim() != y.values.dim() || p.nrows() != mask.frames.len() || p.ncols() != N_CLASSES {
        return Err(Error::ShapeMismatch(format!(
            "posteriors {:?}, targets {:?}, mask {} frames",
            p.dim(),
            y.values.dim(),
            mask.frames.len()
        )));
    }
    Ok(())
}

/// Sum of cell losses, the gradient of that sum, and the number of cells.
pub fn loss_terms(
    kind: LossKind,
    p: &Array2<f64>,
    y: &ActivityMatrix,
    mask: &LossMask,
) -> Result<(f64, Array2<f64>, usize)> {
    kind.validate()?;
    check(p, y, mask)?;
    let mut grad = Array2::<f64>::zeros(p.dim());
    let mut total = 0.0;
    let mut cells = 0;
    for (t, &frame_on) in mask.frames.iter().enumerate() {
        if !frame_on {
            continue;
        }
        for (c, &class_on) in mask.classes.iter().enumerate() {
            if !class_on {
                continue;
            }
            let (l, g) = cell_loss(kind, p[[t, c]], y.values[[t, c]] as f64);
            total += l;
            grad[[t, c]] = g;
            cells += 1;
        }
    }
    Ok((total, grad, cells))
}

/// Mean loss over unmasked cells and its gradient. A fully masked input
/// has zero loss and zero gradient.
pub fn loss_and_grad(
    kind: LossKind,
    p: &Array2<f64>,
    y: &ActivityMatrix,
    mask: &LossMask,
) -> Result<(f64, Array2<f64>)> {
    let (total, mut grad, cells) = loss_terms(kind, p, y, mask)?;
    if cells == 0 {
        return Ok((0.0, grad));
    }
    let inv = 1.0 / cells as f64;
    grad.mapv_inplace(|g| g * inv);
    Ok((total * inv, grad))
}

/// Mean over every unmasked cell in the batch; gradients are scaled to match.
pub fn batch_loss_and_grad(
    kind: LossKind,
    ps: &[Array2<f64>],
    ys: &[ActivityMatrix],
    masks: &[LossMask],
) -> Result<(f64, Vec<Array2<f64>>)> {
    if ps.len() != ys.len() || ps.len() != masks.len() {
        return Err(Error::ShapeMismatch("batch lengths differ".into()));
    }
    let mut total = 0.0;
    let mut cells = 0;
    let mut grads = Vec::with_capacity(ps.len());
    for ((p, y), m) in ps.iter().zip(ys).zip(masks) {
        let (t, g, c) = loss_terms(kind, p, y, m)?;
        total += t;
        cells += c;
        grads.push(g);
    }
    if cells == 0 {
        return Ok((0.0, grads));
    }
    let inv = 1.0 / cells as f64;
    for g in &mut grads {
        g.mapv_inplace(|v| v * inv);
    }
    Ok((total * inv, grads))
}

pub fn bce(p: &Array2<f64>, y: &ActivityMatrix, mask: &LossMask) -> Result<(f64, Array2<f64>)> {
    loss_and_grad(LossKind::Bce, p, y, mask)
}

pub fn asymmetric_focal(
    p: &Array2<f64>,
    y: &ActivityMatrix,
    mask: &LossMask,
    gamma: f64,
    zeta: f64,
) -> Result<(f64, Array2<f64>)> {
    loss_and_grad(LossKind::Afl { gamma, zeta }, p, y, mask)
}

/// Elementwise loss surface, handy for inspection and plotting.
pub fn loss_map(kind: LossKind, p: &Array2<f64>, y: &ActivityMatrix) -> Array2<f64> {
    let mut out = Array2::zeros(p.dim());
    Zip::from(&mut out)
        .and(p)
        .and(&y.values)
        .for_each(|o, &p, &y| *o = cell_loss(kind, p, y as f64).0);
    out
}
