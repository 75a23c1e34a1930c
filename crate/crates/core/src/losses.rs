//! Objective terms for the critic and the generator.
//!
//! All functions take and return candle tensors so they stay differentiable;
//! scalar results are rank-0 tensors.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::layers::ensure_higher_order_grads;

/// Loss weights. `lambda_gp = 0` switches the gradient penalty off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Attribute classification weight in the critic objective.
    pub lambda_cls_d: f64,
    /// Attribute classification weight in the generator objective.
    pub lambda_cls_g: f64,
    /// Reconstruction weight in the generator objective.
    pub lambda_rec: f64,
    pub lambda_gp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cls_d: 3.0,
            lambda_cls_g: 10.0,
            lambda_rec: 100.0,
            lambda_gp: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_cls_d, self.lambda_cls_g, self.lambda_rec, self.lambda_gp];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(crate::Error::Config(format!(
                "loss weights must be finite and non-negative, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn gp_enabled(&self) -> bool {
        self.lambda_gp > 0.0
    }
}

fn check_scores(name: &str, t: &Tensor) -> Result<usize> {
    match t.dims() {
        [b] if *b > 0 => Ok(*b),
        d => Err(contract!("{name} must be a non-empty (B,) vector, got {d:?}")),
    }
}

/// Critic loss `mean(fake) - mean(real)`.
pub fn adv_loss_d(scores_real: &Tensor, scores_fake: &Tensor) -> Result<Tensor> {
    check_scores("real scores", scores_real)?;
    check_scores("fake scores", scores_fake)?;
    Ok((scores_fake.mean_all()? - scores_real.mean_all()?)?)
}

/// Generator adversarial loss `-mean(fake)`.
pub fn adv_loss_g(scores_fake: &Tensor) -> Result<Tensor> {
    check_scores("fake scores", scores_fake)?;
    Ok(scores_fake.mean_all()?.neg()?)
}

/// Sum over attributes of binary cross entropy on `sigmoid(logits)`,
/// averaged over the batch. Uses `max(x,0) - x*t + log(1 + exp(-|x|))`.
pub fn cls_loss(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    if logits.dims() != targets.dims() || logits.rank() != 2 || logits.dims()[0] == 0 {
        return Err(contract!(
            "logits {:?} and targets {:?} must share a non-empty (B, K) shape",
            logits.dims(),
            targets.dims()
        ));
    }
    let targets = targets.to_dtype(logits.dtype())?;
    let softplus = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    let per = ((logits.relu()? - (logits * &targets)?)? + softplus)?;
    Ok(per.sum(1)?.mean_all()?)
}

/// Mean absolute difference over every element.
pub fn rec_loss(x: &Tensor, x_rec: &Tensor) -> Result<Tensor> {
    if x.dims() != x_rec.dims() || x.elem_count() == 0 {
        return Err(contract!(
            "reconstruction shapes differ: {:?} vs {:?}",
            x.dims(),
            x_rec.dims()
        ));
    }
    let x_rec = x_rec.to_dtype(x.dtype())?;
    Ok((x - x_rec)?.abs()?.mean_all()?)
}

/// `mean((||grad_x critic(x_mix)||_2 - 1)^2)` over interpolates
/// `x_mix = t * real + (1 - t) * fake`, one mixing weight `t` per sample.
///
/// `mix` holds the B weights. `real` and `fake` are treated as constants;
/// the result is differentiable w.r.t. the critic's parameters.
pub fn gradient_penalty<F>(critic: F, real: &Tensor, fake: &Tensor, mix: &Tensor) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    ensure_higher_order_grads()?;
    if real.dims() != fake.dims() || real.rank() < 2 {
        return Err(contract!(
            "real {:?} and fake {:?} batches must share a (B, ...) shape",
            real.dims(),
            fake.dims()
        ));
    }
    let b = real.dims()[0];
    if mix.dims() != [b] {
        return Err(contract!("mix weights must be ({b},), got {:?}", mix.dims()));
    }
    let mut bshape = vec![b];
    bshape.resize(real.rank(), 1);
    let t = mix.to_dtype(real.dtype())?.reshape(bshape)?;
    let real = real.detach();
    let fake = fake.to_dtype(real.dtype())?.detach();
    let mixed = (real.broadcast_mul(&t)? + fake.broadcast_mul(&(1.0 - t)?)?)?;
    let mixed = candle_core::Var::from_tensor(&mixed)?;
    let scores = critic(mixed.as_tensor())?;
    let grads = scores.sum_all()?.backward()?;
    let sq_norm = match grads.get(mixed.as_tensor()) {
        Some(g) => g.sqr()?.flatten_from(1)?.sum(1)?,
        // the critic ignores its input
        None => Tensor::zeros(b, real.dtype(), real.device())?,
    };
    let norm = (sq_norm + 1e-12)?.sqrt()?;
    Ok((norm - 1.0)?.sqr()?.mean_all()?)
}

/// Critic loss terms for one step.
#[derive(Clone, Debug)]
pub struct DLossParts {
    pub adv: Tensor,
    pub cls: Tensor,
    /// `None` when the gradient penalty is switched off.
    pub gp: Option<Tensor>,
}

/// Generator loss terms for one step.
#[derive(Clone, Debug)]
pub struct GLossParts {
    pub adv: Tensor,
    pub cls: Tensor,
    pub rec: Tensor,
}

/// `adv + lambda_cls_d * cls (+ lambda_gp * gp)`
pub fn total_d(parts: &DLossParts, w: &LossWeights) -> Result<Tensor> {
    let mut total = (&parts.adv + (&parts.cls * w.lambda_cls_d)?)?;
    if let Some(gp) = &parts.gp {
        total = (total + (gp * w.lambda_gp)?)?;
    }
    Ok(total)
}

/// `adv + lambda_cls_g * cls + lambda_rec * rec`
pub fn total_g(parts: &GLossParts, w: &LossWeights) -> Result<Tensor> {
    Ok(((&parts.adv + (&parts.cls * w.lambda_cls_g)?)? + (&parts.rec * w.lambda_rec)?)?)
}
