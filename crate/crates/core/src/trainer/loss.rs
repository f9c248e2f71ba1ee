use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

/// Mean squared error.
pub fn mse_loss(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::shape("mse_loss", format!("{} predictions, {} targets", preds.len(), targets.len())));
    }
    if preds.is_empty() {
        return Err(Error::Empty("mse_loss"));
    }
    Ok(preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / preds.len() as f64)
}

pub fn dual_loss(l_mcs: f64, l_ged: f64) -> f64 {
    l_mcs + l_ged
}

/// `Σ_t ½(e^{-θ_t}·L_t + θ_t)` over the two tasks.
pub fn uncertainty_loss(l_mcs: f64, l_ged: f64, theta_mcs: f64, theta_ged: f64) -> f64 {
    0.5 * ((-theta_mcs).exp() * l_mcs + theta_mcs) + 0.5 * ((-theta_ged).exp() * l_ged + theta_ged)
}

pub(crate) fn mse_on_tape(tape: &mut Tape, preds: Var, targets: Var) -> Result<Var> {
    let d = tape.sub(preds, targets)?;
    let sq = tape.mul(d, d)?;
    tape.mean_all(sq)
}

pub(crate) fn uncertainty_term(tape: &mut Tape, loss: Var, theta: Var) -> Result<Var> {
    let w = tape.exp_neg(theta);
    let wl = tape.mul(w, loss)?;
    let s = tape.add(wl, theta)?;
    Ok(tape.scale(s, 0.5))
}
