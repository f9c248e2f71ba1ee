//! Central finite-difference check of tape gradients.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Points closer than this to a ReLU kink or min/max tie are not compared.
pub const KINK_MARGIN: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradCheckStatus {
    Passed,
    Failed,
    /// The point sits on (or within `KINK_MARGIN` of) a nonsmooth point.
    SkippedNonsmooth,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub status: GradCheckStatus,
    pub max_rel_error: f64,
    /// (input, flat index) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.status == GradCheckStatus::Passed
    }
}

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-3)
}

fn eval<F>(f: &F, xs: &[Tensor]) -> Result<(Tape, Vec<Var>, Var)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).len() != 1 {
        return Err(Error::shape("grad_check", format!("output shape {:?}", tape.shape(out))));
    }
    Ok((tape, vars, out))
}

/// Checks `f` at `x0` against `(f(x+h) - f(x-h)) / 2h` coordinate by coordinate.
pub fn grad_check<F>(f: F, x0: &Tensor, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|t, v| f(t, v[0]), std::slice::from_ref(x0), h, tol)
}

/// Like [`grad_check`] over several inputs at once.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (tape, vars, out) = eval(&f, xs)?;
    let coordinates = xs.iter().map(Tensor::len).sum();
    if tape.kink_gap() < KINK_MARGIN {
        return Ok(GradCheckReport {
            status: GradCheckStatus::SkippedNonsmooth,
            max_rel_error: 0.0,
            worst: None,
            coordinates,
        });
    }
    let grads = tape.backward(out)?;
    let mut max_rel = 0.0;
    let mut worst = None;
    let mut probe = xs.to_vec();
    for (i, &v) in vars.iter().enumerate() {
        let analytic = grads.wrt(v);
        for j in 0..xs[i].len() {
            let orig = xs[i].data()[j];
            probe[i].data_mut()[j] = orig + h;
            let (tp, _, op) = eval(&f, &probe)?;
            probe[i].data_mut()[j] = orig - h;
            let (tm, _, om) = eval(&f, &probe)?;
            probe[i].data_mut()[j] = orig;
            if tp.kink_gap() < KINK_MARGIN || tm.kink_gap() < KINK_MARGIN {
                return Ok(GradCheckReport {
                    status: GradCheckStatus::SkippedNonsmooth,
                    max_rel_error: max_rel,
                    worst,
                    coordinates,
                });
            }
            let numeric = (tp.value(op).item() - tm.value(om).item()) / (2.0 * h);
            let e = rel_error(analytic.data()[j], numeric);
            if e > max_rel || worst.is_none() {
                max_rel = e;
                worst = Some((i, j));
            }
        }
    }
    Ok(GradCheckReport {
        status: if max_rel <= tol { GradCheckStatus::Passed } else { GradCheckStatus::Failed },
        max_rel_error: max_rel,
        worst,
        coordinates,
    })
}
