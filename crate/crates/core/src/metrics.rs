//! Distribution and classification metrics.
//!
//! [`cmd`] is recorded on a tape so it can serve as a training penalty;
//! [`linear_cka`] and [`mcc`] are plain evaluation functions.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

pub const SQRT_EPS: f64 = 1e-12;

/// Central moment discrepancy settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmdConfig {
    /// Highest moment order `K`.
    pub max_moment: u32,
    /// Width `|b - a|` of the support of the compared distributions.
    pub support_width: f64,
    /// Smoothing inside every norm, `‖v‖ = sqrt(Σ v² + eps)`.
    pub eps: f64,
}

impl Default for CmdConfig {
    fn default() -> Self {
        Self {
            max_moment: 5,
            support_width: 2.0,
            eps: SQRT_EPS,
        }
    }
}

impl CmdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_moment < 2 {
            return Err(Error::InvalidArgument(format!("CMD needs K >= 2, got {}", self.max_moment)));
        }
        if !(self.support_width > 0.0) {
            return Err(Error::InvalidArgument(format!("CMD support width {} must be positive", self.support_width)));
        }
        if self.eps < 0.0 {
            return Err(Error::InvalidArgument("CMD smoothing must be non-negative".into()));
        }
        Ok(())
    }
}

fn smooth_norm(tape: &mut Tape, v: Var, eps: f64) -> Result<Var> {
    let sq = tape.mul(v, v)?;
    let s = tape.sum(sq)?;
    tape.sqrt_eps(s, eps)
}

/// Central moment discrepancy between the row distributions of `xp` and `xq`.
pub fn cmd(tape: &mut Tape, xp: Var, xq: Var, cfg: &CmdConfig) -> Result<Var> {
    cfg.validate()?;
    if xp.rows() == 0 || xq.rows() == 0 {
        return Err(Error::InvalidArgument("CMD of an empty sample".into()));
    }
    if xp.cols() != xq.cols() {
        return Err(Error::shape("cmd", format!("{} vs {} columns", xp.cols(), xq.cols())));
    }
    let mp = tape.mean_rows(xp)?;
    let mq = tape.mean_rows(xq)?;
    let cp = tape.sub_row(xp, mp)?;
    let cq = tape.sub_row(xq, mq)?;

    let diff = tape.sub(mp, mq)?;
    let norm = smooth_norm(tape, diff, cfg.eps)?;
    let mut total = tape.scale(norm, 1.0 / cfg.support_width)?;
    for k in 2..=cfg.max_moment {
        let pk = tape.powi(cp, k)?;
        let qk = tape.powi(cq, k)?;
        let ck_p = tape.mean_rows(pk)?;
        let ck_q = tape.mean_rows(qk)?;
        let diff = tape.sub(ck_p, ck_q)?;
        let norm = smooth_norm(tape, diff, cfg.eps)?;
        let term = tape.scale(norm, cfg.support_width.powi(k as i32).recip())?;
        total = tape.add(total, term)?;
    }
    Ok(total)
}

/// Column-wise central moments of orders `2..=k` (biased estimators); entry
/// `i` of the result holds order `i + 2`.
pub fn central_moments(x: &[Vec<f64>], k: u32) -> Result<Vec<Vec<f64>>> {
    let Some(first) = x.first() else {
        return Err(Error::InvalidArgument("central moments of an empty sample".into()));
    };
    let d = first.len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::shape("central_moments", "ragged rows"));
    }
    let n = x.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    Ok((2..=k)
        .map(|order| (0..d).map(|j| x.iter().map(|r| (r[j] - mean[j]).powi(order as i32)).sum::<f64>() / n).collect())
        .collect())
}

fn centered_gram_cross(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<f64> {
    // Aᵀ B for column-centered A and B, flattened row-major.
    let (da, db) = (a[0].len(), b[0].len());
    let mut out = vec![0.0; da * db];
    for (ra, rb) in a.iter().zip(b) {
        for i in 0..da {
            for j in 0..db {
                out[i * db + j] += ra[i] * rb[j];
            }
        }
    }
    out
}

fn center(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as f64;
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    x.iter().map(|r| r.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect()
}

fn frob_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Linear centered kernel alignment between two representations of the same
/// `m` samples (rows). Returns 0 with a warning when either representation
/// is constant.
pub fn linear_cka(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("linear_cka", format!("{} vs {} rows", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument("linear CKA needs at least two samples".into()));
    }
    for x in [a, b] {
        let d = x[0].len();
        if x.iter().any(|r| r.len() != d) {
            return Err(Error::shape("linear_cka", "ragged rows"));
        }
    }
    let (ac, bc) = (center(a), center(b));
    let ab = frob_sq(&centered_gram_cross(&bc, &ac));
    let aa = frob_sq(&centered_gram_cross(&ac, &ac)).sqrt();
    let bb = frob_sq(&centered_gram_cross(&bc, &bc)).sqrt();
    if aa == 0.0 || bb == 0.0 {
        log::warn!("linear CKA of a constant representation; returning 0");
        return Ok(0.0);
    }
    Ok((ab / (aa * bb)).clamp(0.0, 1.0))
}

/// Binary confusion counts with class 1 as positive.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Confusion {
    pub fn from_labels(predictions: &[usize], labels: &[usize]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::shape("mcc", format!("{} predictions for {} labels", predictions.len(), labels.len())));
        }
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p, y) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                _ => return Err(Error::InvalidArgument(format!("non-binary class pair ({p}, {y})"))),
            }
        }
        Ok(c)
    }

    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (self.tp as f64, self.tn as f64, self.fp as f64, self.fn_ as f64);
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return 0.0;
        }
        (tp * tn - fp * fn_) / denom.sqrt()
    }
}

/// Matthews correlation coefficient of binary predictions.
pub fn mcc(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    Ok(Confusion::from_labels(predictions, labels)?.mcc())
}
