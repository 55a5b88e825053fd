//! The single-stage Gibbs minimizer and log-space helpers.

use crate::error::Error;

/// `log Σ exp(x_i)`, stable for large magnitudes; `-inf` for an empty or
/// all-`-inf` input.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Writes `prior(u) exp(-cost(u)) / Σ` into `out`, computed in log-space.
/// Returns the log partition function. Actions with zero prior get zero.
pub fn gibbs_row(prior: &[f64], cost: &[f64], out: &mut [f64]) -> f64 {
    debug_assert_eq!(prior.len(), cost.len());
    let logits = prior.iter().zip(cost).map(|(&p, &c)| if p > 0.0 { p.ln() - c } else { f64::NEG_INFINITY });
    let log_z = log_sum_exp(logits.clone());
    for (o, l) in out.iter_mut().zip(logits) {
        *o = if l == f64::NEG_INFINITY { 0.0 } else { (l - log_z).exp() };
    }
    log_z
}

/// Minimizer of `Σ_x μ(x) Σ_u q(u|x) (log q(u|x)/ν(u) + c(x,u))` for a
/// state split into `(expensive, free)` with a prior `ν` per free value.
///
/// `mu[e][f]`, `nu[f][u]`, `cost[e][f][u]`; returns `q[e][f][u]`.
/// Contexts with `μ = 0` still receive the Gibbs row.
pub fn static_gibbs(
    mu: &[Vec<f64>],
    nu: &[Vec<f64>],
    cost: &[Vec<Vec<f64>>],
) -> Result<Vec<Vec<Vec<f64>>>, Error> {
    let n_free = nu.len();
    let n_actions = nu.first().map_or(0, Vec::len);
    if n_actions == 0 || mu.len() != cost.len() {
        return Err(Error::Dimension("static problem needs actions and matching μ/c tables".into()));
    }
    let mut total = 0.0;
    for (e, row) in mu.iter().enumerate() {
        if row.len() != n_free || cost[e].len() != n_free {
            return Err(Error::Dimension(format!("expensive value {e} has mismatched free dimension")));
        }
        if row.iter().any(|p| *p < 0.0) {
            return Err(Error::Model("μ has a negative entry".into()));
        }
        total += row.iter().sum::<f64>();
    }
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::Model(format!("μ sums to {total}")));
    }
    for (f, prior) in nu.iter().enumerate() {
        let s: f64 = prior.iter().sum();
        if prior.len() != n_actions || prior.iter().any(|p| *p < 0.0) || (s - 1.0).abs() > 1e-10 {
            return Err(Error::Model(format!("ν row for free value {f} is not a distribution")));
        }
    }
    Ok(cost
        .iter()
        .map(|per_free| {
            per_free
                .iter()
                .enumerate()
                .map(|(f, c)| {
                    let mut q = vec![0.0; n_actions];
                    gibbs_row(&nu[f], c, &mut q);
                    q
                })
                .collect()
        })
        .collect())
}
