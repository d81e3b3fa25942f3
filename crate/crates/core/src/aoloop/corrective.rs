use crate::error::{invalid, Result};
use crate::geometry::MisRegistration;

/// Lower bound on the fitted convergence rate (time constant under 25 iterations).
pub const MIN_RATE: f64 = 0.04;

/// Moves the registration against the estimated shift: `δ ← δ - gain·δ̂`.
/// Clocking and magnification are untouched.
pub fn corrective_loop_step(
    current: &MisRegistration,
    estimate: [f64; 2],
    gain: f64,
) -> MisRegistration {
    current.with_shift([
        current.shift_x - gain * estimate[0],
        current.shift_y - gain * estimate[1],
    ])
}

/// Outcome of a simplex minimisation.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder–Mead minimisation with reflection 1, expansion 2, contraction ½ and shrink ½.
///
/// Stops when both the spread of simplex values and the simplex diameter
/// fall under the tolerances, or after `max_iter` iterations.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    max_iter: usize,
    f_tol: f64,
    x_tol: f64,
) -> SimplexResult {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();
        let spread = vals[n] - vals[0];
        let diameter = pts[1..]
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&pts[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= f_tol * (1.0 + vals[0].abs()) && diameter <= x_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + t * (pts[n][j] - centroid[j]))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = (0..n)
                        .map(|j| pts[0][j] + 0.5 * (pts[i][j] - pts[0][j]))
                        .collect();
                    vals[i] = f(&p);
                    pts[i] = p;
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]))
        .expect("non-empty simplex");
    SimplexResult {
        x: pts[best].clone(),
        value: vals[best],
        iterations,
        converged,
    }
}

/// Exponential saturation `asymptote·(1 - exp(-rate·(i - offset)))` fitted to a series.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentialFit {
    pub asymptote: f64,
    pub rate: f64,
    pub offset: f64,
    pub rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ExponentialFit {
    pub fn model(&self, i: f64) -> f64 {
        exp_model(self.asymptote, self.rate, self.offset, i)
    }
}

fn exp_model(a: f64, rate: f64, i0: f64, i: f64) -> f64 {
    a * (1.0 - (-rate * (i - i0)).exp())
}

/// Least-squares fit of [`ExponentialFit`] to `series[i]` at iteration `i`,
/// with the rate held above [`MIN_RATE`].
pub fn fit_convergence_exponential(series: &[f64]) -> Result<ExponentialFit> {
    if series.len() < 8 {
        return Err(invalid(format!(
            "need at least 8 iterations, got {}",
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(invalid("series contains non-finite values"));
    }
    let n = series.len() as f64;
    let rms = |p: &[f64]| {
        let rate = MIN_RATE + p[1].exp();
        let ss: f64 = series
            .iter()
            .enumerate()
            .map(|(i, &y)| (exp_model(p[0], rate, p[2], i as f64) - y).powi(2))
            .sum();
        (ss / n).sqrt()
    };
    let tail = &series[series.len() * 3 / 4..];
    let a0 = tail.iter().sum::<f64>() / tail.len() as f64;
    let scale = series.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut x = vec![a0, (0.2f64 - MIN_RATE).ln(), 0.0];
    let mut step = vec![0.2 * scale, 0.5, 1.0];
    let mut total = 0;
    let mut result = None;
    for _ in 0..4 {
        let r = nelder_mead(rms, &x, &step, 2000, 1e-14, 1e-10 * scale.max(1.0));
        total += r.iterations;
        x = r.x.clone();
        step = vec![0.05 * scale, 0.2, 0.5];
        let done = r.converged;
        result = Some(r);
        if done && total > 0 {
            break;
        }
    }
    let r = result.expect("at least one pass");
    Ok(ExponentialFit {
        asymptote: r.x[0],
        rate: MIN_RATE + r.x[1].exp(),
        offset: r.x[2],
        rms: r.value,
        iterations: total,
        converged: r.converged,
    })
}
