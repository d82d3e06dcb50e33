//! Derivative-free local minimizers on box-bounded domains.

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Nelder–Mead simplex minimization; iterates are projected onto
/// `[lower, upper]`. Returns the best point and its value.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    lower: &[f64],
    upper: &[f64],
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &mut Vec<f64>, evals: &mut usize| {
        project(x, lower, upper);
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut start = x0.to_vec();
    let v = eval(&mut start, &mut evals);
    simplex.push((start.clone(), v));
    for i in 0..n {
        let mut x = start.clone();
        x[i] += if x[i] + step <= upper[i] { step } else { -step };
        let v = eval(&mut x, &mut evals);
        simplex.push((x, v));
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if (worst - best).abs() <= 1e-10 * (best.abs() + 1e-10) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|s| s.0[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };

        let mut xr = along(-1.0);
        let fr = eval(&mut xr, &mut evals);
        if fr < simplex[0].1 {
            let mut xe = along(-2.0);
            let fe = eval(&mut xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (mut xc, fc) = if fr < worst {
                let mut xc = along(-0.5);
                let fc = eval(&mut xc, &mut evals);
                (xc, fc)
            } else {
                let mut xc = along(0.5);
                let fc = eval(&mut xc, &mut evals);
                (xc, fc)
            };
            if fc < fr.min(worst) {
                simplex[n] = (std::mem::take(&mut xc), fc);
            } else {
                let x_best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = x_best.iter().zip(&s.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let v = eval(&mut x, &mut evals);
                    *s = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// Compass (coordinate pattern) search minimizing `f` inside `[0, 1]^n`.
/// The step halves after each unsuccessful sweep until it drops below
/// `min_step`.
pub fn compass_search<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: f64,
    min_step: f64,
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut evals = 1;
    let mut step = step;
    while step >= min_step && evals < max_evals {
        let mut improved = false;
        'dims: for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] = (y[i] + dir * step).clamp(0.0, 1.0);
                if y[i] == x[i] {
                    continue;
                }
                let fy = f(&y);
                evals += 1;
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    continue 'dims;
                }
                if evals >= max_evals {
                    break 'dims;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let (x, v) = nelder_mead(rosen, &[-1.2, 1.0], 0.5, &[-5.0, -5.0], &[5.0, 5.0], 4000);
        assert!(v < 1e-8, "{v}");
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn nelder_mead_respects_bounds() {
        let (x, _) = nelder_mead(|x| x[0], &[0.5], 0.2, &[0.25], &[1.0], 200);
        assert_eq!(x[0], 0.25);
    }

    #[test]
    fn compass_finds_quadratic_min() {
        let (x, _) = compass_search(
            |x| (x[0] - 0.3).powi(2) + (x[1] - 0.8).powi(2),
            &[0.5, 0.5],
            0.1,
            1e-6,
            10_000,
        );
        assert!((x[0] - 0.3).abs() < 1e-5 && (x[1] - 0.8).abs() < 1e-5);
    }
}
