//! Derivative-free simplex minimization for the low-dimensional
//! parameter fits.

use crate::scalar::{cvt, Real};

/// Outcome of a simplex run.
#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub f: T,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    pub f_tol: f64,
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            f_tol: 1e-12,
            x_tol: 1e-10,
        }
    }
}

/// Standard Nelder-Mead with reflection 1, expansion 2, contraction 0.5,
/// shrink 0.5. The initial simplex offsets `x0` by `scale` along each
/// axis. Converges when the simplex collapses in both value and extent.
pub fn nelder_mead<T: Real>(
    mut f: impl FnMut(&[T]) -> T,
    x0: &[T],
    scale: &[T],
    opts: NelderMeadOptions,
) -> Minimum<T> {
    assert_eq!(x0.len(), scale.len());
    let dim = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[T], evals: &mut usize| -> T {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<T>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for i in 0..dim {
        let mut v = x0.to_vec();
        v[i] += scale[i];
        simplex.push(v);
    }
    let mut values: Vec<T> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let alpha = T::one();
    let gamma = cvt::<T>(2.0);
    let rho = cvt::<T>(0.5);
    let sigma = cvt::<T>(0.5);
    let f_tol = cvt::<T>(opts.f_tol);
    let x_tol = cvt::<T>(opts.x_tol);

    loop {
        // Order ascending by value.
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
        let best = order[0];
        let worst = order[dim];
        let second_worst = order[dim - 1];

        let f_spread = values[worst] - values[best];
        let mut x_spread = T::zero();
        for i in 0..=dim {
            for d in 0..dim {
                x_spread = x_spread.max((simplex[i][d] - simplex[best][d]).abs());
            }
        }
        if f_spread <= f_tol * (T::one() + values[best].abs()) || x_spread <= x_tol {
            return Minimum {
                x: simplex[best].clone(),
                f: values[best],
                evals,
                converged: true,
            };
        }
        if evals >= opts.max_evals {
            return Minimum {
                x: simplex[best].clone(),
                f: values[best],
                evals,
                converged: false,
            };
        }

        // Centroid of all but the worst vertex.
        let mut centroid = vec![T::zero(); dim];
        for &i in order.iter().take(dim) {
            for d in 0..dim {
                centroid[d] += simplex[i][d];
            }
        }
        let inv = T::one() / cvt::<T>(dim as f64);
        for c in centroid.iter_mut() {
            *c *= inv;
        }

        let blend = |from: &[T], toward: &[T], t: T| -> Vec<T> {
            from.iter()
                .zip(toward)
                .map(|(&c, &w)| c + t * (c - w))
                .collect()
        };

        let reflected = blend(&centroid, &simplex[worst], alpha);
        let f_reflected = eval(&reflected, &mut evals);

        if f_reflected < values[best] {
            let expanded = blend(&centroid, &simplex[worst], gamma);
            let f_expanded = eval(&expanded, &mut evals);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                values[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_reflected;
            }
        } else if f_reflected < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = f_reflected;
        } else {
            let contracted = blend(&centroid, &simplex[worst], -rho);
            let f_contracted = eval(&contracted, &mut evals);
            if f_contracted < values[worst] {
                simplex[worst] = contracted;
                values[worst] = f_contracted;
            } else {
                // Shrink toward the best vertex.
                for i in 0..=dim {
                    if i == best {
                        continue;
                    }
                    for d in 0..dim {
                        simplex[i][d] =
                            simplex[best][d] + sigma * (simplex[i][d] - simplex[best][d]);
                    }
                    values[i] = eval(&simplex[i].clone(), &mut evals);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_shifted_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.5).powi(2);
        let m = nelder_mead(f, &[0.0, 0.0], &[1.0, 1.0], NelderMeadOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 3.0).abs() < 1e-5, "{:?}", m.x);
        assert!((m.x[1] + 1.5).abs() < 1e-5);
    }

    #[test]
    fn handles_rosenbrock_to_modest_accuracy() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(
            f,
            &[-1.2, 1.0],
            &[0.5, 0.5],
            NelderMeadOptions {
                max_evals: 4000,
                ..Default::default()
            },
        );
        assert!((m.x[0] - 1.0).abs() < 1e-3, "{:?}", m.x);
        assert!((m.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn reports_non_convergence_at_eval_budget() {
        let f = |x: &[f64]| x[0].powi(2);
        let m = nelder_mead(
            f,
            &[100.0],
            &[1.0],
            NelderMeadOptions {
                max_evals: 4,
                ..Default::default()
            },
        );
        assert!(!m.converged);
        assert!(m.evals <= 6); // budget plus the step in flight
    }

    #[test]
    fn treats_nan_as_infinitely_bad() {
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 2.0).powi(2)
            }
        };
        let m = nelder_mead(f, &[1.0], &[0.5], NelderMeadOptions::default());
        assert!((m.x[0] - 2.0).abs() < 1e-5);
    }
}
