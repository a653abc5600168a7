//! Damped Newton ascent with a backtracking line search.

use super::InferenceError;
use crate::hazardmodel::N_PARAMS;
use crate::inference::sampler::cholesky;

pub(crate) type Vector = [f64; N_PARAMS];
pub(crate) type Matrix = [[f64; N_PARAMS]; N_PARAMS];

pub(crate) struct Evaluation {
    pub value: f64,
    pub gradient: Vector,
    pub hessian: Matrix,
}

fn max_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `(−H + μI)·δ = g`, raising the damping `μ` until the system is
/// positive definite. Directions the objective does not depend on get
/// zero curvature and zero gradient, hence a zero step.
fn ascent_direction(e: &Evaluation) -> Vector {
    let scale = (0..N_PARAMS).fold(1.0f64, |m, i| m.max(e.hessian[i][i].abs()));
    let mut mu = 0.0;
    loop {
        let mut a = vec![0.0; N_PARAMS * N_PARAMS];
        for i in 0..N_PARAMS {
            for j in 0..N_PARAMS {
                a[i * N_PARAMS + j] = -e.hessian[i][j] + if i == j { mu } else { 0.0 };
            }
        }
        if let Some(l) = cholesky(&a, N_PARAMS) {
            // forward then back substitution
            let mut z = [0.0; N_PARAMS];
            for i in 0..N_PARAMS {
                let s: f64 = (0..i).map(|k| l[i * N_PARAMS + k] * z[k]).sum();
                z[i] = (e.gradient[i] - s) / l[i * N_PARAMS + i];
            }
            let mut d = [0.0; N_PARAMS];
            for i in (0..N_PARAMS).rev() {
                let s: f64 = (i + 1..N_PARAMS).map(|k| l[k * N_PARAMS + i] * d[k]).sum();
                d[i] = (z[i] - s) / l[i * N_PARAMS + i];
            }
            return d;
        }
        mu = if mu == 0.0 { 1e-12 * scale } else { mu * 10.0 };
    }
}

/// Maximizes `objective` from `init` until the gradient max-norm drops
/// below `tol`.
pub(crate) fn maximize<F>(objective: F, init: Vector, tol: f64, max_iter: usize) -> Result<Vector, InferenceError>
where
    F: Fn(&Vector) -> Option<Evaluation>,
{
    let mut theta = init;
    let mut current = objective(&theta).ok_or(InferenceError::NonFiniteObjective)?;
    for _ in 0..max_iter {
        if max_norm(&current.gradient) < tol {
            return Ok(theta);
        }
        let dir = ascent_direction(&current);
        let slope: f64 = dir.iter().zip(&current.gradient).map(|(d, g)| d * g).sum();
        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-14 {
            let mut trial = theta;
            for (t, d) in trial.iter_mut().zip(&dir) {
                *t += step * d;
            }
            if let Some(next) = objective(&trial) {
                let sufficient = next.value >= current.value + 1e-4 * step * slope;
                // near the optimum the increase is below rounding of the value
                let flat = step * slope < 1e-9 && next.value >= current.value - 1e-12 * (1.0 + current.value.abs());
                if sufficient || flat {
                    theta = trial;
                    current = next;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if max_norm(&current.gradient) < tol {
        Ok(theta)
    } else {
        Err(InferenceError::NotConverged {
            gradient_norm: max_norm(&current.gradient),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximizes_a_concave_quadratic_with_a_flat_direction() {
        // f = -(x0-1)^2 - 2(x1+3)^2 - (x0 - x2)^2, x3 absent
        let f = |t: &Vector| {
            let value = -(t[0] - 1.0).powi(2) - 2.0 * (t[1] + 3.0).powi(2) - (t[0] - t[2]).powi(2);
            let gradient = [
                -2.0 * (t[0] - 1.0) - 2.0 * (t[0] - t[2]),
                -4.0 * (t[1] + 3.0),
                2.0 * (t[0] - t[2]),
                0.0,
            ];
            let hessian = [
                [-4.0, 0.0, 2.0, 0.0],
                [0.0, -4.0, 0.0, 0.0],
                [2.0, 0.0, -2.0, 0.0],
                [0.0; 4],
            ];
            Some(Evaluation {
                value,
                gradient,
                hessian,
            })
        };
        let x = maximize(f, [5.0, 5.0, -5.0, 7.0], 1e-10, 100).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-9);
        assert!((x[1] + 3.0).abs() < 1e-9);
        assert!((x[2] - 1.0).abs() < 1e-9);
        assert_eq!(x[3], 7.0);
    }
}
