use thiserror::Error;

use crate::ode::FluidPath;
use crate::scalar::Real;
use crate::simulator::RenormalizedPath;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistanceError {
    #[error("fluid grid spacing {spacing} is coarser than 1/(4N) = {required} for N = {n}")]
    GridMismatch {
        spacing: f64,
        required: f64,
        n: usize,
    },
    #[error("paths have {left} and {right} blocks")]
    BlockMismatch { left: usize, right: usize },
}

/// `∫_0^1 |c − y(s)| ds` over one piece where `y` is linear from `y0` to `y1`.
fn abs_linear_integral<T: Real>(c: T, y0: T, y1: T, len: T) -> T {
    let d0 = y0 - c;
    let d1 = y1 - c;
    let two = T::of(2.0);
    if (d0 >= T::zero()) == (d1 >= T::zero()) {
        (d0.abs() + d1.abs()) / two * len
    } else {
        (d0 * d0 + d1 * d1) / (two * (d0.abs() + d1.abs())) * len
    }
}

/// `d₁(X^N, x) = ∫_0^1 ‖A^N_t − a_t‖ + ‖B^N_t − b_t‖ + ‖U^N_t − u_t‖ dt`.
///
/// `X^N` is constant on each `[n/N, (n+1)/N)`; the fluid path is taken as the linear
/// interpolant of its grid, and each piece between consecutive breakpoints of the
/// two paths is integrated exactly. The fluid grid must resolve at least four
/// nodes per stochastic step.
pub fn path_distance_l1<T: Real>(
    path: &RenormalizedPath<T>,
    fluid: &FluidPath<T>,
) -> Result<T, DistanceError> {
    let n = path.n_population();
    if path.n_blocks() != fluid.n_blocks() {
        return Err(DistanceError::BlockMismatch {
            left: path.n_blocks(),
            right: fluid.n_blocks(),
        });
    }
    let required = 1.0 / (4.0 * n as f64);
    let spacing = fluid.max_spacing().as_f64();
    if spacing > required * (1.0 + 1e-9) {
        return Err(DistanceError::GridMismatch {
            spacing,
            required,
            n,
        });
    }

    let scale = T::of_usize(n);
    let grid = &fluid.grid;
    let flat: Vec<Vec<T>> = fluid.states.iter().map(|s| s.to_flat()).collect();
    let width = flat[0].len();
    let value_at = |j: usize, s: T| -> Vec<T> {
        if j + 1 >= grid.len() {
            return flat[grid.len() - 1].clone();
        }
        let w = ((s - grid[j]) / (grid[j + 1] - grid[j]))
            .max(T::zero())
            .min(T::one());
        (0..width)
            .map(|i| flat[j][i] + (flat[j + 1][i] - flat[j][i]) * w)
            .collect()
    };

    let mut total = T::zero();
    let mut j = 0usize;
    for step in 0..n {
        let lo = T::of_usize(step) / scale;
        let hi = T::of_usize(step + 1) / scale;
        let level = path.step_value(step);
        while j + 1 < grid.len() - 1 && grid[j + 1] <= lo {
            j += 1;
        }
        let mut s = lo;
        let mut y = value_at(j, s);
        loop {
            let boundary = if j + 1 < grid.len() { grid[j + 1] } else { hi };
            let end = if boundary < hi { boundary } else { hi };
            let y_end = value_at(j, end);
            let len = end - s;
            if len > T::zero() {
                for i in 0..width {
                    total = total + abs_linear_integral(level[i], y[i], y_end[i], len);
                }
            }
            if end >= hi || j + 2 >= grid.len() {
                break;
            }
            j += 1;
            s = end;
            y = y_end;
        }
    }
    Ok(total)
}

/// L1 distance between two renormalized step paths with the same `N`.
pub fn step_distance_l1<T: Real>(p: &RenormalizedPath<T>, q: &RenormalizedPath<T>) -> T {
    assert_eq!(p.n_population(), q.n_population());
    let n = p.n_population();
    let mut total = T::zero();
    for step in 0..n {
        for (&x, &y) in p.step_value(step).iter().zip(q.step_value(step)) {
            total = total + (x - y).abs();
        }
    }
    total / T::of_usize(n)
}
