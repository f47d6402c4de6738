//! Deterministic fluid limit of the renormalized referral chain.
//!
//! State `x = (a, b, u)` with one entry per block. While `‖a‖ > 0`:
//!
//! ```text
//! a_l' = Σ_k (a_k/‖a‖) (λ^{k,l}/Λ^k) E[min(Poi(Λ^k), c)] − a_l/‖a‖
//! b_l' = Σ_k (a_k/‖a‖) μ^{k,l}       − Σ_k (a_k/‖a‖) (λ^{k,l}/Λ^k) E[min(Poi(Λ^k), c)]
//! u_l' = a_l/‖a‖
//! ```
//!
//! with `λ^{k,l} = λ_kl (π_l − a_l − u_l)`, `Λ^k = Σ_l λ^{k,l}` and
//! `μ^{k,l} = λ_kl (π_l − a_l − b_l − u_l)`. Once `‖a‖` reaches zero at `t₀` the
//! solution is frozen.

use thiserror::Error;

use crate::sbm::SbmParams;
use crate::scalar::Real;

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-4;

/// Bisection depth used to locate `t₀` inside a step.
const CROSSING_BISECTIONS: i32 = 20;

/// Largest RK4 sub-step as a fraction of the current active mass.
const SUBSTEP_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("active mass {0} is at or below the stop threshold")]
    DepletedActiveMass(f64),
    #[error("step size {0} must lie in (0, 1]")]
    StepSizeInvalid(f64),
    #[error("initial state has {got} blocks, model has {expected}")]
    ShapeMismatch { got: usize, expected: usize },
}

/// Model coefficients in the working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidModel<T> {
    pi: Vec<T>,
    lambda: Vec<T>,
    coupon_cap: usize,
    initial_active: T,
}

impl<T: Real> FluidModel<T> {
    pub fn new(p: &SbmParams) -> Self {
        let m = p.n_blocks();
        FluidModel {
            pi: p.pi().iter().map(|&x| T::of(x)).collect(),
            lambda: (0..m * m).map(|i| T::of(p.lambda(i / m, i % m))).collect(),
            coupon_cap: p.coupon_cap(),
            initial_active: T::of(p.seed_fraction()),
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.pi.len()
    }

    pub fn coupon_cap(&self) -> usize {
        self.coupon_cap
    }

    pub fn with_coupon_cap(mut self, c: usize) -> Self {
        self.coupon_cap = c;
        self
    }

    fn rate(&self, k: usize, l: usize) -> T {
        self.lambda[k * self.n_blocks() + l]
    }

    /// `(‖a₀‖ π, 0, 0)` with `‖a₀‖` the seed fraction.
    pub fn default_initial_state(&self) -> FluidState<T> {
        self.initial_state(self.initial_active)
    }

    pub fn initial_state(&self, active_mass: T) -> FluidState<T> {
        let m = self.n_blocks();
        FluidState {
            a: self.pi.iter().map(|&p| p * active_mass).collect(),
            b: vec![T::zero(); m],
            u: vec![T::zero(); m],
        }
    }
}

/// Fluid state: proportions of the population that are active, named-inactive, interviewed.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidState<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub u: Vec<T>,
}

impl<T: Real> FluidState<T> {
    pub fn n_blocks(&self) -> usize {
        self.a.len()
    }

    pub fn active_mass(&self) -> T {
        self.a.iter().fold(T::zero(), |s, &x| s + x)
    }

    pub fn interviewed_mass(&self) -> T {
        self.u.iter().fold(T::zero(), |s, &x| s + x)
    }

    pub fn discovered_mass(&self) -> T {
        self.a.iter().chain(&self.b).fold(T::zero(), |s, &x| s + x)
    }

    /// `[a_1..a_m, b_1..b_m, u_1..u_m]`.
    pub fn to_flat(&self) -> Vec<T> {
        self.a
            .iter()
            .chain(&self.b)
            .chain(&self.u)
            .copied()
            .collect()
    }

    pub fn from_flat(flat: &[T]) -> Self {
        let m = flat.len() / 3;
        FluidState {
            a: flat[..m].to_vec(),
            b: flat[m..2 * m].to_vec(),
            u: flat[2 * m..].to_vec(),
        }
    }
}

/// Rates seen by an interviewee of each block.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates<T> {
    n_blocks: usize,
    /// `λ^{k,l}`, row-major.
    pub lambda: Vec<T>,
    /// `Λ^k`.
    pub total: Vec<T>,
    /// `μ^{k,l}`, row-major.
    pub mu: Vec<T>,
}

impl<T: Real> Rates<T> {
    pub fn lambda_at(&self, k: usize, l: usize) -> T {
        self.lambda[k * self.n_blocks + l]
    }

    pub fn mu_at(&self, k: usize, l: usize) -> T {
        self.mu[k * self.n_blocks + l]
    }
}

pub fn rates<T: Real>(x: &FluidState<T>, model: &FluidModel<T>) -> Rates<T> {
    let m = model.n_blocks();
    let zero = T::zero();
    let candidate_pool: Vec<T> = (0..m)
        .map(|l| (model.pi[l] - x.a[l] - x.u[l]).max(zero))
        .collect();
    let hidden_pool: Vec<T> = (0..m)
        .map(|l| (model.pi[l] - x.a[l] - x.b[l] - x.u[l]).max(zero))
        .collect();
    let mut lambda = vec![zero; m * m];
    let mut mu = vec![zero; m * m];
    let mut total = vec![zero; m];
    for k in 0..m {
        for l in 0..m {
            let r = model.rate(k, l);
            lambda[k * m + l] = r * candidate_pool[l];
            mu[k * m + l] = r * hidden_pool[l];
            total[k] = total[k] + lambda[k * m + l];
        }
    }
    Rates {
        n_blocks: m,
        lambda,
        total,
        mu,
    }
}

/// `E[min(Z, c)]` for `Z ~ Poisson(Λ)`, i.e. `c − Σ_{h=0}^{c} (c−h) Λ^h e^{−Λ} / h!`.
///
/// Poisson weights are built by the recursion `p_h = p_{h−1} Λ / h`.
pub fn expected_coupons<T: Real>(big_lambda: T, c: usize) -> T {
    if big_lambda <= T::zero() {
        return T::zero();
    }
    let cap = T::of_usize(c);
    let mut pmf = (-big_lambda).exp();
    let mut deficit = T::zero();
    for h in 0..=c {
        deficit = deficit + (cap - T::of_usize(h)) * pmf;
        pmf = pmf * big_lambda / T::of_usize(h + 1);
    }
    (cap - deficit).max(T::zero())
}

/// Time derivative `(f_1, f_2, f_3)` of the fluid state.
///
/// Fails with [`OdeError::DepletedActiveMass`] when `‖a‖ ≤ stop_threshold`, which is
/// the caller's signal to freeze the solution.
pub fn vector_field<T: Real>(
    x: &FluidState<T>,
    model: &FluidModel<T>,
    stop_threshold: T,
) -> Result<FluidState<T>, OdeError> {
    let m = model.n_blocks();
    let zero = T::zero();
    let clamped = FluidState {
        a: x.a.iter().map(|&v| v.max(zero)).collect(),
        b: x.b.iter().map(|&v| v.max(zero)).collect(),
        u: x.u.iter().map(|&v| v.max(zero)).collect(),
    };
    let mass = clamped.active_mass();
    if mass.is_nan() || mass <= stop_threshold {
        return Err(OdeError::DepletedActiveMass(mass.as_f64()));
    }
    let r = rates(&clamped, model);
    let weight: Vec<T> = clamped.a.iter().map(|&v| v / mass).collect();
    let coupon_scale: Vec<T> = (0..m)
        .map(|k| {
            if r.total[k] > zero {
                expected_coupons(r.total[k], model.coupon_cap) / r.total[k]
            } else {
                zero
            }
        })
        .collect();

    let mut out = FluidState {
        a: vec![zero; m],
        b: vec![zero; m],
        u: vec![zero; m],
    };
    for l in 0..m {
        let mut coupons = zero;
        let mut named = zero;
        for k in 0..m {
            coupons = coupons + weight[k] * r.lambda_at(k, l) * coupon_scale[k];
            named = named + weight[k] * r.mu_at(k, l);
        }
        out.a[l] = coupons - weight[l];
        out.b[l] = named - coupons;
        out.u[l] = weight[l];
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions<T> {
    pub step: T,
    pub stop_threshold: T,
}

impl<T: Real> Default for IntegratorOptions<T> {
    fn default() -> Self {
        IntegratorOptions {
            step: T::of(DEFAULT_STEP),
            stop_threshold: T::default_stop_threshold(),
        }
    }
}

impl<T: Real> IntegratorOptions<T> {
    pub fn with_step(step: T) -> Self {
        IntegratorOptions {
            step,
            ..Self::default()
        }
    }
}

/// Dense solution on `[0, 1]`.
///
/// The grid is `0, h, 2h, …, 1`, with `t₀` inserted as an extra node when the
/// active mass is exhausted inside a step.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidPath<T> {
    pub grid: Vec<T>,
    pub states: Vec<FluidState<T>>,
    pub step: T,
    pub stop_threshold: T,
    crossing: Option<T>,
}

impl<T: Real> FluidPath<T> {
    /// Wraps precomputed samples (e.g. an externally computed solution); no crossing recorded.
    pub fn from_samples(grid: Vec<T>, states: Vec<FluidState<T>>) -> Self {
        assert!(!grid.is_empty() && grid.len() == states.len());
        let step = grid.windows(2).map(|w| w[1] - w[0]).fold(T::zero(), T::max);
        FluidPath {
            grid,
            states,
            step,
            stop_threshold: T::default_stop_threshold(),
            crossing: None,
        }
    }

    pub fn n_blocks(&self) -> usize {
        self.states[0].n_blocks()
    }

    /// Time at which `‖a‖` reached the stop threshold, if it did.
    pub fn crossing(&self) -> Option<T> {
        self.crossing
    }

    /// Largest spacing between consecutive grid nodes.
    pub fn max_spacing(&self) -> T {
        self.grid
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(T::zero(), T::max)
    }

    /// Index of the grid cell `[grid[i], grid[i+1]]` containing `t`.
    fn cell(&self, t: T) -> usize {
        let last = self.grid.len() - 1;
        match self
            .grid
            .binary_search_by(|g| g.partial_cmp(&t).expect("finite grid"))
        {
            Ok(i) => i.min(last.saturating_sub(1)),
            Err(i) => i.saturating_sub(1).min(last.saturating_sub(1)),
        }
    }

    /// Linear interpolation of the flat state `[a, b, u]` at time `t ∈ [0, 1]`.
    pub fn interpolate(&self, t: T) -> Vec<T> {
        if self.grid.len() == 1 {
            return self.states[0].to_flat();
        }
        let i = self.cell(t);
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let w = ((t - t0) / (t1 - t0)).max(T::zero()).min(T::one());
        let x0 = self.states[i].to_flat();
        let x1 = self.states[i + 1].to_flat();
        x0.iter().zip(&x1).map(|(&p, &q)| p + (q - p) * w).collect()
    }
}

fn axpy<T: Real>(x: &[T], scale: T, dx: &[T]) -> Vec<T> {
    x.iter().zip(dx).map(|(&a, &b)| a + scale * b).collect()
}

fn field_flat<T: Real>(x: &[T], model: &FluidModel<T>, stop: T) -> Result<Vec<T>, OdeError> {
    vector_field(&FluidState::from_flat(x), model, stop).map(|d| d.to_flat())
}

/// One classical RK4 step, followed by clamping negative components to zero.
fn rk4_step<T: Real>(x: &[T], h: T, model: &FluidModel<T>, stop: T) -> Result<Vec<T>, OdeError> {
    let two = T::of(2.0);
    let half = h / two;
    let k1 = field_flat(x, model, stop)?;
    let k2 = field_flat(&axpy(x, half, &k1), model, stop)?;
    let k3 = field_flat(&axpy(x, half, &k2), model, stop)?;
    let k4 = field_flat(&axpy(x, h, &k3), model, stop)?;
    let sixth = h / T::of(6.0);
    Ok((0..x.len())
        .map(|i| (x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i])).max(T::zero()))
        .collect())
}

fn active_mass_flat<T: Real>(x: &[T]) -> T {
    x[..x.len() / 3].iter().fold(T::zero(), |s, &v| s + v)
}

/// Bisects the sub-step length `(0, tau]` for the first point where `‖a‖` drops to the
/// stop threshold (or the field becomes undefined). Returns the offset and the last
/// state still above the threshold.
fn locate_crossing<T: Real>(x: &[T], tau: T, h: T, model: &FluidModel<T>, stop: T) -> (T, Vec<T>) {
    let resolution = h * T::of(2.0).powi(-CROSSING_BISECTIONS);
    let (mut lo, mut hi) = (T::zero(), tau);
    let mut frozen = x.to_vec();
    while hi - lo > resolution {
        let mid = (lo + hi) / T::of(2.0);
        match rk4_step(x, mid, model, stop) {
            Ok(next) if active_mass_flat(&next) > stop => {
                lo = mid;
                frozen = next;
            }
            _ => hi = mid,
        }
    }
    (hi, frozen)
}

/// RK4 on the fixed grid `0, h, 2h, …, 1` with detection of `t₀` and freezing afterwards.
///
/// The direction `a/‖a‖` relaxes at a rate of order `1/‖a‖`, so as the active mass
/// runs out the system stiffens. Each grid step is therefore covered by RK4
/// sub-steps no longer than `‖a‖/4`; away from `t₀` this is a single step of `h`.
/// The crossing of `‖a‖` through the stop threshold is located by bisection to a
/// resolution of `h · 2⁻²⁰`.
pub fn integrate<T: Real>(
    x0: &FluidState<T>,
    model: &FluidModel<T>,
    opts: IntegratorOptions<T>,
) -> Result<FluidPath<T>, OdeError> {
    let h = opts.step;
    if !(h > T::zero() && h <= T::one()) {
        return Err(OdeError::StepSizeInvalid(h.as_f64()));
    }
    if x0.n_blocks() != model.n_blocks() || x0.b.len() != x0.a.len() || x0.u.len() != x0.a.len() {
        return Err(OdeError::ShapeMismatch {
            got: x0.n_blocks(),
            expected: model.n_blocks(),
        });
    }
    let stop = opts.stop_threshold;
    let n_steps = (T::one() / h - T::of(1e-9))
        .ceil()
        .to_usize()
        .unwrap_or(1)
        .max(1);
    let node_time = |i: usize| (T::of_usize(i) * h).min(T::one());

    let mut grid = Vec::with_capacity(n_steps + 2);
    let mut states = Vec::with_capacity(n_steps + 2);
    let mut x = x0.to_flat();
    grid.push(T::zero());
    states.push(FluidState::from_flat(&x));

    let mut crossing = None;
    let mass0 = active_mass_flat(&x);
    if mass0.is_nan() || mass0 <= stop {
        crossing = Some(T::zero());
    }

    let mut i = 0;
    while crossing.is_none() && i < n_steps {
        let (mut t, t_next) = (node_time(i), node_time(i + 1));
        while t < t_next {
            let tau = (t_next - t).min(active_mass_flat(&x) * T::of(SUBSTEP_FRACTION));
            match rk4_step(&x, tau, model, stop) {
                Ok(next) if active_mass_flat(&next) > stop => {
                    x = next;
                    t = if t_next - t - tau <= T::epsilon() {
                        t_next
                    } else {
                        t + tau
                    };
                }
                _ => {
                    let (t0, frozen) = locate_crossing(&x, tau, h, model, stop);
                    x = frozen;
                    crossing = Some(t + t0);
                    break;
                }
            }
        }
        match crossing {
            Some(t0) if t0 < t_next => {
                if t0 > *grid.last().expect("grid is non-empty") {
                    grid.push(t0);
                    states.push(FluidState::from_flat(&x));
                }
            }
            _ => {
                grid.push(t_next);
                states.push(FluidState::from_flat(&x));
                i += 1;
            }
        }
    }
    // frozen tail
    while i < n_steps {
        let t_next = node_time(i + 1);
        if t_next > *grid.last().expect("grid is non-empty") {
            grid.push(t_next);
            states.push(FluidState::from_flat(&x));
        }
        i += 1;
    }
    Ok(FluidPath {
        grid,
        states,
        step: h,
        stop_threshold: stop,
        crossing,
    })
}

/// Stopping time `t₀`: the recorded crossing, or 1 if the active mass never ran out.
pub fn find_t0<T: Real>(path: &FluidPath<T>) -> T {
    path.crossing.unwrap_or(T::one())
}

/// Integrates from the default initial state and returns `t₀`.
pub fn stopping_time<T: Real>(p: &SbmParams, opts: IntegratorOptions<T>) -> Result<T, OdeError> {
    let model = FluidModel::<T>::new(p);
    integrate(&model.default_initial_state(), &model, opts).map(|path| find_t0(&path))
}
