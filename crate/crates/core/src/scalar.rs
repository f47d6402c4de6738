use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar used by the fluid-limit and path-distance code: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; every value the crate feeds through here is finite.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 is representable")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Default threshold on `‖a‖` below which the active mass is treated as depleted.
    ///
    /// `1e-8` for `f64`; for coarser types it is raised to a hundred ulps at 1.
    fn default_stop_threshold() -> Self {
        let floor = Self::epsilon() * Self::of(100.0);
        Self::of(1e-8).max(floor)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Neumaier-compensated accumulator. Summation order is the caller's; the result
/// only depends on that order.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// `⌊n·x⌋` with a small guard so products such as `0.29 * 100` land on the intended integer.
pub fn floor_scaled(n: usize, x: f64) -> usize {
    let v = n as f64 * x;
    let guarded = (v + 1e-9 * v.abs().max(1.0)).floor();
    if guarded <= 0.0 {
        0
    } else {
        guarded as usize
    }
}
