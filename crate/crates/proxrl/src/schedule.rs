//! Stepsize schedules shared by the TD and saddle-point iterations.

/// Stepsize schedule. `t` counts completed steps, starting at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// alpha_t = a for all t.
    Constant(f64),
    /// alpha_t = a / sqrt(t + 1), the standard diminishing schedule.
    InvSqrt(f64),
}

impl StepSize {
    pub fn at(&self, t: usize) -> f64 {
        match *self {
            StepSize::Constant(a) => a,
            StepSize::InvSqrt(a) => a / ((t + 1) as f64).sqrt(),
        }
    }
}
