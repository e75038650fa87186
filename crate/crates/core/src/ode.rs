//! Fixed-step classic Runge-Kutta shared by the Riccati, offset and
//! regime-probability integrators.

use crate::linalg::{Mat, Vector};

pub(crate) trait OdeState: Sized {
    /// `self + a * other`.
    fn axpy(&self, a: f64, other: &Self) -> Self;
}

impl OdeState for Vec<Mat> {
    fn axpy(&self, a: f64, other: &Self) -> Self {
        self.iter().zip(other).map(|(x, y)| x + y * a).collect()
    }
}

impl OdeState for Vec<Vector> {
    fn axpy(&self, a: f64, other: &Self) -> Self {
        self.iter().zip(other).map(|(x, y)| x + y * a).collect()
    }
}

impl OdeState for Vector {
    fn axpy(&self, a: f64, other: &Self) -> Self {
        self + other * a
    }
}

/// Where in the step a derivative is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stage {
    Start,
    Middle,
    End,
}

/// One RK4 step of signed size `h` (negative for backward integration).
pub(crate) fn rk4_step<S, E, F>(y: &S, h: f64, mut f: F) -> Result<S, E>
where
    S: OdeState,
    F: FnMut(Stage, &S) -> Result<S, E>,
{
    let k1 = f(Stage::Start, y)?;
    let k2 = f(Stage::Middle, &y.axpy(0.5 * h, &k1))?;
    let k3 = f(Stage::Middle, &y.axpy(0.5 * h, &k2))?;
    let k4 = f(Stage::End, &y.axpy(h, &k3))?;
    Ok(y.axpy(h / 6.0, &k1).axpy(h / 3.0, &k2).axpy(h / 3.0, &k3).axpy(h / 6.0, &k4))
}
