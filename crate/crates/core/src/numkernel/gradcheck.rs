//! Central finite-difference verification of analytic gradients.

use super::KernelError;

/// Floor used in the relative-error denominator.
pub const RELATIVE_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct GradientReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
    /// Index of the parameter attaining `max_relative_error`.
    pub worst_index: usize,
    /// Both gradients vanish (constant loss around the probe point).
    pub degenerate: bool,
}

impl GradientReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR)
}

/// How the numeric derivative along each coordinate is estimated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stencil {
    /// `(f(θ + h e_i) − f(θ − h e_i)) / 2h`.
    Central { h: f64 },
    /// Ridders' extrapolation of central differences, starting at step `h`
    /// and shrinking by 1.4 per level until the error estimate stops improving.
    Extrapolated { h: f64 },
    /// Extrapolation run from `h` and from `h/4`; keeps the estimate with the
    /// smaller error estimate.
    Adaptive { h: f64 },
}

impl Stencil {
    fn step(&self) -> f64 {
        match *self {
            Stencil::Central { h } | Stencil::Extrapolated { h } | Stencil::Adaptive { h } => h,
        }
    }
}

/// Compares `analytic` with `(f(θ + h e_i) − f(θ − h e_i)) / 2h` for every coordinate.
pub fn check_gradients<F>(
    loss: F,
    theta: &[f64],
    analytic: &[f64],
    h: f64,
) -> Result<GradientReport, KernelError>
where
    F: FnMut(&[f64]) -> f64,
{
    check_gradients_with(loss, theta, analytic, Stencil::Central { h })
}

pub fn check_gradients_with<F>(
    mut loss: F,
    theta: &[f64],
    analytic: &[f64],
    stencil: Stencil,
) -> Result<GradientReport, KernelError>
where
    F: FnMut(&[f64]) -> f64,
{
    let h = stencil.step();
    if theta.len() != analytic.len() {
        return Err(KernelError::Dimension {
            expected: format!("{} analytic entries", theta.len()),
            found: format!("{}", analytic.len()),
        });
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(KernelError::Usage(format!("finite-difference step must be positive, got {h}")));
    }
    let f0 = loss(theta);
    if !f0.is_finite() {
        return Err(KernelError::NonFinite("loss at probe point".into()));
    }
    let mut probe = theta.to_vec();
    let mut numeric = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let estimate = match stencil {
            Stencil::Central { h } => central(&mut loss, &mut probe, i, h)?,
            Stencil::Extrapolated { h } => extrapolated(&mut loss, &mut probe, i, h)?.0,
            Stencil::Adaptive { h } => {
                let mut best = extrapolated(&mut loss, &mut probe, i, h)?;
                let next = extrapolated(&mut loss, &mut probe, i, h / 4.0)?;
                if next.1 < best.1 {
                    best = next;
                }
                best.0
            }
        };
        numeric.push(estimate);
    }
    let mut max_relative_error = 0.0;
    let mut worst_index = 0;
    for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = relative_error(a, n);
        if err > max_relative_error {
            max_relative_error = err;
            worst_index = i;
        }
    }
    let tiny = |v: &[f64]| v.iter().all(|x| x.abs() < RELATIVE_FLOOR);
    let degenerate = tiny(analytic) && tiny(&numeric);
    Ok(GradientReport {
        analytic: analytic.to_vec(),
        numeric,
        max_relative_error,
        worst_index,
        degenerate,
    })
}

fn central<F: FnMut(&[f64]) -> f64>(
    loss: &mut F,
    probe: &mut [f64],
    i: usize,
    h: f64,
) -> Result<f64, KernelError> {
    let orig = probe[i];
    probe[i] = orig + h;
    let plus = loss(probe);
    probe[i] = orig - h;
    let minus = loss(probe);
    probe[i] = orig;
    if !plus.is_finite() || !minus.is_finite() {
        return Err(KernelError::NonFinite(format!("loss while perturbing parameter {i}")));
    }
    Ok((plus - minus) / (2.0 * h))
}

fn extrapolated<F: FnMut(&[f64]) -> f64>(
    loss: &mut F,
    probe: &mut [f64],
    i: usize,
    h: f64,
) -> Result<(f64, f64), KernelError> {
    const SHRINK: f64 = 1.4;
    const LEVELS: usize = 10;
    const SAFE: f64 = 2.0;
    let shrink2 = SHRINK * SHRINK;
    let mut table = [[0.0f64; LEVELS]; LEVELS];
    let mut step = h;
    table[0][0] = central(loss, probe, i, step)?;
    let mut best = table[0][0];
    let mut best_err = f64::INFINITY;
    for col in 1..LEVELS {
        step /= SHRINK;
        table[0][col] = central(loss, probe, i, step)?;
        let mut factor = shrink2;
        for row in 1..=col {
            table[row][col] =
                (table[row - 1][col] * factor - table[row - 1][col - 1]) / (factor - 1.0);
            factor *= shrink2;
            let err = (table[row][col] - table[row - 1][col])
                .abs()
                .max((table[row][col] - table[row - 1][col - 1]).abs());
            if err <= best_err {
                best_err = err;
                best = table[row][col];
            }
        }
        if (table[col][col] - table[col - 1][col - 1]).abs() >= SAFE * best_err {
            break;
        }
    }
    Ok((best, best_err))
}
