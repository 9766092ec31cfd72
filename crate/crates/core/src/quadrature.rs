//! Romberg integration, plus a log-domain wrapper for integrands that are
//! only representable through their logarithm.

/// Stopping rule for [`romberg`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RombergOptions {
    /// Successive diagonal estimates must agree to this relative tolerance.
    pub rel_tol: f64,
    /// Refinement levels after the initial trapezoid (level `L` uses `2^L + 1` points).
    pub max_levels: usize,
    /// Levels always performed before convergence may be declared.
    pub min_levels: usize,
}

impl Default for RombergOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-6, max_levels: 12, min_levels: 4 }
    }
}

/// Outcome of a Romberg run. `converged` is false when `max_levels` was
/// exhausted; `value` then holds the last extrapolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub levels: usize,
    pub converged: bool,
}

/// Integrates `f` over `[a, b]` by Richardson-extrapolated trapezoid sums.
pub fn romberg<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: RombergOptions) -> Integral {
    let width = b - a;
    let mut prev_row = vec![0.5 * width * (f(a) + f(b))];
    let mut prev_best = prev_row[0];
    for level in 1..=opts.max_levels {
        let steps = 1usize << level;
        let h = width / steps as f64;
        let mut mid = 0.0;
        for i in (1..steps).step_by(2) {
            mid += f(a + i as f64 * h);
        }
        let mut row = Vec::with_capacity(level + 1);
        row.push(0.5 * prev_row[0] + h * mid);
        let mut factor = 1.0;
        for j in 1..=level {
            factor *= 4.0;
            let r = row[j - 1] + (row[j - 1] - prev_row[j - 1]) / (factor - 1.0);
            row.push(r);
        }
        let best = row[level];
        let diff = (best - prev_best).abs();
        if level >= opts.min_levels && (diff <= opts.rel_tol * best.abs() || (best == 0.0 && prev_best == 0.0)) {
            return Integral { value: best, levels: level, converged: true };
        }
        prev_best = best;
        prev_row = row;
    }
    Integral { value: prev_best, levels: opts.max_levels, converged: false }
}

/// Integral of `exp(log_f)` over `[a, b]`, returned as a logarithm.
///
/// The integrand is probed on a uniform grid; the probe maximum is factored
/// out as a scaling constant and the interval is narrowed to where the
/// integrand stays within `SUPPORT_DROP` log units of that maximum.
/// The tolerance is relaxed to the rounding floor of the log integrand.
/// Returns `Err(levels)` on non-convergence.
pub fn log_romberg<F: FnMut(f64) -> f64>(mut log_f: F, a: f64, b: f64, opts: RombergOptions) -> Result<f64, usize> {
    const PROBES: usize = 128;
    const SUPPORT_DROP: f64 = 60.0;
    let step = (b - a) / PROBES as f64;
    let probes: Vec<f64> = (0..=PROBES).map(|i| log_f(a + i as f64 * step)).collect();
    let shift = probes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if !shift.is_finite() {
        return Err(0);
    }
    let threshold = shift - SUPPORT_DROP;
    let first = probes.iter().position(|v| *v >= threshold).expect("maximum is kept");
    let last = probes.iter().rposition(|v| *v >= threshold).expect("maximum is kept");
    // Tighten each edge to the threshold crossing inside its probe cell so
    // that boundary layers thinner than a cell are still resolved.
    let mut crossing = |mut inside: f64, mut outside: f64| {
        for _ in 0..60 {
            let mid = 0.5 * (inside + outside);
            if log_f(mid) >= threshold {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        outside
    };
    let lo = if first == 0 { a } else { crossing(a + first as f64 * step, a + (first - 1) as f64 * step) };
    let hi = if last == PROBES { b } else { crossing(a + last as f64 * step, a + (last + 1) as f64 * step) };
    // Rounding in a log integrand of magnitude |shift| limits the attainable
    // relative accuracy of its exponential.
    let noise_floor = 1e3 * f64::EPSILON * shift.abs().max(1.0);
    let opts = RombergOptions { rel_tol: opts.rel_tol.max(noise_floor), ..opts };
    let r = romberg(|x| (log_f(x) - shift).exp(), lo, hi, opts);
    if !r.converged {
        return Err(r.levels);
    }
    Ok(shift + r.value.ln())
}
