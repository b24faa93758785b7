//! Bessel function of the first kind, order zero.
//!
//! Three branches cover the real line to an absolute error well below
//! `1e-12` for `|x| <= 500`:
//!
//! * `|x| <= 12`: Maclaurin series in double-double arithmetic.
//! * `12 < |x| < 25`: Miller's backward recurrence normalized by
//!   `J0 + 2 (J2 + J4 + ...) = 1`.
//! * `|x| >= 25`: Hankel asymptotic expansion summed to its smallest term.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// Upper end of the power-series branch.
pub const SERIES_CROSSOVER: f64 = 12.0;
const ASYMPTOTIC_CROSSOVER: f64 = 25.0;

/// `J0(x)`. NaN input is a domain error; infinities return 0.
pub fn bessel_j0(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::Domain("J0 of NaN".into()));
    }
    Ok(j0(x))
}

/// Unchecked `J0`, for hot loops whose arguments are known finite.
#[inline]
pub fn j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax.is_infinite() {
        0.0
    } else if ax <= SERIES_CROSSOVER {
        j0_series(ax)
    } else if ax < ASYMPTOTIC_CROSSOVER {
        j0_miller(ax)
    } else {
        j0_hankel(ax)
    }
}

/// `J0(2 sqrt(arg))` for `arg >= 0`, the form every memory kernel uses.
/// Negative round-off below zero is clamped.
#[inline]
pub fn j0_sqrt_arg(arg: f64) -> f64 {
    j0(2.0 * arg.max(0.0).sqrt())
}

/// Near the crossover the series terms grow to ~4e3 before cancelling down
/// to `|J0| <= 1`, which costs about 1e-12 in plain doubles. Carrying the
/// terms and the sum as unevaluated pairs `hi + lo` keeps the result at
/// round-off.
fn j0_series(x: f64) -> f64 {
    let (sq, sq_err) = two_prod(x, x);
    let y = (-0.25 * sq, -0.25 * sq_err);
    let mut term = (1.0, 0.0);
    let mut sum = (1.0, 0.0);
    let mut k = 0.0;
    loop {
        k += 1.0;
        term = dd_div(dd_mul(term, y), k * k);
        sum = dd_add(sum, term);
        if term.0.abs() < 1e-17 * sum.0.abs().max(1.0) {
            return sum.0 + sum.1;
        }
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

#[inline]
fn dd_add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(a.0, b.0);
    quick_two_sum(s, e + a.1 + b.1)
}

#[inline]
fn dd_mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (p, e) = two_prod(a.0, b.0);
    quick_two_sum(p, e + a.0 * b.1 + a.1 * b.0)
}

#[inline]
fn dd_div(a: (f64, f64), d: f64) -> (f64, f64) {
    let q1 = a.0 / d;
    let (p, e) = two_prod(q1, d);
    let r = (a.0 - p - e) + a.1;
    quick_two_sum(q1, r / d)
}

fn j0_miller(x: f64) -> f64 {
    // Start well above x; the recurrence is stable downwards for n > x.
    let mut start = (x + 30.0 + 6.0 * x.cbrt()) as usize;
    start += start % 2;
    let two_over_x = 2.0 / x;
    let mut above = 0.0;
    let mut current = 1e-300;
    let mut even_sum = 0.0;
    for k in (1..=start).rev() {
        let below = k as f64 * two_over_x * current - above;
        above = current;
        current = below;
        if current.abs() > 1e250 {
            current *= 1e-250;
            above *= 1e-250;
            even_sum *= 1e-250;
        }
        // `current` now holds the unnormalized J_{k-1}.
        if k > 1 && (k - 1) % 2 == 0 {
            even_sum += current;
        }
    }
    current / (current + 2.0 * even_sum)
}

fn j0_hankel(x: f64) -> f64 {
    let mut p = 0.0;
    let mut q = 0.0;
    let mut a = 1.0f64;
    let mut last = f64::INFINITY;
    for k in 0..200 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            a *= -(odd * odd) / (k as f64 * 8.0 * x);
        }
        if a.abs() > last {
            break;
        }
        last = a.abs();
        match k % 4 {
            0 => p += a,
            1 => q += a,
            2 => p -= a,
            _ => q -= a,
        }
        if a.abs() < 1e-17 {
            break;
        }
    }
    let phase = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * phase.cos() - q * phase.sin())
}
