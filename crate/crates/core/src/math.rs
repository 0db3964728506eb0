//! Thin wrappers over `libm` so the numerical code reads like `std`.

pub(crate) use core::f64::consts::PI;

pub(crate) const TWO_PI: f64 = 2.0 * PI;

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub(crate) fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn log10(x: f64) -> f64 {
    libm::log10(x)
}

#[inline]
pub(crate) fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

#[inline]
pub(crate) fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Wraps an angle to (-pi, pi].
#[inline]
pub(crate) fn wrap_phase(x: f64) -> f64 {
    let mut r = x - TWO_PI * floor((x + PI) / TWO_PI);
    // floor maps exactly -pi to -pi; the half-open interval excludes it.
    if r <= -PI {
        r += TWO_PI;
    }
    if r > PI {
        r -= TWO_PI;
    }
    r
}

/// `10^(db/20)`.
#[inline]
pub(crate) fn db_to_amplitude(db: f64) -> f64 {
    powf(10.0, db / 20.0)
}
