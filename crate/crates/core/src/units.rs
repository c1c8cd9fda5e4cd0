//! Unit conversions used at the configuration and logging boundaries.
//!
//! Everything inside the crate is SI. Gram-force and millimetres only appear
//! when reading configuration files or writing logs.

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

/// One gram-force in newtons.
pub const NEWTONS_PER_GF: f64 = 9.80665e-3;

#[inline]
pub fn gf_to_newtons(gf: f64) -> f64 {
    gf * NEWTONS_PER_GF
}

#[inline]
pub fn newtons_to_gf(n: f64) -> f64 {
    n / NEWTONS_PER_GF
}

/// Mass in grams (as quoted in gram-force equivalent) to kilograms.
#[inline]
pub fn grams_to_kg(g: f64) -> f64 {
    g * 1e-3
}

#[inline]
pub fn mm_to_m(mm: f64) -> f64 {
    mm * 1e-3
}

#[inline]
pub fn m_to_mm(m: f64) -> f64 {
    m * 1e3
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
