//! Integer time arithmetic.
//!
//! All schedule logic runs on integer ticks of a global resolution unit; a
//! task set records how many ticks make up one base time unit.

/// A non-negative instant or duration, in resolution ticks.
pub type Time = u64;

/// A signed time difference, used for lateness.
pub type Lateness = i64;

/// Default number of ticks per base time unit.
pub const DEFAULT_RESOLUTION: u64 = 1_000_000;

pub fn gcd(mut a: Time, mut b: Time) -> Time {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

/// Least common multiple, or `None` on overflow.
pub fn checked_lcm(a: Time, b: Time) -> Option<Time> {
    if a == 0 || b == 0 {
        return Some(0);
    }
    (a / gcd(a, b)).checked_mul(b)
}

/// Converts a time to a signed value, saturating at `i64::MAX`.
pub fn signed(t: Time) -> Lateness {
    Lateness::try_from(t).unwrap_or(Lateness::MAX)
}
