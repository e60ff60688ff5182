//! Gaussian brackets on products of reals that are meant to be integers.
//!
//! Expressions such as `ceil(c * n_sub)` or `floor(gamma * B)` are evaluated
//! in binary floating point, where `0.3 * 10` lands just above 3. Values
//! within `SNAP` of an integer are treated as that integer before rounding.

const SNAP: f64 = 1e-9;

fn snapped(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP * r.abs().max(1.0) {
        r
    } else {
        x
    }
}

pub fn ceil(x: f64) -> i64 {
    snapped(x).ceil() as i64
}

pub fn floor(x: f64) -> i64 {
    snapped(x).floor() as i64
}

/// `floor(gamma * b)` as a count.
pub fn trimmed_count(gamma: f64, b: usize) -> usize {
    floor(gamma * b as f64).max(0) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snaps_representation_error() {
        assert_eq!(ceil(0.3 * 10.0), 3);
        assert_eq!(floor(0.29 * 100.0), 29);
        assert_eq!(ceil(0.5 * 25.0), 13);
        assert_eq!(floor(0.5 * 25.0), 12);
        assert_eq!(ceil(-0.5), 0);
        assert_eq!(ceil(100.0 * 0.2), 20);
        assert_eq!(trimmed_count(0.95, 1000), 950);
        assert_eq!(trimmed_count(0.0, 7), 0);
    }
}
