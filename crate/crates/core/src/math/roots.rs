/// Bisection for a root of a function that changes sign on `[lo, hi]`.
///
/// Returns the midpoint of the final bracket. The bracket is assumed valid;
/// callers check the sign change themselves.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, max_iter: usize) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_square_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 200);
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-15);
    }
}
