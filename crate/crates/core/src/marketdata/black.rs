use crate::error::{ensure_finite, Error, Result};
use crate::math::normal;

/// Discounted Black call value `df · E[(F_T − K)⁺]` for a lognormal forward.
pub fn black_call(forward: f64, strike: f64, expiry: f64, vol: f64, df: f64) -> Result<f64> {
    ensure_finite(forward, "forward")?;
    ensure_finite(strike, "strike")?;
    ensure_finite(expiry, "expiry")?;
    ensure_finite(vol, "vol")?;
    ensure_finite(df, "discount factor")?;
    if forward <= 0.0 || strike <= 0.0 || expiry < 0.0 || vol < 0.0 || df <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "black_call needs positive forward/strike/df and non-negative expiry/vol \
             (F={forward}, K={strike}, T={expiry}, vol={vol}, df={df})"
        )));
    }
    Ok(df * forward * normalized_call((strike / forward).ln(), vol * expiry.sqrt()))
}

/// Discounted Black put, by parity.
pub fn black_put(forward: f64, strike: f64, expiry: f64, vol: f64, df: f64) -> Result<f64> {
    Ok(black_call(forward, strike, expiry, vol, df)? - df * (forward - strike))
}

/// Call value in units of the forward, as a function of log-moneyness
/// `k = ln(K/F)` and total standard deviation `s = σ√T`.
pub(crate) fn normalized_call(k: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return (1.0 - k.exp()).max(0.0);
    }
    let d1 = -k / s + 0.5 * s;
    let d2 = d1 - s;
    if k > 0.0 {
        normal::cdf(d1) - k.exp() * normal::cdf(d2)
    } else {
        // in the money: intrinsic plus the out-of-the-money put value
        (1.0 - k.exp()) + k.exp() * normal::cdf(-d2) - normal::cdf(-d1)
    }
}

/// Out-of-the-money option value in units of the forward: call for
/// `k ≥ 0`, put otherwise.
fn normalized_otm(k: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let d1 = -k / s + 0.5 * s;
    let d2 = d1 - s;
    if k >= 0.0 {
        normal::cdf(d1) - k.exp() * normal::cdf(d2)
    } else {
        k.exp() * normal::cdf(-d2) - normal::cdf(-d1)
    }
}

/// Black implied volatility of a discounted call price.
pub fn implied_vol(price: f64, forward: f64, strike: f64, expiry: f64, df: f64) -> Result<f64> {
    ensure_finite(price, "price")?;
    ensure_finite(forward, "forward")?;
    ensure_finite(strike, "strike")?;
    ensure_finite(expiry, "expiry")?;
    ensure_finite(df, "discount factor")?;
    if forward <= 0.0 || strike <= 0.0 || expiry <= 0.0 || df <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "implied_vol needs positive inputs (F={forward}, K={strike}, T={expiry}, df={df})"
        )));
    }
    let lower = df * (forward - strike).max(0.0);
    let upper = df * forward;
    if price >= upper || price < lower - 1e-14 * upper {
        return Err(Error::PriceOutOfBounds {
            price,
            lower,
            upper,
        });
    }
    let k = (strike / forward).ln();
    let x = price / (df * forward);
    let target = if k >= 0.0 { x } else { x - (1.0 - k.exp()) };
    if target <= 0.0 {
        return Ok(0.0);
    }

    // bracket in total standard deviation, then safeguarded Newton
    let mut lo = 0.0;
    let mut hi = 1.0;
    while normalized_otm(k, hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::PriceOutOfBounds {
                price,
                lower,
                upper,
            });
        }
    }
    let mut s = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = normalized_otm(k, s);
        let diff = v - target;
        if diff.abs() <= 1e-16 * target {
            break;
        }
        if diff > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let vega = normal::pdf(-k / s + 0.5 * s);
        let newton = s - diff / vega;
        s = if vega > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    Ok(s / expiry.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vol_is_discounted_intrinsic() {
        assert!((black_call(110.0, 100.0, 1.0, 0.0, 0.9).unwrap() - 9.0).abs() < 1e-12);
        assert_eq!(black_call(90.0, 100.0, 1.0, 0.0, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn atm_value_matches_reference() {
        // 100·(2N(0.1) − 1)
        let v = black_call(100.0, 100.0, 1.0, 0.2, 1.0).unwrap();
        assert!((v - 7.965_567_455_405_804).abs() < 1e-12);
    }

    #[test]
    fn put_call_parity() {
        for &(f, k, t, v, df) in &[(100.0, 80.0, 0.5, 0.3, 0.97), (50.0, 75.0, 3.0, 0.15, 0.8)] {
            let c = black_call(f, k, t, v, df).unwrap();
            let p = black_put(f, k, t, v, df).unwrap();
            assert!((c - p - df * (f - k)).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        assert!(matches!(
            black_call(f64::NAN, 1.0, 1.0, 0.2, 1.0),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            implied_vol(1.0, 100.0, f64::INFINITY, 1.0, 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn implied_vol_round_trip() {
        let p = black_call(100.0, 120.0, 2.0, 0.25, 0.95).unwrap();
        let v = implied_vol(p, 100.0, 120.0, 2.0, 0.95).unwrap();
        assert!((v - 0.25).abs() < 1e-10);
    }

    #[test]
    fn upper_bound_is_an_error() {
        let err = implied_vol(0.9 * 100.0, 100.0, 100.0, 1.0, 0.9).unwrap_err();
        assert!(matches!(err, Error::PriceOutOfBounds { .. }));
        assert!(implied_vol(5.0, 100.0, 80.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn deep_in_the_money_round_trip() {
        // price only a little above intrinsic: recover a small vol
        let p = black_call(100.0, 60.0, 1.0, 0.08, 1.0).unwrap();
        let v = implied_vol(p, 100.0, 60.0, 1.0, 1.0).unwrap();
        let back = black_call(100.0, 60.0, 1.0, v, 1.0).unwrap();
        assert!(((back - p) / p).abs() < 1e-10);
        assert!(v < 0.2);
    }
}
