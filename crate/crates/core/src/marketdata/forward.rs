use super::RateCurve;

/// One constituent inside a basket forward.
#[derive(Clone, Debug)]
pub struct BasketLeg {
    pub weight: f64,
    pub spot: f64,
    pub dividend: RateCurve,
}

/// How an underlying carries: its own dividend yield, or the combined carry
/// of a weighted basket of constituents.
#[derive(Clone, Debug)]
pub enum Carry {
    Yield(RateCurve),
    /// The basket forward is the weighted sum of constituent forwards; its
    /// dividend yield is whatever makes that identity hold.
    Basket(Vec<BasketLeg>),
}

/// Deterministic forward curve `F(T)` of one underlying.
#[derive(Clone, Debug)]
pub struct ForwardCurve {
    spot: f64,
    rates: RateCurve,
    carry: Carry,
}

impl ForwardCurve {
    pub fn new(spot: f64, rates: RateCurve, carry: Carry) -> Self {
        Self { spot, rates, carry }
    }

    pub fn with_yield(spot: f64, rates: RateCurve, dividend: RateCurve) -> Self {
        Self::new(spot, rates, Carry::Yield(dividend))
    }

    pub fn spot(&self) -> f64 {
        self.spot
    }

    pub fn rates(&self) -> &RateCurve {
        &self.rates
    }

    pub fn discount(&self, t: f64) -> f64 {
        self.rates.discount(t)
    }

    pub fn forward(&self, t: f64) -> f64 {
        match &self.carry {
            Carry::Yield(q) => self.spot * (self.rates.integral(t) - q.integral(t)).exp(),
            Carry::Basket(legs) => {
                let growth = self.rates.integral(t);
                legs.iter()
                    .map(|l| l.weight * l.spot * (growth - l.dividend.integral(t)).exp())
                    .sum()
            }
        }
    }

    /// Instantaneous drift `μ(t) = d ln F / dt`.
    pub fn drift(&self, t: f64) -> f64 {
        let r = self.rates.rate(t);
        match &self.carry {
            Carry::Yield(q) => r - q.rate(t),
            Carry::Basket(legs) => {
                let growth = self.rates.integral(t);
                let (mut num, mut den) = (0.0, 0.0);
                for l in legs {
                    let f = l.weight * l.spot * (growth - l.dividend.integral(t)).exp();
                    num += f * (r - l.dividend.rate(t));
                    den += f;
                }
                num / den
            }
        }
    }

    /// Instantaneous dividend yield `q(t) = r(t) − μ(t)`.
    pub fn dividend_yield(&self, t: f64) -> f64 {
        self.rates.rate(t) - self.drift(t)
    }

    /// `F(t1) / F(t0)`.
    pub fn growth(&self, t0: f64, t1: f64) -> f64 {
        self.forward(t1) / self.forward(t0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yield_forward() {
        let f = ForwardCurve::with_yield(100.0, RateCurve::flat(0.03), RateCurve::flat(0.01));
        assert!((f.forward(2.0) - 100.0 * (0.04f64).exp()).abs() < 1e-12);
        assert!((f.drift(1.3) - 0.02).abs() < 1e-15);
        assert!((f.dividend_yield(1.3) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn basket_forward_is_sum_of_constituent_forwards() {
        let rates = RateCurve::new(vec![(0.0, 0.01), (2.0, 0.04)]).unwrap();
        let legs = vec![
            BasketLeg {
                weight: 0.3,
                spot: 50.0,
                dividend: RateCurve::flat(0.0),
            },
            BasketLeg {
                weight: 1.2,
                spot: 80.0,
                dividend: RateCurve::flat(0.05),
            },
        ];
        let spot = 0.3 * 50.0 + 1.2 * 80.0;
        let basket = ForwardCurve::new(spot, rates.clone(), Carry::Basket(legs.clone()));
        for &t in &[0.0, 0.4, 1.0, 3.5] {
            let direct: f64 = legs
                .iter()
                .map(|l| {
                    l.weight
                        * ForwardCurve::with_yield(l.spot, rates.clone(), l.dividend.clone())
                            .forward(t)
                })
                .sum();
            assert!((basket.forward(t) - direct).abs() < 1e-12);
            // drift is the log-derivative of the forward
            let h = 1e-6;
            let fd = ((basket.forward(t + h)).ln() - (basket.forward((t - h).max(0.0))).ln())
                / (t + h - (t - h).max(0.0));
            assert!((basket.drift(t) - fd).abs() < 1e-7);
        }
    }
}
