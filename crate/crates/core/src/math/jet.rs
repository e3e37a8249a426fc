use std::ops::{Add, Mul, Neg, Sub};

/// A value carried together with its first and second derivative with
/// respect to a single variable (log-moneyness, in practice).
///
/// Only the linear operations needed by the surface interpolation are
/// provided; products of two jets never occur there.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet {
        value: 0.0,
        d1: 0.0,
        d2: 0.0,
    };

    pub fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(value, 0.0, 0.0)
    }

    /// The jet with the smaller value; derivatives follow the active branch.
    pub fn min_by_value(self, other: Jet) -> Jet {
        if other.value < self.value {
            other
        } else {
            self
        }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        Jet::new(self.value + rhs.value, self.d1 + rhs.d1, self.d2 + rhs.d2)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        Jet::new(self.value - rhs.value, self.d1 - rhs.d1, self.d2 - rhs.d2)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        Jet::new(self.value * rhs, self.d1 * rhs, self.d2 * rhs)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet::new(-self.value, -self.d1, -self.d2)
    }
}
