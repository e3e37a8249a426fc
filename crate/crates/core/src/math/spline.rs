use super::Jet;

/// Cubic spline with zero end slopes, extended flat beyond the knots.
///
/// The zero end slopes make the flat extension continuously differentiable
/// at both ends, so a quantity interpolated with it never develops a kink at
/// the edge of the quoted range.
#[derive(Clone, Debug)]
pub struct ClampedSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    // second derivatives at the knots
    m: Vec<f64>,
}

impl ClampedSpline {
    /// `x` must be strictly increasing and non-empty, `y` of the same length.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert_eq!(x.len(), y.len());
        assert!(!x.is_empty());
        let n = x.len();
        let m = if n < 2 {
            vec![0.0; n]
        } else {
            Self::moments(&x, &y)
        };
        Self { x, y, m }
    }

    fn moments(x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();

        // tridiagonal system: sub a, diag b, super c, rhs d
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        b[0] = 2.0 * h[0];
        c[0] = h[0];
        d[0] = 6.0 * delta[0];
        for i in 1..n - 1 {
            a[i] = h[i - 1];
            b[i] = 2.0 * (h[i - 1] + h[i]);
            c[i] = h[i];
            d[i] = 6.0 * (delta[i] - delta[i - 1]);
        }
        a[n - 1] = h[n - 2];
        b[n - 1] = 2.0 * h[n - 2];
        d[n - 1] = -6.0 * delta[n - 2];

        // Thomas algorithm
        for i in 1..n {
            let w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = d[n - 1] / b[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (d[i] - c[i] * m[i + 1]) / b[i];
        }
        m
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Value, slope and curvature at `t`.
    pub fn eval(&self, t: f64) -> Jet {
        let n = self.x.len();
        if n == 1 || t <= self.x[0] {
            return Jet::constant(self.y[0]);
        }
        if t >= self.x[n - 1] {
            return Jet::constant(self.y[n - 1]);
        }
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = 1.0 - a;
        let (mi, mj) = (self.m[i], self.m[i + 1]);
        let value = a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * mi + (b * b * b - b) * mj) * h * h / 6.0;
        let slope = (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) / 6.0 * h * mi
            + (3.0 * b * b - 1.0) / 6.0 * h * mj;
        let curvature = a * mi + b * mj;
        Jet::new(value, slope, curvature)
    }
}
