//! Forward-mode dual numbers `a + b*eps`, `eps^2 = 0`.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: f64,
}

impl Dual {
    pub fn new(re: f64, eps: f64) -> Self {
        Dual { re, eps }
    }

    pub fn constant(re: f64) -> Self {
        Dual { re, eps: 0.0 }
    }

    pub fn variable(re: f64) -> Self {
        Dual { re, eps: 1.0 }
    }

    /// Applies a scalar function given its value and derivative at `re`.
    pub fn chain(self, value: f64, slope: f64) -> Self {
        Dual {
            re: value,
            eps: slope * self.eps,
        }
    }

    pub fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }

    pub fn ln(self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }

    pub fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }

    pub fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }

    pub fn tan(self) -> Self {
        let t = self.re.tan();
        self.chain(t, 1.0 + t * t)
    }

    pub fn tanh(self) -> Self {
        let t = self.re.tanh();
        self.chain(t, 1.0 - t * t)
    }

    pub fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }

    pub fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::constant(1.0);
        }
        self.chain(self.re.powi(n), n as f64 * self.re.powi(n - 1))
    }

    pub fn powf(self, e: Dual) -> Self {
        let v = self.re.powf(e.re);
        let mut eps = 0.0;
        if self.eps != 0.0 {
            eps += e.re * self.re.powf(e.re - 1.0) * self.eps;
        }
        if e.eps != 0.0 {
            eps += v * self.re.ln() * e.eps;
        }
        Dual { re: v, eps }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual::new(self.re / o.re, (self.eps * o.re - self.re * o.eps) / (o.re * o.re))
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.re, -self.eps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let x = Dual::variable(2.0);
        let y = x * x.sin();
        assert!((y.eps - (2.0f64.sin() + 2.0 * 2.0f64.cos())).abs() < 1e-14);
    }

    #[test]
    fn quotient_and_power() {
        let x = Dual::variable(3.0);
        let y = Dual::constant(1.0) / x;
        assert!((y.eps + 1.0 / 9.0).abs() < 1e-15);
        let z = x.powf(Dual::constant(2.5));
        assert!((z.eps - 2.5 * 3.0f64.powf(1.5)).abs() < 1e-12);
    }
}
