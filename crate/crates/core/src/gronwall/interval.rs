use std::ops::{Add, Mul, Neg, Sub};

/// Closed interval with outward rounding after every operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan());
        Self { lo, hi }
    }

    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    fn out(lo: f64, hi: f64) -> Self {
        Self { lo: lo.next_down(), hi: hi.next_up() }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn hull(&self, other: Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            -self
        } else {
            Interval::new(0.0, (-self.lo).max(self.hi))
        }
    }

    pub fn sqr(self) -> Interval {
        let a = self.abs();
        let r = Self::out(a.lo * a.lo, a.hi * a.hi);
        Interval::new(r.lo.max(0.0), r.hi)
    }

    pub fn powi(self, n: u32) -> Interval {
        match n {
            0 => Interval::point(1.0),
            1 => self,
            _ if n.is_multiple_of(2) => self.sqr().powi(n / 2),
            _ => self * self.powi(n - 1),
        }
    }

    /// `exp` is monotone; the libm result is padded by one ulp each way.
    pub fn exp(self) -> Interval {
        Self::out(self.lo.exp().next_down().max(0.0), self.hi.exp().next_up())
    }

    pub fn recip(self) -> Interval {
        assert!(self.lo > 0.0 || self.hi < 0.0, "reciprocal of an interval containing 0");
        Self::out(1.0 / self.hi, 1.0 / self.lo)
    }

    pub fn max0(self) -> Interval {
        Interval::new(self.lo.max(0.0), self.hi.max(0.0))
    }
}

impl From<f64> for Interval {
    fn from(x: f64) -> Self {
        Interval::point(x)
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, o: Interval) -> Interval {
        Interval::out(self.lo + o.lo, self.hi + o.hi)
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, o: Interval) -> Interval {
        Interval::out(self.lo - o.hi, self.hi - o.lo)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::new(-self.hi, -self.lo)
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, o: Interval) -> Interval {
        let p = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::out(lo, hi)
    }
}

impl Add<f64> for Interval {
    type Output = Interval;
    fn add(self, o: f64) -> Interval {
        self + Interval::point(o)
    }
}

impl Sub<f64> for Interval {
    type Output = Interval;
    fn sub(self, o: f64) -> Interval {
        self - Interval::point(o)
    }
}

impl Mul<f64> for Interval {
    type Output = Interval;
    fn mul(self, o: f64) -> Interval {
        self * Interval::point(o)
    }
}

/// Uniform grid on `[0, len]` used by every certified quadrature.
#[derive(Debug, Clone)]
pub struct Grid {
    pub len: f64,
    pub cells: usize,
}

impl Grid {
    pub fn new(len: f64, cells: usize) -> Self {
        assert!(len >= 0.0 && cells > 0);
        Self { len, cells }
    }

    pub fn h(&self) -> f64 {
        self.len / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.cells {
            self.len
        } else {
            self.len * i as f64 / self.cells as f64
        }
    }

    pub fn cell(&self, i: usize) -> Interval {
        Interval::new(self.node(i), self.node(i + 1))
    }

    /// Index of the first node at or right of `s`.
    fn ceil_index(&self, s: f64) -> usize {
        if self.len == 0.0 {
            return 0;
        }
        let k = (s / self.len * self.cells as f64).ceil();
        (k.max(0.0) as usize).min(self.cells)
    }
}

/// Upper bound of `∫₀^len f` as the sum of `h · sup f(cell)`.
pub fn upper_integral(grid: &Grid, f: impl Fn(Interval) -> Interval) -> f64 {
    let h = Interval::point(grid.h());
    let mut acc = Interval::point(0.0);
    for i in 0..grid.cells {
        acc = acc + h * Interval::point(f(grid.cell(i)).hi);
    }
    acc.hi
}

/// Node-wise upper bounds of `s ↦ ∫₀^s f` for a nonnegative integrand. As a
/// function of `s` it is nondecreasing, so its sup over a cell is its value at
/// the right node.
#[derive(Debug, Clone)]
pub struct Cumulative {
    grid: Grid,
    upper: Vec<f64>,
}

impl Cumulative {
    pub fn new(grid: &Grid, f: impl Fn(Interval) -> Interval) -> Self {
        let h = Interval::point(grid.h());
        let mut upper = Vec::with_capacity(grid.cells + 1);
        let mut acc = Interval::point(0.0);
        upper.push(0.0);
        for i in 0..grid.cells {
            // Negative parts are dropped: the bound stays valid for |f|-type
            // integrands and the function stays monotone.
            acc = acc + h * Interval::point(f(grid.cell(i)).hi.max(0.0));
            upper.push(acc.hi);
        }
        Self { grid: grid.clone(), upper }
    }

    pub fn total(&self) -> f64 {
        *self.upper.last().unwrap()
    }

    pub fn eval(&self, s: Interval) -> Interval {
        Interval::new(0.0, self.upper[self.grid.ceil_index(s.hi)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_encloses_exact_results() {
        let a = Interval::new(-1.0, 2.0);
        let b = Interval::new(3.0, 4.0);
        let p = a * b;
        assert!(p.contains(-4.0) && p.contains(8.0));
        assert!((a - b).contains(-5.0) && (a - b).contains(-1.0));
        assert_eq!(a.abs().lo, 0.0);
        assert!(a.sqr().contains(4.0) && a.sqr().lo == 0.0);
        assert!(Interval::point(1.0).exp().contains(std::f64::consts::E));
    }

    #[test]
    fn upper_integral_bounds_from_above() {
        let g = Grid::new(1.0, 1000);
        let u = upper_integral(&g, |s| s.sqr());
        assert!((1.0 / 3.0..1.0 / 3.0 + 2e-3).contains(&u));
        let c = Cumulative::new(&g, |s| s);
        assert!(c.total() >= 0.5);
        assert!(c.eval(Interval::point(0.5)).hi >= 0.125);
    }
}
