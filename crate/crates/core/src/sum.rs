//! Compensated summation.

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub const fn new() -> Self {
        NeumaierSum {
            sum: 0.0,
            compensation: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for NeumaierSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        s.extend(iter);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_cancelled_terms() {
        let s: NeumaierSum = [1.0, 1e100, 1.0, -1e100].into_iter().collect();
        assert_eq!(s.total(), 2.0);
    }

    #[test]
    fn beats_naive_on_many_small_terms() {
        let n = 10_000_000;
        let mut s = NeumaierSum::new();
        let mut naive = 0.0;
        for _ in 0..n {
            s.add(0.1);
            naive += 0.1;
        }
        let exact = 1_000_000.0;
        assert!((s.total() - exact).abs() < 1e-9);
        assert!((naive - exact).abs() > 1e-6);
    }

    #[test]
    fn negation_is_exact() {
        let xs = [0.3, 1.7e-3, 12.5, 0.1, 7.0e-9];
        let a: NeumaierSum = xs.iter().copied().collect();
        let b: NeumaierSum = xs.iter().map(|x| -x).collect();
        assert_eq!(a.total().to_bits(), (-b.total()).to_bits());
    }
}
