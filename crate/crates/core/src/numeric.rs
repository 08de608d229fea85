//! Small numeric helpers shared by the analytic and fitting code.

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of an iterator of floats.
pub fn csum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// Bisection for an increasing function on `[lo, hi]` with `f(lo) <= 0 <= f(hi)`.
/// Stops when the bracket is narrower than `rel_tol * hi`.
pub fn bisect_increasing<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= rel_tol * hi.abs() {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
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
    fn compensated_sum_beats_naive_on_cancellation() {
        let xs = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(csum(xs), 2.0);
    }

    #[test]
    fn bisection_finds_root() {
        let r = bisect_increasing(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }
}
