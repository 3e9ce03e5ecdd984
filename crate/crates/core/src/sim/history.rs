use crate::error::{Error, Result};

/// Snap tolerance, in steps, for lookups landing on a grid point.
const GRID_SNAP: f64 = 1e-9;

/// Ring buffer of one link's rate on the integration grid.
///
/// Grid point `k` sits at time `k·h`. Each point stores the rate and, once
/// known, its time derivative; lookups between points use cubic Hermite
/// interpolation, falling back to linear when a slope is still unknown.
/// Before time zero the history is the constant initial rate.
#[derive(Clone, Debug)]
pub struct History {
    values: Vec<f64>,
    slopes: Vec<f64>,
    newest: usize,
    len: usize,
    initial: f64,
    step: f64,
}

impl History {
    /// `depth` is the number of grid points retained (at least 2).
    pub fn new(initial: f64, depth: usize, step: f64) -> Self {
        let depth = depth.max(2);
        let mut values = vec![f64::NAN; depth];
        let mut slopes = vec![f64::NAN; depth];
        values[0] = initial;
        slopes[0] = f64::NAN;
        History { values, slopes, newest: 0, len: 1, initial, step }
    }

    pub fn depth(&self) -> usize {
        self.values.len()
    }

    pub fn initial(&self) -> f64 {
        self.initial
    }

    /// Grid index of the newest stored point.
    pub fn newest(&self) -> usize {
        self.newest
    }

    pub fn newest_value(&self) -> f64 {
        self.values[self.slot(self.newest)]
    }

    fn slot(&self, k: usize) -> usize {
        k % self.values.len()
    }

    pub fn push(&mut self, value: f64) {
        self.newest += 1;
        let s = self.slot(self.newest);
        self.values[s] = value;
        self.slopes[s] = f64::NAN;
        self.len = (self.len + 1).min(self.values.len());
    }

    /// Records the derivative at the newest point.
    pub fn set_newest_slope(&mut self, slope: f64) {
        let s = self.slot(self.newest);
        self.slopes[s] = slope;
    }

    fn oldest(&self) -> usize {
        self.newest + 1 - self.len
    }

    fn point(&self, k: usize) -> (f64, f64) {
        let s = self.slot(k);
        (self.values[s], self.slopes[s])
    }

    /// Rate at grid position `pos` (time / step). `pos` may not exceed the
    /// newest point.
    pub fn at(&self, pos: f64, link: usize) -> Result<f64> {
        if pos <= GRID_SNAP {
            return Ok(self.initial);
        }
        let newest = self.newest as f64;
        if pos > newest + GRID_SNAP {
            return Err(Error::HistoryUnderrun { link, position: pos });
        }
        let mut k = pos.floor();
        let mut theta = pos - k;
        if theta > 1.0 - GRID_SNAP {
            k += 1.0;
            theta = 0.0;
        }
        let k = k as usize;
        if k < self.oldest() {
            return Err(Error::HistoryUnderrun { link, position: pos });
        }
        if theta < GRID_SNAP || k >= self.newest {
            return Ok(self.point(k.min(self.newest)).0);
        }
        let (y0, m0) = self.point(k);
        let (y1, m1) = self.point(k + 1);
        if m0.is_nan() || m1.is_nan() {
            return Ok(y0 + theta * (y1 - y0));
        }
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + theta;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * y0 + h10 * self.step * m0 + h01 * y1 + h11 * self.step * m1)
    }

    pub fn at_time(&self, t: f64, link: usize) -> Result<f64> {
        self.at(t / self.step, link)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_before_zero() {
        let h = History::new(2.5, 4, 0.1);
        assert_eq!(h.at(-30.0, 0).unwrap(), 2.5);
        assert_eq!(h.at(0.0, 0).unwrap(), 2.5);
        assert!(h.at(0.5, 0).is_err());
    }

    #[test]
    fn hermite_is_exact_for_cubics() {
        let step = 0.25;
        let f = |t: f64| 1.0 + t - 0.5 * t * t + 0.3 * t * t * t;
        let df = |t: f64| 1.0 - t + 0.9 * t * t;
        let mut h = History::new(f(0.0), 8, step);
        h.set_newest_slope(df(0.0));
        for k in 1..=6 {
            let t = k as f64 * step;
            h.push(f(t));
            h.set_newest_slope(df(t));
        }
        for pos in [0.1, 1.5, 2.37, 5.99, 6.0] {
            let t = pos * step;
            assert!((h.at(pos, 0).unwrap() - f(t)).abs() < 1e-13, "{pos}");
        }
    }

    #[test]
    fn linear_when_slope_unknown() {
        let mut h = History::new(0.0, 4, 1.0);
        h.set_newest_slope(0.0);
        h.push(2.0);
        assert_eq!(h.at(0.5, 0).unwrap(), 1.0);
    }

    #[test]
    fn ring_forgets_old_points() {
        let mut h = History::new(0.0, 3, 1.0);
        for k in 1..=5 {
            h.push(k as f64);
        }
        assert_eq!(h.at(5.0, 0).unwrap(), 5.0);
        assert_eq!(h.at(3.0, 0).unwrap(), 3.0);
        assert!(matches!(h.at(2.5, 0), Err(Error::HistoryUnderrun { .. })));
    }
}
