//! Fixed-step classical Runge-Kutta with piecewise-linear dense output.

use crate::dynamics::Vector;
use crate::error::{param, Error, Result};

/// Knots `(t_k, x_k)` of an integrated trajectory.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
}

impl DenseSolution {
    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("nonempty solution")
    }

    pub fn last(&self) -> &Vector {
        self.states.last().expect("nonempty solution")
    }

    /// Linear interpolation between knots; clamps outside the interval.
    pub fn eval(&self, t: f64) -> Vector {
        if t <= self.times[0] {
            return self.states[0].clone();
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k >= self.times.len() {
            return self.last().clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        &self.states[k - 1] * (1.0 - w) + &self.states[k] * w
    }
}

/// Integrates `x' = f(x)` from `x0` over `[t0, t1]` with step `dt`; the last
/// step is shortened to land on `t1`.
pub fn rk4<F>(f: F, x0: &Vector, t0: f64, t1: f64, dt: f64) -> Result<DenseSolution>
where
    F: Fn(&Vector) -> Vector,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(param(format!("integrator step {dt} must be positive")));
    }
    if !(t1 >= t0) {
        return Err(param(format!("empty interval [{t0}, {t1}]")));
    }
    let steps = ((t1 - t0) / dt).ceil().max(0.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(t0);
    states.push(x0.clone());
    let mut x = x0.clone();
    for k in 0..steps {
        let ta = t0 + k as f64 * dt;
        let tb = if k + 1 == steps { t1 } else { t0 + (k + 1) as f64 * dt };
        let h = tb - ta;
        if h <= 0.0 {
            continue;
        }
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (h / 2.0)));
        let k3 = f(&(&x + &k2 * (h / 2.0)));
        let k4 = f(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(tb));
        }
        times.push(tb);
        states.push(x.clone());
    }
    Ok(DenseSolution { times, states })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Vector {
        Vector::from_element(1, v)
    }

    #[test]
    fn exponential_decay() {
        let sol = rk4(|x| -x, &scalar(1.0), 0.0, 1.0, 1e-2).unwrap();
        assert_eq!(sol.end(), 1.0);
        assert!((sol.last()[0] - (-1f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn zero_field_is_constant() {
        let x0 = Vector::from_column_slice(&[1.5, -2.0]);
        let sol = rk4(|x| Vector::zeros(x.len()), &x0, 0.0, 3.0, 0.1).unwrap();
        assert!(sol.states.iter().all(|s| *s == x0));
    }

    #[test]
    fn affine_closed_form() {
        let sol = rk4(|x| x * -2.0 + Vector::from_element(1, 1.0), &scalar(0.0), 0.0, 1.0, 1e-2).unwrap();
        let exact = (1.0 - (-2f64).exp()) / 2.0;
        assert!((sol.last()[0] - exact).abs() < 1e-6);
    }

    #[test]
    fn fourth_order_under_halving() {
        let err = |dt: f64| (rk4(|x| -x, &scalar(1.0), 0.0, 1.0, dt).unwrap().last()[0] - (-1f64).exp()).abs();
        let ratio = err(0.1) / err(0.05);
        assert!(ratio >= 12.0, "ratio {ratio}");
    }

    #[test]
    fn dense_output_hits_knots() {
        let sol = rk4(|x| -x, &scalar(1.0), 0.0, 0.25, 0.1).unwrap();
        assert_eq!(sol.times, vec![0.0, 0.1, 0.2, 0.25]);
        assert_eq!(sol.eval(0.1), sol.states[1]);
        assert_eq!(sol.eval(-1.0), sol.states[0]);
        assert_eq!(sol.eval(9.0), sol.states[3]);
        let mid = sol.eval(0.05)[0];
        assert!((mid - (sol.states[0][0] + sol.states[1][0]) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(rk4(|x| -x, &scalar(1.0), 0.0, 1.0, 0.0).is_err());
        assert!(rk4(|x| -x, &scalar(1.0), 1.0, 0.0, 0.1).is_err());
        assert!(matches!(rk4(|x| x * 1e300, &scalar(1e10), 0.0, 1.0, 0.5), Err(Error::NonFinite(_))));
    }
}
