//! Classical fourth-order Runge-Kutta on a flat real state vector.

pub(crate) struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// One step of `y' = f(y)` from `y` with step `h` into `out`.
    pub(crate) fn step<F>(&mut self, f: &mut F, y: &[f64], h: f64, out: &mut [f64])
    where
        F: FnMut(&[f64], &mut [f64]) + ?Sized,
    {
        let n = y.len();
        f(y, &mut self.k1);
        for ((t, yi), k) in self.tmp.iter_mut().zip(y).zip(&self.k1) {
            *t = yi + 0.5 * h * k;
        }
        f(&self.tmp, &mut self.k2);
        for ((t, yi), k) in self.tmp.iter_mut().zip(y).zip(&self.k2) {
            *t = yi + 0.5 * h * k;
        }
        f(&self.tmp, &mut self.k3);
        for ((t, yi), k) in self.tmp.iter_mut().zip(y).zip(&self.k3) {
            *t = yi + h * k;
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = y[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Validated landing schedule: every requested output time followed by the
/// final time, strictly increasing from `t0`.
pub(crate) fn landing_times(t0: f64, t_final: f64, output_times: &[f64]) -> Result<Vec<f64>, String> {
    if !(t_final >= t0) || !t_final.is_finite() {
        return Err(format!("t_final = {t_final} precedes t0 = {t0}"));
    }
    let mut prev = f64::NEG_INFINITY;
    for &t in output_times {
        if !(t >= t0 && t <= t_final) {
            return Err(format!("output time {t} outside [{t0}, {t_final}]"));
        }
        if !(t > prev) {
            return Err(format!("output times not strictly increasing at {t}"));
        }
        prev = t;
    }
    Ok(output_times.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourth_order_on_exponential_decay() {
        let mut rk = Rk4::new(1);
        let mut f = |y: &[f64], dy: &mut [f64]| dy[0] = -y[0];
        let err = |h: f64, rk: &mut Rk4, f: &mut dyn FnMut(&[f64], &mut [f64])| {
            let mut y = [1.0];
            let steps = (1.0 / h).round() as usize;
            let mut out = [0.0];
            for _ in 0..steps {
                rk.step(f, &y, h, &mut out);
                y = out;
            }
            (y[0] - (-1.0f64).exp()).abs()
        };
        let e1 = err(0.1, &mut rk, &mut f);
        let e2 = err(0.05, &mut rk, &mut f);
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn landing_schedule_validation() {
        assert!(landing_times(0.0, 1.0, &[0.0, 0.5, 1.0]).is_ok());
        assert!(landing_times(0.0, 1.0, &[0.5, 0.5]).is_err());
        assert!(landing_times(0.0, 1.0, &[1.5]).is_err());
        assert!(landing_times(1.0, 0.0, &[]).is_err());
    }
}
