//! Dormand–Prince 5(4) embedded Runge–Kutta integrator for complex-valued
//! state vectors, with PI step-size control and first-same-as-last reuse.

use num_complex::Complex64;

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Error coefficients: b5 - b4.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const BETA: f64 = 0.04;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

/// What the per-step observer wants the integrator to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// The observer requested a stop.
    Stopped,
    /// Reached the end time.
    Finished,
    /// Hit the step budget before either of the above.
    StepLimit,
    /// Step size underflowed.
    StepUnderflow,
}

#[derive(Debug, Clone, Copy)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

pub struct Dopri5 {
    tol: Tolerances,
    max_steps: usize,
    k: [Vec<Complex64>; 7],
    y_stage: Vec<Complex64>,
    y_new: Vec<Complex64>,
}

impl Dopri5 {
    pub fn new(dim: usize, tol: Tolerances, max_steps: usize) -> Self {
        let z = || vec![Complex64::new(0.0, 0.0); dim];
        Self {
            tol,
            max_steps,
            k: [z(), z(), z(), z(), z(), z(), z()],
            y_stage: z(),
            y_new: z(),
        }
    }

    /// Integrates `y' = f(t, y)` in place from `t0` to at most `t_end`.
    ///
    /// After every accepted step `observer(t, y, y')` is called with the new
    /// state and its derivative (the FSAL stage, so no extra evaluation).
    /// Returns the outcome, the final time, and step statistics.
    pub fn integrate<F, O>(
        &mut self,
        mut f: F,
        y: &mut [Complex64],
        t0: f64,
        t_end: f64,
        h_init: f64,
        mut observer: O,
    ) -> (Outcome, f64, Stats)
    where
        F: FnMut(f64, &[Complex64], &mut [Complex64]),
        O: FnMut(f64, &[Complex64], &[Complex64]) -> Control,
    {
        let n = y.len();
        let mut stats = Stats {
            accepted: 0,
            rejected: 0,
            evaluations: 0,
        };
        let mut t = t0;
        let mut h = h_init.min(t_end - t0);
        let mut prev_err: f64 = 1e-4;
        let mut last_rejected = false;

        f(t, y, &mut self.k[0]);
        stats.evaluations += 1;
        if observer(t, y, &self.k[0]) == Control::Stop {
            return (Outcome::Stopped, t, stats);
        }

        while stats.accepted + stats.rejected < self.max_steps {
            if t >= t_end {
                return (Outcome::Finished, t, stats);
            }
            if h < 1e-14 * t.abs().max(1e-300) || h <= 0.0 {
                return (Outcome::StepUnderflow, t, stats);
            }
            if t + h > t_end {
                h = t_end - t;
            }

            self.stages(&mut f, y, t, h);
            stats.evaluations += 6;

            let mut err_sq = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * self.k[0][i]
                        + E3 * self.k[2][i]
                        + E4 * self.k[3][i]
                        + E5 * self.k[4][i]
                        + E6 * self.k[5][i]
                        + E7 * self.k[6][i]);
                let scale = self.tol.atol + self.tol.rtol * y[i].norm().max(self.y_new[i].norm());
                err_sq += (e.norm() / scale).powi(2);
            }
            let err = (err_sq / n as f64).sqrt();

            if err <= 1.0 {
                let err = err.max(1e-10);
                let mut factor = SAFETY * err.powf(-0.2 + 0.75 * BETA) * prev_err.powf(BETA);
                factor = factor.clamp(MIN_FACTOR, MAX_FACTOR);
                if last_rejected {
                    factor = factor.min(1.0);
                }
                prev_err = err;
                t += h;
                y.copy_from_slice(&self.y_new);
                self.k.swap(0, 6);
                stats.accepted += 1;
                last_rejected = false;
                h *= factor;
                if observer(t, y, &self.k[0]) == Control::Stop {
                    return (Outcome::Stopped, t, stats);
                }
            } else {
                let factor = (SAFETY * err.powf(-0.2)).max(MIN_FACTOR);
                h *= factor;
                stats.rejected += 1;
                last_rejected = true;
            }
        }
        (Outcome::StepLimit, t, stats)
    }

    fn stages<F>(&mut self, f: &mut F, y: &[Complex64], t: f64, h: f64)
    where
        F: FnMut(f64, &[Complex64], &mut [Complex64]),
    {
        let n = y.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ys = &mut self.y_stage;

        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, ys, k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, ys, k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, ys, k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, ys, k5);
        for i in 0..n {
            ys[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, ys, k6);
        for i in 0..n {
            self.y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, &self.y_new, k7);
    }
}
