//! Step-size control for the inner gradient iterations.

use crate::error::Result;

/// Outcome of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub alpha: f64,
    pub value: f64,
    pub evaluations: usize,
    /// Whether the line search had to shrink the initial step.
    pub backtracked: bool,
    /// Whether no trial satisfied the decrease condition.
    pub stalled: bool,
}

/// Objective evaluated at a trial point.
pub type EvalFn<'a> = dyn FnMut(&[f64]) -> Result<f64> + 'a;

pub trait Stepper: Send {
    /// Moves `z` along `-dir`. `grad` is the raw gradient at `z`, used in the
    /// sufficient-decrease test; `project` maps a trial point back into the
    /// feasible box. The last call to `eval` is always at the accepted
    /// point.
    fn step(
        &mut self,
        z: &mut [f64],
        value: f64,
        grad: &[f64],
        dir: &[f64],
        eval: &mut EvalFn<'_>,
        project: &dyn Fn(&mut [f64]),
    ) -> Result<StepReport>;

    /// Forgets curvature history, e.g. after the objective changed shape,
    /// and restarts from step length `initial`.
    fn reset(&mut self, initial: f64);
}

/// Barzilai-Borwein step length with Armijo backtracking.
#[derive(Debug, Clone)]
pub struct BbArmijo {
    pub initial: f64,
    pub min_alpha: f64,
    pub max_alpha: f64,
    pub c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    prev_z: Vec<f64>,
    prev_dir: Vec<f64>,
    last_alpha: f64,
    trial: Vec<f64>,
}

impl BbArmijo {
    pub fn new(initial: f64) -> Self {
        BbArmijo {
            initial,
            min_alpha: 1e-12,
            max_alpha: 1e6,
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 8,
            prev_z: Vec::new(),
            prev_dir: Vec::new(),
            last_alpha: initial,
            trial: Vec::new(),
        }
    }

    fn initial_alpha(&self, z: &[f64], dir: &[f64]) -> f64 {
        if self.prev_z.len() != z.len() {
            return self.initial;
        }
        let (mut ss, mut yy) = (0.0, 0.0);
        for k in 0..z.len() {
            let s = z[k] - self.prev_z[k];
            let y = dir[k] - self.prev_dir[k];
            ss += s * s;
            yy += y * y;
        }
        if ss > 0.0 && yy > 0.0 {
            (ss / yy).sqrt()
        } else {
            self.last_alpha
        }
    }
}

impl Stepper for BbArmijo {
    fn step(
        &mut self,
        z: &mut [f64],
        value: f64,
        grad: &[f64],
        dir: &[f64],
        eval: &mut EvalFn<'_>,
        project: &dyn Fn(&mut [f64]),
    ) -> Result<StepReport> {
        let mut alpha = self.initial_alpha(z, dir).clamp(self.min_alpha, self.max_alpha);
        self.prev_z.clear();
        self.prev_z.extend_from_slice(z);
        self.prev_dir.clear();
        self.prev_dir.extend_from_slice(dir);
        self.trial.resize(z.len(), 0.0);
        let mut evaluations = 0;
        let mut backtracked = false;
        loop {
            for k in 0..z.len() {
                self.trial[k] = z[k] - alpha * dir[k];
            }
            project(&mut self.trial);
            let f = eval(&self.trial)?;
            evaluations += 1;
            let decrease: f64 = (0..z.len()).map(|k| grad[k] * (z[k] - self.trial[k])).sum();
            let ok = f <= value - self.c1 * decrease;
            if ok || evaluations > self.max_backtracks {
                z.copy_from_slice(&self.trial);
                self.last_alpha = alpha;
                return Ok(StepReport {
                    alpha,
                    value: f,
                    evaluations,
                    backtracked,
                    stalled: !ok,
                });
            }
            alpha *= self.shrink;
            backtracked = true;
        }
    }

    fn reset(&mut self, initial: f64) {
        self.initial = initial;
        self.last_alpha = initial;
        self.prev_z.clear();
        self.prev_dir.clear();
    }
}
