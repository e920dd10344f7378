//! Nested augmented-Lagrangian placement.
//!
//! The innermost level takes preconditioned gradient steps on
//! `sum_e w_e WA_e + sum_s lambda_s (Phi_s + C_s/2 Phi_s^2) + eta Gamma`.
//! Around it, the density level raises the multipliers until every field's
//! overflow is under the threshold, the routability level inflates crowded
//! instances, the clock level plans instance-to-region assignments, and the
//! timing level reweights critical nets.

mod config;
mod inflate;
mod precond;
mod schedule;
mod stepper;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use config::EngineConfig;
pub use inflate::{inflate_areas, pin_density, InflationReport};
pub use precond::{dynamic_alpha, jacobi_factor, precondition_factor, wl_preconditioner};
pub use schedule::{init_lambda, LambdaSchedule};
pub use stepper::{BbArmijo, EvalFn, StepReport, Stepper};

use crate::arch::{Device, FieldKind, Netlist, PerField};
use crate::chains::{align_chains, average_chain_gradient};
use crate::clockplan::{clock_demand, clock_penalty, plan_mapping_with, update_eta, ClockPlan, PlanConfig};
use crate::error::{Error, Result};
use crate::fields::{insert_fillers, BinGrid, Charge, FieldState, PoissonSolver};
use crate::timing::{self, TimingReport};
use crate::wirelen::{gamma_for_overflow, hpwl, smooth_wl_into};

/// Quantities from one objective evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalInfo {
    pub value: f64,
    pub wl: f64,
    pub phi: PerField<f64>,
    pub overflow: PerField<f64>,
    pub clock: f64,
    /// `|grad T|_1` over movable instances.
    pub wl_norm: f64,
    /// `|grad T|_1` restricted to the movable instances of each field.
    pub wl_norm_field: PerField<f64>,
    /// `|grad (Phi_s + C_s/2 Phi_s^2)|_1` over movable instances.
    pub density_norm: PerField<f64>,
    /// `|grad Gamma|_1` over movable instances.
    pub clock_norm: f64,
}

/// One line of the metrics stream, written after every density-level step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub iter: usize,
    pub hpwl: f64,
    pub overflow: BTreeMap<&'static str, f64>,
    pub wns: Option<f64>,
    pub tns: Option<f64>,
    pub eta: f64,
    pub lambda: BTreeMap<&'static str, f64>,
    pub gamma: f64,
    pub objective: f64,
}

fn field_map(v: &PerField<f64>) -> BTreeMap<&'static str, f64> {
    v.iter().map(|(k, x)| (k.name(), x)).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Fields whose multiplier could not be initialised from a zero gradient.
    pub lambda_init_skipped: Vec<String>,
    /// Fields whose balance factor fell back to 1 for lack of instances.
    pub alpha_guards: usize,
    pub weights_capped: usize,
    pub timing_rounds: usize,
    pub clock_plans: usize,
    pub clock_plan_failures: usize,
    pub inflation_rounds: usize,
    pub inflated_instances: usize,
    /// Smallest fraction of requested inflation that fit.
    pub inflation_kept: f64,
    pub stalled_steps: usize,
    pub evaluations: usize,
    /// Charges whose footprint was clamped to the layout at the last evaluation.
    pub clamped_charges: usize,
}

/// Output of [`Placer::run`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalPlacement {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub areas: Vec<f64>,
    pub weights: Vec<f64>,
    pub plan: Option<ClockPlan>,
    #[serde(skip)]
    pub metrics: Vec<Metrics>,
    pub converged: bool,
    pub iterations: usize,
    pub overflow: BTreeMap<&'static str, f64>,
    pub hpwl: f64,
    pub timing: Option<TimingReport>,
    pub diagnostics: Diagnostics,
}

/// Hooks called while the placer runs.
pub trait Observer {
    /// After every density-level step.
    fn metrics(&mut self, _m: &Metrics, _xs: &[f64], _ys: &[f64]) {}
}

impl Observer for () {}

/// The differentiable objective over instance and filler positions.
struct Objective<'a> {
    netlist: &'a Netlist,
    grid: BinGrid,
    solver: PoissonSolver,
    fields: Vec<FieldState>,
    active: PerField<bool>,
    n: usize,
    nv: usize,
    movable: Vec<bool>,
    /// Per field: instances with demand there and their unit-area charge.
    members: Vec<Vec<(usize, f64)>>,
    /// Per field: variable index of the first filler.
    filler_start: Vec<usize>,
    areas: Vec<f64>,
    weights: Vec<f64>,
    gamma: f64,
    eta: f64,
    plan: Option<ClockPlan>,
    grad: Vec<f64>,
    info: EvalInfo,
    iteration: usize,
    evaluations: usize,
    pool: Option<rayon::ThreadPool>,
}

impl Objective<'_> {
    fn evaluate(&mut self, z: &[f64]) -> Result<f64> {
        let (n, nv) = (self.n, self.nv);
        let (xs, ys) = z.split_at(nv);
        let mut grad = std::mem::take(&mut self.grad);
        grad.clear();
        grad.resize(2 * nv, 0.0);
        let (gx, gy) = grad.split_at_mut(nv);
        let mut info = EvalInfo {
            wl: smooth_wl_into(self.netlist, &xs[..n], &ys[..n], &self.weights, self.gamma, &mut gx[..n], &mut gy[..n]),
            ..EvalInfo::default()
        };
        for i in 0..n {
            if self.movable[i] {
                info.wl_norm += gx[i].abs() + gy[i].abs();
            }
        }
        for f in FieldKind::ALL {
            info.wl_norm_field[f] = self.members[f.index()]
                .iter()
                .filter(|&&(i, _)| self.movable[i])
                .map(|&(i, _)| gx[i].abs() + gy[i].abs())
                .sum();
        }

        let Objective {
            grid,
            solver,
            fields,
            active,
            members,
            filler_start,
            areas,
            movable,
            pool,
            ..
        } = self;
        let grid = *grid;
        let mut work = move || {
            fields
                .par_iter_mut()
                .enumerate()
                .map(|(s, f)| -> Result<Vec<(usize, f64, f64)>> {
                    if !active[f.kind] {
                        return Ok(Vec::new());
                    }
                    let charges: Vec<Charge> = members[s]
                        .iter()
                        .map(|&(i, unit)| {
                            let q = unit * areas[i];
                            let (w, h) = grid.footprint(q);
                            Charge { x: xs[i], y: ys[i], w, h, q }
                        })
                        .collect();
                    let start = filler_start[s];
                    for (k, c) in f.fillers.iter_mut().enumerate() {
                        c.x = xs[start + k];
                        c.y = ys[start + k];
                    }
                    f.update(solver, &charges)?;
                    let mut g = Vec::with_capacity(charges.len() + f.fillers.len());
                    for (c, &(i, _)) in charges.iter().zip(&members[s]) {
                        if movable[i] {
                            let (a, b) = f.energy_gradient(c);
                            g.push((i, a, b));
                        }
                    }
                    for (k, c) in f.fillers.iter().enumerate() {
                        let (a, b) = f.energy_gradient(c);
                        g.push((start + k, a, b));
                    }
                    Ok(g)
                })
                .collect::<Vec<_>>()
        };
        let per_field = match pool {
            Some(p) => p.install(work),
            None => work(),
        };

        let mut value = info.wl;
        for (s, g) in per_field.into_iter().enumerate() {
            let g = g?;
            let f = &self.fields[s];
            if !self.active[f.kind] {
                continue;
            }
            let d = 1.0 + f.alm_coeff * f.energy;
            let scale = f.multiplier * d;
            info.phi[f.kind] = f.energy;
            info.overflow[f.kind] = f.overflow();
            value += f.multiplier * f.alm_term();
            let mut norm = 0.0;
            for (v, a, b) in g {
                if v < n {
                    norm += a.abs() + b.abs();
                }
                gx[v] += scale * a;
                gy[v] += scale * b;
            }
            info.density_norm[f.kind] = d * norm;
        }

        if let Some(plan) = &self.plan {
            let mut cx = vec![0.0; n];
            let mut cy = vec![0.0; n];
            info.clock = clock_penalty(&xs[..n], &ys[..n], plan, &mut cx, &mut cy);
            value += self.eta * info.clock;
            for i in 0..n {
                if self.movable[i] {
                    info.clock_norm += cx[i].abs() + cy[i].abs();
                    gx[i] += self.eta * cx[i];
                    gy[i] += self.eta * cy[i];
                }
            }
        }
        for i in 0..n {
            if !self.movable[i] {
                gx[i] = 0.0;
                gy[i] = 0.0;
            }
        }

        self.evaluations += 1;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            self.grad = grad;
            return Err(Error::Divergence {
                iteration: self.iteration,
                reason: format!("objective {value}"),
            });
        }
        info.value = value;
        self.info = info;
        self.grad = grad;
        Ok(value)
    }

    /// Charge of instance `i` per field at unit area.
    fn unit_charge(&self, i: usize) -> PerField<f64> {
        let mut q = PerField::zeros();
        for (s, m) in self.members.iter().enumerate() {
            if let Ok(k) = m.binary_search_by_key(&i, |&(j, _)| j) {
                q.0[s] = m[k].1;
            }
        }
        q
    }

    /// Total instance charge per field at the current areas.
    fn instance_charge(&self) -> PerField<f64> {
        let mut q = PerField::zeros();
        for (s, m) in self.members.iter().enumerate() {
            q.0[s] = m.iter().map(|&(i, u)| u * self.areas[i]).sum();
        }
        q
    }

    /// Rescales filler charge so instances plus fillers fill each field.
    fn resize_fillers(&mut self) {
        let used = self.instance_charge();
        for f in self.fields.iter_mut() {
            if f.fillers.is_empty() {
                continue;
            }
            let free = (f.free_area() - used[f.kind]).max(0.0);
            let q = free / f.fillers.len() as f64;
            let (w, h) = self.grid.footprint(q);
            for c in f.fillers.iter_mut() {
                c.q = q;
                c.w = w;
                c.h = h;
            }
        }
    }

    fn filler_charge(&self, var: usize) -> Option<(FieldKind, f64)> {
        (0..self.fields.len()).find_map(|s| {
            let start = self.filler_start[s];
            let f = &self.fields[s];
            (var >= start && var < start + f.fillers.len()).then(|| (f.kind, f.fillers[var - start].q))
        })
    }
}

/// Global placer state: positions, multipliers and loop bookkeeping.
pub struct Placer<'a> {
    pub cfg: EngineConfig,
    netlist: &'a Netlist,
    device: &'a Device,
    obj: Objective<'a>,
    stepper: Box<dyn Stepper>,
    sched: LambdaSchedule,
    z: Vec<f64>,
    /// Per-variable wirelength preconditioner (0 for fillers).
    pw: Vec<f64>,
    /// Per-variable charge by field at current areas.
    var_area: Vec<PerField<f64>>,
    /// Per field: filler variables and the x intervals their centres may
    /// occupy, one per run of columns offering the resource.
    /// Variables whose x is confined to column centre lines, with the lanes.
    lanes: Vec<(Vec<usize>, Vec<(f64, f64)>)>,
    theta: PerField<f64>,
    alpha: PerField<f64>,
    grad_valid: bool,
    fresh_step: bool,
    iterations: usize,
    metrics: Vec<Metrics>,
    sta: Option<(f64, f64)>,
    diag: Diagnostics,
}

impl<'a> Placer<'a> {
    pub fn new(netlist: &'a Netlist, device: &'a Device, cfg: EngineConfig) -> Result<Self> {
        netlist.check_capacity(device)?;
        let n = netlist.num_instances();
        let bins = if cfg.bins > 0 { cfg.bins } else { BinGrid::default_bins(n) };
        let (w, h) = (device.width as f64, device.height as f64);
        let grid = BinGrid::for_device(device, bins);
        let solver = PoissonSolver::new(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

        let movable: Vec<bool> = netlist.instances.iter().map(|i| !i.fixed).collect();
        let mut members = vec![Vec::new(); FieldKind::COUNT];
        for (i, inst) in netlist.instances.iter().enumerate() {
            for f in FieldKind::ALL {
                if inst.demand[f] > 0.0 {
                    members[f.index()].push((i, inst.demand[f] * device.unit_area(f)));
                }
            }
        }
        let active = PerField(std::array::from_fn(|s| members[s].iter().any(|&(i, _)| movable[i])));

        let mut xs = vec![0.0; n];
        let mut ys = vec![0.0; n];
        for (i, inst) in netlist.instances.iter().enumerate() {
            if let Some((x, y)) = inst.fixed_at {
                xs[i] = x;
                ys[i] = y;
            } else {
                xs[i] = 0.5 * w + cfg.init_spread * w * rng.gen_range(-1.0..=1.0);
                ys[i] = 0.5 * h + cfg.init_spread * h * rng.gen_range(-1.0..=1.0);
            }
        }

        let mut fields = Vec::with_capacity(FieldKind::COUNT);
        let mut filler_start = Vec::with_capacity(FieldKind::COUNT);
        let mut nv = n;
        for f in FieldKind::ALL {
            let mut state = FieldState::new(f, grid, device);
            if active[f] {
                let demand: f64 = members[f.index()].iter().map(|&(_, q)| q).sum();
                state.fillers = insert_fillers(f, &grid, state.free_area(), demand, &mut rng)?;
            }
            filler_start.push(nv);
            nv += state.fillers.len();
            fields.push(state);
        }
        let mut z = vec![0.0; 2 * nv];
        z[..n].copy_from_slice(&xs);
        z[nv..nv + n].copy_from_slice(&ys);
        for (s, f) in fields.iter().enumerate() {
            for (k, c) in f.fillers.iter().enumerate() {
                z[filler_start[s] + k] = c.x;
                z[nv + filler_start[s] + k] = c.y;
            }
        }
        let mut lanes: Vec<_> = fields
            .iter()
            .enumerate()
            .map(|(s, f)| ((filler_start[s]..filler_start[s] + f.fillers.len()).collect::<Vec<_>>(), resource_lanes(device, f.kind)))
            .collect();
        // hard macros only fit in their own columns
        for field in [FieldKind::Dsp, FieldKind::Bram] {
            let vars: Vec<usize> = (0..n)
                .filter(|&i| movable[i] && netlist.instances[i].kind.primary_field() == Some(field))
                .collect();
            if !vars.is_empty() {
                lanes.push((vars, resource_lanes(device, field)));
            }
        }
        for (vars, iv) in &lanes {
            for &v in vars {
                z[v] = snap_to_lanes(z[v], iv);
            }
        }
        let mut var_movable = movable.clone();
        var_movable.resize(nv, true);

        let weights: Vec<f64> = netlist.nets.iter().map(|e| e.weight).collect();
        let pool = match cfg.threads {
            0 => None,
            t => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| Error::Config(e.to_string()))?,
            ),
        };
        let gamma = gamma_for_overflow(1.0, cfg.gamma_k);
        let sched = LambdaSchedule::new(
            PerField::zeros(),
            PerField::zeros(),
            cfg.mu_init,
            cfg.alm_beta,
            cfg.mu_lo,
            cfg.mu_hi,
            cfg.tau,
            cfg.lambda_cap,
        );
        let mut placer = Placer {
            netlist,
            device,
            obj: Objective {
                netlist,
                grid,
                solver,
                fields,
                active,
                n,
                nv,
                movable: var_movable,
                members,
                filler_start,
                areas: vec![1.0; n],
                weights,
                gamma,
                eta: 0.0,
                plan: None,
                grad: Vec::new(),
                info: EvalInfo::default(),
                iteration: 0,
                evaluations: 0,
                pool,
            },
            stepper: Box::new(BbArmijo::new(1.0)),
            sched,
            z,
            pw: Vec::new(),
            var_area: Vec::new(),
            lanes,
            theta: PerField::splat(1.0),
            alpha: PerField::splat(1.0),
            grad_valid: false,
            fresh_step: true,
            iterations: 0,
            metrics: Vec::new(),
            sta: None,
            diag: Diagnostics {
                inflation_kept: 1.0,
                ..Diagnostics::default()
            },
            cfg,
        };
        placer.refresh_preconditioner();
        placer.refresh_areas();
        Ok(placer)
    }

    pub fn num_instances(&self) -> usize {
        self.obj.n
    }

    /// Instances followed by fillers; all x first, then all y.
    pub fn variables(&self) -> &[f64] {
        &self.z
    }

    pub fn set_variables(&mut self, z: &[f64]) {
        self.z.copy_from_slice(z);
        self.grad_valid = false;
    }

    pub fn positions(&self) -> (&[f64], &[f64]) {
        let (n, nv) = (self.obj.n, self.obj.nv);
        (&self.z[..n], &self.z[nv..nv + n])
    }

    /// Objective value and gradient at `z` under the current parameters.
    pub fn objective_at(&mut self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let v = self.obj.evaluate(z)?;
        self.grad_valid = false;
        Ok((v, self.obj.grad.clone()))
    }

    pub fn set_multipliers(&mut self, lambda: &PerField<f64>, alm: &PerField<f64>) {
        for f in self.obj.fields.iter_mut() {
            f.multiplier = lambda[f.kind];
            f.alm_coeff = alm[f.kind];
        }
        self.sched.lambda = *lambda;
        self.grad_valid = false;
    }

    pub fn set_weights(&mut self, weights: &[f64]) {
        self.obj.weights.copy_from_slice(weights);
        self.refresh_preconditioner();
        self.grad_valid = false;
    }

    pub fn set_gamma(&mut self, gamma: f64) {
        self.obj.gamma = gamma;
        self.grad_valid = false;
    }

    pub fn set_clock(&mut self, plan: Option<ClockPlan>, eta: f64) {
        self.obj.plan = plan;
        self.obj.eta = eta;
        self.grad_valid = false;
    }

    pub fn set_areas(&mut self, areas: &[f64]) {
        self.obj.areas.copy_from_slice(areas);
        self.obj.resize_fillers();
        self.refresh_areas();
        self.grad_valid = false;
    }

    pub fn lambda(&self) -> PerField<f64> {
        self.sched.lambda
    }

    pub fn active_fields(&self) -> PerField<bool> {
        self.obj.active
    }

    pub fn last_eval(&self) -> &EvalInfo {
        &self.obj.info
    }

    fn refresh_preconditioner(&mut self) {
        let mut pw = wl_preconditioner(self.netlist, &self.obj.weights);
        pw.resize(self.obj.nv, 0.0);
        self.pw = pw;
    }

    fn refresh_areas(&mut self) {
        let mut v = Vec::with_capacity(self.obj.nv);
        for i in 0..self.obj.n {
            let u = self.obj.unit_charge(i);
            v.push(u.map(|_, q| q * self.obj.areas[i]));
        }
        for var in self.obj.n..self.obj.nv {
            let mut a = PerField::zeros();
            if let Some((f, q)) = self.obj.filler_charge(var) {
                a[f] = q;
            }
            v.push(a);
        }
        self.var_area = v;
    }

    fn refresh(&mut self) -> Result<()> {
        if !self.grad_valid {
            self.obj.iteration = self.iterations;
            let z = std::mem::take(&mut self.z);
            let r = self.obj.evaluate(&z);
            self.z = z;
            r?;
            self.grad_valid = true;
        }
        Ok(())
    }

    /// Preconditioned descent direction at the current point.
    fn direction(&self) -> Vec<f64> {
        let (n, nv) = (self.obj.n, self.obj.nv);
        let g = &self.obj.grad;
        let mut dir = vec![0.0; 2 * nv];
        for v in 0..nv {
            if !self.obj.movable[v] {
                continue;
            }
            let p = if self.cfg.jacobi_precondition {
                jacobi_factor(self.pw[v], &self.alpha, &self.sched.lambda, &self.var_area[v])
            } else {
                precondition_factor(self.pw[v], &self.alpha, &self.sched.lambda, &self.var_area[v])
            };
            dir[v] = p * g[v];
            dir[nv + v] = p * g[nv + v];
        }
        if !self.netlist.chains.is_empty() {
            let (dx, dy) = dir.split_at_mut(nv);
            average_chain_gradient(self.netlist, &mut dx[..n], &mut dy[..n]);
            for i in 0..n {
                if !self.obj.movable[i] {
                    dx[i] = 0.0;
                    dy[i] = 0.0;
                }
            }
        }
        dir
    }

    /// One preconditioned gradient step followed by chain alignment.
    pub fn step(&mut self) -> Result<StepReport> {
        self.refresh()?;
        let dir = self.direction();
        let nv = self.obj.nv;
        if self.fresh_step {
            // first move of at most one bin
            let m = dir.iter().fold(0.0f64, |a, d| a.max(d.abs()));
            let bin = self.obj.grid.bin_w.min(self.obj.grid.bin_h);
            self.stepper.reset(if m > 0.0 { bin / m } else { 1.0 });
            self.fresh_step = false;
        }
        let (w, h) = (self.device.width as f64, self.device.height as f64);
        let lanes = &self.lanes;
        let project = move |t: &mut [f64]| {
            let (tx, ty) = t.split_at_mut(nv);
            for x in tx.iter_mut() {
                *x = x.clamp(0.5, w - 0.5);
            }
            for (vars, iv) in lanes {
                for &v in vars {
                    tx[v] = snap_to_lanes(tx[v], iv);
                }
            }
            for y in ty {
                *y = y.clamp(0.5, h - 0.5);
            }
        };
        let grad = self.obj.grad.clone();
        let value = self.obj.info.value;
        self.obj.iteration = self.iterations;
        let obj = &mut self.obj;
        let mut eval = |t: &[f64]| obj.evaluate(t);
        let report = self.stepper.step(&mut self.z, value, &grad, &dir, &mut eval, &project)?;
        self.grad_valid = true;
        self.iterations += 1;
        if report.stalled {
            self.diag.stalled_steps += 1;
        }
        if self.cfg.chain_alignment && !self.netlist.chains.is_empty() {
            let n = self.obj.n;
            let (xs, ys) = self.z.split_at_mut(nv);
            align_chains(self.netlist, &mut xs[..n], &mut ys[..n], h)?;
            self.grad_valid = false;
        }
        Ok(report)
    }

    /// Sets multipliers from the gradient balance at the current point:
    /// `lambda_s = ratio * |grad T|_1 / |grad D_s|_1`.
    fn init_multipliers(&mut self, ratio: f64) -> Result<()> {
        for f in self.obj.fields.iter_mut() {
            f.multiplier = 0.0;
            f.alm_coeff = 0.0;
        }
        self.grad_valid = false;
        self.refresh()?;
        let info = self.obj.info.clone();
        let mut norm = info.density_norm;
        for f in FieldKind::ALL {
            if !self.obj.active[f] {
                norm[f] = 0.0;
            }
        }
        let (mut lambda, skipped) = init_lambda(ratio, info.wl_norm, &norm, &PerField::zeros());
        for f in skipped {
            if self.obj.active[f] {
                lambda[f] = 0.0;
                self.diag.lambda_init_skipped.push(f.name().to_string());
            }
        }
        self.sched.reset(lambda, info.phi);
        self.sched.cap_unit = norm.map(|_, d| if d > 0.0 { info.wl_norm / d } else { 1.0 });
        for f in self.obj.fields.iter_mut() {
            f.multiplier = lambda[f.kind];
            f.alm_coeff = self.sched.alm_coeff(f.kind);
        }
        self.update_balance(&info);
        self.grad_valid = false;
        self.fresh_step = true;
        Ok(())
    }

    fn update_balance(&mut self, info: &EvalInfo) {
        if !self.cfg.dynamic_precondition {
            self.theta = PerField::splat(1.0);
            self.alpha = PerField::splat(1.0);
            return;
        }
        let mut mean_pw = PerField::zeros();
        let mut populated = PerField::splat(false);
        for f in FieldKind::ALL {
            let m = &self.obj.members[f.index()];
            let (sum, cnt) = m
                .iter()
                .filter(|&&(i, _)| self.obj.movable[i])
                .fold((0.0, 0usize), |(s, c), &(i, _)| (s + self.pw[i], c + 1));
            if cnt > 0 {
                mean_pw[f] = sum / cnt as f64;
                populated[f] = true;
            } else if self.obj.active[f] {
                self.diag.alpha_guards += 1;
            }
        }
        let (theta, alpha) = dynamic_alpha(&info.density_norm, &info.wl_norm_field, &mean_pw, &populated);
        self.theta = theta;
        self.alpha = alpha;
    }

    /// The soft logic fields gate convergence; the others are reported.
    fn overflow_ok(&self, ov: &PerField<f64>) -> bool {
        [FieldKind::Lutl, FieldKind::Ff]
            .iter()
            .all(|&f| !self.obj.active[f] || ov[f] <= self.cfg.overflow_threshold)
    }

    fn max_overflow(&self, ov: &PerField<f64>) -> f64 {
        FieldKind::ALL
            .iter()
            .filter(|&&f| self.obj.active[f])
            .map(|&f| ov[f])
            .fold(0.0, f64::max)
    }

    /// Parameter update after an inner block: smoothing, balance factors,
    /// multipliers and the clock weight.
    fn outer_update(&mut self, observer: &mut dyn Observer) -> Result<()> {
        self.refresh()?;
        let info = self.obj.info.clone();
        self.obj.gamma = gamma_for_overflow(self.max_overflow(&info.overflow), self.cfg.gamma_k);
        self.update_balance(&info);
        // once spread enough, the multipliers hold so extra steps refine wirelength
        if !self.overflow_ok(&info.overflow) {
            self.sched.step(&info.phi, &self.theta, &self.obj.active);
        }
        for f in self.obj.fields.iter_mut() {
            f.multiplier = self.sched.lambda[f.kind];
        }
        if self.obj.plan.is_some() {
            self.obj.eta = update_eta(info.wl_norm, info.clock_norm, self.cfg.iota, self.cfg.epsilon);
        }
        self.grad_valid = false;
        self.diag.clamped_charges = self.obj.fields.iter().map(|f| f.clamped).sum();

        let (xs, ys) = self.positions();
        let m = Metrics {
            iter: self.iterations,
            hpwl: hpwl(self.netlist, xs, ys),
            overflow: field_map(&info.overflow),
            wns: self.sta.map(|s| s.0),
            tns: self.sta.map(|s| s.1),
            eta: self.obj.eta,
            lambda: field_map(&self.sched.lambda),
            gamma: self.obj.gamma,
            objective: info.value,
        };
        observer.metrics(&m, xs, ys);
        self.metrics.push(m);
        Ok(())
    }

    /// Density level: inner blocks until overflow is under the threshold on
    /// the gating fields and at least `min_iters` steps were taken. Returns
    /// false when the iteration budget runs out first.
    fn run_density(&mut self, min_iters: usize, observer: &mut dyn Observer) -> Result<bool> {
        let start = self.iterations;
        loop {
            if self.iterations >= self.cfg.max_iterations {
                return Ok(false);
            }
            for _ in 0..self.cfg.l5_iterations.max(1) {
                self.step()?;
            }
            self.outer_update(observer)?;
            let ov = self.obj.info.overflow;
            if self.iterations - start >= min_iters && self.overflow_ok(&ov) {
                return Ok(true);
            }
        }
    }

    fn inflate(&mut self) -> Result<usize> {
        let (n, nv) = (self.obj.n, self.obj.nv);
        let xs = self.z[..n].to_vec();
        let ys = self.z[nv..nv + n].to_vec();
        let free = PerField(std::array::from_fn(|s| self.obj.fields[s].free_area()));
        let mut areas = self.obj.areas.clone();
        let obj = &self.obj;
        let report = inflate_areas(
            &obj.grid,
            self.netlist,
            &xs,
            &ys,
            &mut areas,
            self.cfg.pin_density_factor,
            |i| obj.unit_charge(i),
            &free,
        );
        self.set_areas(&areas);
        self.diag.inflation_rounds += 1;
        self.diag.inflated_instances += report.inflated;
        self.diag.inflation_kept = self.diag.inflation_kept.min(report.kept);
        Ok(report.inflated)
    }

    fn clock_violated(&self) -> bool {
        let (xs, ys) = self.positions();
        clock_demand(self.netlist, xs, ys, self.device)
            .iter()
            .any(|&d| d > self.device.cr_limit)
    }

    fn plan_clocks(&mut self) -> bool {
        let (xs, ys) = self.positions();
        let cfg = PlanConfig {
            node_cap: self.cfg.plan_node_cap,
            ..PlanConfig::default()
        };
        match plan_mapping_with(self.netlist, xs, ys, self.device, self.device.cr_limit, cfg) {
            Ok(plan) => {
                self.diag.clock_plans += 1;
                self.obj.plan = Some(plan);
                self.obj.eta = 0.0;
                self.grad_valid = false;
                true
            }
            Err(_) => {
                self.diag.clock_plan_failures += 1;
                false
            }
        }
    }

    /// Recomputes the clock weight for a new plan from the gradient balance.
    fn reset_eta(&mut self) -> Result<()> {
        self.refresh()?;
        let info = &self.obj.info;
        self.obj.eta = update_eta(info.wl_norm, info.clock_norm, self.cfg.iota, self.cfg.epsilon);
        self.grad_valid = false;
        Ok(())
    }

    fn analyze(&mut self) -> Result<timing::TimingGraph> {
        let (xs, ys) = self.positions();
        let g = timing::analyze(self.netlist, xs, ys, &self.cfg.timing)?;
        let (wns, tns) = g.wns_tns();
        self.sta = Some((timing::fs_to_ps(wns), timing::fs_to_ps(tns)));
        Ok(g)
    }

    pub fn run(&mut self) -> Result<GlobalPlacement> {
        self.run_with(&mut ())
    }

    /// Runs the full nested loop.
    pub fn run_with(&mut self, observer: &mut dyn Observer) -> Result<GlobalPlacement> {
        let has_movable = self.obj.movable[..self.obj.n].iter().any(|&m| m);
        if !has_movable {
            return self.finish(true);
        }
        let has_clocks = self.netlist.clock_nets().next().is_some();
        self.init_multipliers(self.cfg.zeta)?;

        let mut min_iters = 0;
        let mut tns_history: Vec<f64> = Vec::new();
        let mut clock_rounds = 0;
        let mut inflation_rounds = 0;
        let mut converged;
        'timing: loop {
            'clock: loop {
                loop {
                    converged = self.run_density(min_iters, observer)?;
                    if !converged {
                        break 'timing;
                    }
                    min_iters = 0;
                    if inflation_rounds < self.cfg.routability_rounds {
                        inflation_rounds += 1;
                        if self.inflate()? > 0 {
                            self.init_multipliers(self.cfg.lambda_reset)?;
                            continue;
                        }
                    }
                    break;
                }
                if self.cfg.clock_planning
                    && has_clocks
                    && clock_rounds < self.cfg.clock_rounds
                    && self.clock_violated()
                {
                    clock_rounds += 1;
                    if self.plan_clocks() {
                        self.reset_eta()?;
                        self.init_multipliers(self.cfg.lambda_reset)?;
                        continue 'clock;
                    }
                }
                break;
            }

            if self.diag.timing_rounds >= self.cfg.timing_rounds {
                break;
            }
            let g = self.analyze()?;
            let (wns, tns) = g.wns_tns();
            let tns_ps = timing::fs_to_ps(tns);
            tns_history.push(tns_ps);
            if tns >= 0 {
                break;
            }
            let w = self.cfg.timing_window;
            if tns_history.len() > w {
                let before = tns_history[tns_history.len() - 1 - w];
                let gain = (tns_ps - before) / before.abs().max(f64::MIN_POSITIVE);
                if gain < self.cfg.timing_tolerance {
                    break;
                }
            }
            self.diag.timing_rounds += 1;
            if self.cfg.timing_weighting {
                let crit = timing::net_criticality(&g.net_slacks(self.netlist.nets.len()), wns, g.period);
                let mut weights = self.obj.weights.clone();
                self.diag.weights_capped += timing::reweight(&mut weights, &crit, self.cfg.timing_alpha);
                self.set_weights(&weights);
            }
            min_iters = self.cfg.timing_min_iterations;
        }

        if self.cfg.clock_planning && has_clocks {
            self.plan_clocks();
        }
        self.finish(converged)
    }

    fn finish(&mut self, converged: bool) -> Result<GlobalPlacement> {
        self.refresh()?;
        let ov = self.obj.info.overflow;
        let converged = converged && self.overflow_ok(&ov);
        let report = self.analyze()?.report(10);
        let (xs, ys) = self.positions();
        let mut diagnostics = self.diag.clone();
        diagnostics.evaluations = self.obj.evaluations;
        Ok(GlobalPlacement {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            hpwl: hpwl(self.netlist, xs, ys),
            areas: self.obj.areas.clone(),
            weights: self.obj.weights.clone(),
            plan: self.obj.plan.clone(),
            metrics: self.metrics.clone(),
            converged,
            iterations: self.iterations,
            overflow: field_map(&ov),
            timing: Some(report),
            diagnostics,
        })
    }
}

/// Centre-line intervals `[a + 0.5, b - 0.5]` for every maximal run of
/// columns `[a, b)` with capacity for `field`.
fn resource_lanes(device: &Device, field: FieldKind) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut start = None;
    for x in 0..=device.width {
        let has = x < device.width && device.capacity(device.site_kind(x))[field] > 0.0;
        match (has, start) {
            (true, None) => start = Some(x),
            (false, Some(a)) => {
                out.push((a as f64 + 0.5, x as f64 - 0.5));
                start = None;
            }
            _ => {}
        }
    }
    out
}

/// Moves `x` to the nearest point of `lanes`; unchanged when there are none.
fn snap_to_lanes(x: f64, lanes: &[(f64, f64)]) -> f64 {
    let mut best = x;
    let mut dist = f64::INFINITY;
    for &(a, b) in lanes {
        let p = x.clamp(a, b);
        let d = (p - x).abs();
        if d < dist {
            dist = d;
            best = p;
        }
    }
    best
}

/// Places `netlist` on `device` with the full nested loop.
pub fn run_nested(netlist: &Netlist, device: &Device, cfg: &EngineConfig) -> Result<GlobalPlacement> {
    Placer::new(netlist, device, cfg.clone())?.run()
}
