//! Stage planning, the coupled atom-field Runge-Kutta step, and echo
//! detection.
//!
//! A run is a sequence of stages separated by pulse events. Within a stage
//! the coupling is fixed: the stored coherence branch either sources the
//! forward field, sources the backward field, or is decoupled (silent or
//! absorptive branches, and the spin-locked interval). Impulsive pulses are
//! applied as rotations at stage boundaries; finite-duration pulses occupy
//! a short drive stage of their own, during which the atoms see the
//! classical envelope uniformly (undepleted drive) and the propagating
//! field is off.
//!
//! Decoupled stages advance analytically (one phase factor per atom for
//! the whole stage), so long storage intervals cost nothing. Coupled
//! stages advance with classical RK4; the field profile is recomputed from
//! the instantaneous atomic polarization at every RK4 stage evaluation, so
//! the field is always consistent with the states it drives.
//!
//! Work is parallelized over z slices with a fixed-order reduction per
//! slice, which makes results bit-identical regardless of worker count.

use super::{
    detuning_weights, field_coupling, propagate_step, Direction, EchoResult, FieldEnvelope,
    GridError, MediumConfig, RunOutput, SimError, SimGrid,
};
use crate::analytic::{self, CoherenceSign, StageMarker};
use crate::bloch::{
    apply_control_rotation, apply_optical_rotation, derivative, rk4_combine, AtomDeriv, AtomState,
    PulseArea,
};
use crate::phasematch::{self, WaveVectorIndex};
use crate::protocol::{
    gaussian_peak, ControlOrder, EchoPrediction, ProtocolKind, PulseKind, PulseSchedule,
    Transition,
};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy)]
struct GaussianEnvelope {
    center: f64,
    tau: f64,
    peak: f64,
}

impl GaussianEnvelope {
    fn of_pulse(area: f64, center: f64, tau: f64) -> Self {
        GaussianEnvelope { center, tau, peak: gaussian_peak(area, tau) }
    }

    fn at(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.tau;
        self.peak * (-0.5 * x * x).exp()
    }
}

#[derive(Debug, Clone, Copy)]
enum Coupling {
    /// Polarization sources the forward field; `input` injects the data
    /// pulse at the entry face.
    Forward { input: Option<GaussianEnvelope> },
    /// Polarization sources the backward field (zero at the far face).
    Backward,
    /// A finite-duration classical pulse drives the atoms uniformly; the
    /// propagating field is decoupled for the duration.
    Drive { transition: Transition, envelope: GaussianEnvelope },
    /// Free evolution: silent/absorptive branch or spin-locked interval.
    Off,
}

#[derive(Debug, Clone, Copy)]
struct Stage {
    start: usize,
    end: usize,
    coupling: Coupling,
    rotation: Option<(Transition, PulseArea)>,
}

/// Configurable simulation entry point.
///
/// ```no_run
/// # use echomem::ensemble::{Simulator, MediumConfig, SimGrid};
/// # use echomem::protocol::{build_schedule, ProtocolKind, ScheduleParams};
/// # let schedule = build_schedule(ProtocolKind::TwoPulseEcho,
/// #     ScheduleParams { t_d: 10.0, t_r1: Some(26.0), ..Default::default() }).unwrap();
/// # let medium = MediumConfig::ideal(1.0, 1.0);
/// # let grid = SimGrid { n_z: 60, n_delta: 101, delta_span: 3.0, dt: 1.0 / 30.0, t_end: 50.0, seed: None };
/// let out = Simulator::new(&schedule, &medium, &grid)
///     .record_full_field(true)
///     .run()
///     .unwrap();
/// ```
pub struct Simulator<'a> {
    schedule: &'a PulseSchedule,
    medium: &'a MediumConfig,
    grid: &'a SimGrid,
    record_full: bool,
    initial: AtomState,
}

/// Run a validated schedule on the given medium and grid.
pub fn run_simulation(
    schedule: &PulseSchedule,
    medium: &MediumConfig,
    grid: &SimGrid,
) -> Result<RunOutput, SimError> {
    Simulator::new(schedule, medium, grid).run()
}

impl<'a> Simulator<'a> {
    pub fn new(schedule: &'a PulseSchedule, medium: &'a MediumConfig, grid: &'a SimGrid) -> Self {
        Simulator {
            schedule,
            medium,
            grid,
            record_full: false,
            initial: AtomState::ground(),
        }
    }

    /// Record the full (z, t) field lattices in the output.
    pub fn record_full_field(mut self, yes: bool) -> Self {
        self.record_full = yes;
        self
    }

    /// Start every atom from the given state instead of the ground state.
    pub fn initial_state(mut self, state: AtomState) -> Self {
        self.initial = state;
        self
    }

    pub fn run(&self) -> Result<RunOutput, SimError> {
        let grid = self.grid;
        let medium = self.medium;
        let schedule = self.schedule;

        let data = schedule
            .data_pulse()
            .ok_or(SimError::Grid(GridError::BadTimes))?;
        if data.duration <= 0.0 {
            return Err(SimError::Grid(GridError::BadTimes));
        }
        let data_env = GaussianEnvelope::of_pulse(data.area.0, data.arrival, data.duration);
        let max_field = data_env.peak.max(schedule.max_field_amplitude());
        grid.validate(medium, max_field)?;

        // every radiating echo must fit, tail included, inside the horizon
        for p in schedule.predictions().iter().filter(|p| p.radiates()) {
            let required = p.time + 4.0 * data.duration;
            if required > grid.t_end {
                return Err(SimError::HorizonTooShort {
                    needed: p.time,
                    required,
                    have: grid.t_end,
                });
            }
        }

        let pairs = detuning_weights(grid, medium);
        let deltas: Vec<f64> = pairs.iter().map(|(d, _)| d.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|(_, w)| *w).collect();
        let kappa = field_coupling(grid, medium);
        let gamma = medium.gamma();
        let n_z = grid.n_z;
        let nd = grid.n_delta;
        let dz = medium.length / (n_z - 1) as f64;
        let dt = grid.dt;
        let n_steps = grid.n_steps();
        let stages = build_stages(schedule, grid, data_env)?;

        // z-integration weights for the stored-energy diagnostic
        let cz: Vec<f64> = (0..n_z)
            .map(|i| if i == 0 || i == n_z - 1 { 0.5 * dz } else { dz })
            .collect();

        let mut atoms: Vec<AtomState> = vec![self.initial; n_z * nd];
        let mut tmp: Vec<AtomState> = atoms.clone();
        let mut k1: Vec<AtomDeriv> = vec![AtomDeriv::zero(); atoms.len()];
        let mut k2 = k1.clone();
        let mut k3 = k1.clone();
        let mut k4 = k1.clone();
        let mut pol: Vec<C64> = vec![ZERO; n_z];
        let mut field: Vec<C64> = vec![ZERO; n_z];

        let mut forward_exit: Vec<C64> = Vec::with_capacity(n_steps + 1);
        let mut backward_exit: Vec<C64> = Vec::with_capacity(n_steps + 1);
        let mut stored: Vec<f64> = Vec::with_capacity(n_steps + 1);
        let mut forward_full: Vec<C64> = Vec::new();
        let mut backward_full: Vec<C64> = Vec::new();
        if self.record_full {
            forward_full.reserve((n_steps + 1) * n_z);
            backward_full.reserve((n_steps + 1) * n_z);
        }

        let ctx = EvalContext {
            deltas: &deltas,
            weights: &weights,
            nd,
            kappa,
            gamma,
            dz,
            parallel: n_z * nd >= PARALLEL_THRESHOLD,
        };

        let parallel = ctx.parallel;
        let record =
            |field: &[C64],
             coupling: &Coupling,
             atoms: &[AtomState],
             forward_exit: &mut Vec<C64>,
             backward_exit: &mut Vec<C64>,
             stored: &mut Vec<f64>,
             forward_full: &mut Vec<C64>,
             backward_full: &mut Vec<C64>| {
                let (fwd, bwd) = match coupling {
                    Coupling::Forward { .. } => (field[n_z - 1], ZERO),
                    Coupling::Backward => (ZERO, field[0]),
                    _ => (ZERO, ZERO),
                };
                forward_exit.push(fwd);
                backward_exit.push(bwd);
                stored.push(stored_energy(atoms, &cz, &weights, nd, kappa, parallel));
                if self.record_full {
                    match coupling {
                        Coupling::Forward { .. } => {
                            forward_full.extend_from_slice(field);
                            backward_full.extend(std::iter::repeat_n(ZERO, n_z));
                        }
                        Coupling::Backward => {
                            forward_full.extend(std::iter::repeat_n(ZERO, n_z));
                            backward_full.extend_from_slice(field);
                        }
                        _ => {
                            forward_full.extend(std::iter::repeat_n(ZERO, n_z));
                            backward_full.extend(std::iter::repeat_n(ZERO, n_z));
                        }
                    }
                }
            };

        let mut last_coupling = Coupling::Off;
        for stage in &stages {
            if let Some((transition, area)) = stage.rotation {
                apply_rotation(&mut atoms, transition, area);
            }
            last_coupling = stage.coupling;
            match stage.coupling {
                Coupling::Off => {
                    if stage.end > stage.start {
                        // record zeros, then jump the whole interval in one
                        // exact free-evolution factor per detuning
                        field.iter_mut().for_each(|f| *f = ZERO);
                        for _ in stage.start..stage.end {
                            record(
                                &field,
                                &stage.coupling,
                                &atoms,
                                &mut forward_exit,
                                &mut backward_exit,
                                &mut stored,
                                &mut forward_full,
                                &mut backward_full,
                            );
                        }
                        let span = (stage.end - stage.start) as f64 * dt;
                        let factors: Vec<C64> = deltas
                            .iter()
                            .map(|&d| C64::from_polar((-gamma * span).exp(), d * span))
                            .collect();
                        atoms.par_chunks_mut(nd).for_each(|slice| {
                            for (a, f) in slice.iter_mut().zip(&factors) {
                                a.coh12 *= f;
                                a.coh32 *= f;
                            }
                        });
                    }
                }
                Coupling::Drive { transition, envelope } => {
                    field.iter_mut().for_each(|f| *f = ZERO);
                    for n in stage.start..stage.end {
                        let t = n as f64 * dt;
                        record(
                            &field,
                            &stage.coupling,
                            &atoms,
                            &mut forward_exit,
                            &mut backward_exit,
                            &mut stored,
                            &mut forward_full,
                            &mut backward_full,
                        );
                        eval_driven(&atoms, t, transition, &envelope, &ctx, &mut k1);
                        axpy(&atoms, &k1, dt / 2.0, &mut tmp, ctx.parallel);
                        eval_driven(&tmp, t + dt / 2.0, transition, &envelope, &ctx, &mut k2);
                        axpy(&atoms, &k2, dt / 2.0, &mut tmp, ctx.parallel);
                        eval_driven(&tmp, t + dt / 2.0, transition, &envelope, &ctx, &mut k3);
                        axpy(&atoms, &k3, dt, &mut tmp, ctx.parallel);
                        eval_driven(&tmp, t + dt, transition, &envelope, &ctx, &mut k4);
                        combine(&mut atoms, &k1, &k2, &k3, &k4, dt, ctx.parallel);
                    }
                }
                Coupling::Forward { .. } | Coupling::Backward => {
                    for n in stage.start..stage.end {
                        let t = n as f64 * dt;
                        let c = &stage.coupling;
                        eval_coupled(&atoms, None, t, c, &ctx, &mut tmp, &mut pol, &mut field, &mut k1)
                            .map_err(|_| SimError::NumericalBlowup { t })?;
                        record(
                            &field,
                            c,
                            &atoms,
                            &mut forward_exit,
                            &mut backward_exit,
                            &mut stored,
                            &mut forward_full,
                            &mut backward_full,
                        );
                        eval_coupled(&atoms, Some((&k1, dt / 2.0)), t + dt / 2.0, c, &ctx, &mut tmp, &mut pol, &mut field, &mut k2)
                            .map_err(|_| SimError::NumericalBlowup { t })?;
                        eval_coupled(&atoms, Some((&k2, dt / 2.0)), t + dt / 2.0, c, &ctx, &mut tmp, &mut pol, &mut field, &mut k3)
                            .map_err(|_| SimError::NumericalBlowup { t })?;
                        eval_coupled(&atoms, Some((&k3, dt)), t + dt, c, &ctx, &mut tmp, &mut pol, &mut field, &mut k4)
                            .map_err(|_| SimError::NumericalBlowup { t })?;
                        combine(&mut atoms, &k1, &k2, &k3, &k4, dt, ctx.parallel);
                        if n % 64 == 0 && !atoms[0].is_finite() {
                            return Err(SimError::NumericalBlowup { t });
                        }
                    }
                }
            }
        }

        // final sample at t_end
        match last_coupling {
            Coupling::Forward { .. } | Coupling::Backward => {
                let t = n_steps as f64 * dt;
                eval_coupled(&atoms, None, t, &last_coupling, &ctx, &mut tmp, &mut pol, &mut field, &mut k1)
                    .map_err(|_| SimError::NumericalBlowup { t })?;
            }
            _ => field.iter_mut().for_each(|f| *f = ZERO),
        }
        record(
            &field,
            &last_coupling,
            &atoms,
            &mut forward_exit,
            &mut backward_exit,
            &mut stored,
            &mut forward_full,
            &mut backward_full,
        );

        let input_energy: f64 =
            (0..=n_steps).map(|n| data_env.at(n as f64 * dt).powi(2)).sum::<f64>() * dt;
        let transmitted_energy: f64 = forward_exit
            .iter()
            .enumerate()
            .filter(|(n, _)| (*n as f64 * dt - data.arrival).abs() <= 4.0 * data.duration)
            .map(|(_, e)| e.norm_sqr())
            .sum::<f64>()
            * dt;

        let k_d = data.k.0;
        let echoes = detect_echoes(
            &forward_exit,
            &backward_exit,
            dt,
            data_env.peak * data_env.peak * 1e-8,
            &exclusion_windows(schedule, data.duration),
            schedule.predictions(),
            k_d,
            input_energy,
            data.duration,
        );

        let wrap = |samples: Vec<C64>, direction: Direction| FieldEnvelope {
            direction,
            n_z,
            n_t: n_steps + 1,
            dz,
            dt,
            t0: 0.0,
            samples,
        };
        Ok(RunOutput {
            dt,
            optical_depth: medium.optical_depth(),
            input_energy,
            transmitted_energy,
            forward_exit,
            backward_exit,
            stored_energy: stored,
            echoes,
            predictions: schedule.predictions().to_vec(),
            forward_field: self.record_full.then(|| wrap(forward_full, Direction::Forward)),
            backward_field: self.record_full.then(|| wrap(backward_full, Direction::Backward)),
        })
    }
}

impl AtomDeriv {
    fn zero() -> Self {
        AtomDeriv {
            pop1: 0.0,
            pop2: 0.0,
            pop3: 0.0,
            coh12: ZERO,
            coh13: ZERO,
            coh32: ZERO,
        }
    }
}

struct EvalContext<'a> {
    deltas: &'a [f64],
    weights: &'a [f64],
    nd: usize,
    kappa: f64,
    gamma: f64,
    dz: f64,
    /// Small ensembles run single-threaded: the per-call cost of the
    /// thread pool would dwarf the arithmetic. Results are identical
    /// either way (per-slice sums are sequential in both paths).
    parallel: bool,
}

const PARALLEL_THRESHOLD: usize = 4096;

fn apply_rotation(atoms: &mut [AtomState], transition: Transition, area: PulseArea) {
    match transition {
        Transition::Opt12 => atoms
            .par_iter_mut()
            .for_each(|a| *a = apply_optical_rotation(a, area)),
        Transition::Ctl23 => atoms
            .par_iter_mut()
            .for_each(|a| *a = apply_control_rotation(a, area)),
    }
}

fn stored_energy(
    atoms: &[AtomState],
    cz: &[f64],
    weights: &[f64],
    nd: usize,
    kappa: f64,
    parallel: bool,
) -> f64 {
    let slice_sum = |slice: &[AtomState]| -> f64 {
        slice.iter().zip(weights).map(|(a, w)| w * a.pop2).sum()
    };
    if parallel {
        // per-slice sums in parallel, sequential reduction over z for
        // worker-count-independent results
        let per_slice: Vec<f64> = atoms.par_chunks(nd).map(slice_sum).collect();
        kappa * per_slice.iter().zip(cz).map(|(s, c)| s * c).sum::<f64>()
    } else {
        kappa
            * atoms
                .chunks(nd)
                .zip(cz)
                .map(|(slice, c)| c * slice_sum(slice))
                .sum::<f64>()
    }
}

fn axpy(atoms: &[AtomState], k: &[AtomDeriv], h: f64, out: &mut [AtomState], parallel: bool) {
    let work = |(o, (a, d)): (&mut AtomState, (&AtomState, &AtomDeriv))| {
        *o = AtomState {
            pop1: a.pop1 + h * d.pop1,
            pop2: a.pop2 + h * d.pop2,
            pop3: a.pop3 + h * d.pop3,
            coh12: a.coh12 + h * d.coh12,
            coh13: a.coh13 + h * d.coh13,
            coh32: a.coh32 + h * d.coh32,
        };
    };
    if parallel {
        out.par_iter_mut().zip(atoms.par_iter().zip(k.par_iter())).for_each(work);
    } else {
        out.iter_mut().zip(atoms.iter().zip(k.iter())).for_each(work);
    }
}

fn combine(
    atoms: &mut [AtomState],
    k1: &[AtomDeriv],
    k2: &[AtomDeriv],
    k3: &[AtomDeriv],
    k4: &[AtomDeriv],
    dt: f64,
    parallel: bool,
) {
    if parallel {
        atoms
            .par_iter_mut()
            .enumerate()
            .for_each(|(j, a)| *a = rk4_combine(a, [&k1[j], &k2[j], &k3[j], &k4[j]], dt));
    } else {
        atoms
            .iter_mut()
            .enumerate()
            .for_each(|(j, a)| *a = rk4_combine(a, [&k1[j], &k2[j], &k3[j], &k4[j]], dt));
    }
}

/// One RK4 stage evaluation with the field slaved to the polarization.
///
/// When `prev` is given, the stage state atoms + h·k is materialized into
/// `tmp` in the same pass that accumulates the polarization, saving a
/// full sweep over the ensemble.
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn eval_coupled(
    atoms: &[AtomState],
    prev: Option<(&[AtomDeriv], f64)>,
    t: f64,
    coupling: &Coupling,
    ctx: &EvalContext,
    tmp: &mut [AtomState],
    pol: &mut [C64],
    field: &mut [C64],
    out: &mut [AtomDeriv],
) -> Result<(), ()> {
    let nd = ctx.nd;
    match prev {
        Some((k, h)) => {
            let work = |((p, tmp_slice), (a_slice, k_slice)): (
                (&mut C64, &mut [AtomState]),
                (&[AtomState], &[AtomDeriv]),
            )| {
                let mut acc = ZERO;
                for ((o, a), (d, w)) in tmp_slice
                    .iter_mut()
                    .zip(a_slice)
                    .zip(k_slice.iter().zip(ctx.weights))
                {
                    *o = AtomState {
                        pop1: a.pop1 + h * d.pop1,
                        pop2: a.pop2 + h * d.pop2,
                        pop3: a.pop3 + h * d.pop3,
                        coh12: a.coh12 + h * d.coh12,
                        coh13: a.coh13 + h * d.coh13,
                        coh32: a.coh32 + h * d.coh32,
                    };
                    acc += w * o.coh12;
                }
                *p = acc;
            };
            if ctx.parallel {
                pol.par_iter_mut()
                    .zip(tmp.par_chunks_mut(nd))
                    .zip(atoms.par_chunks(nd).zip(k.par_chunks(nd)))
                    .for_each(work);
            } else {
                pol.iter_mut()
                    .zip(tmp.chunks_mut(nd))
                    .zip(atoms.chunks(nd).zip(k.chunks(nd)))
                    .for_each(work);
            }
        }
        None => {
            let work = |(p, slice): (&mut C64, &[AtomState])| {
                *p = slice
                    .iter()
                    .zip(ctx.weights)
                    .fold(ZERO, |acc, (a, w)| acc + w * a.coh12);
            };
            if ctx.parallel {
                pol.par_iter_mut().zip(atoms.par_chunks(nd)).for_each(work);
            } else {
                pol.iter_mut().zip(atoms.chunks(nd)).for_each(work);
            }
        }
    }
    let stage_atoms: &[AtomState] = if prev.is_some() { tmp } else { atoms };

    let n_z = pol.len();
    match coupling {
        Coupling::Forward { input } => {
            field[0] = C64::new(input.map_or(0.0, |env| env.at(t)), 0.0);
            for i in 0..n_z - 1 {
                field[i + 1] =
                    propagate_step(field[i], pol[i], pol[i + 1], ctx.dz, ctx.kappa, Direction::Forward);
            }
        }
        Coupling::Backward => {
            field[n_z - 1] = ZERO;
            for i in (0..n_z - 1).rev() {
                field[i] = propagate_step(
                    field[i + 1],
                    pol[i + 1],
                    pol[i],
                    ctx.dz,
                    ctx.kappa,
                    Direction::Backward,
                );
            }
        }
        _ => unreachable!("eval_coupled only runs for field-coupled stages"),
    }
    if field.iter().any(|f| !f.is_finite() || f.norm_sqr() > 1e18) {
        return Err(());
    }

    let work = |((out_slice, atom_slice), eps): ((&mut [AtomDeriv], &[AtomState]), &C64)| {
        for ((o, a), &d) in out_slice.iter_mut().zip(atom_slice).zip(ctx.deltas) {
            *o = derivative(a, *eps, ZERO, crate::bloch::Detuning(d), ctx.gamma);
        }
    };
    if ctx.parallel {
        out.par_chunks_mut(nd)
            .zip(stage_atoms.par_chunks(nd))
            .zip(field.par_iter())
            .for_each(work);
    } else {
        out.chunks_mut(nd)
            .zip(stage_atoms.chunks(nd))
            .zip(field.iter())
            .for_each(work);
    }
    Ok(())
}

/// Per-atom derivatives under a uniform classical drive (no field march).
fn eval_driven(
    atoms: &[AtomState],
    t: f64,
    transition: Transition,
    envelope: &GaussianEnvelope,
    ctx: &EvalContext,
    out: &mut [AtomDeriv],
) {
    let eps = C64::new(envelope.at(t), 0.0);
    let (eps_l, eps_j) = match transition {
        Transition::Opt12 => (eps, ZERO),
        Transition::Ctl23 => (ZERO, eps),
    };
    let nd = ctx.nd;
    out.par_chunks_mut(nd)
        .zip(atoms.par_chunks(nd))
        .for_each(|(out_slice, atom_slice)| {
            for ((o, a), &d) in out_slice.iter_mut().zip(atom_slice).zip(ctx.deltas) {
                *o = derivative(a, eps_l, eps_j, crate::bloch::Detuning(d), ctx.gamma);
            }
        });
}

fn gate(k: WaveVectorIndex, sign: CoherenceSign, k_d: i32) -> Coupling {
    if phasematch::is_silent(k) || sign == CoherenceSign::Absorptive {
        Coupling::Off
    } else if k.0 * k_d == 1 {
        Coupling::Forward { input: None }
    } else {
        Coupling::Backward
    }
}

/// Coupling that applies after each non-data pulse of the schedule.
fn post_couplings(schedule: &PulseSchedule) -> Vec<Coupling> {
    let pulses = schedule.pulses();
    let kind = schedule.kind();
    let k_d = schedule.data_pulse().expect("validated schedule").k;
    let nth_k = |kind: PulseKind, n: usize| {
        pulses.iter().filter(|p| p.kind == kind).nth(n).map(|p| p.k)
    };
    let k_r1 = nth_k(PulseKind::Rephase, 0);
    let k_r2 = nth_k(PulseKind::Rephase, 1);
    let k_c1 = nth_k(PulseKind::Control, 0);
    let k_c2 = nth_k(PulseKind::Control, 1);
    let k_e1 = k_r1.map(|r1| phasematch::echo_k_two_pulse(r1, k_d));

    let expr_sign = |marker: StageMarker| {
        analytic::coherence_after(schedule, marker)
            .expect("stage exists on a validated schedule")
            .prefactor_sign
    };

    let mut out = Vec::new();
    let mut n_r = 0usize;
    let mut n_c = 0usize;
    for (idx, pulse) in pulses.iter().enumerate().skip(1) {
        let is_last = idx == pulses.len() - 1;
        let coupling = match pulse.kind {
            PulseKind::Data => Coupling::Off, // a second data pulse is never built
            PulseKind::Rephase => {
                n_r += 1;
                if n_r == 1 {
                    gate(k_e1.unwrap(), expr_sign(StageMarker::AfterR1), k_d.0)
                } else {
                    let k = if kind == Some(ProtocolKind::Cdr) && is_last {
                        // control pair already applied (between placement):
                        // the emission direction is set by the controls
                        phasematch::echo_k_cdr(k_c1.unwrap(), k_c2.unwrap(), k_d)
                    } else {
                        phasematch::echo_k_dr(k_r1.unwrap(), k_r2.unwrap(), k_d)
                    };
                    gate(k, expr_sign(StageMarker::AfterR2), k_d.0)
                }
            }
            PulseKind::Control => {
                n_c += 1;
                if n_c == 1 {
                    Coupling::Off // spin-locked until the pair completes
                } else {
                    let k = match (kind, schedule.control_order()) {
                        (Some(ProtocolKind::Cdr), Some(ControlOrder::AfterSecondRephasing)) => {
                            phasematch::echo_k_cdr(k_c1.unwrap(), k_c2.unwrap(), k_d)
                        }
                        // pair acting on the stored first-echo branch
                        _ => WaveVectorIndex(
                            k_c1.unwrap().0 + k_c2.unwrap().0 - k_e1.unwrap().0,
                        ),
                    };
                    gate(k, expr_sign(StageMarker::AfterC2), k_d.0)
                }
            }
        };
        out.push(coupling);
    }
    out
}

fn build_stages(
    schedule: &PulseSchedule,
    grid: &SimGrid,
    data_env: GaussianEnvelope,
) -> Result<Vec<Stage>, SimError> {
    let n_steps = grid.n_steps();
    let step_of = |t: f64| -> usize { ((t / grid.dt).round().max(0.0) as usize).min(n_steps) };
    let post = post_couplings(schedule);

    let mut stages = Vec::new();
    let mut cursor = 0usize;
    let mut current = Coupling::Forward { input: Some(data_env) };
    let mut pending: Option<(Transition, PulseArea)> = None;

    for (pulse, coupling_after) in schedule.pulses().iter().skip(1).zip(post) {
        if pulse.duration > 0.0 {
            let a = step_of(pulse.arrival - 4.0 * pulse.duration).max(cursor);
            let b = step_of(pulse.arrival + 4.0 * pulse.duration).max(a);
            stages.push(Stage { start: cursor, end: a, coupling: current, rotation: pending.take() });
            stages.push(Stage {
                start: a,
                end: b,
                coupling: Coupling::Drive {
                    transition: pulse.transition,
                    envelope: GaussianEnvelope::of_pulse(pulse.area.0, pulse.arrival, pulse.duration),
                },
                rotation: None,
            });
            cursor = b;
        } else {
            let s = step_of(pulse.arrival).max(cursor);
            stages.push(Stage { start: cursor, end: s, coupling: current, rotation: pending.take() });
            pending = Some((pulse.transition, pulse.area));
            cursor = s;
        }
        current = coupling_after;
    }
    stages.push(Stage { start: cursor, end: n_steps, coupling: current, rotation: pending.take() });
    Ok(stages)
}

fn exclusion_windows(schedule: &PulseSchedule, data_tau: f64) -> Vec<(f64, f64)> {
    schedule
        .pulses()
        .iter()
        .map(|p| (p.arrival, 3.0 * p.duration.max(data_tau)))
        .collect()
}

/// Local maxima of exit-face intensity above the floor and clear of every
/// input pulse, on both faces.
#[allow(clippy::too_many_arguments)]
fn detect_echoes(
    forward: &[C64],
    backward: &[C64],
    dt: f64,
    floor: f64,
    exclusions: &[(f64, f64)],
    predictions: &[EchoPrediction],
    k_d: i32,
    input_energy: f64,
    data_tau: f64,
) -> Vec<EchoResult> {
    let mut echoes = Vec::new();
    for (series, face) in [(forward, 1i8), (backward, -1i8)] {
        let intensity: Vec<f64> = series.iter().map(|e| e.norm_sqr()).collect();
        let mut n = 0usize;
        while n < intensity.len() {
            if intensity[n] <= floor {
                n += 1;
                continue;
            }
            let start = n;
            while n < intensity.len() && intensity[n] > floor {
                n += 1;
            }
            let end = n; // [start, end) is one above-floor region
            if end - start < 3 {
                continue;
            }
            let (peak_idx, &peak) = intensity[start..end]
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, v)| (start + i, v))
                .unwrap();
            let t_peak = peak_idx as f64 * dt;
            let clear = exclusions.iter().all(|(c, half)| (t_peak - c).abs() > *half);
            if !clear || peak <= floor {
                continue;
            }
            let energy: f64 = intensity[start..end].iter().sum::<f64>() * dt;
            let predicted = predictions
                .iter()
                .filter(|p| p.k.0 * k_d == face as i32 && (p.time - t_peak).abs() <= 6.0 * data_tau)
                .min_by(|a, b| (a.time - t_peak).abs().total_cmp(&(b.time - t_peak).abs()))
                .copied();
            echoes.push(EchoResult {
                echo_time: t_peak,
                direction: face,
                efficiency: energy / input_energy,
                envelope: FieldEnvelope {
                    direction: if face == 1 { Direction::Forward } else { Direction::Backward },
                    n_z: 1,
                    n_t: end - start,
                    dz: 0.0,
                    dt,
                    t0: start as f64 * dt,
                    samples: series[start..end].to_vec(),
                },
                predicted,
            });
        }
    }
    echoes.sort_by(|a, b| a.echo_time.total_cmp(&b.echo_time));
    echoes
}
