//! Time-domain co-simulation of the atomic ensemble and the slowly varying
//! optical field on a (z × Δ) grid.
//!
//! # Model
//!
//! The medium occupies 0 ≤ z ≤ L with optical depth parameter α and an
//! inhomogeneously broadened optical transition of width Δ′. At each grid
//! position a set of Δ-detuned atoms evolves under the single-atom Bloch
//! equations ([`crate::bloch`]); the macroscopic polarization is the
//! weighted detuning sum of the optical coherence, and the field obeys a
//! first-order propagation equation with no time-derivative term (the
//! simulation marches in local time, treating transit as instantaneous):
//!
//! ```text
//! forward:    ∂ε_f/∂z = +i κ Σ_k w_k σ₁₂(z, t, Δ_k)         ε_f(0, t) = input
//! backward:   ∂ε_b/∂z = -i κ Σ_k w_k σ₁₂(z, t, Δ_k)         ε_b(L, t) = 0
//! ```
//!
//! The coupling constant κ = α / (2π g(0)) is fixed by the normalized
//! spectral density g(Δ) so that a weak pulse decays with the Beer's-law
//! amplitude factor e^{-αz/2}. Atoms and field form one coupled system: the
//! field profile is recomputed from the atomic state at every Runge-Kutta
//! stage, which keeps the combined scheme fourth order in time and second
//! order in z.
//!
//! # Spectral density
//!
//! Two lineshapes are supported. `Gaussian` is the realistic profile of
//! width Δ′. `FlatWindow` spreads the atoms uniformly over the whole
//! detuning grid, which makes the absorption coefficient exactly flat
//! across any pulse spectrum contained in the window — the idealization
//! behind the closed-form echo results, and the right choice when
//! comparing the simulator against them.
//!
//! # Emission gating
//!
//! Between pulses the stored coherence branch has a definite wavevector
//! index and sign from [`crate::phasematch`] and [`crate::analytic`]. A
//! branch sources the field only when it is phase matched (|m| = 1) *and*
//! emissive; silent or absorptive stages leave the field equation
//! decoupled, so "silent" and "not radiated" are exact statements of the
//! model rather than thresholds.

mod engine;

pub use engine::{run_simulation, Simulator};

use crate::bloch::Detuning;
use crate::protocol::{ProtocolKind, PulseSchedule};
use num_complex::Complex64 as C64;
use std::io::Write;
use thiserror::Error;

/// Physical description of the storage medium.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumConfig {
    /// Optical depth parameter α (1/length).
    pub alpha: f64,
    /// Physical length L of the medium.
    pub length: f64,
    /// Inhomogeneous broadening Δ′ (rad/time).
    pub inhom_width: f64,
    /// Optical phase decay time T₂; `None` means no decay (the ideal
    /// medium).
    pub t2_optical: Option<f64>,
    pub lineshape: LineShape,
}

impl MediumConfig {
    /// An ideal Gaussian-broadened medium of the given optical depth αL
    /// with L = 1.
    pub fn ideal(alpha_l: f64, inhom_width: f64) -> Self {
        MediumConfig {
            alpha: alpha_l,
            length: 1.0,
            inhom_width,
            t2_optical: None,
            lineshape: LineShape::Gaussian,
        }
    }

    /// Dimensionless optical depth αL, reported with every result.
    pub fn optical_depth(&self) -> f64 {
        self.alpha * self.length
    }

    /// Homogeneous decay rate of the optical coherences, γ = 1/T₂.
    pub fn gamma(&self) -> f64 {
        self.t2_optical.map_or(0.0, |t2| 1.0 / t2)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let ok = self.alpha >= 0.0
            && self.alpha.is_finite()
            && self.length > 0.0
            && self.length.is_finite()
            && self.inhom_width > 0.0
            && self.inhom_width.is_finite()
            && self.t2_optical.is_none_or(|t| t > 0.0);
        if ok {
            Ok(())
        } else {
            Err(GridError::BadMedium)
        }
    }
}

/// Normalized spectral density of the detuning ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineShape {
    /// Gaussian of standard deviation Δ′.
    Gaussian,
    /// Uniform over the full detuning grid [-span·Δ′, +span·Δ′]; every
    /// in-window spectral component then sees the same absorption, which
    /// reproduces the closed-form algebra exactly.
    FlatWindow,
}

/// Discretization of the (z, Δ, t) simulation volume.
#[derive(Debug, Clone, PartialEq)]
pub struct SimGrid {
    pub n_z: usize,
    /// Number of detuning samples; must be odd so Δ = 0 is a grid point.
    pub n_delta: usize,
    /// Half-width of the detuning grid in units of Δ′ (at least 3).
    pub delta_span: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Optional seed for deterministic jitter of the interior detuning
    /// nodes, a diagnostic against discrete-comb recurrence artifacts.
    pub seed: Option<u64>,
}

impl SimGrid {
    /// Grid validation, including the integrator stability bound
    /// max(|Δ|, |field|)·dt ≤ 0.1 against the largest detuning and the
    /// strongest pulse envelope of the schedule.
    pub fn validate(
        &self,
        medium: &MediumConfig,
        max_field: f64,
    ) -> Result<(), GridError> {
        medium.validate()?;
        if self.n_z < 2 {
            return Err(GridError::TooFewSlices(self.n_z));
        }
        if self.n_delta == 0 || self.n_delta.is_multiple_of(2) {
            return Err(GridError::EvenDeltaGrid(self.n_delta));
        }
        if self.delta_span < 3.0 || self.delta_span.is_nan() {
            return Err(GridError::SpanTooSmall(self.delta_span));
        }
        if self.dt <= 0.0 || self.t_end <= 0.0 || !self.dt.is_finite() || !self.t_end.is_finite()
        {
            return Err(GridError::BadTimes);
        }
        let max_rate = (self.delta_span * medium.inhom_width).max(max_field);
        let got = max_rate * self.dt;
        if got > 0.1 + 1e-12 {
            return Err(GridError::StepTooLarge { got });
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("n_z must be at least 2, got {0}")]
    TooFewSlices(usize),
    #[error("n_delta must be odd so that Δ = 0 is a grid point, got {0}")]
    EvenDeltaGrid(usize),
    #[error("delta_span must be at least 3 (grid must cover >= 3 widths), got {0}")]
    SpanTooSmall(f64),
    #[error("time step violates the stability bound max(|delta|, |field|)*dt <= 0.1 (got {got:.4})")]
    StepTooLarge { got: f64 },
    #[error("dt and t_end must be positive and finite")]
    BadTimes,
    #[error("medium parameters must satisfy alpha >= 0, length > 0, inhom_width > 0, T2 > 0")]
    BadMedium,
}

/// Errors raised while running a simulation.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("numerical blowup at t = {t:.4}: the field or state became non-finite")]
    NumericalBlowup { t: f64 },
    #[error("horizon too short: echo predicted at t = {needed:.4} needs t_end >= {required:.4}, have {have:.4}")]
    HorizonTooShort { needed: f64, required: f64, have: f64 },
    #[error("sweep requires a non-empty list of optical depths")]
    EmptySweep,
    #[error("sweep closed forms are defined for the two-pulse-echo and cdr protocols only")]
    SweepUnsupported,
    #[error("failed to write output: {0}")]
    Io(#[from] std::io::Error),
}

/// Quadrature nodes and normalized weights for the detuning ensemble.
///
/// The nodes are uniform over [-span·Δ′, +span·Δ′] (with optional seeded
/// jitter of the interior nodes), the weights are trapezoidal cells times
/// the spectral density, normalized so they sum to one. A single-node grid
/// degenerates to the resonant atom with unit weight.
pub fn detuning_weights(grid: &SimGrid, medium: &MediumConfig) -> Vec<(Detuning, f64)> {
    if grid.n_delta == 1 {
        return vec![(Detuning(0.0), 1.0)];
    }
    let half_width = grid.delta_span * medium.inhom_width;
    let n = grid.n_delta;
    let spacing = 2.0 * half_width / (n - 1) as f64;

    let mut nodes: Vec<f64> = (0..n).map(|k| -half_width + k as f64 * spacing).collect();
    if let Some(seed) = grid.seed {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let center = n / 2;
        for (k, node) in nodes.iter_mut().enumerate() {
            if k == 0 || k == n - 1 || k == center {
                continue; // pin the edges and the resonant node
            }
            *node += rng.gen_range(-0.3..0.3) * spacing;
        }
    }

    let density = |delta: f64| -> f64 {
        match medium.lineshape {
            LineShape::FlatWindow => 1.0,
            LineShape::Gaussian => {
                let x = delta / medium.inhom_width;
                (-0.5 * x * x).exp()
            }
        }
    };

    // trapezoidal cell widths on the (possibly jittered) nodes
    let mut weights = vec![0.0; n];
    for k in 0..n {
        let left = if k == 0 { nodes[0] } else { nodes[k - 1] };
        let right = if k == n - 1 { nodes[n - 1] } else { nodes[k + 1] };
        weights[k] = 0.5 * (right - left) * density(nodes[k]);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    nodes.into_iter().map(Detuning).zip(weights).collect()
}

/// Field-polarization coupling constant κ = α / (2π g(0)).
///
/// g(0) is the peak of the normalized spectral density, so a resonant weak
/// field decays at the Beer's-law rate α/2 regardless of the lineshape.
pub fn field_coupling(grid: &SimGrid, medium: &MediumConfig) -> f64 {
    match medium.lineshape {
        LineShape::FlatWindow => {
            let half_width = grid.delta_span * medium.inhom_width;
            medium.alpha * half_width / std::f64::consts::PI
        }
        LineShape::Gaussian => {
            medium.alpha * medium.inhom_width / (2.0 * std::f64::consts::PI).sqrt()
        }
    }
}

/// Propagation direction of a field or echo along the common axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn index(self) -> i8 {
        match self {
            Direction::Forward => 1,
            Direction::Backward => -1,
        }
    }
}

/// Advance one field sample by one spatial step of the propagation
/// equation, trapezoidal in the polarization source.
///
/// Forward fields satisfy ∂ε/∂z = +iκP and are marched toward +z from the
/// entry face; backward fields satisfy ∂ε/∂z = -iκP and are marched toward
/// -z from the far face (where the backward field vanishes).
#[inline]
pub fn propagate_step(
    field: C64,
    pol_here: C64,
    pol_next: C64,
    dz: f64,
    kappa: f64,
    direction: Direction,
) -> C64 {
    let i = C64::new(0.0, 1.0);
    let (step, source_sign) = match direction {
        Direction::Forward => (dz, 1.0),
        Direction::Backward => (-dz, -1.0),
    };
    field + i * (kappa * source_sign * step * 0.5) * (pol_here + pol_next)
}

/// Complex field samples on a (z, t) lattice (time-major storage).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEnvelope {
    pub direction: Direction,
    pub n_z: usize,
    pub n_t: usize,
    pub dz: f64,
    pub dt: f64,
    pub t0: f64,
    pub samples: Vec<C64>,
}

impl FieldEnvelope {
    pub fn at(&self, zi: usize, ti: usize) -> C64 {
        self.samples[ti * self.n_z + zi]
    }

    /// |ε|² integrated over time at a fixed z index.
    pub fn energy_at(&self, zi: usize) -> f64 {
        (0..self.n_t).map(|ti| self.at(zi, ti).norm_sqr()).sum::<f64>() * self.dt
    }
}

/// One detected echo.
#[derive(Debug, Clone)]
pub struct EchoResult {
    /// Time of the envelope intensity peak at the exit face.
    pub echo_time: f64,
    /// +1 forward (data direction), -1 backward.
    pub direction: i8,
    /// Echo energy at its exit face over the input energy at the entry
    /// face.
    pub efficiency: f64,
    /// Exit-face envelope over the detection window.
    pub envelope: FieldEnvelope,
    /// The schedule prediction this echo was matched against, if any.
    pub predicted: Option<crate::protocol::EchoPrediction>,
}

/// Everything a single run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dt: f64,
    pub optical_depth: f64,
    /// Energy of the injected data pulse at the entry face.
    pub input_energy: f64,
    /// Forward exit-face energy within ±4 data-pulse durations of t_D.
    pub transmitted_energy: f64,
    /// Exit-face time series: forward face z = L and backward face z = 0.
    pub forward_exit: Vec<C64>,
    pub backward_exit: Vec<C64>,
    /// Field-equivalent energy stored in the excited-state population,
    /// κ·∫dz Σ_k w_k σ₂₂; one sample per time step.
    pub stored_energy: Vec<f64>,
    pub echoes: Vec<EchoResult>,
    pub predictions: Vec<crate::protocol::EchoPrediction>,
    /// Full (z, t) lattices, recorded when requested.
    pub forward_field: Option<FieldEnvelope>,
    pub backward_field: Option<FieldEnvelope>,
}

impl RunOutput {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.forward_exit.len()).map(move |n| n as f64 * self.dt)
    }

    /// The detected echo matched to a given prediction label.
    pub fn echo(&self, label: crate::protocol::EchoLabel) -> Option<&EchoResult> {
        self.echoes
            .iter()
            .find(|e| e.predicted.is_some_and(|p| p.label == label))
    }

    /// Exit-face series in the direction of the primary radiating
    /// prediction (forward when there is none).
    pub fn primary_exit(&self) -> (&[C64], Direction) {
        let backward = self
            .predictions
            .iter()
            .rev()
            .find(|p| p.radiates())
            .is_some_and(|p| p.k.0 < 0);
        if backward {
            (&self.backward_exit, Direction::Backward)
        } else {
            (&self.forward_exit, Direction::Forward)
        }
    }

    /// Write the exit-face time series as CSV with columns
    /// `t,z_exit_field_re,z_exit_field_im`.
    pub fn write_run_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,z_exit_field_re,z_exit_field_im")?;
        let (series, _) = self.primary_exit();
        for (n, eps) in series.iter().enumerate() {
            writeln!(w, "{:.9e},{:.9e},{:.9e}", n as f64 * self.dt, eps.re, eps.im)?;
        }
        Ok(())
    }
}

/// One point of an efficiency sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha_l: f64,
    pub measured: f64,
    pub closed_form: f64,
}

impl SweepRow {
    pub fn rel_error(&self) -> f64 {
        if self.closed_form == 0.0 {
            if self.measured == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            (self.measured - self.closed_form).abs() / self.closed_form
        }
    }
}

/// Result of [`efficiency_sweep`], with simple shape diagnostics.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Row with the largest measured efficiency.
    pub fn peak(&self) -> &SweepRow {
        self.rows
            .iter()
            .max_by(|a, b| a.measured.total_cmp(&b.measured))
            .expect("sweep table is never empty")
    }

    /// True when the measured efficiencies increase monotonically with αL.
    pub fn monotonic_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].measured >= w[0].measured)
    }

    /// Write the sweep as CSV with columns
    /// `alphaL,efficiency_measured,efficiency_closed_form`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "alphaL,efficiency_measured,efficiency_closed_form")?;
        for row in &self.rows {
            writeln!(
                w,
                "{:.9e},{:.9e},{:.9e}",
                row.alpha_l, row.measured, row.closed_form
            )?;
        }
        Ok(())
    }
}

/// Run the schedule once per optical depth and tabulate measured retrieval
/// efficiency against the protocol's closed form.
///
/// The closed forms are (1 - e^{-αL})² for backward CDR retrieval,
/// (αL)²e^{-αL} for forward CDR retrieval, and 4·sinh²(αL/2) for the
/// two-pulse echo in the inverted medium.
pub fn efficiency_sweep(
    schedule: &PulseSchedule,
    medium_template: &MediumConfig,
    alpha_l: &[f64],
    grid: &SimGrid,
) -> Result<SweepTable, SimError> {
    if alpha_l.is_empty() {
        return Err(SimError::EmptySweep);
    }
    let closed: Box<dyn Fn(f64) -> f64> = match schedule.kind() {
        Some(ProtocolKind::TwoPulseEcho) => Box::new(crate::analytic::two_pulse_echo_gain),
        Some(ProtocolKind::Cdr) => {
            let backward = schedule
                .prediction(crate::protocol::EchoLabel::E2)
                .is_some_and(|p| p.k.0 < 0);
            if backward {
                Box::new(crate::analytic::efficiency_backward)
            } else {
                Box::new(crate::analytic::efficiency_forward)
            }
        }
        _ => return Err(SimError::SweepUnsupported),
    };

    let label = match schedule.kind() {
        Some(ProtocolKind::TwoPulseEcho) => crate::protocol::EchoLabel::E1,
        _ => crate::protocol::EchoLabel::E2,
    };

    let mut rows = Vec::with_capacity(alpha_l.len());
    for &al in alpha_l {
        let medium = MediumConfig { alpha: al / medium_template.length, ..medium_template.clone() };
        let out = run_simulation(schedule, &medium, grid)?;
        let measured = out.echo(label).map_or(0.0, |e| e.efficiency);
        rows.push(SweepRow { alpha_l: al, measured, closed_form: closed(al) });
    }
    Ok(SweepTable { rows })
}
