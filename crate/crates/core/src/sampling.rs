//! ODE integration from noise (`t = 1`) to data (`t = 0`).

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use crate::datasets::{Label, LabeledBatch};
use crate::numerics::rng::{below, normal, stream};
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Anything that maps `(x_t, t, c)` rows to velocities.
pub trait VelocityField {
    fn dim(&self) -> usize;
    fn classes(&self) -> usize;
    fn velocity(&self, x: &Tensor, t: f64, labels: &[Label]) -> Result<Tensor>;
}

/// Closure-backed field, mostly for tests and analytic oracles.
pub struct FnField<F> {
    dim: usize,
    classes: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, Label) -> Vec<f64>,
{
    pub fn new(dim: usize, classes: usize, f: F) -> Self {
        FnField { dim, classes, f }
    }
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, Label) -> Vec<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn velocity(&self, x: &Tensor, t: f64, labels: &[Label]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(x.numel());
        for (r, &c) in labels.iter().enumerate() {
            let v = (self.f)(x.row(r), t, c);
            if v.len() != self.dim {
                return Err(Error::invalid("closure field returned wrong dimension"));
            }
            data.extend(v);
        }
        Ok(Tensor::from_parts(vec![x.rows(), self.dim], data))
    }
}

/// Wraps a field and counts how many batched evaluations it served.
pub struct CountingField<'a, V: ?Sized> {
    inner: &'a V,
    calls: Cell<usize>,
}

impl<'a, V: VelocityField + ?Sized> CountingField<'a, V> {
    pub fn new(inner: &'a V) -> Self {
        CountingField { inner, calls: Cell::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<V: VelocityField + ?Sized> VelocityField for CountingField<'_, V> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn classes(&self) -> usize {
        self.inner.classes()
    }

    fn velocity(&self, x: &Tensor, t: f64, labels: &[Label]) -> Result<Tensor> {
        self.calls.set(self.calls.get() + 1);
        self.inner.velocity(x, t, labels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    Square,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::Square => "square",
        })
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "t" => Ok(ScheduleKind::Linear),
            "square" | "t2" => Ok(ScheduleKind::Square),
            _ => Err(Error::invalid(format!("unknown schedule {s:?} (linear|square)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub steps: usize,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        Ok(Schedule { kind, steps })
    }

    /// Descending grid `{1, …, δt}` (or its square); `0` is not included.
    pub fn grid(&self) -> Vec<f64> {
        let s = self.steps;
        (0..s)
            .map(|i| {
                let t = (s - i) as f64 / s as f64;
                match self.kind {
                    ScheduleKind::Linear => t,
                    ScheduleKind::Square => t * t,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Euler,
    Heun,
}

impl Solver {
    /// Euler up to 5 evaluations, Heun above.
    pub fn for_nfe(nfe: usize) -> Result<(Solver, usize)> {
        match nfe {
            0 => Err(Error::invalid("NFE must be positive")),
            1..=5 => Ok((Solver::Euler, nfe)),
            _ if nfe % 2 == 1 => Ok((Solver::Heun, nfe.div_ceil(2))),
            _ => Err(Error::invalid(format!("NFE {nfe} is not reachable by Heun (needs 2·steps − 1)"))),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Euler => "euler",
            Solver::Heun => "heun",
        })
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Solver::Euler),
            "heun" => Ok(Solver::Heun),
            _ => Err(Error::invalid(format!("unknown solver {s:?} (euler|heun)"))),
        }
    }
}

/// Conditioning label for generated trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassChoice {
    Fixed(Label),
    /// Uniform over the field's classes, drawn per trajectory.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub solver: Solver,
    pub schedule: Schedule,
    pub guidance: f64,
    pub class: ClassChoice,
}

impl SolverConfig {
    pub fn new(solver: Solver, schedule: Schedule, guidance: f64, class: ClassChoice) -> Result<Self> {
        let cfg = SolverConfig {
            solver,
            schedule,
            guidance,
            class,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if self.solver == Solver::Heun && self.schedule.steps < 2 {
            return Err(Error::invalid("heun needs at least 2 steps"));
        }
        if !(self.guidance >= 0.0 && self.guidance.is_finite()) {
            return Err(Error::invalid("guidance must be finite and ≥ 0"));
        }
        if self.guidance > 0.0 && self.class == ClassChoice::Fixed(Label::Null) {
            return Err(Error::invalid("guidance needs a class label"));
        }
        Ok(())
    }

    pub fn with_guidance(mut self, w: f64) -> Self {
        self.guidance = w;
        self
    }

    pub fn nfe(&self) -> usize {
        nfe_count(self.solver, self.schedule.steps)
    }
}

/// Velocity evaluations a solver spends on `steps` grid points.
pub fn nfe_count(solver: Solver, steps: usize) -> usize {
    match solver {
        Solver::Euler => steps,
        Solver::Heun => (2 * steps).saturating_sub(1),
    }
}

/// `v_∅ + (1 + w)·(v_c − v_∅)`; `w = 0` is the plain conditional velocity.
pub fn guided_velocity<V: VelocityField + ?Sized>(
    field: &V,
    x: &Tensor,
    t: f64,
    labels: &[Label],
    w: f64,
) -> Result<Tensor> {
    let cond = field.velocity(x, t, labels)?;
    if w == 0.0 {
        return Ok(cond);
    }
    let null = vec![Label::Null; labels.len()];
    let uncond = field.velocity(x, t, &null)?;
    cond.zip_map(&uncond, "guidance", |c, u| u + (1.0 + w) * (c - u))
}

/// One solver run: states at every grid time plus the terminal `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Descending, starting at 1 and ending at 0.
    pub times: Vec<f64>,
    /// `states[i]` sits at `times[i]`; `states[0]` is the initial noise.
    pub states: Vec<Vec<f64>>,
    /// Effective velocity of each segment, so `states[i+1] = states[i] − Δt_i·velocities[i]`.
    pub velocities: Vec<Vec<f64>>,
    pub label: Label,
}

impl Trajectory {
    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("trajectory has states")
    }

    pub fn initial(&self) -> &[f64] {
        &self.states[0]
    }
}

/// Batched result of integrating many rows together.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRun {
    pub times: Vec<f64>,
    pub states: Vec<Tensor>,
    pub velocities: Vec<Tensor>,
    pub labels: Vec<Label>,
    pub nfe: usize,
}

impl BatchRun {
    pub fn terminal(&self) -> &Tensor {
        self.states.last().expect("run has states")
    }

    pub fn trajectory(&self, row: usize) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(|s| s.row(row).to_vec()).collect(),
            velocities: self.velocities.iter().map(|v| v.row(row).to_vec()).collect(),
            label: self.labels[row],
        }
    }
}

fn step_rows(x: &Tensor, v: &Tensor, dt: f64) -> Tensor {
    let data = x.data().iter().zip(v.data()).map(|(a, b)| a - dt * b).collect();
    Tensor::from_parts(x.shape().to_vec(), data)
}

fn check_rows(x: &Tensor, step: usize, strict: bool) -> Result<()> {
    if strict && !x.is_finite() {
        return Err(Error::NonFinite(format!("solver state at step {step}")));
    }
    Ok(())
}

/// Integrates every row of `x1` over the config's grid.
///
/// With `strict`, a non-finite state aborts with the step index; otherwise
/// non-finite rows are carried along and left for the caller to inspect.
pub fn integrate<V: VelocityField + ?Sized>(
    field: &V,
    config: &SolverConfig,
    x1: Tensor,
    labels: Vec<Label>,
    strict: bool,
) -> Result<BatchRun> {
    config.validate()?;
    if x1.cols() != field.dim() || x1.rows() != labels.len() {
        return Err(Error::Shape {
            op: "integrate",
            left: x1.shape().to_vec(),
            right: vec![labels.len(), field.dim()],
        });
    }
    let mut times = config.schedule.grid();
    times.push(0.0);
    let w = config.guidance;
    let mut states = vec![x1];
    let mut velocities = Vec::with_capacity(times.len() - 1);
    let mut nfe = 0usize;
    let segments = times.len() - 1;
    for i in 0..segments {
        let (t0, t1) = (times[i], times[i + 1]);
        let dt = t0 - t1;
        let x = &states[i];
        let v0 = guided_velocity(field, x, t0, &labels, w)?;
        nfe += 1;
        let last = i + 1 == segments;
        let v = if config.solver == Solver::Heun && !last {
            let pred = step_rows(x, &v0, dt);
            let v1 = guided_velocity(field, &pred, t1, &labels, w)?;
            nfe += 1;
            v0.zip_map(&v1, "heun", |a, b| 0.5 * (a + b))?
        } else {
            v0
        };
        let next = step_rows(x, &v, dt);
        check_rows(&next, i, strict)?;
        velocities.push(v);
        states.push(next);
    }
    Ok(BatchRun {
        times,
        states,
        velocities,
        labels,
        nfe,
    })
}

/// Initial noise and label of trajectory `index` under `seed`.
pub fn initial_draw(config: &SolverConfig, dim: usize, classes: usize, seed: u64, index: u64) -> (Vec<f64>, Label) {
    let mut rng = stream(seed, index);
    let x: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
    let label = match config.class {
        ClassChoice::Fixed(c) => c,
        ClassChoice::Random => Label::Class(below(&mut rng, classes)),
    };
    (x, label)
}

fn solve_one<V: VelocityField + ?Sized>(field: &V, config: &SolverConfig, seed: u64) -> Result<Trajectory> {
    if let ClassChoice::Fixed(c) = config.class {
        if !c.is_valid(field.classes()) {
            return Err(Error::invalid(format!("class {c} out of range")));
        }
    }
    let (x, label) = initial_draw(config, field.dim(), field.classes(), seed, 0);
    let x1 = Tensor::new(vec![1, field.dim()], x)?;
    Ok(integrate(field, config, x1, vec![label], true)?.trajectory(0))
}

/// Single Euler trajectory from the noise of stream `(seed, 0)`.
pub fn euler_solve<V: VelocityField + ?Sized>(field: &V, config: &SolverConfig, seed: u64) -> Result<Trajectory> {
    if config.solver != Solver::Euler {
        return Err(Error::invalid("euler_solve called with a heun config"));
    }
    solve_one(field, config, seed)
}

/// Single Heun trajectory from the noise of stream `(seed, 0)`.
pub fn heun_solve<V: VelocityField + ?Sized>(field: &V, config: &SolverConfig, seed: u64) -> Result<Trajectory> {
    if config.solver != Solver::Heun {
        return Err(Error::invalid("heun_solve called with an euler config"));
    }
    solve_one(field, config, seed)
}

/// Terminal samples of `count` trajectories, optionally with full paths.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: LabeledBatch,
    pub nfe: usize,
    /// Trajectories dropped for non-finite states.
    pub failed: usize,
    pub trajectories: Option<Vec<Trajectory>>,
}

/// Trajectory `i` starts from stream `(seed, i)`, so a prefix of a larger
/// set is identical to a smaller set with the same seed.
pub fn sample_set<V: VelocityField + ?Sized>(
    field: &V,
    config: &SolverConfig,
    count: usize,
    seed: u64,
    keep_trajectories: bool,
) -> Result<SampleSet> {
    if count == 0 {
        return Err(Error::invalid("sample count must be positive"));
    }
    config.validate()?;
    if let ClassChoice::Fixed(c) = config.class {
        if !c.is_valid(field.classes()) {
            return Err(Error::invalid(format!("class {c} out of range")));
        }
    }
    let n = field.dim();
    let mut x = Vec::with_capacity(count * n);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let (row, c) = initial_draw(config, n, field.classes(), seed, i as u64);
        x.extend(row);
        labels.push(c);
    }
    let run = integrate(field, config, Tensor::new(vec![count, n], x)?, labels, false)?;
    let terminal = run.terminal();
    let ok: Vec<usize> = (0..count)
        .filter(|&r| run.states.iter().all(|s| s.row(r).iter().all(|v| v.is_finite())))
        .collect();
    let failed = count - ok.len();
    if failed * 100 > count {
        return Err(Error::NonFinite(format!("{failed} of {count} trajectories diverged")));
    }
    let samples = LabeledBatch::new(
        terminal.select_rows(&ok),
        ok.iter().map(|&r| run.labels[r]).collect(),
    )?;
    let trajectories = keep_trajectories.then(|| ok.iter().map(|&r| run.trajectory(r)).collect());
    Ok(SampleSet {
        samples,
        nfe: run.nfe,
        failed,
        trajectories,
    })
}

/// Writes `sample_id,step,t,x0..` rows.
pub fn write_trajectories_csv<W: std::io::Write>(trajectories: &[Trajectory], mut w: W) -> std::io::Result<()> {
    let n = trajectories.first().map_or(0, |t| t.initial().len());
    let mut header = String::from("sample_id,step,t");
    for j in 0..n {
        header.push_str(&format!(",x{j}"));
    }
    writeln!(w, "{header}")?;
    for (id, traj) in trajectories.iter().enumerate() {
        for (step, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
            write!(w, "{id},{step},{t}")?;
            for v in x {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(solver: Solver, kind: ScheduleKind, steps: usize) -> SolverConfig {
        SolverConfig::new(solver, Schedule::new(kind, steps).unwrap(), 0.0, ClassChoice::Fixed(Label::Class(0)))
            .unwrap()
    }

    #[test]
    fn grids() {
        let lin = Schedule::new(ScheduleKind::Linear, 4).unwrap().grid();
        assert_eq!(lin, vec![1.0, 0.75, 0.5, 0.25]);
        let sq = Schedule::new(ScheduleKind::Square, 4).unwrap().grid();
        assert_eq!(sq, vec![1.0, 0.5625, 0.25, 0.0625]);
        assert!(Schedule::new(ScheduleKind::Linear, 0).is_err());
    }

    #[test]
    fn nfe_identities() {
        assert_eq!(nfe_count(Solver::Euler, 5), 5);
        assert_eq!(nfe_count(Solver::Heun, 2), 3);
        assert_eq!(nfe_count(Solver::Heun, 4), 7);
        assert_eq!(nfe_count(Solver::Heun, 16), 31);
        assert_eq!(Solver::for_nfe(31).unwrap(), (Solver::Heun, 16));
        assert_eq!(Solver::for_nfe(4).unwrap(), (Solver::Euler, 4));
        assert!(Solver::for_nfe(8).is_err());
    }

    #[test]
    fn heun_needs_two_steps() {
        let s = Schedule::new(ScheduleKind::Linear, 1).unwrap();
        assert!(SolverConfig::new(Solver::Heun, s, 0.0, ClassChoice::Random).is_err());
        assert!(SolverConfig::new(Solver::Euler, s, 0.0, ClassChoice::Random).is_ok());
    }

    #[test]
    fn guidance_plug_in() {
        let f = FnField::new(2, 1, |_x: &[f64], _t, c| match c {
            Label::Null => vec![0.0, 0.0],
            Label::Class(_) => vec![1.0, 0.0],
        });
        let x = Tensor::zeros(&[1, 2]);
        let v = guided_velocity(&f, &x, 0.5, &[Label::Class(0)], 0.5).unwrap();
        assert_eq!(v.data(), &[1.5, 0.0]);
        let v = guided_velocity(&f, &x, 0.5, &[Label::Class(0)], 0.0).unwrap();
        assert_eq!(v.data(), &[1.0, 0.0]);
    }

    #[test]
    fn zero_field_keeps_noise() {
        let f = FnField::new(2, 1, |_x: &[f64], _t, _c| vec![0.0, 0.0]);
        let tr = euler_solve(&f, &cfg(Solver::Euler, ScheduleKind::Square, 5), 3).unwrap();
        assert_eq!(tr.terminal(), tr.initial());
    }

    #[test]
    fn constant_field_telescopes() {
        let f = FnField::new(2, 1, |_x: &[f64], _t, _c| vec![0.5, -1.0]);
        let e = euler_solve(&f, &cfg(Solver::Euler, ScheduleKind::Linear, 7), 1).unwrap();
        let h = heun_solve(&f, &cfg(Solver::Heun, ScheduleKind::Linear, 7), 1).unwrap();
        let x1 = e.initial();
        assert!((e.terminal()[0] - (x1[0] - 0.5)).abs() < 1e-12);
        assert!((e.terminal()[1] - (x1[1] + 1.0)).abs() < 1e-12);
        assert_eq!(e.terminal(), h.terminal());
    }

    #[test]
    fn one_euler_step_on_linear_field() {
        let f = FnField::new(1, 1, |x: &[f64], _t, _c| x.to_vec());
        let tr = euler_solve(&f, &cfg(Solver::Euler, ScheduleKind::Linear, 1), 0).unwrap();
        assert_eq!(tr.terminal(), &[0.0]);
    }

    #[test]
    fn counters_match_nfe() {
        let f = FnField::new(2, 1, |x: &[f64], t, _c| vec![x[0] * t, -x[1]]);
        for (solver, steps) in [(Solver::Euler, 3), (Solver::Heun, 2), (Solver::Heun, 16)] {
            let counter = CountingField::new(&f);
            let c = cfg(solver, ScheduleKind::Square, steps);
            let set = sample_set(&counter, &c, 4, 0, false).unwrap();
            assert_eq!(counter.calls(), nfe_count(solver, steps));
            assert_eq!(set.nfe, nfe_count(solver, steps));
        }
    }

    #[test]
    fn sample_set_prefix_and_single() {
        let f = FnField::new(2, 3, |x: &[f64], t, _c| vec![x[1] * t, -x[0]]);
        let c = SolverConfig::new(
            Solver::Heun,
            Schedule::new(ScheduleKind::Square, 4).unwrap(),
            0.0,
            ClassChoice::Random,
        )
        .unwrap();
        let big = sample_set(&f, &c, 10, 9, false).unwrap();
        let small = sample_set(&f, &c, 3, 9, false).unwrap();
        assert_eq!(big.samples.x.row(2), small.samples.x.row(2));
        let one = sample_set(&f, &c, 1, 9, true).unwrap();
        let tr = heun_solve(&f, &c, 9).unwrap();
        assert_eq!(one.samples.x.row(0), tr.terminal());
        assert_eq!(one.trajectories.unwrap()[0], tr);
    }

    #[test]
    fn nan_policy() {
        let f = FnField::new(1, 1, |_x: &[f64], _t, _c| vec![f64::NAN]);
        let c = cfg(Solver::Euler, ScheduleKind::Linear, 2);
        assert!(matches!(euler_solve(&f, &c, 0), Err(Error::NonFinite(_))));
        assert!(matches!(sample_set(&f, &c, 5, 0, false), Err(Error::NonFinite(_))));
    }

    #[test]
    fn guidance_needs_label() {
        let s = Schedule::new(ScheduleKind::Linear, 2).unwrap();
        assert!(SolverConfig::new(Solver::Euler, s, 1.0, ClassChoice::Fixed(Label::Null)).is_err());
    }
}
