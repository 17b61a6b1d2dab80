//! The five subcommands. Each writes its artifacts under the run's output
//! directory and reports progress lines to `log`; nothing depends on the
//! wall clock, so identical inputs give identical files and logs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nfmlab_core::couplings::{CouplingMode, SemiDiscrete};
use nfmlab_core::datasets::{sample_dataset, DatasetSpec, LabeledBatch};
use nfmlab_core::fm_student::{smoothed_tail, VelocityNet};
use nfmlab_core::metrics::{curvature, guidance_search, teacher_nll, wasserstein2, z_table, EvalReport};
use nfmlab_core::nf_teacher::FlowTeacher;
use nfmlab_core::numerics::rng::{fork, stream, Rng};
use nfmlab_core::sampling::{sample_set, write_trajectories_csv, ClassChoice, Schedule, ScheduleKind, Solver, SolverConfig};

use crate::config::RunConfig;
use crate::models::{
    load_student, load_teacher, student_to_checkpoint, teacher_to_checkpoint, write_checkpoint,
};
use crate::{report, svg, CliError, CouplingName, Result};

// Stream indices that keep every random consumer independent of the others.
const RNG_TEACHER_INIT: u64 = 1;
const RNG_TEACHER_TRAIN: u64 = 2;
const RNG_SIGMA: u64 = 3;
const RNG_NLL: u64 = 4;
const RNG_TEACHER_PLOT: u64 = 5;
const RNG_STUDENT_INIT: u64 = 11;
const RNG_STUDENT_TRAIN: u64 = 12;
const RNG_SD_SUPPORT: u64 = 13;
const RNG_SD_FIT: u64 = 14;
const RNG_SAMPLE: u64 = 21;
const RNG_REFERENCE: u64 = 22;
const RNG_QUICK_REFERENCE: u64 = 23;
const RNG_ZTABLE: u64 = 31;

/// Trajectories drawn in the trajectory plot.
const PLOTTED_TRAJECTORIES: usize = 64;

/// Resolved configuration plus where to write.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Run {
    pub fn new(config: RunConfig) -> Self {
        let out = config.out_dir.clone();
        Run { config, out }
    }

    fn rng(&self, purpose: u64) -> Rng {
        stream(self.config.seed, purpose)
    }

    fn derived_seed(&self, purpose: u64) -> u64 {
        fork(&mut self.rng(purpose))
    }

    fn spec(&self) -> Result<DatasetSpec> {
        self.config.dataset_spec().map_err(|source| CliError::Config {
            path: PathBuf::from("<resolved>"),
            source,
        })
    }

    /// Writes the fully resolved configuration next to the artifacts.
    fn record_config(&self, command: &str, log: &mut dyn Write) -> Result<()> {
        let text = format!("# resolved configuration for {command}\n{}", self.config.to_text());
        self.write("config.txt", text.as_bytes(), log).map(drop)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &[u8], log: &mut dyn Write) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| CliError::io(&p, e))?;
        say(log, format!("wrote {}", p.display()))?;
        Ok(p)
    }
}

fn say(log: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(log, "{}", line.as_ref()).map_err(|e| CliError::io("<log>", e))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check_fits(spec: &DatasetSpec, n: usize, k: usize, what: &str, path: &Path) -> Result<()> {
    if spec.n != n || spec.k > k {
        return Err(CliError::Usage(format!(
            "{what} {} was built for n={n}, k={k} but the dataset has n={}, k={}",
            path.display(),
            spec.n,
            spec.k
        )));
    }
    Ok(())
}

/// Trains a teacher, estimates σ_f and reports held-out NLL.
pub fn train_teacher(run: &Run, log: &mut dyn Write) -> Result<FlowTeacher> {
    let cfg = &run.config;
    let spec = run.spec()?;
    let tcfg = cfg.teacher_config(&spec);
    let mut teacher = FlowTeacher::new(tcfg, &mut run.rng(RNG_TEACHER_INIT))?;
    say(
        log,
        format!(
            "train-teacher: {} blocks, width {}, eta {}, {} steps, batch {}",
            cfg.teacher.blocks, cfg.teacher.width, cfg.teacher.eta, cfg.teacher.steps, cfg.teacher.batch
        ),
    )?;
    let history = teacher.train(
        &spec,
        cfg.teacher.steps,
        cfg.teacher.batch,
        cfg.adam(cfg.teacher.lr),
        &mut run.rng(RNG_TEACHER_TRAIN),
    )?;
    let sigma = teacher.estimate_sigma_f(&spec, cfg.teacher.sigma_samples, &mut run.rng(RNG_SIGMA))?;
    let nll = teacher_nll(&teacher, &spec, cfg.teacher.nll_count, &mut run.rng(RNG_NLL))?;
    if !history.is_empty() {
        say(log, format!("final loss (mean of last 100) {:.6}", smoothed_tail(&history, 100)))?;
    }
    say(log, format!("sigma_f {}", fmt_vec(&sigma)))?;
    say(log, format!("NLL {nll:.6} nats/dim"))?;

    let ckpt = teacher_to_checkpoint(&teacher).map_err(|source| CliError::Checkpoint {
        path: run.path("teacher.ckpt"),
        source,
    })?;
    std::fs::create_dir_all(&run.out).map_err(|e| CliError::io(&run.out, e))?;
    write_checkpoint(&ckpt, &run.path("teacher.ckpt"))?;
    say(log, format!("wrote {}", run.path("teacher.ckpt").display()))?;
    run.write("teacher_loss.csv", report::loss_csv(&history, "teacher").as_bytes(), log)?;
    run.write("teacher_loss.svg", svg::loss_curves(&[("teacher", &history)], "teacher NLL loss").as_bytes(), log)?;

    let mut rng = run.rng(RNG_TEACHER_PLOT);
    let labels = sample_dataset(&spec, 1024, &mut rng)?.c;
    let generated = teacher.generate(&labels, &mut rng)?;
    let batch = LabeledBatch::new(generated, labels)?;
    let plot = svg::scatter(&batch, Some(&spec), spec.extent(), "teacher samples");
    run.write("teacher_samples.svg", plot.as_bytes(), log)?;
    run.record_config("train-teacher", log)?;
    Ok(teacher)
}

/// Trains a student under `coupling`; `nfm` needs a teacher checkpoint.
pub fn distill(
    run: &Run,
    coupling: CouplingName,
    teacher_path: Option<&Path>,
    log: &mut dyn Write,
) -> Result<VelocityNet> {
    let cfg = &run.config;
    let spec = run.spec()?;
    let mut sd_state = None;
    let mode = match coupling {
        CouplingName::Fm => CouplingMode::Independent,
        CouplingName::Ot => CouplingMode::MinibatchOt {
            label_cost: cfg.student.label_cost,
        },
        CouplingName::Sdot => {
            let support = sample_dataset(&spec, cfg.sd.support, &mut run.rng(RNG_SD_SUPPORT))?;
            let mut sd = SemiDiscrete::new(support, spec.k, cfg.student.label_cost, cfg.sd.step_size)?;
            sd.fit(cfg.sd.fit_steps, cfg.sd.batch, &mut run.rng(RNG_SD_FIT))?;
            say(log, format!("semi-discrete potentials fitted on {} points", cfg.sd.support))?;
            sd_state = Some(sd.clone());
            CouplingMode::SemiDiscreteOt(sd)
        }
        CouplingName::Nfm => {
            let path = teacher_path
                .ok_or_else(|| CliError::Usage("--coupling nfm needs --teacher <checkpoint>".into()))?;
            let teacher = load_teacher(path)?;
            check_fits(&spec, teacher.dim(), teacher.config().k, "teacher", path)?;
            if teacher.sigma_f().is_none() {
                return Err(CliError::Usage(format!("teacher {} has no sigma_f", path.display())));
            }
            CouplingMode::NfTeacher(Arc::new(teacher))
        }
    };
    say(
        log,
        format!(
            "distill: coupling {coupling}, widths {:?}, {} steps, batch {}",
            cfg.student.widths, cfg.student.steps, cfg.student.batch
        ),
    )?;
    let mut net = VelocityNet::new(cfg.student_config(&spec), &mut run.rng(RNG_STUDENT_INIT))?;
    let history = net.train(
        &mode,
        &spec,
        cfg.student.steps,
        cfg.student.batch,
        cfg.adam(cfg.student.lr),
        &mut run.rng(RNG_STUDENT_TRAIN),
    )?;
    if !history.is_empty() {
        say(log, format!("final loss (mean of last 100) {:.6}", smoothed_tail(&history, 100)))?;
    }
    let name = format!("student_{coupling}.ckpt");
    let ckpt = student_to_checkpoint(&net, coupling, sd_state.as_ref()).map_err(|source| CliError::Checkpoint {
        path: run.path(&name),
        source,
    })?;
    std::fs::create_dir_all(&run.out).map_err(|e| CliError::io(&run.out, e))?;
    write_checkpoint(&ckpt, &run.path(&name))?;
    say(log, format!("wrote {}", run.path(&name).display()))?;
    run.write(&format!("loss_{coupling}.csv"), report::loss_csv(&history, coupling.as_str()).as_bytes(), log)?;
    let title = format!("flow-matching loss ({coupling})");
    run.write(
        &format!("loss_{coupling}.svg"),
        svg::loss_curves(&[(coupling.as_str(), &history)], &title).as_bytes(),
        log,
    )?;
    run.record_config("distill", log)?;
    Ok(net)
}

/// Per-invocation sampler overrides; `None` keeps the config value.
#[derive(Debug, Clone, Default)]
pub struct SampleArgs {
    pub solver: Option<Solver>,
    pub schedule: Option<ScheduleKind>,
    pub steps: Option<usize>,
    pub guidance: Option<f64>,
    pub count: Option<usize>,
    pub class: Option<ClassChoice>,
    pub trajectories: bool,
}

pub fn sample(run: &Run, student: &Path, args: &SampleArgs, log: &mut dyn Write) -> Result<LabeledBatch> {
    let sm = &run.config.sampler;
    let model = load_student(student)?;
    let spec = run.spec()?;
    let (n, k) = (model.net.config().n, model.net.config().k);
    check_fits(&spec, n, k, "student", student)?;
    let solver = args.solver.unwrap_or(sm.solver);
    let steps = args.steps.unwrap_or(sm.steps);
    let schedule = Schedule::new(args.schedule.unwrap_or(sm.schedule), steps).map_err(|e| CliError::Usage(e.to_string()))?;
    let class = args.class.unwrap_or(sm.class);
    if let ClassChoice::Fixed(c) = class {
        if !c.is_valid(k) {
            return Err(CliError::Usage(format!("class {c} outside 0..{k}")));
        }
    }
    let config = SolverConfig::new(solver, schedule, args.guidance.unwrap_or(sm.guidance), class)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let count = args.count.unwrap_or(sm.count);
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let seed = run.derived_seed(RNG_SAMPLE);
    let set = sample_set(&model.net, &config, count, seed, args.trajectories)?;
    say(
        log,
        format!(
            "sample: solver {solver}, schedule {}, steps {steps}, guidance {}, NFE={}",
            schedule.kind, config.guidance, set.nfe
        ),
    )?;
    if set.failed > 0 {
        say(log, format!("dropped {} diverged trajectories", set.failed))?;
    }
    let mut csv = Vec::new();
    set.samples.write_csv(&mut csv).map_err(|e| CliError::io("samples.csv", e))?;
    run.write("samples.csv", &csv, log)?;
    let title = format!("{} samples, {solver} NFE {}", model.coupling, set.nfe);
    run.write("samples.svg", svg::scatter(&set.samples, Some(&spec), spec.extent(), &title).as_bytes(), log)?;
    if let Some(trajs) = &set.trajectories {
        let mut csv = Vec::new();
        write_trajectories_csv(trajs, &mut csv).map_err(|e| CliError::io("trajectories.csv", e))?;
        run.write("trajectories.csv", &csv, log)?;
        let shown = &trajs[..trajs.len().min(PLOTTED_TRAJECTORIES)];
        let plot = svg::trajectories(shown, Some(&spec), spec.extent(), &format!("{} trajectories", model.coupling));
        run.write("trajectories.svg", plot.as_bytes(), log)?;
    }
    run.record_config("sample", log)?;
    Ok(set.samples)
}

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub nfe: Option<Vec<usize>>,
    pub solver: Option<Solver>,
    pub schedule: Option<ScheduleKind>,
    pub search_guidance: bool,
}

/// W2 against held-out data and unguided curvature per NFE budget.
pub fn eval(run: &Run, student: &Path, args: &EvalArgs, log: &mut dyn Write) -> Result<Vec<EvalReport>> {
    let cfg = &run.config;
    let model = load_student(student)?;
    let spec = run.spec()?;
    check_fits(&spec, model.net.config().n, model.net.config().k, "student", student)?;
    let nfes = args.nfe.clone().unwrap_or_else(|| cfg.eval.nfe.clone());
    if nfes.is_empty() {
        return Err(CliError::Usage("--nfe needs at least one value".into()));
    }
    let kind = args.schedule.unwrap_or(cfg.eval.schedule);
    let reference = sample_dataset(&spec, cfg.eval.count, &mut run.rng(RNG_REFERENCE))?.x;
    let quick = sample_dataset(&spec, cfg.eval.quick_count, &mut run.rng(RNG_QUICK_REFERENCE))?.x;
    let seed = run.derived_seed(RNG_SAMPLE);
    let mut rows = Vec::with_capacity(nfes.len());
    for &nfe in &nfes {
        let (solver, steps) = match args.solver {
            None => Solver::for_nfe(nfe).map_err(|e| CliError::Usage(e.to_string()))?,
            Some(Solver::Euler) if nfe > 0 => (Solver::Euler, nfe),
            Some(Solver::Heun) if nfe >= 3 && nfe % 2 == 1 => (Solver::Heun, nfe.div_ceil(2)),
            Some(s) => return Err(CliError::Usage(format!("NFE {nfe} is not reachable with {s}"))),
        };
        let schedule = Schedule::new(kind, steps)?;
        let unguided = SolverConfig::new(solver, schedule, 0.0, ClassChoice::Random)?;
        let base = sample_set(&model.net, &unguided, cfg.eval.count, seed, true)?;
        if base.failed > 0 {
            return Err(nfmlab_core::Error::NonFinite(format!("{} trajectories diverged at NFE {nfe}", base.failed)).into());
        }
        let kappa = curvature(base.trajectories.as_deref().unwrap_or_default())?;
        let (w, w2) = if args.search_guidance {
            let choice = guidance_search(
                &model.net,
                &unguided,
                &quick,
                cfg.eval.quick_count,
                cfg.eval.w_max,
                cfg.eval.iterations,
                seed,
            )?;
            let w2 = if choice.w == 0.0 {
                wasserstein2(&base.samples.x, &reference)?
            } else {
                let guided = sample_set(&model.net, &unguided.with_guidance(choice.w), cfg.eval.count, seed, false)?;
                if guided.failed > 0 {
                    return Err(nfmlab_core::Error::NonFinite(format!("guided sampling diverged at NFE {nfe}")).into());
                }
                wasserstein2(&guided.samples.x, &reference)?
            };
            (choice.w, w2)
        } else {
            (0.0, wasserstein2(&base.samples.x, &reference)?)
        };
        rows.push(EvalReport {
            nfe,
            solver: solver.to_string(),
            schedule: kind.to_string(),
            guidance: w,
            w2,
            kappa,
            nll: None,
        });
    }
    say(log, format!("eval: {} coupling, {} samples per row", model.coupling, cfg.eval.count))?;
    for line in report::eval_table(&rows).lines() {
        say(log, line)?;
    }
    run.write("eval.csv", report::eval_csv(&rows).as_bytes(), log)?;
    run.record_config("eval", log)?;
    Ok(rows)
}

/// Distance table over one or more trained teachers.
pub fn ztable(run: &Run, teachers: &[PathBuf], log: &mut dyn Write) -> Result<Vec<nfmlab_core::metrics::ZTableRow>> {
    if teachers.is_empty() {
        return Err(CliError::Usage("ztable needs at least one --teacher".into()));
    }
    let spec = run.spec()?;
    let mut loaded = Vec::with_capacity(teachers.len());
    for p in teachers {
        let t = load_teacher(p)?;
        check_fits(&spec, t.dim(), t.config().k, "teacher", p)?;
        loaded.push(t);
    }
    let refs: Vec<&FlowTeacher> = loaded.iter().collect();
    let rows = z_table(&refs, &spec, run.config.eval.ztable_pairs, &mut run.rng(RNG_ZTABLE))?;
    say(log, format!("ztable: {} pairs per cell", run.config.eval.ztable_pairs))?;
    for line in report::ztable_table(&rows).lines() {
        say(log, line)?;
    }
    run.write("ztable.csv", report::ztable_csv(&rows).as_bytes(), log)?;
    run.record_config("ztable", log)?;
    Ok(rows)
}
