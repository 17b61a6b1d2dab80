//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments run to the end of the line
//! seed = 7
//! teacher.eta = 0.05
//! student.widths = 256, 256, 256
//! ```
//!
//! Every key has a default, unknown and repeated keys are rejected, and
//! every error names the line and key it came from.

use std::fmt;
use std::path::PathBuf;

use nfmlab_core::datasets::{DatasetName, DatasetSpec};
use nfmlab_core::fm_student::StudentConfig;
use nfmlab_core::nf_teacher::TeacherConfig;
use nfmlab_core::numerics::AdamConfig;
use nfmlab_core::sampling::{ClassChoice, Schedule, ScheduleKind, Solver, SolverConfig};

use crate::CouplingName;

/// Longest accepted config text; keeps the parser's work bounded.
pub const MAX_CONFIG_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn at(line: usize, key: Option<&str>, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            key: key.map(str::to_string),
            message: message.into(),
        }
    }

    fn key(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            key: Some(key.to_string()),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSettings {
    pub name: DatasetName,
    pub n: usize,
    pub k: usize,
    pub radius: f64,
    pub variance: f64,
    pub major: f64,
    pub minor: f64,
    pub moon_noise: f64,
    pub board_extent: f64,
    pub tiles: usize,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSettings {
    pub blocks: usize,
    pub width: usize,
    pub embed_dim: usize,
    pub clamp: f64,
    pub eta: f64,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub label_dropout: f64,
    pub sigma_samples: usize,
    pub nll_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentSettings {
    pub widths: Vec<usize>,
    pub time_dim: usize,
    pub class_dim: usize,
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub coupling: CouplingName,
    pub label_cost: f64,
    pub label_dropout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdSettings {
    pub support: usize,
    pub fit_steps: usize,
    pub batch: usize,
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSettings {
    pub solver: Solver,
    pub schedule: ScheduleKind,
    pub steps: usize,
    pub guidance: f64,
    pub count: usize,
    pub class: ClassChoice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub count: usize,
    pub nfe: Vec<usize>,
    pub schedule: ScheduleKind,
    pub quick_count: usize,
    pub w_max: f64,
    pub iterations: usize,
    pub ztable_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetSettings,
    pub teacher: TeacherSettings,
    pub student: StudentSettings,
    pub sd: SdSettings,
    pub sampler: SamplerSettings,
    pub eval: EvalSettings,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            dataset: DatasetSettings {
                name: DatasetName::GaussMix,
                n: 2,
                k: 8,
                radius: 4.0,
                variance: 0.09,
                major: 0.5,
                minor: 0.05,
                moon_noise: 0.1,
                board_extent: 2.0,
                tiles: 4,
                scale: 1.0,
            },
            teacher: TeacherSettings {
                blocks: 8,
                width: 64,
                embed_dim: 16,
                clamp: 4.0,
                eta: 0.05,
                steps: 20_000,
                batch: 256,
                lr: 1e-3,
                label_dropout: 0.1,
                sigma_samples: 10_000,
                nll_count: 10_000,
            },
            student: StudentSettings {
                widths: vec![256, 256, 256],
                time_dim: 32,
                class_dim: 16,
                steps: 40_000,
                batch: 256,
                lr: 1e-3,
                coupling: CouplingName::Fm,
                label_cost: 1e3,
                label_dropout: 0.1,
            },
            sd: SdSettings {
                support: 1024,
                fit_steps: 5000,
                batch: 512,
                step_size: 1.0,
            },
            sampler: SamplerSettings {
                solver: Solver::Heun,
                schedule: ScheduleKind::Square,
                steps: 16,
                guidance: 0.0,
                count: 1024,
                class: ClassChoice::Random,
            },
            eval: EvalSettings {
                count: 1024,
                nfe: vec![31, 15, 7, 5, 3],
                schedule: ScheduleKind::Square,
                quick_count: 256,
                w_max: 4.0,
                iterations: 12,
                ztable_pairs: 10_000,
            },
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str, what: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("expected {what}, got {v:?}"))
}

fn parse_real(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v, "a real number")?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a finite real number, got {v:?}"))
    }
}

fn parse_list(v: &str) -> Result<Vec<usize>, String> {
    v.split(',')
        .map(|p| parse_num::<usize>(p.trim(), "a comma-separated list of integers"))
        .collect()
}

pub fn parse_class(v: &str) -> Result<ClassChoice, String> {
    match v {
        "random" => Ok(ClassChoice::Random),
        _ => v.parse().map(ClassChoice::Fixed).map_err(|e| format!("{e} (or `random`)")),
    }
}

pub fn class_text(c: ClassChoice) -> String {
    match c {
        ClassChoice::Random => "random".into(),
        ClassChoice::Fixed(l) => l.to_string(),
    }
}

fn list_text(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Every recognized key, in the order `to_text` writes them.
pub const KEYS: &[&str] = &[
    "seed",
    "out_dir",
    "dataset.name",
    "dataset.n",
    "dataset.k",
    "dataset.radius",
    "dataset.variance",
    "dataset.major",
    "dataset.minor",
    "dataset.moon_noise",
    "dataset.board_extent",
    "dataset.tiles",
    "dataset.scale",
    "teacher.blocks",
    "teacher.width",
    "teacher.embed_dim",
    "teacher.clamp",
    "teacher.eta",
    "teacher.steps",
    "teacher.batch",
    "teacher.lr",
    "teacher.label_dropout",
    "teacher.sigma_samples",
    "teacher.nll_count",
    "student.widths",
    "student.time_dim",
    "student.class_dim",
    "student.steps",
    "student.batch",
    "student.lr",
    "student.coupling",
    "student.label_cost",
    "student.label_dropout",
    "sd.support",
    "sd.fit_steps",
    "sd.batch",
    "sd.step_size",
    "sampler.solver",
    "sampler.schedule",
    "sampler.steps",
    "sampler.guidance",
    "sampler.count",
    "sampler.class",
    "eval.count",
    "eval.nfe",
    "eval.schedule",
    "eval.quick_count",
    "eval.w_max",
    "eval.iterations",
    "eval.ztable_pairs",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
];

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.len() > MAX_CONFIG_BYTES {
            return Err(ConfigError::at(1, None, format!("config larger than {MAX_CONFIG_BYTES} bytes")));
        }
        let mut cfg = RunConfig::default();
        let mut seen: Vec<(&str, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::at(line, None, format!("expected `key = value`, got {content:?}")));
            };
            let key = key.trim();
            let mut value = value.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            let Some(&known) = KEYS.iter().find(|k| **k == key) else {
                return Err(ConfigError::at(line, Some(key), "unknown key"));
            };
            if let Some((_, first)) = seen.iter().find(|(k, _)| *k == known) {
                return Err(ConfigError::at(line, Some(key), format!("repeated (first set on line {first})")));
            }
            seen.push((known, line));
            cfg.set(known, value).map_err(|m| ConfigError::at(line, Some(known), m))?;
        }
        cfg.validate().map_err(|mut e| {
            if let Some(k) = &e.key {
                e.line = seen.iter().find(|(s, _)| s == k).map(|(_, l)| *l);
            }
            e
        })?;
        Ok(cfg)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let d = &mut self.dataset;
        let t = &mut self.teacher;
        let s = &mut self.student;
        let int = |v: &str| parse_num::<usize>(v, "a nonnegative integer");
        match key {
            "seed" => self.seed = parse_num(v, "an unsigned 64-bit integer")?,
            "out_dir" => {
                if v.is_empty() {
                    return Err("must not be empty".into());
                }
                self.out_dir = PathBuf::from(v)
            }
            "dataset.name" => d.name = v.parse().map_err(|e: nfmlab_core::Error| e.to_string())?,
            "dataset.n" => d.n = int(v)?,
            "dataset.k" => d.k = int(v)?,
            "dataset.radius" => d.radius = parse_real(v)?,
            "dataset.variance" => d.variance = parse_real(v)?,
            "dataset.major" => d.major = parse_real(v)?,
            "dataset.minor" => d.minor = parse_real(v)?,
            "dataset.moon_noise" => d.moon_noise = parse_real(v)?,
            "dataset.board_extent" => d.board_extent = parse_real(v)?,
            "dataset.tiles" => d.tiles = int(v)?,
            "dataset.scale" => d.scale = parse_real(v)?,
            "teacher.blocks" => t.blocks = int(v)?,
            "teacher.width" => t.width = int(v)?,
            "teacher.embed_dim" => t.embed_dim = int(v)?,
            "teacher.clamp" => t.clamp = parse_real(v)?,
            "teacher.eta" => t.eta = parse_real(v)?,
            "teacher.steps" => t.steps = int(v)?,
            "teacher.batch" => t.batch = int(v)?,
            "teacher.lr" => t.lr = parse_real(v)?,
            "teacher.label_dropout" => t.label_dropout = parse_real(v)?,
            "teacher.sigma_samples" => t.sigma_samples = int(v)?,
            "teacher.nll_count" => t.nll_count = int(v)?,
            "student.widths" => s.widths = parse_list(v)?,
            "student.time_dim" => s.time_dim = int(v)?,
            "student.class_dim" => s.class_dim = int(v)?,
            "student.steps" => s.steps = int(v)?,
            "student.batch" => s.batch = int(v)?,
            "student.lr" => s.lr = parse_real(v)?,
            "student.coupling" => s.coupling = v.parse()?,
            "student.label_cost" => s.label_cost = parse_real(v)?,
            "student.label_dropout" => s.label_dropout = parse_real(v)?,
            "sd.support" => self.sd.support = int(v)?,
            "sd.fit_steps" => self.sd.fit_steps = int(v)?,
            "sd.batch" => self.sd.batch = int(v)?,
            "sd.step_size" => self.sd.step_size = parse_real(v)?,
            "sampler.solver" => self.sampler.solver = v.parse().map_err(|e: nfmlab_core::Error| e.to_string())?,
            "sampler.schedule" => self.sampler.schedule = v.parse().map_err(|e: nfmlab_core::Error| e.to_string())?,
            "sampler.steps" => self.sampler.steps = int(v)?,
            "sampler.guidance" => self.sampler.guidance = parse_real(v)?,
            "sampler.count" => self.sampler.count = int(v)?,
            "sampler.class" => self.sampler.class = parse_class(v)?,
            "eval.count" => self.eval.count = int(v)?,
            "eval.nfe" => self.eval.nfe = parse_list(v)?,
            "eval.schedule" => self.eval.schedule = v.parse().map_err(|e: nfmlab_core::Error| e.to_string())?,
            "eval.quick_count" => self.eval.quick_count = int(v)?,
            "eval.w_max" => self.eval.w_max = parse_real(v)?,
            "eval.iterations" => self.eval.iterations = int(v)?,
            "eval.ztable_pairs" => self.eval.ztable_pairs = int(v)?,
            "optim.beta1" => self.beta1 = parse_real(v)?,
            "optim.beta2" => self.beta2 = parse_real(v)?,
            "optim.eps" => self.eps = parse_real(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Range checks; errors carry the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(ConfigError::key(key, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        let positive_real = |key: &str, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::key(key, format!("must be > 0, got {v}")))
            }
        };
        let unit = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::key(key, format!("must lie in [0, 1], got {v}")))
            }
        };
        let d = &self.dataset;
        positive("dataset.n", d.n)?;
        positive("dataset.k", d.k)?;
        if d.n < 2 && d.name != DatasetName::GaussMix {
            return Err(ConfigError::key("dataset.n", "this dataset needs n ≥ 2"));
        }
        if d.n < 2 && d.k > 1 {
            return Err(ConfigError::key("dataset.n", "a circle of components needs n ≥ 2"));
        }
        if d.n > 64 {
            return Err(ConfigError::key("dataset.n", "at most 64 dimensions are supported"));
        }
        if d.k > 1024 {
            return Err(ConfigError::key("dataset.k", "at most 1024 classes are supported"));
        }
        if d.radius < 0.0 {
            return Err(ConfigError::key("dataset.radius", "must be ≥ 0"));
        }
        positive_real("dataset.variance", d.variance)?;
        positive_real("dataset.major", d.major)?;
        positive_real("dataset.minor", d.minor)?;
        if d.moon_noise < 0.0 {
            return Err(ConfigError::key("dataset.moon_noise", "must be ≥ 0"));
        }
        positive_real("dataset.board_extent", d.board_extent)?;
        positive("dataset.tiles", d.tiles)?;
        positive_real("dataset.scale", d.scale)?;

        let t = &self.teacher;
        positive("teacher.blocks", t.blocks)?;
        positive("teacher.width", t.width)?;
        positive("teacher.embed_dim", t.embed_dim)?;
        positive_real("teacher.clamp", t.clamp)?;
        if t.eta < 0.0 {
            return Err(ConfigError::key("teacher.eta", "must be ≥ 0"));
        }
        positive("teacher.batch", t.batch)?;
        positive_real("teacher.lr", t.lr)?;
        unit("teacher.label_dropout", t.label_dropout)?;
        if t.sigma_samples < 1000 {
            return Err(ConfigError::key("teacher.sigma_samples", "must be at least 1000"));
        }
        positive("teacher.nll_count", t.nll_count)?;

        let s = &self.student;
        if s.widths.is_empty() || s.widths.contains(&0) {
            return Err(ConfigError::key("student.widths", "needs at least one positive width"));
        }
        positive("student.time_dim", s.time_dim)?;
        positive("student.class_dim", s.class_dim)?;
        positive("student.batch", s.batch)?;
        if s.coupling == CouplingName::Ot && s.batch > nfmlab_core::couplings::MAX_ASSIGNMENT {
            return Err(ConfigError::key("student.batch", "minibatch OT supports at most 2048 rows"));
        }
        positive_real("student.lr", s.lr)?;
        if s.label_cost < 0.0 {
            return Err(ConfigError::key("student.label_cost", "must be ≥ 0"));
        }
        unit("student.label_dropout", s.label_dropout)?;

        positive("sd.support", self.sd.support)?;
        positive("sd.batch", self.sd.batch)?;
        positive_real("sd.step_size", self.sd.step_size)?;

        let sm = &self.sampler;
        positive("sampler.steps", sm.steps)?;
        if sm.solver == Solver::Heun && sm.steps < 2 {
            return Err(ConfigError::key("sampler.steps", "heun needs at least 2 steps"));
        }
        if sm.guidance < 0.0 {
            return Err(ConfigError::key("sampler.guidance", "must be ≥ 0"));
        }
        positive("sampler.count", sm.count)?;
        if let ClassChoice::Fixed(c) = sm.class {
            if !c.is_valid(d.k) {
                return Err(ConfigError::key("sampler.class", format!("class {c} outside 0..{}", d.k)));
            }
        }

        let e = &self.eval;
        let max = nfmlab_core::couplings::MAX_ASSIGNMENT;
        if e.count == 0 || e.count > max {
            return Err(ConfigError::key("eval.count", format!("must lie in 1..={max}")));
        }
        if e.quick_count == 0 || e.quick_count > max {
            return Err(ConfigError::key("eval.quick_count", format!("must lie in 1..={max}")));
        }
        if e.nfe.is_empty() {
            return Err(ConfigError::key("eval.nfe", "needs at least one value"));
        }
        for &nfe in &e.nfe {
            Solver::for_nfe(nfe).map_err(|err| ConfigError::key("eval.nfe", err.to_string()))?;
        }
        if e.w_max < 0.0 {
            return Err(ConfigError::key("eval.w_max", "must be ≥ 0"));
        }
        positive("eval.ztable_pairs", e.ztable_pairs)?;

        if !(0.0..1.0).contains(&self.beta1) {
            return Err(ConfigError::key("optim.beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(ConfigError::key("optim.beta2", "must lie in [0, 1)"));
        }
        positive_real("optim.eps", self.eps)?;
        Ok(())
    }

    /// Writes every key; parsing the result gives back an equal config.
    pub fn to_text(&self) -> String {
        let d = &self.dataset;
        let t = &self.teacher;
        let s = &self.student;
        let values: Vec<String> = vec![
            self.seed.to_string(),
            self.out_dir.display().to_string(),
            d.name.as_str().into(),
            d.n.to_string(),
            d.k.to_string(),
            d.radius.to_string(),
            d.variance.to_string(),
            d.major.to_string(),
            d.minor.to_string(),
            d.moon_noise.to_string(),
            d.board_extent.to_string(),
            d.tiles.to_string(),
            d.scale.to_string(),
            t.blocks.to_string(),
            t.width.to_string(),
            t.embed_dim.to_string(),
            t.clamp.to_string(),
            t.eta.to_string(),
            t.steps.to_string(),
            t.batch.to_string(),
            t.lr.to_string(),
            t.label_dropout.to_string(),
            t.sigma_samples.to_string(),
            t.nll_count.to_string(),
            list_text(&s.widths),
            s.time_dim.to_string(),
            s.class_dim.to_string(),
            s.steps.to_string(),
            s.batch.to_string(),
            s.lr.to_string(),
            s.coupling.to_string(),
            s.label_cost.to_string(),
            s.label_dropout.to_string(),
            self.sd.support.to_string(),
            self.sd.fit_steps.to_string(),
            self.sd.batch.to_string(),
            self.sd.step_size.to_string(),
            self.sampler.solver.to_string(),
            self.sampler.schedule.to_string(),
            self.sampler.steps.to_string(),
            self.sampler.guidance.to_string(),
            self.sampler.count.to_string(),
            class_text(self.sampler.class),
            self.eval.count.to_string(),
            list_text(&self.eval.nfe),
            self.eval.schedule.to_string(),
            self.eval.quick_count.to_string(),
            self.eval.w_max.to_string(),
            self.eval.iterations.to_string(),
            self.eval.ztable_pairs.to_string(),
            self.beta1.to_string(),
            self.beta2.to_string(),
            self.eps.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec, ConfigError> {
        let d = &self.dataset;
        let spec = match d.name {
            DatasetName::GaussMix => DatasetSpec::gauss_mix_circle(d.n, d.k, d.radius, d.variance),
            DatasetName::AnisoGauss => DatasetSpec::aniso_gauss(d.n, d.k, d.radius, d.major, d.minor),
            DatasetName::Moons => DatasetSpec::moons(d.n, d.moon_noise),
            DatasetName::Checkerboard => DatasetSpec::checkerboard(d.n, d.board_extent, d.tiles),
        }
        .and_then(|s| s.with_scale(d.scale))
        .map_err(|e| ConfigError::key("dataset.name", e.to_string()))?;
        Ok(spec)
    }

    pub fn teacher_config(&self, spec: &DatasetSpec) -> TeacherConfig {
        let t = &self.teacher;
        TeacherConfig {
            n: spec.n,
            k: spec.k,
            blocks: t.blocks,
            width: t.width,
            embed_dim: t.embed_dim,
            clamp: t.clamp,
            eta: t.eta,
            label_dropout: t.label_dropout,
        }
    }

    pub fn student_config(&self, spec: &DatasetSpec) -> StudentConfig {
        let s = &self.student;
        StudentConfig {
            n: spec.n,
            k: spec.k,
            hidden: s.widths.clone(),
            time_dim: s.time_dim,
            class_dim: s.class_dim,
            label_dropout: s.label_dropout,
        }
    }

    pub fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, ConfigError> {
        let sm = &self.sampler;
        let schedule = Schedule::new(sm.schedule, sm.steps).map_err(|e| ConfigError::key("sampler.steps", e.to_string()))?;
        SolverConfig::new(sm.solver, schedule, sm.guidance, sm.class)
            .map_err(|e| ConfigError::key("sampler.guidance", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nfmlab_core::datasets::Label;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
        assert_eq!(RunConfig::parse("# only a comment\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn documented_example_parses() {
        let text = "seed = 3\n\
                    dataset.name = gauss_mix      # gauss_mix | aniso_gauss | moons | checkerboard\n\
                    dataset.k = 8\n\
                    teacher.eta = 0.05\n\
                    teacher.steps = 5000\n\
                    student.widths = 128,128,128\n\
                    student.steps = 10000\n\
                    sampler.solver = heun          # euler | heun\n\
                    sampler.schedule = square      # linear | square\n\
                    eval.nfe = 31,15,7,5,3\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.student.widths, vec![128, 128, 128]);
        assert_eq!(cfg.teacher.steps, 5000);
    }

    #[test]
    fn values_and_comments() {
        let cfg = RunConfig::parse(
            "seed = 7 # trailing\nteacher.eta=0.1\nstudent.widths = 32, 16\nsampler.class = 3\nout_dir = \"runs/a\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.teacher.eta, 0.1);
        assert_eq!(cfg.student.widths, vec![32, 16]);
        assert_eq!(cfg.sampler.class, ClassChoice::Fixed(Label::Class(3)));
        assert_eq!(cfg.out_dir, PathBuf::from("runs/a"));
    }

    #[test]
    fn unknown_key_names_line_and_key() {
        let e = RunConfig::parse("seed = 1\nteacher.etaa = 0.1\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert_eq!(e.key.as_deref(), Some("teacher.etaa"));
        assert!(e.to_string().contains("line 2"));
    }

    #[test]
    fn bad_value_names_key() {
        let e = RunConfig::parse("teacher.steps = many").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("teacher.steps"));
        let e = RunConfig::parse("teacher.eta = nan").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("teacher.eta"));
    }

    #[test]
    fn range_errors_point_at_line() {
        let e = RunConfig::parse("seed = 1\n\nteacher.eta = -1\n").unwrap_err();
        assert_eq!((e.line, e.key.as_deref()), (Some(3), Some("teacher.eta")));
        let e = RunConfig::parse("sampler.solver = heun\nsampler.steps = 1").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("sampler.steps"));
    }

    #[test]
    fn missing_equals_and_repeats() {
        assert_eq!(RunConfig::parse("seed 4").unwrap_err().line, Some(1));
        let e = RunConfig::parse("seed = 1\nseed = 2").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("line 1"));
    }

    #[test]
    fn builds_core_configs() {
        let cfg = RunConfig::default();
        let spec = cfg.dataset_spec().unwrap();
        assert_eq!((spec.n, spec.k), (2, 8));
        assert_eq!(cfg.teacher_config(&spec).eta, 0.05);
        assert_eq!(cfg.student_config(&spec).hidden, vec![256, 256, 256]);
        assert_eq!(cfg.solver_config().unwrap().nfe(), 31);
    }
}
