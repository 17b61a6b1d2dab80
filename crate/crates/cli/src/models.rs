//! Teacher and student (de)serialization on top of [`Checkpoint`].

use std::path::Path;

use nfmlab_core::couplings::SemiDiscrete;
use nfmlab_core::datasets::Label;
use nfmlab_core::fm_student::{StudentConfig, VelocityNet};
use nfmlab_core::nf_teacher::{FlowTeacher, TeacherConfig};
use nfmlab_core::numerics::{Params, Tensor};

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::{CliError, CouplingName, Result};

const KIND_TEACHER: f64 = 0.0;
const KIND_STUDENT: f64 = 1.0;

// Size limits applied when rebuilding models from untrusted files.
const MAX_DIM: usize = 64;
const MAX_CLASSES: usize = 1024;
const MAX_BLOCKS: usize = 256;
const MAX_WIDTH: usize = 4096;
const MAX_DEPTH: usize = 16;

fn ck(path: &Path) -> impl Fn(CheckpointError) -> CliError + '_ {
    move |source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, msg: impl Into<String>) -> CliError {
    CliError::Checkpoint {
        path: path.to_path_buf(),
        source: CheckpointError::Invalid(msg.into()),
    }
}

fn put_params(c: &mut Checkpoint, params: &Params) -> Result<(), CheckpointError> {
    for (name, t) in params.iter() {
        c.insert("params", name, t.clone())?;
    }
    Ok(())
}

fn take_params(c: &Checkpoint) -> Params {
    let mut p = Params::new();
    for e in c.section("params") {
        p.insert(e.name.clone(), e.tensor.clone());
    }
    p
}

fn expect_kind(c: &Checkpoint, kind: f64, path: &Path) -> Result<()> {
    let found = c.scalar("meta", "kind").map_err(ck(path))?;
    if found != kind {
        let what = if kind == KIND_TEACHER { "teacher" } else { "student" };
        return Err(invalid(path, format!("not a {what} checkpoint")));
    }
    Ok(())
}

pub fn teacher_to_checkpoint(t: &FlowTeacher) -> Result<Checkpoint, CheckpointError> {
    let cfg = t.config();
    let mut c = Checkpoint::new();
    c.insert_scalar("meta", "kind", KIND_TEACHER)?;
    c.insert_scalar("meta", "n", cfg.n as f64)?;
    c.insert_scalar("meta", "k", cfg.k as f64)?;
    c.insert_scalar("meta", "blocks", cfg.blocks as f64)?;
    c.insert_scalar("meta", "width", cfg.width as f64)?;
    c.insert_scalar("meta", "embed_dim", cfg.embed_dim as f64)?;
    c.insert_scalar("meta", "clamp", cfg.clamp)?;
    c.insert_scalar("meta", "eta", cfg.eta)?;
    c.insert_scalar("meta", "label_dropout", cfg.label_dropout)?;
    c.insert_scalar("meta", "trained_steps", t.trained_steps() as f64)?;
    if let Some(s) = t.sigma_f() {
        let s = Tensor::new(vec![s.len()], s.to_vec()).map_err(|e| CheckpointError::Invalid(e.to_string()))?;
        c.insert("stats", "sigma_f", s)?;
    }
    put_params(&mut c, t.params())?;
    Ok(c)
}

pub fn teacher_from_checkpoint(c: &Checkpoint, path: &Path) -> Result<FlowTeacher> {
    expect_kind(c, KIND_TEACHER, path)?;
    let e = ck(path);
    let cfg = TeacherConfig {
        n: c.count("meta", "n", MAX_DIM).map_err(&e)?,
        k: c.count("meta", "k", MAX_CLASSES).map_err(&e)?,
        blocks: c.count("meta", "blocks", MAX_BLOCKS).map_err(&e)?,
        width: c.count("meta", "width", MAX_WIDTH).map_err(&e)?,
        embed_dim: c.count("meta", "embed_dim", MAX_WIDTH).map_err(&e)?,
        clamp: c.scalar("meta", "clamp").map_err(&e)?,
        eta: c.scalar("meta", "eta").map_err(&e)?,
        label_dropout: c.scalar("meta", "label_dropout").map_err(&e)?,
    };
    let steps = c.count("meta", "trained_steps", usize::MAX >> 12).map_err(&e)? as u64;
    let sigma = c.get("stats", "sigma_f").map(|t| t.data().to_vec());
    FlowTeacher::from_parts(cfg, take_params(c), sigma, steps).map_err(|err| invalid(path, err.to_string()))
}

/// A student network and the coupling it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub net: VelocityNet,
    pub coupling: CouplingName,
}

pub fn student_to_checkpoint(
    net: &VelocityNet,
    coupling: CouplingName,
    sd: Option<&SemiDiscrete>,
) -> Result<Checkpoint, CheckpointError> {
    let cfg = net.config();
    let mut c = Checkpoint::new();
    c.insert_scalar("meta", "kind", KIND_STUDENT)?;
    c.insert_scalar("meta", "n", cfg.n as f64)?;
    c.insert_scalar("meta", "k", cfg.k as f64)?;
    c.insert_scalar("meta", "time_dim", cfg.time_dim as f64)?;
    c.insert_scalar("meta", "class_dim", cfg.class_dim as f64)?;
    c.insert_scalar("meta", "label_dropout", cfg.label_dropout)?;
    c.insert_scalar("meta", "coupling", coupling.code())?;
    let widths = Tensor::new(vec![cfg.hidden.len()], cfg.hidden.iter().map(|&w| w as f64).collect())
        .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
    c.insert("meta", "widths", widths)?;
    if let Some(sd) = sd {
        let pot = Tensor::new(vec![sd.potentials().len()], sd.potentials().to_vec())
            .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
        c.insert("sd_potentials", "g", pot)?;
        c.insert("sd_potentials", "support", sd.support().x.clone())?;
        let labels = sd
            .support()
            .c
            .iter()
            .map(|l| match l {
                Label::Class(i) => *i as f64,
                Label::Null => -1.0,
            })
            .collect();
        let labels = Tensor::new(vec![sd.support().len()], labels).map_err(|e| CheckpointError::Invalid(e.to_string()))?;
        c.insert("sd_potentials", "labels", labels)?;
    }
    put_params(&mut c, net.params())?;
    Ok(c)
}

pub fn student_from_checkpoint(c: &Checkpoint, path: &Path) -> Result<StudentModel> {
    expect_kind(c, KIND_STUDENT, path)?;
    let e = ck(path);
    let widths = c.require("meta", "widths").map_err(&e)?;
    if widths.numel() > MAX_DEPTH {
        return Err(invalid(path, "too many hidden layers"));
    }
    let hidden = widths
        .data()
        .iter()
        .map(|&w| {
            if w >= 1.0 && w.fract() == 0.0 && w <= MAX_WIDTH as f64 {
                Ok(w as usize)
            } else {
                Err(invalid(path, format!("bad hidden width {w}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = StudentConfig {
        n: c.count("meta", "n", MAX_DIM).map_err(&e)?,
        k: c.count("meta", "k", MAX_CLASSES).map_err(&e)?,
        hidden,
        time_dim: c.count("meta", "time_dim", MAX_WIDTH).map_err(&e)?,
        class_dim: c.count("meta", "class_dim", MAX_WIDTH).map_err(&e)?,
        label_dropout: c.scalar("meta", "label_dropout").map_err(&e)?,
    };
    let coupling = CouplingName::from_code(c.count("meta", "coupling", 3).map_err(&e)?).expect("code ≤ 3");
    let net = VelocityNet::from_parts(cfg, take_params(c)).map_err(|err| invalid(path, err.to_string()))?;
    Ok(StudentModel { net, coupling })
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Checkpoint::decode(&bytes).map_err(ck(path))
}

pub fn write_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, c.encode()).map_err(|e| CliError::io(path, e))
}

pub fn load_teacher(path: &Path) -> Result<FlowTeacher> {
    teacher_from_checkpoint(&read_checkpoint(path)?, path)
}

pub fn load_student(path: &Path) -> Result<StudentModel> {
    student_from_checkpoint(&read_checkpoint(path)?, path)
}
