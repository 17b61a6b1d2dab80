//! Versioned binary checkpoints.
//!
//! Layout:
//!
//! ```text
//! NFMLAB-CKPT v1
//! tensor <section> <name> <shape> <offset>     one line per tensor
//! payload <bytes>
//! <payload: little-endian f64 arrays><CRC-32 of payload, 4 bytes LE>
//! ```
//!
//! `<shape>` is `-` for a rank-0 tensor or extents joined by `x`. Offsets
//! are byte positions into the payload; tensors are stored back to back in
//! manifest order.

use std::fmt;

use nfmlab_core::numerics::Tensor;

pub const MAGIC: &str = "NFMLAB-CKPT v1";
/// Upper bounds that keep decoding of hostile input cheap.
pub const MAX_TENSORS: usize = 4096;
pub const MAX_PAYLOAD: usize = 1 << 31;
const MAX_RANK: usize = 8;
const MAX_NAME: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    BadHeader,
    Manifest { line: usize, message: String },
    Truncated,
    TrailingBytes,
    Crc { stored: u32, computed: u32 },
    BadTensor { name: String, message: String },
    Missing { section: String, name: String },
    Invalid(String),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::BadHeader => write!(f, "not a checkpoint (expected header {MAGIC:?})"),
            CheckpointError::Manifest { line, message } => write!(f, "manifest line {line}: {message}"),
            CheckpointError::Truncated => f.write_str("checkpoint is truncated"),
            CheckpointError::TrailingBytes => f.write_str("unexpected bytes after checksum"),
            CheckpointError::Crc { stored, computed } => {
                write!(f, "checksum mismatch (stored {stored:08x}, computed {computed:08x})")
            }
            CheckpointError::BadTensor { name, message } => write!(f, "tensor {name}: {message}"),
            CheckpointError::Missing { section, name } => write!(f, "missing tensor {section}/{name}"),
            CheckpointError::Invalid(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CheckpointError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub section: String,
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered collection of named tensors grouped in sections.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    entries: Vec<Entry>,
}

fn valid_ident(s: &str) -> bool {
    !s.is_empty() && s.len() <= MAX_NAME && s.bytes().all(|b| b.is_ascii_graphic())
}

fn shape_text(shape: &[usize]) -> String {
    if shape.is_empty() {
        "-".into()
    } else {
        shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
    }
}

fn parse_shape(s: &str) -> Option<Vec<usize>> {
    if s == "-" {
        return Some(Vec::new());
    }
    let dims: Vec<usize> = s.split('x').map(|d| d.parse().ok()).collect::<Option<_>>()?;
    (dims.len() <= MAX_RANK && dims.iter().all(|&d| d > 0)).then_some(dims)
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Adds or replaces `section/name`. Identifiers must be non-empty printable ASCII.
    pub fn insert(&mut self, section: &str, name: &str, tensor: Tensor) -> Result<(), CheckpointError> {
        if !valid_ident(section) || !valid_ident(name) {
            return Err(CheckpointError::Invalid(format!("bad tensor identifier {section:?}/{name:?}")));
        }
        match self.entries.iter_mut().find(|e| e.section == section && e.name == name) {
            Some(e) => e.tensor = tensor,
            None => self.entries.push(Entry {
                section: section.into(),
                name: name.into(),
                tensor,
            }),
        }
        Ok(())
    }

    pub fn insert_scalar(&mut self, section: &str, name: &str, v: f64) -> Result<(), CheckpointError> {
        let t = Tensor::new(vec![1], vec![v]).map_err(|e| CheckpointError::BadTensor {
            name: name.into(),
            message: e.to_string(),
        })?;
        self.insert(section, name, t)
    }

    pub fn get(&self, section: &str, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|e| e.section == section && e.name == name)
            .map(|e| &e.tensor)
    }

    pub fn require(&self, section: &str, name: &str) -> Result<&Tensor, CheckpointError> {
        self.get(section, name).ok_or_else(|| CheckpointError::Missing {
            section: section.into(),
            name: name.into(),
        })
    }

    pub fn scalar(&self, section: &str, name: &str) -> Result<f64, CheckpointError> {
        let t = self.require(section, name)?;
        if t.numel() != 1 {
            return Err(CheckpointError::BadTensor {
                name: name.into(),
                message: format!("expected one value, got shape {:?}", t.shape()),
            });
        }
        Ok(t.data()[0])
    }

    /// Scalar that must be a nonnegative integer no larger than `max`.
    pub fn count(&self, section: &str, name: &str, max: usize) -> Result<usize, CheckpointError> {
        let v = self.scalar(section, name)?;
        if v < 0.0 || v.fract() != 0.0 || v > max as f64 {
            return Err(CheckpointError::BadTensor {
                name: name.into(),
                message: format!("expected an integer in 0..={max}, got {v}"),
            });
        }
        Ok(v as usize)
    }

    pub fn section(&self, section: &str) -> impl Iterator<Item = &Entry> {
        let s = section.to_string();
        self.entries.iter().filter(move |e| e.section == s)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut head = format!("{MAGIC}\n");
        let mut payload = Vec::new();
        for e in &self.entries {
            head.push_str(&format!(
                "tensor {} {} {} {}\n",
                e.section,
                e.name,
                shape_text(e.tensor.shape()),
                payload.len()
            ));
            for v in e.tensor.data() {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        head.push_str(&format!("payload {}\n", payload.len()));
        let crc = crc32fast::hash(&payload);
        let mut out = head.into_bytes();
        out.extend_from_slice(&payload);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut pos = 0usize;
        let next_line = |pos: &mut usize| -> Result<&str, CheckpointError> {
            let rest = &bytes[*pos..];
            let end = rest.iter().take(1024).position(|&b| b == b'\n').ok_or(CheckpointError::Truncated)?;
            let line = std::str::from_utf8(&rest[..end]).map_err(|_| CheckpointError::BadHeader)?;
            *pos += end + 1;
            Ok(line)
        };
        if next_line(&mut pos).map_err(|_| CheckpointError::BadHeader)? != MAGIC {
            return Err(CheckpointError::BadHeader);
        }
        struct Pending {
            section: String,
            name: String,
            shape: Vec<usize>,
            offset: usize,
            len: usize,
        }
        let mut pending: Vec<Pending> = Vec::new();
        let mut line_no = 1usize;
        let payload_len = loop {
            line_no += 1;
            let line = next_line(&mut pos).map_err(|e| match e {
                CheckpointError::BadHeader => CheckpointError::Manifest {
                    line: line_no,
                    message: "not UTF-8".into(),
                },
                e => e,
            })?;
            let bad = |message: &str| CheckpointError::Manifest {
                line: line_no,
                message: message.into(),
            };
            let fields: Vec<&str> = line.split(' ').collect();
            match fields.as_slice() {
                ["payload", n] => break n.parse::<usize>().map_err(|_| bad("bad payload length"))?,
                ["tensor", section, name, shape, offset] => {
                    if pending.len() >= MAX_TENSORS {
                        return Err(bad("too many tensors"));
                    }
                    if !valid_ident(section) || !valid_ident(name) {
                        return Err(bad("bad identifier"));
                    }
                    if pending.iter().any(|p| p.section == *section && p.name == *name) {
                        return Err(bad("duplicate tensor"));
                    }
                    let shape = parse_shape(shape).ok_or_else(|| bad("bad shape"))?;
                    let offset: usize = offset.parse().map_err(|_| bad("bad offset"))?;
                    let numel = shape
                        .iter()
                        .try_fold(1usize, |a, &d| a.checked_mul(d))
                        .filter(|&n| n <= MAX_PAYLOAD / 8)
                        .ok_or_else(|| bad("tensor too large"))?;
                    let expected = pending.last().map_or(0, |p| p.offset + p.len);
                    if offset != expected {
                        return Err(bad("offsets must be ascending and contiguous"));
                    }
                    let len = numel * 8;
                    if offset + len > MAX_PAYLOAD {
                        return Err(bad("payload too large"));
                    }
                    pending.push(Pending {
                        section: section.to_string(),
                        name: name.to_string(),
                        shape,
                        offset,
                        len,
                    });
                }
                _ => return Err(bad("expected `tensor` or `payload` line")),
            }
        };
        let expected = pending.last().map_or(0, |p| p.offset + p.len);
        if payload_len != expected {
            return Err(CheckpointError::Manifest {
                line: line_no,
                message: format!("payload length {payload_len} disagrees with manifest ({expected})"),
            });
        }
        let rest = &bytes[pos..];
        if rest.len() < payload_len + 4 {
            return Err(CheckpointError::Truncated);
        }
        if rest.len() > payload_len + 4 {
            return Err(CheckpointError::TrailingBytes);
        }
        let payload = &rest[..payload_len];
        let stored = u32::from_le_bytes(rest[payload_len..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(CheckpointError::Crc { stored, computed });
        }
        let mut entries = Vec::with_capacity(pending.len());
        for p in pending {
            let data = payload[p.offset..p.offset + p.len]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let tensor = Tensor::new(p.shape, data).map_err(|e| CheckpointError::BadTensor {
                name: format!("{}/{}", p.section, p.name),
                message: e.to_string(),
            })?;
            entries.push(Entry {
                section: p.section,
                name: p.name,
                tensor,
            });
        }
        Ok(Checkpoint { entries })
    }
}
