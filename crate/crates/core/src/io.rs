//! On-disk formats: binary checkpoints for link fields, paths and curvature
//! tables, CSV flow traces, and JSON reports.
//!
//! All binary formats are little-endian. Each starts with a four-byte magic
//! and a `u32` version, followed by a structural header and a payload of
//! `f64` values, and ends with a CRC32 of the payload bytes.
//!
//! | format | magic | header after version |
//! |---|---|---|
//! | link field | `YMLF` | group, dim, extents (dim x u32), spacing f64 |
//! | path | `YMLP` | as `YMLF`, then frames u32, has_beta u32, times (frames x f64) |
//! | curvature table | `YMFT` | n, algebra dim, radii count, polar count, azimuth count, radii, polar nodes |
//!
//! Link payloads list each link's group components (2 for U(1), 4 for SU(2))
//! in site-major, direction-minor order. Path payloads hold every frame in
//! turn and then, when `has_beta` is 1, the `beta` 0-forms frame by frame.
//!
//! Group codes are 0 for U(1) and 1 for SU(2).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::algebra::{GroupElement, GroupId};
use crate::cone::FieldTable;
use crate::flow::{FlowSample, FlowTrace};
use crate::lattice::{Lattice, LinkField, PathConnection, ZeroForm};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"YMLF";
pub const PATH_MAGIC: &[u8; 4] = b"YMLP";
pub const TABLE_MAGIC: &[u8; 4] = b"YMFT";
pub const FORMAT_VERSION: u32 = 1;
pub const TRACE_HEADER: [&str; 5] = ["t", "energy", "grad_norm", "dist_ref", "dt"];

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("CRC mismatch on payload: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("truncated file while reading {field}: need {needed} bytes, {available} left")]
    TruncatedFile { field: &'static str, needed: usize, available: usize },
    #[error("invalid header field {field}: {reason}")]
    InvalidHeader { field: &'static str, reason: String },
    #[error("{0} trailing bytes after the CRC")]
    TrailingBytes(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("trace header must be {expected:?}, found {found:?}")]
    TraceHeader { expected: String, found: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| IoError::Io(e.error))?;
    Ok(())
}

struct Encoder {
    header: Vec<u8>,
    payload: Vec<u8>,
}

impl Encoder {
    fn new(magic: &[u8; 4]) -> Self {
        let mut header = magic.to_vec();
        header.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Self { header, payload: Vec::new() }
    }

    fn u32(&mut self, v: u32) {
        self.header.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.header.extend_from_slice(&v.to_le_bytes());
    }

    fn payload(&mut self, values: &[f64]) {
        for v in values {
            self.payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.payload);
        self.header.append(&mut self.payload);
        self.header.extend_from_slice(&crc.to_le_bytes());
        self.header
    }
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self, IoError> {
        let mut d = Self { bytes, pos: 0 };
        let found = d.take("magic", 4)?;
        if found != magic {
            return Err(IoError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let version = d.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(IoError::VersionMismatch { expected: FORMAT_VERSION, found: version });
        }
        Ok(d)
    }

    fn take(&mut self, field: &'static str, n: usize) -> Result<&'a [u8], IoError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(IoError::TruncatedFile { field, needed: n, available });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(field, 4)?.try_into().unwrap()))
    }

    fn f64(&mut self, field: &'static str) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(field, 8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, field: &'static str, count: usize) -> Result<Vec<f64>, IoError> {
        let bytes = self.take(field, count.checked_mul(8).ok_or_else(|| invalid(field, "length overflow"))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    /// Reads `count` payload values, then checks the CRC and end of file.
    fn payload(mut self, count: usize) -> Result<Vec<f64>, IoError> {
        let start = self.pos;
        let values = self.f64s("payload", count)?;
        let computed = crc32fast::hash(&self.bytes[start..self.pos]);
        let stored = self.u32("crc")?;
        if stored != computed {
            return Err(IoError::CrcMismatch { stored, computed });
        }
        let rest = self.bytes.len() - self.pos;
        if rest != 0 {
            return Err(IoError::TrailingBytes(rest));
        }
        Ok(values)
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> IoError {
    IoError::InvalidHeader { field, reason: reason.into() }
}

fn count_u32(field: &'static str, v: usize) -> Result<u32, IoError> {
    u32::try_from(v).map_err(|_| invalid(field, format!("{v} does not fit in u32")))
}

fn encode_lattice(enc: &mut Encoder, lattice: &Lattice, group: GroupId) -> Result<(), IoError> {
    enc.u32(group.code());
    enc.u32(count_u32("dim", lattice.dim())?);
    for &e in lattice.extents() {
        enc.u32(count_u32("extents", e)?);
    }
    enc.f64(lattice.spacing());
    Ok(())
}

fn decode_lattice(d: &mut Decoder<'_>) -> Result<(Lattice, GroupId), IoError> {
    let code = d.u32("group_id")?;
    let group = GroupId::from_code(code).ok_or_else(|| invalid("group_id", format!("unknown code {code}")))?;
    let dim = d.u32("dim")? as usize;
    if !(2..=4).contains(&dim) {
        return Err(invalid("dim", format!("{dim} is not 2, 3 or 4")));
    }
    let mut extents = Vec::with_capacity(dim);
    for _ in 0..dim {
        extents.push(d.u32("extents")? as usize);
    }
    let spacing = d.f64("spacing")?;
    let lattice = Lattice::new(&extents, spacing).map_err(|e| invalid("extents/spacing", e.to_string()))?;
    Ok((lattice, group))
}

fn link_values(u: &LinkField) -> Vec<f64> {
    u.links().iter().flat_map(|g| g.components().to_vec()).collect()
}

fn links_from(lattice: &Lattice, group: GroupId, values: &[f64]) -> Result<LinkField, IoError> {
    let k = group.element_dim();
    let links = values
        .chunks_exact(k)
        .map(|c| GroupElement::from_components_exact(group, c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| invalid("payload", e.to_string()))?;
    LinkField::from_links(lattice, group, links).map_err(|e| invalid("payload", e.to_string()))
}

pub fn encode_checkpoint(u: &LinkField) -> Result<Vec<u8>, IoError> {
    let mut enc = Encoder::new(CHECKPOINT_MAGIC);
    encode_lattice(&mut enc, u.lattice(), u.group())?;
    enc.payload(&link_values(u));
    Ok(enc.finish())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<LinkField, IoError> {
    let mut d = Decoder::open(bytes, CHECKPOINT_MAGIC)?;
    let (lattice, group) = decode_lattice(&mut d)?;
    let values = d.payload(lattice.n_links() * group.element_dim())?;
    links_from(&lattice, group, &values)
}

pub fn write_checkpoint(u: &LinkField, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &encode_checkpoint(u)?)
}

pub fn read_checkpoint(path: &Path) -> Result<LinkField, IoError> {
    decode_checkpoint(&fs::read(path)?)
}

pub fn encode_path(p: &PathConnection) -> Result<Vec<u8>, IoError> {
    let mut enc = Encoder::new(PATH_MAGIC);
    encode_lattice(&mut enc, p.lattice(), p.group())?;
    enc.u32(count_u32("frames", p.len())?);
    let has_beta = p.beta.iter().any(|b| b.data().iter().any(|v| *v != 0.0));
    enc.u32(has_beta as u32);
    for &t in &p.times {
        enc.f64(t);
    }
    for c in &p.connections {
        enc.payload(&link_values(c));
    }
    if has_beta {
        for b in &p.beta {
            enc.payload(b.data());
        }
    }
    Ok(enc.finish())
}

pub fn decode_path(bytes: &[u8]) -> Result<PathConnection, IoError> {
    let mut d = Decoder::open(bytes, PATH_MAGIC)?;
    let (lattice, group) = decode_lattice(&mut d)?;
    let frames = d.u32("frames")? as usize;
    let has_beta = match d.u32("has_beta")? {
        0 => false,
        1 => true,
        v => return Err(invalid("has_beta", format!("{v} is not 0 or 1"))),
    };
    let times = d.f64s("times", frames)?;
    let per_frame = lattice.n_links() * group.element_dim();
    let per_beta = lattice.n_sites() * group.algebra_dim();
    let total = frames * per_frame + if has_beta { frames * per_beta } else { 0 };
    let values = d.payload(total)?;
    let connections = values[..frames * per_frame]
        .chunks_exact(per_frame.max(1))
        .map(|c| links_from(&lattice, group, c))
        .collect::<Result<Vec<_>, _>>()?;
    let beta = if has_beta {
        values[frames * per_frame..]
            .chunks_exact(per_beta.max(1))
            .map(|c| ZeroForm::from_data(&lattice, group, c.to_vec()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid("payload", e.to_string()))?
    } else {
        vec![ZeroForm::zeros(&lattice, group); frames]
    };
    PathConnection::new(times, connections, beta).map_err(|e| invalid("times", e.to_string()))
}

pub fn write_path(p: &PathConnection, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &encode_path(p)?)
}

pub fn read_path(path: &Path) -> Result<PathConnection, IoError> {
    decode_path(&fs::read(path)?)
}

pub fn encode_table(t: &FieldTable) -> Result<Vec<u8>, IoError> {
    t.validate().map_err(|e| invalid("table", e.to_string()))?;
    let mut enc = Encoder::new(TABLE_MAGIC);
    enc.u32(count_u32("dimension", t.dimension)?);
    enc.u32(count_u32("algebra_dim", t.algebra_dim)?);
    enc.u32(count_u32("radii", t.radii.len())?);
    enc.u32(count_u32("polar", t.polar.len())?);
    enc.u32(count_u32("azimuth", t.azimuth)?);
    t.radii.iter().for_each(|&r| enc.f64(r));
    t.polar.iter().for_each(|&p| enc.f64(p));
    enc.payload(&t.values);
    Ok(enc.finish())
}

pub fn decode_table(bytes: &[u8]) -> Result<FieldTable, IoError> {
    let mut d = Decoder::open(bytes, TABLE_MAGIC)?;
    let dimension = d.u32("dimension")? as usize;
    let algebra_dim = d.u32("algebra_dim")? as usize;
    let nr = d.u32("radii")? as usize;
    let np = d.u32("polar")? as usize;
    let azimuth = d.u32("azimuth")? as usize;
    if !(3..=16).contains(&dimension) {
        return Err(invalid("dimension", format!("{dimension} is outside 3..=16")));
    }
    let radii = d.f64s("radii", nr)?;
    let polar = d.f64s("polar", np)?;
    let mut table = FieldTable { dimension, algebra_dim, radii, polar, azimuth, values: Vec::new() };
    let count = table
        .node_count()
        .checked_mul(table.pair_count())
        .ok_or_else(|| invalid("table", "size overflow"))?;
    table.values = d.payload(count)?;
    table.validate().map_err(|e| invalid("table", e.to_string()))?;
    Ok(table)
}

pub fn write_table(t: &FieldTable, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &encode_table(t)?)
}

pub fn read_table(path: &Path) -> Result<FieldTable, IoError> {
    decode_table(&fs::read(path)?)
}

/// Decimal with 17 significant digits; round-trips every finite `f64`.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// CSV text of a flow trace: the header and one row per accepted step.
pub fn trace_csv(trace: &FlowTrace) -> Result<Vec<u8>, IoError> {
    samples_csv(&trace.samples)
}

pub fn samples_csv(samples: &[FlowSample]) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for s in samples {
        w.write_record([s.t, s.energy, s.grad_norm, s.dist_ref, s.dt].map(format_f64))?;
    }
    w.into_inner().map_err(|e| IoError::Io(e.into_error()))
}

pub fn emit_trace_csv(trace: &FlowTrace, path: &Path) -> Result<(), IoError> {
    write_atomic(path, &trace_csv(trace)?)
}

pub fn parse_trace_csv(text: &[u8]) -> Result<Vec<FlowSample>, IoError> {
    let mut r = csv::Reader::from_reader(text);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != TRACE_HEADER {
        return Err(IoError::TraceHeader { expected: TRACE_HEADER.join(","), found: header.join(",") });
    }
    Ok(r.deserialize().collect::<Result<Vec<FlowSample>, _>>()?)
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<FlowSample>, IoError> {
    parse_trace_csv(&fs::read(path)?)
}

/// Pretty JSON of a report. Keys follow the declaration order of the type and
/// enums are snake_case strings.
pub fn emit_report_json<T: Serialize + ?Sized>(report: &T) -> Result<String, IoError> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn parse_report_json<T: DeserializeOwned>(text: &str) -> Result<T, IoError> {
    Ok(serde_json::from_str(text)?)
}

pub fn write_json(value: &impl Serialize, path: &Path) -> Result<(), IoError> {
    let mut text = emit_report_json(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::{RateFit, RateModel, RegimeIndex, RegimeReport};
    use crate::flow::{run_flow, FlowConfig, FlowOutcome};
    use crate::rng::LabRng;

    fn su2_field(seed: u64) -> LinkField {
        let lattice = Lattice::cubic(4, 4, 1.0).unwrap();
        let mut rng = LabRng::new(seed);
        LinkField::random_near_identity(&lattice, GroupId::Su2, 0.4, &mut rng)
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let u = su2_field(11);
        let bytes = encode_checkpoint(&u).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 4 + 4 + 16 + 8 + u.lattice().n_links() * 32 + 4);
        let v = decode_checkpoint(&bytes).unwrap();
        for (a, b) in u.links().iter().zip(v.links()) {
            for (x, y) in a.components().iter().zip(b.components()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(u.lattice(), v.lattice());

        let lattice = Lattice::new(&[3, 5], 0.5).unwrap();
        let mut rng = LabRng::new(3);
        let w = LinkField::random_near_identity(&lattice, GroupId::U1, 0.3, &mut rng);
        let back = decode_checkpoint(&encode_checkpoint(&w).unwrap()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn checkpoint_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.ymlf");
        let u = su2_field(5);
        write_checkpoint(&u, &path).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap(), u);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn corrupted_checkpoints_are_rejected() {
        let bytes = encode_checkpoint(&su2_field(2)).unwrap();
        let mut flipped = bytes.clone();
        flipped[60] ^= 0x01;
        assert!(matches!(decode_checkpoint(&flipped), Err(IoError::CrcMismatch { .. })));

        let mut magic = bytes.clone();
        magic[..4].copy_from_slice(b"XXXX");
        let err = decode_checkpoint(&magic).unwrap_err();
        assert!(matches!(err, IoError::BadMagic { .. }));
        assert!(err.to_string().contains("magic"));

        let mut version = bytes.clone();
        version[4] = 2;
        assert!(matches!(decode_checkpoint(&version), Err(IoError::VersionMismatch { found: 2, .. })));

        let err = decode_checkpoint(&bytes[..bytes.len() - 9]).unwrap_err();
        assert!(matches!(err, IoError::TruncatedFile { field: "payload", .. }), "{err}");
        let err = decode_checkpoint(&bytes[..10]).unwrap_err();
        assert!(matches!(err, IoError::TruncatedFile { field: "group_id", .. }), "{err}");

        let mut group = bytes.clone();
        group[8] = 7;
        assert!(matches!(decode_checkpoint(&group), Err(IoError::InvalidHeader { field: "group_id", .. })));
    }

    #[test]
    fn path_roundtrip_with_and_without_beta() {
        let lattice = Lattice::cubic(3, 3, 1.0).unwrap();
        let mut rng = LabRng::new(9);
        let frames: Vec<LinkField> =
            (0..3).map(|_| LinkField::random_near_identity(&lattice, GroupId::Su2, 0.2, &mut rng)).collect();
        let p = PathConnection::temporal(vec![0.0, 0.5, 1.0], frames.clone()).unwrap();
        assert_eq!(decode_path(&encode_path(&p).unwrap()).unwrap(), p);
        let beta = (0..3).map(|_| ZeroForm::random(&lattice, GroupId::Su2, 0.1, &mut rng)).collect();
        let q = PathConnection::new(vec![0.0, 0.5, 1.0], frames, beta).unwrap();
        let bytes = encode_path(&q).unwrap();
        assert_eq!(decode_path(&bytes).unwrap(), q);
        assert!(matches!(decode_checkpoint(&bytes), Err(IoError::BadMagic { .. })));
    }

    #[test]
    fn table_roundtrip() {
        let cone = crate::cone::AbelianCone { n: 5, c: 1.0 };
        let t = FieldTable::sample(&cone, &[0.1, 0.5, 1.0], 3);
        let bytes = encode_table(&t).unwrap();
        assert_eq!(decode_table(&bytes).unwrap(), t);
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 20] ^= 0xff;
        assert!(matches!(decode_table(&bad), Err(IoError::CrcMismatch { .. })));
    }

    fn sample(t: f64) -> FlowSample {
        FlowSample { t, energy: 1.0 / (3.0 + t), grad_norm: (t + 0.1).sqrt() * 1e-7, dist_ref: std::f64::consts::PI * t, dt: 0.1 }
    }

    #[test]
    fn trace_csv_layout_and_reparse() {
        let empty = samples_csv(&[]).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), "t,energy,grad_norm,dist_ref,dt\n");
        let rows: Vec<FlowSample> = (1..=3).map(|k| sample(0.1 * k as f64)).collect();
        let text = samples_csv(&rows).unwrap();
        assert_eq!(String::from_utf8(text.clone()).unwrap().lines().count(), 4);
        let back = parse_trace_csv(&text).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            for (x, y) in [(a.t, b.t), (a.energy, b.energy), (a.grad_norm, b.grad_norm), (a.dist_ref, b.dist_ref), (a.dt, b.dt)] {
                assert!((x.to_bits() as i64 - y.to_bits() as i64).abs() <= 1);
            }
        }
        let mut nan = rows[0];
        nan.dist_ref = f64::NAN;
        assert!(parse_trace_csv(&samples_csv(&[nan]).unwrap()).unwrap()[0].dist_ref.is_nan());
        assert!(matches!(parse_trace_csv(b"t,energy\n1,2\n"), Err(IoError::TraceHeader { .. })));
    }

    #[test]
    fn flow_trace_rows_match_accepted_steps() {
        let lattice = Lattice::cubic(2, 3, 1.0).unwrap();
        let mut rng = LabRng::new(1);
        let u = LinkField::random_near_identity(&lattice, GroupId::Su2, 0.1, &mut rng);
        let cfg = FlowConfig { t_max: 0.3, dt: 0.1, ..FlowConfig::default() };
        let trace = run_flow(&u, &LinkField::identity(&lattice, GroupId::Su2), &cfg).unwrap();
        assert_eq!(trace.outcome, FlowOutcome::Timeout);
        let text = trace_csv(&trace).unwrap();
        assert_eq!(String::from_utf8(text).unwrap().lines().count(), trace.samples.len() + 1);
    }

    #[test]
    fn report_json_shapes() {
        let fit = RateFit {
            model: RateModel::PowerT,
            alpha: 2.0,
            power_alpha: 2.0,
            exponential_alpha: 0.4,
            power_residual: 1e-3,
            exponential_residual: 0.2,
            samples: 40,
        };
        let text = emit_report_json(&fit).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["model"], "power_t");
        assert_eq!(v["alpha"], 2.0);
        assert!(text.find("\"model\"").unwrap() < text.find("\"alpha\"").unwrap());
        assert_eq!(parse_report_json::<RateFit>(&text).unwrap(), fit);

        let report = RegimeReport {
            window_len: 1.0,
            sup_norms: vec![1.0, 0.5, 0.25],
            k1: RegimeIndex::AllDecay,
            k2: RegimeIndex::None,
            delta: 0.1,
            delta1: 1.0,
            delta2: 0.5,
            eta: 0.1,
            decay_holds: vec![true, true],
            plateau_holds: vec![false, false],
            growth_holds: vec![false, false],
        };
        let text = emit_report_json(&report).unwrap();
        assert!(text.contains("\"k1\": \"all_decay\""));
        assert_eq!(parse_report_json::<RegimeReport>(&text).unwrap(), report);
    }
}
