//! Checksummed little-endian container formats for snapshots, bases and weights.
//!
//! Every file is `magic | version:u16 | reserved:u16 | header_len:u64 | header | payload
//! | block digests | sha256`. The body (everything before the digests) is hashed in
//! [`BLOCK`]-byte blocks so that corruption can be located; the final SHA-256 covers
//! all preceding bytes. Files are written to a temporary sibling and renamed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::neural::{Architecture, LayerKind, LayerSpec, NetworkParams, SubnetId, Activation};
use crate::psd::{SnapshotMeta, SnapshotSet, SymplecticBasis};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"VPSN";
pub const BASIS_MAGIC: [u8; 4] = *b"PSDB";
pub const WEIGHTS_MAGIC: [u8; 4] = *b"AEHN";
pub const FORMAT_VERSION: u16 = 1;
/// Bytes per checksummed block.
pub const BLOCK: usize = 1 << 16;
const DIGEST_PREFIX: usize = 8;

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let d: [u8; 32] = Sha256::digest(bytes).into();
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 of a file's contents.
pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Pretty JSON written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// `<path>.json`, the sidecar of a binary artifact.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Default)]
struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.buf.reserve(8 * v.len());
        for x in v {
            self.f64(*x);
        }
    }
    fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Corrupt { path: self.path.into(), message: format!("unexpected end of data at offset {}", self.pos) });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| self.corrupt(format!("size {v} out of range")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.corrupt("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.usize()?;
        self.take(n)
    }
    fn corrupt(&self, message: String) -> Error {
        Error::Corrupt { path: self.path.into(), message }
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.corrupt(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn block_digests(body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len().div_ceil(BLOCK) * DIGEST_PREFIX);
    for chunk in body.chunks(BLOCK) {
        out.extend_from_slice(&Sha256::digest(chunk)[..DIGEST_PREFIX]);
    }
    out
}

fn seal(magic: [u8; 4], header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut body = Vec::with_capacity(16 + header.len() + payload.len());
    body.extend_from_slice(&magic);
    body.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    body.extend_from_slice(&0u16.to_le_bytes());
    body.extend_from_slice(&(header.len() as u64).to_le_bytes());
    body.extend_from_slice(header);
    body.extend_from_slice(payload);
    let digests = block_digests(&body);
    let mut out = body;
    out.extend_from_slice(&(digests.len() as u64 / DIGEST_PREFIX as u64).to_le_bytes());
    out.extend_from_slice(&digests);
    let total: [u8; 32] = Sha256::digest(&out).into();
    out.extend_from_slice(&total);
    out
}

/// Verifies a sealed file and returns `(header, payload)`.
fn open<'a>(path: &Path, magic: [u8; 4], bytes: &'a [u8]) -> Result<(&'a [u8], &'a [u8])> {
    let len = bytes.len();
    if len >= 4 && bytes[..4] != magic {
        return Err(Error::BadMagic { path: path.into(), expected: magic, found: bytes[..4].try_into().unwrap() });
    }
    if len >= 6 {
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version > FORMAT_VERSION {
            return Err(Error::IncompatibleVersion { path: path.into(), found: version, supported: FORMAT_VERSION });
        }
    }
    if len < 16 + 8 + 32 {
        return Err(Error::Checksum { path: path.into(), offset: len as u64 });
    }
    let (sealed, total) = bytes.split_at(len - 32);
    let actual: [u8; 32] = Sha256::digest(sealed).into();
    if actual[..] != total[..] {
        return Err(Error::Checksum { path: path.into(), offset: locate_corruption(sealed) });
    }
    let body_len = body_length(sealed).ok_or(Error::Checksum { path: path.into(), offset: len as u64 })?;
    let body = &sealed[..body_len];
    let header_len = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
    if 16 + header_len > body.len() {
        return Err(Error::Corrupt { path: path.into(), message: "header length exceeds file".into() });
    }
    Ok((&body[16..16 + header_len], &body[16 + header_len..]))
}

/// Length of the body given `body | count | digests`, if consistent.
fn body_length(sealed: &[u8]) -> Option<usize> {
    // The body length L satisfies L + 8 + 8·ceil(L/BLOCK) = sealed.len().
    let total = sealed.len();
    let mut lo = 0usize;
    let mut hi = total;
    while lo < hi {
        let mid = (lo + hi) / 2;
        let size = mid + 8 + DIGEST_PREFIX * mid.div_ceil(BLOCK);
        if size < total {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let l = lo;
    let count = u64::from_le_bytes(sealed.get(l..l + 8)?.try_into().ok()?) as usize;
    (l + 8 + DIGEST_PREFIX * l.div_ceil(BLOCK) == total && count == l.div_ceil(BLOCK)).then_some(l)
}

/// Offset of the first block whose digest disagrees, or the file end when the
/// layout itself is inconsistent (for example after truncation).
fn locate_corruption(sealed: &[u8]) -> u64 {
    let Some(l) = body_length(sealed) else { return sealed.len() as u64 + 32 };
    let body = &sealed[..l];
    let stored = &sealed[l + 8..];
    for (i, chunk) in body.chunks(BLOCK).enumerate() {
        if Sha256::digest(chunk)[..DIGEST_PREFIX] != stored[i * DIGEST_PREFIX..(i + 1) * DIGEST_PREFIX] {
            return (i * BLOCK) as u64;
        }
    }
    l as u64
}

/// Header fields of a snapshot file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SnapshotHeader {
    /// Half the row count (particles for full states, modes for reduced states).
    pub n: usize,
    pub columns: usize,
    pub stride: usize,
    pub scenario_hash: [u8; 32],
}

/// SHA-256 of a serializable scenario description.
pub fn scenario_hash<T: Serialize>(scenario: &T) -> Result<[u8; 32]> {
    Ok(Sha256::digest(serde_json::to_vec(scenario)?).into())
}

pub fn encode_snapshots(set: &SnapshotSet, scenario_hash: [u8; 32]) -> Vec<u8> {
    let mut h = Encoder::default();
    h.u64(2 * set.n() as u64);
    h.u64(set.len() as u64);
    h.u64(set.stride() as u64);
    h.buf.extend_from_slice(&scenario_hash);
    for m in set.meta() {
        h.u64(m.trajectory as u64);
        h.f64(m.alpha);
        h.f64(m.sigma);
        h.u64(m.step as u64);
    }
    let mut p = Encoder::default();
    p.f64s(set.data());
    seal(SNAPSHOT_MAGIC, &h.buf, &p.buf)
}

pub fn decode_snapshots(path: &Path, bytes: &[u8]) -> Result<(SnapshotSet, SnapshotHeader)> {
    let (header, payload) = open(path, SNAPSHOT_MAGIC, bytes)?;
    let mut d = Decoder { buf: header, pos: 0, path };
    let rows = d.usize()?;
    let cols = d.usize()?;
    let stride = d.usize()?;
    let hash: [u8; 32] = d.take(32)?.try_into().unwrap();
    if rows % 2 != 0 {
        return Err(d.corrupt(format!("odd row count {rows}")));
    }
    let mut meta = Vec::with_capacity(cols);
    for _ in 0..cols {
        meta.push(SnapshotMeta { trajectory: d.usize()?, alpha: d.f64()?, sigma: d.f64()?, step: d.usize()? });
    }
    d.finish()?;
    let mut p = Decoder { buf: payload, pos: 0, path };
    let data = p.f64s(rows.checked_mul(cols).ok_or_else(|| p.corrupt("size overflow".into()))?)?;
    p.finish()?;
    let set = SnapshotSet::from_columns(rows / 2, stride, data, meta)?;
    Ok((set, SnapshotHeader { n: rows / 2, columns: cols, stride, scenario_hash: hash }))
}

pub fn write_snapshots(path: &Path, set: &SnapshotSet, scenario_hash: [u8; 32]) -> Result<()> {
    write_atomic(path, &encode_snapshots(set, scenario_hash))
}

pub fn read_snapshots(path: &Path) -> Result<(SnapshotSet, SnapshotHeader)> {
    decode_snapshots(path, &fs::read(path)?)
}

pub fn encode_basis(basis: &SymplecticBasis) -> Vec<u8> {
    let mut h = Encoder::default();
    h.u64(basis.n() as u64);
    h.u64(basis.m() as u64);
    let mut p = Encoder::default();
    p.f64s(basis.phi().as_slice());
    p.f64s(basis.psi().as_slice());
    p.f64s(basis.singular_values());
    seal(BASIS_MAGIC, &h.buf, &p.buf)
}

pub fn decode_basis(path: &Path, bytes: &[u8]) -> Result<SymplecticBasis> {
    let (header, payload) = open(path, BASIS_MAGIC, bytes)?;
    let mut d = Decoder { buf: header, pos: 0, path };
    let (n, m) = (d.usize()?, d.usize()?);
    d.finish()?;
    let mut p = Decoder { buf: payload, pos: 0, path };
    let nm = n.checked_mul(m).ok_or_else(|| p.corrupt("size overflow".into()))?;
    let phi = DMatrix::from_vec(n, m, p.f64s(nm)?);
    let psi = DMatrix::from_vec(n, m, p.f64s(nm)?);
    let sigma = p.f64s(m)?;
    p.finish()?;
    SymplecticBasis::new(phi, psi, sigma)
}

pub fn write_basis(path: &Path, basis: &SymplecticBasis) -> Result<()> {
    write_atomic(path, &encode_basis(basis))
}

pub fn read_basis(path: &Path) -> Result<SymplecticBasis> {
    decode_basis(path, &fs::read(path)?)
}

/// Weight file header: the architecture as JSON followed by the layer table
/// `(kind, activation, in_channels, in_len, out_channels, out_len)` of every subnet.
/// Tensors follow in subnet, layer, weights-then-bias order; convolution kernels are
/// `[out][in][tap]`, transposed kernels `[in][out][tap]`, dense matrices `[out][in]`,
/// and multi-channel signals are flattened channel-major.
pub fn encode_weights(params: &NetworkParams) -> Result<Vec<u8>> {
    let mut h = Encoder::default();
    h.bytes(&serde_json::to_vec(params.arch())?);
    h.u32(SubnetId::ALL.len() as u32);
    for id in SubnetId::ALL {
        let layers = params.subnet(id).layers();
        h.u32(layers.len() as u32);
        for l in layers {
            h.u8(l.kind.code());
            h.u8(l.activation.code());
            for v in [l.in_channels, l.in_len, l.out_channels, l.out_len] {
                h.u32(v as u32);
            }
        }
    }
    let mut p = Encoder::default();
    p.f64s(&params.values);
    Ok(seal(WEIGHTS_MAGIC, &h.buf, &p.buf))
}

pub fn decode_weights(path: &Path, bytes: &[u8]) -> Result<NetworkParams> {
    let (header, payload) = open(path, WEIGHTS_MAGIC, bytes)?;
    let mut d = Decoder { buf: header, pos: 0, path };
    let arch: Architecture = serde_json::from_slice(d.bytes()?)?;
    let zeros = NetworkParams::zeros(arch.clone())?;
    let n_sub = d.u32()? as usize;
    if n_sub != SubnetId::ALL.len() {
        return Err(d.corrupt(format!("expected {} subnets, found {n_sub}", SubnetId::ALL.len())));
    }
    for id in SubnetId::ALL {
        let n_layers = d.u32()? as usize;
        let mut table = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let kind = LayerKind::from_code(d.u8()?).ok_or_else(|| d.corrupt("unknown layer kind".into()))?;
            let activation = Activation::from_code(d.u8()?).ok_or_else(|| d.corrupt("unknown activation".into()))?;
            let [ic, il, oc, ol] = [d.u32()?, d.u32()?, d.u32()?, d.u32()?].map(|v| v as usize);
            table.push(LayerSpec { kind, in_channels: ic, in_len: il, out_channels: oc, out_len: ol, activation });
        }
        if table != zeros.subnet(id).layers() {
            return Err(d.corrupt(format!("layer table of {} disagrees with the architecture", id.name())));
        }
    }
    d.finish()?;
    let mut p = Decoder { buf: payload, pos: 0, path };
    let values = p.f64s(zeros.len())?;
    p.finish()?;
    NetworkParams::from_values(arch, values)
}

pub fn write_weights(path: &Path, params: &NetworkParams) -> Result<()> {
    write_atomic(path, &encode_weights(params)?)
}

pub fn read_weights(path: &Path) -> Result<NetworkParams> {
    decode_weights(path, &fs::read(path)?)
}
