use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FG2C";
pub const ARRAY_MAGIC: &[u8; 4] = b"F2GB";
pub const FORMAT_VERSION: u32 = 1;

/// Typed payload of one array. `Text` holds UTF-8 bytes as a rank-1 array.
#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
    Text(String),
}

impl ArrayData {
    fn code(&self) -> u32 {
        match self {
            ArrayData::F32(_) => 0,
            ArrayData::F64(_) => 1,
            ArrayData::U32(_) => 2,
            ArrayData::Text(_) => 3,
        }
    }

    fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::U32(v) => v.len(),
            ArrayData::Text(s) => s.len(),
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            ArrayData::F32(_) => "f32",
            ArrayData::F64(_) => "f64",
            ArrayData::U32(_) => "u32",
            ArrayData::Text(_) => "text",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: ArrayData) -> Result<Self> {
        let name = name.into();
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if count != Some(data.len()) {
            return Err(Error::Shape(format!("array {name:?}: dims {dims:?} vs {} values", data.len())));
        }
        Ok(Self { name, dims, data })
    }

    fn expect(&self, kind: &str, rank: usize) -> Result<()> {
        if self.data.type_name() != kind || self.dims.len() != rank {
            return Err(Error::Format(format!(
                "array {:?} is {} of rank {}, expected {kind} of rank {rank}",
                self.name,
                self.data.type_name(),
                self.dims.len()
            )));
        }
        Ok(())
    }

    pub fn to_matrix_f32(&self) -> Result<Array2<f32>> {
        self.expect("f32", 2)?;
        let ArrayData::F32(v) = &self.data else { unreachable!() };
        Ok(Array2::from_shape_vec((self.dims[0], self.dims[1]), v.clone()).expect("checked dims"))
    }

    pub fn to_matrix_f64(&self) -> Result<Array2<f64>> {
        self.expect("f64", 2)?;
        let ArrayData::F64(v) = &self.data else { unreachable!() };
        Ok(Array2::from_shape_vec((self.dims[0], self.dims[1]), v.clone()).expect("checked dims"))
    }

    pub fn to_vector_f64(&self) -> Result<Array1<f64>> {
        self.expect("f64", 1)?;
        let ArrayData::F64(v) = &self.data else { unreachable!() };
        Ok(Array1::from(v.clone()))
    }

    pub fn to_u32(&self) -> Result<Vec<u32>> {
        self.expect("u32", 1)?;
        let ArrayData::U32(v) = &self.data else { unreachable!() };
        Ok(v.clone())
    }

    pub fn to_text(&self) -> Result<String> {
        self.expect("text", 1)?;
        let ArrayData::Text(s) = &self.data else { unreachable!() };
        Ok(s.clone())
    }

    pub fn matrix_f32(name: &str, m: &Array2<f32>) -> Self {
        let dims = vec![m.nrows(), m.ncols()];
        Self { name: name.into(), dims, data: ArrayData::F32(m.iter().copied().collect()) }
    }

    pub fn matrix_f64(name: &str, m: &Array2<f64>) -> Self {
        let dims = vec![m.nrows(), m.ncols()];
        Self { name: name.into(), dims, data: ArrayData::F64(m.iter().copied().collect()) }
    }

    pub fn vector_f64(name: &str, v: &[f64]) -> Self {
        Self { name: name.into(), dims: vec![v.len()], data: ArrayData::F64(v.to_vec()) }
    }

    pub fn vector_u32(name: &str, v: &[u32]) -> Self {
        Self { name: name.into(), dims: vec![v.len()], data: ArrayData::U32(v.to_vec()) }
    }

    pub fn text(name: &str, s: &str) -> Self {
        Self { name: name.into(), dims: vec![s.len()], data: ArrayData::Text(s.to_string()) }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_body(out: &mut Vec<u8>, a: &NamedArray) {
    put_u32(out, a.data.code());
    put_u32(out, a.dims.len() as u32);
    for &d in &a.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match &a.data {
        ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::U32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        ArrayData::Text(s) => out.extend_from_slice(s.as_bytes()),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn body(&mut self, name: String) -> Result<NamedArray> {
        let code = self.u32()?;
        let rank = self.u32()? as usize;
        if rank > 8 {
            return Err(Error::Format(format!("array {name:?} has rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| usize::try_from(self.u64()?).map_err(|_| Error::Format("dimension overflow".into())))
            .collect::<Result<Vec<_>>>()?;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("array {name:?} is too large")))?;
        let width = match code {
            0 | 2 => 4,
            1 => 8,
            3 => 1,
            c => return Err(Error::Format(format!("array {name:?} has unknown dtype {c}"))),
        };
        let raw = self.take(count.checked_mul(width).ok_or_else(|| Error::Format("payload overflow".into()))?)?;
        let data = match code {
            0 => ArrayData::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            1 => ArrayData::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
            2 => ArrayData::U32(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect()),
            _ => ArrayData::Text(
                String::from_utf8(raw.to_vec()).map_err(|_| Error::Format(format!("array {name:?} is not UTF-8")))?,
            ),
        };
        Ok(NamedArray { name, dims, data })
    }
}

/// Splits off and verifies the trailing CRC-32, returning the checked body.
fn verified<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<&'a [u8]> {
    if bytes.len() < 8 {
        return Err(Error::Format(format!("{} bytes is too short", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    if &body[..4] != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&body[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(body)
}

fn with_crc(mut out: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

/// An ordered set of uniquely named arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    entries: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[NamedArray] {
        &self.entries
    }

    pub fn push(&mut self, entry: NamedArray) -> Result<()> {
        if self.entries.iter().any(|e| e.name == entry.name) {
            return Err(Error::InvalidArgument(format!("duplicate checkpoint entry {:?}", entry.name)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&NamedArray> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Missing(format!("checkpoint entry {name:?}")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u32(&mut out, self.entries.len() as u32);
        for e in &self.entries {
            put_u32(&mut out, e.name.len() as u32);
            out.extend_from_slice(e.name.as_bytes());
            put_body(&mut out, e);
        }
        with_crc(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let body = verified(bytes, CHECKPOINT_MAGIC)?;
        let mut r = Reader { bytes: body, pos: 4 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = r.u32()?;
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
            if !seen.insert(name.clone()) {
                return Err(Error::Format(format!("duplicate entry {name:?}")));
            }
            entries.push(r.body(name)?);
        }
        if r.pos != body.len() {
            return Err(Error::Format(format!("{} trailing bytes", body.len() - r.pos)));
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.encode())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

/// Single-array file: magic, dtype, rank, dims, payload and a CRC-32 trailer.
pub fn encode_array(array: &NamedArray) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(ARRAY_MAGIC);
    put_body(&mut out, array);
    with_crc(out)
}

pub fn decode_array(bytes: &[u8], name: &str) -> Result<NamedArray> {
    let body = verified(bytes, ARRAY_MAGIC)?;
    let mut r = Reader { bytes: body, pos: 4 };
    let out = r.body(name.to_string())?;
    if r.pos != body.len() {
        return Err(Error::Format(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(out)
}

pub fn write_array(path: &Path, array: &NamedArray) -> Result<()> {
    Ok(fs::write(path, encode_array(array))?)
}

pub fn read_array(path: &Path) -> Result<NamedArray> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    decode_array(&fs::read(path)?, &name)
}
