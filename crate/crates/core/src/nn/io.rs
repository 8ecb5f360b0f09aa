//! Model file: magic `TXOM`, u32 format version, u64 header length, JSON header
//! with the spec and init record, then every parameter as little-endian f32 in
//! declaration order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{InitRecord, ModelParams, ModelSpec};
use super::NnError;

pub const MODEL_MAGIC: [u8; 4] = *b"TXOM";
pub const MODEL_FORMAT_VERSION: u32 = 1;
const MAX_HEADER_BYTES: u64 = 1 << 20;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    init: InitRecord,
    param_count: usize,
}

pub fn write_model<W: Write>(mut w: W, params: &ModelParams) -> Result<(), NnError> {
    let header = serde_json::to_vec(&Header {
        spec: params.spec.clone(),
        init: params.init.clone(),
        param_count: params.len(),
    })
    .map_err(|e| NnError::Format(e.to_string()))?;
    let io = |e: std::io::Error| NnError::Io(e.to_string());
    w.write_all(&MODEL_MAGIC).map_err(io)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(header.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&header).map_err(io)?;
    let mut buf = Vec::with_capacity(params.len() * 4);
    for &v in &params.values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf).map_err(io)?;
    w.flush().map_err(io)
}

pub fn write_model_file(path: &Path, params: &ModelParams) -> Result<(), NnError> {
    let f = std::fs::File::create(path).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
    write_model(std::io::BufWriter::new(f), params)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), NnError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => NnError::Format(format!("truncated {what}")),
        _ => NnError::Io(e.to_string()),
    })
}

pub fn read_model<R: Read>(mut r: R) -> Result<ModelParams, NnError> {
    let mut b4 = [0u8; 4];
    read_exact(&mut r, &mut b4, "magic")?;
    if b4 != MODEL_MAGIC {
        return Err(NnError::Format("not a model file (bad magic)".into()));
    }
    read_exact(&mut r, &mut b4, "version")?;
    let version = u32::from_le_bytes(b4);
    if version != MODEL_FORMAT_VERSION {
        return Err(NnError::Format(format!("unsupported model format version {version}")));
    }
    let mut b8 = [0u8; 8];
    read_exact(&mut r, &mut b8, "header length")?;
    let len = u64::from_le_bytes(b8);
    if len > MAX_HEADER_BYTES {
        return Err(NnError::Format(format!("header length {len} too large")));
    }
    let mut header = vec![0u8; len as usize];
    read_exact(&mut r, &mut header, "header")?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| NnError::Format(e.to_string()))?;
    let plan_len = ModelParams::zeros(&header.spec)?.len();
    if plan_len != header.param_count {
        return Err(NnError::Format(format!(
            "header declares {} parameters, spec implies {plan_len}",
            header.param_count
        )));
    }
    let mut values = Vec::with_capacity(plan_len);
    let mut chunk = vec![0u8; 4 * 4096];
    while values.len() < plan_len {
        let n = (plan_len - values.len()).min(4096);
        read_exact(&mut r, &mut chunk[..4 * n], "parameters")?;
        for b in chunk[..4 * n].chunks_exact(4) {
            let v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
            if !v.is_finite() {
                return Err(NnError::Format(format!("parameter {} is not finite", values.len())));
            }
            values.push(f64::from(v));
        }
    }
    let mut extra = [0u8; 1];
    match r.read(&mut extra) {
        Ok(0) => {}
        Ok(_) => return Err(NnError::Format("trailing bytes after parameters".into())),
        Err(e) => return Err(NnError::Io(e.to_string())),
    }
    ModelParams::from_values(&header.spec, header.init, values)
}

pub fn read_model_file(path: &Path) -> Result<ModelParams, NnError> {
    let f = std::fs::File::open(path).map_err(|e| NnError::Io(format!("{}: {e}", path.display())))?;
    read_model(std::io::BufReader::new(f))
}
