//! Binary model files.
//!
//! All integers and floats are little-endian.
//!
//! | field | type |
//! |---|---|
//! | magic `HCFNPMOD` | 8 bytes |
//! | format version (1) | u32 |
//! | activation code | u32 |
//! | deterministic, latent, decoder hidden widths | per network: u32 count, then u32 widths |
//! | acceleration lower and upper bound | f64, f64 |
//! | σ floor | f64 |
//! | standardisation mean, std | 6 × f64 each |
//! | parameter count | u64 |
//! | parameters in buffer order | f64 each |

use std::path::Path;

use super::{Activation, NpArchitecture, NpError, NpModel, Standardizer, INPUT_DIM, SIGMA_FLOOR};

const MAGIC: &[u8; 8] = b"HCFNPMOD";
const VERSION: u32 = 1;

pub fn write_model(model: &NpModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(128 + 8 * model.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&model.activation.code().to_le_bytes());
    for widths in [&model.arch.det_hidden, &model.arch.lat_hidden, &model.arch.dec_hidden] {
        out.extend_from_slice(&(widths.len() as u32).to_le_bytes());
        for w in widths {
            out.extend_from_slice(&(*w as u32).to_le_bytes());
        }
    }
    for v in [model.accel_lb, model.accel_ub, SIGMA_FLOOR] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in model.standardizer.mean.iter().chain(&model.standardizer.std) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for v in &model.params {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NpError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| NpError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NpError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NpError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, NpError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn widths(&mut self) -> Result<Vec<usize>, NpError> {
        let n = self.u32()? as usize;
        if n > 64 {
            return Err(NpError::Format(format!("{n} hidden layers")));
        }
        (0..n).map(|_| self.u32().map(|w| w as usize)).collect()
    }
}

pub fn read_model(bytes: &[u8]) -> Result<NpModel, NpError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(NpError::Format("not a model file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(NpError::Format(format!("unsupported version {version}")));
    }
    let code = r.u32()?;
    let activation =
        Activation::from_code(code).ok_or_else(|| NpError::Format(format!("activation code {code}")))?;
    let arch = NpArchitecture {
        det_hidden: r.widths()?,
        lat_hidden: r.widths()?,
        dec_hidden: r.widths()?,
    };
    if arch.lat_hidden.is_empty() {
        return Err(NpError::Format("latent encoder needs a hidden layer".into()));
    }
    let accel_lb = r.f64()?;
    let accel_ub = r.f64()?;
    let floor = r.f64()?;
    if floor.to_bits() != SIGMA_FLOOR.to_bits() {
        return Err(NpError::Format(format!("σ floor {floor} differs from {SIGMA_FLOOR}")));
    }
    let mut standardizer = Standardizer::default();
    for i in 0..INPUT_DIM {
        standardizer.mean[i] = r.f64()?;
    }
    for i in 0..INPUT_DIM {
        standardizer.std[i] = r.f64()?;
    }
    let n = r.u64()? as usize;
    if n.checked_mul(8) != Some(bytes.len() - r.pos) {
        return Err(NpError::Format(format!(
            "{n} parameters declared, {} bytes remain",
            bytes.len() - r.pos
        )));
    }
    let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    NpModel::from_parts(arch, activation, accel_lb, accel_ub, standardizer, params)
}

pub fn write_model_file(path: &Path, model: &NpModel) -> Result<(), NpError> {
    std::fs::write(path, write_model(model))?;
    Ok(())
}

pub fn read_model_file(path: &Path) -> Result<NpModel, NpError> {
    read_model(&std::fs::read(path)?)
}
