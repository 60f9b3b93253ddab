//! Model checkpoint container: magic `RLN1`, little-endian dimensions
//! (streams, d_raw, d_norm, hidden, classes), fusion/cell/stream-tag codes,
//! a u64 parameter count, then every parameter as little-endian f64 in the
//! flat order documented on [`ModelParams`].

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{CellKind, FusionMode, ModelDims, ModelParams};
use crate::track::StreamTag;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RLN1";

fn fusion_code(f: FusionMode) -> u8 {
    match f {
        FusionMode::Single => 0,
        FusionMode::Average => 1,
        FusionMode::Gating => 2,
        FusionMode::FusionLayer => 3,
    }
}

fn fusion_from(code: u8) -> Result<FusionMode> {
    Ok(match code {
        0 => FusionMode::Single,
        1 => FusionMode::Average,
        2 => FusionMode::Gating,
        3 => FusionMode::FusionLayer,
        other => return Err(Error::data(format!("unknown fusion code {other}"))),
    })
}

fn cell_code(c: CellKind) -> u8 {
    match c {
        CellKind::Gru => 0,
        CellKind::Lstm => 1,
        CellKind::Fc => 2,
    }
}

fn cell_from(code: u8) -> Result<CellKind> {
    Ok(match code {
        0 => CellKind::Gru,
        1 => CellKind::Lstm,
        2 => CellKind::Fc,
        other => return Err(Error::data(format!("unknown cell code {other}"))),
    })
}

fn tag_code(t: StreamTag) -> u8 {
    match t {
        StreamTag::Appearance => 0,
        StreamTag::Flow => 1,
    }
}

fn tag_from(code: u8) -> Result<StreamTag> {
    Ok(match code {
        0 => StreamTag::Appearance,
        1 => StreamTag::Flow,
        other => return Err(Error::data(format!("unknown stream tag code {other}"))),
    })
}

pub fn encode_checkpoint(m: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    for dim in [
        m.streams.len() as u32,
        m.dims.d_raw as u32,
        m.dims.d_norm as u32,
        m.dims.hidden as u32,
        m.dims.n_classes as u32,
    ] {
        out.extend_from_slice(&dim.to_le_bytes());
    }
    out.push(fusion_code(m.dims.fusion));
    out.push(cell_code(m.dims.cell));
    for s in &m.streams {
        out.push(tag_code(s.tag));
    }
    let flat = m.to_flat();
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Strict decoder for untrusted bytes. The expected parameter count is
/// recomputed from the declared dimensions and must match both the header
/// count and the remaining length before anything large is allocated.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let header = 4 + 5 * 4 + 2;
    if bytes.len() < header {
        return Err(Error::data("checkpoint shorter than its header"));
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::data("bad checkpoint magic (want RLN1)"));
    }
    let dim_at = |i: usize| {
        u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
    };
    let n_streams = dim_at(0);
    let dims = (dim_at(1), dim_at(2), dim_at(3), dim_at(4));
    let fusion = fusion_from(bytes[24])?;
    let cell = cell_from(bytes[25])?;
    if n_streams != fusion.n_streams() {
        return Err(Error::data(format!(
            "checkpoint declares {n_streams} streams but fusion mode {} requires {}",
            fusion.name(),
            fusion.n_streams()
        )));
    }
    const DIM_CAP: usize = 1 << 20;
    let (d_raw, d_norm, hidden, n_classes) = dims;
    for (name, v) in [("d_raw", d_raw), ("d_norm", d_norm), ("hidden", hidden), ("classes", n_classes)] {
        if v == 0 || v > DIM_CAP {
            return Err(Error::data(format!("checkpoint dimension {name} = {v} out of range")));
        }
    }
    let mut pos = 26;
    let mut tags = Vec::with_capacity(n_streams);
    for _ in 0..n_streams {
        let code = *bytes.get(pos).ok_or_else(|| Error::data("checkpoint truncated at tags"))?;
        tags.push(tag_from(code)?);
        pos += 1;
    }

    let model_dims = ModelDims { cell, fusion, d_raw, d_norm, hidden, n_classes };
    let mut model = ModelParams::zeros(model_dims, &tags)?;
    let expected = model.param_count();

    let count_bytes: [u8; 8] = bytes
        .get(pos..pos + 8)
        .ok_or_else(|| Error::data("checkpoint truncated at parameter count"))?
        .try_into()
        .unwrap();
    let declared = u64::from_le_bytes(count_bytes) as usize;
    pos += 8;
    if declared != expected {
        return Err(Error::data(format!(
            "checkpoint declares {declared} parameters, dimensions imply {expected}"
        )));
    }
    let payload = &bytes[pos..];
    let need = expected
        .checked_mul(8)
        .ok_or_else(|| Error::data("checkpoint parameter count overflows"))?;
    if payload.len() != need {
        return Err(Error::data(format!(
            "checkpoint payload is {} bytes, expected {need}",
            payload.len()
        )));
    }
    let mut flat = Vec::with_capacity(expected);
    for chunk in payload.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::data("checkpoint contains non-finite parameters"));
        }
        flat.push(v);
    }
    model.copy_from_flat(&flat)?;
    Ok(model)
}

pub fn write_checkpoint(path: &Path, m: &ModelParams) -> Result<()> {
    fs::write(path, encode_checkpoint(m))?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    decode_checkpoint(&fs::read(path)?)
}
