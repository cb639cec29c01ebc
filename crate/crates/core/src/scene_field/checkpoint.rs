//! `FRNF1` checkpoint: magic, the field configuration as little-endian u32
//! (hidden_dim, n_hidden_layers, latent_dim, feature_dim, max_classes,
//! skip_layer, n_frequencies), then every block as
//! `(name_len u32, name, rows u32, cols u32, rows*cols f32)` until end of file.

use std::path::Path;

use super::{FieldConfig, SceneParams};
use crate::binio::{first_non_finite, put_f32s, put_u32, read_file, to_u32, write_file, Reader};
use crate::diffcore::{Matrix, ParamBlock};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"FRNF1";

pub fn encode_checkpoint(params: &SceneParams) -> Result<Vec<u8>> {
    let cfg = params.config();
    let mut out = Vec::with_capacity(64 + params.n_params() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        cfg.hidden_dim,
        cfg.n_hidden_layers,
        cfg.latent_dim,
        cfg.feature_dim,
        cfg.max_classes,
        cfg.skip_layer,
        cfg.n_frequencies,
    ] {
        put_u32(&mut out, to_u32(v, "config field")?);
    }
    for b in params.blocks() {
        put_u32(&mut out, to_u32(b.name.len(), "name length")?);
        out.extend_from_slice(b.name.as_bytes());
        let (r, c) = b.shape();
        put_u32(&mut out, to_u32(r, "rows")?);
        put_u32(&mut out, to_u32(c, "cols")?);
        put_f32s(&mut out, b.values.as_slice());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<SceneParams> {
    let mut rd = Reader::new(bytes);
    rd.magic(CHECKPOINT_MAGIC)?;
    let mut fields = [0usize; 7];
    for f in fields.iter_mut() {
        *f = rd.u32("config")? as usize;
    }
    let cfg = FieldConfig {
        hidden_dim: fields[0],
        n_hidden_layers: fields[1],
        latent_dim: fields[2],
        feature_dim: fields[3],
        max_classes: fields[4],
        skip_layer: fields[5],
        n_frequencies: fields[6],
    };
    cfg.validate()
        .map_err(|e| Error::format(CHECKPOINT_MAGIC.len() as u64, e.to_string()))?;
    let basis = cfg.basis()?;
    let mut blocks = Vec::new();
    while rd.remaining() > 0 {
        let at = rd.offset();
        let name_len = rd.u32("block name length")? as usize;
        let name = std::str::from_utf8(rd.take(name_len, "block name")?)
            .map_err(|_| Error::format(at + 4, "block name is not UTF-8"))?
            .to_owned();
        let rows = rd.u32("rows")? as usize;
        let cols = rd.u32("cols")? as usize;
        let base = rd.offset();
        let values = rd.f32s(rows * cols, &format!("values of {name}"))?;
        if let Some(off) = first_non_finite(&values, base) {
            return Err(Error::format(off, format!("non-finite value in {name}")));
        }
        blocks.push(ParamBlock::from_values(name, Matrix::from_vec(rows, cols, values)?));
    }
    SceneParams::from_blocks(cfg, &basis, blocks).map_err(|e| Error::format(rd.offset(), e.to_string()))
}

pub fn save_checkpoint(path: &Path, params: &SceneParams) -> Result<()> {
    write_file(path, &encode_checkpoint(params)?)
}

pub fn load_checkpoint(path: &Path) -> Result<SceneParams> {
    decode_checkpoint(&read_file(path)?)
}
