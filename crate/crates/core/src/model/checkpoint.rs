use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{EnsembleConfig, SubspaceEnsemble};

const MAGIC: &[u8; 4] = b"FSLM";
const VERSION: u32 = 1;
const FLAG_SEPARATE_TRUNKS: u32 = 1;

/// Layout (little-endian): `FSLM`, u32 version, u32 D, H, M, ν, u32 flags,
/// f64 bn eps, f64 bn momentum, every parameter tensor in tape order, then
/// each batch-norm layer's running mean and variance (trunks, then heads).
pub fn write_checkpoint<W: Write>(model: &SubspaceEnsemble, out: &mut W) -> Result<()> {
    let c = model.config();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for dim in [c.input_dim, c.hidden_dim, c.output_dim, c.subspaces] {
        let dim = u32::try_from(dim).map_err(|_| Error::Format("dimension exceeds u32".into()))?;
        out.write_all(&dim.to_le_bytes())?;
    }
    let flags = if c.shared_trunk { 0 } else { FLAG_SEPARATE_TRUNKS };
    out.write_all(&flags.to_le_bytes())?;
    out.write_all(&c.bn_eps.to_le_bytes())?;
    out.write_all(&c.bn_momentum.to_le_bytes())?;
    for p in model.params().params() {
        for v in p.as_slice() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    for s in model.running_stats() {
        for v in s.mean.iter().chain(&s.var) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<SubspaceEnsemble> {
    let mut magic = [0u8; 4];
    read(input, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model checkpoint (bad magic)".into()));
    }
    let version = read_u32(input)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}, expected {VERSION}"
        )));
    }
    let input_dim = read_u32(input)? as usize;
    let hidden_dim = read_u32(input)? as usize;
    let output_dim = read_u32(input)? as usize;
    let subspaces = read_u32(input)? as usize;
    let flags = read_u32(input)?;
    let config = EnsembleConfig {
        input_dim,
        hidden_dim,
        output_dim,
        subspaces,
        shared_trunk: flags & FLAG_SEPARATE_TRUNKS == 0,
        bn_eps: read_f64(input)?,
        bn_momentum: read_f64(input)?,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("invalid checkpoint header: {e}")))?;
    let mut model = SubspaceEnsemble::init(config, 0)?;
    let mut tape = model.params().clone();
    for slot in 0..tape.len() {
        for v in tape.param_mut(slot).as_mut_slice() {
            *v = read_f64(input)?;
        }
    }
    model
        .set_params(tape)
        .map_err(|e| Error::Format(format!("checkpoint parameters: {e}")))?;
    for s in model.running_stats_mut() {
        for v in s.mean.iter_mut().chain(s.var.iter_mut()) {
            *v = read_f64(input)?;
        }
    }
    let mut extra = [0u8; 1];
    if input.read(&mut extra)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &SubspaceEnsemble, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_checkpoint(model, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SubspaceEnsemble> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}

fn read<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated checkpoint".into()),
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read(input, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read(input, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use crate::numeric::Matrix;

    fn model(shared_trunk: bool) -> SubspaceEnsemble {
        let mut m = SubspaceEnsemble::init(
            EnsembleConfig {
                input_dim: 4,
                hidden_dim: 3,
                output_dim: 2,
                subspaces: 2,
                shared_trunk,
                ..EnsembleConfig::default()
            },
            5,
        )
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, 0.0, -1.0], [0.5, -0.5, 2.0, 1.0]]).unwrap();
        let (_, cache) = m.forward_batch(&x, Mode::Train).unwrap();
        m.update_running_stats(&cache);
        m
    }

    #[test]
    fn round_trip_preserves_everything() {
        for shared in [true, false] {
            let m = model(shared);
            let mut bytes = Vec::new();
            write_checkpoint(&m, &mut bytes).unwrap();
            assert_eq!(&bytes[..4], b"FSLM");
            let back = read_checkpoint(&mut bytes.as_slice()).unwrap();
            assert_eq!(back, m);
        }
    }

    #[test]
    fn corrupt_checkpoints_are_format_errors() {
        let mut bytes = Vec::new();
        write_checkpoint(&model(true), &mut bytes).unwrap();
        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert!(matches!(
            read_checkpoint(&mut bad_version.as_slice()),
            Err(Error::Format(_))
        ));
        let truncated = &bytes[..bytes.len() - 3];
        assert!(matches!(
            read_checkpoint(&mut &truncated[..]),
            Err(Error::Format(_))
        ));
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(read_checkpoint(&mut trailing.as_slice()).is_err());
        assert!(read_checkpoint(&mut &b"FSLX"[..]).is_err());
    }
}
