use std::io::{Read, Write};

use super::{BundleMode, TrajectoryBundle};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"MFGC";
const VERSION: u32 = 1;

/// Writes `entity,node,t,X,Y,A` rows, entity-major.
pub fn write_csv<T: Real, W: Write>(bundle: &TrajectoryBundle<T>, mut out: W) -> Result<()> {
    writeln!(out, "entity,node,t,X,Y,A")?;
    for i in 0..bundle.entities() {
        for (m, t) in bundle.grid.nodes().enumerate() {
            writeln!(
                out,
                "{i},{m},{t},{},{},{}",
                bundle.state(i, m),
                bundle.costate(i, m),
                bundle.control(i, m)
            )?;
        }
    }
    Ok(())
}

/// Binary dump: `"MFGC"`, version (u32), mode (u32), N (u64), steps M (u64),
/// horizon (f64), then X, Y and A as little-endian f64 in entity-major order.
pub fn write_binary<T: Real, W: Write>(bundle: &TrajectoryBundle<T>, mut out: W) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let mode: u32 = match bundle.mode {
        BundleMode::NPlayer => 0,
        BundleMode::MeanFieldParticles => 1,
    };
    out.write_all(&mode.to_le_bytes())?;
    out.write_all(&(bundle.entities() as u64).to_le_bytes())?;
    out.write_all(&(bundle.grid.steps() as u64).to_le_bytes())?;
    out.write_all(&bundle.grid.horizon().as_f64().to_le_bytes())?;
    for field in 0..3 {
        for i in 0..bundle.entities() {
            for m in 0..bundle.nodes() {
                let v = match field {
                    0 => bundle.state(i, m),
                    1 => bundle.costate(i, m),
                    _ => bundle.control(i, m),
                };
                out.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn take<const K: usize, R: Read>(src: &mut R) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    src.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_binary<T: Real, R: Read>(mut src: R) -> Result<TrajectoryBundle<T>> {
    if &take::<4, _>(&mut src)? != MAGIC {
        return Err(Error::Io("not an MFGC bundle".into()));
    }
    let version = u32::from_le_bytes(take(&mut src)?);
    if version != VERSION {
        return Err(Error::Io(format!("unsupported bundle version {version}")));
    }
    let mode = match u32::from_le_bytes(take(&mut src)?) {
        0 => BundleMode::NPlayer,
        1 => BundleMode::MeanFieldParticles,
        other => return Err(Error::Io(format!("unknown bundle mode {other}"))),
    };
    let n = u64::from_le_bytes(take(&mut src)?) as usize;
    let steps = u64::from_le_bytes(take(&mut src)?) as usize;
    let horizon = f64::from_le_bytes(take(&mut src)?);
    let grid = TimeGrid::new(T::lit(horizon), steps)?;
    let mut bundle = TrajectoryBundle::zeros(mode, grid, n);
    let mut fields = vec![vec![T::zero(); n * grid.len()]; 3];
    for field in fields.iter_mut() {
        for v in field.iter_mut() {
            *v = T::lit(f64::from_le_bytes(take(&mut src)?));
        }
    }
    for i in 0..n {
        for m in 0..grid.len() {
            let k = i * grid.len() + m;
            bundle.set(i, m, fields[0][k], fields[1][k], fields[2][k]);
        }
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrajectoryBundle<f64> {
        let g = TimeGrid::new(2.0, 3).unwrap();
        let mut b = TrajectoryBundle::zeros(BundleMode::MeanFieldParticles, g, 2);
        for i in 0..2 {
            for m in 0..4 {
                b.set(i, m, i as f64 + m as f64, -(m as f64), 0.5 * i as f64);
            }
        }
        b
    }

    #[test]
    fn binary_round_trip() {
        let b = sample();
        let mut buf = Vec::new();
        write_binary(&b, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"MFGC");
        assert_eq!(buf.len(), 4 + 4 + 4 + 8 + 8 + 8 + 3 * 2 * 4 * 8);
        let back: TrajectoryBundle<f64> = read_binary(&buf[..]).unwrap();
        assert_eq!(back, b);
        assert!(read_binary::<f64, _>(&b"XXXX"[..]).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "entity,node,t,X,Y,A");
        assert_eq!(lines.len(), 1 + 8);
        assert_eq!(lines[2], "0,1,0.6666666666666666,1,-1,0");
    }
}
