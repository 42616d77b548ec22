//! Binary wavefunction checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `GCCK` |
//! | 4 | format version (`u32`, currently 1) |
//! | 4 | precision (`u32`): 1 = complex64, 2 = complex128 |
//! | 4 | number of axes `D` (`u32`) |
//! | 16·D | per axis: points (`u64`), box length (`f64`) |
//! | 4·D | per axis: owning particle (`u32`) |
//! | 4 | components (`u32`) |
//! | 8 | time (`f64`) |
//! | 8 | step count (`u64`) |
//! | 8 | `log_norm` (`f64`) |
//! | rest | amplitudes, component-major then row-major, `(re, im)` pairs |

use std::path::Path;

use crate::grid::{Axis, GridSpec};
use crate::wavefunction::WaveFunction;
use crate::{Error, Result, C64};

const MAGIC: &[u8; 4] = b"GCCK";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Complex64,
    Complex128,
}

impl Precision {
    fn code(self) -> u32 {
        match self {
            Precision::Complex64 => 1,
            Precision::Complex128 => 2,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        match c {
            1 => Ok(Precision::Complex64),
            2 => Ok(Precision::Complex128),
            other => Err(Error::Checkpoint(format!("unknown precision code {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub psi: WaveFunction,
    pub time: f64,
    pub step: u64,
}

pub fn encode(psi: &WaveFunction, time: f64, step: u64, precision: Precision) -> Vec<u8> {
    let grid = psi.grid();
    let width = if precision == Precision::Complex64 { 8 } else { 16 };
    let mut out = Vec::with_capacity(64 + 20 * grid.dims() + width * psi.amplitudes().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&precision.code().to_le_bytes());
    out.extend_from_slice(&(grid.dims() as u32).to_le_bytes());
    for ax in &grid.axes {
        out.extend_from_slice(&(ax.points as u64).to_le_bytes());
        out.extend_from_slice(&ax.length.to_le_bytes());
    }
    for &p in psi.axis_particle() {
        out.extend_from_slice(&(p as u32).to_le_bytes());
    }
    out.extend_from_slice(&(psi.components() as u32).to_le_bytes());
    out.extend_from_slice(&time.to_le_bytes());
    out.extend_from_slice(&step.to_le_bytes());
    out.extend_from_slice(&psi.log_norm.to_le_bytes());
    for a in psi.amplitudes() {
        match precision {
            Precision::Complex64 => {
                out.extend_from_slice(&(a.re as f32).to_le_bytes());
                out.extend_from_slice(&(a.im as f32).to_le_bytes());
            }
            Precision::Complex128 => {
                out.extend_from_slice(&a.re.to_le_bytes());
                out.extend_from_slice(&a.im.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let precision = Precision::from_code(r.u32()?)?;
    let dims = r.u32()? as usize;
    if dims == 0 || dims > 3 {
        return Err(Error::Checkpoint(format!("unsupported number of axes {dims}")));
    }
    let mut axes = Vec::with_capacity(dims);
    for _ in 0..dims {
        let points = r.u64()? as usize;
        let length = r.f64()?;
        axes.push(Axis::new(points, length));
    }
    let grid = GridSpec::new(axes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let axis_particle = (0..dims).map(|_| r.u32().map(|p| p as usize)).collect::<Result<Vec<_>>>()?;
    let components = r.u32()? as usize;
    let time = r.f64()?;
    let step = r.u64()?;
    let log_norm = r.f64()?;
    let n = grid
        .total_points()
        .checked_mul(components)
        .ok_or_else(|| Error::Checkpoint("amplitude count overflows".into()))?;
    let width = if precision == Precision::Complex64 { 8 } else { 16 };
    if bytes.len() - r.pos != n * width {
        return Err(Error::Checkpoint(format!(
            "expected {} amplitude bytes, found {}",
            n * width,
            bytes.len() - r.pos
        )));
    }
    let mut amps = Vec::with_capacity(n);
    for _ in 0..n {
        amps.push(match precision {
            Precision::Complex64 => C64::new(r.f32()? as f64, r.f32()? as f64),
            Precision::Complex128 => C64::new(r.f64()?, r.f64()?),
        });
    }
    let mut psi = WaveFunction::new(grid, axis_particle, components, amps).map_err(|e| Error::Checkpoint(e.to_string()))?;
    psi.log_norm = log_norm;
    Ok(Checkpoint { psi, time, step })
}

pub fn write_checkpoint(path: &Path, psi: &WaveFunction, time: f64, step: u64, precision: Precision) -> Result<()> {
    std::fs::write(path, encode(psi, time, step, precision)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefunction::gaussian_amplitude;

    fn state() -> WaveFunction {
        let g = GridSpec::new(vec![Axis::new(16, 8.0), Axis::new(32, 6.0)]).unwrap();
        let mut psi = WaveFunction::from_fn(g, vec![0, 1], 2, |c, x| {
            gaussian_amplitude(x[0], 0.3 * c as f64, 1.0, 0.7) * gaussian_amplitude(x[1], 0.0, 0.8, -0.2)
        })
        .unwrap();
        psi.log_norm = -3.25;
        psi
    }

    #[test]
    fn double_precision_round_trip_is_exact() {
        let psi = state();
        let c = decode(&encode(&psi, 1.5, 42, Precision::Complex128)).unwrap();
        assert_eq!(c.psi, psi);
        assert_eq!(c.time, 1.5);
        assert_eq!(c.step, 42);
    }

    #[test]
    fn single_precision_round_trip() {
        let psi = state();
        let c = decode(&encode(&psi, 0.0, 0, Precision::Complex64)).unwrap();
        let err = c
            .psi
            .amplitudes()
            .iter()
            .zip(psi.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-7);
        assert_eq!(c.psi.log_norm, psi.log_norm);
    }

    #[test]
    fn header_layout() {
        let psi = state();
        let bytes = encode(&psi, 0.0, 0, Precision::Complex128);
        assert_eq!(&bytes[..4], b"GCCK");
        let header = 4 + 4 + 4 + 4 + 16 * 2 + 4 * 2 + 4 + 8 + 8 + 8;
        assert_eq!(bytes.len(), header + 16 * 16 * 32 * 2);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 16);
    }

    #[test]
    fn corrupted_input_is_rejected() {
        let bytes = encode(&state(), 0.0, 0, Precision::Complex128);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        assert!(decode(&bytes[..10]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.gcck");
        let psi = state();
        write_checkpoint(&path, &psi, 2.0, 7, Precision::Complex128).unwrap();
        assert_eq!(read_checkpoint(&path).unwrap().psi, psi);
    }
}
