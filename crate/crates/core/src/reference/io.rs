//! Binary grid snapshots and density slices.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reference::grid::{Grid, GridWave};

const MAGIC: &[u8; 8] = b"QJGRID01";
const ENDIAN_TAG: u32 = 0x0102_0304;

/// Metadata written next to a binary snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub format: String,
    pub endianness: String,
    pub points: Vec<usize>,
    pub lower: Vec<f64>,
    pub extent: Vec<f64>,
    pub t: f64,
    pub norm: f64,
}

impl From<&GridWave> for GridSidecar {
    fn from(w: &GridWave) -> Self {
        GridSidecar {
            format: "complex f64 pairs, axis 0 slowest".into(),
            endianness: "little".into(),
            points: w.grid.points.clone(),
            lower: w.grid.lower.clone(),
            extent: w.grid.extent.clone(),
            t: w.t,
            norm: w.norm_sqr(),
        }
    }
}

pub fn encode_grid(w: &GridWave) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 16 * w.data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&ENDIAN_TAG.to_le_bytes());
    out.extend_from_slice(&(w.grid.dim() as u32).to_le_bytes());
    for axis in 0..w.grid.dim() {
        out.extend_from_slice(&(w.grid.points[axis] as u64).to_le_bytes());
        out.extend_from_slice(&w.grid.lower[axis].to_le_bytes());
        out.extend_from_slice(&w.grid.extent[axis].to_le_bytes());
    }
    out.extend_from_slice(&w.t.to_le_bytes());
    for v in &w.data {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const K: usize>(&mut self) -> Result<[u8; K]> {
        let slice =
            self.bytes.get(self.at..self.at + K).ok_or_else(|| Error::Parse("truncated grid snapshot".into()))?;
        self.at += K;
        Ok(slice.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

pub fn decode_grid(bytes: &[u8]) -> Result<GridWave> {
    let mut r = Reader { bytes, at: 0 };
    if &r.take::<8>()? != MAGIC {
        return Err(Error::Parse("not a grid snapshot".into()));
    }
    if r.u32()? != ENDIAN_TAG {
        return Err(Error::Parse("unexpected byte order in grid snapshot".into()));
    }
    let dims = r.u32()? as usize;
    if dims == 0 || dims > 2 {
        return Err(Error::Parse(format!("unsupported grid dimension {dims}")));
    }
    let mut grid = Grid { points: Vec::new(), lower: Vec::new(), extent: Vec::new() };
    for _ in 0..dims {
        grid.points.push(r.u64()? as usize);
        grid.lower.push(r.f64()?);
        grid.extent.push(r.f64()?);
    }
    let t = r.f64()?;
    let len = grid.len();
    if bytes.len() - r.at != 16 * len {
        return Err(Error::Parse("grid snapshot payload size mismatch".into()));
    }
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(Complex64::new(r.f64()?, r.f64()?));
    }
    Ok(GridWave { grid, t, data })
}

/// `x, |ψ|²` rows for a 1D wave, or the slice through row `fixed` of axis 0 for 2D.
pub fn write_density_slice(w: &GridWave, fixed: usize, out: &mut impl Write) -> Result<()> {
    match w.grid.dim() {
        1 => {
            writeln!(out, "x,density")?;
            for (k, v) in w.data.iter().enumerate() {
                writeln!(out, "{},{}", w.grid.coordinate(0, k), v.norm_sqr())?;
            }
        }
        _ => {
            let m1 = w.grid.points[1];
            writeln!(out, "y,density")?;
            for j in 0..m1 {
                writeln!(out, "{},{}", w.grid.coordinate(1, j), w.data[fixed * m1 + j].norm_sqr())?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let grid = Grid::centered(&[0.0, 1.0], &[4.0, 6.0], &[4, 3]).unwrap();
        let w = GridWave::from_fn(grid, 0.25, |x| Complex64::new(x[0], -x[1]));
        let back = decode_grid(&encode_grid(&w)).unwrap();
        assert_eq!(back, w);
        let mut bad = encode_grid(&w);
        bad.pop();
        assert!(decode_grid(&bad).is_err());
    }

    #[test]
    fn file_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psi.bin");
        let grid = Grid::centered(&[0.0], &[4.0], &[8]).unwrap();
        let w = GridWave::from_fn(grid, 1.0, |x| Complex64::new(1.0, x[0]));
        w.write_binary(&path).unwrap();
        assert_eq!(GridWave::read_binary(&path).unwrap(), w);
        let side: GridSidecar =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("psi.bin.json")).unwrap()).unwrap();
        assert_eq!(side.points, vec![8]);
        let mut csv = Vec::new();
        write_density_slice(&w, 0, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 9);
    }
}
