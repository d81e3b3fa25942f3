//! Little-endian binary files: slope-plane stacks ("AOIM"), command telemetry
//! ("AOTC") and 2D arrays ("AOSC").

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::aoloop::TelemetryCube;
use crate::error::{Error, Result};
use crate::geometry::{Mask, SubapertureGrid};
use crate::optics::{ModalIm, SlopeField, ZonalIm};
use crate::turbulence::PhaseScreen;

pub const VERSION: u32 = 1;
const IM_MAGIC: &[u8; 4] = b"AOIM";
const TELEMETRY_MAGIC: &[u8; 4] = b"AOTC";
const ARRAY_MAGIC: &[u8; 4] = b"AOSC";

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f64(w: &mut impl Write, v: f64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn put_f32s(w: &mut impl Write, vs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(4 * vs.len());
    for &v in vs {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(w.write_all(&buf)?)
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("file is truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    Ok(u32::from_le_bytes(take(r)?))
}

fn get_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(take(r)?))
}

fn get_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 4 * n];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("file is truncated".into()))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn header(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let m: [u8; 4] = take(r)?;
    if &m != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&m)
        )));
    }
    let v = get_u32(r)?;
    if v != VERSION {
        return Err(Error::Format(format!("unsupported version {v}")));
    }
    Ok(())
}

fn expect_end(r: &mut impl Read) -> Result<()> {
    let mut probe = [0u8; 1];
    match r.read(&mut probe)? {
        0 => Ok(()),
        _ => Err(Error::Format("trailing bytes after payload".into())),
    }
}

fn dim(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit the header")))
}

/// Stack of slope fields on one subaperture grid, as stored in AOIM files.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopePlanes {
    pub d_sub: usize,
    pub items: Vec<SlopeField>,
    pub mask_wfs: Mask,
    pub mask_valid: Mask,
}

impl SlopePlanes {
    pub fn from_zonal(im: &ZonalIm) -> Self {
        Self::from_matrix(&im.grid, &im.matrix)
    }

    pub fn from_modal(im: &ModalIm) -> Self {
        Self::from_matrix(&im.grid, &im.matrix)
    }

    fn from_matrix(grid: &SubapertureGrid, m: &DMatrix<f64>) -> Self {
        Self {
            d_sub: grid.d_sub,
            items: (0..m.ncols())
                .map(|j| SlopeField::from_vector(grid, m.column(j).as_slice()))
                .collect(),
            mask_wfs: grid.mask_wfs.clone(),
            mask_valid: grid.mask_valid.clone(),
        }
    }

    /// Rebuilds a modal IM; the file carries neither pitch, amplitude nor mode numbers.
    pub fn to_modal(&self, pitch_m: f64, amplitude_um: f64, modes: Vec<usize>) -> Result<ModalIm> {
        if modes.len() != self.items.len() {
            return Err(Error::Dimension(format!(
                "{} mode numbers for {} planes",
                modes.len(),
                self.items.len()
            )));
        }
        let grid =
            SubapertureGrid::from_masks(pitch_m, self.mask_wfs.clone(), self.mask_valid.clone())?;
        let cols: Vec<Vec<f64>> = self.items.iter().map(|f| f.to_vector(&grid)).collect();
        let matrix = DMatrix::from_fn(grid.n_slopes(), cols.len(), |i, j| cols[j][i]);
        Ok(ModalIm {
            grid,
            amplitude_um,
            modes,
            matrix,
        })
    }
}

pub fn write_slope_planes(w: &mut impl Write, p: &SlopePlanes) -> Result<()> {
    w.write_all(IM_MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, dim(p.items.len(), "item count")?)?;
    put_u32(w, dim(p.d_sub, "grid size")?)?;
    for f in &p.items {
        put_f32s(w, &f.x)?;
        put_f32s(w, &f.y)?;
    }
    for m in [&p.mask_wfs, &p.mask_valid] {
        let bytes: Vec<u8> = m.cells().iter().map(|&b| b as u8).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_slope_planes(r: &mut impl Read) -> Result<SlopePlanes> {
    header(r, IM_MAGIC)?;
    let n_items = get_u32(r)? as usize;
    let d = get_u32(r)? as usize;
    if d == 0 {
        return Err(Error::Format("grid size is zero".into()));
    }
    let mut items = Vec::with_capacity(n_items.min(1 << 16));
    for _ in 0..n_items {
        let x = get_f32s(r, d * d)?;
        let y = get_f32s(r, d * d)?;
        items.push(SlopeField { d_sub: d, x, y });
    }
    let mut masks = Vec::with_capacity(2);
    for _ in 0..2 {
        let mut buf = vec![0u8; d * d];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("file is truncated".into()))?;
        if buf.iter().any(|&b| b > 1) {
            return Err(Error::Format("mask bytes must be 0 or 1".into()));
        }
        masks.push(Mask::from_cells(
            d,
            buf.into_iter().map(|b| b == 1).collect(),
        )?);
    }
    expect_end(r)?;
    let mask_valid = masks.pop().expect("two masks read");
    let mask_wfs = masks.pop().expect("two masks read");
    Ok(SlopePlanes {
        d_sub: d,
        items,
        mask_wfs,
        mask_valid,
    })
}

pub fn write_telemetry(w: &mut impl Write, cube: &TelemetryCube) -> Result<()> {
    if cube.frames.len() != cube.n_frames * cube.d_act * cube.d_act {
        return Err(Error::Dimension(
            "telemetry size does not match its shape".into(),
        ));
    }
    w.write_all(TELEMETRY_MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, dim(cube.n_frames, "frame count")?)?;
    put_u32(w, dim(cube.d_act, "grid size")?)?;
    put_f64(w, cube.dt)?;
    w.write_all(&(cube.clip as f32).to_le_bytes())?;
    put_f32s(w, &cube.frames)
}

/// Loop configuration and true mis-registration are not stored and come back empty.
pub fn read_telemetry(r: &mut impl Read) -> Result<TelemetryCube> {
    header(r, TELEMETRY_MAGIC)?;
    let n_frames = get_u32(r)? as usize;
    let d_act = get_u32(r)? as usize;
    let dt = get_f64(r)?;
    let clip = f32::from_le_bytes(take(r)?) as f64;
    if !(dt > 0.0) || !(clip > 0.0) {
        return Err(Error::Format(format!(
            "bad loop period {dt} or clip {clip}"
        )));
    }
    let frames = get_f32s(r, n_frames * d_act * d_act)?;
    expect_end(r)?;
    let mut cube = TelemetryCube::new(d_act, dt, clip);
    cube.n_frames = n_frames;
    cube.frames = frames;
    Ok(cube)
}

/// Dense row-major 2D array with a sample pitch, as stored in AOSC files.
#[derive(Clone, Debug, PartialEq)]
pub struct ArrayFile {
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
    pub data: Vec<f64>,
}

impl ArrayFile {
    pub fn from_screen(s: &PhaseScreen) -> Self {
        Self {
            rows: s.size(),
            cols: s.size(),
            pitch: s.sample_pitch_m,
            data: s.data().to_vec(),
        }
    }

    pub fn to_screen(&self, r0_m: f64, lambda0_m: f64) -> Result<PhaseScreen> {
        if self.rows != self.cols {
            return Err(Error::Dimension(format!(
                "screen must be square, got {}×{}",
                self.rows, self.cols
            )));
        }
        PhaseScreen::from_data(self.rows, self.data.clone(), self.pitch, r0_m, lambda0_m)
    }
}

pub fn write_array(w: &mut impl Write, a: &ArrayFile) -> Result<()> {
    if a.data.len() != a.rows * a.cols {
        return Err(Error::Dimension(
            "array size does not match its shape".into(),
        ));
    }
    w.write_all(ARRAY_MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, dim(a.rows, "row count")?)?;
    put_u32(w, dim(a.cols, "column count")?)?;
    put_f64(w, a.pitch)?;
    let mut buf = Vec::with_capacity(8 * a.data.len());
    for v in &a.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    Ok(w.write_all(&buf)?)
}

pub fn read_array(r: &mut impl Read) -> Result<ArrayFile> {
    header(r, ARRAY_MAGIC)?;
    let rows = get_u32(r)? as usize;
    let cols = get_u32(r)? as usize;
    let pitch = get_f64(r)?;
    let mut buf = vec![0u8; 8 * rows * cols];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("file is truncated".into()))?;
    expect_end(r)?;
    let data = buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(ArrayFile {
        rows,
        cols,
        pitch,
        data,
    })
}

fn save(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn load<T>(path: &Path, f: impl FnOnce(&mut BufReader<File>) -> Result<T>) -> Result<T> {
    f(&mut BufReader::new(File::open(path)?))
}

pub fn save_slope_planes(path: &Path, p: &SlopePlanes) -> Result<()> {
    save(path, |w| write_slope_planes(w, p))
}

pub fn load_slope_planes(path: &Path) -> Result<SlopePlanes> {
    load(path, read_slope_planes)
}

pub fn save_telemetry(path: &Path, cube: &TelemetryCube) -> Result<()> {
    save(path, |w| write_telemetry(w, cube))
}

pub fn load_telemetry(path: &Path) -> Result<TelemetryCube> {
    load(path, read_telemetry)
}

pub fn save_array(path: &Path, a: &ArrayFile) -> Result<()> {
    save(path, |w| write_array(w, a))
}

pub fn load_array(path: &Path) -> Result<ArrayFile> {
    load(path, read_array)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f32_exact(v: f64) -> f64 {
        v as f32 as f64
    }

    #[test]
    fn slope_planes_round_trip() {
        let grid = SubapertureGrid::annular(6, 0.3, 0.2).unwrap();
        let n = grid.n_slopes();
        let matrix = DMatrix::from_fn(n, 3, |i, j| f32_exact((i as f64 - 7.0) * 0.25 + j as f64));
        let im = ModalIm {
            grid: grid.clone(),
            amplitude_um: 4.0,
            modes: vec![4, 5, 6],
            matrix,
        };
        let planes = SlopePlanes::from_modal(&im);
        let mut buf = Vec::new();
        write_slope_planes(&mut buf, &planes).unwrap();
        assert_eq!(&buf[..4], b"AOIM");
        assert_eq!(buf.len(), 16 + 3 * 2 * 36 * 4 + 2 * 36);
        let back = read_slope_planes(&mut buf.as_slice()).unwrap();
        assert_eq!(back, planes);
        assert_eq!(back.to_modal(0.2, 4.0, vec![4, 5, 6]).unwrap(), im);
        assert!(back.to_modal(0.2, 4.0, vec![4]).is_err());
    }

    #[test]
    fn telemetry_round_trip() {
        let mut cube = TelemetryCube::new(3, 1e-3, 0.5);
        cube.push_frame(&[0.0, 0.25, -0.5, 0.125, 0.0, 0.0, 0.5, -0.25, 0.0]);
        cube.push_frame(&[0.0; 9]);
        let mut buf = Vec::new();
        write_telemetry(&mut buf, &cube).unwrap();
        assert_eq!(buf.len(), 4 + 4 + 4 + 4 + 8 + 4 + 18 * 4);
        assert_eq!(read_telemetry(&mut buf.as_slice()).unwrap(), cube);
    }

    #[test]
    fn array_round_trip_is_exact() {
        let a = ArrayFile {
            rows: 2,
            cols: 3,
            pitch: 0.0123,
            data: vec![1.0 / 3.0, -2.5, 1e-300, 7.0, 0.0, -0.1],
        };
        let mut buf = Vec::new();
        write_array(&mut buf, &a).unwrap();
        assert_eq!(read_array(&mut buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let a = ArrayFile {
            rows: 1,
            cols: 2,
            pitch: 1.0,
            data: vec![1.0, 2.0],
        };
        let mut buf = Vec::new();
        write_array(&mut buf, &a).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_array(&mut bad.as_slice()),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_array(&mut &buf[..buf.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(
            read_array(&mut long.as_slice()),
            Err(Error::Format(_))
        ));
        let mut wrong_version = buf;
        wrong_version[4] = 9;
        assert!(matches!(
            read_array(&mut wrong_version.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.aosc");
        let a = ArrayFile {
            rows: 1,
            cols: 1,
            pitch: 2.0,
            data: vec![3.0],
        };
        save_array(&path, &a).unwrap();
        assert_eq!(load_array(&path).unwrap(), a);
        assert!(matches!(
            load_array(&dir.path().join("missing")),
            Err(Error::Io(_))
        ));
    }
}
