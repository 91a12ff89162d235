//! NIfTI-1 volume I/O (`.nii` and `.nii.gz`) and a small raw debug format.
//!
//! Masks are written as unsigned 8-bit, scalar volumes as 32-bit float.
//! Reading accepts the common integer and float datatypes and either byte
//! order; writing is always little-endian single-file (`n+1`). Spacing comes
//! from `pixdim[1..=3]`. Header fields such as the qform/sform affines are
//! carried through when a template header is supplied.
//!
//! The raw format (`.agv`) is an 8-byte magic, a kind byte, three `u64`
//! dims, three `f64` spacings and the voxel payload, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Grid, ScalarVolume, Spacing};

const HEADER_SIZE: usize = 348;
const SINGLE_FILE_OFFSET: f32 = 352.0;
const RAW_MAGIC: &[u8; 8] = b"AGEOVOL1";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_INT32: i16 = 8;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;
pub const DT_INT8: i16 = 256;
pub const DT_UINT16: i16 = 512;
pub const DT_UINT32: i16 = 768;

/// The NIfTI-1 header fields, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub dim_info: u8,
    pub dim: [i16; 8],
    pub intent_p: [f32; 3],
    pub intent_code: i16,
    pub datatype: i16,
    pub bitpix: i16,
    pub slice_start: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub slice_end: i16,
    pub slice_code: u8,
    pub xyzt_units: u8,
    pub cal_max: f32,
    pub cal_min: f32,
    pub slice_duration: f32,
    pub toffset: f32,
    pub descrip: [u8; 80],
    pub aux_file: [u8; 24],
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow_x: [f32; 4],
    pub srow_y: [f32; 4],
    pub srow_z: [f32; 4],
    pub intent_name: [u8; 16],
    pub magic: [u8; 4],
}

impl NiftiHeader {
    /// Header for a grid with a diagonal scanner affine, millimeter units.
    pub fn for_grid(dims: [usize; 3], spacing: Spacing) -> Self {
        let s = spacing.as_array().map(|v| v as f32);
        let mut dim = [1i16; 8];
        dim[0] = 3;
        for a in 0..3 {
            dim[a + 1] = dims[a] as i16;
        }
        NiftiHeader {
            dim_info: 0,
            dim,
            intent_p: [0.0; 3],
            intent_code: 0,
            datatype: DT_FLOAT32,
            bitpix: 32,
            slice_start: 0,
            pixdim: [1.0, s[0], s[1], s[2], 1.0, 1.0, 1.0, 1.0],
            vox_offset: SINGLE_FILE_OFFSET,
            scl_slope: 1.0,
            scl_inter: 0.0,
            slice_end: 0,
            slice_code: 0,
            xyzt_units: 2, // mm
            cal_max: 0.0,
            cal_min: 0.0,
            slice_duration: 0.0,
            toffset: 0.0,
            descrip: [0; 80],
            aux_file: [0; 24],
            qform_code: 0,
            sform_code: 2,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow_x: [s[0], 0.0, 0.0, 0.0],
            srow_y: [0.0, s[1], 0.0, 0.0],
            srow_z: [0.0, 0.0, s[2], 0.0],
            intent_name: [0; 16],
            magic: *b"n+1\0",
        }
    }

    pub fn dims(&self) -> Result<[usize; 3]> {
        let ndim = self.dim[0];
        if !(1..=7).contains(&ndim) {
            return Err(Error::Format(format!("dim[0] = {ndim} outside 1..=7")));
        }
        let mut out = [1usize; 3];
        #[allow(clippy::needless_range_loop)]
        for a in 0..ndim as usize {
            let d = self.dim[a + 1];
            if d <= 0 {
                return Err(Error::Format(format!("dim[{}] = {d} is not positive", a + 1)));
            }
            if a < 3 {
                out[a] = d as usize;
            } else if d != 1 {
                return Err(Error::Format(format!(
                    "only 3-D volumes are supported, dim[{}] = {d}",
                    a + 1
                )));
            }
        }
        Ok(out)
    }

    pub fn spacing(&self) -> Result<Spacing> {
        Spacing::new(
            self.pixdim[1].abs() as f64,
            self.pixdim[2].abs() as f64,
            self.pixdim[3].abs() as f64,
        )
        .map_err(|e| Error::Format(format!("bad pixdim: {e}")))
    }

    fn parse<B: ByteOrder>(buf: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(buf);
        let mut h = NiftiHeader::for_grid([1, 1, 1], Spacing::default());
        r.set_position(39);
        h.dim_info = r.read_u8()?;
        r.read_i16_into::<B>(&mut h.dim)?;
        r.read_f32_into::<B>(&mut h.intent_p)?;
        h.intent_code = r.read_i16::<B>()?;
        h.datatype = r.read_i16::<B>()?;
        h.bitpix = r.read_i16::<B>()?;
        h.slice_start = r.read_i16::<B>()?;
        r.read_f32_into::<B>(&mut h.pixdim)?;
        h.vox_offset = r.read_f32::<B>()?;
        h.scl_slope = r.read_f32::<B>()?;
        h.scl_inter = r.read_f32::<B>()?;
        h.slice_end = r.read_i16::<B>()?;
        h.slice_code = r.read_u8()?;
        h.xyzt_units = r.read_u8()?;
        h.cal_max = r.read_f32::<B>()?;
        h.cal_min = r.read_f32::<B>()?;
        h.slice_duration = r.read_f32::<B>()?;
        h.toffset = r.read_f32::<B>()?;
        r.set_position(148);
        r.read_exact(&mut h.descrip)?;
        r.read_exact(&mut h.aux_file)?;
        h.qform_code = r.read_i16::<B>()?;
        h.sform_code = r.read_i16::<B>()?;
        r.read_f32_into::<B>(&mut h.quatern)?;
        r.read_f32_into::<B>(&mut h.qoffset)?;
        r.read_f32_into::<B>(&mut h.srow_x)?;
        r.read_f32_into::<B>(&mut h.srow_y)?;
        r.read_f32_into::<B>(&mut h.srow_z)?;
        r.read_exact(&mut h.intent_name)?;
        r.read_exact(&mut h.magic)?;
        if &h.magic != b"n+1\0" && &h.magic != b"ni1\0" {
            return Err(Error::Format(format!("bad magic {:?}", h.magic)));
        }
        if &h.magic == b"ni1\0" {
            return Err(Error::Format("two-file (.hdr/.img) NIfTI is not supported".into()));
        }
        Ok(h)
    }

    fn to_bytes(&self) -> Vec<u8> {
        type L = LittleEndian;
        let mut w: Vec<u8> = Vec::with_capacity(HEADER_SIZE + 4);
        let mut put = |f: &mut dyn FnMut(&mut Vec<u8>) -> std::io::Result<()>| {
            f(&mut w).expect("writing to a Vec cannot fail")
        };
        put(&mut |w| w.write_i32::<L>(HEADER_SIZE as i32));
        put(&mut |w| w.write_all(&[0u8; 35]));
        put(&mut |w| w.write_u8(self.dim_info));
        put(&mut |w| self.dim.iter().try_for_each(|&v| w.write_i16::<L>(v)));
        put(&mut |w| self.intent_p.iter().try_for_each(|&v| w.write_f32::<L>(v)));
        put(&mut |w| w.write_i16::<L>(self.intent_code));
        put(&mut |w| w.write_i16::<L>(self.datatype));
        put(&mut |w| w.write_i16::<L>(self.bitpix));
        put(&mut |w| w.write_i16::<L>(self.slice_start));
        put(&mut |w| self.pixdim.iter().try_for_each(|&v| w.write_f32::<L>(v)));
        put(&mut |w| w.write_f32::<L>(self.vox_offset));
        put(&mut |w| w.write_f32::<L>(self.scl_slope));
        put(&mut |w| w.write_f32::<L>(self.scl_inter));
        put(&mut |w| w.write_i16::<L>(self.slice_end));
        put(&mut |w| w.write_u8(self.slice_code));
        put(&mut |w| w.write_u8(self.xyzt_units));
        put(&mut |w| w.write_f32::<L>(self.cal_max));
        put(&mut |w| w.write_f32::<L>(self.cal_min));
        put(&mut |w| w.write_f32::<L>(self.slice_duration));
        put(&mut |w| w.write_f32::<L>(self.toffset));
        put(&mut |w| w.write_all(&[0u8; 8])); // glmax, glmin
        put(&mut |w| w.write_all(&self.descrip));
        put(&mut |w| w.write_all(&self.aux_file));
        put(&mut |w| w.write_i16::<L>(self.qform_code));
        put(&mut |w| w.write_i16::<L>(self.sform_code));
        put(&mut |w| self.quatern.iter().try_for_each(|&v| w.write_f32::<L>(v)));
        put(&mut |w| self.qoffset.iter().try_for_each(|&v| w.write_f32::<L>(v)));
        put(&mut |w| self.srow_x.iter().try_for_each(|&v| w.write_f32::<L>(v)));
        put(&mut |w| self.srow_y.iter().try_for_each(|&v| w.write_f32::<L>(v)));
        put(&mut |w| self.srow_z.iter().try_for_each(|&v| w.write_f32::<L>(v)));
        put(&mut |w| w.write_all(&self.intent_name));
        put(&mut |w| w.write_all(&self.magic));
        debug_assert_eq!(w.len(), HEADER_SIZE);
        w.extend_from_slice(&[0u8; 4]); // empty extension flag
        w
    }

    /// Copy of this header describing `dims`/`spacing` stored as `datatype`.
    fn retyped(&self, dims: [usize; 3], spacing: Spacing, datatype: i16, bitpix: i16) -> Self {
        let mut h = self.clone();
        h.dim = [3, 1, 1, 1, 1, 1, 1, 1];
        for (slot, &d) in h.dim[1..4].iter_mut().zip(&dims) {
            *slot = d as i16;
        }
        for (slot, s) in h.pixdim[1..4].iter_mut().zip(spacing.as_array()) {
            *slot = s as f32;
        }
        h.datatype = datatype;
        h.bitpix = bitpix;
        h.vox_offset = SINGLE_FILE_OFFSET;
        h.scl_slope = 1.0;
        h.scl_inter = 0.0;
        h.magic = *b"n+1\0";
        h
    }
}

/// How mask files with values other than 0/1 are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelMapping {
    /// Reject anything outside {0, 1}.
    #[default]
    Strict,
    /// Any non-zero label becomes 1.
    NonZero,
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

fn is_raw(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("agv"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut raw)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Format(format!("gzip: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    if is_gz(path) {
        // GzEncoder writes mtime 0 and no file name, so output is reproducible
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(bytes)?;
        enc.finish()?.flush()?;
    } else {
        let mut file = file;
        file.write_all(bytes)?;
        file.flush()?;
    }
    Ok(())
}

/// Header plus voxel values as f64 in x-fastest order.
fn decode_nifti(bytes: &[u8]) -> Result<(NiftiHeader, Vec<f64>)> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::Format(format!(
            "file has {} bytes, shorter than a NIfTI-1 header",
            bytes.len()
        )));
    }
    let little = LittleEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32;
    let big = BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32;
    let header = match (little, big) {
        (true, _) => NiftiHeader::parse::<LittleEndian>(bytes)?,
        (_, true) => NiftiHeader::parse::<BigEndian>(bytes)?,
        _ => return Err(Error::Format("sizeof_hdr is not 348".into())),
    };
    let dims = header.dims()?;
    let n: usize = dims.iter().product();
    let offset = header.vox_offset.max(HEADER_SIZE as f32) as usize;
    let payload = bytes
        .get(offset..)
        .ok_or_else(|| Error::Format("voxel offset past end of file".into()))?;
    let values = if little {
        decode_payload::<LittleEndian>(payload, header.datatype, n)?
    } else {
        decode_payload::<BigEndian>(payload, header.datatype, n)?
    };
    let (slope, inter) = (header.scl_slope as f64, header.scl_inter as f64);
    let values = if slope != 0.0 && !(slope == 1.0 && inter == 0.0) {
        values.into_iter().map(|v| v * slope + inter).collect()
    } else {
        values
    };
    Ok((header, values))
}

fn decode_payload<B: ByteOrder>(payload: &[u8], datatype: i16, n: usize) -> Result<Vec<f64>> {
    let width = match datatype {
        DT_UINT8 | DT_INT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(Error::Format(format!("unsupported datatype {other}"))),
    };
    if payload.len() < n * width {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            n * width
        )));
    }
    let chunks = payload[..n * width].chunks_exact(width);
    Ok(match datatype {
        DT_UINT8 => chunks.map(|c| c[0] as f64).collect(),
        DT_INT8 => chunks.map(|c| c[0] as i8 as f64).collect(),
        DT_INT16 => chunks.map(|c| B::read_i16(c) as f64).collect(),
        DT_UINT16 => chunks.map(|c| B::read_u16(c) as f64).collect(),
        DT_INT32 => chunks.map(|c| B::read_i32(c) as f64).collect(),
        DT_UINT32 => chunks.map(|c| B::read_u32(c) as f64).collect(),
        DT_FLOAT32 => chunks.map(|c| B::read_f32(c) as f64).collect(),
        _ => chunks.map(B::read_f64).collect(),
    })
}

fn decode_raw(bytes: &[u8]) -> Result<(u8, [usize; 3], Spacing, &[u8])> {
    if bytes.len() < 8 + 1 + 24 + 24 || &bytes[..8] != RAW_MAGIC {
        return Err(Error::Format("not a raw volume file".into()));
    }
    let kind = bytes[8];
    let mut dims = [0usize; 3];
    let mut s = [0f64; 3];
    for a in 0..3 {
        dims[a] = LittleEndian::read_u64(&bytes[9 + 8 * a..]) as usize;
        s[a] = LittleEndian::read_f64(&bytes[33 + 8 * a..]);
    }
    let spacing = Spacing::new(s[0], s[1], s[2]).map_err(|e| Error::Format(e.to_string()))?;
    Ok((kind, dims, spacing, &bytes[57..]))
}

fn encode_raw(kind: u8, dims: [usize; 3], spacing: Spacing, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(57 + payload.len());
    out.extend_from_slice(RAW_MAGIC);
    out.push(kind);
    for d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for s in spacing.as_array() {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(payload);
    out
}

/// Reads a scalar volume; any supported datatype is widened to f64.
pub fn read_scalar(path: impl AsRef<Path>) -> Result<(ScalarVolume, NiftiHeader)> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if is_raw(path) {
        let (kind, dims, spacing, payload) = decode_raw(&bytes)?;
        let n: usize = dims.iter().product();
        let data: Vec<f64> = match kind {
            0 => payload.get(..n).ok_or_else(short)?.iter().map(|&v| v as f64).collect(),
            1 => payload
                .get(..8 * n)
                .ok_or_else(short)?
                .chunks_exact(8)
                .map(LittleEndian::read_f64)
                .collect(),
            k => return Err(Error::Format(format!("unknown raw kind {k}"))),
        };
        let vol = ScalarVolume::new(dims, spacing, data).map_err(|e| Error::Format(e.to_string()))?;
        return Ok((vol, NiftiHeader::for_grid(dims, spacing)));
    }
    let (header, values) = decode_nifti(&bytes)?;
    let vol = ScalarVolume::new(header.dims()?, header.spacing()?, values)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((vol, header))
}

fn short() -> Error {
    Error::Format("payload shorter than dims".into())
}

pub fn read_mask(
    path: impl AsRef<Path>,
    labels: LabelMapping,
) -> Result<(BinaryMask, NiftiHeader)> {
    let (vol, header) = read_scalar(path)?;
    let data = vol
        .data()
        .iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(0u8)
            } else if v == 1.0 || labels == LabelMapping::NonZero {
                Ok(1u8)
            } else {
                Err(Error::NonBinaryMask(v))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok((BinaryMask::new(vol.dims(), vol.spacing(), data)?, header))
}

/// Writes float32 voxels. `template` supplies the affine and other header
/// fields; dims, spacing and datatype always come from `vol`.
pub fn write_scalar(
    path: impl AsRef<Path>,
    vol: &ScalarVolume,
    template: Option<&NiftiHeader>,
) -> Result<()> {
    let path = path.as_ref();
    if is_raw(path) {
        let payload: Vec<u8> = vol.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        return write_bytes(path, &encode_raw(1, vol.dims(), vol.spacing(), &payload));
    }
    let header = template
        .cloned()
        .unwrap_or_else(|| NiftiHeader::for_grid(vol.dims(), vol.spacing()))
        .retyped(vol.dims(), vol.spacing(), DT_FLOAT32, 32);
    let mut bytes = header.to_bytes();
    bytes.reserve(vol.len() * 4);
    for &v in vol.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    write_bytes(path, &bytes)
}

/// Writes unsigned 8-bit voxels.
pub fn write_mask(
    path: impl AsRef<Path>,
    mask: &BinaryMask,
    template: Option<&NiftiHeader>,
) -> Result<()> {
    let path = path.as_ref();
    if is_raw(path) {
        return write_bytes(path, &encode_raw(0, mask.dims(), mask.spacing(), mask.data()));
    }
    let header = template
        .cloned()
        .unwrap_or_else(|| NiftiHeader::for_grid(mask.dims(), mask.spacing()))
        .retyped(mask.dims(), mask.spacing(), DT_UINT8, 8);
    let mut bytes = header.to_bytes();
    bytes.extend_from_slice(mask.data());
    write_bytes(path, &bytes)
}
