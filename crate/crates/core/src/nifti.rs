//! NIfTI-1 single-file reader and writer.
//!
//! Accepts `.nii` and gzip-compressed volumes (detected by the 0x1f 0x8b
//! magic, not the extension). Both little- and big-endian headers are
//! handled; `sizeof_hdr == 348` decides the byte order. Geometry precedence
//! on load: sform when `sform_code > 0`, else qform when `qform_code > 0`,
//! else identity direction with pixdim spacing.

use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::bufread::MultiGzDecoder;

use crate::error::{Error, Result};
use crate::grid::{VoxelData, VoxelGrid, IDENTITY_DIRECTION};

pub const HEADER_SIZE: usize = 348;
const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

mod offset {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const QUATERN_C: usize = 260;
    pub const QUATERN_D: usize = 264;
    pub const QOFFSET_X: usize = 268;
    pub const SROW_X: usize = 280;
    pub const SROW_Y: usize = 296;
    pub const SROW_Z: usize = 312;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Datatype {
    UInt8,
    Int16,
    Int32,
    Float32,
    Float64,
    UInt16,
}

impl Datatype {
    fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Datatype::UInt8),
            4 => Ok(Datatype::Int16),
            8 => Ok(Datatype::Int32),
            16 => Ok(Datatype::Float32),
            64 => Ok(Datatype::Float64),
            512 => Ok(Datatype::UInt16),
            other => Err(Error::UnsupportedDatatype(other)),
        }
    }

    fn code(self) -> i16 {
        match self {
            Datatype::UInt8 => 2,
            Datatype::Int16 => 4,
            Datatype::Int32 => 8,
            Datatype::Float32 => 16,
            Datatype::Float64 => 64,
            Datatype::UInt16 => 512,
        }
    }

    fn byte_size(self) -> usize {
        match self {
            Datatype::UInt8 => 1,
            Datatype::Int16 | Datatype::UInt16 => 2,
            Datatype::Int32 | Datatype::Float32 => 4,
            Datatype::Float64 => 8,
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Datatype::Float32 | Datatype::Float64)
    }
}

#[derive(Debug, Clone)]
struct Header {
    dims: [usize; 3],
    datatype: Datatype,
    pixdim: [f32; 8],
    vox_offset: usize,
    scl_slope: f32,
    scl_inter: f32,
    qform_code: i16,
    sform_code: i16,
    quatern: [f32; 3],
    qoffset: [f32; 3],
    srow: [[f32; 4]; 3],
}

fn read_i16(bytes: &[u8], at: usize, endian: Endian) -> i16 {
    match endian {
        Endian::Little => LittleEndian::read_i16(&bytes[at..]),
        Endian::Big => BigEndian::read_i16(&bytes[at..]),
    }
}

fn read_f32(bytes: &[u8], at: usize, endian: Endian) -> f32 {
    match endian {
        Endian::Little => LittleEndian::read_f32(&bytes[at..]),
        Endian::Big => BigEndian::read_f32(&bytes[at..]),
    }
}

fn parse_header(bytes: &[u8]) -> Result<(Header, Endian)> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::NotNifti(format!(
            "file is {} bytes, shorter than the {HEADER_SIZE}-byte header",
            bytes.len()
        )));
    }
    let endian = match LittleEndian::read_i32(&bytes[offset::SIZEOF_HDR..]) {
        348 => Endian::Little,
        _ if BigEndian::read_i32(&bytes[offset::SIZEOF_HDR..]) == 348 => Endian::Big,
        other => {
            return Err(Error::NotNifti(format!(
                "sizeof_hdr is {other}, expected 348 (NIfTI-2 and ANALYZE are not supported)"
            )))
        }
    };
    let magic = &bytes[offset::MAGIC..offset::MAGIC + 4];
    if magic == MAGIC_PAIR {
        return Err(Error::NotNifti(
            "hdr/img pair files (magic \"ni1\") are not supported".into(),
        ));
    }
    if magic != MAGIC_SINGLE {
        return Err(Error::NotNifti(format!("bad magic {magic:?}")));
    }

    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = read_i16(bytes, offset::DIM + 2 * i, endian);
    }
    let mut ndim = dim[0] as usize;
    if ndim == 0 || ndim > 7 {
        return Err(Error::DimensionError(format!("dim[0] = {}", dim[0])));
    }
    // Squeeze trailing singleton dimensions (dim[0]=4 with nt=1 is a common
    // exporter quirk).
    while ndim > 3 && dim[ndim] == 1 {
        ndim -= 1;
    }
    if ndim != 3 {
        return Err(Error::DimensionError(format!(
            "volume is {ndim}-dimensional after squeezing trailing singleton dims; expected 3"
        )));
    }
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let d = dim[a + 1];
        if d < 1 {
            return Err(Error::DimensionError(format!("dim[{}] = {d}", a + 1)));
        }
        dims[a] = d as usize;
    }

    let datatype = Datatype::from_code(read_i16(bytes, offset::DATATYPE, endian))?;

    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = read_f32(bytes, offset::PIXDIM + 4 * i, endian);
    }

    let vox_offset_f = read_f32(bytes, offset::VOX_OFFSET, endian);
    let vox_offset = if vox_offset_f.is_finite() && vox_offset_f >= HEADER_SIZE as f32 {
        vox_offset_f.round() as usize
    } else {
        HEADER_SIZE + 4
    };

    let header = Header {
        dims,
        datatype,
        pixdim,
        vox_offset,
        scl_slope: read_f32(bytes, offset::SCL_SLOPE, endian),
        scl_inter: read_f32(bytes, offset::SCL_INTER, endian),
        qform_code: read_i16(bytes, offset::QFORM_CODE, endian),
        sform_code: read_i16(bytes, offset::SFORM_CODE, endian),
        quatern: [
            read_f32(bytes, offset::QUATERN_B, endian),
            read_f32(bytes, offset::QUATERN_C, endian),
            read_f32(bytes, offset::QUATERN_D, endian),
        ],
        qoffset: [
            read_f32(bytes, offset::QOFFSET_X, endian),
            read_f32(bytes, offset::QOFFSET_X + 4, endian),
            read_f32(bytes, offset::QOFFSET_X + 8, endian),
        ],
        srow: [
            read_srow(bytes, offset::SROW_X, endian),
            read_srow(bytes, offset::SROW_Y, endian),
            read_srow(bytes, offset::SROW_Z, endian),
        ],
    };
    Ok((header, endian))
}

fn read_srow(bytes: &[u8], at: usize, endian: Endian) -> [f32; 4] {
    let mut row = [0f32; 4];
    for (i, v) in row.iter_mut().enumerate() {
        *v = read_f32(bytes, at + 4 * i, endian);
    }
    row
}

/// Spacing from pixdim, sanitized: absolute value, zeros replaced by 1 mm.
fn spacing_from_pixdim(pixdim: &[f32; 8]) -> [f64; 3] {
    let mut spacing = [1.0f64; 3];
    for a in 0..3 {
        let p = pixdim[a + 1].abs() as f64;
        if p.is_finite() && p > 0.0 {
            spacing[a] = p;
        }
    }
    spacing
}

/// (spacing, origin, direction) decoded from the header forms.
type Geometry = ([f64; 3], [f64; 3], [[f64; 3]; 3]);

fn geometry(header: &Header) -> Result<Geometry> {
    let spacing = spacing_from_pixdim(&header.pixdim);
    if header.sform_code > 0 {
        let mut direction = [[0.0; 3]; 3];
        for c in 0..3 {
            let col = [
                header.srow[0][c] as f64,
                header.srow[1][c] as f64,
                header.srow[2][c] as f64,
            ];
            let norm = (col[0] * col[0] + col[1] * col[1] + col[2] * col[2]).sqrt();
            if norm == 0.0 {
                return Err(Error::InvalidGrid(format!("sform column {c} is zero")));
            }
            for (row, &value) in direction.iter_mut().zip(&col) {
                row[c] = value / norm;
            }
        }
        let origin = [
            header.srow[0][3] as f64,
            header.srow[1][3] as f64,
            header.srow[2][3] as f64,
        ];
        Ok((spacing, origin, direction))
    } else if header.qform_code > 0 {
        let direction = quaternion_direction(header.quatern, header.pixdim[0]);
        let origin = [
            header.qoffset[0] as f64,
            header.qoffset[1] as f64,
            header.qoffset[2] as f64,
        ];
        Ok((spacing, origin, direction))
    } else {
        Ok((spacing, [0.0; 3], IDENTITY_DIRECTION))
    }
}

fn quaternion_direction(quatern: [f32; 3], qfac_raw: f32) -> [[f64; 3]; 3] {
    let b = quatern[0] as f64;
    let c = quatern[1] as f64;
    let d = quatern[2] as f64;
    let a = (1.0 - b * b - c * c - d * d).max(0.0).sqrt();
    let qfac = if qfac_raw < 0.0 { -1.0 } else { 1.0 };
    [
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            qfac * 2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            qfac * 2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            qfac * (a * a + d * d - b * b - c * c),
        ],
    ]
}

/// Load a NIfTI-1 volume from `.nii` or gzip-compressed bytes.
///
/// Integer datatypes with no rescaling and no negative voxels load as label
/// grids; everything else loads as scalar. `scl_slope`/`scl_inter` are
/// applied when the slope is nonzero.
pub fn load_nifti(path: impl AsRef<Path>) -> Result<VoxelGrid> {
    let path = path.as_ref();
    let bytes = read_maybe_gzipped(path)?;
    load_nifti_bytes(&bytes).map_err(|e| annotate_path(e, path))
}

fn annotate_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, path: None } => Error::io(source, path),
        other => other,
    }
}

fn read_maybe_gzipped(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(e, path))?;
    if raw.len() >= 2 && raw[..2] == GZIP_MAGIC {
        let mut decoder = MultiGzDecoder::new(raw.as_slice());
        let mut out = Vec::new();
        decoder
            .read_to_end(&mut out)
            .map_err(|e| Error::io(e, path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Parse an in-memory (already decompressed) NIfTI-1 byte stream.
pub fn load_nifti_bytes(bytes: &[u8]) -> Result<VoxelGrid> {
    let (header, endian) = parse_header(bytes)?;
    let n = header.dims[0] * header.dims[1] * header.dims[2];
    let body_len = n
        .checked_mul(header.datatype.byte_size())
        .ok_or_else(|| Error::DimensionError(format!("body size overflow for {:?}", header.dims)))?;
    let start = header.vox_offset;
    let end = start
        .checked_add(body_len)
        .ok_or_else(|| Error::DimensionError("body extent overflow".into()))?;
    if bytes.len() < end {
        return Err(Error::Io {
            source: std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!(
                    "voxel body truncated: need {} bytes, file has {}",
                    end,
                    bytes.len()
                ),
            ),
            path: None,
        });
    }
    let body = &bytes[start..end];

    let scale = if header.scl_slope != 0.0 && header.scl_slope.is_finite() {
        Some((header.scl_slope as f64, header.scl_inter as f64))
    } else {
        None
    };

    let raw = decode_values(body, header.datatype, endian, n);
    let as_label = header.datatype.is_integer()
        && matches!(scale, None | Some((1.0, 0.0)))
        && raw.iter().all(|&v| v >= 0.0);

    let data = if as_label {
        VoxelData::Label(raw.iter().map(|&v| v as i32).collect())
    } else {
        match scale {
            Some((slope, inter)) => {
                VoxelData::Scalar(raw.iter().map(|&v| (slope * v + inter) as f32).collect())
            }
            None => VoxelData::Scalar(raw.iter().map(|&v| v as f32).collect()),
        }
    };

    let (spacing, origin, direction) = geometry(&header)?;
    VoxelGrid::new(header.dims, spacing, origin, direction, data)
}

fn decode_values(body: &[u8], datatype: Datatype, endian: Endian, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    match datatype {
        Datatype::UInt8 => out.extend(body.iter().map(|&b| b as f64)),
        Datatype::Int16 => {
            for chunk in body.chunks_exact(2) {
                let v = match endian {
                    Endian::Little => LittleEndian::read_i16(chunk),
                    Endian::Big => BigEndian::read_i16(chunk),
                };
                out.push(v as f64);
            }
        }
        Datatype::UInt16 => {
            for chunk in body.chunks_exact(2) {
                let v = match endian {
                    Endian::Little => LittleEndian::read_u16(chunk),
                    Endian::Big => BigEndian::read_u16(chunk),
                };
                out.push(v as f64);
            }
        }
        Datatype::Int32 => {
            for chunk in body.chunks_exact(4) {
                let v = match endian {
                    Endian::Little => LittleEndian::read_i32(chunk),
                    Endian::Big => BigEndian::read_i32(chunk),
                };
                out.push(v as f64);
            }
        }
        Datatype::Float32 => {
            for chunk in body.chunks_exact(4) {
                let v = match endian {
                    Endian::Little => LittleEndian::read_f32(chunk),
                    Endian::Big => BigEndian::read_f32(chunk),
                };
                out.push(v as f64);
            }
        }
        Datatype::Float64 => {
            for chunk in body.chunks_exact(8) {
                let v = match endian {
                    Endian::Little => LittleEndian::read_f64(chunk),
                    Endian::Big => BigEndian::read_f64(chunk),
                };
                out.push(v);
            }
        }
    }
    out
}

/// Write a volume as NIfTI-1, little-endian, gzipped when the path ends in
/// `.gz`. Scalar grids store as float32, label grids as uint8 when all
/// values fit, else int32.
pub fn write_nifti(grid: &VoxelGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = nifti_bytes(grid);
    let gzip = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    if gzip {
        let file = std::fs::File::create(path).map_err(|e| Error::io(e, path))?;
        let mut encoder =
            flate2::write::GzEncoder::new(std::io::BufWriter::new(file), flate2::Compression::fast());
        std::io::Write::write_all(&mut encoder, &bytes).map_err(|e| Error::io(e, path))?;
        encoder.finish().map_err(|e| Error::io(e, path))?;
    } else {
        std::fs::write(path, &bytes).map_err(|e| Error::io(e, path))?;
    }
    Ok(())
}

/// Serialize a volume to uncompressed NIfTI-1 bytes.
pub fn nifti_bytes(grid: &VoxelGrid) -> Vec<u8> {
    let datatype = match grid.data() {
        VoxelData::Scalar(_) => Datatype::Float32,
        VoxelData::Label(values) => {
            if values.iter().all(|&v| v <= u8::MAX as i32) {
                Datatype::UInt8
            } else {
                Datatype::Int32
            }
        }
    };

    let vox_offset = HEADER_SIZE + 4; // header + empty extension flag
    let mut bytes = vec![0u8; vox_offset + grid.len() * datatype.byte_size()];

    LittleEndian::write_i32(&mut bytes[offset::SIZEOF_HDR..], HEADER_SIZE as i32);
    bytes[38] = b'r';
    let dims = grid.dims();
    LittleEndian::write_i16(&mut bytes[offset::DIM..], 3);
    for a in 0..3 {
        LittleEndian::write_i16(&mut bytes[offset::DIM + 2 * (a + 1)..], dims[a] as i16);
    }
    for a in 4..8 {
        LittleEndian::write_i16(&mut bytes[offset::DIM + 2 * a..], 1);
    }
    LittleEndian::write_i16(&mut bytes[offset::DATATYPE..], datatype.code());
    LittleEndian::write_i16(&mut bytes[offset::BITPIX..], (datatype.byte_size() * 8) as i16);
    let spacing = grid.spacing();
    LittleEndian::write_f32(&mut bytes[offset::PIXDIM..], 1.0); // qfac
    for a in 0..3 {
        LittleEndian::write_f32(&mut bytes[offset::PIXDIM + 4 * (a + 1)..], spacing[a] as f32);
    }
    LittleEndian::write_f32(&mut bytes[offset::VOX_OFFSET..], vox_offset as f32);
    LittleEndian::write_f32(&mut bytes[offset::SCL_SLOPE..], 1.0);
    LittleEndian::write_f32(&mut bytes[offset::SCL_INTER..], 0.0);
    bytes[offset::XYZT_UNITS] = 2; // NIFTI_UNITS_MM
    let descrip = b"datadiet";
    bytes[offset::DESCRIP..offset::DESCRIP + descrip.len()].copy_from_slice(descrip);
    LittleEndian::write_i16(&mut bytes[offset::QFORM_CODE..], 0);
    LittleEndian::write_i16(&mut bytes[offset::SFORM_CODE..], 1);
    let direction = grid.direction();
    let origin = grid.origin();
    for (r, base) in [offset::SROW_X, offset::SROW_Y, offset::SROW_Z]
        .into_iter()
        .enumerate()
    {
        for c in 0..3 {
            LittleEndian::write_f32(
                &mut bytes[base + 4 * c..],
                (direction[r][c] * spacing[c]) as f32,
            );
        }
        LittleEndian::write_f32(&mut bytes[base + 12..], origin[r] as f32);
    }
    bytes[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(MAGIC_SINGLE);
    // bytes[HEADER_SIZE..HEADER_SIZE+4] stays zero: no extensions.

    let body = &mut bytes[vox_offset..];
    match grid.data() {
        VoxelData::Scalar(values) => {
            for (chunk, &v) in body.chunks_exact_mut(4).zip(values) {
                LittleEndian::write_f32(chunk, v);
            }
        }
        VoxelData::Label(values) => match datatype {
            Datatype::UInt8 => {
                for (b, &v) in body.iter_mut().zip(values) {
                    *b = v as u8;
                }
            }
            _ => {
                for (chunk, &v) in body.chunks_exact_mut(4).zip(values) {
                    LittleEndian::write_i32(chunk, v);
                }
            }
        },
    }
    bytes
}
