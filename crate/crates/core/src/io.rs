//! Binary containers for fields, sinograms and their derived products.
//!
//! Every container is an 8-byte ASCII magic, one line of compact JSON
//! terminated by `\n`, then little-endian `f64` samples. Field payloads are
//! row-major with the last axis fastest; sinogram payloads are
//! detector-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};
use crate::sinogram::{Sinogram, SinogramKind};
use crate::surface::{ObservationSurface, SurfaceSpec};

pub const FIELD_MAGIC: &[u8; 8] = b"TATFLD01";
pub const SINOGRAM_MAGIC: &[u8; 8] = b"TATSIN01";

/// Optional metadata identifying the run that produced a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub toolkit_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

pub fn write_container<H: Serialize>(path: &Path, magic: &[u8; 8], header: &H, payload: &[f64]) -> Result<()> {
    let bytes = encode_container(magic, header, payload)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn encode_container<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[f64]) -> Result<Vec<u8>> {
    let json = serde_json::to_string(header).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let mut out = Vec::with_capacity(8 + json.len() + 1 + 8 * payload.len());
    out.write_all(magic)?;
    out.write_all(json.as_bytes())?;
    out.push(b'\n');
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Split a container into its parsed header and payload. The payload length
/// is checked by the caller, which knows how many samples to expect.
pub fn decode_container<H: DeserializeOwned>(bytes: &[u8], magic: &[u8; 8]) -> Result<(H, Vec<f64>)> {
    if bytes.len() < 8 || &bytes[..8] != magic {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned();
        return Err(Error::BadMagic { expected: String::from_utf8_lossy(magic).into_owned(), found });
    }
    let rest = &bytes[8..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::MalformedHeader("header line is not newline-terminated".into()))?;
    let text = std::str::from_utf8(&rest[..nl]).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let header: H = serde_json::from_str(text).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let body = &rest[nl + 1..];
    let payload = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, payload))
}

fn check_payload(payload: &[f64], expected: usize, trailing: usize) -> Result<()> {
    if payload.len() < expected || (payload.len() == expected && trailing != 0) {
        return Err(Error::Truncated { expected, found: payload.len() });
    }
    if payload.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "payload holds {} values, header declares {expected}",
            payload.len()
        )));
    }
    if let Some(i) = payload.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

fn payload_trailing_bytes(bytes: &[u8]) -> usize {
    match bytes.iter().skip(8).position(|&b| b == b'\n') {
        Some(nl) => (bytes.len() - 8 - nl - 1) % 8,
        None => 0,
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldHeader {
    dim: usize,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

pub fn encode_field(field: &ScalarField, magic: &[u8; 8], tag: Option<&str>, prov: Option<&Provenance>) -> Result<Vec<u8>> {
    field.grid.validate()?;
    if let Some(i) = field.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let h = FieldHeader {
        dim: field.grid.dim(),
        shape: field.grid.shape.clone(),
        spacing: field.grid.spacing.clone(),
        origin: field.grid.origin.clone(),
        name: field.name.clone(),
        tag: tag.map(str::to_owned),
        provenance: prov.cloned(),
    };
    encode_container(magic, &h, &field.values)
}

/// Returns the field plus the optional tag recorded in its header.
pub fn decode_field(bytes: &[u8], magic: &[u8; 8]) -> Result<(ScalarField, Option<String>)> {
    let (h, payload): (FieldHeader, Vec<f64>) = decode_container(bytes, magic)?;
    if h.dim != h.shape.len() {
        return Err(Error::MalformedHeader(format!("dim {} but shape has {} axes", h.dim, h.shape.len())));
    }
    let grid = GridSpec { shape: h.shape, spacing: h.spacing, origin: h.origin };
    grid.validate()?;
    check_payload(&payload, grid.len(), payload_trailing_bytes(bytes))?;
    Ok((ScalarField { grid, values: payload, name: h.name }, h.tag))
}

pub fn write_field(field: &ScalarField, path: &Path) -> Result<()> {
    write_field_with(field, path, None)
}

pub fn write_field_with(field: &ScalarField, path: &Path, prov: Option<&Provenance>) -> Result<()> {
    fs::write(path, encode_field(field, FIELD_MAGIC, None, prov)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<ScalarField> {
    Ok(decode_field(&fs::read(path)?, FIELD_MAGIC)?.0)
}

#[derive(Debug, Serialize, Deserialize)]
struct SinogramHeader {
    #[serde(flatten)]
    kind: SinogramKind,
    n_detectors: usize,
    n_times: usize,
    dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    surface: SurfaceSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

pub fn encode_sinogram(
    s: &Sinogram,
    magic: &[u8; 8],
    extra: Option<serde_json::Value>,
    prov: Option<&Provenance>,
) -> Result<Vec<u8>> {
    s.validate()?;
    let h = SinogramHeader {
        kind: s.kind,
        n_detectors: s.n_detectors(),
        n_times: s.n_times,
        dt: s.dt,
        c: s.sound_speed,
        surface: s.surface.spec.clone(),
        extra,
        provenance: prov.cloned(),
    };
    encode_container(magic, &h, &s.values)
}

pub fn decode_sinogram(bytes: &[u8], magic: &[u8; 8]) -> Result<(Sinogram, Option<serde_json::Value>)> {
    let (h, payload): (SinogramHeader, Vec<f64>) = decode_container(bytes, magic)?;
    let surface = ObservationSurface::from_spec(h.surface)?;
    if surface.len() != h.n_detectors {
        return Err(Error::MalformedHeader(format!(
            "surface generates {} detectors, header declares {}",
            surface.len(),
            h.n_detectors
        )));
    }
    check_payload(&payload, h.n_detectors * h.n_times, payload_trailing_bytes(bytes))?;
    let s = Sinogram::new(surface, h.dt, h.n_times, payload, h.kind, h.c)?;
    Ok((s, h.extra))
}

pub fn write_sinogram(s: &Sinogram, path: &Path) -> Result<()> {
    write_sinogram_with(s, path, None)
}

pub fn write_sinogram_with(s: &Sinogram, path: &Path, prov: Option<&Provenance>) -> Result<()> {
    fs::write(path, encode_sinogram(s, SINOGRAM_MAGIC, None, prov)?)?;
    Ok(())
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    Ok(decode_sinogram(&fs::read(path)?, SINOGRAM_MAGIC)?.0)
}

/// 8-bit binary PGM of a 2D field, or of the central slice (first axis)
/// of a 3D one, after min-max normalization.
pub fn encode_pgm(field: &ScalarField) -> Vec<u8> {
    let g = &field.grid;
    let s = g.shape3();
    let (rows, cols, offset, stride_r, stride_c) = if g.dim() == 2 {
        (s[0], s[1], 0usize, s[1], 1usize)
    } else {
        let mid = s[0] / 2;
        (s[1], s[2], mid * s[1] * s[2], s[2], 1usize)
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in 0..rows {
        for c in 0..cols {
            let v = field.values[offset + r * stride_r + c * stride_c];
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    for r in 0..rows {
        for c in 0..cols {
            let v = field.values[offset + r * stride_r + c * stride_c];
            out.push((255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

pub fn write_pgm(field: &ScalarField, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(field))?;
    Ok(())
}
