//! Grid exchange formats: the binary GWG1 layout, ESRI ASCII grids, and zone
//! legend CSV files.
//!
//! GWG1 is little-endian: the magic `GWG1`, six `f64` header values
//! (lon_min, lon_max, lat_min, lat_max, cell_size, nodata), `u32` n_rows and
//! n_cols, a `u8` dtype (0 = f32, 1 = f64), then row-major values, top row
//! first.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridSpec, Raster, ZoneInfo, ZoneMap};
use crate::error::{Error, Result};

pub const GWG1_MAGIC: &[u8; 4] = b"GWG1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }
}

pub fn encode_gwg1(raster: &Raster, dtype: DType) -> Vec<u8> {
    let s = &raster.spec;
    let width = match dtype {
        DType::F32 => 4,
        DType::F64 => 8,
    };
    let mut buf = Vec::with_capacity(4 + 48 + 9 + raster.values.len() * width);
    buf.extend_from_slice(GWG1_MAGIC);
    for v in [
        s.lon_min,
        s.lon_max,
        s.lat_min,
        s.lat_max,
        s.cell_size,
        s.nodata,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(s.n_rows as u32).to_le_bytes());
    buf.extend_from_slice(&(s.n_cols as u32).to_le_bytes());
    buf.push(dtype.code());
    match dtype {
        DType::F32 => raster
            .values
            .iter()
            .for_each(|v| buf.extend_from_slice(&(*v as f32).to_le_bytes())),
        DType::F64 => raster
            .values
            .iter()
            .for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
    }
    buf
}

pub fn decode_gwg1(bytes: &[u8], origin: &Path) -> Result<Raster> {
    let bad = |msg: &str| Error::format(origin, msg);
    if bytes.len() < 61 || &bytes[..4] != GWG1_MAGIC {
        return Err(bad("missing GWG1 magic or truncated header"));
    }
    let f = |i: usize| {
        let at = 4 + 8 * i;
        f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8-byte slice"))
    };
    let u = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"));
    let spec = GridSpec {
        lon_min: f(0),
        lon_max: f(1),
        lat_min: f(2),
        lat_max: f(3),
        cell_size: f(4),
        nodata: f(5),
        n_rows: u(52) as usize,
        n_cols: u(56) as usize,
    };
    spec.validate()
        .map_err(|e| Error::format(origin, e.to_string()))?;
    let body = &bytes[61..];
    let values: Vec<f64> = match bytes[60] {
        0 => {
            if body.len() != spec.len() * 4 {
                return Err(bad("payload length does not match header"));
            }
            let nodata32 = spec.nodata as f32;
            body.chunks_exact(4)
                .map(|c| {
                    let v = f32::from_le_bytes(c.try_into().expect("4-byte chunk"));
                    // Narrowed sentinels map back to the f64 sentinel.
                    if v == nodata32 {
                        spec.nodata
                    } else {
                        f64::from(v)
                    }
                })
                .collect()
        }
        1 => {
            if body.len() != spec.len() * 8 {
                return Err(bad("payload length does not match header"));
            }
            body.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect()
        }
        other => return Err(bad(&format!("unknown dtype code {other}"))),
    };
    Raster::new(spec, values, "", 0, "observed").map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_gwg1(raster: &Raster, path: &Path, dtype: DType) -> Result<()> {
    std::fs::write(path, encode_gwg1(raster, dtype)).map_err(|e| Error::io(path, e))
}

pub fn read_gwg1(path: &Path) -> Result<Raster> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_gwg1(&bytes, path)
}

/// Writes an ESRI ASCII grid using shortest round-trip float formatting.
pub fn write_ascii(raster: &Raster, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let s = &raster.spec;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "ncols {}", s.n_cols)?;
        writeln!(w, "nrows {}", s.n_rows)?;
        writeln!(w, "xllcorner {}", s.lon_min)?;
        writeln!(w, "yllcorner {}", s.lat_min)?;
        writeln!(w, "cellsize {}", s.cell_size)?;
        writeln!(w, "NODATA_value {}", s.nodata)?;
        for row in raster.values.chunks(s.n_cols) {
            let mut first = true;
            for v in row {
                if !first {
                    w.write_all(b" ")?;
                }
                first = false;
                if v.is_nan() {
                    write!(w, "{}", s.nodata)?;
                } else {
                    write!(w, "{v}")?;
                }
            }
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(path, e))
}

pub fn read_ascii(path: &Path) -> Result<Raster> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut header: BTreeMap<String, f64> = BTreeMap::new();
    let mut values = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let first = trimmed.split_whitespace().next().unwrap_or_default();
        if header.len() < 6
            && first
                .chars()
                .next()
                .is_some_and(|c| c.is_ascii_alphabetic())
        {
            let mut parts = trimmed.split_whitespace();
            let key = parts.next().unwrap_or_default().to_ascii_lowercase();
            let val = parts
                .next()
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::format(path, format!("bad header line `{trimmed}`")))?;
            header.insert(key, val);
            continue;
        }
        for tok in trimmed.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::format(path, format!("bad value `{tok}`")))?,
            );
        }
    }
    let get = |k: &str| {
        header
            .get(k)
            .copied()
            .ok_or_else(|| Error::format(path, format!("missing header key {k}")))
    };
    let n_cols = get("ncols")? as usize;
    let n_rows = get("nrows")? as usize;
    let cell = get("cellsize")?;
    let nodata = header.get("nodata_value").copied().unwrap_or(-9999.0);
    let x = match header.get("xllcorner") {
        Some(v) => *v,
        None => get("xllcenter")? - cell / 2.0,
    };
    let y = match header.get("yllcorner") {
        Some(v) => *v,
        None => get("yllcenter")? - cell / 2.0,
    };
    let spec = GridSpec::from_origin(x, y, cell, n_rows, n_cols, nodata)
        .map_err(|e| Error::format(path, e.to_string()))?;
    Raster::new(spec, values, "", 0, "observed").map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a grid, choosing the format by extension (`.asc` is ESRI ASCII,
/// anything else GWG1).
pub fn read_raster(path: &Path) -> Result<Raster> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("asc") => read_ascii(path),
        _ => read_gwg1(path),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LegendRow {
    zone_id: u32,
    unit_id: String,
    country_iso3: String,
    region_code: String,
}

pub fn read_legend(path: &Path) -> Result<BTreeMap<u32, ZoneInfo>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    let mut legend = BTreeMap::new();
    for row in rdr.deserialize::<LegendRow>() {
        let row = row.map_err(|e| Error::format(path, e.to_string()))?;
        legend.insert(
            row.zone_id,
            ZoneInfo {
                unit_id: row.unit_id,
                country_iso3: row.country_iso3,
                region_code: row.region_code,
            },
        );
    }
    Ok(legend)
}

pub fn write_legend(legend: &BTreeMap<u32, ZoneInfo>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    for (zone_id, info) in legend {
        w.serialize(LegendRow {
            zone_id: *zone_id,
            unit_id: info.unit_id.clone(),
            country_iso3: info.country_iso3.clone(),
            region_code: info.region_code.clone(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a zone raster plus its legend CSV.
pub fn read_zone_map(raster_path: &Path, legend_path: &Path) -> Result<ZoneMap> {
    let raster = read_raster(raster_path)?;
    let legend = read_legend(legend_path)?;
    ZoneMap::from_raster(&raster, legend).map_err(|e| Error::format(raster_path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(n_rows: usize, n_cols: usize) -> GridSpec {
        GridSpec::from_origin(-10.5, 3.25, 0.25, n_rows, n_cols, -9999.0).unwrap()
    }

    #[test]
    fn f32_payload_narrows_but_keeps_nodata() {
        let r = Raster::new(spec(1, 3), vec![0.1, -9999.0, 2.5], "v", 0, "o").unwrap();
        let back = decode_gwg1(&encode_gwg1(&r, DType::F32), Path::new("mem")).unwrap();
        assert_eq!(back.values[0], f64::from(0.1f32));
        assert_eq!(back.values[1], -9999.0);
        assert_eq!(back.values[2], 2.5);
    }

    #[test]
    fn truncated_or_foreign_bytes_are_rejected() {
        let r = Raster::filled(spec(2, 2), 1.0, "v");
        let mut bytes = encode_gwg1(&r, DType::F64);
        bytes.pop();
        assert!(decode_gwg1(&bytes, Path::new("mem")).is_err());
        assert!(decode_gwg1(b"GTIF....", Path::new("mem")).is_err());
    }

    #[test]
    fn ascii_reads_center_registration() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.asc");
        std::fs::write(
            &p,
            "NCOLS 2\nNROWS 1\nXLLCENTER 0.5\nYLLCENTER 0.5\nCELLSIZE 1\nNODATA_VALUE -1\n1 -1\n",
        )
        .unwrap();
        let r = read_ascii(&p).unwrap();
        assert_eq!(r.spec.lon_min, 0.0);
        assert_eq!(r.values, vec![1.0, -1.0]);
    }

    #[test]
    fn legend_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("legend.csv");
        let mut legend = BTreeMap::new();
        legend.insert(
            4,
            ZoneInfo {
                unit_id: "ESP.1".into(),
                country_iso3: "ESP".into(),
                region_code: "SE".into(),
            },
        );
        write_legend(&legend, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("zone_id,unit_id,country_iso3,region_code\n"));
        assert_eq!(read_legend(&p).unwrap(), legend);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn gwg1_f64_is_bitwise_lossless(
            values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO, 12)
        ) {
            let r = Raster::new(spec(3, 4), values, "v", 0, "o").unwrap();
            let back = decode_gwg1(&encode_gwg1(&r, DType::F64), Path::new("mem")).unwrap();
            prop_assert_eq!(back.spec, r.spec);
            let a: Vec<u64> = r.values.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.values.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn ascii_round_trip_at_printed_precision(
            values in prop::collection::vec(-1e6f64..1e6, 6)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("g.asc");
            let r = Raster::new(spec(2, 3), values, "v", 0, "o").unwrap();
            write_ascii(&r, &p).unwrap();
            let back = read_ascii(&p).unwrap();
            prop_assert_eq!(back.values, r.values);
            prop_assert!(back.spec.same_grid(&r.spec));
        }
    }
}
