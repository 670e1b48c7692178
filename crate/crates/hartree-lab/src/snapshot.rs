//! Bit-exact field snapshot files.
//!
//! Layout: magic `HRT5`, version `u16 = 1`, flags `u16` (bit 0 set for the
//! frequency representation), `d: u32`, `n: u32`, `L: f64`, `t: f64`, then
//! `n^d` complex samples as little-endian `(re, im)` f64 pairs, and a trailing
//! CRC32 of the payload bytes. Writes land in a temp file renamed on
//! completion, so interrupted runs never leave corrupt records.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, Representation};
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"HRT5";
pub const VERSION: u16 = 1;

fn crc32_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut k = 0;
        while k < 8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            k += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

/// CRC-32 (IEEE 802.3) of a byte slice.
pub fn crc32(bytes: &[u8]) -> u32 {
    static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(crc32_table);
    let mut c = !0u32;
    for &b in bytes {
        c = table[((c ^ b as u32) & 0xFF) as usize] ^ (c >> 8);
    }
    !c
}

/// Write a field (with its timestamp) to disk, atomically.
pub fn store_field(path: &Path, field: &Field, t: f64) -> Result<()> {
    let grid = field.grid();
    let mut payload = Vec::with_capacity(field.data().len() * 16);
    for v in field.data() {
        payload.extend_from_slice(&v.re.to_le_bytes());
        payload.extend_from_slice(&v.im.to_le_bytes());
    }
    let mut out = Vec::with_capacity(payload.len() + 36);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let flags: u16 = match field.rep() {
        Representation::Physical => 0,
        Representation::Frequency => 1,
    };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.points_per_axis() as u32).to_le_bytes());
    out.extend_from_slice(&grid.box_length().to_le_bytes());
    out.extend_from_slice(&t.to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32(&payload).to_le_bytes());

    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(&out)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a field and its timestamp back; rejects bad magic, unsupported
/// versions, truncated payloads, and checksum mismatches.
pub fn load_field(path: &Path) -> Result<(Field, f64)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 36 {
        return Err(Error::Snapshot("file shorter than the header".into()));
    }
    if bytes[0..4] != MAGIC {
        return Err(Error::Snapshot("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Snapshot(format!("unsupported version {version}")));
    }
    let flags = u16::from_le_bytes(bytes[6..8].try_into().unwrap());
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let len = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let t = f64::from_le_bytes(bytes[24..32].try_into().unwrap());
    let grid = Grid::new(d, n, len)?;
    let count = grid.points();
    let expect = 32 + count * 16 + 4;
    if bytes.len() != expect {
        return Err(Error::Snapshot(format!(
            "truncated payload: {} bytes, expected {expect}",
            bytes.len()
        )));
    }
    let payload = &bytes[32..32 + count * 16];
    let stored = u32::from_le_bytes(bytes[expect - 4..].try_into().unwrap());
    let computed = crc32(payload);
    if stored != computed {
        return Err(Error::Snapshot(format!(
            "checksum mismatch: stored {stored:#010x}, computed {computed:#010x}"
        )));
    }
    let mut data = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(16) {
        let re = f64::from_le_bytes(chunk[0..8].try_into().unwrap());
        let im = f64::from_le_bytes(chunk[8..16].try_into().unwrap());
        data.push(Complex64::new(re, im));
    }
    let rep = if flags & 1 == 0 {
        Representation::Physical
    } else {
        Representation::Frequency
    };
    Ok((Field::from_data(grid, rep, data)?, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn crc32_reference_value() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = std::env::temp_dir().join("hartree-lab-snapshot-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("field.hrt5");
        let g = Grid::new(2, 8, 3.5).unwrap();
        let mut rng = SplitMix64::new(12);
        let f = Field::from_data(
            g,
            Representation::Frequency,
            (0..g.points())
                .map(|_| Complex64::new(rng.next_gaussian(), rng.next_gaussian()))
                .collect(),
        )
        .unwrap();
        store_field(&path, &f, 0.75).unwrap();
        let (back, t) = load_field(&path).unwrap();
        assert_eq!(t, 0.75);
        assert_eq!(back.rep(), Representation::Frequency);
        assert_eq!(back.data(), f.data());

        // bad magic
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad = dir.join("bad_magic.hrt5");
        std::fs::write(&bad, &bytes).unwrap();
        assert!(matches!(load_field(&bad), Err(Error::Snapshot(_))));

        // unsupported version
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 255;
        std::fs::write(&bad, &bytes).unwrap();
        match load_field(&bad) {
            Err(Error::Snapshot(msg)) => assert!(msg.contains("version")),
            other => panic!("expected version error, got {other:?}"),
        }

        // truncation
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&bad, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_field(&bad), Err(Error::Snapshot(_))));

        // corrupt payload fails the checksum
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[40] ^= 0x01;
        std::fs::write(&bad, &bytes).unwrap();
        match load_field(&bad) {
            Err(Error::Snapshot(msg)) => assert!(msg.contains("checksum")),
            other => panic!("expected checksum error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
