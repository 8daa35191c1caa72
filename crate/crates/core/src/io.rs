//! Snapshot files: the fields of an [`EvolState`] as one flat little-endian
//! f64 blob (`<stem>.bin`, fields back to back, row-major with x fastest)
//! plus a key-value text header (`<stem>.hdr`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evolve::EvolState;
use crate::grid::{Field2D, Grid2D};

pub const FIELD_NAMES: [&str; 4] = ["u", "ut", "v", "vt"];

fn header(state: &EvolState) -> String {
    let g = state.grid();
    let mut s = String::new();
    let _ = writeln!(s, "format nullwave-snapshot-1");
    let _ = writeln!(s, "nx {}", g.nx);
    let _ = writeln!(s, "ny {}", g.ny);
    let _ = writeln!(s, "dx {:e}", g.dx);
    let _ = writeln!(s, "dy {:e}", g.dy);
    let _ = writeln!(s, "x0 {:e}", g.x0);
    let _ = writeln!(s, "y0 {:e}", g.y0);
    let _ = writeln!(s, "t {:e}", state.t);
    let _ = writeln!(s, "fields {}", FIELD_NAMES.join(" "));
    let _ = writeln!(s, "dtype f64");
    let _ = writeln!(s, "byte_order little-endian");
    s
}

/// Writes `<stem>.bin` and `<stem>.hdr` in `dir`, returning both paths.
pub fn write_snapshot(dir: &Path, stem: &str, state: &EvolState) -> Result<[PathBuf; 2]> {
    let bin = dir.join(format!("{stem}.bin"));
    let hdr = dir.join(format!("{stem}.hdr"));
    let n = state.grid().len();
    let mut bytes = Vec::with_capacity(4 * n * 8);
    for f in [&state.u, &state.ut, &state.v, &state.vt] {
        for v in f.values() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&bin, bytes)?;
    fs::write(&hdr, header(state))?;
    Ok([bin, hdr])
}

fn parse_header(text: &str) -> Result<(Grid2D, f64)> {
    let get = |key: &str| -> Result<&str> {
        text.lines()
            .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
            .ok_or_else(|| Error::Io(format!("snapshot header lacks '{key}'")))
    };
    let num = |key: &str| -> Result<f64> {
        get(key)?.trim().parse::<f64>().map_err(|e| Error::Io(format!("header '{key}': {e}")))
    };
    let int = |key: &str| -> Result<usize> {
        get(key)?.trim().parse::<usize>().map_err(|e| Error::Io(format!("header '{key}': {e}")))
    };
    if get("byte_order")?.trim() != "little-endian" || get("dtype")?.trim() != "f64" {
        return Err(Error::Io("unsupported snapshot encoding".into()));
    }
    if get("fields")?.split_whitespace().ne(FIELD_NAMES) {
        return Err(Error::Io("unexpected field list".into()));
    }
    let g = Grid2D::new(int("nx")?, int("ny")?, num("dx")?, num("dy")?, num("x0")?, num("y0")?)?;
    Ok((g, num("t")?))
}

/// Reads a snapshot written by [`write_snapshot`]; `stem_path` is the path
/// without extension.
pub fn read_snapshot(stem_path: &Path) -> Result<EvolState> {
    let text = fs::read_to_string(stem_path.with_extension("hdr"))?;
    let (g, t) = parse_header(&text)?;
    let bytes = fs::read(stem_path.with_extension("bin"))?;
    let n = g.len();
    if bytes.len() != 4 * n * 8 {
        return Err(Error::Io(format!("expected {} bytes, found {}", 4 * n * 8, bytes.len())));
    }
    let mut fields = bytes.chunks_exact(n * 8).map(|chunk| {
        let vals = chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect();
        Field2D::from_values(g, vals)
    });
    let mut next = || fields.next().expect("four fields");
    EvolState::new(t, next()?, next()?, next()?, next()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = Grid2D::centered(16, 2.0).unwrap();
        let f = |s: f64| Field2D::from_fn(g, |x, y| (s * x - y).sin() / 3.0).unwrap();
        let st = EvolState::new(1.0 / 3.0, f(1.0), f(2.0), f(-0.5), f(0.1)).unwrap();
        let dir = std::env::temp_dir().join(format!("nullwave-io-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let [bin, _] = write_snapshot(&dir, "snap_0001", &st).unwrap();
        assert_eq!(fs::metadata(&bin).unwrap().len(), 4 * 256 * 8);
        let back = read_snapshot(&dir.join("snap_0001")).unwrap();
        assert_eq!(back, st);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn header_rejects_other_encodings() {
        let g = Grid2D::centered(16, 1.0).unwrap();
        let st = EvolState::new(0.0, Field2D::zeros(g), Field2D::zeros(g), Field2D::zeros(g), Field2D::zeros(g)).unwrap();
        let text = header(&st).replace("little-endian", "big-endian");
        assert!(matches!(parse_header(&text), Err(Error::Io(_))));
        assert!(parse_header(&header(&st)).is_ok());
    }
}
