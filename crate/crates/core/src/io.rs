//! Machine-readable output: JSON with 17 significant digits and CSV field
//! dumps.
//!
//! Every float goes through `{:.16e}`, so each value is written with 17
//! significant digits and parses back to the identical `f64`. Field dumps
//! write one CSV file per component with the header `i,j,x,y,value` (planar)
//! or `i,j,k,x,y,z,value` (layered).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::cellproblems::{CellField, PermeabilityTensor};
use crate::darcy::DarcySolution;
use crate::error::{Error, Result};
use crate::grid::{cell_center, face_position, StaggeredField2D, StaggeredField3D};

/// Pretty JSON formatter printing floats with 17 significant digits.
struct Precise<'a> {
    pretty: PrettyFormatter<'a>,
}

macro_rules! forward {
    ($($name:ident $(, $arg:ident : $ty:ty)*;)*) => {
        $(
            fn $name<W: ?Sized + Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.pretty.$name(w $(, $arg)*)
            }
        )*
    };
}

impl Formatter for Precise<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }

    forward! {
        begin_array;
        end_array;
        begin_array_value, first: bool;
        end_array_value;
        begin_object;
        end_object;
        begin_object_key, first: bool;
        begin_object_value;
        end_object_value;
    }
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let fmt = Precise { pretty: PrettyFormatter::with_indent(b"  ") };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Read a permeability tensor as written by `write_json`, checking that the
/// entries are finite.
pub fn read_tensor(path: &Path) -> Result<PermeabilityTensor> {
    let k: PermeabilityTensor = read_json(path)?;
    if !k.k.iter().flatten().all(|x| x.is_finite()) {
        return Err(Error::Tensor(format!("{} contains non-finite entries", path.display())));
    }
    Ok(k)
}

/// `<stem>_<component>.csv` next to `prefix`.
pub fn component_path(prefix: &Path, component: &str) -> PathBuf {
    let stem = prefix.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    prefix.with_file_name(format!("{stem}_{component}.csv"))
}

fn writer(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a planar component given per-entry positions.
fn dump_planar(path: &Path, n: usize, values: &[f64], pos: impl Fn(usize, usize) -> (f64, f64)) -> Result<()> {
    let mut w = writer(path, &["i", "j", "x", "y", "value"])?;
    for j in 0..n {
        for i in 0..n {
            let (x, y) = pos(i, j);
            w.write_record([i.to_string(), j.to_string(), fmt(x), fmt(y), fmt(values[i + n * j])])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn dump_layered(
    path: &Path,
    n: usize,
    levels: usize,
    values: &[f64],
    pos: impl Fn(usize, usize, usize) -> (f64, f64, f64),
) -> Result<()> {
    let mut w = writer(path, &["i", "j", "k", "x", "y", "z", "value"])?;
    for k in 0..levels {
        for j in 0..n {
            for i in 0..n {
                let (x, y, z) = pos(i, j, k);
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    k.to_string(),
                    fmt(x),
                    fmt(y),
                    fmt(z),
                    fmt(values[i + n * (j + n * k)]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_field_2d(prefix: &Path, f: &StaggeredField2D) -> Result<Vec<PathBuf>> {
    f.check()?;
    let n = f.n;
    let mut out = Vec::new();
    let items: [(&str, &[f64], fn(usize, usize, usize) -> (f64, f64)); 3] = [
        ("u", &f.u, |i, j, n| (face_position(i, n), cell_center(j, n))),
        ("v", &f.v, |i, j, n| (cell_center(i, n), face_position(j, n))),
        ("p", &f.p, |i, j, n| (cell_center(i, n), cell_center(j, n))),
    ];
    for (name, values, pos) in items {
        let path = component_path(prefix, name);
        dump_planar(&path, n, values, |i, j| pos(i, j, n))?;
        out.push(path);
    }
    Ok(out)
}

pub fn write_field_3d(prefix: &Path, f: &StaggeredField3D) -> Result<Vec<PathBuf>> {
    f.check()?;
    let (n, h3) = (f.n, f.h3);
    let levels = f.nz - 1;
    let level = |k: usize| (k + 1) as f64 * h3;
    let half = |k: usize| (k as f64 + 1.5) * h3;
    let mut out = Vec::new();

    let path = component_path(prefix, "u");
    dump_layered(&path, n, levels, &f.u, |i, j, k| (face_position(i, n), cell_center(j, n), level(k)))?;
    out.push(path);
    let path = component_path(prefix, "v");
    dump_layered(&path, n, levels, &f.v, |i, j, k| (cell_center(i, n), face_position(j, n), level(k)))?;
    out.push(path);
    let path = component_path(prefix, "w");
    dump_layered(&path, n, levels - 1, &f.w, |i, j, k| (cell_center(i, n), cell_center(j, n), half(k)))?;
    out.push(path);
    let path = component_path(prefix, "p");
    dump_layered(&path, n, levels, &f.p, |i, j, k| (cell_center(i, n), cell_center(j, n), level(k)))?;
    out.push(path);
    Ok(out)
}

pub fn write_cell_field(prefix: &Path, field: &CellField) -> Result<Vec<PathBuf>> {
    match field {
        CellField::Planar(f) => write_field_2d(prefix, f),
        CellField::Layered(f) => write_field_3d(prefix, f),
    }
}

/// Pressure at cell centers and normal velocities on all faces of the macro
/// grid, boundary faces included.
pub fn write_darcy_fields(prefix: &Path, s: &DarcySolution) -> Result<Vec<PathBuf>> {
    let (m, my, hx, hy) = (s.m, s.my, s.hx(), s.hy());
    let header = ["i", "j", "x", "y", "value"];
    let mut out = Vec::new();
    let mut grid = |name: &str, ni: usize, nj: usize, values: &[f64], pos: &dyn Fn(usize, usize) -> (f64, f64)| -> Result<()> {
        let path = component_path(prefix, name);
        let mut w = writer(&path, &header)?;
        for j in 0..nj {
            for i in 0..ni {
                let (x, y) = pos(i, j);
                w.write_record([i.to_string(), j.to_string(), fmt(x), fmt(y), fmt(values[i + ni * j])])?;
            }
        }
        w.flush()?;
        out.push(path);
        Ok(())
    };
    grid("p", m, my, &s.pressure, &|i, j| ((i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy))?;
    grid("u", m + 1, my, &s.vx, &|i, j| (i as f64 * hx, (j as f64 + 0.5) * hy))?;
    grid("v", m, my + 1, &s.vy, &|i, j| ((i as f64 + 0.5) * hx, j as f64 * hy))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regimes::Regime;

    #[test]
    fn floats_use_seventeen_digits() {
        let s = to_json_string(&[1.0 / 12.0, 1.0, -0.0, 1e-300]).unwrap();
        assert!(s.contains("8.3333333333333329e-2"), "{s}");
        assert!(s.contains("1.0000000000000000e0"), "{s}");
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0].to_bits(), (1.0f64 / 12.0).to_bits());
        assert_eq!(back[3].to_bits(), 1e-300f64.to_bits());
    }

    #[test]
    fn non_finite_values_become_null() {
        let s = to_json_string(&[f64::NAN]).unwrap();
        assert!(s.contains("null"));
    }

    #[test]
    fn tensor_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut k = PermeabilityTensor::new(Regime::Vtpm, [[0.1 + 0.2, 1.0 / 3.0], [1.0 / 3.0, std::f64::consts::PI]], 64, 16);
        k.residuals = vec![3.3e-11, 7.123456789e-12];
        k.asymmetry = 1.0 / 7.0 * 1e-9;
        let path = dir.path().join("k.json");
        write_json(&path, &k).unwrap();
        let back = read_tensor(&path).unwrap();
        for (a, b) in k.k.iter().flatten().zip(back.k.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.residuals, k.residuals);
        assert_eq!(back.asymmetry.to_bits(), k.asymmetry.to_bits());
        assert_eq!(back.regime, Regime::Vtpm);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"regime\": \"VTPM\""));
    }

    #[test]
    fn planar_dump_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut f = StaggeredField2D::zeros(8);
        f.u[3 + 8 * 2] = 0.25;
        let paths = write_field_2d(&dir.path().join("cell"), &f).unwrap();
        assert_eq!(paths.len(), 3);
        assert!(paths[0].ends_with("cell_u.csv"));
        let text = fs::read_to_string(&paths[0]).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("i,j,x,y,value"));
        assert_eq!(text.lines().count(), 65);
        let row = text.lines().nth(1 + 3 + 8 * 2).unwrap();
        assert!(row.starts_with("3,2,-1.2500000000000000e-1,-1.8750000000000000e-1,2.5"), "{row}");
    }

    #[test]
    fn layered_dump_layout() {
        let dir = tempfile::tempdir().unwrap();
        let f = StaggeredField3D::zeros(8, 8);
        let paths = write_field_3d(&dir.path().join("c"), &f).unwrap();
        assert_eq!(paths.len(), 4);
        let w = fs::read_to_string(&paths[2]).unwrap();
        assert!(w.starts_with("i,j,k,x,y,z,value"));
        assert_eq!(w.lines().count(), 1 + 64 * 6);
        let p = fs::read_to_string(&paths[3]).unwrap();
        assert_eq!(p.lines().count(), 1 + 64 * 7);
    }
}
