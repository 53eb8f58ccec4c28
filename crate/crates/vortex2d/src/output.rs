//! Artifact formatting: CSV dumps and JSON records with 17-significant-
//! digit floats so regression fixtures stay byte-stable.

use std::io::{self, Write};
use std::path::Path;

use crate::asymptotics::{MultiSweepReport, SweepReport};
use crate::domain::{DomainGrid, ScalarField};
use crate::pointvortex::Trajectory;
use crate::profiles::RadialProfile;

/// 17 significant digits, scientific.
pub(crate) fn g17(x: f64) -> String {
    format!("{x:.16e}")
}

/// serde_json wrapper that renders every f64 at 17 significant digits.
pub(crate) fn to_json_g17(value: &serde_json::Value) -> String {
    let mut out = Vec::new();
    write_value(&mut out, value, 0).expect("in-memory write");
    String::from_utf8(out).expect("json is utf8")
}

fn write_indent(out: &mut Vec<u8>, depth: usize) -> io::Result<()> {
    for _ in 0..depth {
        out.write_all(b"  ")?;
    }
    Ok(())
}

fn write_value(out: &mut Vec<u8>, v: &serde_json::Value, depth: usize) -> io::Result<()> {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    return write!(out, "{}", g17(f));
                }
            }
            write!(out, "{n}")
        }
        serde_json::Value::Array(items) => {
            if items.is_empty() {
                return write!(out, "[]");
            }
            writeln!(out, "[")?;
            for (i, item) in items.iter().enumerate() {
                write_indent(out, depth + 1)?;
                write_value(out, item, depth + 1)?;
                writeln!(out, "{}", if i + 1 < items.len() { "," } else { "" })?;
            }
            write_indent(out, depth)?;
            write!(out, "]")
        }
        serde_json::Value::Object(map) => {
            if map.is_empty() {
                return write!(out, "{{}}");
            }
            writeln!(out, "{{")?;
            for (i, (k, item)) in map.iter().enumerate() {
                write_indent(out, depth + 1)?;
                write!(out, "{}: ", serde_json::Value::String(k.clone()))?;
                write_value(out, item, depth + 1)?;
                writeln!(out, "{}", if i + 1 < map.len() { "," } else { "" })?;
            }
            write_indent(out, depth)?;
            write!(out, "}}")
        }
        other => write!(out, "{other}"),
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)
}

/// Grid dump: `x,y,value`, row-major over masked cells.
pub(crate) fn field_csv(grid: &DomainGrid, values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 60 + 16);
    s.push_str("x,y,value\n");
    for (k, v) in values.iter().enumerate() {
        let c = grid.cell_center(k);
        s.push_str(&g17(c.x));
        s.push(',');
        s.push_str(&g17(c.y));
        s.push(',');
        s.push_str(&g17(*v));
        s.push('\n');
    }
    s
}

pub(crate) fn field_csv_of(field: &ScalarField) -> String {
    field_csv(field.grid(), field.values())
}

/// Sweep CSV with the exact external column set.
pub(crate) fn sweep_csv(report: &SweepReport) -> String {
    let mut s = String::new();
    s.push_str(
        "epsilon,mu,energy_E,energy_total,diam_support,center_x,center_y,patch_area,iterations,residual,profile_l2\n",
    );
    for r in &report.records {
        let cols = [
            g17(r.epsilon),
            g17(r.mu),
            g17(r.energy_kinetic),
            g17(r.energy_total),
            g17(r.support_diameter),
            g17(r.center.x),
            g17(r.center.y),
            g17(r.patch_area),
            r.iterations.to_string(),
            g17(r.residual),
            g17(r.profile_l2),
        ];
        s.push_str(&cols.join(","));
        s.push('\n');
    }
    s
}

/// Per-component sweep CSV for the multi-vortex case, same columns.
pub(crate) fn multi_sweep_component_csv(report: &MultiSweepReport, i: usize) -> String {
    let mut s = String::new();
    s.push_str(
        "epsilon,mu,energy_E,energy_total,diam_support,center_x,center_y,patch_area,iterations,residual,profile_l2\n",
    );
    for r in &report.records {
        let cols = [
            g17(r.epsilon),
            g17(r.mus[i]),
            g17(r.energy_kinetic),
            g17(r.component_energies[i]),
            g17(r.diameters[i]),
            g17(r.centers[i].x),
            g17(r.centers[i].y),
            g17(r.patch_areas[i]),
            r.iterations.to_string(),
            g17(r.residual),
            g17(f64::NAN),
        ];
        s.push_str(&cols.join(","));
        s.push('\n');
    }
    s
}

/// Radial profile CSV: `r,U,fU`.
pub(crate) fn radial_profile_csv(p: &RadialProfile) -> String {
    let mut s = String::from("r,U,fU\n");
    for &(r, u, fu) in &p.samples {
        s.push_str(&g17(r));
        s.push(',');
        s.push_str(&g17(u));
        s.push(',');
        s.push_str(&g17(fu));
        s.push('\n');
    }
    s
}

/// Trajectory CSV: `t,x1,y1,...,xk,yk,W`.
pub(crate) fn trajectory_csv(traj: &Trajectory) -> String {
    let k = traj.positions.first().map_or(0, |p| p.len());
    let mut s = String::from("t");
    for i in 1..=k {
        s.push_str(&format!(",x{i},y{i}"));
    }
    s.push_str(",W\n");
    for ((t, pts), w) in traj.times.iter().zip(&traj.positions).zip(&traj.hamiltonian) {
        s.push_str(&g17(*t));
        for p in pts {
            s.push(',');
            s.push_str(&g17(p.x));
            s.push(',');
            s.push_str(&g17(p.y));
        }
        s.push(',');
        s.push_str(&g17(*w));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_has_17_significant_digits() {
        assert_eq!(g17(0.125), "1.2500000000000000e-1");
        assert_eq!(g17(1.0 / 3.0), "3.3333333333333331e-1");
    }

    #[test]
    fn json_floats_use_g17() {
        let v = serde_json::json!({"a": 0.5, "n": 3, "list": [1.0, 2.5]});
        let s = to_json_g17(&v);
        assert!(s.contains("5.0000000000000000e-1"), "{s}");
        assert!(s.contains("\"n\": 3"), "{s}");
    }
}
