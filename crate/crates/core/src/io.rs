//! Plain-text mesh format, field CSV, legacy ASCII VTK and solve-report CSV.
//!
//! Floats are written with 17 significant digits so that files round-trip
//! bit-exactly.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::mesh::{DiscreteField, Domain, Mesh2D};
use crate::solver::SolveReport;

fn domain_tag(d: Domain) -> &'static str {
    match d {
        Domain::UnitSquare => "square",
        Domain::UnitDisk => "disk",
        Domain::Polygon => "polygon",
    }
}

/// Header `V <n> T <n> B <n> D <domain>` (after any `#` comment lines), then one `x y` row per vertex,
/// one `i j k` row per triangle and one `a b triangle` row per boundary
/// edge.
pub fn write_mesh<W: Write>(mesh: &Mesh2D, mut w: W) -> Result<()> {
    writeln!(
        w,
        "V {} T {} B {} D {}",
        mesh.num_vertices(),
        mesh.num_triangles(),
        mesh.boundary_edges().len(),
        domain_tag(mesh.domain())
    )?;
    for v in mesh.vertices() {
        writeln!(w, "{:.16e} {:.16e}", v[0], v[1])?;
    }
    for t in mesh.triangles() {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    for e in mesh.boundary_edges() {
        writeln!(w, "{} {} {}", e.vertices[0], e.vertices[1], e.triangle)?;
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse(format!("line {line}: malformed value")))
}

pub fn read_mesh<R: BufRead>(r: R) -> Result<Mesh2D> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.starts_with('#')));
    let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty mesh file".into()))?;
    let header = header?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() < 6 || tok[0] != "V" || tok[2] != "T" || tok[4] != "B" {
        return Err(Error::Parse(format!("line 1: expected 'V <n> T <n> B <n>', got '{header}'")));
    }
    let (nv, nt, nb): (usize, usize, usize) = (parse(Some(tok[1]), 1)?, parse(Some(tok[3]), 1)?, parse(Some(tok[5]), 1)?);
    let domain = match tok.get(7).copied() {
        Some("square") => Domain::UnitSquare,
        Some("disk") => Domain::UnitDisk,
        Some("polygon") | None => Domain::Polygon,
        Some(other) => return Err(Error::Parse(format!("line 1: unknown domain '{other}'"))),
    };
    let mut next = |what: &str| -> Result<(usize, Vec<String>)> {
        let (i, l) = lines.next().ok_or_else(|| Error::Parse(format!("unexpected end of file reading {what}")))?;
        Ok((i + 1, l?.split_whitespace().map(String::from).collect()))
    };
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, t) = next("vertices")?;
        vertices.push([parse(t.first().map(String::as_str), ln)?, parse(t.get(1).map(String::as_str), ln)?]);
    }
    let mut triangles = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (ln, t) = next("triangles")?;
        let g = |k: usize| parse::<usize>(t.get(k).map(String::as_str), ln);
        triangles.push([g(0)?, g(1)?, g(2)?]);
    }
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (ln, t) = next("boundary edges")?;
        let g = |k: usize| parse::<usize>(t.get(k).map(String::as_str), ln);
        boundary.push(([g(0)?, g(1)?], g(2)?));
    }
    let mesh = Mesh2D::from_parts(vertices, triangles, domain)?;
    let mut stored: Vec<_> = boundary;
    let mut derived: Vec<_> = mesh.boundary_edges().iter().map(|e| (e.vertices, e.triangle)).collect();
    stored.sort_unstable();
    derived.sort_unstable();
    if stored != derived {
        return Err(Error::Parse("boundary edge rows disagree with the triangulation".into()));
    }
    Ok(mesh)
}

/// `vertex_id,x,y,value` rows after an optional comment header.
pub fn write_field_csv<W: Write>(field: &DiscreteField, header: &str, mut w: W) -> Result<()> {
    write_comment(header, &mut w)?;
    writeln!(w, "vertex_id,x,y,value")?;
    for (i, (v, u)) in field.mesh().vertices().iter().zip(field.values()).enumerate() {
        writeln!(w, "{i},{:.16e},{:.16e},{:.16e}", v[0], v[1], u)?;
    }
    Ok(())
}

/// Read the values column of a field CSV written by [`write_field_csv`].
pub fn read_field_csv<R: BufRead>(r: R) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    for (ln, line) in r.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.starts_with("vertex_id") || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::Parse(format!("line {}: expected 4 columns", ln + 1)));
        }
        out.push((parse(Some(cols[0]), ln + 1)?, parse(Some(cols[3]), ln + 1)?));
    }
    Ok(out)
}

/// Prefix every line of `header` with `# `.
pub fn write_comment<W: Write>(header: &str, w: &mut W) -> Result<()> {
    for line in header.lines() {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

/// Legacy ASCII VTK unstructured grid with the field as point data.
pub fn write_vtk<W: Write>(field: &DiscreteField, name: &str, title: &str, mut w: W) -> Result<()> {
    let mesh = field.mesh();
    let title: String = title.lines().next().unwrap_or("").chars().take(255).collect();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.num_vertices())?;
    for v in mesh.vertices() {
        writeln!(w, "{:.16e} {:.16e} 0", v[0], v[1])?;
    }
    writeln!(w, "CELLS {} {}", mesh.num_triangles(), 4 * mesh.num_triangles())?;
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {}", mesh.num_triangles())?;
    for _ in 0..mesh.num_triangles() {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.num_vertices())?;
    writeln!(w, "SCALARS {name} double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for u in field.values() {
        writeln!(w, "{u:.16e}")?;
    }
    Ok(())
}

/// One row per recorded iteration: `level,iter,residual,boundary_change,min_node`.
pub fn write_report_csv<W: Write>(reports: &[SolveReport], header: &str, mut w: W) -> Result<()> {
    write_comment(header, &mut w)?;
    writeln!(w, "level,iter,residual,boundary_change,min_node")?;
    for r in reports {
        for rec in &r.records {
            writeln!(
                w,
                "{:.16e},{},{:.16e},{:.16e},{:.16e}",
                rec.level, rec.iteration, rec.residual, rec.boundary_change, rec.min_node
            )?;
        }
    }
    Ok(())
}

/// One row per level: `level,iterations,residual,min_node,min_boundary,mass_balance_defect`.
pub fn write_level_summary_csv<W: Write>(reports: &[SolveReport], header: &str, mut w: W) -> Result<()> {
    write_comment(header, &mut w)?;
    writeln!(w, "level,iterations,residual,min_node,min_boundary,mass_balance_defect")?;
    for r in reports {
        writeln!(
            w,
            "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.level,
            r.iterations,
            r.final_residual(),
            r.min_node,
            r.min_boundary,
            r.mass_balance_defect
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_unit_disk, generate_unit_square};
    use std::io::BufReader;

    #[test]
    fn mesh_round_trip() {
        for mesh in [generate_unit_square(3).unwrap(), generate_unit_disk(12).unwrap()] {
            let mut buf = Vec::new();
            write_mesh(&mesh, &mut buf).unwrap();
            let back = read_mesh(BufReader::new(&buf[..])).unwrap();
            assert_eq!(back, mesh);
            let mut again = Vec::new();
            write_mesh(&back, &mut again).unwrap();
            assert_eq!(buf, again);
        }
    }

    #[test]
    fn mesh_header_counts() {
        let mut buf = Vec::new();
        write_mesh(&generate_unit_square(2).unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("V 9 T 8 B 8 D square\n"));
        assert_eq!(text.lines().count(), 1 + 9 + 8 + 8);
    }

    #[test]
    fn rejects_inconsistent_boundary_rows() {
        let mut buf = Vec::new();
        write_mesh(&generate_unit_square(2).unwrap(), &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        let last = text.trim_end().rsplit('\n').next().unwrap().to_string();
        text = text.replace(&last, "0 8 0");
        assert!(read_mesh(BufReader::new(text.as_bytes())).is_err());
        assert!(read_mesh(BufReader::new(&b"V x T 1 B 1"[..])).is_err());
    }

    #[test]
    fn field_csv_and_vtk() {
        let mesh = generate_unit_square(2).unwrap().into_shared();
        let u = DiscreteField::interpolate(mesh.clone(), |x, y| 0.1 + x * y);
        let mut buf = Vec::new();
        write_field_csv(&u, "config_hash abc\nmesh m=2", &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config_hash abc\n# mesh m=2\nvertex_id,x,y,value\n"));
        let back = read_field_csv(BufReader::new(&buf[..])).unwrap();
        assert_eq!(back.len(), 9);
        for (i, v) in back {
            assert_eq!(v, u.values()[i]);
        }
        let mut vtk = Vec::new();
        write_vtk(&u, "u", "robin field", &mut vtk).unwrap();
        let vtk = String::from_utf8(vtk).unwrap();
        assert!(vtk.contains("CELLS 8 32"));
        assert!(vtk.contains("POINT_DATA 9"));
        assert_eq!(vtk.lines().filter(|l| *l == "5").count(), 8);
    }
}
