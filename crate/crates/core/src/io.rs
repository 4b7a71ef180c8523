//! Plain-text artifact formats.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! writer/parser pair reproduces its input bit for bit.
//!
//! `vcsample 1`
//! ```text
//! vcsample 1
//! params <eps> <sigma> <delta> <rng_seed>
//! samples <N>
//! x y z nx ny nz lfs radius        (N lines)
//! ```
//!
//! `vcseed 1`
//! ```text
//! vcseed 1 <N>
//! id kind x y z i j k [leaf]       (N lines; kind U, L or I)
//! ```
//! Interior seeds carry `i j k = -1 -1 -1` and their octree leaf number.
//!
//! `vcmesh 1`
//! ```text
//! vcmesh 1
//! vertices <N>
//! x y z
//! faces <M>
//! k v1 .. vk seedA seedB           (seedB = -1 on the clip box)
//! cells <C>
//! seed_id kind nf f1 .. fnf
//! ```

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::ball_union::{Seed, SeedKind, SeedOrigin};
use crate::geom::Vec3;
use crate::sampler::{SampleSet, SurfaceSample};
use crate::voronoi::{MeshCell, MeshFace, ReconSurface, VolumeMesh};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{format} line {line}: {msg}")]
pub struct ParseError {
    pub format: &'static str,
    /// 1-based; one past the last line for a truncated file.
    pub line: usize,
    pub msg: String,
}

/// Whitespace-token reader over the non-empty lines of a file.
struct Lines<'a> {
    format: &'static str,
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(format: &'static str, text: &'a str) -> Self {
        Lines {
            format,
            inner: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> ParseError {
        ParseError {
            format: self.format,
            line,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self, what: &str) -> Result<(usize, Vec<&'a str>), ParseError> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            let toks: Vec<&str> = l.split_whitespace().collect();
            if !toks.is_empty() {
                return Ok((i + 1, toks));
            }
        }
        Err(self.err(self.last + 1, format!("unexpected end of file, expected {what}")))
    }

    /// A line of exactly `n` tokens, or `n` plus `extra` optional ones.
    fn fields(&mut self, what: &str, n: usize, extra: usize) -> Result<(usize, Vec<&'a str>), ParseError> {
        let (line, toks) = self.next_line(what)?;
        if toks.len() < n || toks.len() > n + extra {
            return Err(self.err(line, format!("expected {n} fields for {what}, found {}", toks.len())));
        }
        Ok((line, toks))
    }

    /// `<keyword> <count>` header.
    fn section(&mut self, keyword: &str) -> Result<usize, ParseError> {
        let (line, toks) = self.fields(keyword, 2, 0)?;
        if toks[0] != keyword {
            return Err(self.err(line, format!("expected `{keyword}`, found `{}`", toks[0])));
        }
        num(self, line, toks[1])
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        for (i, l) in self.inner.by_ref() {
            if !l.trim().is_empty() {
                return Err(ParseError {
                    format: self.format,
                    line: i + 1,
                    msg: "trailing content".into(),
                });
            }
        }
        Ok(())
    }
}

fn num<T: FromStr>(r: &Lines, line: usize, tok: &str) -> Result<T, ParseError> {
    tok.parse().map_err(|_| r.err(line, format!("cannot parse `{tok}`")))
}

fn vec3(r: &Lines, line: usize, t: &[&str]) -> Result<Vec3, ParseError> {
    let v = Vec3::new(num(r, line, t[0])?, num(r, line, t[1])?, num(r, line, t[2])?);
    if !v.is_finite() {
        return Err(r.err(line, "non-finite coordinate"));
    }
    Ok(v)
}

fn header(r: &mut Lines, magic: &str, extra: usize) -> Result<(usize, Vec<String>), ParseError> {
    let (line, toks) = r.fields(magic, 2, extra)?;
    if toks[0] != magic || toks[1] != "1" {
        return Err(r.err(line, format!("expected `{magic} 1` header")));
    }
    Ok((line, toks[2..].iter().map(|s| s.to_string()).collect()))
}

pub fn write_samples(s: &SampleSet) -> String {
    let mut out = format!(
        "vcsample 1\nparams {} {} {} {}\nsamples {}\n",
        s.eps,
        s.sigma,
        s.delta,
        s.rng_seed,
        s.len()
    );
    for p in &s.samples {
        let (x, n) = (p.position, p.normal);
        writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            x.x, x.y, x.z, n.x, n.y, n.z, p.lfs, p.radius
        )
        .unwrap();
    }
    out
}

pub fn parse_samples(text: &str) -> Result<SampleSet, ParseError> {
    let mut r = Lines::new("vcsample", text);
    header(&mut r, "vcsample", 0)?;
    let (line, t) = r.fields("params", 5, 0)?;
    if t[0] != "params" {
        return Err(r.err(line, "expected `params`"));
    }
    let (eps, sigma, delta) = (num(&r, line, t[1])?, num(&r, line, t[2])?, num(&r, line, t[3])?);
    let rng_seed = num(&r, line, t[4])?;
    let n = r.section("samples")?;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, t) = r.fields("sample", 8, 0)?;
        samples.push(SurfaceSample {
            position: vec3(&r, line, &t[0..3])?,
            normal: vec3(&r, line, &t[3..6])?,
            lfs: num(&r, line, t[6])?,
            radius: num(&r, line, t[7])?,
        });
    }
    r.finish()?;
    Ok(SampleSet {
        samples,
        eps,
        sigma,
        delta,
        rng_seed,
    })
}

pub fn write_seeds(seeds: &[Seed]) -> String {
    let mut out = format!("vcseed 1 {}\n", seeds.len());
    for s in seeds {
        let p = s.position;
        write!(out, "{} {} {} {} {}", s.id, s.kind.code(), p.x, p.y, p.z).unwrap();
        match s.origin {
            SeedOrigin::Triple([i, j, k]) => writeln!(out, " {i} {j} {k}"),
            SeedOrigin::Leaf(leaf) => writeln!(out, " -1 -1 -1 {leaf}"),
        }
        .unwrap();
    }
    out
}

pub fn parse_seeds(text: &str) -> Result<Vec<Seed>, ParseError> {
    let mut r = Lines::new("vcseed", text);
    let (line, rest) = header(&mut r, "vcseed", 1)?;
    let n: usize = match rest.first() {
        Some(t) => num(&r, line, t)?,
        None => return Err(r.err(line, "missing seed count")),
    };
    let mut seeds = Vec::with_capacity(n);
    for _ in 0..n {
        let (line, t) = r.fields("seed", 8, 1)?;
        let id: usize = num(&r, line, t[0])?;
        if id != seeds.len() {
            return Err(r.err(line, format!("seed id {id} out of order")));
        }
        let kind = SeedKind::from_code(t[1]).ok_or_else(|| r.err(line, format!("unknown seed kind `{}`", t[1])))?;
        let position = vec3(&r, line, &t[2..5])?;
        let triple: [i64; 3] = [num(&r, line, t[5])?, num(&r, line, t[6])?, num(&r, line, t[7])?];
        let origin = match (kind, t.get(8)) {
            (SeedKind::Interior, Some(leaf)) if triple == [-1, -1, -1] => SeedOrigin::Leaf(num(&r, line, leaf)?),
            (SeedKind::Interior, _) => return Err(r.err(line, "interior seed needs `-1 -1 -1 <leaf>`")),
            (_, None) if triple.iter().all(|&v| v >= 0) => SeedOrigin::Triple(triple.map(|v| v as usize)),
            _ => return Err(r.err(line, "surface seed needs three sample ids")),
        };
        seeds.push(Seed {
            id,
            position,
            kind,
            origin,
        });
    }
    r.finish()?;
    Ok(seeds)
}

pub fn write_mesh(m: &VolumeMesh) -> String {
    let mut out = format!("vcmesh 1\nvertices {}\n", m.vertices.len());
    for v in &m.vertices {
        writeln!(out, "{} {} {}", v.x, v.y, v.z).unwrap();
    }
    writeln!(out, "faces {}", m.faces.len()).unwrap();
    for f in &m.faces {
        write!(out, "{}", f.vertices.len()).unwrap();
        for v in &f.vertices {
            write!(out, " {v}").unwrap();
        }
        let b = f.seed_b.map_or(-1, |b| b as i64);
        writeln!(out, " {} {b}", f.seed_a).unwrap();
    }
    writeln!(out, "cells {}", m.cells.len()).unwrap();
    for c in &m.cells {
        write!(out, "{} {} {}", c.seed_id, c.kind.code(), c.faces.len()).unwrap();
        for f in &c.faces {
            write!(out, " {f}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_mesh(text: &str) -> Result<VolumeMesh, ParseError> {
    let mut r = Lines::new("vcmesh", text);
    header(&mut r, "vcmesh", 0)?;
    let nv = r.section("vertices")?;
    let mut mesh = VolumeMesh::default();
    for _ in 0..nv {
        let (line, t) = r.fields("vertex", 3, 0)?;
        mesh.vertices.push(vec3(&r, line, &t)?);
    }
    let nf = r.section("faces")?;
    for _ in 0..nf {
        let (line, t) = r.next_line("face")?;
        let k: usize = num(&r, line, t[0])?;
        if k < 3 || t.len() != k + 3 {
            return Err(r.err(
                line,
                format!(
                    "face needs k >= 3 and k + 3 fields, found k = {k} with {} fields",
                    t.len()
                ),
            ));
        }
        let vertices = t[1..=k]
            .iter()
            .map(|v| {
                let v: usize = num(&r, line, v)?;
                if v >= nv {
                    return Err(r.err(line, format!("vertex {v} out of range")));
                }
                Ok(v)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let seed_a = num(&r, line, t[k + 1])?;
        let b: i64 = num(&r, line, t[k + 2])?;
        let seed_b = match b {
            -1 => None,
            b if b >= 0 => Some(b as usize),
            _ => return Err(r.err(line, format!("bad neighbor seed {b}"))),
        };
        mesh.faces.push(MeshFace {
            vertices,
            seed_a,
            seed_b,
        });
    }
    let nc = r.section("cells")?;
    for _ in 0..nc {
        let (line, t) = r.next_line("cell")?;
        if t.len() < 3 {
            return Err(r.err(line, "cell needs `seed_id kind nf ...`"));
        }
        let seed_id = num(&r, line, t[0])?;
        let kind = SeedKind::from_code(t[1]).ok_or_else(|| r.err(line, format!("unknown seed kind `{}`", t[1])))?;
        let k: usize = num(&r, line, t[2])?;
        if t.len() != k + 3 {
            return Err(r.err(line, format!("expected {} face ids, found {}", k, t.len() - 3)));
        }
        let faces = t[3..]
            .iter()
            .map(|f| {
                let f: usize = num(&r, line, f)?;
                if f >= nf {
                    return Err(r.err(line, format!("face {f} out of range")));
                }
                Ok(f)
            })
            .collect::<Result<Vec<_>, _>>()?;
        mesh.cells.push(MeshCell { seed_id, kind, faces });
    }
    r.finish()?;
    Ok(mesh)
}

/// Wavefront OBJ: `v` lines, then 1-based polygonal `f` lines.
pub fn write_obj(s: &ReconSurface) -> String {
    let mut out = String::new();
    for v in &s.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).unwrap();
    }
    for f in &s.facets {
        out.push('f');
        for v in &f.vertices {
            write!(out, " {}", v + 1).unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::SurfaceSpec;
    use crate::voronoi::{ReconFacet, VertexOrigin};
    use proptest::prelude::*;

    fn sample_set() -> SampleSet {
        let pts = SurfaceSpec::ellipsoid(2.0, 1.0, 0.7).unwrap().quasi_uniform_points(50);
        SampleSet::from_points(&pts, 0.05, 0.75, 0.1, 42)
    }

    fn seeds() -> Vec<Seed> {
        vec![
            Seed {
                id: 0,
                position: Vec3::new(0.1, -0.2, 1.0 / 3.0),
                kind: SeedKind::Upper,
                origin: SeedOrigin::Triple([0, 4, 9]),
            },
            Seed {
                id: 1,
                position: Vec3::new(1e-300, 5e300, -0.0),
                kind: SeedKind::Lower,
                origin: SeedOrigin::Triple([1, 2, 3]),
            },
            Seed {
                id: 2,
                position: Vec3::new(0.5, 0.5, 0.5),
                kind: SeedKind::Interior,
                origin: SeedOrigin::Leaf(17),
            },
        ]
    }

    fn mesh() -> VolumeMesh {
        VolumeMesh {
            vertices: vec![Vec3::ZERO, Vec3::X, Vec3::Y, Vec3::Z, Vec3::splat(0.1)],
            faces: vec![
                MeshFace {
                    vertices: vec![0, 1, 2],
                    seed_a: 0,
                    seed_b: Some(3),
                },
                MeshFace {
                    vertices: vec![0, 2, 3, 4],
                    seed_a: 0,
                    seed_b: None,
                },
            ],
            cells: vec![MeshCell {
                seed_id: 0,
                kind: SeedKind::Lower,
                faces: vec![0, 1],
            }],
        }
    }

    #[test]
    fn samples_round_trip() {
        let s = sample_set();
        let text = write_samples(&s);
        assert_eq!(parse_samples(&text).unwrap(), s);
        assert!(text.ends_with('\n') && text.is_ascii());
    }

    #[test]
    fn seeds_round_trip() {
        let s = seeds();
        let text = write_seeds(&s);
        assert!(text.starts_with("vcseed 1 3\n"));
        assert!(text.contains(" I 0.5 0.5 0.5 -1 -1 -1 17\n"));
        assert_eq!(parse_seeds(&text).unwrap(), s);
    }

    #[test]
    fn mesh_round_trip() {
        let m = mesh();
        let text = write_mesh(&m);
        assert!(text.contains("\n4 0 2 3 4 0 -1\n"));
        assert_eq!(parse_mesh(&text).unwrap(), m);
    }

    #[test]
    fn truncated_mesh_names_the_line() {
        let text = write_mesh(&mesh());
        let lines: Vec<&str> = text.lines().collect();
        let cut = lines[..lines.len() - 1].join("\n");
        let e = parse_mesh(&cut).unwrap_err();
        assert_eq!(e.line, lines.len());
        assert!(e.msg.contains("end of file"), "{e}");
        let half = &text[..text.len() / 2];
        assert!(parse_mesh(half).is_err());
    }

    #[test]
    fn bad_tokens_name_the_line() {
        let text = write_mesh(&mesh()).replace("0 0 0\n", "0 zero 0\n");
        let e = parse_mesh(&text).unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.to_string().starts_with("vcmesh line 3: cannot parse `zero`"));

        let text = write_seeds(&seeds()).replace(" U ", " Q ");
        assert_eq!(parse_seeds(&text).unwrap_err().line, 2);
        let text = write_seeds(&seeds()).replace(" -1 -1 -1 17", " -1 -1 -1");
        assert_eq!(parse_seeds(&text).unwrap_err().line, 4);
        let text = write_mesh(&mesh()).replace("\n3 0 1 2 ", "\n3 0 1 9 ");
        assert!(parse_mesh(&text).unwrap_err().msg.contains("out of range"));
        assert!(parse_samples("vcsample 2\n").is_err());
        let text = write_samples(&sample_set()) + "extra\n";
        assert!(parse_samples(&text).unwrap_err().msg.contains("trailing"));
    }

    #[test]
    fn obj_is_one_based() {
        let s = ReconSurface {
            vertices: vec![Vec3::ZERO, Vec3::X, Vec3::Y, Vec3::Z],
            origins: vec![VertexOrigin::Steiner; 4],
            facets: vec![ReconFacet {
                vertices: vec![0, 2, 1],
                upper_seed: 0,
                lower_seed: 1,
            }],
        };
        let text = write_obj(&s);
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(text.lines().last(), Some("f 1 3 2"));
    }

    proptest! {
        #[test]
        fn floats_round_trip_exactly(x in any::<f64>().prop_filter("finite", |v| v.is_finite()), y in -1e3f64..1e3, z in any::<i32>()) {
            let s = vec![Seed { id: 0, position: Vec3::new(x, y, z as f64 * 1e-7), kind: SeedKind::Upper, origin: SeedOrigin::Triple([1, 2, 3]) }];
            let back = parse_seeds(&write_seeds(&s)).unwrap();
            prop_assert_eq!(back[0].position.to_array().map(f64::to_bits), s[0].position.to_array().map(f64::to_bits));
        }
    }
}
