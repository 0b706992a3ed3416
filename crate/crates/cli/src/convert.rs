//! Conversion between the ten-token vertex form and the seven-token
//! `x y w h theta hard owner` form of grasp files.

use std::fmt::Write as _;
use std::fs;

use anyhow::{anyhow, Context};
use roigrasp::dataset_io::{format_grasp_line, DatasetError, GraspAnnotation};
use roigrasp::geometry::{vertices_to_rect, OrientedRect, QuadVertices};

use crate::failure::{CmdResult, Failure, InputContext};
use crate::{ConvertArgs, GraspForm};

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn numbers(line: &str, n: usize, lineno: usize) -> Result<Vec<f64>, DatasetError> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != n {
        return Err(DatasetError::Parse {
            line: lineno,
            message: format!("expected {n} tokens, found {}", tokens.len()),
        });
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>().map_err(|_| DatasetError::Parse {
                line: lineno,
                message: format!("'{t}' is not a number"),
            })
        })
        .collect()
}

fn flags(hard: f64, owner: f64, lineno: usize) -> Result<(bool, u32), DatasetError> {
    let bad = |m: &str| DatasetError::Parse {
        line: lineno,
        message: m.to_string(),
    };
    let hard = match hard {
        0.0 => false,
        1.0 => true,
        _ => return Err(bad("hard flag must be 0 or 1")),
    };
    if owner.fract() != 0.0 || !(0.0..=u32::MAX as f64).contains(&owner) {
        return Err(bad("owner index must be a non-negative integer"));
    }
    Ok((hard, owner as u32))
}

fn vertices_to_rects(text: &str, tol: f64) -> Result<String, DatasetError> {
    let mut out = String::new();
    for (lineno, line) in data_lines(text) {
        let v = numbers(line, 10, lineno)?;
        let q = QuadVertices::from_flat(v[..8].try_into().expect("eight coordinates"));
        let r = vertices_to_rect(&q, tol).map_err(|e| DatasetError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let (hard, owner) = flags(v[8], v[9], lineno)?;
        writeln!(out, "{} {} {} {} {} {} {owner}", r.x(), r.y(), r.w(), r.h(), r.theta(), u8::from(hard)).unwrap();
    }
    Ok(out)
}

fn rects_to_vertices(text: &str) -> Result<String, DatasetError> {
    let mut out = String::new();
    for (lineno, line) in data_lines(text) {
        let v = numbers(line, 7, lineno)?;
        let rect = OrientedRect::new(v[0], v[1], v[2], v[3], v[4]).map_err(|e| DatasetError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let (hard, owner_index) = flags(v[5], v[6], lineno)?;
        out.push_str(&format_grasp_line(&GraspAnnotation { rect, hard, owner_index }));
        out.push('\n');
    }
    Ok(out)
}

pub fn run(a: &ConvertArgs) -> CmdResult {
    let text = fs::read_to_string(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))
        .input()?;
    let converted = match a.to {
        GraspForm::Rect => vertices_to_rects(&text, a.rect_tol),
        GraspForm::Vertices => rects_to_vertices(&text),
    }
    .map_err(|e| Failure::input(anyhow!("{}: {e}", a.input.display())))?;
    fs::write(&a.output, converted)
        .with_context(|| format!("writing {}", a.output.display()))
        .input()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_tolerance() {
        let rects = "10 20 30 8 15 0 1\n# comment\n\n-5.5 4 12 12 -89.5 1 2\n";
        let verts = rects_to_vertices(rects).unwrap();
        let back = vertices_to_rects(&verts, 0.02).unwrap();
        for (a, b) in data_lines(rects).zip(data_lines(&back)) {
            let a = numbers(a.1, 7, 0).unwrap();
            let b = numbers(b.1, 7, 0).unwrap();
            let ra = OrientedRect::new(a[0], a[1], a[2], a[3], a[4]).unwrap();
            let rb = OrientedRect::new(b[0], b[1], b[2], b[3], b[4]).unwrap();
            assert!(ra.approx_eq(&rb, 1e-4));
            assert_eq!(a[5..], b[5..]);
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = vertices_to_rects("\n0 0 10 0 10 5 0 9 0 1\n", 0.02).unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 2, .. }), "{err}");
        let err = rects_to_vertices("1 2 3\n").unwrap_err();
        assert!(matches!(err, DatasetError::Parse { line: 1, .. }));
    }
}
