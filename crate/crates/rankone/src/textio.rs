//! The shared plain-text matrix format.
//!
//! A matrix is a line `rows cols` followed by `rows` lines of `cols`
//! whitespace-separated decimal floats. Blank lines and lines starting with
//! `#` are ignored. Floats are written in Rust's shortest round-trip form, so
//! write-then-read is exact.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Line-oriented reader over a whole file.
pub struct Reader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Reader { lines, pos: 0 }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.lines.len()
    }

    pub fn line_no(&self) -> usize {
        self.lines.get(self.pos).or(self.lines.last()).map_or(0, |l| l.0)
    }

    pub fn next_tokens(&mut self) -> Result<(usize, Vec<&'a str>)> {
        let (no, line) = *self.lines.get(self.pos).ok_or(Error::Parse {
            line: self.line_no(),
            msg: "unexpected end of input".into(),
        })?;
        self.pos += 1;
        Ok((no, line.split_whitespace().collect()))
    }

    /// Reads a header line `TAG a b ...` and returns the numeric fields.
    pub fn header(&mut self, tag: &str, fields: usize) -> Result<Vec<usize>> {
        let (no, toks) = self.next_tokens()?;
        if toks.first() != Some(&tag) || toks.len() != fields + 1 {
            return Err(Error::Parse { line: no, msg: format!("expected header `{tag}` with {fields} fields") });
        }
        toks[1..].iter().map(|t| parse_usize(t, no)).collect()
    }

    pub fn matrix(&mut self) -> Result<Matrix> {
        let (no, toks) = self.next_tokens()?;
        if toks.len() != 2 {
            return Err(Error::Parse { line: no, msg: "expected `rows cols`".into() });
        }
        let rows = parse_usize(toks[0], no)?;
        let cols = parse_usize(toks[1], no)?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (no, toks) = self.next_tokens()?;
            if toks.len() != cols {
                return Err(Error::Parse { line: no, msg: format!("expected {cols} values, found {}", toks.len()) });
            }
            for t in toks {
                data.push(parse_f64(t, no)?);
            }
        }
        Matrix::from_vec(rows, cols, data).map_err(|e| Error::Parse { line: no, msg: e.to_string() })
    }
}

fn parse_usize(t: &str, line: usize) -> Result<usize> {
    t.parse().map_err(|_| Error::Parse { line, msg: format!("not a count: {t}") })
}

fn parse_f64(t: &str, line: usize) -> Result<f64> {
    let x: f64 = t.parse().map_err(|_| Error::Parse { line, msg: format!("not a number: {t}") })?;
    if !x.is_finite() {
        return Err(Error::Parse { line, msg: format!("non-finite value: {t}") });
    }
    Ok(x)
}

pub fn write_matrix(out: &mut String, m: &Matrix) {
    let _ = writeln!(out, "{} {}", m.rows, m.cols);
    for i in 0..m.rows {
        let row: Vec<String> = m.row(i).iter().map(|x| format_f64(*x)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

pub fn format_f64(x: f64) -> String {
    // avoid "-0"
    if x == 0.0 {
        "0".into()
    } else {
        format!("{x}")
    }
}

pub fn matrix_to_text(m: &Matrix) -> String {
    let mut s = String::new();
    write_matrix(&mut s, m);
    s
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut r = Reader::new(text);
    let m = r.matrix()?;
    if !r.at_end() {
        return Err(Error::Parse { line: r.line_no(), msg: "trailing content".into() });
    }
    Ok(m)
}
