//! CSV tables and JSON documents with a fixed number format.
//!
//! Machine-readable output prints every float with 17 significant digits,
//! which round-trips `f64` exactly. Human-readable tables use 9.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::affine::{EtaSolution, FeedbackOffset};
use crate::error::Result;
use crate::game::FeedbackStrategy;
use crate::linalg::{Mat, Vector};
use crate::model::TimeGrid;
use crate::riccati::RiccatiSolution;
use crate::sim::Trajectory;

/// 17 significant digits in scientific notation.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// 9 significant digits, positional when the magnitude allows it.
pub fn fmt9(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..9).contains(&mag) {
        format!("{:.*}", (8 - mag) as usize, x)
    } else {
        format!("{x:.8e}")
    }
}

struct Precise<'a>(PrettyFormatter<'a>);

impl Formatter for Precise<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty-printed JSON with 17-digit floats and a trailing newline.
/// Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Precise(PrettyFormatter::with_indent(b"  ")));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn push_matrix_header(h: &mut Vec<String>, name: &str, regimes: usize, rows: usize, cols: usize) {
    for i in 1..=regimes {
        for r in 1..=rows {
            for c in 1..=cols {
                h.push(format!("{name}[{i}][{r}][{c}]"));
            }
        }
    }
}

fn push_vector_header(h: &mut Vec<String>, name: &str, regimes: usize, len: usize) {
    for i in 1..=regimes {
        for r in 1..=len {
            h.push(format!("{name}[{i}][{r}]"));
        }
    }
}

fn push_matrix(row: &mut String, m: &Mat) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let _ = write!(row, ",{}", fmt17(m[(r, c)]));
        }
    }
}

fn push_vector(row: &mut String, v: &Vector) {
    for x in v.iter() {
        let _ = write!(row, ",{}", fmt17(*x));
    }
}

fn table(header: Vec<String>, grid: &TimeGrid, mut fill: impl FnMut(usize, &mut String)) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for k in 0..=grid.steps() {
        let mut row = fmt17(grid.node(k));
        fill(k, &mut row);
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// `t`, every `P[i][r][c]`, then `delta1[i]` and `delta2[i]`.
pub fn riccati_csv(sol: &RiccatiSolution) -> String {
    let l = sol.regime_count();
    let n = sol.p[0][0].nrows();
    let mut h = vec!["t".to_string()];
    push_matrix_header(&mut h, "P", l, n, n);
    h.extend((1..=l).map(|i| format!("delta1[{i}]")));
    h.extend((1..=l).map(|i| format!("delta2[{i}]")));
    table(h, &sol.grid, |k, row| {
        for p in &sol.p[k] {
            push_matrix(row, p);
        }
        for d in sol.delta1[k].iter().chain(&sol.delta2[k]) {
            let _ = write!(row, ",{}", fmt17(*d));
        }
    })
}

/// `t`, every `eta[i][r]`.
pub fn eta_csv(eta: &EtaSolution) -> String {
    let l = eta.eta[0].len();
    let n = eta.eta[0][0].len();
    let mut h = vec!["t".to_string()];
    push_vector_header(&mut h, "eta", l, n);
    table(h, &eta.grid, |k, row| eta.eta[k].iter().for_each(|v| push_vector(row, v)))
}

/// `t`, every `rho_tilde[i][r]`, then every `nu[i][r]`.
pub fn offset_csv(off: &FeedbackOffset) -> String {
    let l = off.nu[0].len();
    let m = off.nu[0][0].len();
    let mut h = vec!["t".to_string()];
    push_vector_header(&mut h, "rho_tilde", l, m);
    push_vector_header(&mut h, "nu", l, m);
    table(h, &off.grid, |k, row| {
        off.rho_tilde[k].iter().chain(&off.nu[k]).for_each(|v| push_vector(row, v));
    })
}

/// `t`, every `theta[i][r][c]`, then every `nu[i][r]`.
pub fn gains_csv(s: &FeedbackStrategy) -> String {
    let l = s.gains[0].len();
    let (m, n) = s.gains[0][0].shape();
    let mut h = vec!["t".to_string()];
    push_matrix_header(&mut h, "theta", l, m, n);
    push_vector_header(&mut h, "nu", l, m);
    table(h, &s.grid, |k, row| {
        s.gains[k].iter().for_each(|g| push_matrix(row, g));
        s.offsets[k].iter().for_each(|v| push_vector(row, v));
    })
}

/// `path`, `t`, one-based `regime`, `X[r]`, `u[r]`; the control is blank
/// at the final node.
pub fn trajectory_csv(out: &mut String, path_index: usize, grid: &TimeGrid, traj: &Trajectory, header: bool) {
    let n = traj.x[0].len();
    let m = traj.u.first().map_or(0, Vector::len);
    if header {
        let mut h = vec!["path".to_string(), "t".into(), "regime".into()];
        h.extend((1..=n).map(|r| format!("X[{r}]")));
        h.extend((1..=m).map(|r| format!("u[{r}]")));
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for k in 0..traj.x.len() {
        let _ = write!(out, "{path_index},{},{}", fmt17(grid.node(k)), traj.regimes[k] + 1);
        push_vector(out, &traj.x[k]);
        match traj.u.get(k) {
            Some(u) => push_vector(out, u),
            None => out.push_str(&",".repeat(m)),
        }
        out.push('\n');
    }
}
