//! Atomic file output, CSV formatting and the heatmap SVG.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use tempfile::NamedTempFile;

use crate::Failure;

/// Writes `bytes` to a temp file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let fail = |e: std::io::Error| Failure::input(format!("IoFailure: {}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(dir).map_err(fail)?;
    tmp.write_all(bytes).map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::input(format!("IoFailure: {}: {e}", dir.display())))
}

/// `%.9g`: nine significant digits, plain notation for moderate exponents.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// CSV table built in memory and written atomically.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory write");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory write");
    }

    pub fn save(self, path: &Path) -> Result<(), Failure> {
        let bytes = self.writer.into_inner().expect("in-memory flush");
        write_atomic(path, &bytes)
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Grid of gray cells (black = 1, white = 0) in the same row/column order as
/// the CSV tables.
pub fn heatmap_svg(names: &[String], values: &DMatrix<f64>, title: &str) -> String {
    const CELL: usize = 24;
    let n = names.len();
    let label_w = 8 * names.iter().map(|s| s.chars().count()).max().unwrap_or(0) + 12;
    let top = label_w + 24;
    let width = label_w + n * CELL + 10;
    let height = top + n * CELL + 10;
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="12">"#
    )
    .unwrap();
    writeln!(svg, r#"<text x="4" y="16">{}</text>"#, xml_escape(title)).unwrap();
    for (i, name) in names.iter().enumerate() {
        let name = xml_escape(name);
        let y = top + i * CELL + CELL / 2 + 4;
        writeln!(
            svg,
            r#"<text x="{}" y="{y}" text-anchor="end">{name}</text>"#,
            label_w - 4
        )
        .unwrap();
        let x = label_w + i * CELL + CELL / 2 + 4;
        writeln!(
            svg,
            r#"<text x="{x}" y="{}" transform="rotate(-90 {x} {})">{name}</text>"#,
            top - 4,
            top - 4
        )
        .unwrap();
    }
    for i in 0..n {
        for j in 0..n {
            let v = values[(i, j)].clamp(0.0, 1.0);
            let shade = (255.0 * (1.0 - v)).round() as u8;
            writeln!(
                svg,
                r#"<rect x="{}" y="{}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},{shade})"><title>{}</title></rect>"#,
                label_w + j * CELL,
                top + i * CELL,
                fmt_num(values[(i, j)])
            )
            .unwrap();
        }
    }
    svg.push_str("</svg>\n");
    svg
}
