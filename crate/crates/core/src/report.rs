//! CSV and LaTeX emission of experiment tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Result};
use crate::harness::ExperimentTable;

/// Decimal places for rates and standard errors.
pub const PRECISION: usize = 3;

/// A table together with the files it is written to.
#[derive(Debug, Clone)]
pub struct TableArtifact {
    pub table: ExperimentTable,
    pub csv_path: PathBuf,
    pub tex_path: PathBuf,
}

impl TableArtifact {
    /// Paths `<dir>/<name>.csv` and `<dir>/<name>.tex`.
    pub fn new(table: ExperimentTable, dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            csv_path: dir.join(format!("{}.csv", table.name)),
            tex_path: dir.join(format!("{}.tex", table.name)),
            table,
        }
    }

    pub fn write_all(&self) -> Result<()> {
        write_csv(self)?;
        write_latex(self)
    }
}

/// Round the shortest decimal representation of `x` half-to-even at
/// `places` decimals. Operating on the decimal string means `0.0515`
/// rounds as written rather than as its binary neighbour.
pub fn format_fixed(x: f64, places: usize) -> String {
    if !x.is_finite() {
        return "NA".to_string();
    }
    let s = format!("{:e}", x.abs());
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i64 = exp.parse().expect("integer exponent");
    let digits: Vec<u8> = mantissa
        .bytes()
        .filter(u8::is_ascii_digit)
        .map(|b| b - b'0')
        .collect();
    // value = 0.d1 d2 d3 ... × 10^(exp + 1)
    let point = exp + 1;
    let keep = point + places as i64;
    let mut kept: Vec<u8> = if keep <= 0 {
        Vec::new()
    } else {
        (0..keep as usize)
            .map(|i| digits.get(i).copied().unwrap_or(0))
            .collect()
    };
    let round_up = if keep < 0 {
        false
    } else {
        let k = keep as usize;
        let first = digits.get(k).copied().unwrap_or(0);
        let rest_nonzero = digits.iter().skip(k + 1).any(|&d| d != 0);
        let last_odd = kept.last().is_some_and(|d| d % 2 == 1);
        first > 5 || (first == 5 && (rest_nonzero || last_odd))
    };
    if round_up {
        let mut i = kept.len();
        loop {
            if i == 0 {
                kept.insert(0, 1);
                break;
            }
            i -= 1;
            if kept[i] == 9 {
                kept[i] = 0;
            } else {
                kept[i] += 1;
                break;
            }
        }
    }
    // left-pad so there is at least one integer digit
    while kept.len() < places + 1 {
        kept.insert(0, 0);
    }
    let split = kept.len() - places;
    let mut out = String::new();
    if x.is_sign_negative() && kept.iter().any(|&d| d != 0) {
        out.push('-');
    }
    out.extend(kept[..split].iter().map(|d| (b'0' + d) as char));
    if places > 0 {
        out.push('.');
        out.extend(kept[split..].iter().map(|d| (b'0' + d) as char));
    }
    out
}

fn header(t: &ExperimentTable) -> Vec<String> {
    let mut h = t.key_columns.clone();
    h.extend(["rate", "se", "replications", "failed"].map(String::from));
    h
}

fn cells(t: &ExperimentTable) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|r| {
            let mut c = r.keys.clone();
            c.push(format_fixed(r.rate, PRECISION));
            c.push(format_fixed(r.se, PRECISION));
            c.push(r.replications.to_string());
            c.push(r.failed.to_string());
            c
        })
        .collect()
}

fn check(t: &ExperimentTable) -> Result<()> {
    if t.rows.is_empty() {
        return Err(invalid(format!("table '{}' has no rows", t.name)));
    }
    if let Some(r) = t.rows.iter().find(|r| r.keys.len() != t.key_columns.len()) {
        return Err(invalid(format!(
            "row {:?} does not match the key columns",
            r.keys
        )));
    }
    Ok(())
}

pub fn render_csv(t: &ExperimentTable) -> Result<String> {
    check(t)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(t))
        .map_err(|e| invalid(e.to_string()))?;
    for row in cells(t) {
        w.write_record(row).map_err(|e| invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| invalid(e.to_string()))
}

/// Escape LaTeX special characters.
pub fn escape_latex(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\textbackslash{}"),
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            _ => out.push(c),
        }
    }
    out
}

pub fn render_latex(t: &ExperimentTable) -> Result<String> {
    check(t)?;
    let head = header(t);
    let spec: String = t
        .key_columns
        .iter()
        .map(|_| 'l')
        .chain(std::iter::repeat_n('r', 4))
        .collect();
    let mut s = String::new();
    s.push_str("\\begin{table}[htbp]\n\\centering\n");
    if !t.caption.is_empty() {
        let _ = writeln!(s, "\\caption{{{}}}", escape_latex(&t.caption));
    }
    let _ = writeln!(s, "\\label{{tab:{}}}", escape_latex(&t.name));
    let _ = writeln!(s, "\\begin{{tabular}}{{@{{}}{spec}@{{}}}}");
    s.push_str("\\toprule\n");
    let head: Vec<String> = head.iter().map(|h| escape_latex(h)).collect();
    let _ = writeln!(s, "{} \\\\", head.join(" & "));
    s.push_str("\\midrule\n");
    for row in cells(t) {
        let row: Vec<String> = row.iter().map(|c| escape_latex(c)).collect();
        let _ = writeln!(s, "{} \\\\", row.join(" & "));
    }
    s.push_str("\\bottomrule\n\\end{tabular}\n\\end{table}\n");
    Ok(s)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_csv(a: &TableArtifact) -> Result<()> {
    write_file(&a.csv_path, &render_csv(&a.table)?)
}

pub fn write_latex(a: &TableArtifact) -> Result<()> {
    write_file(&a.tex_path, &render_latex(&a.table)?)
}

/// Full-precision JSON dump of a table.
pub fn write_raw(t: &ExperimentTable, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(t).map_err(|e| invalid(e.to_string()))?;
    write_file(path.as_ref(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::TableRow;

    fn table(caption: &str) -> ExperimentTable {
        ExperimentTable {
            name: "demo".into(),
            caption: caption.into(),
            key_columns: vec!["weight".into(), "n".into()],
            rows: vec![
                TableRow::from_counts(vec!["anderson_darling".into(), "400".into()], 26, 500, 0),
                TableRow::from_counts(vec!["uniform".into(), "100".into()], 3, 200, 1),
            ],
        }
    }

    #[test]
    fn half_even_rounding() {
        assert_eq!(format_fixed(0.0515, 3), "0.052");
        assert_eq!(format_fixed(0.0525, 3), "0.052");
        assert_eq!(format_fixed(0.05251, 3), "0.053");
        assert_eq!(format_fixed(0.9995, 3), "1.000");
        assert_eq!(format_fixed(1.0, 3), "1.000");
        assert_eq!(format_fixed(0.0, 3), "0.000");
        assert_eq!(format_fixed(0.0004, 3), "0.000");
        assert_eq!(format_fixed(0.0005, 3), "0.000");
        assert_eq!(format_fixed(0.0006, 3), "0.001");
        assert_eq!(format_fixed(12.3456, 2), "12.35");
        assert_eq!(format_fixed(-0.0125, 3), "-0.012");
        assert_eq!(format_fixed(-0.0001, 3), "0.000");
        assert_eq!(format_fixed(1e-20, 3), "0.000");
        assert_eq!(format_fixed(f64::NAN, 3), "NA");
    }

    #[test]
    fn one_row_csv_has_two_lines() {
        let mut t = table("x");
        t.rows.truncate(1);
        let csv = render_csv(&t).unwrap();
        assert_eq!(
            csv,
            "weight,n,rate,se,replications,failed\nanderson_darling,400,0.052,0.010,500,0\n"
        );
    }

    #[test]
    fn csv_and_latex_carry_the_same_numbers() {
        let t = table("Rates at 5% & more_stuff");
        let csv = render_csv(&t).unwrap();
        let tex = render_latex(&t).unwrap();
        for line in csv.lines().skip(1) {
            let fields: Vec<&str> = line.split(',').collect();
            let escaped: Vec<String> = fields.iter().map(|f| escape_latex(f)).collect();
            assert!(
                tex.contains(&format!("{} \\\\", escaped.join(" & "))),
                "{line}"
            );
        }
        assert!(tex.contains("\\caption{Rates at 5\\% \\& more\\_stuff}"));
        assert!(
            tex.contains("\\toprule") && tex.contains("\\midrule") && tex.contains("\\bottomrule")
        );
    }

    #[test]
    fn empty_caption_has_no_caption_line() {
        let tex = render_latex(&table("")).unwrap();
        assert!(!tex.contains("\\caption"));
    }

    #[test]
    fn empty_table_is_rejected() {
        let mut t = table("");
        t.rows.clear();
        assert!(render_csv(&t).is_err());
        assert!(render_latex(&t).is_err());
    }

    #[test]
    fn rewriting_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = TableArtifact::new(table("c"), dir.path());
        a.write_all().unwrap();
        let first = std::fs::read(&a.csv_path).unwrap();
        let first_tex = std::fs::read(&a.tex_path).unwrap();
        a.write_all().unwrap();
        assert_eq!(first, std::fs::read(&a.csv_path).unwrap());
        assert_eq!(first_tex, std::fs::read(&a.tex_path).unwrap());
    }
}
