//! CSV emission. Numbers use scientific notation with a fixed count of
//! significant digits (17 by default, which round-trips every f64).

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

pub fn format_number(x: f64, digits: usize) -> String {
    format!("{:.*e}", digits.saturating_sub(1), x)
}

/// A table of named columns sharing the time axis.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(times: Vec<f64>) -> Self {
        Self {
            header: vec!["t".into()],
            columns: vec![times],
        }
    }

    pub fn push(&mut self, name: impl Into<String>, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns[0].len());
        self.header.push(name.into());
        self.columns.push(values);
    }

    pub fn write_to(&self, mut w: impl Write, digits: usize) -> io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        let mut line = String::new();
        for row in 0..self.columns[0].len() {
            line.clear();
            for (k, col) in self.columns.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&format_number(col[row], digits));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path, digits: usize) -> io::Result<()> {
        let file = fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_to(&mut w, digits)?;
        w.flush()
    }
}

/// Writes every table as `<dir>/<name>.csv` and returns the paths.
pub fn write_tables(dir: &Path, tables: &[(String, Table)], digits: usize) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(tables.len());
    for (name, table) in tables {
        let path = dir.join(format!("{name}.csv"));
        table.write_file(&path, digits)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = format_number(x, 17);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(format_number(0.5, 3), "5.00e-1");
    }

    #[test]
    fn header_and_rows() {
        let mut t = Table::new(vec![0.0, 0.5]);
        t.push("rho_11", vec![1.0, 0.75]);
        let mut buf = Vec::new();
        t.write_to(&mut buf, 2).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,rho_11\n0.0e0,1.0e0\n5.0e-1,7.5e-1\n"
        );
    }
}
