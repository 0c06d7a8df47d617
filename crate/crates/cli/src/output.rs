//! File emitters. Floats are written with `Display`, which is the shortest
//! representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// First line of every text summary; the only nondeterministic content.
pub const TIMESTAMP_PREFIX: &str = "# generated at unix time";

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()
    }

    pub fn text(&self, name: &str, body: &str) -> io::Result<()> {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        fs::write(self.path(name), format!("{TIMESTAMP_PREFIX} {secs}\n{body}"))
    }

    /// Two whitespace-separated columns for external plotting.
    pub fn dat(&self, name: &str, comment: &str, points: &[(f64, f64)]) -> io::Result<()> {
        let mut s = format!("# {comment}\n");
        for (x, y) in points {
            let _ = writeln!(s, "{} {}", num(*x), num(*y));
        }
        fs::write(self.path(name), s)
    }

    /// Gnuplot script drawing each `.dat` file as one series.
    pub fn gnuplot(&self, name: &str, title: &str, xlabel: &str, ylabel: &str, series: &[(&str, &str)]) -> io::Result<()> {
        let stem = name.trim_end_matches(".gp");
        let mut s = String::new();
        let _ = writeln!(s, "set terminal pngcairo size 900,600");
        let _ = writeln!(s, "set output '{stem}.png'");
        let _ = writeln!(s, "set title '{title}'");
        let _ = writeln!(s, "set xlabel '{xlabel}'\nset ylabel '{ylabel}'");
        let _ = writeln!(s, "set logscale xy\nset key left top");
        let plots: Vec<String> = series
            .iter()
            .map(|(file, label)| format!("'{file}' using 1:2 with linespoints title '{label}'"))
            .collect();
        let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
        fs::write(self.path(name), s)
    }
}
