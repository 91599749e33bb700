//! Artifact files and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::hex;

/// Environment variable overriding the default output directory.
pub const OUTPUT_ENV: &str = "TREEWALK_OUT";
pub const DEFAULT_OUTPUT: &str = "treewalk-out";

/// A float with 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

/// One CSV cell.
pub enum Cell {
    Int(i128),
    Float(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

macro_rules! int_cell {
    ($($t:ty),*) => {$(
        impl From<$t> for Cell {
            fn from(x: $t) -> Self {
                Cell::Int(x as i128)
            }
        }
    )*};
}
int_cell!(u32, u64, usize, i32, i64);

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

/// A CSV table built in memory.
pub struct Table {
    body: String,
    width: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            body: header.join(",") + "\n",
            width: header.len(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.width);
        for (i, c) in cells.into_iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            match c {
                Cell::Int(v) => write!(self.body, "{v}").unwrap(),
                Cell::Float(v) => self.body.push_str(&fmt_f64(v)),
                Cell::Text(s) => self.body.push_str(&s),
                Cell::Empty => {}
            }
        }
        self.body.push('\n');
    }
}

#[macro_export]
macro_rules! cells {
    ($($x:expr),* $(,)?) => { vec![$($crate::output::Cell::from($x)),*] };
}

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Artifacts of one command, held in memory until the command succeeds so
/// that a failed run leaves nothing behind.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
    entries: Vec<ArtifactEntry>,
}

impl Artifacts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, name: &str, body: &[u8]) -> io::Result<()> {
        if self.files.iter().any(|(n, _)| n == name) {
            return Err(io::Error::other(format!("artifact {name} written twice")));
        }
        self.entries.push(ArtifactEntry {
            file: name.to_string(),
            bytes: body.len() as u64,
            sha256: hex(&Sha256::digest(body)),
        });
        self.files.push((name.to_string(), body.to_vec()));
        Ok(())
    }

    /// Writes every artifact into `dir`, creating it if needed.
    pub fn commit(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, body) in &self.files {
            fs::write(dir.join(name), body)?;
        }
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: Table) -> io::Result<()> {
        self.write(name, table.body.as_bytes())
    }

    /// A pretty-printed JSON document.
    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// One compact JSON document per line.
    pub fn json_lines<T: Serialize>(&mut self, name: &str, values: &[T]) -> io::Result<()> {
        let mut s = String::new();
        for v in values {
            s.push_str(&serde_json::to_string(v).map_err(io::Error::other)?);
            s.push('\n');
        }
        self.write(name, s.as_bytes())
    }

    pub fn entries(&self) -> &[ArtifactEntry] {
        &self.entries
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub schema: u32,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub versions: Versions,
    pub started_unix: u64,
    pub wall_time_seconds: f64,
    pub exit_status: i32,
    pub artifacts: Vec<ArtifactEntry>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub treewalk: &'static str,
    pub treewalk_cli: &'static str,
}

impl Versions {
    pub fn current() -> Self {
        Versions {
            treewalk: treewalk::VERSION,
            treewalk_cli: env!("CARGO_PKG_VERSION"),
        }
    }
}
