use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target)?;
    Ok(target)
}

/// Report and tables produced by one command.
#[derive(Debug, Default)]
pub struct Output {
    pub report: Value,
    pub tables: Vec<(String, String)>,
}

impl Output {
    pub fn new(report: Value) -> Output {
        Output {
            report,
            tables: Vec::new(),
        }
    }

    pub fn table(mut self, name: &str, csv: String) -> Output {
        self.tables.push((name.to_string(), csv));
        self
    }

    pub fn emit(&self, out: Option<&Path>) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(&self.report).expect("report serializes") + "\n";
        match out {
            Some(dir) => {
                for (name, csv) in &self.tables {
                    write_atomic(dir, name, csv.as_bytes())?;
                }
                write_atomic(dir, "report.json", text.as_bytes())?;
            }
            None => print!("{text}"),
        }
        Ok(())
    }
}

/// `{:.16e}` formatting for CSV columns.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv<I, R>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = f64>,
{
    let mut s = String::from(header);
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(num).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("dirac-out-{}", std::process::id()));
        write_atomic(&dir, "a.txt", b"one").unwrap();
        let p = write_atomic(&dir, "a.txt", b"two").unwrap();
        assert_eq!(fs::read_to_string(p).unwrap(), "two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn csv_format() {
        assert_eq!(csv("a,b", [[1.0, -0.5]]), "a,b\n1.0000000000000000e0,-5.0000000000000000e-1\n");
    }
}
