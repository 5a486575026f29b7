//! JSONL file helpers.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Non-blank lines of a file with their 1-based line numbers.
pub fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Reads every line with `parse`, failing on the first bad line.
pub fn read_jsonl<T>(path: &Path, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| parse(&line).map_err(|e| e.at_line(n)))
        .collect()
}

/// Reads every line with `parse`, keeping per-line failures instead of aborting.
pub fn read_jsonl_lenient<T>(path: &Path, parse: impl Fn(&str) -> Result<T>) -> Result<(Vec<T>, Vec<Error>)> {
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for (n, line) in read_lines(path)? {
        match parse(&line) {
            Ok(v) => ok.push(v),
            Err(e) => errors.push(e.at_line(n)),
        }
    }
    Ok((ok, errors))
}

/// Writes one line per item through a temporary file, then renames it into place.
pub fn write_lines<I, S>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let file = File::create(tmp).map_err(|e| Error::io(tmp, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        w.write_all(line.as_ref().as_bytes())
            .and_then(|_| w.write_all(b"\n"))
            .map_err(|e| Error::io(tmp, e))?;
    }
    w.flush().map_err(|e| Error::io(tmp, e))?;
    drop(w);
    fs::rename(tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_string(path: &Path, contents: &str) -> Result<()> {
    write_lines(path, std::iter::once(contents))
}

pub fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
