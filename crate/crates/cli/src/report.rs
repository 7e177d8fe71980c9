//! Artifact writers. JSON keys follow struct declaration order so reports are
//! byte-stable; floats in CSV carry 9 significant digits.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Serialize;

use crate::error::{CliError, Result};

/// `%.9g`: shortest of fixed or exponent form, trailing zeros trimmed.
pub fn fmt_g9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let exp = format!("{v:.8e}");
    let (mantissa, e) = exp.split_once('e').unwrap();
    let e: i32 = e.parse().unwrap();
    if (-4..9).contains(&e) {
        let decimals = (8 - e).max(0) as usize;
        trim(&format!("{v:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if e < 0 { '-' } else { '+' }, e.abs())
    }
}

fn trim(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

pub struct OutDir {
    pub path: PathBuf,
    pub written: Vec<String>,
}

impl OutDir {
    pub fn create(path: PathBuf) -> Result<Self> {
        fs::create_dir_all(&path).map_err(|source| CliError::Output { path: path.clone(), source })?;
        Ok(OutDir { path, written: Vec::new() })
    }

    fn put(&mut self, name: &str, text: &str) -> Result<()> {
        write(&self.path.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.put(name, &to_json(value))
    }

    pub fn matrix(&mut self, name: &str, m: &Array2<f64>) -> Result<()> {
        let mut out = String::new();
        for row in m.rows() {
            out += &row.iter().map(|&v| fmt_g9(v)).collect::<Vec<_>>().join(",");
            out.push('\n');
        }
        self.put(name, &out)
    }

    pub fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut out = format!("{header}\n");
        for r in rows {
            out += &r.join(",");
            out.push('\n');
        }
        self.put(name, &out)
    }
}
