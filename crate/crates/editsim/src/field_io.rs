//! JSON files for material fields and other serde types, plus hashing.

use std::fs;
use std::path::Path;

use editsim_core::material::{validate_field, MaterialField};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{AppError, AppResult};

pub fn read_bytes(path: &Path) -> AppResult<Vec<u8>> {
    fs::read(path).map_err(|e| AppError::io(path, e))
}

pub fn read_text(path: &Path) -> AppResult<String> {
    fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

/// Writes `bytes`, creating parent directories as needed.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> AppResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| AppError::format(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializing plain data cannot fail");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    write_bytes(path, &to_json(value))
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a material field and rejects it if any invariant is broken.
pub fn read_field(path: &Path) -> AppResult<MaterialField> {
    let field: MaterialField = read_json(path)?;
    let report = validate_field(&field);
    if !report.is_valid() {
        return Err(AppError::format(path, format!("invalid material field: {:?}", report.violations)));
    }
    Ok(field)
}

pub fn write_field(path: &Path, field: &MaterialField) -> AppResult<()> {
    field.ensure_valid()?;
    write_json(path, field)
}
