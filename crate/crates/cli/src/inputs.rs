//! Input files: `.json` holds a tagged multimodal input, anything else is a
//! text request.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use scenforge::MultimodalInput;

#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub name: String,
    pub input: MultimodalInput,
}

impl InputSpec {
    pub fn text(name: &str, text: &str) -> Self {
        InputSpec { name: name.into(), input: MultimodalInput::TextRequest(text.trim().to_string()) }
    }
}

fn invalid(path: &Path, e: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))
}

pub fn load_input(path: &Path) -> io::Result<InputSpec> {
    let raw = fs::read_to_string(path).map_err(|e| invalid(path, e))?;
    let name = path.file_stem().map_or_else(|| "input".into(), |s| s.to_string_lossy().into_owned());
    if path.extension().is_some_and(|e| e == "json") {
        let input: MultimodalInput = serde_json::from_str(&raw).map_err(|e| invalid(path, e))?;
        input.validate().map_err(|e| invalid(path, e))?;
        Ok(InputSpec { name, input })
    } else {
        Ok(InputSpec::text(&name, &raw))
    }
}

/// Files are taken as given; directories contribute their `.txt` and `.json`
/// files in name order.
pub fn load_inputs(paths: &[PathBuf]) -> io::Result<Vec<InputSpec>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|e| e == "txt" || e == "json"))
                .collect();
            entries.sort();
            for f in entries {
                out.push(load_input(&f)?);
            }
        } else {
            out.push(load_input(p)?);
        }
    }
    if out.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no inputs"));
    }
    Ok(out)
}
