use std::fs;
use std::path::{Path, PathBuf};

use jesp_core::{parse_dpomdp, DecPomdp};

use crate::Failure;

pub fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

/// Parses a Dec-POMDP file, applying a discount override if given.
pub fn load_problem(path: &Path, gamma: Option<f64>) -> Result<DecPomdp, Failure> {
    let (mut d, diag) = parse_dpomdp(&read(path)?).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if !diag.is_clean() {
        log::warn!("{}: {diag:?}", path.display());
    }
    if let Some(g) = gamma {
        if !(g > 0.0 && g < 1.0) {
            return Err(Failure::Config(format!("discount {g} is not in (0, 1)")));
        }
        d.discount = g;
    }
    Ok(d)
}

/// Writes `contents` to a sibling temporary file and renames it over `path`,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    let fail = |e: std::io::Error| Failure::Other(format!("{}: {e}", path.display()));
    fs::write(&tmp, contents).map_err(fail)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        fail(e)
    })
}

/// `dir/stem.suffix` for an output path `dir/stem.ext`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}
